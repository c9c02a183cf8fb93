#include "merit/heads.hpp"

#include "merit/error.hpp"

#include <cmath>

namespace merit {

EmotionLabel make_label(std::size_t index)
{
    if (index >= kEmotionClasses)
        throw Error("emotion label " + std::to_string(index) + " out of range");
    return {index};
}

SerHead::SerHead(std::size_t dim, std::size_t hidden, Rng& rng)
{
    const double bs = 1.0 / std::sqrt(double(dim));
    const double b1 = 1.0 / std::sqrt(double(2 * dim));
    const double b2 = 1.0 / std::sqrt(double(hidden));
    score_w = Parameter("ser.score.W", uniform_tensor(rng, {dim, 1}, bs));
    score_b = Parameter("ser.score.b", Tensor({1, 1}, 0.0));
    fc1_w = Parameter("ser.fc1.W", uniform_tensor(rng, {2 * dim, hidden}, b1));
    fc1_b = Parameter("ser.fc1.b", uniform_tensor(rng, {1, hidden}, b1));
    fc2_w = Parameter("ser.fc2.W", uniform_tensor(rng, {hidden, kEmotionClasses}, b2));
    fc2_b = Parameter("ser.fc2.b", uniform_tensor(rng, {1, kEmotionClasses}, b2));
}

Var SerHead::pool(Tape& tape, Var z)
{
    if (z.cols() != dim())
        tape.shape_error("ser_pool", "sequence width " + std::to_string(z.cols()) + " vs head width " +
                                         std::to_string(dim()));
    Var scores = ad::affine(z, tape.param(score_w), tape.param(score_b));  // T x 1
    Var attn = ad::transpose(ad::softmax_rows(ad::transpose(scores)));      // T x 1
    Var attn_row = ad::transpose(attn);                                     // 1 x T
    Var mu = ad::matmul(attn_row, z);
    Var second = ad::matmul(attn_row, ad::mul(z, z));
    Var var = ad::floor_max(ad::sub(second, ad::mul(mu, mu)), kPoolingVarianceFloor);
    const Var parts[] = {mu, ad::sqrt(var)};
    return ad::concat_cols(parts);
}

Var SerHead::classify(Tape& tape, Var z)
{
    Var pooled = pool(tape, z);
    Var h = ad::relu(ad::affine(pooled, tape.param(fc1_w), tape.param(fc1_b)));
    return ad::affine(h, tape.param(fc2_w), tape.param(fc2_b));
}

SeHead::SeHead(std::size_t dim, std::size_t bins, std::size_t hidden, SeInit init, Rng& rng) : dim_(dim)
{
    const std::size_t in = dim + bins;
    const double b1 = 1.0 / std::sqrt(double(in));
    const double b2 = 1.0 / std::sqrt(double(hidden));
    if (init == SeInit::Random) {
        fc1_w = Parameter("se.fc1.W", uniform_tensor(rng, {in, hidden}, b1));
        fc1_b = Parameter("se.fc1.b", uniform_tensor(rng, {1, hidden}, b1));
        fc2_w = Parameter("se.fc2.W", uniform_tensor(rng, {hidden, bins}, b2));
        fc2_b = Parameter("se.fc2.b", uniform_tensor(rng, {1, bins}, b2));
        return;
    }
    if (hidden < bins)
        throw Error("identity SE init needs hidden >= bins (" + std::to_string(hidden) + " < " +
                    std::to_string(bins) + ")");
    Tensor w1 = uniform_tensor(rng, {in, hidden}, b1);
    for (std::size_t i = 0; i < in; ++i)
        for (std::size_t j = 0; j < bins; ++j)
            w1.at(i, j) = (i == dim + j) ? 1.0 : 0.0;
    Tensor w2 = Tensor::matrix(hidden, bins);
    for (std::size_t j = 0; j < bins; ++j)
        w2.at(j, j) = 1.0;
    fc1_w = Parameter("se.fc1.W", std::move(w1));
    fc1_b = Parameter("se.fc1.b", Tensor({1, hidden}, 0.0));
    fc2_w = Parameter("se.fc2.W", std::move(w2));
    fc2_b = Parameter("se.fc2.b", Tensor({1, bins}, 0.0));
}

Var SeHead::decode(Tape& tape, Var z, Var noisy)
{
    if (z.rows() != noisy.rows())
        tape.shape_error("se_decode", "sequence has " + std::to_string(z.rows()) + " frames, spectrum has " +
                                          std::to_string(noisy.rows()));
    if (z.cols() != dim_ || noisy.cols() != bins())
        tape.shape_error("se_decode", "inputs " + shape_string(z.shape()) + " and " + shape_string(noisy.shape()) +
                                          " do not match the decoder");
    const Var parts[] = {z, noisy};
    Var h = ad::relu(ad::affine(ad::concat_cols(parts), tape.param(fc1_w), tape.param(fc1_b)));
    return ad::relu(ad::affine(h, tape.param(fc2_w), tape.param(fc2_b)));
}

std::vector<double> attentive_stats_pool(const SerHead& head, const TaskSequence& z)
{
    if (z.z.empty())
        throw Error("attentive pooling over an empty sequence");
    SerHead local = head;
    Tape tape;
    const auto v = local.pool(tape, tape.constant(z.z)).value().data();
    return {v.begin(), v.end()};
}

std::vector<double> ser_classify(const SerHead& head, const TaskSequence& z)
{
    if (z.z.empty())
        throw Error("classification of an empty sequence");
    SerHead local = head;
    Tape tape;
    const auto v = local.classify(tape, tape.constant(z.z)).value().data();
    return {v.begin(), v.end()};
}

std::size_t predict_class(std::span<const double> logits)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best])
            best = i;
    return best;
}

SpectralFeature se_decode(const SeHead& head, const TaskSequence& z, const SpectralFeature& noisy)
{
    SeHead local = head;
    Tape tape;
    Tensor out = local.decode(tape, tape.constant(z.z), tape.constant(noisy.magnitude)).value();
    return {std::move(out), noisy.stft};
}

}  // namespace merit
