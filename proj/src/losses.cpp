#include "merit/losses.hpp"

#include "merit/error.hpp"

#include <cmath>

namespace merit {

ClassWeights inverse_frequency_weights(std::span<const std::size_t> counts)
{
    if (counts.size() != kEmotionClasses)
        throw Error("class weights need exactly " + std::to_string(kEmotionClasses) + " counts");
    ClassWeights w;
    double total = 0.0;
    for (std::size_t c = 0; c < kEmotionClasses; ++c) {
        if (counts[c] == 0)
            throw Error("class '" + std::string(kEmotionNames[c]) + "' has no samples; cannot weight it");
        w.values[c] = 1.0 / static_cast<double>(counts[c]);
        total += w.values[c];
    }
    const double mean = total / kEmotionClasses;
    for (double& v : w.values)
        v /= mean;
    return w;
}

double weighted_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels, const ClassWeights& w)
{
    Tape tape;
    return weighted_cross_entropy(tape.constant(logits), labels, w).value()[0];
}

Var weighted_cross_entropy(Var logits, std::span<const std::size_t> labels, const ClassWeights& w)
{
    if (logits.cols() != kEmotionClasses || logits.rows() != labels.size())
        logits.tape()->shape_error("weighted_cross_entropy", shape_string(logits.shape()) + " logits for " +
                                                                 std::to_string(labels.size()) + " labels");
    Tensor coeff = Tensor::matrix(labels.size(), 1);
    double total = 0.0;
    for (std::size_t b = 0; b < labels.size(); ++b) {
        make_label(labels[b]);
        total += w.values[labels[b]];
    }
    for (std::size_t b = 0; b < labels.size(); ++b)
        coeff[b] = -w.values[labels[b]] / total;
    Var picked = ad::pick_cols(ad::log_softmax_rows(logits), labels);
    return ad::sum(ad::mul_const(picked, coeff));
}

double l1_loss(const Tensor& pred, const Tensor& target)
{
    if (pred.shape() != target.shape())
        throw ShapeError("l1_loss: " + shape_string(pred.shape()) + " vs " + shape_string(target.shape()));
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        s += std::fabs(pred[i] - target[i]);
    return s / static_cast<double>(pred.size());
}

double l1_loss(const SpectralFeature& pred, const SpectralFeature& target)
{
    return l1_loss(pred.magnitude, target.magnitude);
}

Var l1_loss(Var pred, Var target)
{
    return ad::mean(ad::abs(ad::sub(pred, target)));
}

double joint_loss(double wce, double l1, double balance)
{
    return wce + l1 + balance;
}

NormStats estimate_norm_stats(std::span<const Waveform> waveforms)
{
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& w : waveforms) {
        for (double s : w.samples)
            sum += s;
        n += w.size();
    }
    if (n == 0)
        throw Error("cannot estimate normalization statistics from an empty set");
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (const auto& w : waveforms)
        for (double s : w.samples)
            sq += (s - mean) * (s - mean);
    const double std = std::sqrt(sq / static_cast<double>(n));
    if (!(std > 0.0))
        throw NumericalError("training waveforms have zero variance");
    return {mean, std};
}

Waveform z_normalize(const Waveform& w, const NormStats& stats)
{
    if (!(stats.std > 0.0))
        throw Error("z-normalization requires a positive standard deviation");
    Waveform out = w;
    for (double& s : out.samples)
        s = (s - stats.mean) / stats.std;
    return out;
}

Waveform z_denormalize(const Waveform& w, const NormStats& stats)
{
    Waveform out = w;
    for (double& s : out.samples)
        s = s * stats.std + stats.mean;
    return out;
}

}  // namespace merit
