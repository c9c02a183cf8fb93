#include "merit/error.hpp"
#include "merit/fft.hpp"
#include "merit/heads.hpp"
#include "merit/losses.hpp"
#include "merit/optimizer.hpp"
#include "merit/spectral.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace merit;

namespace {

TaskSequence sequence(Tensor z) { return {Task::Ser, std::move(z)}; }

Waveform sine(std::size_t n, double cycles_per_sample, double amp = 1.0)
{
    Waveform w;
    for (std::size_t i = 0; i < n; ++i)
        w.samples.push_back(amp * std::sin(2.0 * std::numbers::pi * cycles_per_sample * double(i)));
    return w;
}

}  // namespace

TEST(Pooling, ConstantSequence)
{
    Rng rng(1);
    SerHead head(3, 8, rng);
    Tensor z = Tensor::matrix(5, 3);
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t d = 0; d < 3; ++d)
            z.at(t, d) = double(d) - 0.5;
    const auto pooled = attentive_stats_pool(head, sequence(z));
    ASSERT_EQ(pooled.size(), 6u);
    for (std::size_t d = 0; d < 3; ++d) {
        EXPECT_NEAR(pooled[d], double(d) - 0.5, 1e-12);
        EXPECT_NEAR(pooled[3 + d], std::sqrt(kPoolingVarianceFloor), 1e-12);
    }
}

TEST(Pooling, UniformAttentionGivesMeanAndStd)
{
    Rng rng(2);
    SerHead head(2, 8, rng);
    head.score_w.value.fill(0.0);
    const Tensor z = Tensor::from_rows({{1, 0}, {3, 2}, {5, 2}, {7, 4}});
    const auto pooled = attentive_stats_pool(head, sequence(z));
    EXPECT_NEAR(pooled[0], 4.0, 1e-12);
    EXPECT_NEAR(pooled[1], 2.0, 1e-12);
    EXPECT_NEAR(pooled[2], std::sqrt(5.0), 1e-12);
    EXPECT_NEAR(pooled[3], std::sqrt(2.0), 1e-12);
}

TEST(Pooling, MatchesDirectOracle)
{
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        SerHead head(2, 4, rng);
        const Tensor z = uniform_tensor(rng, {4, 2}, 2.0);
        const auto m = oracle::to_matrix(z);
        std::vector<double> scores;
        for (const auto& row : m)
            scores.push_back(row[0] * head.score_w.value[0] + row[1] * head.score_w.value[1] + head.score_b.value[0]);
        const auto a = oracle::softmax(scores);
        const auto pooled = attentive_stats_pool(head, sequence(z));
        for (std::size_t d = 0; d < 2; ++d) {
            double mu = 0.0, sq = 0.0;
            for (std::size_t t = 0; t < 4; ++t) {
                mu += a[t] * m[t][d];
                sq += a[t] * m[t][d] * m[t][d];
            }
            EXPECT_NEAR(pooled[d], mu, 1e-12);
            EXPECT_NEAR(pooled[2 + d], std::sqrt(std::max(sq - mu * mu, kPoolingVarianceFloor)), 1e-10);
        }
    }
}

TEST(Pooling, FrameOrderInvariantAndSigmaNonNegative)
{
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
        const std::size_t t = 1 + rng.index(10), d = 1 + rng.index(5);
        SerHead head(d, 4, rng);
        const Tensor z = uniform_tensor(rng, {t, d}, 3.0);
        Tensor shuffled = z;
        std::vector<std::size_t> perm(t);
        for (std::size_t k = 0; k < t; ++k)
            perm[k] = k;
        for (std::size_t k = t; k > 1; --k)
            std::swap(perm[k - 1], perm[rng.index(k)]);
        for (std::size_t r = 0; r < t; ++r)
            for (std::size_t c = 0; c < d; ++c)
                shuffled.at(r, c) = z.at(perm[r], c);
        const auto a = attentive_stats_pool(head, sequence(z));
        const auto b = attentive_stats_pool(head, sequence(shuffled));
        for (std::size_t k = 0; k < a.size(); ++k)
            EXPECT_NEAR(a[k], b[k], 1e-9);
        for (std::size_t k = d; k < 2 * d; ++k)
            EXPECT_GE(a[k], 0.0);
    }
}

TEST(SerHead, ZeroClassifierPredictsFirstClass)
{
    Rng rng(5);
    SerHead head(3, 8, rng);
    for (Parameter* p : {&head.fc1_w, &head.fc1_b, &head.fc2_w, &head.fc2_b})
        p->value.fill(0.0);
    const auto logits = ser_classify(head, sequence(uniform_tensor(rng, {6, 3}, 1.0)));
    ASSERT_EQ(logits.size(), kEmotionClasses);
    for (double v : logits)
        EXPECT_EQ(v, 0.0);
    EXPECT_EQ(predict_class(logits), 0u);
}

TEST(SerHead, PredictClassTies)
{
    EXPECT_EQ(predict_class(std::vector<double>{0.1, 0.7, 0.7, 0.2}), 1u);
    EXPECT_EQ(predict_class(std::vector<double>{-1, -2, -3, 0}), 3u);
    EXPECT_THROW(make_label(4), Error);
    EXPECT_EQ(make_label(3).index, 3u);
}

TEST(SerHead, LearnsSeparableSequences)
{
    // Each class shifts the sequence mean along its own axis.
    Rng rng(6);
    std::vector<Tensor> seqs;
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < 40; ++i) {
        const std::size_t y = i % kEmotionClasses;
        Tensor z = uniform_tensor(rng, {6, 4}, 0.5);
        for (std::size_t t = 0; t < 6; ++t)
            z.at(t, y) += 1.5;
        seqs.push_back(z);
        labels.push_back(y);
    }
    SerHead head(4, 16, rng);
    AdamW opt(head.parameters(), 1e-2, 1e-2);
    const ClassWeights w;
    for (int epoch = 0; epoch < 150; ++epoch) {
        opt.zero_grad();
        Tape tape;
        std::vector<Var> logits;
        for (const Tensor& z : seqs)
            logits.push_back(head.classify(tape, tape.constant(z)));
        tape.backward(weighted_cross_entropy(ad::concat_rows(logits), labels, w));
        opt.step();
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < seqs.size(); ++i)
        correct += predict_class(ser_classify(head, sequence(seqs[i]))) == labels[i];
    EXPECT_EQ(correct, seqs.size());
}

TEST(SerHead, TapeAndValueFormsAgree)
{
    Rng rng(7);
    SerHead head(3, 8, rng);
    const Tensor z = uniform_tensor(rng, {5, 3}, 1.0);
    Tape tape;
    const Tensor logits = head.classify(tape, tape.constant(z)).value();
    const auto direct = ser_classify(head, sequence(z));
    for (std::size_t c = 0; c < kEmotionClasses; ++c)
        EXPECT_EQ(logits[c], direct[c]);
}

TEST(Spectral, FrameCount)
{
    EXPECT_EQ(frame_count(1024, 64, 32), 31u);
    EXPECT_EQ(frame_count(64, 64, 32), 1u);
    EXPECT_EQ(frame_count(95, 64, 32), 1u);
    EXPECT_EQ(frame_count(96, 64, 32), 2u);
    EXPECT_THROW(frame_count(63, 64, 32), Error);
}

TEST(Spectral, HannWindow)
{
    const auto w = hann_window(8);
    EXPECT_DOUBLE_EQ(w[0], 0.0);
    EXPECT_NEAR(w[4], 1.0, 1e-15);
    EXPECT_NEAR(w[2], 0.5, 1e-15);
    EXPECT_NEAR(w[2], w[6], 1e-15);
}

TEST(Spectral, ValidatesWaveform)
{
    EXPECT_THROW(validate_waveform(Waveform{}), Error);
    EXPECT_THROW(validate_waveform(Waveform{{0.0, std::nan("")}, 8000.0}), Error);
    EXPECT_NO_THROW(validate_waveform(Waveform{{0.0, 1.0}, 8000.0}));
}

TEST(Spectral, FftMatchesDirectDft)
{
    Rng rng(8);
    for (std::size_t n : {8u, 64u, 400u, 512u}) {
        RealFft fft(n);
        std::vector<double> x(n - n / 4);
        for (double& v : x)
            v = rng.normal();
        const auto spec = fft.forward(x);
        const auto ref = oracle::dft_magnitude(x, n);
        for (std::size_t k = 0; k < ref.size(); ++k)
            EXPECT_NEAR(std::abs(spec[k]), ref[k], 1e-9 * n);
        std::vector<double> padded = x;
        padded.resize(n, 0.0);
        const auto back = fft.inverse(spec);
        for (std::size_t i = 0; i < n; ++i)
            EXPECT_NEAR(back[i], padded[i], 1e-12);
    }
}

TEST(Spectral, StftMatchesWindowedDft)
{
    Rng rng(9);
    Waveform w;
    for (int i = 0; i < 256; ++i)
        w.samples.push_back(rng.normal());
    const StftConfig cfg{64, 32, 64};
    const SpectralFeature f = log1p_spectrum(w, cfg);
    ASSERT_EQ(f.frames(), 7u);
    ASSERT_EQ(f.bins(), 33u);
    const auto win = hann_window(64);
    for (std::size_t t = 0; t < f.frames(); ++t) {
        std::vector<double> frame(64);
        for (std::size_t i = 0; i < 64; ++i)
            frame[i] = w.samples[t * 32 + i] * win[i];
        const auto ref = oracle::dft_magnitude(frame, 64);
        for (std::size_t k = 0; k < 33; ++k)
            EXPECT_NEAR(f.magnitude.at(t, k), std::log1p(ref[k]), 1e-10);
    }
}

TEST(Spectral, BinCenteredSinusoidPeaksAtItsBin)
{
    for (std::size_t k : {3u, 8u, 20u}) {
        const SpectralFeature f = log1p_spectrum(sine(512, double(k) / 64.0), StftConfig{64, 32, 64});
        for (std::size_t t = 0; t < f.frames(); ++t) {
            std::size_t best = 0;
            for (std::size_t b = 1; b < f.bins(); ++b)
                if (f.magnitude.at(t, b) > f.magnitude.at(t, best))
                    best = b;
            EXPECT_EQ(best, k);
            // Hann main lobe: amplitude n/4 at the centre bin.
            EXPECT_NEAR(f.magnitude.at(t, k), std::log1p(16.0), 1e-9);
        }
    }
}

TEST(Spectral, MagnitudeMonotoneInGain)
{
    Rng rng(10);
    Waveform w;
    for (int i = 0; i < 256; ++i)
        w.samples.push_back(rng.normal());
    const StftConfig cfg{64, 32, 64};
    const SpectralFeature base = log1p_spectrum(w, cfg);
    Waveform louder = w;
    for (double& v : louder.samples)
        v *= 2.0;
    const SpectralFeature up = log1p_spectrum(louder, cfg);
    for (std::size_t i = 0; i < base.magnitude.size(); ++i) {
        EXPECT_GE(base.magnitude[i], 0.0);
        EXPECT_GE(up.magnitude[i], base.magnitude[i]);
    }
}

TEST(Spectral, ResynthesisRoundTrip)
{
    Rng rng(11);
    Waveform w;
    for (int i = 0; i < 1024; ++i)
        w.samples.push_back(rng.normal());
    const StftConfig cfg{64, 32, 64};
    const ComplexSpectrogram spec = stft(w, cfg);
    const Waveform back = resynthesize(log1p_spectrum(spec).magnitude, spec, w);
    ASSERT_EQ(back.size(), w.size());
    for (std::size_t i = 0; i < w.size(); ++i)
        EXPECT_NEAR(back.samples[i], w.samples[i], 1e-9);
}

TEST(SeHead, IdentityInitPassesSpectrumThrough)
{
    Rng rng(12);
    SeHead head(4, 33, 48, SeInit::Identity, rng);
    for (int i = 0; i < 20; ++i) {
        SpectralFeature noisy;
        noisy.magnitude = uniform_tensor(rng, {7, 33}, 2.0);
        for (double& v : noisy.magnitude.data())
            v = std::fabs(v);
        const SpectralFeature out = se_decode(head, {Task::Se, uniform_tensor(rng, {7, 4}, 5.0)}, noisy);
        EXPECT_EQ(out.magnitude, noisy.magnitude);
    }
    EXPECT_THROW(SeHead(4, 33, 32, SeInit::Identity, rng), Error);
}

TEST(SeHead, ZeroDecoderOutputsZero)
{
    Rng rng(13);
    SeHead head(4, 9, 16, SeInit::Random, rng);
    head.fc2_w.value.fill(0.0);
    head.fc2_b.value.fill(0.0);
    SpectralFeature noisy;
    noisy.magnitude = uniform_tensor(rng, {5, 9}, 1.0);
    const SpectralFeature out = se_decode(head, {Task::Se, uniform_tensor(rng, {5, 4}, 1.0)}, noisy);
    for (double v : out.magnitude.data())
        EXPECT_EQ(v, 0.0);
}

TEST(SeHead, ShapeMismatch)
{
    Rng rng(14);
    SeHead head(4, 9, 16, SeInit::Random, rng);
    SpectralFeature noisy;
    noisy.magnitude = Tensor::matrix(5, 9);
    EXPECT_THROW(se_decode(head, {Task::Se, Tensor::matrix(4, 4)}, noisy), ShapeError);
    EXPECT_THROW(se_decode(head, {Task::Se, Tensor::matrix(5, 3)}, noisy), ShapeError);
}

TEST(SeHead, TrainingBeatsIdentity)
{
    // Noise adds a constant floor in the upper bins; the sequence carries
    // nothing, so the decoder must learn the subtraction from the spectrum.
    Rng rng(15);
    const std::size_t bins = 9, frames = 32;
    Tensor clean = uniform_tensor(rng, {frames, bins}, 1.0);
    for (double& v : clean.data())
        v = std::fabs(v);
    Tensor noisy = clean;
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t b = 5; b < bins; ++b)
            noisy.at(t, b) += 0.8;
    const Tensor z = Tensor::matrix(frames, 2);
    SeHead head(2, bins, 24, SeInit::Identity, rng);
    const double before = l1_loss(noisy, clean);
    AdamW opt(head.parameters(), 1e-2, 1e-2);
    for (int step = 0; step < 300; ++step) {
        opt.zero_grad();
        Tape tape;
        tape.backward(l1_loss(head.decode(tape, tape.constant(z), tape.constant(noisy)), tape.constant(clean)));
        opt.step();
    }
    SpectralFeature nf;
    nf.magnitude = noisy;
    const double after = l1_loss(se_decode(head, {Task::Se, z}, nf).magnitude, clean);
    EXPECT_LT(after, 0.5 * before);
}
