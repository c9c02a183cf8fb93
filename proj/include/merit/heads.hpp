#pragma once

#include "merit/autodiff.hpp"
#include "merit/moe.hpp"
#include "merit/rng.hpp"
#include "merit/spectral.hpp"

#include <array>
#include <string_view>
#include <vector>

namespace merit {

inline constexpr std::size_t kEmotionClasses = 4;
inline constexpr std::array<std::string_view, kEmotionClasses> kEmotionNames{"anger", "sadness", "happiness",
                                                                             "neutral"};
/// Variance floor inside attentive statistics pooling.
inline constexpr double kPoolingVarianceFloor = 1e-8;

struct EmotionLabel {
    std::size_t index = 0;
};

/// Throws unless index < kEmotionClasses.
EmotionLabel make_label(std::size_t index);

/// Attentive statistics pooling followed by a two-layer classifier:
///   a = softmax_t(z_t w + c),  mu = sum a_t z_t,
///   sigma = sqrt(max(sum a_t z_t^2 - mu^2, eps)),  logits = MLP([mu | sigma]).
class SerHead {
public:
    SerHead() = default;
    SerHead(std::size_t dim, std::size_t hidden, Rng& rng);

    std::size_t dim() const noexcept { return score_w.value.rows(); }

    /// 1 x 2D pooled vector.
    Var pool(Tape& tape, Var z);
    /// 1 x 4 logits for one utterance.
    Var classify(Tape& tape, Var z);

    std::vector<Parameter*> parameters() { return {&score_w, &score_b, &fc1_w, &fc1_b, &fc2_w, &fc2_b}; }

    Parameter score_w, score_b;
    Parameter fc1_w, fc1_b;
    Parameter fc2_w, fc2_b;
};

enum class SeInit { Identity, Random };

/// Per-frame decoder over [z_t | x_t] with relu hidden and relu output.
class SeHead {
public:
    SeHead() = default;
    /// Identity init routes the spectral half straight through (requires
    /// hidden >= bins); remaining hidden units start random with zero output.
    SeHead(std::size_t dim, std::size_t bins, std::size_t hidden, SeInit init, Rng& rng);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t bins() const noexcept { return fc2_w.value.cols(); }

    Var decode(Tape& tape, Var z, Var noisy);

    std::vector<Parameter*> parameters() { return {&fc1_w, &fc1_b, &fc2_w, &fc2_b}; }

    Parameter fc1_w, fc1_b;
    Parameter fc2_w, fc2_b;

private:
    std::size_t dim_ = 0;
};

std::vector<double> attentive_stats_pool(const SerHead& head, const TaskSequence& z);
std::vector<double> ser_classify(const SerHead& head, const TaskSequence& z);
/// Argmax with ties going to the lowest class index.
std::size_t predict_class(std::span<const double> logits);
SpectralFeature se_decode(const SeHead& head, const TaskSequence& z, const SpectralFeature& noisy);

}  // namespace merit
