#pragma once

#include "merit/heads.hpp"
#include "merit/spectral.hpp"

#include <array>
#include <span>
#include <vector>

namespace merit {

struct SsnrConfig {
    std::size_t frame = 64;
    std::size_t hop = 32;
    double floor_db = -10.0;
    double ceil_db = 35.0;
};

/// Mean over frames of clamp(10 log10(sum c^2 / sum (c - e)^2), floor, ceil).
/// A frame with zero error scores ceil; zero clean energy with nonzero error
/// scores floor.
double ssnr(const Waveform& clean, const Waveform& estimate, const SsnrConfig& cfg = {});

struct F1Scores {
    double macro = 0.0;
    double micro = 0.0;
};

/// Per-class F1 = 2TP / (2TP + FP + FN); classes with no support and no
/// predictions contribute 0 to the macro mean.
F1Scores f1_scores(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                   std::size_t classes = kEmotionClasses);

struct MetricsReport {
    double f1_macro = 0.0;
    double f1_micro = 0.0;
    double ssnr_db = 0.0;
    double l1 = 0.0;
    std::array<std::size_t, kEmotionClasses> class_counts{};

    std::size_t total() const noexcept;
};

/// Scores of always predicting the most frequent label.
F1Scores majority_baseline(std::span<const std::size_t> labels);

}  // namespace merit
