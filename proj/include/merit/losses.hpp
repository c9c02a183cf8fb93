#pragma once

#include "merit/autodiff.hpp"
#include "merit/heads.hpp"
#include "merit/spectral.hpp"

#include <array>
#include <span>
#include <vector>

namespace merit {

struct ClassWeights {
    std::array<double, kEmotionClasses> values{1.0, 1.0, 1.0, 1.0};
};

/// Inverse-frequency weights normalized to mean 1. Every class must occur.
ClassWeights inverse_frequency_weights(std::span<const std::size_t> counts);

/// sum_b w_{y_b} * (-log softmax(logits_b)_{y_b}) / sum_b w_{y_b}.
double weighted_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels, const ClassWeights& w);
Var weighted_cross_entropy(Var logits, std::span<const std::size_t> labels, const ClassWeights& w);

/// Mean absolute difference over all frame/bin entries.
double l1_loss(const SpectralFeature& pred, const SpectralFeature& target);
double l1_loss(const Tensor& pred, const Tensor& target);
Var l1_loss(Var pred, Var target);

/// Unweighted sum of the task losses plus the optional balancing term.
double joint_loss(double wce, double l1, double balance = 0.0);

struct NormStats {
    double mean = 0.0;
    double std = 1.0;
};

/// Pooled mean and (population) standard deviation over all samples.
NormStats estimate_norm_stats(std::span<const Waveform> waveforms);
Waveform z_normalize(const Waveform& w, const NormStats& stats);
Waveform z_denormalize(const Waveform& w, const NormStats& stats);

}  // namespace merit
