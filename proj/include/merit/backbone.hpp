#pragma once

// Frozen synthetic stand-in for a self-supervised speech model. Produces a
// stack of L+1 frame-level representations H_0..H_L, each T x D:
//   H_0 = log1p|STFT(x)| * P          (P fixed, F x D)
//   H_l = relu(H_{l-1} W_l + b_l)     (l = 1..L)
// and concatenates them along the feature axis for routing.

#include "merit/autodiff.hpp"
#include "merit/spectral.hpp"

#include <cstdint>
#include <vector>

namespace merit {

struct BackboneConfig {
    std::uint64_t seed = 0;
    std::size_t layers = 4;  // L
    std::size_t dim = 16;    // D
    std::size_t frame = 64;
    std::size_t hop = 32;
    std::size_t fft_size = 64;
    /// Unfreezes the per-layer affine maps (the input projection stays fixed).
    bool trainable = false;

    std::size_t concat_width() const noexcept { return (layers + 1) * dim; }
    StftConfig stft() const noexcept { return {frame, hop, fft_size}; }
};

struct LayerStack {
    std::vector<Tensor> layers;  // H_0..H_L

    std::size_t depth() const noexcept { return layers.empty() ? 0 : layers.size() - 1; }
    std::size_t frames() const noexcept { return layers.empty() ? 0 : layers.front().rows(); }
    std::size_t dim() const noexcept { return layers.empty() ? 0 : layers.front().cols(); }
};

struct ConcatRepresentation {
    Tensor frames;  // T x (L+1)D
};

class Backbone {
public:
    Backbone() = default;
    explicit Backbone(const BackboneConfig& cfg);

    const BackboneConfig& config() const noexcept { return cfg_; }

    /// Frame-level input features log1p|STFT| (T x F) for the backbone.
    Tensor input_features(const Waveform& w) const;

    LayerStack synth_layer_stack(const Waveform& w) const;

    /// Records H_0..H_L on the tape from precomputed input features.
    std::vector<Var> forward(Tape& tape, Var features);
    /// Records concat(H_0..H_L) on the tape.
    Var forward_concat(Tape& tape, Var features);

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;

private:
    BackboneConfig cfg_;
    Parameter projection_;
    std::vector<Parameter> weights_;
    std::vector<Parameter> biases_;
};

/// Row t of the result is [H_0[t] | H_1[t] | ... | H_L[t]].
ConcatRepresentation concat_layers(const LayerStack& stack);

}  // namespace merit
