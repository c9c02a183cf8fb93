#pragma once

// The full joint model: frozen (or optionally trainable) backbone, shared
// expert pool, one gate per task, and the two task heads.

#include "merit/backbone.hpp"
#include "merit/data.hpp"
#include "merit/heads.hpp"
#include "merit/losses.hpp"
#include "merit/moe.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace merit {

struct ModelConfig {
    BackboneConfig backbone;
    std::size_t n_experts = 3;
    std::size_t top_k = 1;
    std::size_t expert_hidden = 64;
    /// Soft mixture over all experts (K = N).
    bool dense = false;
    std::size_t ser_hidden = 32;
    std::size_t se_hidden = 48;
    SeInit se_init = SeInit::Identity;

    std::size_t effective_k() const noexcept { return dense ? n_experts : top_k; }
};

/// One utterance ready for the model. Backbone features come from the
/// z-normalized noisy signal; the SE spectra are taken from the raw signals.
struct Example {
    std::string id;
    std::size_t label = 0;
    NoiseFamily family = NoiseFamily::Babble;
    double snr_db = 0.0;
    Waveform clean;
    Waveform noisy;
    Tensor features;    // T x F backbone input
    Tensor noisy_spec;  // T x F log1p |STFT(noisy)|
    Tensor clean_spec;  // T x F log1p |STFT(clean)|
    Tensor concat;      // cached T x (L+1)D when the backbone is frozen
};

Example make_example(const std::string& id, std::size_t label, const Waveform& clean, const NoisyUtterance& noisy,
                     const NormStats& stats, const BackboneConfig& backbone);

struct LossOptions {
    bool ser = true;
    bool se = true;
    bool balancing = false;
    double alpha = 0.01;
    ClassWeights weights;
};

struct BatchOutput {
    Var total;
    Var wce, l1, balance;  // invalid when the term is disabled
    std::optional<MoeOutput> ser_moe, se_moe;
    Var ser_logits;  // B x 4
    Var se_spec;     // (B*T) x F
    std::size_t frames_per_example = 0;

    double wce_value() const { return wce.valid() ? wce.value()[0] : 0.0; }
    double l1_value() const { return l1.valid() ? l1.value()[0] : 0.0; }
    double balance_value() const { return balance.valid() ? balance.value()[0] : 0.0; }
};

class MeritModel {
public:
    MeritModel() = default;
    MeritModel(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return cfg_; }

    /// Fills Example::concat from the current backbone (frozen backbone only).
    void cache_features(std::span<Example> examples) const;

    /// Records the batch objective on the tape. All examples must share a
    /// frame count.
    BatchOutput forward(Tape& tape, std::span<const Example* const> batch, const LossOptions& opts);

    std::vector<Parameter*> parameters();
    std::vector<Parameter*> head_parameters();
    std::vector<Parameter*> ser_head_parameters() { return ser_head.parameters(); }
    std::vector<Parameter*> se_head_parameters() { return se_head.parameters(); }
    /// Expert and gate parameters.
    std::vector<Parameter*> routing_parameters();

    Backbone backbone;
    ExpertPool pool;
    GatingNetwork ser_gate, se_gate;
    SerHead ser_head;
    SeHead se_head;

private:
    ModelConfig cfg_;
};

/// Parameter values in declaration order.
std::vector<Tensor> snapshot(std::span<Parameter* const> params);
void restore(std::span<Parameter* const> params, std::span<const Tensor> values);

void save_checkpoint(const std::filesystem::path& path, std::span<Parameter* const> params);
/// Loads values by name; every parameter must be present with a matching shape.
void load_checkpoint(const std::filesystem::path& path, std::span<Parameter* const> params);

}  // namespace merit
