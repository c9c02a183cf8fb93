#pragma once

// Experiment configuration. A config file is a JSON object layered over a
// named preset ("toy" by default); `--set a.b=value` overrides apply last.
// The fully resolved tree is what a run persists and what its digest covers.

#include "merit/data.hpp"
#include "merit/metrics.hpp"
#include "merit/model.hpp"
#include "merit/optimizer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace merit {

struct HeadPhaseConfig {
    std::size_t epochs = 0;
    std::size_t batch = 16;
    double lr = 1e-3;
};

struct TrainingConfig {
    HeadPhaseConfig phase1_se;
    HeadPhaseConfig phase1_ser;
    std::size_t phase2_epochs = 0;
    std::size_t phase2_batch = 16;
    double lr_model = 1e-3;
    double lr_backbone = 5e-4;
    AdamWConfig adamw;
    bool ser_loss = true;
    bool se_loss = true;
    bool balancing = false;
    double balancing_alpha = 0.01;
    bool early_stopping = true;
};

struct EvalConfig {
    std::vector<NoiseFamily> families;
    std::vector<double> snr_db;
};

struct AblateConfig {
    std::vector<std::string> routing;  // sparse | dense
    std::vector<std::size_t> n_experts;
    std::vector<bool> balancing;
};

struct GradcheckConfig {
    std::size_t utterances = 2;
    std::size_t samples = 320;
    double step = 1e-5;
    double tolerance = 1e-4;
    bool backbone_trainable = true;
    bool balancing = true;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string output_dir;
    ModelConfig model;
    TrainingConfig training;
    DataConfig data;
    NoiseFamily train_family = NoiseFamily::Babble;
    double train_snr_db = 5.0;
    EvalConfig eval;
    SsnrConfig ssnr;
    AblateConfig ablate;
    GradcheckConfig gradcheck;
};

/// Full default tree for a named preset: "toy" or "full".
nlohmann::json preset_config(const std::string& name);

/// Layers `file` (may be null) over its preset and applies overrides of the
/// form "dot.path=value". Unknown keys and type mismatches throw ConfigError.
nlohmann::json resolve_config(const nlohmann::json& file, std::span<const std::string> overrides);

/// Validates a resolved tree and converts it.
ExperimentConfig parse_config(const nlohmann::json& resolved);

nlohmann::json load_config_file(const std::filesystem::path& path);

/// FNV-1a of the canonical dump, as 16 hex digits.
std::string config_digest(const nlohmann::json& resolved);

}  // namespace merit
