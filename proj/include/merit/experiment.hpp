#pragma once

// End-to-end runs: corpus preparation, two-phase training, evaluation sweeps
// over noise family and SNR, gating analytics, ablations and the gradient
// audit. Everything derives from one root seed.

#include "merit/analytics.hpp"
#include "merit/config.hpp"
#include "merit/gradcheck.hpp"
#include "merit/metrics.hpp"
#include "merit/model.hpp"
#include "merit/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <vector>

namespace merit {

Corpus make_corpus(const ExperimentConfig& cfg);

/// Clean signals plus every contaminated version used by a run (train and
/// dev at the training condition, test at each evaluation condition).
CorpusFiles corpus_files(const ExperimentConfig& cfg, const Corpus& corpus);

struct Dataset {
    NormStats stats;
    ClassWeights weights;
    std::vector<Example> train;
    std::vector<Example> dev;
    std::vector<Example> test;  // one copy per evaluation condition
};

Dataset build_dataset(const ExperimentConfig& cfg, const CorpusFiles& files);

struct ConditionMetrics {
    NoiseFamily family = NoiseFamily::Babble;
    double snr_db = 0.0;
    MetricsReport model;
    /// Unprocessed noisy input scored as if it were the enhanced output.
    double identity_l1 = 0.0;
    double identity_ssnr_db = 0.0;
    F1Scores majority;
};

struct Evaluation {
    std::vector<ConditionMetrics> conditions;
    std::vector<RoutingTrace> traces;
};

Evaluation evaluate(MeritModel& model, std::span<const Example> test, const ExperimentConfig& cfg);

const ConditionMetrics& find_condition(const Evaluation& eval, NoiseFamily family, double snr_db);

struct TrainingLog {
    Phase1Result phase1;
    Phase2Result phase2;
};

struct RunResult {
    TrainingLog log;
    Evaluation eval;
    AnalyticsReport analytics;
};

MeritModel make_model(const ExperimentConfig& cfg);

/// Phase 1 then phase 2 on the dataset.
TrainingLog train_model(MeritModel& model, Dataset& data, const ExperimentConfig& cfg);

/// Train, evaluate and analyze without touching the filesystem.
RunResult run_in_memory(const ExperimentConfig& cfg);

// Artifact writers.

void write_metrics_csv(const std::filesystem::path& path, const Evaluation& eval);
nlohmann::json training_json(const TrainingLog& log);
nlohmann::json report_json(const nlohmann::json& resolved, const std::optional<TrainingLog>& log,
                           const Evaluation& eval, const AnalyticsReport& analytics);

struct AblationRow {
    std::string routing;
    std::size_t n_experts = 0;
    bool balancing = false;
    double final_loss = 0.0;
    std::vector<ConditionMetrics> conditions;
};

std::vector<AblationRow> run_ablation(const nlohmann::json& resolved);
void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationRow> rows,
                        const ExperimentConfig& cfg);

/// Finite-difference audit of the whole pipeline on a few short utterances.
GradCheckReport run_gradcheck(const ExperimentConfig& cfg);
nlohmann::json gradcheck_json(const GradCheckReport& report);

}  // namespace merit
