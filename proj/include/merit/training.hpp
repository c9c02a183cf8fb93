#pragma once

#include "merit/config.hpp"
#include "merit/model.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace merit {

struct EpochLoss {
    std::size_t epoch = 0;
    double wce = 0.0;
    double l1 = 0.0;
    double balance = 0.0;
    double total = 0.0;
};

/// Mean objective terms over a whole set, evaluated without updates.
EpochLoss evaluate_loss(MeritModel& model, std::span<const Example> examples, const LossOptions& opts,
                        std::size_t batch);

struct Phase1Result {
    std::vector<EpochLoss> se;   // row 0 is before any update
    std::vector<EpochLoss> ser;
};

/// Trains the SE and SER heads separately on the output of the frozen
/// backbone and initial expert pool. Routing parameters are restored to
/// their previous frozen state afterwards.
Phase1Result train_phase1(MeritModel& model, std::span<const Example> train, const TrainingConfig& cfg,
                          const ClassWeights& weights, std::uint64_t seed);

struct Phase2Result {
    std::vector<EpochLoss> train;  // row 0 is before any update
    std::vector<EpochLoss> dev;
    std::size_t best_epoch = 0;
};

/// Joint training of experts, gates and heads (and the backbone when it is
/// trainable). With early stopping the parameters of the epoch with the
/// lowest dev objective are restored at the end.
Phase2Result train_phase2(MeritModel& model, std::span<const Example> train, std::span<const Example> dev,
                          const TrainingConfig& cfg, const ClassWeights& weights, std::uint64_t seed);

LossOptions phase2_loss_options(const TrainingConfig& cfg, const ClassWeights& weights);

/// Label counts over a set; every class must occur for WCE weighting.
ClassWeights class_weights_for(std::span<const Example> examples);

/// CSV with header epoch,wce,l1,balance,total.
void write_loss_csv(const std::filesystem::path& path, std::span<const EpochLoss> rows);

}  // namespace merit
