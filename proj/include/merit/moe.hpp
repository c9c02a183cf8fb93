#pragma once

// Frame-wise mixture of experts shared by two tasks.
//
// N two-layer experts E_n map a concatenated frame f_t to D features. Each
// task owns a gate producing g_t = softmax(f_t A + c). Top-K keeps the K
// largest gate values untouched (no renormalization) and zeros the rest:
//
//   z_t = sum_n TopK(g_t, K)_n * E_n(f_t)
//
// Gradients flow through the retained gate values; the selection itself is
// piecewise constant.

#include "merit/autodiff.hpp"
#include "merit/backbone.hpp"
#include "merit/rng.hpp"

#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace merit {

enum class Task { Ser, Se };

std::string_view task_name(Task task) noexcept;

struct Expert {
    Parameter w1, b1, w2, b2;
};

class ExpertPool {
public:
    ExpertPool() = default;
    /// Weights and biases uniform in +-1/sqrt(fan_in).
    ExpertPool(std::size_t n_experts, std::size_t in_width, std::size_t hidden, std::size_t out_width, Rng& rng);

    std::size_t size() const noexcept { return experts_.size(); }
    std::size_t in_width() const noexcept { return in_; }
    std::size_t hidden() const noexcept { return hidden_; }
    std::size_t out_width() const noexcept { return out_; }

    Expert& expert(std::size_t n);
    const Expert& expert(std::size_t n) const;

    /// relu(x W1 + b1) W2 + b2 applied row-wise.
    Var forward(Tape& tape, std::size_t n, Var frames);

    std::vector<Parameter*> parameters();

private:
    std::vector<Expert> experts_;
    std::size_t in_ = 0, hidden_ = 0, out_ = 0;
};

class GatingNetwork {
public:
    GatingNetwork() = default;
    /// Weights uniform in +-1/sqrt(in_width), zero bias (near-uniform routing).
    GatingNetwork(Task task, std::size_t in_width, std::size_t n_experts, Rng& rng);

    Task task() const noexcept { return task_; }
    std::size_t in_width() const noexcept { return weight.value.rows(); }
    std::size_t n_experts() const noexcept { return weight.value.cols(); }

    Var logits(Tape& tape, Var frames);
    Var scores(Tape& tape, Var frames);

    std::vector<Parameter*> parameters() { return {&weight, &bias}; }

    Parameter weight;
    Parameter bias;

private:
    Task task_ = Task::Ser;
};

struct RoutingDecision {
    Task task = Task::Ser;
    std::size_t k = 1;
    Tensor gates;     // T x N, rows sum to 1
    Tensor retained;  // T x N, TopK(g_t, K)
    std::vector<std::size_t> selected;  // T x K, ranked by gate value

    std::size_t frames() const noexcept { return gates.rows(); }
    std::size_t n_experts() const noexcept { return gates.cols(); }
    std::size_t top1(std::size_t t) const { return selected[t * k]; }
    std::vector<std::size_t> top1_sequence() const;
};

struct TaskSequence {
    Task task = Task::Ser;
    Tensor z;  // T x D
};

enum class Dispatch {
    /// Evaluate each expert only on the frames routed to it.
    Sparse,
    /// Evaluate every expert on every frame and weight by the retained row.
    Dense,
};

/// Indices of the K largest entries, ordered by value (descending) with
/// ties broken toward the lower index.
std::vector<std::size_t> topk_indices(std::span<const double> scores, std::size_t k);
/// Keeps the K largest entries at their values and zeros the rest.
std::vector<double> topk_mask(std::span<const double> scores, std::size_t k);

Tensor expert_forward(const ExpertPool& pool, std::size_t n, const ConcatRepresentation& frames);
Tensor gate_scores(const GatingNetwork& gate, const ConcatRepresentation& frames);

std::pair<TaskSequence, RoutingDecision> moe_forward(const ExpertPool& pool, const GatingNetwork& gate,
                                                     const ConcatRepresentation& frames, std::size_t k,
                                                     Dispatch dispatch = Dispatch::Sparse);
/// Soft mixture over all experts (K = N).
std::pair<TaskSequence, RoutingDecision> dense_moe_forward(const ExpertPool& pool, const GatingNetwork& gate,
                                                           const ConcatRepresentation& frames);

/// alpha * N * sum_n f_n * P_n with f_n the fraction of frames whose top-1
/// expert is n and P_n the mean gate probability of expert n. Requires K = 1.
double balancing_loss(const RoutingDecision& decision, double alpha);

// Tape-level routing used in training.

struct MoeOutput {
    Var z;
    Var gates;
    RoutingDecision decision;
};

MoeOutput moe_forward(Tape& tape, ExpertPool& pool, GatingNetwork& gate, Var frames, std::size_t k,
                      Dispatch dispatch = Dispatch::Sparse);

/// Differentiable balancing term; `top1` holds one hard assignment per frame.
Var balancing_loss(Var gates, std::span<const std::size_t> top1, double alpha);

}  // namespace merit
