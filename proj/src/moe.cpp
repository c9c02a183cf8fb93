#include "merit/moe.hpp"

#include "merit/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace merit {

std::string_view task_name(Task task) noexcept
{
    return task == Task::Ser ? "ser" : "se";
}

ExpertPool::ExpertPool(std::size_t n_experts, std::size_t in_width, std::size_t hidden, std::size_t out_width,
                       Rng& rng)
    : in_(in_width), hidden_(hidden), out_(out_width)
{
    if (n_experts == 0)
        throw Error("expert pool needs at least one expert");
    const double b1 = 1.0 / std::sqrt(static_cast<double>(in_width));
    const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (std::size_t n = 0; n < n_experts; ++n) {
        const std::string prefix = "moe.expert" + std::to_string(n);
        Expert e;
        e.w1 = Parameter(prefix + ".W1", uniform_tensor(rng, {in_width, hidden}, b1));
        e.b1 = Parameter(prefix + ".b1", uniform_tensor(rng, {1, hidden}, b1));
        e.w2 = Parameter(prefix + ".W2", uniform_tensor(rng, {hidden, out_width}, b2));
        e.b2 = Parameter(prefix + ".b2", uniform_tensor(rng, {1, out_width}, b2));
        experts_.push_back(std::move(e));
    }
}

Expert& ExpertPool::expert(std::size_t n)
{
    if (n >= experts_.size())
        throw Error("expert index " + std::to_string(n) + " out of range for pool of " +
                    std::to_string(experts_.size()));
    return experts_[n];
}

const Expert& ExpertPool::expert(std::size_t n) const
{
    if (n >= experts_.size())
        throw Error("expert index " + std::to_string(n) + " out of range for pool of " +
                    std::to_string(experts_.size()));
    return experts_[n];
}

Var ExpertPool::forward(Tape& tape, std::size_t n, Var frames)
{
    Expert& e = expert(n);
    Var h = ad::relu(ad::affine(frames, tape.param(e.w1), tape.param(e.b1)));
    return ad::affine(h, tape.param(e.w2), tape.param(e.b2));
}

std::vector<Parameter*> ExpertPool::parameters()
{
    std::vector<Parameter*> out;
    for (auto& e : experts_)
        for (Parameter* p : {&e.w1, &e.b1, &e.w2, &e.b2})
            out.push_back(p);
    return out;
}

GatingNetwork::GatingNetwork(Task task, std::size_t in_width, std::size_t n_experts, Rng& rng) : task_(task)
{
    const std::string prefix = "moe.gate." + std::string(task_name(task));
    weight = Parameter(prefix + ".W", uniform_tensor(rng, {in_width, n_experts}, 1.0 / std::sqrt(double(in_width))));
    bias = Parameter(prefix + ".b", Tensor({1, n_experts}, 0.0));
}

Var GatingNetwork::logits(Tape& tape, Var frames)
{
    if (frames.cols() != in_width())
        tape.shape_error("gate", "frame width " + std::to_string(frames.cols()) + " vs gate input " +
                                     std::to_string(in_width()));
    return ad::affine(frames, tape.param(weight), tape.param(bias));
}

Var GatingNetwork::scores(Tape& tape, Var frames)
{
    return ad::softmax_rows(logits(tape, frames));
}

std::vector<std::size_t> RoutingDecision::top1_sequence() const
{
    std::vector<std::size_t> out(frames());
    for (std::size_t t = 0; t < out.size(); ++t)
        out[t] = top1(t);
    return out;
}

std::vector<std::size_t> topk_indices(std::span<const double> scores, std::size_t k)
{
    if (k < 1 || k > scores.size())
        throw Error("top-k: K=" + std::to_string(k) + " outside [1, " + std::to_string(scores.size()) + "]");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    order.resize(k);
    return order;
}

std::vector<double> topk_mask(std::span<const double> scores, std::size_t k)
{
    std::vector<double> out(scores.size(), 0.0);
    for (auto i : topk_indices(scores, k))
        out[i] = scores[i];
    return out;
}

MoeOutput moe_forward(Tape& tape, ExpertPool& pool, GatingNetwork& gate, Var frames, std::size_t k, Dispatch dispatch)
{
    const std::size_t n_experts = pool.size();
    if (gate.n_experts() != n_experts)
        tape.shape_error("moe", "gate emits " + std::to_string(gate.n_experts()) + " scores for " +
                                    std::to_string(n_experts) + " experts");
    if (frames.cols() != pool.in_width())
        tape.shape_error("moe", "frame width " + std::to_string(frames.cols()) + " vs expert input " +
                                    std::to_string(pool.in_width()));
    if (k < 1 || k > n_experts)
        throw Error("top-k: K=" + std::to_string(k) + " outside [1, " + std::to_string(n_experts) + "]");

    MoeOutput out;
    out.gates = gate.scores(tape, frames);
    const Tensor& g = out.gates.value();
    const std::size_t frames_n = g.rows();

    RoutingDecision& d = out.decision;
    d.task = gate.task();
    d.k = k;
    d.gates = g;
    d.retained = Tensor(g.shape(), 0.0);
    d.selected.reserve(frames_n * k);
    Tensor mask(g.shape(), 0.0);
    for (std::size_t t = 0; t < frames_n; ++t) {
        const auto row = g.row_span(t);
        const auto idx = topk_indices(row, k);
        if (k < n_experts) {
            // A tie at the selection boundary makes the routing non-differentiable.
            std::vector<double> sorted(row.begin(), row.end());
            std::sort(sorted.begin(), sorted.end(), std::greater<>());
            if (sorted[k - 1] == sorted[k])
                tape.note_tie();
        }
        tape.note_routing(idx);
        for (auto i : idx) {
            mask.at(t, i) = 1.0;
            d.retained.at(t, i) = g.at(t, i);
            d.selected.push_back(i);
        }
    }

    Var retained = ad::mul_const(out.gates, mask);
    Var acc = tape.constant(Tensor::matrix(frames_n, pool.out_width()));
    for (std::size_t n = 0; n < n_experts; ++n) {
        Var weight = ad::slice_cols(retained, n, n + 1);
        if (dispatch == Dispatch::Dense) {
            acc = ad::add(acc, ad::scale_rows(pool.forward(tape, n, frames), weight));
            continue;
        }
        std::vector<std::size_t> rows;
        for (std::size_t t = 0; t < frames_n; ++t)
            if (mask.at(t, n) != 0.0)
                rows.push_back(t);
        if (rows.empty())
            continue;
        Var routed = pool.forward(tape, n, ad::gather_rows(frames, rows));
        acc = ad::index_add_rows(acc, ad::scale_rows(routed, ad::gather_rows(weight, rows)), rows);
    }
    out.z = acc;
    return out;
}

Tensor expert_forward(const ExpertPool& pool, std::size_t n, const ConcatRepresentation& frames)
{
    ExpertPool local = pool;
    Tape tape;
    return local.forward(tape, n, tape.constant(frames.frames)).value();
}

Tensor gate_scores(const GatingNetwork& gate, const ConcatRepresentation& frames)
{
    GatingNetwork local = gate;
    Tape tape;
    return local.scores(tape, tape.constant(frames.frames)).value();
}

std::pair<TaskSequence, RoutingDecision> moe_forward(const ExpertPool& pool, const GatingNetwork& gate,
                                                     const ConcatRepresentation& frames, std::size_t k,
                                                     Dispatch dispatch)
{
    ExpertPool local_pool = pool;
    GatingNetwork local_gate = gate;
    Tape tape;
    MoeOutput out = moe_forward(tape, local_pool, local_gate, tape.constant(frames.frames), k, dispatch);
    return {TaskSequence{gate.task(), out.z.value()}, std::move(out.decision)};
}

std::pair<TaskSequence, RoutingDecision> dense_moe_forward(const ExpertPool& pool, const GatingNetwork& gate,
                                                           const ConcatRepresentation& frames)
{
    return moe_forward(pool, gate, frames, pool.size(), Dispatch::Dense);
}

namespace {

std::vector<double> routed_fractions(std::span<const std::size_t> top1, std::size_t n_experts)
{
    std::vector<double> f(n_experts, 0.0);
    for (auto e : top1) {
        if (e >= n_experts)
            throw Error("balancing loss: expert index out of range");
        f[e] += 1.0;
    }
    for (double& v : f)
        v /= static_cast<double>(top1.size());
    return f;
}

}  // namespace

double balancing_loss(const RoutingDecision& decision, double alpha)
{
    if (decision.k != 1)
        throw Error("balancing loss needs hard top-1 routing, got K=" + std::to_string(decision.k));
    if (alpha < 0.0)
        throw Error("balancing loss weight must be non-negative");
    const std::size_t n = decision.n_experts();
    const std::size_t t_count = decision.frames();
    const auto f = routed_fractions(decision.top1_sequence(), n);
    double total = 0.0;
    for (std::size_t e = 0; e < n; ++e) {
        double p = 0.0;
        for (std::size_t t = 0; t < t_count; ++t)
            p += decision.gates.at(t, e);
        total += f[e] * (p / static_cast<double>(t_count));
    }
    return alpha * static_cast<double>(n) * total;
}

Var balancing_loss(Var gates, std::span<const std::size_t> top1, double alpha)
{
    if (top1.size() != gates.rows())
        gates.tape()->shape_error("balancing_loss", std::to_string(top1.size()) + " assignments for " +
                                                        std::to_string(gates.rows()) + " frames");
    const std::size_t n = gates.cols();
    const auto f = routed_fractions(top1, n);
    Var weighted = ad::mul_const(ad::mean_rows(gates), Tensor({1, n}, f));
    return ad::scale(ad::sum(weighted), alpha * static_cast<double>(n));
}

}  // namespace merit
