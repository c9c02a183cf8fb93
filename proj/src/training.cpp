#include "merit/training.hpp"

#include "merit/error.hpp"
#include "merit/optimizer.hpp"
#include "merit/rng.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace merit {

namespace {

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng)
{
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[rng.index(i)]);
    return order;
}

double grad_norm(const Parameter& p)
{
    double s = 0.0;
    for (double g : p.grad.data())
        s += g * g;
    return std::sqrt(s);
}

[[noreturn]] void numerical_failure(const std::string& where, std::span<Parameter* const> params)
{
    std::ostringstream msg;
    msg << where << ": non-finite objective or gradient; last gradient norms:";
    for (const Parameter* p : params)
        if (!p->frozen)
            msg << "\n  " << p->name << ' ' << std::setprecision(6) << grad_norm(*p);
    throw NumericalError(msg.str());
}

/// One pass over `train` in shuffled minibatches.
void run_epoch(MeritModel& model, std::span<const Example> train, const LossOptions& opts, std::size_t batch,
               AdamW& optimizer, std::span<Parameter* const> watched, Rng& rng, const std::string& where)
{
    const auto order = shuffled(train.size(), rng);
    std::vector<const Example*> items;
    for (std::size_t start = 0; start < order.size(); start += batch) {
        items.clear();
        for (std::size_t i = start; i < std::min(order.size(), start + batch); ++i)
            items.push_back(&train[order[i]]);
        optimizer.zero_grad();
        Tape tape;
        BatchOutput out = model.forward(tape, items, opts);
        if (!std::isfinite(out.total.value()[0]))
            numerical_failure(where, watched);
        tape.backward(out.total);
        for (const Parameter* p : watched)
            if (!p->frozen && !p->grad.all_finite())
                numerical_failure(where, watched);
        optimizer.step();
    }
}

struct FrozenState {
    std::vector<std::pair<Parameter*, bool>> saved;

    void freeze(std::span<Parameter* const> params)
    {
        for (Parameter* p : params) {
            saved.emplace_back(p, p->frozen);
            p->frozen = true;
        }
    }
    ~FrozenState()
    {
        for (auto& [p, f] : saved)
            p->frozen = f;
    }
};

}  // namespace

EpochLoss evaluate_loss(MeritModel& model, std::span<const Example> examples, const LossOptions& opts,
                        std::size_t batch)
{
    if (examples.empty())
        throw Error("cannot evaluate the objective on an empty set");
    EpochLoss acc;
    std::vector<const Example*> items;
    for (std::size_t start = 0; start < examples.size(); start += batch) {
        items.clear();
        for (std::size_t i = start; i < std::min(examples.size(), start + batch); ++i)
            items.push_back(&examples[i]);
        Tape tape;
        BatchOutput out = model.forward(tape, items, opts);
        const double w = static_cast<double>(items.size());
        acc.wce += w * out.wce_value();
        acc.l1 += w * out.l1_value();
        acc.balance += w * out.balance_value();
        acc.total += w * out.total.value()[0];
    }
    const double n = static_cast<double>(examples.size());
    acc.wce /= n;
    acc.l1 /= n;
    acc.balance /= n;
    acc.total /= n;
    if (!std::isfinite(acc.total))
        throw NumericalError("objective is not finite on the evaluated set");
    return acc;
}

LossOptions phase2_loss_options(const TrainingConfig& cfg, const ClassWeights& weights)
{
    LossOptions opts;
    opts.ser = cfg.ser_loss;
    opts.se = cfg.se_loss;
    opts.balancing = cfg.balancing;
    opts.alpha = cfg.balancing_alpha;
    opts.weights = weights;
    return opts;
}

Phase1Result train_phase1(MeritModel& model, std::span<const Example> train, const TrainingConfig& cfg,
                          const ClassWeights& weights, std::uint64_t seed)
{
    if (train.empty())
        throw Error("phase 1: empty training set");
    FrozenState frozen;
    frozen.freeze(model.backbone.parameters());
    frozen.freeze(model.routing_parameters());

    Phase1Result result;
    const auto train_head = [&](Task task, const HeadPhaseConfig& phase, std::vector<EpochLoss>& log) {
        LossOptions opts;
        opts.ser = task == Task::Ser;
        opts.se = task == Task::Se;
        opts.weights = weights;
        std::vector<Parameter*> params =
            task == Task::Ser ? model.ser_head_parameters() : model.se_head_parameters();
        AdamW optimizer(params, phase.lr, phase.lr, cfg.adamw);
        Rng rng(derive_seed(seed, std::string("shuffle.phase1.") + std::string(task_name(task))));
        log.push_back(evaluate_loss(model, train, opts, phase.batch));
        for (std::size_t epoch = 1; epoch <= phase.epochs; ++epoch) {
            run_epoch(model, train, opts, phase.batch, optimizer, params, rng,
                      "phase 1 (" + std::string(task_name(task)) + ") epoch " + std::to_string(epoch));
            EpochLoss row = evaluate_loss(model, train, opts, phase.batch);
            row.epoch = epoch;
            log.push_back(row);
        }
    };
    train_head(Task::Se, cfg.phase1_se, result.se);
    train_head(Task::Ser, cfg.phase1_ser, result.ser);
    return result;
}

Phase2Result train_phase2(MeritModel& model, std::span<const Example> train, std::span<const Example> dev,
                          const TrainingConfig& cfg, const ClassWeights& weights, std::uint64_t seed)
{
    if (train.empty())
        throw Error("phase 2: empty training set");
    const LossOptions opts = phase2_loss_options(cfg, weights);
    std::vector<Parameter*> params = model.parameters();
    AdamW optimizer(params, cfg.lr_model, cfg.lr_backbone, cfg.adamw);
    Rng rng(derive_seed(seed, "shuffle.phase2"));

    Phase2Result result;
    result.train.push_back(evaluate_loss(model, train, opts, cfg.phase2_batch));
    const bool track_dev = !dev.empty();
    std::vector<Tensor> best;
    double best_dev = 0.0;
    if (track_dev) {
        result.dev.push_back(evaluate_loss(model, dev, opts, cfg.phase2_batch));
        best_dev = result.dev.back().total;
        best = snapshot(params);
    }
    for (std::size_t epoch = 1; epoch <= cfg.phase2_epochs; ++epoch) {
        run_epoch(model, train, opts, cfg.phase2_batch, optimizer, params, rng,
                  "phase 2 epoch " + std::to_string(epoch));
        EpochLoss row = evaluate_loss(model, train, opts, cfg.phase2_batch);
        row.epoch = epoch;
        result.train.push_back(row);
        if (track_dev) {
            EpochLoss d = evaluate_loss(model, dev, opts, cfg.phase2_batch);
            d.epoch = epoch;
            result.dev.push_back(d);
            if (d.total < best_dev) {
                best_dev = d.total;
                result.best_epoch = epoch;
                best = snapshot(params);
            }
        }
    }
    if (track_dev && cfg.early_stopping)
        restore(params, best);
    else
        result.best_epoch = cfg.phase2_epochs;
    return result;
}

ClassWeights class_weights_for(std::span<const Example> examples)
{
    std::array<std::size_t, kEmotionClasses> counts{};
    for (const auto& ex : examples)
        ++counts.at(ex.label);
    return inverse_frequency_weights(counts);
}

void write_loss_csv(const std::filesystem::path& path, std::span<const EpochLoss> rows)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write " + path.string());
    out << "epoch,wce,l1,balance,total\n" << std::setprecision(17);
    for (const auto& r : rows)
        out << r.epoch << ',' << r.wce << ',' << r.l1 << ',' << r.balance << ',' << r.total << '\n';
}

}  // namespace merit
