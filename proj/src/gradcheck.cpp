#include "merit/gradcheck.hpp"

#include "merit/error.hpp"

#include <algorithm>
#include <cmath>

namespace merit {

bool GradCheckReport::passed() const
{
    return std::all_of(params.begin(), params.end(), [](const GradCheckEntry& e) { return e.passed; });
}

double GradCheckReport::max_rel_error() const
{
    double m = 0.0;
    for (const auto& e : params)
        m = std::max(m, e.max_rel_error);
    return m;
}

std::size_t GradCheckReport::checked() const
{
    std::size_t n = 0;
    for (const auto& e : params)
        n += e.checked;
    return n;
}

std::size_t GradCheckReport::excluded() const
{
    std::size_t n = 0;
    for (const auto& e : params)
        n += e.excluded_routing + e.excluded_kink;
    return n;
}

namespace {

struct Probe {
    double value;
    std::uint64_t routing;
    std::uint64_t kinks;
};

Probe evaluate(const LossBuilder& build)
{
    Tape tape;
    tape.set_track_kinks(true);
    Var loss = build(tape);
    if (loss.value().size() != 1)
        throw Error("finite-difference check requires a scalar objective");
    return {loss.value()[0], tape.routing_signature(), tape.kink_signature()};
}

}  // namespace

GradCheckReport finite_difference_check(const LossBuilder& build, std::span<Parameter* const> params, double step,
                                        double tolerance, double denom_floor)
{
    if (!(step > 0.0))
        throw Error("finite-difference step must be positive");

    GradCheckReport report;
    report.step = step;
    report.tolerance = tolerance;

    for (Parameter* p : params)
        p->grad = Tensor(p->value.shape(), 0.0);

    std::uint64_t base_routing = 0, base_kinks = 0;
    {
        Tape tape;
        tape.set_track_kinks(true);
        Var loss = build(tape);
        tape.backward(loss);
        base_routing = tape.routing_signature();
        base_kinks = tape.kink_signature();
        report.base_tie = tape.tie_count() > 0;
    }

    for (Parameter* p : params) {
        GradCheckEntry entry;
        entry.name = p->name;
        entry.entries = p->value.size();
        entry.frozen = p->frozen;
        if (p->frozen) {
            entry.passed = std::all_of(p->grad.data().begin(), p->grad.data().end(), [](double g) { return g == 0.0; });
            report.params.push_back(entry);
            continue;
        }
        if (report.base_tie) {
            entry.excluded_routing = entry.entries;
            report.params.push_back(entry);
            continue;
        }
        const Tensor analytic = p->grad;
        for (std::size_t k = 0; k < p->value.size(); ++k) {
            const double original = p->value[k];
            p->value[k] = original + step;
            const Probe plus = evaluate(build);
            p->value[k] = original - step;
            const Probe minus = evaluate(build);
            p->value[k] = original;

            if (plus.routing != base_routing || minus.routing != base_routing) {
                ++entry.excluded_routing;
                continue;
            }
            if (plus.kinks != base_kinks || minus.kinks != base_kinks) {
                ++entry.excluded_kink;
                continue;
            }
            const double numeric = (plus.value - minus.value) / (2.0 * step);
            const double a = analytic[k];
            const double abs_err = std::fabs(a - numeric);
            const double rel = abs_err / std::max({std::fabs(a), std::fabs(numeric), denom_floor});
            entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
            entry.max_rel_error = std::max(entry.max_rel_error, rel);
            ++entry.checked;
        }
        entry.passed = entry.max_rel_error < tolerance;
        report.params.push_back(entry);
    }
    return report;
}

}  // namespace merit
