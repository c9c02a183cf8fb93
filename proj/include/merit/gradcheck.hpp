#pragma once

#include "merit/autodiff.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace merit {

struct GradCheckEntry {
    std::string name;
    std::size_t entries = 0;
    std::size_t checked = 0;
    /// Perturbation changed a Top-K selection (gate tie crossed).
    std::size_t excluded_routing = 0;
    /// Perturbation crossed a relu/abs/floor kink.
    std::size_t excluded_kink = 0;
    bool frozen = false;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    bool passed = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> params;
    double step = 0.0;
    double tolerance = 0.0;
    /// The base point itself sits on a routing tie; no entry is compared.
    bool base_tie = false;

    bool passed() const;
    double max_rel_error() const;
    std::size_t checked() const;
    std::size_t excluded() const;
};

/// Builds the scalar objective on the given tape and returns it.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares analytic gradients against central differences for every entry
/// of every parameter. Relative error is |a - n| / max(|a|, |n|, denom_floor).
GradCheckReport finite_difference_check(const LossBuilder& build, std::span<Parameter* const> params, double step,
                                        double tolerance, double denom_floor = 1e-6);

}  // namespace merit
