#pragma once

#include "merit/autodiff.hpp"

#include <vector>

namespace merit {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Adam with decoupled weight decay and per-group learning rates. Frozen
/// parameters are never touched.
class AdamW {
public:
    AdamW(std::vector<Parameter*> params, double lr_model, double lr_backbone, AdamWConfig cfg = {});

    void zero_grad();
    void step();

    double lr(ParamGroup group) const noexcept { return group == ParamGroup::Backbone ? lr_backbone_ : lr_model_; }
    std::size_t steps() const noexcept { return t_; }

private:
    struct Slot {
        Parameter* param;
        Tensor m;
        Tensor v;
    };
    std::vector<Slot> slots_;
    double lr_model_;
    double lr_backbone_;
    AdamWConfig cfg_;
    std::size_t t_ = 0;
};

}  // namespace merit
