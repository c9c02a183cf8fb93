#include "merit/optimizer.hpp"

#include "merit/error.hpp"

#include <cmath>

namespace merit {

AdamW::AdamW(std::vector<Parameter*> params, double lr_model, double lr_backbone, AdamWConfig cfg)
    : lr_model_(lr_model), lr_backbone_(lr_backbone), cfg_(cfg)
{
    if (!(lr_model > 0.0) || !(lr_backbone > 0.0))
        throw Error("learning rates must be positive");
    for (Parameter* p : params) {
        if (p->frozen)
            continue;
        if (p->grad.shape() != p->value.shape())
            p->grad = Tensor(p->value.shape(), 0.0);
        slots_.push_back({p, Tensor(p->value.shape(), 0.0), Tensor(p->value.shape(), 0.0)});
    }
}

void AdamW::zero_grad()
{
    for (auto& s : slots_)
        s.param->zero_grad();
}

void AdamW::step()
{
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& s : slots_) {
        Parameter& p = *s.param;
        const double lr = this->lr(p.group);
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
            s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = s.m[i] / c1;
            const double vhat = s.v[i] / c2;
            p.value[i] -= lr * cfg_.weight_decay * p.value[i];
            p.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace merit
