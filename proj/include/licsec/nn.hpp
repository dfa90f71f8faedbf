#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "licsec/autograd.hpp"

namespace licsec::nn {

// Trainable tensor. `trainable=false` freezes it (grad stays zero and the
// optimizer skips it).
struct Parameter {
    std::string name;
    Var var;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Tensor value, bool train = true)
        : name(std::move(n)), var(Var(std::move(value), train)), trainable(train) {}

    Tensor& value() { return var.mutable_value(); }
    const Tensor& value() const { return var.value(); }
    Tensor& grad() { return var.grad(); }
};

// Kaiming-uniform fan-in initialization (the papers in this space rarely
// state init; this is the common conv default).
inline Tensor kaiming_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
    double bound = std::sqrt(6.0 / double(fan_in));
    return Tensor::uniform(std::move(shape), -bound, bound, rng);
}
inline Tensor bias_uniform(int n, int fan_in, Rng& rng) {
    double bound = 1.0 / std::sqrt(double(fan_in));
    return Tensor::uniform({n}, -bound, bound, rng);
}

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction. Deterministic: update order follows
// the parameter list; no data-dependent branching.
class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamConfig cfg = {})
        : params_(std::move(params)), cfg_(cfg) {
        for (Parameter* p : params_)
            slots_.push_back({Tensor::zeros(p->value().shape()),
                              Tensor::zeros(p->value().shape())});
    }

    void zero_grad() {
        for (Parameter* p : params_) p->var.zero_grad();
    }

    void step() { step(cfg_.lr); }

    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            Parameter* p = params_[i];
            if (!p->trainable) continue;
            Tensor& g = p->grad();
            Tensor& m = slots_[i].m;
            Tensor& v = slots_[i].v;
            Tensor& w = p->value();
            for (int64_t j = 0; j < w.size(); ++j) {
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
                double mhat = m[j] / bc1;
                double vhat = v[j] / bc2;
                w[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    int64_t steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    struct Slot {
        Tensor m, v;
    };
    std::vector<Parameter*> params_;
    std::vector<Slot> slots_;
    AdamConfig cfg_;
    int64_t t_ = 0;
};

}  // namespace licsec::nn
