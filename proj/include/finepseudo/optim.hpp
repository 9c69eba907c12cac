#pragma once

#include "finepseudo/params.hpp"

#include <cmath>

namespace fp {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <class P>
class Adam {
public:
    Adam() = default;
    explicit Adam(const P& like, AdamConfig cfg = {}) : cfg_(cfg), m_(zeros_like(like)), v_(zeros_like(like)) {}

    void step(P& params, const P& grad, double lr) {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        auto p = tensors_of(params);
        auto g = tensors_of(grad);
        auto m = tensors_of(m_);
        auto v = tensors_of(v_);
        for (std::size_t k = 0; k < p.size(); ++k) {
            *m[k] = cfg_.beta1 * *m[k] + (1.0 - cfg_.beta1) * *g[k];
            *v[k] = cfg_.beta2 * *v[k] + (1.0 - cfg_.beta2) * g[k]->cwiseProduct(*g[k]);
            auto mhat = (*m[k] / c1).array();
            auto vhat = (*v[k] / c2).array();
            p[k]->array() -= lr * mhat / (vhat.sqrt() + cfg_.epsilon);
        }
    }

    long steps() const noexcept { return t_; }

private:
    AdamConfig cfg_{};
    P m_{};
    P v_{};
    long t_ = 0;
};

/// Linear warmup over the first `warmup` epochs, cosine decay afterwards.
/// `epoch` is zero-based.
inline double scheduled_lr(double base_lr, int epoch, int total_epochs, int warmup) {
    if (warmup > 0 && epoch < warmup) return base_lr * static_cast<double>(epoch + 1) / static_cast<double>(warmup);
    const int decay = total_epochs - warmup;
    if (decay <= 0) return base_lr;
    const double progress = static_cast<double>(epoch - warmup) / static_cast<double>(decay);
    return 0.5 * base_lr * (1.0 + std::cos(3.14159265358979323846 * progress));
}

}  // namespace fp
