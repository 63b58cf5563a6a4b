#pragma once

#include <cmath>
#include <vector>

#include "vrpcp/parameters.hpp"

namespace vrpcp {

struct AdamConfig {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool operator==(const AdamConfig&) const = default;
};

/// Adam with bias correction. Moments are kept in double regardless of the
/// parameter scalar so that f32 training stays reproducible step to step.
template <typename Scalar>
class Adam {
public:
    Adam(NamedParameters<Scalar> params, AdamConfig config) : params_(std::move(params)), config_(config) {
        for (const auto& [name, t] : params_) {
            m_.push_back(Vec<double>::Zero(t.size()));
            v_.push_back(Vec<double>::Zero(t.size()));
        }
    }

    /// Applies one update using the gradients currently stored on the
    /// parameters, scaled by `grad_scale` (e.g. 1/batch).
    void step(double grad_scale = 1.0) {
        ++t_;
        const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i].second;
            const Vec<double> g = p.grad().template cast<double>() * grad_scale;
            m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
            v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.square();
            const Vec<double> update = config_.lr * (m_[i] / c1) / ((v_[i] / c2).sqrt() + config_.eps);
            auto& value = p.mutable_value();
            value = (value.template cast<double>() - update).template cast<Scalar>();
        }
    }

    void zero_grad() { zero_grads(params_); }
    long steps() const { return t_; }

private:
    NamedParameters<Scalar> params_;
    AdamConfig config_;
    std::vector<Vec<double>> m_;
    std::vector<Vec<double>> v_;
    long t_ = 0;
};

}  // namespace vrpcp
