#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "vrpcp/parameters.hpp"
#include "vrpcp/rng.hpp"
#include "vrpcp/tensor.hpp"

namespace vrpcp {

struct GradCheckResult {
    std::string name;
    int probes = 0;
    double max_rel_error = 0.0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

/// Relative error with a small absolute floor so that two near-zero
/// derivatives compare as equal instead of dividing noise by noise.
inline double relative_error(double analytic, double numeric, double floor = 1e-7) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares reverse-mode gradients of `loss_fn` against central finite
/// differences at `probes` randomly chosen parameter entries (every entry when
/// there are fewer). `loss_fn` must rebuild the graph from the current values
/// of `params` and be deterministic.
template <typename LossFn>
GradCheckResult gradcheck(std::string name, LossFn&& loss_fn, std::vector<Tensor<double>> params, int probes,
                          CounterRng& rng, double tolerance = 1e-4, double eps = 1e-6) {
    for (auto& p : params) p.zero_grad();
    const Tensor<double> base = loss_fn();
    const double loss_scale = 1.0 + std::abs(base.item());
    backward(base);
    std::vector<Vec<double>> analytic;
    analytic.reserve(params.size());
    Index total = 0;
    for (auto& p : params) {
        analytic.push_back(p.grad());
        total += p.size();
    }

    std::vector<std::pair<std::size_t, Index>> sites;
    if (total <= probes) {
        for (std::size_t i = 0; i < params.size(); ++i)
            for (Index j = 0; j < params[i].size(); ++j) sites.emplace_back(i, j);
    } else {
        for (int k = 0; k < probes; ++k) {
            Index flat = static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(total));
            std::size_t i = 0;
            while (flat >= params[i].size()) flat -= params[i++].size();
            sites.emplace_back(i, flat);
        }
    }

    GradCheckResult result;
    result.name = std::move(name);
    result.probes = static_cast<int>(sites.size());
    result.tolerance = tolerance;
    for (auto [i, j] : sites) {
        auto& v = params[i].mutable_value();
        const double saved = v(j);
        v(j) = saved + eps;
        const double up = loss_fn().item();
        v(j) = saved - eps;
        const double down = loss_fn().item();
        v(j) = saved;
        const double numeric = (up - down) / (2.0 * eps);
        // Central differences carry roundoff near eps_mach * |L| / h, so
        // mismatches at that level are not counted against the gradient.
        const double roundoff = std::numeric_limits<double>::epsilon() * loss_scale / eps;
        const double err = relative_error(analytic[i](j), numeric, std::max(1e-7, roundoff / tolerance));
        if (err >= result.max_rel_error) {
            result.max_rel_error = err;
            result.worst_analytic = analytic[i](j);
            result.worst_numeric = numeric;
        }
    }
    result.passed = result.max_rel_error < tolerance;
    return result;
}

/// Runs `gradcheck` separately on every named tensor with `probes` random
/// entries each, so small tensors are not drowned out by large ones.
template <typename LossFn>
std::vector<GradCheckResult> gradcheck_each(const std::string& prefix, LossFn&& loss_fn,
                                            const NamedParameters<double>& params, int probes, CounterRng& rng,
                                            double tolerance = 1e-4, double eps = 1e-6) {
    std::vector<GradCheckResult> out;
    for (const auto& [name, t] : params) out.push_back(gradcheck(prefix + name, loss_fn, {t}, probes, rng, tolerance, eps));
    return out;
}

}  // namespace vrpcp
