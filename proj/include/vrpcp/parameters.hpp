#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vrpcp/errors.hpp"
#include "vrpcp/ops.hpp"
#include "vrpcp/rng.hpp"
#include "vrpcp/tensor.hpp"

namespace vrpcp {

/// Ordered (name, tensor) list. Entries are handles, so a list built from a
/// model aliases the model's parameters.
template <typename Scalar>
using NamedParameters = std::vector<std::pair<std::string, Tensor<Scalar>>>;

template <typename Scalar>
Index parameter_count(const NamedParameters<Scalar>& params) {
    Index n = 0;
    for (const auto& [name, t] : params) n += t.size();
    return n;
}

template <typename Scalar>
void zero_grads(NamedParameters<Scalar>& params) {
    for (auto& [name, t] : params) t.zero_grad();
}

template <typename Scalar>
std::vector<Tensor<Scalar>> tensors_of(const NamedParameters<Scalar>& params) {
    std::vector<Tensor<Scalar>> out;
    out.reserve(params.size());
    for (const auto& [name, t] : params) out.push_back(t);
    return out;
}

/// Copies values from `src` into the same-named leaves of `dst`, converting
/// precision. Names and shapes must match one to one.
template <typename To, typename From>
void copy_parameter_values(NamedParameters<To>& dst, const NamedParameters<From>& src) {
    if (dst.size() != src.size())
        throw CompatibilityError("parameter count mismatch: " + std::to_string(dst.size()) + " vs " +
                                 std::to_string(src.size()));
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (dst[i].first != src[i].first || dst[i].second.shape() != src[i].second.shape())
            throw CompatibilityError("parameter mismatch at '" + dst[i].first + "'");
        dst[i].second.mutable_value() = src[i].second.value().template cast<To>();
    }
}

template <typename Scalar>
Tensor<Scalar> uniform_parameter(Shape shape, double bound, CounterRng& rng) {
    Vec<Scalar> v(shape_size(shape));
    for (Index i = 0; i < v.size(); ++i) v(i) = static_cast<Scalar>(rng.uniform(-bound, bound));
    return Tensor<Scalar>::parameter(std::move(shape), std::move(v));
}

template <typename Scalar>
Tensor<Scalar> zero_parameter(Shape shape) {
    const Index n = shape_size(shape);
    return Tensor<Scalar>::parameter(std::move(shape), Vec<Scalar>::Zero(n));
}

template <typename Scalar>
Tensor<Scalar> constant_parameter(Shape shape, Scalar value) {
    const Index n = shape_size(shape);
    return Tensor<Scalar>::parameter(std::move(shape), Vec<Scalar>::Constant(n, value));
}

/// Fully connected layer, y = x W + b with W stored [in x out].
template <typename Scalar>
struct Linear {
    Tensor<Scalar> weight;
    Tensor<Scalar> bias;

    static Linear init(Index in, Index out, CounterRng& rng, bool with_bias = true) {
        Linear l;
        l.weight = uniform_parameter<Scalar>({in, out}, std::sqrt(6.0 / static_cast<double>(in + out)), rng);
        if (with_bias) l.bias = zero_parameter<Scalar>({out});
        return l;
    }

    Index in_features() const { return weight.dim(0); }
    Index out_features() const { return weight.dim(1); }

    /// x is [rows x in] or a vector [in]; the output keeps the same rank.
    Tensor<Scalar> operator()(const Tensor<Scalar>& x) const {
        const bool vector_input = x.rank() == 1;
        Tensor<Scalar> x2 = vector_input ? reshape(x, {1, x.size()}) : x;
        Tensor<Scalar> y = matmul(x2, weight);
        if (bias.defined()) y = add_bias(y, bias);
        return vector_input ? reshape(y, {y.size()}) : y;
    }

    void collect(NamedParameters<Scalar>& out, const std::string& prefix) const {
        out.emplace_back(prefix + ".weight", weight);
        if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
    }
};

}  // namespace vrpcp
