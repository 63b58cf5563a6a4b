#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "vrpcp/errors.hpp"
#include "vrpcp/rng.hpp"
#include "vrpcp/tensor.hpp"

namespace vrpcp {

enum class Mode { train, eval };

namespace detail {

template <typename Scalar>
void require_same_shape(const char* op, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
}

template <typename Scalar>
void require_rank(const char* op, const Tensor<Scalar>& a, Index rank) {
    if (a.rank() != rank)
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_string(a.shape()));
}

template <typename Scalar>
Vec<Scalar>* grad_of(Node<Scalar>& self, std::size_t i) {
    auto& in = *self.inputs[i];
    return in.requires_grad ? &in.grad_buffer() : nullptr;
}

// Elementwise map with derivative expressed through input x and output y.
template <typename Scalar, typename F, typename DF>
Tensor<Scalar> unary(const char* op, const Tensor<Scalar>& x, F f, DF df) {
    Vec<Scalar> y = x.value().unaryExpr(f);
    return Tensor<Scalar>::from_op(op, x.shape(), std::move(y), {x}, [df](Node<Scalar>& self) {
        if (auto* g = grad_of(self, 0)) {
            const auto& xv = self.inputs[0]->value;
            for (Index i = 0; i < xv.size(); ++i) (*g)(i) += self.grad(i) * df(xv(i), self.value(i));
        }
    });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::require_same_shape("add", a, b);
    return Tensor<Scalar>::from_op("add", a.shape(), a.value() + b.value(), {a, b},
                                   [](detail::Node<Scalar>& self) {
                                       if (auto* g = detail::grad_of(self, 0)) *g += self.grad;
                                       if (auto* g = detail::grad_of(self, 1)) *g += self.grad;
                                   });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::require_same_shape("sub", a, b);
    return Tensor<Scalar>::from_op("sub", a.shape(), a.value() - b.value(), {a, b},
                                   [](detail::Node<Scalar>& self) {
                                       if (auto* g = detail::grad_of(self, 0)) *g += self.grad;
                                       if (auto* g = detail::grad_of(self, 1)) *g -= self.grad;
                                   });
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::require_same_shape("mul", a, b);
    return Tensor<Scalar>::from_op("mul", a.shape(), a.value() * b.value(), {a, b},
                                   [](detail::Node<Scalar>& self) {
                                       if (auto* g = detail::grad_of(self, 0)) *g += self.grad * self.inputs[1]->value;
                                       if (auto* g = detail::grad_of(self, 1)) *g += self.grad * self.inputs[0]->value;
                                   });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar s) {
    return Tensor<Scalar>::from_op("scale", x.shape(), x.value() * s, {x}, [s](detail::Node<Scalar>& self) {
        if (auto* g = detail::grad_of(self, 0)) *g += self.grad * s;
    });
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return sub(a, b); }
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return mul(a, b); }
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& x, Scalar s) { return scale(x, s); }

/// Adds `bias` (shape [d]) to every length-d slice along the last axis.
template <typename Scalar>
Tensor<Scalar> add_bias(const Tensor<Scalar>& x, const Tensor<Scalar>& bias) {
    const Index d = bias.size();
    if (bias.rank() != 1 || x.shape().back() != d)
        throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                             shape_string(x.shape()));
    const Index rows = x.size() / d;
    Vec<Scalar> y = x.value();
    Eigen::Map<RowMatrix<Scalar>>(y.data(), rows, d).rowwise() += bias.value().matrix().transpose();
    return Tensor<Scalar>::from_op("add_bias", x.shape(), std::move(y), {x, bias},
                                   [rows, d](detail::Node<Scalar>& self) {
                                       if (auto* g = detail::grad_of(self, 0)) *g += self.grad;
                                       if (auto* g = detail::grad_of(self, 1)) {
                                           Eigen::Map<const RowMatrix<Scalar>> dy(self.grad.data(), rows, d);
                                           g->matrix() += dy.colwise().sum().transpose();
                                       }
                                   });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& x) {
    return detail::unary(
        "tanh", x, [](Scalar v) { return std::tanh(v); }, [](Scalar, Scalar y) { return Scalar(1) - y * y; });
}

/// log(1 + e^x), evaluated without overflow.
template <typename Scalar>
Tensor<Scalar> softplus(const Tensor<Scalar>& x) {
    return detail::unary(
        "softplus", x, [](Scalar v) { return std::log1p(std::exp(-std::abs(v))) + std::max(v, Scalar(0)); },
        [](Scalar v, Scalar) {
            return v >= 0 ? Scalar(1) / (Scalar(1) + std::exp(-v)) : std::exp(v) / (Scalar(1) + std::exp(v));
        });
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
    return detail::unary(
        "relu", x, [](Scalar v) { return v > 0 ? v : Scalar(0); },
        [](Scalar v, Scalar) { return v > 0 ? Scalar(1) : Scalar(0); });
}

template <typename Scalar>
Tensor<Scalar> log1p(const Tensor<Scalar>& x) {
    const auto& v = x.value();
    for (Index i = 0; i < v.size(); ++i)
        if (!(v(i) > Scalar(-1)))
            throw NumericDomainError("log1p: input at index " + std::to_string(i) + " is " + std::to_string(v(i)) +
                                     ", must be > -1");
    return detail::unary(
        "log1p", x, [](Scalar u) { return std::log1p(u); }, [](Scalar u, Scalar) { return Scalar(1) / (Scalar(1) + u); });
}

template <typename Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& x) {
    return detail::unary(
        "square", x, [](Scalar v) { return v * v; }, [](Scalar v, Scalar) { return Scalar(2) * v; });
}

// ---------------------------------------------------------------------------
// Reductions and shape manipulation
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
    Vec<Scalar> y(1);
    y(0) = x.value().sum();
    return Tensor<Scalar>::from_op("sum", {1}, std::move(y), {x}, [](detail::Node<Scalar>& self) {
        if (auto* g = detail::grad_of(self, 0)) *g += self.grad(0);
    });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x) {
    return scale(sum(x), Scalar(1) / static_cast<Scalar>(x.size()));
}

/// Arithmetic mean over the contiguous axis range [first, last). The pooled
/// axes are removed from the output shape; pooling every axis gives shape [1].
template <typename Scalar>
Tensor<Scalar> global_avg_pool(const Tensor<Scalar>& x, Index first = 0, Index last = -1) {
    if (last < 0) last = x.rank();
    if (first < 0 || first >= last || last > x.rank())
        throw DimensionError("global_avg_pool: empty or invalid axis range [" + std::to_string(first) + ", " +
                             std::to_string(last) + ") for " + shape_string(x.shape()));
    Index outer = 1, pooled = 1, inner = 1;
    Shape out_shape;
    for (Index a = 0; a < x.rank(); ++a) {
        const Index d = x.dim(a);
        if (a < first) {
            outer *= d;
            out_shape.push_back(d);
        } else if (a < last) {
            pooled *= d;
        } else {
            inner *= d;
            out_shape.push_back(d);
        }
    }
    if (out_shape.empty()) out_shape = {1};
    Vec<Scalar> y = Vec<Scalar>::Zero(outer * inner);
    const auto& xv = x.value();
    for (Index o = 0; o < outer; ++o)
        for (Index p = 0; p < pooled; ++p)
            y.segment(o * inner, inner) += xv.segment((o * pooled + p) * inner, inner);
    const Scalar inv = Scalar(1) / static_cast<Scalar>(pooled);
    y *= inv;
    return Tensor<Scalar>::from_op("global_avg_pool", std::move(out_shape), std::move(y), {x},
                                   [outer, pooled, inner, inv](detail::Node<Scalar>& self) {
                                       if (auto* g = detail::grad_of(self, 0))
                                           for (Index o = 0; o < outer; ++o)
                                               for (Index p = 0; p < pooled; ++p)
                                                   g->segment((o * pooled + p) * inner, inner) +=
                                                       self.grad.segment(o * inner, inner) * inv;
                                   });
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Shape shape) {
    if (shape_size(shape) != x.size())
        throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
    return Tensor<Scalar>::from_op("reshape", std::move(shape), x.value(), {x}, [](detail::Node<Scalar>& self) {
        if (auto* g = detail::grad_of(self, 0)) *g += self.grad;
    });
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& x) {
    detail::require_rank("transpose", x, 2);
    const Index m = x.dim(0), n = x.dim(1);
    Vec<Scalar> y(x.size());
    Eigen::Map<RowMatrix<Scalar>>(y.data(), n, m) = x.matrix().transpose();
    return Tensor<Scalar>::from_op("transpose", {n, m}, std::move(y), {x}, [m, n](detail::Node<Scalar>& self) {
        if (auto* g = detail::grad_of(self, 0))
            Eigen::Map<RowMatrix<Scalar>>(g->data(), m, n) +=
                Eigen::Map<const RowMatrix<Scalar>>(self.grad.data(), n, m).transpose();
    });
}

/// Rows [begin, begin + count) along axis 0.
template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& x, Index begin, Index count) {
    if (begin < 0 || count <= 0 || begin + count > x.dim(0))
        throw DimensionError("slice: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                             ") out of range for " + shape_string(x.shape()));
    const Index stride = x.size() / x.dim(0);
    Shape shape = x.shape();
    shape[0] = count;
    return Tensor<Scalar>::from_op("slice", std::move(shape), x.value().segment(begin * stride, count * stride), {x},
                                   [begin, stride](detail::Node<Scalar>& self) {
                                       if (auto* g = detail::grad_of(self, 0))
                                           g->segment(begin * stride, self.grad.size()) += self.grad;
                                   });
}

/// Row `i` of axis 0 with that axis dropped.
template <typename Scalar>
Tensor<Scalar> row(const Tensor<Scalar>& x, Index i) {
    Shape shape(x.shape().begin() + 1, x.shape().end());
    if (shape.empty()) shape = {1};
    return reshape(slice(x, i, 1), std::move(shape));
}

/// Joins tensors along axis 0. All trailing extents must agree.
template <typename Scalar>
Tensor<Scalar> concat(const std::vector<Tensor<Scalar>>& parts) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    Shape shape = parts.front().shape();
    Index total = 0;
    std::vector<Index> offsets;
    for (const auto& p : parts) {
        if (p.rank() != static_cast<Index>(shape.size()) || !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1))
            throw DimensionError("concat: incompatible shapes " + shape_string(shape) + " and " +
                                 shape_string(p.shape()));
        offsets.push_back(total);
        total += p.size();
    }
    shape[0] = 0;
    Vec<Scalar> y(total);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        y.segment(offsets[i], parts[i].size()) = parts[i].value();
        shape[0] += parts[i].dim(0);
    }
    return Tensor<Scalar>::from_op("concat", std::move(shape), std::move(y), parts,
                                   [offsets](detail::Node<Scalar>& self) {
                                       for (std::size_t i = 0; i < offsets.size(); ++i)
                                           if (auto* g = detail::grad_of(self, i))
                                               *g += self.grad.segment(offsets[i], g->size());
                                   });
}

/// Stacks equally shaped tensors into a new leading axis.
template <typename Scalar>
Tensor<Scalar> stack(const std::vector<Tensor<Scalar>>& parts) {
    if (parts.empty()) throw DimensionError("stack: no inputs");
    std::vector<Tensor<Scalar>> rows;
    rows.reserve(parts.size());
    Shape item = parts.front().shape();
    for (const auto& p : parts) {
        if (p.shape() != item)
            throw DimensionError("stack: shape " + shape_string(p.shape()) + " differs from " + shape_string(item));
        Shape s{1};
        s.insert(s.end(), item.begin(), item.end());
        rows.push_back(reshape(p, std::move(s)));
    }
    return concat(rows);
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::require_rank("matmul", a, 2);
    detail::require_rank("matmul", b, 2);
    const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()));
    Vec<Scalar> y(m * n);
    Eigen::Map<RowMatrix<Scalar>>(y.data(), m, n).noalias() = a.matrix() * b.matrix();
    return Tensor<Scalar>::from_op("matmul", {m, n}, std::move(y), {a, b}, [m, k, n](detail::Node<Scalar>& self) {
        Eigen::Map<const RowMatrix<Scalar>> dy(self.grad.data(), m, n);
        if (auto* g = detail::grad_of(self, 0))
            Eigen::Map<RowMatrix<Scalar>>(g->data(), m, k).noalias() +=
                dy * Eigen::Map<const RowMatrix<Scalar>>(self.inputs[1]->value.data(), k, n).transpose();
        if (auto* g = detail::grad_of(self, 1))
            Eigen::Map<RowMatrix<Scalar>>(g->data(), k, n).noalias() +=
                Eigen::Map<const RowMatrix<Scalar>>(self.inputs[0]->value.data(), m, k).transpose() * dy;
    });
}

/// Every row of a matrix minus its last row.
template <typename Scalar>
Tensor<Scalar> offset_from_last(const Tensor<Scalar>& x) {
    detail::require_rank("offset_from_last", x, 2);
    const Index n = x.dim(0);
    const Tensor<Scalar> ones = Tensor<Scalar>::constant({n, 1}, Vec<Scalar>::Ones(n));
    return x - matmul(ones, slice(x, n - 1, 1));
}

// ---------------------------------------------------------------------------
// Softmax family (over the last axis)
// ---------------------------------------------------------------------------

/// softmax(z / T) along the last axis, max-subtracted.
template <typename Scalar>
Tensor<Scalar> softmax_temp(const Tensor<Scalar>& z, Scalar temperature) {
    if (!(temperature > 0)) throw ConfigError("softmax_temp: temperature must be > 0, got " + std::to_string(temperature));
    const Index d = z.shape().back(), rows = z.size() / d;
    Vec<Scalar> y(z.size());
    for (Index r = 0; r < rows; ++r) {
        auto zr = z.value().segment(r * d, d) / temperature;
        auto e = (zr - zr.maxCoeff()).exp();
        y.segment(r * d, d) = e / e.sum();
    }
    return Tensor<Scalar>::from_op("softmax", z.shape(), std::move(y), {z},
                                   [rows, d, temperature](detail::Node<Scalar>& self) {
                                       if (auto* g = detail::grad_of(self, 0))
                                           for (Index r = 0; r < rows; ++r) {
                                               auto yr = self.value.segment(r * d, d);
                                               auto gr = self.grad.segment(r * d, d);
                                               const Scalar dot = (yr * gr).sum();
                                               g->segment(r * d, d) += yr * (gr - dot) / temperature;
                                           }
                                   });
}

template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& z) {
    return softmax_temp(z, Scalar(1));
}

/// log(softmax(z / T)) along the last axis, via log-sum-exp.
template <typename Scalar>
Tensor<Scalar> log_softmax_temp(const Tensor<Scalar>& z, Scalar temperature) {
    if (!(temperature > 0))
        throw ConfigError("log_softmax_temp: temperature must be > 0, got " + std::to_string(temperature));
    const Index d = z.shape().back(), rows = z.size() / d;
    Vec<Scalar> y(z.size());
    for (Index r = 0; r < rows; ++r) {
        Vec<Scalar> zr = z.value().segment(r * d, d) / temperature;
        const Scalar m = zr.maxCoeff();
        const Scalar lse = m + std::log((zr - m).exp().sum());
        y.segment(r * d, d) = zr - lse;
    }
    return Tensor<Scalar>::from_op("log_softmax", z.shape(), std::move(y), {z},
                                   [rows, d, temperature](detail::Node<Scalar>& self) {
                                       if (auto* g = detail::grad_of(self, 0))
                                           for (Index r = 0; r < rows; ++r) {
                                               auto p = self.value.segment(r * d, d).exp();
                                               auto gr = self.grad.segment(r * d, d);
                                               g->segment(r * d, d) += (gr - p * gr.sum()) / temperature;
                                           }
                                   });
}

// ---------------------------------------------------------------------------
// Normalization, dropout
// ---------------------------------------------------------------------------

/// Per-row layer normalization of x [rows x d] with learned gain and bias [d].
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain, const Tensor<Scalar>& bias,
                          Scalar eps = Scalar(1e-5)) {
    detail::require_rank("layer_norm", x, 2);
    const Index rows = x.dim(0), d = x.dim(1);
    if (gain.size() != d || bias.size() != d)
        throw DimensionError("layer_norm: gain/bias must have " + std::to_string(d) + " entries");
    Vec<Scalar> xhat(x.size()), y(x.size()), inv_std(rows);
    for (Index r = 0; r < rows; ++r) {
        auto xr = x.value().segment(r * d, d);
        const Scalar mu = xr.mean();
        const Scalar var = (xr - mu).square().mean();
        inv_std(r) = Scalar(1) / std::sqrt(var + eps);
        xhat.segment(r * d, d) = (xr - mu) * inv_std(r);
        y.segment(r * d, d) = xhat.segment(r * d, d) * gain.value() + bias.value();
    }
    return Tensor<Scalar>::from_op(
        "layer_norm", x.shape(), std::move(y), {x, gain, bias},
        [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node<Scalar>& self) {
            const auto& gamma = self.inputs[1]->value;
            auto* gx = detail::grad_of(self, 0);
            auto* gg = detail::grad_of(self, 1);
            auto* gb = detail::grad_of(self, 2);
            for (Index r = 0; r < rows; ++r) {
                auto dy = self.grad.segment(r * d, d);
                auto xh = xhat.segment(r * d, d);
                if (gg) *gg += dy * xh;
                if (gb) *gb += dy;
                if (gx) {
                    Vec<Scalar> dxh = dy * gamma;
                    const Scalar m1 = dxh.mean();
                    const Scalar m2 = (dxh * xh).mean();
                    gx->segment(r * d, d) += inv_std(r) * (dxh - m1 - xh * m2);
                }
            }
        });
}

/// Inverted dropout. Train mode zeroes each element with probability p and
/// scales survivors by 1/(1-p); eval mode (or p == 0) returns x unchanged.
template <typename Scalar>
Tensor<Scalar> dropout(const Tensor<Scalar>& x, double p, Mode mode, CounterRng& rng) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(p));
    if (mode == Mode::eval || p == 0.0) return x;
    const Scalar keep = static_cast<Scalar>(1.0 / (1.0 - p));
    Vec<Scalar> mask(x.size());
    for (Index i = 0; i < mask.size(); ++i) mask(i) = rng.uniform() < p ? Scalar(0) : keep;
    Vec<Scalar> y = x.value() * mask;
    return Tensor<Scalar>::from_op("dropout", x.shape(), std::move(y), {x},
                                   [mask = std::move(mask)](detail::Node<Scalar>& self) {
                                       if (auto* g = detail::grad_of(self, 0)) *g += self.grad * mask;
                                   });
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

struct Conv3dSpec {
    std::array<Index, 3> stride{1, 1, 1};   // (t, h, w)
    std::array<Index, 3> padding{0, 0, 0};  // symmetric zero padding
};

/// Cross-correlation over (T, H, W) of x [T x H x W x Cin] with kernels
/// [KT x KH x KW x Cin x Cout] plus optional bias [Cout]. Computed as an
/// im2col gather followed by one dense product.
template <typename Scalar>
Tensor<Scalar> conv3d(const Tensor<Scalar>& x, const Tensor<Scalar>& kernels, const Tensor<Scalar>& bias,
                      const Conv3dSpec& spec) {
    detail::require_rank("conv3d input", x, 4);
    detail::require_rank("conv3d kernels", kernels, 5);
    for (int a = 0; a < 3; ++a) {
        if (spec.stride[a] < 1) throw ConfigError("conv3d: stride must be >= 1");
        if (spec.padding[a] < 0) throw ConfigError("conv3d: padding must be >= 0");
        if (kernels.dim(a) > x.dim(a) + 2 * spec.padding[a])
            throw ConfigError("conv3d: kernel extent " + std::to_string(kernels.dim(a)) +
                              " exceeds padded input extent on axis " + std::to_string(a));
    }
    const Index cin = x.dim(3), cout = kernels.dim(4);
    if (kernels.dim(3) != cin)
        throw DimensionError("conv3d: input has " + std::to_string(cin) + " channels, kernels expect " +
                             std::to_string(kernels.dim(3)));
    if (bias.defined() && bias.size() != cout) throw DimensionError("conv3d: bias must have Cout entries");

    const std::array<Index, 3> in{x.dim(0), x.dim(1), x.dim(2)};
    const std::array<Index, 3> k{kernels.dim(0), kernels.dim(1), kernels.dim(2)};
    std::array<Index, 3> out{};
    for (int a = 0; a < 3; ++a) out[a] = (in[a] + 2 * spec.padding[a] - k[a]) / spec.stride[a] + 1;
    const Index rows = out[0] * out[1] * out[2];
    const Index cols = k[0] * k[1] * k[2] * cin;

    // Row r of `cols_map` lists, for output voxel r, the flat input offset of
    // each kernel tap's first channel (or -1 for a padded tap).
    std::vector<Index> tap_offsets(static_cast<std::size_t>(rows * k[0] * k[1] * k[2]));
    {
        std::size_t idx = 0;
        for (Index ot = 0; ot < out[0]; ++ot)
            for (Index oh = 0; oh < out[1]; ++oh)
                for (Index ow = 0; ow < out[2]; ++ow)
                    for (Index kt = 0; kt < k[0]; ++kt)
                        for (Index kh = 0; kh < k[1]; ++kh)
                            for (Index kw = 0; kw < k[2]; ++kw) {
                                const Index it = ot * spec.stride[0] - spec.padding[0] + kt;
                                const Index ih = oh * spec.stride[1] - spec.padding[1] + kh;
                                const Index iw = ow * spec.stride[2] - spec.padding[2] + kw;
                                const bool inside = it >= 0 && it < in[0] && ih >= 0 && ih < in[1] && iw >= 0 &&
                                                    iw < in[2];
                                tap_offsets[idx++] = inside ? ((it * in[1] + ih) * in[2] + iw) * cin : -1;
                            }
    }
    const Index taps = k[0] * k[1] * k[2];

    RowMatrix<Scalar> patches(rows, cols);
    const Scalar* xv = x.value().data();
    for (Index r = 0; r < rows; ++r) {
        Scalar* dst = patches.row(r).data();
        for (Index t = 0; t < taps; ++t) {
            const Index off = tap_offsets[static_cast<std::size_t>(r * taps + t)];
            if (off < 0)
                std::fill(dst + t * cin, dst + (t + 1) * cin, Scalar(0));
            else
                std::copy(xv + off, xv + off + cin, dst + t * cin);
        }
    }

    Vec<Scalar> y(rows * cout);
    Eigen::Map<RowMatrix<Scalar>> ym(y.data(), rows, cout);
    ym.noalias() = patches * Eigen::Map<const RowMatrix<Scalar>>(kernels.value().data(), cols, cout);
    if (bias.defined()) ym.rowwise() += bias.value().matrix().transpose();

    std::vector<Tensor<Scalar>> inputs{x, kernels};
    if (bias.defined()) inputs.push_back(bias);
    return Tensor<Scalar>::from_op(
        "conv3d", {out[0], out[1], out[2], cout}, std::move(y), inputs,
        [rows, cols, cout, cin, taps, tap_offsets = std::move(tap_offsets),
         patches = std::move(patches)](detail::Node<Scalar>& self) {
            Eigen::Map<const RowMatrix<Scalar>> dy(self.grad.data(), rows, cout);
            if (auto* g = detail::grad_of(self, 1))
                Eigen::Map<RowMatrix<Scalar>>(g->data(), cols, cout).noalias() += patches.transpose() * dy;
            if (self.inputs.size() > 2)
                if (auto* g = detail::grad_of(self, 2)) g->matrix() += dy.colwise().sum().transpose();
            if (auto* g = detail::grad_of(self, 0)) {
                const RowMatrix<Scalar> dpatches =
                    dy * Eigen::Map<const RowMatrix<Scalar>>(self.inputs[1]->value.data(), cols, cout).transpose();
                Scalar* gx = g->data();
                for (Index r = 0; r < rows; ++r) {
                    const Scalar* src = dpatches.row(r).data();
                    for (Index t = 0; t < taps; ++t) {
                        const Index off = tap_offsets[static_cast<std::size_t>(r * taps + t)];
                        if (off < 0) continue;
                        for (Index c = 0; c < cin; ++c) gx[off + c] += src[t * cin + c];
                    }
                }
            }
        });
}

/// Depthwise temporal convolution: x [N x C], kernels [KS x C] (odd KS),
/// bias [C], zero "same" padding so the output keeps N rows.
template <typename Scalar>
Tensor<Scalar> depthwise_conv1d(const Tensor<Scalar>& x, const Tensor<Scalar>& kernels, const Tensor<Scalar>& bias) {
    detail::require_rank("depthwise_conv1d", x, 2);
    detail::require_rank("depthwise_conv1d kernels", kernels, 2);
    const Index n = x.dim(0), c = x.dim(1), ks = kernels.dim(0);
    if (kernels.dim(1) != c || bias.size() != c) throw DimensionError("depthwise_conv1d: channel mismatch");
    if (ks % 2 == 0) throw ConfigError("depthwise_conv1d: kernel size must be odd");
    const Index pad = ks / 2;
    auto xm = x.matrix();
    auto km = kernels.matrix();
    Vec<Scalar> y(n * c);
    Eigen::Map<RowMatrix<Scalar>> ym(y.data(), n, c);
    for (Index t = 0; t < n; ++t) {
        ym.row(t) = bias.value().matrix().transpose();
        for (Index j = 0; j < ks; ++j) {
            const Index s = t + j - pad;
            if (s >= 0 && s < n) ym.row(t).array() += xm.row(s).array() * km.row(j).array();
        }
    }
    return Tensor<Scalar>::from_op("depthwise_conv1d", {n, c}, std::move(y), {x, kernels, bias},
                                   [n, c, ks, pad](detail::Node<Scalar>& self) {
                                       Eigen::Map<const RowMatrix<Scalar>> dy(self.grad.data(), n, c);
                                       Eigen::Map<const RowMatrix<Scalar>> xm(self.inputs[0]->value.data(), n, c);
                                       Eigen::Map<const RowMatrix<Scalar>> km(self.inputs[1]->value.data(), ks, c);
                                       auto* gx = detail::grad_of(self, 0);
                                       auto* gk = detail::grad_of(self, 1);
                                       if (auto* gb = detail::grad_of(self, 2)) gb->matrix() += dy.colwise().sum().transpose();
                                       for (Index t = 0; t < n; ++t)
                                           for (Index j = 0; j < ks; ++j) {
                                               const Index s = t + j - pad;
                                               if (s < 0 || s >= n) continue;
                                               if (gx)
                                                   Eigen::Map<RowMatrix<Scalar>>(gx->data(), n, c).row(s).array() +=
                                                       dy.row(t).array() * km.row(j).array();
                                               if (gk)
                                                   Eigen::Map<RowMatrix<Scalar>>(gk->data(), ks, c).row(j).array() +=
                                                       dy.row(t).array() * xm.row(s).array();
                                           }
                                   });
}

/// Per-coordinate outer scaling: out[t, j, e] = boxes[t, j] * weight[j, e] + bias,
/// with boxes [N x J], weight [J x E] and a scalar bias [1].
template <typename Scalar>
Tensor<Scalar> coordinate_embed(const Tensor<Scalar>& boxes, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias) {
    detail::require_rank("coordinate_embed", boxes, 2);
    detail::require_rank("coordinate_embed weight", weight, 2);
    const Index n = boxes.dim(0), j = boxes.dim(1), e = weight.dim(1);
    if (weight.dim(0) != j) throw DimensionError("coordinate_embed: weight rows must equal box coordinates");
    if (bias.size() != 1) throw DimensionError("coordinate_embed: bias must be a scalar");
    Vec<Scalar> y(n * j * e);
    const Scalar b = bias.value()(0);
    for (Index t = 0; t < n; ++t)
        for (Index c = 0; c < j; ++c)
            y.segment((t * j + c) * e, e) = boxes.value()(t * j + c) * weight.value().segment(c * e, e) + b;
    return Tensor<Scalar>::from_op("coordinate_embed", {n, j, e}, std::move(y), {boxes, weight, bias},
                                   [n, j, e](detail::Node<Scalar>& self) {
                                       const auto& bv = self.inputs[0]->value;
                                       const auto& wv = self.inputs[1]->value;
                                       auto* gB = detail::grad_of(self, 0);
                                       auto* gW = detail::grad_of(self, 1);
                                       auto* gb = detail::grad_of(self, 2);
                                       for (Index t = 0; t < n; ++t)
                                           for (Index c = 0; c < j; ++c) {
                                               auto dy = self.grad.segment((t * j + c) * e, e);
                                               if (gB) (*gB)(t * j + c) += (dy * wv.segment(c * e, e)).sum();
                                               if (gW) gW->segment(c * e, e) += dy * bv(t * j + c);
                                           }
                                       if (gb) (*gb)(0) += self.grad.sum();
                                   });
}

}  // namespace vrpcp
