#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vrpcp/errors.hpp"
#include "vrpcp/ops.hpp"
#include "vrpcp/parameters.hpp"
#include "vrpcp/teacher.hpp"

namespace vrpcp {

enum class StudentVariant { attn_lite, residual_mlp, sep_conv1d };

inline std::string to_string(StudentVariant v) {
    switch (v) {
        case StudentVariant::attn_lite: return "attn_lite";
        case StudentVariant::residual_mlp: return "residual_mlp";
        case StudentVariant::sep_conv1d: return "sep_conv1d";
    }
    return "attn_lite";
}

inline StudentVariant parse_variant(const std::string& s) {
    for (auto v : {StudentVariant::attn_lite, StudentVariant::residual_mlp, StudentVariant::sep_conv1d})
        if (s == to_string(v)) return v;
    throw ConfigError("unknown student variant '" + s + "' (expected attn_lite, residual_mlp or sep_conv1d)");
}

inline constexpr std::array<StudentVariant, 3> kAllVariants{StudentVariant::attn_lite, StudentVariant::residual_mlp,
                                                            StudentVariant::sep_conv1d};

/// Upper bound on the trainable parameter count of each variant.
inline Index parameter_budget(StudentVariant v) {
    switch (v) {
        case StudentVariant::attn_lite: return 120'000;
        case StudentVariant::residual_mlp: return 250'000;
        case StudentVariant::sep_conv1d: return 80'000;
    }
    return 0;
}

inline constexpr Index kEmbedDim = 64;

struct StudentConfig {
    StudentVariant variant = StudentVariant::attn_lite;
    Index n_frames = 16;  // residual_mlp flattens the track, so its input length is fixed
    double dropout = 0.5;
    bool operator==(const StudentConfig&) const = default;
};

template <typename Scalar>
struct StudentOutput {
    Tensor<Scalar> feature;        // h, [128], nonnegative
    Tensor<Scalar> logits;         // z, [2]
    Tensor<Scalar> probabilities;  // softmax(z)
    std::vector<Tensor<Scalar>> attention;  // attn_lite only: one [N x N] map per block
};

template <typename Scalar>
struct LayerNormParams {
    Tensor<Scalar> gain, bias;
    static LayerNormParams init(Index d) { return {constant_parameter<Scalar>({d}, Scalar(1)), zero_parameter<Scalar>({d})}; }
    Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return layer_norm(x, gain, bias); }
    void collect(NamedParameters<Scalar>& out, const std::string& prefix) const {
        out.emplace_back(prefix + ".gain", gain);
        out.emplace_back(prefix + ".bias", bias);
    }
};

/// Box-only student: per-coordinate embedding, a small sequence backbone,
/// a softplus-rectified 128-d feature and the same classifier head shape as
/// the teacher. The forward pass accepts nothing but the box track.
template <typename Scalar>
class Student {
public:
    static Student create(const StudentConfig& config, std::uint64_t seed) {
        CounterRng rng(seed, 0x57D);
        Student s;
        s.config_ = config;
        s.embed_weight_ = uniform_parameter<Scalar>({4, kEmbedDim}, std::sqrt(3.0), rng);
        s.embed_bias_ = zero_parameter<Scalar>({1});
        const Index flat = 4 * kEmbedDim;
        switch (config.variant) {
            case StudentVariant::attn_lite: {
                s.token_ = Linear<Scalar>::init(flat, 64, rng);
                s.token_delta_ = Linear<Scalar>::init(flat, 64, rng);
                for (int b = 0; b < 2; ++b) {
                    Block blk;
                    blk.norm1 = LayerNormParams<Scalar>::init(64);
                    blk.q = Linear<Scalar>::init(64, 64, rng, false);
                    blk.k = Linear<Scalar>::init(64, 64, rng, false);
                    blk.v = Linear<Scalar>::init(64, 64, rng, false);
                    blk.o = Linear<Scalar>::init(64, 64, rng, false);
                    blk.norm2 = LayerNormParams<Scalar>::init(64);
                    blk.fc1 = Linear<Scalar>::init(64, 64, rng);
                    blk.fc2 = Linear<Scalar>::init(64, 64, rng);
                    s.blocks_.push_back(blk);
                }
                s.final_norm_ = LayerNormParams<Scalar>::init(64);
                s.project_ = Linear<Scalar>::init(128, kFeatureDim, rng);
                break;
            }
            case StudentVariant::residual_mlp: {
                constexpr Index width = 96;
                s.token_ = Linear<Scalar>::init(flat, 24, rng);
                s.token_delta_ = Linear<Scalar>::init(flat, 24, rng);
                s.flatten_ = Linear<Scalar>::init(24 * config.n_frames, width, rng);
                for (int b = 0; b < 4; ++b) {
                    Block blk;
                    blk.norm1 = LayerNormParams<Scalar>::init(width);
                    blk.fc1 = Linear<Scalar>::init(width, width, rng);
                    blk.fc2 = Linear<Scalar>::init(width, width, rng);
                    s.blocks_.push_back(blk);
                }
                s.project_ = Linear<Scalar>::init(width, kFeatureDim, rng);
                break;
            }
            case StudentVariant::sep_conv1d: {
                constexpr Index channels = 48;
                s.token_ = Linear<Scalar>::init(flat, channels, rng);
                s.token_delta_ = Linear<Scalar>::init(flat, channels, rng);
                for (int b = 0; b < 3; ++b) {
                    Block blk;
                    blk.depthwise = uniform_parameter<Scalar>({3, channels}, std::sqrt(2.0), rng);
                    blk.depthwise_bias = zero_parameter<Scalar>({channels});
                    blk.fc1 = Linear<Scalar>::init(channels, channels, rng);
                    s.blocks_.push_back(blk);
                }
                s.project_ = Linear<Scalar>::init(2 * channels, kFeatureDim, rng);
                break;
            }
        }
        s.cls1_ = Linear<Scalar>::init(kFeatureDim, 64, rng);
        s.cls2_ = Linear<Scalar>::init(64, 2, rng);
        return s;
    }

    const StudentConfig& config() const { return config_; }
    StudentVariant variant() const { return config_.variant; }

    NamedParameters<Scalar> parameters() const {
        NamedParameters<Scalar> p;
        p.emplace_back("embed.weight", embed_weight_);
        p.emplace_back("embed.bias", embed_bias_);
        token_.collect(p, "backbone.token");
        token_delta_.collect(p, "backbone.token_delta");
        if (flatten_.weight.defined()) flatten_.collect(p, "backbone.flatten");
        for (std::size_t b = 0; b < blocks_.size(); ++b) blocks_[b].collect(p, "backbone.block" + std::to_string(b + 1));
        if (final_norm_.gain.defined()) final_norm_.collect(p, "backbone.final_norm");
        project_.collect(p, "project");
        cls1_.collect(p, "classifier.fc1");
        cls2_.collect(p, "classifier.fc2");
        return p;
    }

    /// [N x 4] -> [N x 4 x 64].
    Tensor<Scalar> embed(const Tensor<Scalar>& boxes) const {
        if (boxes.rank() != 2 || boxes.dim(1) != 4 || boxes.dim(0) < 2)
            throw DimensionError("box track must be [N x 4] with N >= 2, got " + shape_string(boxes.shape()));
        return coordinate_embed(boxes, embed_weight_, embed_bias_);
    }

    /// Fixed-length backbone feature from the embedded track.
    Tensor<Scalar> backbone(const Tensor<Scalar>& embedded, std::vector<Tensor<Scalar>>* attention = nullptr) const {
        const Index n = embedded.dim(0);
        const Tensor<Scalar> x = reshape(embedded, {n, 4 * kEmbedDim});
        switch (config_.variant) {
            case StudentVariant::attn_lite: return attn_lite(x, attention);
            case StudentVariant::residual_mlp: return residual_mlp(x);
            case StudentVariant::sep_conv1d: return sep_conv1d(x);
        }
        throw ConfigError("unknown student variant");
    }

    StudentOutput<Scalar> forward(const Tensor<Scalar>& boxes, Mode mode, CounterRng* rng) const {
        StudentOutput<Scalar> out;
        out.feature = softplus(project_(backbone(embed(boxes), &out.attention)));
        Tensor<Scalar> x = relu(cls1_(out.feature));
        if (mode == Mode::train) {
            if (rng == nullptr) throw ContractError("training-mode classifier needs a dropout generator");
            x = dropout(x, config_.dropout, mode, *rng);
        }
        out.logits = cls2_(x);
        out.probabilities = softmax(out.logits);
        return out;
    }

    template <typename To>
    Student<To> cast() const {
        Student<To> s = Student<To>::create(config_, 0);
        auto dst = s.parameters();
        copy_parameter_values(dst, parameters());
        return s;
    }

private:
    struct Block {
        LayerNormParams<Scalar> norm1, norm2;
        Linear<Scalar> q, k, v, o, fc1, fc2;
        Tensor<Scalar> depthwise, depthwise_bias;

        void collect(NamedParameters<Scalar>& out, const std::string& prefix) const {
            if (norm1.gain.defined()) norm1.collect(out, prefix + ".norm1");
            if (q.weight.defined()) {
                q.collect(out, prefix + ".q");
                k.collect(out, prefix + ".k");
                v.collect(out, prefix + ".v");
                o.collect(out, prefix + ".o");
            }
            if (norm2.gain.defined()) norm2.collect(out, prefix + ".norm2");
            if (depthwise.defined()) {
                out.emplace_back(prefix + ".depthwise.kernel", depthwise);
                out.emplace_back(prefix + ".depthwise.bias", depthwise_bias);
            }
            fc1.collect(out, prefix + ".fc1");
            if (fc2.weight.defined()) fc2.collect(out, prefix + ".fc2");
        }
    };

    // Per-frame tokens from the embedded frame and its offset from the last frame.
    Tensor<Scalar> tokens(const Tensor<Scalar>& x) const { return token_(x) + token_delta_(offset_from_last(x) * Scalar(kBoxOffsetGain)); }

    // Readout: last step concatenated with the temporal mean.
    static Tensor<Scalar> last_and_mean(const Tensor<Scalar>& x) {
        return concat<Scalar>({row(x, x.dim(0) - 1), global_avg_pool(x, 0, 1)});
    }

    Tensor<Scalar> attn_lite(const Tensor<Scalar>& x, std::vector<Tensor<Scalar>>* attention) const {
        Tensor<Scalar> h = tokens(x);
        const Scalar inv_sqrt_d = Scalar(1) / std::sqrt(Scalar(64));
        for (const auto& blk : blocks_) {
            const Tensor<Scalar> a = blk.norm1(h);
            const Tensor<Scalar> weights = softmax(matmul(blk.q(a), transpose(blk.k(a))) * inv_sqrt_d);
            if (attention) attention->push_back(weights);
            h = h + blk.o(matmul(weights, blk.v(a)));
            h = h + blk.fc2(relu(blk.fc1(blk.norm2(h))));
        }
        return last_and_mean(final_norm_(h));
    }

    Tensor<Scalar> residual_mlp(const Tensor<Scalar>& x) const {
        if (x.dim(0) != config_.n_frames)
            throw DimensionError("residual_mlp expects " + std::to_string(config_.n_frames) + " frames, got " +
                                 std::to_string(x.dim(0)));
        const Tensor<Scalar> t = relu(tokens(x));
        Tensor<Scalar> h = relu(flatten_(reshape(t, {t.size()})));
        h = reshape(h, {1, h.size()});
        for (const auto& blk : blocks_) h = h + blk.fc2(relu(blk.fc1(blk.norm1(h))));
        return reshape(h, {h.size()});
    }

    Tensor<Scalar> sep_conv1d(const Tensor<Scalar>& x) const {
        Tensor<Scalar> h = relu(tokens(x));
        for (const auto& blk : blocks_) h = h + relu(blk.fc1(depthwise_conv1d(h, blk.depthwise, blk.depthwise_bias)));
        return last_and_mean(h);
    }

    StudentConfig config_;
    Tensor<Scalar> embed_weight_, embed_bias_;
    Linear<Scalar> token_, token_delta_, flatten_;
    std::vector<Block> blocks_;
    LayerNormParams<Scalar> final_norm_;
    Linear<Scalar> project_;
    Linear<Scalar> cls1_, cls2_;
};

}  // namespace vrpcp
