#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "vrpcp/errors.hpp"
#include "vrpcp/ops.hpp"
#include "vrpcp/parameters.hpp"
#include "vrpcp/preprocess.hpp"
#include "vrpcp/tensor.hpp"

namespace vrpcp {

inline constexpr Index kFeatureDim = 128;
/// Scale applied to last-frame box offsets before the box pathways.
inline constexpr double kBoxOffsetGain = 10.0;

/// Which pixel streams feed the teacher; the box stream is always on.
/// Disabled streams are encoded from all-zero clips.
struct StreamSet {
    bool context = true;  // local context crop (LC)
    bool full = true;     // global context, whole frame (GC)
    bool motion = true;   // local motion (LM)

    bool operator==(const StreamSet&) const = default;
    std::string name() const;
    static StreamSet parse(const std::string& name);
    static std::vector<StreamSet> table_rows();
};

inline std::string StreamSet::name() const {
    std::string s = "BB";
    if (context) s += "&LC";
    if (full) s += "&GC";
    if (motion) s += "&LM";
    return s;
}

inline StreamSet StreamSet::parse(const std::string& name) {
    for (const auto& s : table_rows())
        if (s.name() == name) return s;
    if (name == "all") return {};
    throw ConfigError("unknown stream set '" + name + "' (expected BB, BB&LC, BB&LC&GC or BB&LC&GC&LM)");
}

inline std::vector<StreamSet> StreamSet::table_rows() {
    return {{false, false, false}, {true, false, false}, {true, true, false}, {true, true, true}};
}

struct TeacherConfig {
    Index clip_size = 32;        // spatial extent of every pixel stream
    Index encoder_hidden = 2048;  // width of the encoder's hidden FC layer
    std::array<Index, 3> conv_channels{8, 16, 32};
    double dropout = 0.5;
    StreamSet streams{};

    bool operator==(const TeacherConfig&) const = default;
};

template <typename Scalar>
struct AttentionResult {
    Tensor<Scalar> output;   // [128]
    Tensor<Scalar> weights;  // [K], sums to one
};

/// Attention fusion cell over K feature columns: the last column queries all
/// columns through a bilinear form, and the attended mixture is concatenated
/// with the query before a tanh projection.
template <typename Scalar>
struct AttentionCell {
    Tensor<Scalar> query_map;  // [128 x 128]
    Linear<Scalar> project;    // [256 -> 128], no bias

    static AttentionCell init(CounterRng& rng) {
        AttentionCell c;
        c.query_map = uniform_parameter<Scalar>({kFeatureDim, kFeatureDim}, std::sqrt(3.0 / kFeatureDim), rng);
        c.project = Linear<Scalar>::init(2 * kFeatureDim, kFeatureDim, rng, false);
        return c;
    }

    /// items: [K x 128], one feature per row; the last row is the query.
    AttentionResult<Scalar> operator()(const Tensor<Scalar>& items) const {
        if (items.rank() != 2 || items.dim(1) != kFeatureDim)
            throw DimensionError("attention cell expects [K x 128] items, got " + shape_string(items.shape()));
        const Index k = items.dim(0);
        const Tensor<Scalar> last = slice(items, k - 1, 1);                              // [1 x 128]
        const Tensor<Scalar> scores = matmul(matmul(last, query_map), transpose(items));  // [1 x K]
        const Tensor<Scalar> weights = softmax(scores);
        const Tensor<Scalar> attended = matmul(weights, items);                           // [1 x 128]
        const Tensor<Scalar> joined =
            concat<Scalar>({reshape(attended, {kFeatureDim}), reshape(last, {kFeatureDim})});
        return {tanh(project(joined)), reshape(weights, {k})};
    }

    AttentionResult<Scalar> operator()(const std::vector<Tensor<Scalar>>& columns) const {
        if (columns.empty()) throw DimensionError("attention cell needs at least one column (K = 0)");
        return (*this)(stack(columns));
    }

    void collect(NamedParameters<Scalar>& out, const std::string& prefix) const {
        out.emplace_back(prefix + ".query_map", query_map);
        project.collect(out, prefix + ".project");
    }
};

/// Small 3D convnet shared by the full-frame, context and motion streams:
/// three 3x3x3 conv blocks with spatial stride 2 (temporal stride 2 in the
/// last two), temporal average pooling, then two FC layers to 128.
template <typename Scalar>
struct StreamEncoder {
    std::array<Tensor<Scalar>, 3> kernels;
    std::array<Tensor<Scalar>, 3> biases;
    Linear<Scalar> hidden;
    Linear<Scalar> out;
    Index clip_size = 0;

    static Index pooled_extent(Index s) {
        for (int i = 0; i < 3; ++i) s = (s - 1) / 2 + 1;
        return s;
    }

    static StreamEncoder init(const TeacherConfig& cfg, CounterRng& rng) {
        StreamEncoder e;
        e.clip_size = cfg.clip_size;
        Index cin = 3;
        for (int i = 0; i < 3; ++i) {
            const Index cout = cfg.conv_channels[static_cast<std::size_t>(i)];
            e.kernels[static_cast<std::size_t>(i)] =
                uniform_parameter<Scalar>({3, 3, 3, cin, cout}, std::sqrt(6.0 / static_cast<double>(27 * cin)), rng);
            e.biases[static_cast<std::size_t>(i)] = zero_parameter<Scalar>({cout});
            cin = cout;
        }
        const Index p = pooled_extent(cfg.clip_size);
        e.hidden = Linear<Scalar>::init(p * p * cin, cfg.encoder_hidden, rng);
        e.out = Linear<Scalar>::init(cfg.encoder_hidden, kFeatureDim, rng);
        return e;
    }

    /// clip: [T x S x S x 3] -> [128].
    Tensor<Scalar> operator()(const Tensor<Scalar>& clip) const {
        if (clip.rank() != 4 || clip.dim(1) != clip_size || clip.dim(2) != clip_size || clip.dim(3) != 3)
            throw DimensionError("stream encoder expects [T x " + std::to_string(clip_size) + " x " +
                                 std::to_string(clip_size) + " x 3], got " + shape_string(clip.shape()));
        if (clip.dim(0) < 2) throw DimensionError("stream encoder needs at least 2 time steps");
        Tensor<Scalar> x = clip;
        for (std::size_t i = 0; i < 3; ++i) {
            Conv3dSpec spec;
            spec.stride = {i == 0 ? 1 : 2, 2, 2};
            spec.padding = {1, 1, 1};
            x = relu(conv3d(x, kernels[i], biases[i], spec));
        }
        x = global_avg_pool(x, 0, 1);
        x = reshape(x, {x.size()});
        return out(relu(hidden(x)));
    }

    void collect(NamedParameters<Scalar>& dst, const std::string& prefix) const {
        for (std::size_t i = 0; i < 3; ++i) {
            dst.emplace_back(prefix + ".conv" + std::to_string(i + 1) + ".kernel", kernels[i]);
            dst.emplace_back(prefix + ".conv" + std::to_string(i + 1) + ".bias", biases[i]);
        }
        hidden.collect(dst, prefix + ".hidden");
        out.collect(dst, prefix + ".out");
    }
};

/// Teacher inputs as tensors. Undefined tensors mark disabled streams.
template <typename Scalar>
struct TeacherInputs {
    Tensor<Scalar> boxes;    // [N x 4]
    Tensor<Scalar> full;     // [N x S x S x 3]
    Tensor<Scalar> context;  // [N x S x S x 3]
    Tensor<Scalar> motion;   // [(N-1) x S x S x 3], third channel zero
};

template <typename Scalar>
TeacherInputs<Scalar> make_teacher_inputs(const ClipInputs& clip, const StreamSet& streams) {
    const Index n = clip.n_frames, s = clip.patch_size;
    auto to_vec = [](const std::vector<float>& v) {
        Vec<Scalar> out(static_cast<Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Index>(i)) = static_cast<Scalar>(v[i]);
        return out;
    };
    TeacherInputs<Scalar> in;
    in.boxes = Tensor<Scalar>::constant({n, 4}, to_vec(clip.boxes));
    if (streams.full) {
        if (clip.full_size != s) throw ConfigError("teacher streams must share one spatial size");
        in.full = Tensor<Scalar>::constant({n, s, s, 3}, to_vec(clip.full));
    }
    if (streams.context) in.context = Tensor<Scalar>::constant({n, s, s, 3}, to_vec(clip.context));
    if (streams.motion) {
        const Index px = (n - 1) * s * s;
        Vec<Scalar> m = Vec<Scalar>::Zero(px * 3);
        for (Index i = 0; i < px; ++i) {
            m(3 * i) = static_cast<Scalar>(clip.motion[static_cast<std::size_t>(2 * i)]);
            m(3 * i + 1) = static_cast<Scalar>(clip.motion[static_cast<std::size_t>(2 * i + 1)]);
        }
        in.motion = Tensor<Scalar>::constant({n - 1, s, s, 3}, std::move(m));
    }
    return in;
}

template <typename Scalar>
struct TeacherOutput {
    Tensor<Scalar> feature;  // h, [128], in (-1, 1)
    Tensor<Scalar> logits;   // z, [2]
    Tensor<Scalar> temporal_weights;
    std::array<Tensor<Scalar>, 3> fusion_weights;  // innermost first
};

/// Encodings of all-zero clips for the disabled streams, reusable across the
/// examples of one batch.
template <typename Scalar>
struct DisabledStreams {
    Tensor<Scalar> full, context, motion;
};

template <typename Scalar>
class Teacher {
public:
    static Teacher create(const TeacherConfig& config, std::uint64_t seed) {
        CounterRng rng(seed, 0x7EAC);
        Teacher t;
        t.config_ = config;
        t.box1_ = Linear<Scalar>::init(4, 64, rng);
        t.box1_offset_ = Linear<Scalar>::init(4, 64, rng, false);
        t.box2_ = Linear<Scalar>::init(64, kFeatureDim, rng);
        t.box3_ = Linear<Scalar>::init(kFeatureDim, kFeatureDim, rng);
        t.encoder_ = StreamEncoder<Scalar>::init(config, rng);
        t.temporal_ = AttentionCell<Scalar>::init(rng);
        t.fuse_motion_ = AttentionCell<Scalar>::init(rng);
        t.fuse_context_ = AttentionCell<Scalar>::init(rng);
        t.fuse_boxes_ = AttentionCell<Scalar>::init(rng);
        t.cls1_ = Linear<Scalar>::init(kFeatureDim, 64, rng);
        t.cls2_ = Linear<Scalar>::init(64, 2, rng);
        return t;
    }

    const TeacherConfig& config() const { return config_; }

    NamedParameters<Scalar> parameters() const {
        NamedParameters<Scalar> p;
        box1_.collect(p, "boxes.fc1");
        box1_offset_.collect(p, "boxes.fc1_offset");
        box2_.collect(p, "boxes.fc2");
        box3_.collect(p, "boxes.fc3");
        encoder_.collect(p, "encoder");
        temporal_.collect(p, "temporal_att");
        fuse_motion_.collect(p, "fuse_motion");
        fuse_context_.collect(p, "fuse_context");
        fuse_boxes_.collect(p, "fuse_boxes");
        cls1_.collect(p, "classifier.fc1");
        cls2_.collect(p, "classifier.fc2");
        return p;
    }

    /// The one encoder instance behind the full-frame, context and motion
    /// streams.
    const StreamEncoder<Scalar>& encoder() const { return encoder_; }
    const AttentionCell<Scalar>& fusion_cell(int level) const {
        return level == 0 ? fuse_motion_ : (level == 1 ? fuse_context_ : fuse_boxes_);
    }
    const AttentionCell<Scalar>& temporal_cell() const { return temporal_; }
    const Linear<Scalar>& classifier_layer(int i) const { return i == 0 ? cls1_ : cls2_; }

    /// Per-frame box embedding from each box and its offset from the last
    /// box, [N x 4] -> [N x 128].
    Tensor<Scalar> embed_boxes(const Tensor<Scalar>& boxes) const {
        if (boxes.rank() != 2 || boxes.dim(1) != 4 || boxes.dim(0) < 2)
            throw DimensionError("box track must be [N x 4] with N >= 2, got " + shape_string(boxes.shape()));
        return box3_(relu(box2_(relu(box1_(boxes) + box1_offset_(offset_from_last(boxes) * Scalar(kBoxOffsetGain))))));
    }

    Tensor<Scalar> encode_stream(const Tensor<Scalar>& clip) const { return encoder_(clip); }

    AttentionResult<Scalar> temporal_attention(const Tensor<Scalar>& embedded) const {
        if (embedded.rank() != 2 || embedded.dim(0) < 2)
            throw DimensionError("temporal attention needs at least 2 frames");
        return temporal_(embedded);
    }

    /// Nested fusion from global to local: motion with full frame, then the
    /// context, then the box feature as the final query.
    std::array<AttentionResult<Scalar>, 3> fuse(const Tensor<Scalar>& f_boxes, const Tensor<Scalar>& f_context,
                                                const Tensor<Scalar>& f_motion, const Tensor<Scalar>& f_full) const {
        auto inner = fuse_motion_(std::vector<Tensor<Scalar>>{f_full, f_motion});
        auto middle = fuse_context_(std::vector<Tensor<Scalar>>{inner.output, f_context});
        auto outer = fuse_boxes_(std::vector<Tensor<Scalar>>{middle.output, f_boxes});
        return {inner, middle, outer};
    }

    /// Classifier head. Global average pooling over a 128-d vector is the
    /// identity, so the head starts at the first FC layer.
    Tensor<Scalar> classify(const Tensor<Scalar>& h, Mode mode, CounterRng* rng) const {
        Tensor<Scalar> x = relu(cls1_(h));
        if (mode == Mode::train) {
            if (rng == nullptr) throw ContractError("training-mode classifier needs a dropout generator");
            x = dropout(x, config_.dropout, mode, *rng);
        }
        return cls2_(x);
    }

    DisabledStreams<Scalar> disabled_encodings(Index n_frames) const {
        const Index s = config_.clip_size;
        DisabledStreams<Scalar> d;
        if (!config_.streams.full) d.full = encoder_(Tensor<Scalar>::zeros({n_frames, s, s, 3}));
        if (!config_.streams.context) d.context = encoder_(Tensor<Scalar>::zeros({n_frames, s, s, 3}));
        if (!config_.streams.motion) d.motion = encoder_(Tensor<Scalar>::zeros({n_frames - 1, s, s, 3}));
        return d;
    }

    TeacherOutput<Scalar> forward(const TeacherInputs<Scalar>& in, Mode mode, CounterRng* rng,
                                  const DisabledStreams<Scalar>* disabled = nullptr) const {
        const auto temporal = temporal_attention(embed_boxes(in.boxes));
        std::optional<DisabledStreams<Scalar>> own;
        const auto& streams = config_.streams;
        if (disabled == nullptr && (!streams.full || !streams.context || !streams.motion)) {
            own = disabled_encodings(in.boxes.dim(0));
            disabled = &*own;
        }
        auto pick = [&](bool on, const Tensor<Scalar>& x, const Tensor<Scalar>& off, const char* name) {
            if (!on) return off;
            if (!x.defined()) throw ContractError(std::string("teacher stream '") + name + "' is enabled but missing");
            return encoder_(x);
        };
        const DisabledStreams<Scalar> none;
        const auto& off = disabled ? *disabled : none;
        const Tensor<Scalar> f_full = pick(streams.full, in.full, off.full, "full");
        const Tensor<Scalar> f_context = pick(streams.context, in.context, off.context, "context");
        const Tensor<Scalar> f_motion = pick(streams.motion, in.motion, off.motion, "motion");
        const auto fused = fuse(temporal.output, f_context, f_motion, f_full);
        TeacherOutput<Scalar> out;
        out.feature = fused[2].output;
        out.logits = classify(out.feature, mode, rng);
        out.temporal_weights = temporal.weights;
        out.fusion_weights = {fused[0].weights, fused[1].weights, fused[2].weights};
        return out;
    }

    /// Same architecture and values at another precision.
    template <typename To>
    Teacher<To> cast() const {
        Teacher<To> t = Teacher<To>::create(config_, 0);
        auto dst = t.parameters();
        copy_parameter_values(dst, parameters());
        return t;
    }

private:
    TeacherConfig config_;
    Linear<Scalar> box1_, box1_offset_, box2_, box3_;
    StreamEncoder<Scalar> encoder_;
    AttentionCell<Scalar> temporal_, fuse_motion_, fuse_context_, fuse_boxes_;
    Linear<Scalar> cls1_, cls2_;
};

}  // namespace vrpcp
