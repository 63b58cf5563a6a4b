#include "vrpcp/run_config.hpp"

#include <json.hpp>

#include "vrpcp/bytes.hpp"
#include "vrpcp/errors.hpp"

namespace vrpcp {

using nlohmann::json;

namespace {

const char* motion_name(MotionSource m) { return m == MotionSource::ground_truth ? "ground_truth" : "frame_difference"; }

MotionSource parse_motion(const std::string& s) {
    if (s == "frame_difference") return MotionSource::frame_difference;
    if (s == "ground_truth") return MotionSource::ground_truth;
    throw ConfigError("unknown motion source '" + s + "' (expected frame_difference or ground_truth)");
}

json hashed_fields(const RunConfig& c) {
    const auto& d = c.distill;
    return json{
        {"seed", c.seed},
        {"domain", to_string(c.domain)},
        {"frame_size", {c.frame_size.height, c.frame_size.width}},
        {"n_crossing", c.n_crossing},
        {"n_noncrossing", c.n_noncrossing},
        {"virtual_train_fraction", c.virtual_train_fraction},
        {"virtual_val_fraction", c.virtual_val_fraction},
        {"real_train_fraction", c.real_train_fraction},
        {"real_val_fraction", c.real_val_fraction},
        {"teacher_streams", c.teacher.streams.name()},
        {"teacher_clip_size", c.teacher.clip_size},
        {"teacher_encoder_hidden", c.teacher.encoder_hidden},
        {"teacher_conv_channels", c.teacher.conv_channels},
        {"teacher_dropout", c.teacher.dropout},
        {"variant", to_string(c.student.variant)},
        {"student_dropout", c.student.dropout},
        {"student_profile", c.student_profile},
        {"student_epochs", c.student_epochs ? json(*c.student_epochs) : json(nullptr)},
        {"temperature", d.temperature},
        {"lambda_response", d.weights.response},
        {"lambda_feature", d.weights.feature},
        {"lambda_task", d.weights.task},
        {"teacher_lr", d.adam.lr},
        {"student_lr", d.student_lr},
        {"beta1", d.adam.beta1},
        {"beta2", d.adam.beta2},
        {"adam_eps", d.adam.eps},
        {"teacher_epochs", d.teacher_epochs},
        {"batch_size", d.batch_size},
        {"n_frames", d.clip.n_frames},
        {"ttc", d.clip.ttc},
        {"context_scale", d.clip.context_scale},
        {"motion", motion_name(d.clip.motion)},
        {"window_stride", d.window_stride},
        {"teacher_max_positive", d.teacher_windows.max_positive},
        {"teacher_max_negative", d.teacher_windows.max_negative},
        {"eq7_literal", d.eq7_literal},
    };
}

template <typename T>
T get_as(const json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type (" + std::string(v.type_name()) + ")");
    }
}

}  // namespace

int profile_student_epochs(const std::string& profile) {
    if (profile == "pie_like") return 60;
    if (profile == "jaad_like") return 120;
    throw ConfigError("unknown student profile '" + profile + "' (expected pie_like or jaad_like)");
}

void RunConfig::validate() const {
    if (frame_size.height < 16 || frame_size.width < 16) throw ConfigError("frame_size must be at least 16x16");
    if (n_crossing < 1 || n_noncrossing < 1) throw ConfigError("n_crossing and n_noncrossing must be >= 1");
    for (double f : {virtual_train_fraction, virtual_val_fraction, real_train_fraction, real_val_fraction})
        if (f < 0.0 || f > 1.0) throw ConfigError("split fractions must lie in [0, 1]");
    if (virtual_train_fraction + virtual_val_fraction > 1.0 || real_train_fraction + real_val_fraction > 1.0)
        throw ConfigError("train and validation fractions must sum to at most 1");
    if (teacher.clip_size < 8) throw ConfigError("teacher_clip_size must be >= 8");
    if (teacher.dropout < 0.0 || teacher.dropout >= 1.0 || student.dropout < 0.0 || student.dropout >= 1.0)
        throw ConfigError("dropout must lie in [0, 1)");
    profile_student_epochs(student_profile);
    if (distill.clip.full_size != teacher.clip_size || distill.clip.patch_size != teacher.clip_size)
        throw ConfigError("clip sizes must equal teacher_clip_size");
    if (student.n_frames != distill.clip.n_frames) throw ConfigError("student and clip observation lengths differ");
    resolved_distill().validate();
}

DistillConfig RunConfig::resolved_distill() const {
    DistillConfig d = distill;
    d.student_epochs = student_epochs ? *student_epochs : profile_student_epochs(student_profile);
    return d;
}

ExportConfig RunConfig::export_config(Domain d) const {
    ExportConfig e;
    e.n_crossing = n_crossing;
    e.n_noncrossing = n_noncrossing;
    e.domain = d;
    e.base_seed = combine_seed(seed, d == Domain::virtual_ ? 0x7631 : 0x7032);
    e.frame_size = frame_size;
    return e;
}

std::string RunConfig::to_json() const {
    json j = hashed_fields(*this);
    j["virtual_data"] = virtual_data;
    j["real_data"] = real_data;
    j["teacher_checkpoint"] = teacher_checkpoint;
    j["student_checkpoint"] = student_checkpoint;
    j["out"] = out;
    return j.dump(2) + "\n";
}

std::string RunConfig::hash() const {
    const std::string text = hashed_fields(*this).dump();
    return hex64(fnv1a(text.data(), text.size()));
}

RunConfig RunConfig::from_json(const std::string& text) { return from_json(text, RunConfig{}); }

RunConfig RunConfig::from_json(const std::string& text, const RunConfig& base) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    RunConfig c = base;
    auto& d = c.distill;
    for (const auto& [key, v] : j.items()) {
        if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
        else if (key == "domain") c.domain = parse_domain(get_as<std::string>(v, key));
        else if (key == "frame_size") {
            const auto hw = get_as<std::array<int, 2>>(v, key);
            c.frame_size = {hw[0], hw[1]};
        } else if (key == "n_crossing") c.n_crossing = get_as<int>(v, key);
        else if (key == "n_noncrossing") c.n_noncrossing = get_as<int>(v, key);
        else if (key == "virtual_train_fraction") c.virtual_train_fraction = get_as<double>(v, key);
        else if (key == "virtual_val_fraction") c.virtual_val_fraction = get_as<double>(v, key);
        else if (key == "real_train_fraction") c.real_train_fraction = get_as<double>(v, key);
        else if (key == "real_val_fraction") c.real_val_fraction = get_as<double>(v, key);
        else if (key == "teacher_streams") c.teacher.streams = StreamSet::parse(get_as<std::string>(v, key));
        else if (key == "teacher_clip_size") {
            c.teacher.clip_size = get_as<Index>(v, key);
            d.clip.full_size = d.clip.patch_size = static_cast<int>(c.teacher.clip_size);
        } else if (key == "teacher_encoder_hidden") c.teacher.encoder_hidden = get_as<Index>(v, key);
        else if (key == "teacher_conv_channels") c.teacher.conv_channels = get_as<std::array<Index, 3>>(v, key);
        else if (key == "teacher_dropout") c.teacher.dropout = get_as<double>(v, key);
        else if (key == "variant") c.student.variant = parse_variant(get_as<std::string>(v, key));
        else if (key == "student_dropout") c.student.dropout = get_as<double>(v, key);
        else if (key == "student_profile") c.student_profile = get_as<std::string>(v, key);
        else if (key == "student_epochs") {
            if (v.is_null()) c.student_epochs.reset();
            else c.student_epochs = get_as<int>(v, key);
        } else if (key == "temperature") d.temperature = get_as<double>(v, key);
        else if (key == "lambda_response") d.weights.response = get_as<double>(v, key);
        else if (key == "lambda_feature") d.weights.feature = get_as<double>(v, key);
        else if (key == "lambda_task") d.weights.task = get_as<double>(v, key);
        else if (key == "teacher_lr") d.adam.lr = get_as<double>(v, key);
        else if (key == "student_lr") d.student_lr = get_as<double>(v, key);
        else if (key == "beta1") d.adam.beta1 = get_as<double>(v, key);
        else if (key == "beta2") d.adam.beta2 = get_as<double>(v, key);
        else if (key == "adam_eps") d.adam.eps = get_as<double>(v, key);
        else if (key == "teacher_epochs") d.teacher_epochs = get_as<int>(v, key);
        else if (key == "batch_size") d.batch_size = get_as<int>(v, key);
        else if (key == "n_frames") {
            d.clip.n_frames = get_as<int>(v, key);
            c.student.n_frames = d.clip.n_frames;
        } else if (key == "ttc") d.clip.ttc = get_as<std::array<int, 2>>(v, key);
        else if (key == "context_scale") d.clip.context_scale = get_as<double>(v, key);
        else if (key == "motion") d.clip.motion = parse_motion(get_as<std::string>(v, key));
        else if (key == "window_stride") d.window_stride = get_as<int>(v, key);
        else if (key == "teacher_max_positive") d.teacher_windows.max_positive = get_as<int>(v, key);
        else if (key == "teacher_max_negative") d.teacher_windows.max_negative = get_as<int>(v, key);
        else if (key == "eq7_literal") d.eq7_literal = get_as<bool>(v, key);
        else if (key == "virtual_data") c.virtual_data = get_as<std::string>(v, key);
        else if (key == "real_data") c.real_data = get_as<std::string>(v, key);
        else if (key == "teacher_checkpoint") c.teacher_checkpoint = get_as<std::string>(v, key);
        else if (key == "student_checkpoint") c.student_checkpoint = get_as<std::string>(v, key);
        else if (key == "out") c.out = get_as<std::string>(v, key);
        else throw ConfigError("unknown config key '" + key + "'");
    }
    c.validate();
    return c;
}

}  // namespace vrpcp
