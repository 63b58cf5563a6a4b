#include "vrpcp/checkpoint.hpp"

#include <json.hpp>

#include "vrpcp/bytes.hpp"
#include "vrpcp/dataset.hpp"
#include "vrpcp/errors.hpp"

namespace vrpcp {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'V', 'R', 'C', 'K'};

template <typename Scalar>
std::vector<StoredTensor> store(const NamedParameters<Scalar>& params) {
    std::vector<StoredTensor> out;
    for (const auto& [name, t] : params) {
        StoredTensor s{name, t.shape(), std::vector<float>(static_cast<std::size_t>(t.size()))};
        for (Index i = 0; i < t.size(); ++i) s.values[static_cast<std::size_t>(i)] = static_cast<float>(t.value()(i));
        out.push_back(std::move(s));
    }
    return out;
}

void load_into(NamedParameters<float> params, const std::vector<StoredTensor>& stored) {
    const std::size_t n = std::min(params.size(), stored.size());
    for (std::size_t i = 0; i < n; ++i) {
        auto& [name, t] = params[i];
        const auto& s = stored[i];
        if (s.name != name)
            throw CompatibilityError("checkpoint tensor #" + std::to_string(i) + " is '" + s.name + "', model expects '" +
                                     name + "'");
        if (s.shape != t.shape())
            throw CompatibilityError("checkpoint tensor '" + s.name + "' has shape " + shape_string(s.shape) +
                                     ", model expects " + shape_string(t.shape()));
    }
    if (stored.size() < params.size())
        throw CompatibilityError("checkpoint lacks tensor '" + params[stored.size()].first + "'");
    if (stored.size() > params.size())
        throw CompatibilityError("checkpoint has unexpected tensor '" + stored[params.size()].name + "'");
    for (std::size_t i = 0; i < n; ++i) {
        auto& v = params[i].second.mutable_value();
        for (Index k = 0; k < v.size(); ++k) v(k) = stored[i].values[static_cast<std::size_t>(k)];
    }
}

json parse_json(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw CompatibilityError(std::string(what) + " is not valid JSON: " + e.what());
    }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
    ByteWriter w;
    w.bytes(kMagic, 4);
    w.u32(kCheckpointVersion);
    w.u8(static_cast<std::uint8_t>(c.kind));
    w.str(c.model_config);
    w.str(c.config_hash);
    w.u64(c.seed);
    w.u32(c.epoch);
    w.u32(static_cast<std::uint32_t>(c.provenance.size()));
    for (const auto& [k, v] : c.provenance) {
        w.str(k);
        w.str(v);
    }
    w.u32(static_cast<std::uint32_t>(c.tensors.size()));
    for (const auto& t : c.tensors) {
        if (static_cast<Index>(t.values.size()) != shape_size(t.shape))
            throw DimensionError("checkpoint tensor '" + t.name + "' has " + std::to_string(t.values.size()) +
                                 " values for shape " + shape_string(t.shape));
        w.str(t.name);
        w.u32(static_cast<std::uint32_t>(t.shape.size()));
        for (Index d : t.shape) w.u64(static_cast<std::uint64_t>(d));
        for (float v : t.values) w.f32(v);
    }
    const auto& body = w.data();
    w.u64(fnv1a(body.data(), body.size()));
    return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw DataError("not a checkpoint (bad magic)");
    ByteReader header(bytes.data() + 4, 4, "checkpoint");
    const auto version = header.u32();
    if (version != kCheckpointVersion)
        throw CompatibilityError("checkpoint format version " + std::to_string(version) + ", expected " +
                                 std::to_string(kCheckpointVersion));
    const std::size_t body = bytes.size() - 8;
    ByteReader tail(bytes.data() + body, 8, "checkpoint");
    if (tail.u64() != fnv1a(bytes.data(), body)) throw DataError("checkpoint checksum mismatch (truncated or corrupt)");

    ByteReader r(bytes.data() + 8, body - 8, "checkpoint");
    Checkpoint c;
    const auto kind = r.u8();
    if (kind > 1) throw DataError("checkpoint has unknown model kind " + std::to_string(kind));
    c.kind = static_cast<ModelKind>(kind);
    c.model_config = r.str();
    c.config_hash = r.str();
    c.seed = r.u64();
    c.epoch = r.u32();
    const auto n_prov = r.u32();
    for (std::uint32_t i = 0; i < n_prov; ++i) {
        std::string k = r.str();
        c.provenance[k] = r.str();
    }
    const auto n_tensors = r.u32();
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        StoredTensor t;
        t.name = r.str();
        const auto rank = r.u32();
        if (rank > 8) throw DataError("checkpoint tensor '" + t.name + "' has rank " + std::to_string(rank));
        std::uint64_t count = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            const auto d = r.u64();
            if (d > (std::uint64_t{1} << 32)) throw DataError("checkpoint tensor '" + t.name + "' has absurd extent");
            t.shape.push_back(static_cast<Index>(d));
            count *= d;
        }
        if (count * 4 > r.remaining()) throw DataError("checkpoint tensor '" + t.name + "' runs past the end");
        t.values.resize(static_cast<std::size_t>(count));
        for (auto& v : t.values) v = r.f32();
        c.tensors.push_back(std::move(t));
    }
    if (r.remaining() != 0) throw DataError("checkpoint has trailing bytes");
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

std::string teacher_config_json(const TeacherConfig& c) {
    return json{{"clip_size", c.clip_size},
                {"encoder_hidden", c.encoder_hidden},
                {"conv_channels", c.conv_channels},
                {"dropout", c.dropout},
                {"streams", c.streams.name()}}
        .dump();
}

TeacherConfig teacher_config_from_json(const std::string& text) {
    const json j = parse_json(text, "teacher config");
    try {
        TeacherConfig c;
        c.clip_size = j.at("clip_size").get<Index>();
        c.encoder_hidden = j.at("encoder_hidden").get<Index>();
        c.conv_channels = j.at("conv_channels").get<std::array<Index, 3>>();
        c.dropout = j.at("dropout").get<double>();
        c.streams = StreamSet::parse(j.at("streams").get<std::string>());
        return c;
    } catch (const json::exception& e) {
        throw CompatibilityError(std::string("teacher config: ") + e.what());
    }
}

std::string student_config_json(const StudentConfig& c) {
    return json{{"variant", to_string(c.variant)}, {"n_frames", c.n_frames}, {"dropout", c.dropout}}.dump();
}

StudentConfig student_config_from_json(const std::string& text) {
    const json j = parse_json(text, "student config");
    try {
        StudentConfig c;
        c.variant = parse_variant(j.at("variant").get<std::string>());
        c.n_frames = j.at("n_frames").get<Index>();
        c.dropout = j.at("dropout").get<double>();
        return c;
    } catch (const json::exception& e) {
        throw CompatibilityError(std::string("student config: ") + e.what());
    }
}

Checkpoint make_checkpoint(const Teacher<float>& teacher) {
    Checkpoint c;
    c.kind = ModelKind::teacher;
    c.model_config = teacher_config_json(teacher.config());
    c.tensors = store(teacher.parameters());
    return c;
}

Checkpoint make_checkpoint(const Student<float>& student) {
    Checkpoint c;
    c.kind = ModelKind::student;
    c.model_config = student_config_json(student.config());
    c.tensors = store(student.parameters());
    return c;
}

Teacher<float> restore_teacher(const Checkpoint& c) {
    if (c.kind != ModelKind::teacher) throw CompatibilityError("checkpoint holds a student, expected a teacher");
    auto t = Teacher<float>::create(teacher_config_from_json(c.model_config), 0);
    load_into(t.parameters(), c.tensors);
    return t;
}

Student<float> restore_student(const Checkpoint& c) {
    if (c.kind != ModelKind::student) throw CompatibilityError("checkpoint holds a teacher, expected a student");
    auto s = Student<float>::create(student_config_from_json(c.model_config), 0);
    load_into(s.parameters(), c.tensors);
    return s;
}

std::string checkpoint_digest(const Checkpoint& checkpoint) {
    const auto bytes = encode_checkpoint(checkpoint);
    return hex64(fnv1a(bytes.data(), bytes.size()));
}

}  // namespace vrpcp
