#include "vrpcp/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vrpcp/bytes.hpp"
#include "vrpcp/errors.hpp"
#include "vrpcp/rng.hpp"

namespace vrpcp {

namespace fs = std::filesystem;
using nlohmann::json;

void ExportConfig::validate() const {
    if (n_crossing < 1) throw ConfigError("n_crossing must be >= 1 (a dataset needs both classes)");
    if (n_noncrossing < 1) throw ConfigError("n_noncrossing must be >= 1 (a dataset needs both classes)");
    if (crossing_length < 16 || crossing_length % 2 != 0)
        throw ConfigError("crossing_length must be an even number >= 16");
    ScenarioConfig probe;
    probe.frame_size = frame_size;
    probe.sequence_len = crossing_length;
    probe.validate();
}

double Manifest::crossing_share() const {
    if (entries.empty()) return 0.0;
    int n = 0;
    for (const auto& e : entries) n += e.label;
    return static_cast<double>(n) / static_cast<double>(entries.size());
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

std::uint64_t parse_hex64(const std::string& s) {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used, 16);
    if (used != s.size()) throw DataError("bad hex value '" + s + "'");
    return v;
}

json manifest_json(const Manifest& m, bool with_hash) {
    json j;
    j["generator_version"] = m.generator_version;
    j["config"] = {{"n_crossing", m.config.n_crossing},
                   {"n_noncrossing", m.config.n_noncrossing},
                   {"domain", to_string(m.config.domain)},
                   {"base_seed", m.config.base_seed},
                   {"frame_size", {m.config.frame_size.height, m.config.frame_size.width}},
                   {"crossing_length", m.config.crossing_length}};
    json entries = json::array();
    for (const auto& e : m.entries)
        entries.push_back({{"id", e.id},
                           {"path", e.path},
                           {"label", e.label},
                           {"domain", to_string(e.domain)},
                           {"weather", to_string(e.weather)},
                           {"occasion", to_string(e.occasion)},
                           {"n_peds", e.n_peds},
                           {"seed", e.seed},
                           {"blob_fnv1a", hex64(e.blob_hash)}});
    j["entries"] = std::move(entries);
    if (with_hash) j["hash"] = m.hash();
    return j;
}

}  // namespace

std::string Manifest::hash() const {
    const std::string text = manifest_json(*this, false).dump();
    return hex64(fnv1a(text.data(), text.size()));
}

ScenarioConfig scenario_for(const ExportConfig& config, int index) {
    const int total = config.n_crossing + config.n_noncrossing;
    if (index < 0 || index >= total) throw RangeError("sequence index " + std::to_string(index) + " out of range");
    ScenarioConfig sc;
    sc.domain = config.domain;
    sc.crossing = index < config.n_crossing;
    sc.seed = combine_seed(config.base_seed, static_cast<std::uint64_t>(index));
    sc.frame_size = config.frame_size;
    sc.sequence_len = ScenarioConfig::default_length(sc.crossing, config.crossing_length);
    CounterRng rng(sc.seed, 7);
    sc.weather = static_cast<Weather>(rng.uniform_int(0, 3));
    sc.occasion = rng.bernoulli(0.5) ? Occasion::intersection : Occasion::main_road;
    sc.n_pedestrians = sc.crossing ? 1 : static_cast<int>(rng.uniform_int(1, 3));
    return sc;
}

std::vector<std::uint8_t> encode_blob(const AnnotatedSequence& seq) {
    ByteWriter w;
    w.bytes("VRPC", 4);
    w.u32(kBlobVersion);
    w.u32(static_cast<std::uint32_t>(seq.length()));
    w.u32(static_cast<std::uint32_t>(seq.height()));
    w.u32(static_cast<std::uint32_t>(seq.width()));
    w.u32(static_cast<std::uint32_t>(seq.tracks.size()));
    w.bytes(seq.frames.data(), seq.frames.size());
    for (const auto& tr : seq.tracks) {
        w.f32(tr.crossing ? 1.0f : 0.0f);
        w.f32(tr.crossing_frame ? static_cast<float>(*tr.crossing_frame) : -1.0f);
        w.f32(tr.gender);
        w.f32(tr.age);
        for (const auto& b : tr.boxes) {
            w.f32(b.x);
            w.f32(b.y);
            w.f32(b.h);
            w.f32(b.w);
        }
    }
    return w.take();
}

AnnotatedSequence decode_blob(const std::vector<std::uint8_t>& bytes, const ScenarioConfig& config) {
    ByteReader r(bytes, "sequence blob");
    const auto* magic = r.bytes(4);
    if (std::string(reinterpret_cast<const char*>(magic), 4) != "VRPC") throw DataError("sequence blob: bad magic");
    const auto version = r.u32();
    if (version != kBlobVersion)
        throw CompatibilityError("sequence blob version " + std::to_string(version) + " is not supported");
    AnnotatedSequence seq;
    seq.config = config;
    seq.config.sequence_len = static_cast<int>(r.u32());
    seq.config.frame_size.height = static_cast<int>(r.u32());
    seq.config.frame_size.width = static_cast<int>(r.u32());
    const auto n_tracks = r.u32();
    if (n_tracks > 16) throw DataError("sequence blob: implausible track count " + std::to_string(n_tracks));
    const std::size_t n_bytes = seq.frame_bytes() * static_cast<std::size_t>(seq.length());
    const auto* frames = r.bytes(n_bytes);
    seq.frames.assign(frames, frames + n_bytes);
    for (std::uint32_t i = 0; i < n_tracks; ++i) {
        PedestrianTrack tr;
        tr.crossing = r.f32() != 0.0f;
        const float cf = r.f32();
        if (cf >= 0) tr.crossing_frame = static_cast<int>(cf);
        tr.gender = static_cast<std::uint8_t>(r.f32());
        tr.age = static_cast<std::uint8_t>(r.f32());
        tr.boxes.resize(static_cast<std::size_t>(seq.length()));
        for (auto& b : tr.boxes) {
            b.x = r.f32();
            b.y = r.f32();
            b.h = r.f32();
            b.w = r.f32();
        }
        seq.tracks.push_back(std::move(tr));
    }
    if (r.remaining() != 0) throw DataError("sequence blob: trailing bytes");
    return seq;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.close();
        if (!out) throw IoError("write to '" + tmp.string() + "' failed");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "'");
    }
}

void write_manifest(const fs::path& dir, const Manifest& manifest) {
    const std::string text = manifest_json(manifest, true).dump(1) + "\n";
    write_file(dir / "manifest", std::vector<std::uint8_t>(text.begin(), text.end()));
}

Manifest export_dataset(const fs::path& out_dir, const ExportConfig& config) {
    config.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
    Manifest m;
    m.config = config;
    const int total = config.n_crossing + config.n_noncrossing;
    for (int i = 0; i < total; ++i) {
        const ScenarioConfig sc = scenario_for(config, i);
        const auto blob = encode_blob(generate_scenario(sc));
        char id[32];
        std::snprintf(id, sizeof id, "seq_%05d", i);
        DatasetEntry e;
        e.id = id;
        e.path = std::string(id) + ".vrpc";
        e.label = sc.crossing ? 1 : 0;
        e.domain = sc.domain;
        e.weather = sc.weather;
        e.occasion = sc.occasion;
        e.n_peds = sc.n_pedestrians;
        e.seed = sc.seed;
        e.blob_hash = fnv1a(blob.data(), blob.size());
        write_file(out_dir / e.path, blob);
        m.entries.push_back(std::move(e));
    }
    write_manifest(out_dir, m);
    return m;
}

Manifest read_manifest(const fs::path& dir) {
    const auto bytes = read_file(dir / "manifest");
    json j;
    try {
        j = json::parse(bytes.begin(), bytes.end());
        Manifest m;
        m.generator_version = j.at("generator_version").get<std::string>();
        const auto& c = j.at("config");
        m.config.n_crossing = c.at("n_crossing").get<int>();
        m.config.n_noncrossing = c.at("n_noncrossing").get<int>();
        m.config.domain = parse_domain(c.at("domain").get<std::string>());
        m.config.base_seed = c.at("base_seed").get<std::uint64_t>();
        m.config.frame_size = {c.at("frame_size").at(0).get<int>(), c.at("frame_size").at(1).get<int>()};
        m.config.crossing_length = c.at("crossing_length").get<int>();
        for (const auto& e : j.at("entries")) {
            DatasetEntry d;
            d.id = e.at("id").get<std::string>();
            d.path = e.at("path").get<std::string>();
            d.label = e.at("label").get<int>();
            d.domain = parse_domain(e.at("domain").get<std::string>());
            d.weather = parse_weather(e.at("weather").get<std::string>());
            d.occasion = parse_occasion(e.at("occasion").get<std::string>());
            d.n_peds = e.at("n_peds").get<int>();
            d.seed = e.at("seed").get<std::uint64_t>();
            d.blob_hash = parse_hex64(e.at("blob_fnv1a").get<std::string>());
            m.entries.push_back(std::move(d));
        }
        if (j.contains("hash") && j.at("hash").get<std::string>() != m.hash())
            throw DataError("manifest hash mismatch in '" + dir.string() + "'");
        if (m.generator_version != kGeneratorVersion)
            throw CompatibilityError("dataset generated by '" + m.generator_version + "', this build reads '" +
                                     std::string(kGeneratorVersion) + "'");
        return m;
    } catch (const json::exception& ex) {
        throw DataError("malformed manifest in '" + dir.string() + "': " + ex.what());
    }
}

AnnotatedSequence load_sequence(const fs::path& dir, const Manifest& manifest, std::size_t index) {
    const auto& e = manifest.entries.at(index);
    const auto bytes = read_file(dir / e.path);
    if (fnv1a(bytes.data(), bytes.size()) != e.blob_hash) throw DataError("blob '" + e.path + "' does not match its manifest hash");
    ScenarioConfig sc;
    sc.domain = e.domain;
    sc.weather = e.weather;
    sc.occasion = e.occasion;
    sc.n_pedestrians = e.n_peds;
    sc.crossing = e.label == 1;
    sc.seed = e.seed;
    return decode_blob(bytes, sc);
}

}  // namespace vrpcp
