#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vrpcp/scene.hpp"

namespace vrpcp {

inline constexpr std::uint32_t kBlobVersion = 1;

struct ExportConfig {
    int n_crossing = 300;
    int n_noncrossing = 190;
    Domain domain = Domain::virtual_;
    std::uint64_t base_seed = 0;
    FrameSize frame_size{};
    int crossing_length = kCrossingSequenceLength;

    void validate() const;
};

struct DatasetEntry {
    std::string id;
    std::string path;  // relative to the dataset directory
    int label = 0;     // 1 for crossing sequences
    Domain domain = Domain::virtual_;
    Weather weather = Weather::sunny;
    Occasion occasion = Occasion::main_road;
    int n_peds = 1;
    std::uint64_t seed = 0;
    std::uint64_t blob_hash = 0;
    bool operator==(const DatasetEntry&) const = default;
};

struct Manifest {
    std::string generator_version{kGeneratorVersion};
    ExportConfig config;
    std::vector<DatasetEntry> entries;

    double crossing_share() const;
    /// Content hash over the canonical manifest text, which includes each
    /// blob's hash; printed as 16 hex digits.
    std::string hash() const;
};

/// The scenario that sequence `index` of an export is generated from.
ScenarioConfig scenario_for(const ExportConfig& config, int index);

std::vector<std::uint8_t> encode_blob(const AnnotatedSequence& seq);
/// Restores frames and tracks; the caller supplies the config echo fields the
/// header does not carry.
AnnotatedSequence decode_blob(const std::vector<std::uint8_t>& bytes, const ScenarioConfig& config);

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);

/// Writes `<out_dir>/manifest` and one blob per sequence.
Manifest export_dataset(const std::filesystem::path& out_dir, const ExportConfig& config);

Manifest read_manifest(const std::filesystem::path& dir);
void write_manifest(const std::filesystem::path& dir, const Manifest& manifest);
AnnotatedSequence load_sequence(const std::filesystem::path& dir, const Manifest& manifest, std::size_t index);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Atomic: writes a temporary sibling, then renames it over `path`.
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace vrpcp
