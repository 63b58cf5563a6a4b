#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vrpcp/student.hpp"
#include "vrpcp/teacher.hpp"

namespace vrpcp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ModelKind : std::uint8_t { teacher = 0, student = 1 };

struct StoredTensor {
    std::string name;
    Shape shape;
    std::vector<float> values;
    bool operator==(const StoredTensor&) const = default;
};

/// Little-endian layout:
///   "VRCK" | u32 version | u8 kind | str model_config | str config_hash |
///   u64 seed | u32 epoch | u32 n_provenance | (str key, str value)... |
///   u32 n_tensors | (str name, u32 rank, u64 dims..., f32 values...)... |
///   u64 FNV-1a of all preceding bytes
/// where str is a u32 byte length followed by the bytes.
struct Checkpoint {
    ModelKind kind = ModelKind::teacher;
    std::string model_config;  // JSON text of the architecture config
    std::string config_hash;
    std::uint64_t seed = 0;
    std::uint32_t epoch = 0;
    std::map<std::string, std::string> provenance;
    std::vector<StoredTensor> tensors;

    bool operator==(const Checkpoint&) const = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
/// Throws DataError for bad magic, truncation, trailing bytes or checksum
/// mismatch and CompatibilityError for an unknown version.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string teacher_config_json(const TeacherConfig& config);
TeacherConfig teacher_config_from_json(const std::string& text);
std::string student_config_json(const StudentConfig& config);
StudentConfig student_config_from_json(const std::string& text);

Checkpoint make_checkpoint(const Teacher<float>& teacher);
Checkpoint make_checkpoint(const Student<float>& student);

/// Rebuilds a model; CompatibilityError names the first tensor whose name or
/// shape disagrees with the architecture, or the kind mismatch.
Teacher<float> restore_teacher(const Checkpoint& checkpoint);
Student<float> restore_student(const Checkpoint& checkpoint);

/// Hex FNV-1a of the encoded checkpoint, used to tie students to teachers.
std::string checkpoint_digest(const Checkpoint& checkpoint);

}  // namespace vrpcp
