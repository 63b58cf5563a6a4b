#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "vrpcp/dataset.hpp"
#include "vrpcp/student.hpp"
#include "vrpcp/teacher.hpp"
#include "vrpcp/training.hpp"

namespace vrpcp {

/// Everything a pipeline run depends on. Serialized as one flat JSON object
/// (`show-config` prints every key with its default).
struct RunConfig {
    std::uint64_t seed = 0;

    // data
    Domain domain = Domain::virtual_;
    FrameSize frame_size{};
    int n_crossing = 300;
    int n_noncrossing = 190;
    double virtual_train_fraction = 0.8;
    double virtual_val_fraction = 0.2;
    double real_train_fraction = 0.15;
    double real_val_fraction = 0.1;

    // models
    TeacherConfig teacher{};
    StudentConfig student{};
    std::string student_profile = "pie_like";  // pie_like: 60 student epochs, jaad_like: 120
    std::optional<int> student_epochs;         // overrides the profile when set

    DistillConfig distill{};

    // paths; excluded from the config hash
    std::string virtual_data;
    std::string real_data;
    std::string teacher_checkpoint;
    std::string student_checkpoint;
    std::string out = "out";

    bool operator==(const RunConfig&) const = default;

    void validate() const;
    /// The training config with the profile's student epochs applied.
    DistillConfig resolved_distill() const;
    /// Dataset export settings; each domain gets its own base seed.
    ExportConfig export_config(Domain domain) const;

    std::string to_json() const;
    /// Starts from `base` and applies every key in `text`; unknown keys,
    /// wrong types and invalid values raise ConfigError.
    static RunConfig from_json(const std::string& text, const RunConfig& base);
    static RunConfig from_json(const std::string& text);
    /// 16 hex digits over every field except the paths.
    std::string hash() const;
};

int profile_student_epochs(const std::string& profile);

}  // namespace vrpcp
