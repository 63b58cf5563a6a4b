#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vrpcp/checkpoint.hpp"
#include "vrpcp/metrics.hpp"
#include "vrpcp/run_config.hpp"

namespace vrpcp {

/// Artifact locations for a run. Paths set in the config win; everything
/// else lives under `out`.
struct RunPaths {
    std::filesystem::path out;
    std::filesystem::path virtual_data;
    std::filesystem::path real_data;
    std::filesystem::path teacher_checkpoint;
    std::filesystem::path student_checkpoint;

    static RunPaths resolve(const RunConfig& config);
    std::filesystem::path data_for(Domain domain) const { return domain == Domain::virtual_ ? virtual_data : real_data; }
};

/// "teacher_BB_LC_GC_LM.ckpt" and the like.
std::string teacher_file_stem(const StreamSet& streams);
/// "student_attn_lite" or "student_attn_lite_nodistill".
std::string student_file_stem(StudentVariant variant, bool distilled);

bool distillation_enabled(const RunConfig& config);

/// The proxy-real train/val/test split every stage of a run agrees on.
DatasetSplit real_split(const RunConfig& config, const Manifest& manifest);

/// Exports `config.n_crossing + config.n_noncrossing` sequences of `domain`
/// into its resolved dataset directory. Each domain draws from its own seed.
Manifest generate_data(const RunConfig& config, Domain domain);

struct TeacherStage {
    Teacher<float> teacher;
    Checkpoint checkpoint;
    TrainLog log;
    std::filesystem::path path;
};

/// Trains on the virtual split and writes the checkpoint plus a JSONL log.
TeacherStage run_train_teacher(const RunConfig& config);

struct StudentStage {
    Student<float> student;
    Checkpoint checkpoint;
    TrainLog log;
    std::filesystem::path path;
};

/// Trains a student on the proxy-real train split, against the teacher
/// checkpoint when distillation is enabled.
StudentStage run_distill(const RunConfig& config);

/// Evaluates the student checkpoint on the proxy-real test split and writes
/// the report. Provenance mismatches raise CompatibilityError unless allowed.
MetricsReport run_eval(const RunConfig& config, bool allow_provenance_mismatch = false);

struct AblationCell {
    std::string row;  // stream set name, or "BB w/o distill"
    StudentVariant variant = StudentVariant::attn_lite;
    std::optional<MetricsReport> report;
    std::string note;  // why the cell is absent
};

struct AblationTable {
    std::vector<std::string> rows;
    std::vector<StudentVariant> variants;
    std::vector<AblationCell> cells;  // row-major

    const AblationCell& cell(const std::string& row, StudentVariant variant) const;
    std::string to_json() const;
    /// Accuracy / AUC per cell, one line per row.
    std::string to_text() const;
};

inline const char* kWithoutDistillRow = "BB w/o distill";

/// One student per (stream row, variant) distilled from that row's teacher
/// checkpoint, plus the undistilled row. Missing teachers leave cells absent.
AblationTable run_ablation(const RunConfig& config, const std::vector<StudentVariant>& variants);

}  // namespace vrpcp
