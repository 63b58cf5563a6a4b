#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vrpcp/adam.hpp"
#include "vrpcp/dataset.hpp"
#include "vrpcp/losses.hpp"
#include "vrpcp/preprocess.hpp"
#include "vrpcp/student.hpp"
#include "vrpcp/teacher.hpp"

namespace vrpcp {

/// Per-sequence cap on sampled observation windows; negative means no cap.
struct WindowSampling {
    int max_positive = -1;
    int max_negative = -1;
    bool operator==(const WindowSampling&) const = default;
};

struct DistillConfig {
    double temperature = 2.0;
    LossWeights weights{};
    AdamConfig adam{};  // teacher; the student shares it except for the rate
    double student_lr = 5e-4;
    int teacher_epochs = 20;
    int student_epochs = 60;
    int batch_size = 8;
    ClipSpec clip{};
    int window_stride = 8;
    WindowSampling teacher_windows{2, 2};
    bool eq7_literal = false;
    bool operator==(const DistillConfig&) const = default;

    void validate() const;
    ResponseLoss response_kind() const { return eq7_literal ? ResponseLoss::eq7_literal : ResponseLoss::kl; }
};

struct DatasetSplit {
    std::vector<std::size_t> train, val, test;
};

/// Stratified split by sequence label. Each class is shuffled with `seed`;
/// the first round(train_fraction * n) go to train, the next
/// round(val_fraction * n) to validation and the rest to test.
DatasetSplit split_dataset(const Manifest& manifest, double train_fraction, double val_fraction, std::uint64_t seed);

struct TeacherExample {
    TeacherInputs<float> inputs;
    int label = 0;
};

struct StudentExample {
    Tensor<float> boxes;  // [N x 4]
    int label = 0;
    std::size_t sequence = 0;
    // Frozen-teacher outputs; empty when built without a teacher.
    Vec<float> teacher_logits;
    Vec<float> teacher_feature;  // rectified, >= 0
};

/// Windows of the listed sequences, subsampled per `sampling` with a
/// generator seeded by `seed` and the sequence index.
std::vector<TeacherExample> build_teacher_examples(const std::filesystem::path& dir, const Manifest& manifest,
                                                   const std::vector<std::size_t>& sequences,
                                                   const DistillConfig& config, const StreamSet& streams,
                                                   const WindowSampling& sampling, std::uint64_t seed);

/// Every window of the listed sequences. With a teacher, each example also
/// carries the teacher's eval-mode logits and rectified feature.
std::vector<StudentExample> build_student_examples(const std::filesystem::path& dir, const Manifest& manifest,
                                                   const std::vector<std::size_t>& sequences,
                                                   const DistillConfig& config, const Teacher<float>* teacher = nullptr);

/// Rectifies the teacher feature into the domain of the feature loss.
Vec<float> rectify_teacher_feature(const Vec<float>& feature);

struct EpochRecord {
    int epoch = 0;
    double loss_response = 0.0;
    double loss_feature = 0.0;
    double loss_task = 0.0;
    double loss_total = 0.0;
    double train_acc = 0.0;
    std::optional<double> val_acc;
    double wall_seconds = 0.0;
};

struct TrainLog {
    std::string kind;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<EpochRecord> epochs;
    int selected_epoch = 0;

    /// One JSON object per line: a header record, then one per epoch.
    std::string to_jsonl() const;
};

struct TeacherRun {
    Teacher<float> teacher;
    TrainLog log;
};

struct StudentRun {
    Student<float> student;
    TrainLog log;
};

/// Cross-entropy training on virtual data. The parameters with the best
/// validation accuracy are kept (the last epoch when `val` is empty).
TeacherRun train_teacher(const std::vector<TeacherExample>& train, const std::vector<TeacherExample>& val,
                         const TeacherConfig& teacher_config, const DistillConfig& config, std::uint64_t seed);

/// Trains a student against the frozen teacher outputs stored on `train`.
/// With zero response and feature weights this is plain supervised training.
/// The final-epoch parameters are returned.
StudentRun distill_student(const std::vector<StudentExample>& train, const std::vector<StudentExample>& val,
                           const StudentConfig& student_config, const DistillConfig& config, std::uint64_t seed);

/// Crossing probabilities in eval mode.
std::vector<double> predict(const Teacher<float>& teacher, const std::vector<TeacherExample>& examples);
std::vector<double> predict(const Student<float>& student, const std::vector<StudentExample>& examples);

template <typename E>
std::vector<int> labels_of(const std::vector<E>& examples) {
    std::vector<int> out;
    out.reserve(examples.size());
    for (const auto& e : examples) out.push_back(e.label);
    return out;
}

/// Fraction of probabilities on the correct side of 0.5 (ties predict 0).
double accuracy(const std::vector<double>& probabilities, const std::vector<int>& labels);

}  // namespace vrpcp
