#include <gtest/gtest.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vrpcp/errors.hpp"
#include "vrpcp/training.hpp"

using namespace vrpcp;
namespace fs = std::filesystem;

namespace {

TeacherConfig small_teacher() {
    TeacherConfig t;
    t.clip_size = 16;
    t.encoder_hidden = 32;
    t.conv_channels = {2, 4, 4};
    return t;
}

DistillConfig small_distill() {
    DistillConfig d;
    d.clip.full_size = d.clip.patch_size = 16;
    d.teacher_epochs = 2;
    d.student_epochs = 3;
    d.batch_size = 4;
    d.window_stride = 16;
    d.adam.lr = 1e-3;
    d.student_lr = 1e-3;
    return d;
}

// Six short sequences, three per class, shared by every test in the process.
class TrainingData : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = fs::temp_directory_path() / ("vrpcp_training_" + std::to_string(::getpid()));
        fs::remove_all(dir_);
        ExportConfig e;
        e.n_crossing = 3;
        e.n_noncrossing = 3;
        e.base_seed = 4;
        manifest_ = export_dataset(dir_, e);
    }
    static void TearDownTestSuite() { fs::remove_all(dir_); }

    static std::vector<std::size_t> all() {
        std::vector<std::size_t> v(manifest_.entries.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
        return v;
    }

    static std::vector<TeacherExample> teacher_examples(const DistillConfig& d) {
        return build_teacher_examples(dir_, manifest_, all(), d, StreamSet{}, WindowSampling{1, 1}, 3);
    }

    static inline fs::path dir_;
    static inline Manifest manifest_;
};

template <typename M>
std::vector<std::vector<float>> snapshot(const M& model) {
    std::vector<std::vector<float>> out;
    for (const auto& [name, t] : model.parameters()) out.emplace_back(t.value().data(), t.value().data() + t.size());
    return out;
}

Manifest labelled_manifest(int positives, int negatives) {
    Manifest m;
    for (int i = 0; i < positives + negatives; ++i) {
        DatasetEntry e;
        e.id = "s" + std::to_string(i);
        e.label = i < positives ? 1 : 0;
        m.entries.push_back(e);
    }
    return m;
}

}  // namespace

TEST(SplitDataset, PartitionIsStratifiedDisjointAndSorted) {
    const Manifest m = labelled_manifest(40, 60);
    const auto s = split_dataset(m, 0.5, 0.2, 9);
    EXPECT_EQ(s.train.size(), 50u);
    EXPECT_EQ(s.val.size(), 20u);
    EXPECT_EQ(s.test.size(), 30u);
    std::set<std::size_t> seen;
    for (const auto* part : {&s.train, &s.val, &s.test}) {
        EXPECT_TRUE(std::is_sorted(part->begin(), part->end()));
        for (auto i : *part) EXPECT_TRUE(seen.insert(i).second) << i;
    }
    EXPECT_EQ(seen.size(), 100u);
    const auto positives = [&](const std::vector<std::size_t>& v) {
        return std::count_if(v.begin(), v.end(), [&](std::size_t i) { return m.entries[i].label == 1; });
    };
    EXPECT_EQ(positives(s.train), 20);
    EXPECT_EQ(positives(s.val), 8);
    EXPECT_EQ(positives(s.test), 12);
}

TEST(SplitDataset, SeedDeterminesAssignment) {
    const Manifest m = labelled_manifest(30, 30);
    const auto a = split_dataset(m, 0.5, 0.0, 1), b = split_dataset(m, 0.5, 0.0, 1);
    const auto c = split_dataset(m, 0.5, 0.0, 2);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    EXPECT_NE(a.train, c.train);
    EXPECT_TRUE(a.val.empty());
}

TEST(SplitDataset, InvalidFractionsAreConfigErrors) {
    const Manifest m = labelled_manifest(5, 5);
    EXPECT_THROW(split_dataset(m, 0.8, 0.3, 0), ConfigError);
    EXPECT_THROW(split_dataset(m, -0.1, 0.0, 0), ConfigError);
}

TEST(TrainingHelpers, AccuracyTiesPredictNonCrossing) {
    EXPECT_DOUBLE_EQ(accuracy({0.5, 0.51, 0.2}, {0, 1, 0}), 1.0);
    EXPECT_DOUBLE_EQ(accuracy({0.5}, {1}), 0.0);
    EXPECT_THROW(accuracy({0.5}, {1, 0}), DimensionError);
}

TEST(TrainingHelpers, RectifiedFeatureIsSoftplus) {
    Vec<float> f(4);
    f << -30.0f, -1.0f, 0.0f, 2.5f;
    const Vec<float> r = rectify_teacher_feature(f);
    for (Index i = 0; i < f.size(); ++i) {
        EXPECT_GE(r(i), 0.0f);
        EXPECT_NEAR(r(i), std::log1p(std::exp(static_cast<double>(f(i)))), 1e-6);
    }
}

TEST(DistillConfigValidation, RejectsBadValues) {
    DistillConfig d;
    d.validate();
    d.temperature = 0.0;
    EXPECT_THROW(d.validate(), ConfigError);
    d = DistillConfig{};
    d.batch_size = 0;
    EXPECT_THROW(d.validate(), ConfigError);
    d = DistillConfig{};
    d.weights.feature = -1.0;
    EXPECT_THROW(d.validate(), ConfigError);
}

TEST_F(TrainingData, TeacherExamplesRespectSamplingCaps) {
    const auto examples = teacher_examples(small_distill());
    EXPECT_LE(examples.size(), 2 * manifest_.entries.size());
    for (const auto& e : examples) {
        EXPECT_EQ(e.inputs.boxes.dim(0), 16);
        EXPECT_EQ(e.inputs.full.dim(1), 16);
    }
    // Same seed, same windows.
    const auto again = teacher_examples(small_distill());
    ASSERT_EQ(again.size(), examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i)
        EXPECT_TRUE((again[i].inputs.boxes.value().array() == examples[i].inputs.boxes.value().array()).all());
}

TEST_F(TrainingData, TeacherTrainingIsBitwiseReproducible) {
    const auto d = small_distill();
    const auto examples = teacher_examples(d);
    const auto a = train_teacher(examples, {}, small_teacher(), d, 17);
    const auto b = train_teacher(examples, {}, small_teacher(), d, 17);
    EXPECT_EQ(snapshot(a.teacher), snapshot(b.teacher));
    EXPECT_EQ(a.log.epochs.size(), 2u);
    EXPECT_EQ(a.log.selected_epoch, 2);
    const auto c = train_teacher(examples, {}, small_teacher(), d, 18);
    EXPECT_NE(snapshot(a.teacher), snapshot(c.teacher));
}

TEST_F(TrainingData, SingleClassTrainingSetIsConfigError) {
    const auto d = small_distill();
    auto examples = teacher_examples(d);
    std::erase_if(examples, [](const TeacherExample& e) { return e.label == 1; });
    ASSERT_FALSE(examples.empty());
    EXPECT_THROW(train_teacher(examples, {}, small_teacher(), d, 1), ConfigError);

    auto students = build_student_examples(dir_, manifest_, all(), d);
    std::erase_if(students, [](const StudentExample& e) { return e.label == 0; });
    DistillConfig plain = d;
    plain.weights.response = plain.weights.feature = 0.0;
    EXPECT_THROW(distill_student(students, {}, StudentConfig{}, plain, 1), ConfigError);
}

TEST_F(TrainingData, DistillationLeavesTeacherUntouchedAndZeroWeightsReduceToSupervised) {
    const auto d = small_distill();
    const auto teacher = Teacher<float>::create(small_teacher(), 5);
    const auto before = snapshot(teacher);
    const auto with_targets = build_student_examples(dir_, manifest_, all(), d, &teacher);
    const auto without = build_student_examples(dir_, manifest_, all(), d);
    ASSERT_EQ(with_targets.size(), without.size());
    for (const auto& e : with_targets) {
        EXPECT_EQ(e.teacher_logits.size(), 2);
        EXPECT_EQ(e.teacher_feature.size(), kFeatureDim);
        EXPECT_GE(e.teacher_feature.minCoeff(), 0.0f);
    }

    const auto distilled = distill_student(with_targets, {}, StudentConfig{}, d, 8);
    EXPECT_EQ(snapshot(teacher), before);
    EXPECT_GT(distilled.log.epochs.front().loss_response, 0.0);

    DistillConfig plain = d;
    plain.weights.response = plain.weights.feature = 0.0;
    const auto a = distill_student(with_targets, {}, StudentConfig{}, plain, 8);
    const auto b = distill_student(without, {}, StudentConfig{}, plain, 8);
    EXPECT_EQ(snapshot(a.student), snapshot(b.student));
    EXPECT_EQ(a.log.epochs.back().loss_response, 0.0);
    EXPECT_EQ(a.log.epochs.back().loss_feature, 0.0);
    EXPECT_NE(snapshot(a.student), snapshot(distilled.student));
}

TEST_F(TrainingData, DistillingWithoutTeacherTargetsIsContractError) {
    const auto d = small_distill();
    const auto examples = build_student_examples(dir_, manifest_, all(), d);
    EXPECT_THROW(distill_student(examples, {}, StudentConfig{}, d, 1), ContractError);
}

TEST_F(TrainingData, StudentLossDecreasesAndLogIsJsonLines) {
    auto d = small_distill();
    d.weights.response = d.weights.feature = 0.0;
    d.student_epochs = 8;
    const auto examples = build_student_examples(dir_, manifest_, all(), d);
    StudentConfig cfg;
    cfg.dropout = 0.0;
    const auto run = distill_student(examples, examples, cfg, d, 2);
    EXPECT_LT(run.log.epochs.back().loss_task, run.log.epochs.front().loss_task);
    EXPECT_EQ(run.log.selected_epoch, 8);

    std::istringstream lines(run.log.to_jsonl());
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        if (n == 0) EXPECT_EQ(j.at("kind"), "student/attn_lite");
        else {
            EXPECT_EQ(j.at("epoch"), n);
            EXPECT_TRUE(j.at("val_acc").is_number());
        }
        ++n;
    }
    EXPECT_EQ(n, 9);
}
