#include <gtest/gtest.h>
#include <unistd.h>

#include <fstream>
#include <sstream>

#include "vrpcp/errors.hpp"
#include "vrpcp/pipeline.hpp"

using namespace vrpcp;
namespace fs = std::filesystem;

namespace {

RunConfig small_run(const fs::path& out) {
    RunConfig c;
    c.seed = 3;
    c.out = out.string();
    c.n_crossing = 5;
    c.n_noncrossing = 5;
    c.real_train_fraction = 0.5;
    c.real_val_fraction = 0.2;
    c.teacher.clip_size = 16;
    c.teacher.encoder_hidden = 32;
    c.teacher.conv_channels = {2, 4, 4};
    c.distill.clip.full_size = c.distill.clip.patch_size = 16;
    c.distill.teacher_epochs = 2;
    c.distill.window_stride = 16;
    c.student_epochs = 3;
    return c;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// One small run (data, teacher, distilled student) shared by the suite.
class SmallPipeline : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = fs::temp_directory_path() / ("vrpcp_pipeline_" + std::to_string(::getpid()));
        fs::remove_all(dir_);
        config_ = small_run(dir_);
        generate_data(config_, Domain::virtual_);
        generate_data(config_, Domain::proxy_real);
        run_train_teacher(config_);
        run_distill(config_);
    }
    static void TearDownTestSuite() { fs::remove_all(dir_); }

    static inline fs::path dir_;
    static inline RunConfig config_;
};

}  // namespace

TEST_F(SmallPipeline, WritesArtifactsUnderOut) {
    const RunPaths p = RunPaths::resolve(config_);
    EXPECT_EQ(p.teacher_checkpoint, dir_ / "teacher_BB_LC_GC_LM.ckpt");
    EXPECT_EQ(p.student_checkpoint, dir_ / "student_attn_lite.ckpt");
    for (const auto& f : {p.teacher_checkpoint, p.student_checkpoint, dir_ / "virtual" / "manifest",
                          dir_ / "proxy_real" / "manifest", dir_ / "teacher_BB_LC_GC_LM.log.jsonl",
                          dir_ / "student_attn_lite.log.jsonl"})
        EXPECT_TRUE(fs::exists(f)) << f;
}

TEST_F(SmallPipeline, EvalReportMatchesWrittenFile) {
    const MetricsReport m = run_eval(config_);
    EXPECT_EQ(m.config_hash, config_.hash());
    EXPECT_EQ(m.seed, config_.seed);
    EXPECT_GT(m.n_examples, 0);
    const auto& c = m.confusion;
    EXPECT_EQ(c.tp + c.fp + c.fn + c.tn, m.n_examples);
    EXPECT_EQ(MetricsReport::from_json(read_text(dir_ / "metrics_student_attn_lite.json")), m);
}

TEST_F(SmallPipeline, TestSplitIsDisjointFromTraining) {
    const auto split = real_split(config_, read_manifest(dir_ / "proxy_real"));
    EXPECT_EQ(split.train.size() + split.val.size() + split.test.size(), 10u);
    for (auto i : split.test) {
        EXPECT_EQ(std::count(split.train.begin(), split.train.end(), i), 0);
        EXPECT_EQ(std::count(split.val.begin(), split.val.end(), i), 0);
    }
}

TEST_F(SmallPipeline, EvalRejectsADifferentConfig) {
    RunConfig other = config_;
    other.distill.temperature = 3.0;
    EXPECT_THROW(run_eval(other), CompatibilityError);
    EXPECT_NO_THROW(run_eval(other, true));
}

TEST_F(SmallPipeline, EvalRejectsADifferentTeacher) {
    RunConfig other = config_;
    other.teacher_checkpoint = (dir_ / "other_teacher.ckpt").string();
    save_checkpoint(other.teacher_checkpoint, make_checkpoint(Teacher<float>::create(config_.teacher, 99)));
    try {
        run_eval(other);
        FAIL() << "expected CompatibilityError";
    } catch (const CompatibilityError& e) {
        EXPECT_NE(std::string(e.what()).find("other_teacher.ckpt"), std::string::npos) << e.what();
    }
}

TEST_F(SmallPipeline, DistillNeedsAMatchingTeacher) {
    RunConfig missing = config_;
    missing.teacher_checkpoint = (dir_ / "nope.ckpt").string();
    missing.student_checkpoint = (dir_ / "scratch.ckpt").string();
    EXPECT_THROW(run_distill(missing), IoError);

    RunConfig wider = config_;
    wider.teacher.encoder_hidden = 64;
    wider.teacher_checkpoint = RunPaths::resolve(config_).teacher_checkpoint.string();
    wider.student_checkpoint = missing.student_checkpoint;
    EXPECT_THROW(run_distill(wider), CompatibilityError);
}

TEST_F(SmallPipeline, UndistilledStudentNeedsNoTeacher) {
    RunConfig plain = config_;
    plain.distill.weights.response = plain.distill.weights.feature = 0.0;
    plain.teacher_checkpoint = (dir_ / "nope.ckpt").string();
    const auto stage = run_distill(plain);
    EXPECT_EQ(stage.path, dir_ / "student_attn_lite_nodistill.ckpt");
    EXPECT_EQ(stage.checkpoint.provenance.at("teacher"), "none");
    EXPECT_NO_THROW(run_eval(plain));
}

TEST_F(SmallPipeline, AblationLeavesCellsWithoutTeachersAbsent) {
    const AblationTable t = run_ablation(config_, {StudentVariant::attn_lite, StudentVariant::sep_conv1d});
    ASSERT_EQ(t.rows.size(), 5u);
    EXPECT_EQ(t.cells.size(), 10u);
    EXPECT_TRUE(t.cell(kWithoutDistillRow, StudentVariant::attn_lite).report.has_value());
    EXPECT_TRUE(t.cell("BB&LC&GC&LM", StudentVariant::sep_conv1d).report.has_value());
    const auto& absent = t.cell("BB", StudentVariant::attn_lite);
    EXPECT_FALSE(absent.report.has_value());
    EXPECT_NE(absent.note.find("teacher_BB.ckpt"), std::string::npos) << absent.note;
    EXPECT_THROW(t.cell("BB", StudentVariant::residual_mlp), RangeError);

    const std::string text = read_text(dir_ / "ablation.txt");
    EXPECT_EQ(text, t.to_text());
    EXPECT_NE(text.find("BB w/o distill"), std::string::npos);
    EXPECT_NE(text.find("absent"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir_ / "ablation.json"));
}

TEST(Pipeline, MissingDatasetPointsAtGenData) {
    RunConfig c = small_run(fs::temp_directory_path() / "vrpcp_pipeline_empty");
    try {
        run_train_teacher(c);
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("gen-data"), std::string::npos) << e.what();
    }
}

TEST(Pipeline, FileStems) {
    EXPECT_EQ(teacher_file_stem(StreamSet::parse("BB&LC")), "teacher_BB_LC");
    EXPECT_EQ(student_file_stem(StudentVariant::sep_conv1d, false), "student_sep_conv1d_nodistill");
    RunConfig c;
    EXPECT_TRUE(distillation_enabled(c));
    c.distill.weights.response = 0.0;
    EXPECT_TRUE(distillation_enabled(c));
    c.distill.weights.feature = 0.0;
    EXPECT_FALSE(distillation_enabled(c));
}
