#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
    int status = -1;
    std::string out, err;
};

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("vrpcp_cli_" + std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    Result run(const std::string& args) const {
        const fs::path out = dir_ / "stdout", err = dir_ / "stderr";
        const std::string cmd = std::string(VRPCP_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
        const int raw = std::system(cmd.c_str());
        return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, read_text(out), read_text(err)};
    }

    fs::path write_config(const json& j) const {
        const fs::path p = dir_ / "config.json";
        std::ofstream(p) << j.dump();
        return p;
    }

    json small_config() const {
        return {{"seed", 5},
                {"out", (dir_ / "run").string()},
                {"n_crossing", 5},
                {"n_noncrossing", 5},
                {"real_train_fraction", 0.5},
                {"real_val_fraction", 0.2},
                {"teacher_clip_size", 16},
                {"teacher_encoder_hidden", 32},
                {"teacher_conv_channels", {2, 4, 4}},
                {"teacher_epochs", 2},
                {"student_epochs", 3},
                {"window_stride", 16}};
    }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, GradcheckPasses) {
    const Result r = run("gradcheck --probes 10");
    EXPECT_EQ(r.status, 0) << r.out << r.err;
    EXPECT_NE(r.out.find("all passed"), std::string::npos) << r.out;
}

TEST_F(Cli, FlagsOverrideFileOverridesDefaults) {
    EXPECT_EQ(json::parse(run("show-config").out)["seed"], 0);
    const fs::path cfg = write_config({{"seed", 3}, {"temperature", 4.0}});
    const json from_file = json::parse(run("--config " + cfg.string() + " show-config").out);
    EXPECT_EQ(from_file["seed"], 3);
    EXPECT_EQ(from_file["temperature"], 4.0);
    const json flagged = json::parse(run("--config " + cfg.string() + " --seed 9 --no-distill show-config").out);
    EXPECT_EQ(flagged["seed"], 9);
    EXPECT_EQ(flagged["temperature"], 4.0);
    EXPECT_EQ(flagged["lambda_response"], 0.0);
    EXPECT_EQ(flagged["lambda_feature"], 0.0);
}

TEST_F(Cli, UnknownConfigKeyIsAConfigError) {
    const fs::path cfg = write_config({{"sede", 3}});
    const Result r = run("--config " + cfg.string() + " show-config");
    EXPECT_EQ(r.status, 1);
    const json e = json::parse(r.err);
    EXPECT_EQ(e["error"], "config");
    EXPECT_NE(e["message"].get<std::string>().find("sede"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run("distill --variant resnet18").status, 2);
    EXPECT_EQ(run("").status, 2);
    EXPECT_EQ(json::parse(run("frobnicate").err)["error"], "usage");
}

TEST_F(Cli, PipelineThenCorruptCheckpoint) {
    const std::string cfg = "--config " + write_config(small_config()).string() + " ";
    const Result gen = run(cfg + "gen-data");
    ASSERT_EQ(gen.status, 0) << gen.err;
    std::istringstream lines(gen.out);
    std::string line;
    int domains = 0;
    while (std::getline(lines, line)) {
        const json j = json::parse(line);
        EXPECT_EQ(j["sequences"], 10);
        ++domains;
    }
    EXPECT_EQ(domains, 2);

    const Result teacher = run(cfg + "train-teacher");
    ASSERT_EQ(teacher.status, 0) << teacher.err;
    EXPECT_EQ(json::parse(teacher.out)["epochs"], 2);
    const Result distill = run(cfg + "distill");
    ASSERT_EQ(distill.status, 0) << distill.err;
    EXPECT_EQ(json::parse(distill.out)["distilled"], true);
    const Result eval = run(cfg + "eval");
    ASSERT_EQ(eval.status, 0) << eval.err;
    EXPECT_GT(json::parse(eval.out)["n_examples"].get<long>(), 0);

    const fs::path ckpt = dir_ / "run" / "student_attn_lite.ckpt";
    {
        std::fstream f(ckpt, std::ios::in | std::ios::out | std::ios::binary);
        f.seekg(static_cast<std::streamoff>(fs::file_size(ckpt) / 2));
        char c = 0;
        f.read(&c, 1);
        f.seekp(static_cast<std::streamoff>(fs::file_size(ckpt) / 2));
        c = static_cast<char>(c ^ 0x5A);
        f.write(&c, 1);
    }
    const Result bad = run(cfg + "eval");
    EXPECT_EQ(bad.status, 1);
    EXPECT_EQ(json::parse(bad.err)["error"], "data") << bad.err;
    EXPECT_TRUE(bad.out.empty());
}
