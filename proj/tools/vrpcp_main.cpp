#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vrpcp/errors.hpp"
#include "vrpcp/gradcheck_suite.hpp"
#include "vrpcp/pipeline.hpp"

using namespace vrpcp;
using nlohmann::json;

namespace {

struct Flags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> variant;
    std::optional<std::string> domain;
    std::optional<std::string> streams;
    bool no_distill = false;
    bool eq7_literal = false;
    bool allow_provenance_mismatch = false;
    int probes = 12;
};

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Defaults, then the config file, then flags.
RunConfig resolve_config(const Flags& f) {
    RunConfig c = f.config_path.empty() ? RunConfig{} : RunConfig::from_json(read_text(f.config_path));
    if (f.seed) c.seed = *f.seed;
    if (f.out) c.out = *f.out;
    if (f.variant) c.student.variant = parse_variant(*f.variant);
    if (f.domain) c.domain = parse_domain(*f.domain);
    if (f.streams) c.teacher.streams = StreamSet::parse(*f.streams);
    if (f.no_distill) c.distill.weights.response = c.distill.weights.feature = 0.0;
    if (f.eq7_literal) c.distill.eq7_literal = true;
    c.validate();
    return c;
}

void print_line(const json& j) { std::cout << j.dump() << std::endl; }

json epoch_summary(const TrainLog& log) {
    const auto& e = log.epochs.back();
    return json{{"epochs", log.epochs.size()},
                {"selected_epoch", log.selected_epoch},
                {"final_loss", e.loss_total},
                {"final_train_acc", e.train_acc},
                {"final_val_acc", e.val_acc ? json(*e.val_acc) : json(nullptr)}};
}

int run(const std::string& command, const Flags& flags) {
    if (command == "gradcheck") {
        bool ok = true;
        int n = 0;
        run_gradcheck_suite(1, flags.probes, [&](const GradCheckResult& r) {
            ok = ok && r.passed;
            ++n;
            std::printf("%-34s %s  max rel err %.3e over %d probes\n", r.name.c_str(), r.passed ? "pass" : "FAIL",
                        r.max_rel_error, r.probes);
        });
        std::printf("%d checks, %s\n", n, ok ? "all passed" : "FAILURES");
        return ok ? 0 : 1;
    }

    const RunConfig config = resolve_config(flags);
    const RunPaths paths = RunPaths::resolve(config);
    if (command == "show-config") {
        std::cout << config.to_json();
        return 0;
    }
    if (command == "gen-data") {
        std::vector<Domain> domains{Domain::virtual_, Domain::proxy_real};
        if (flags.domain) domains = {config.domain};
        for (Domain d : domains) {
            const Manifest m = generate_data(config, d);
            print_line({{"command", command},
                        {"domain", to_string(d)},
                        {"dir", paths.data_for(d).string()},
                        {"sequences", m.entries.size()},
                        {"crossing_share", m.crossing_share()},
                        {"manifest_hash", m.hash()}});
        }
        return 0;
    }
    if (command == "train-teacher") {
        const auto stage = run_train_teacher(config);
        json j{{"command", command}, {"checkpoint", stage.path.string()}, {"streams", config.teacher.streams.name()}};
        j.update(epoch_summary(stage.log));
        print_line(j);
        return 0;
    }
    if (command == "distill") {
        const auto stage = run_distill(config);
        json j{{"command", command},
               {"checkpoint", stage.path.string()},
               {"variant", to_string(config.student.variant)},
               {"distilled", distillation_enabled(config)}};
        j.update(epoch_summary(stage.log));
        print_line(j);
        return 0;
    }
    if (command == "eval") {
        std::cout << run_eval(config, flags.allow_provenance_mismatch).to_json();
        return 0;
    }
    if (command == "ablate") {
        std::vector<StudentVariant> variants(kAllVariants.begin(), kAllVariants.end());
        if (flags.variant) variants = {config.student.variant};
        const auto table = run_ablation(config, variants);
        std::cout << table.to_text();
        return 0;
    }
    throw ConfigError("unknown command '" + command + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Virtual-to-real pedestrian crossing prediction: data, teacher, distillation, evaluation"};
    app.require_subcommand(1);
    app.fallthrough();

    Flags flags;
    app.add_option("--config", flags.config_path, "JSON run config; flags override its values")->check(CLI::ExistingFile);
    app.add_option("--seed", flags.seed, "Run seed");
    app.add_option("--out", flags.out, "Output directory for datasets, checkpoints, logs and reports");
    app.add_option("--variant", flags.variant, "Student variant")
        ->check(CLI::IsMember({"attn_lite", "residual_mlp", "sep_conv1d"}));
    app.add_option("--domain", flags.domain, "Dataset domain for gen-data (default: both)")
        ->check(CLI::IsMember({"virtual", "proxy_real"}));
    app.add_option("--streams", flags.streams, "Teacher input streams, e.g. BB&LC");
    app.add_flag("--no-distill", flags.no_distill, "Zero the response and feature loss weights");
    app.add_flag("--eq7-literal", flags.eq7_literal, "Use the entropy-difference response loss instead of KL");
    app.add_flag("--allow-provenance-mismatch", flags.allow_provenance_mismatch,
                 "Let eval proceed when checkpoint, teacher or dataset provenance disagrees");

    const std::vector<std::pair<std::string, std::string>> commands{
        {"gen-data", "Export the virtual and/or proxy_real datasets"},
        {"train-teacher", "Train the teacher on the virtual split"},
        {"distill", "Train a student on the proxy_real split, distilled unless --no-distill"},
        {"eval", "Evaluate the student on the proxy_real test split"},
        {"ablate", "Student x teacher-input ablation table"},
        {"gradcheck", "Finite-difference gradient checks over ops and models"},
        {"show-config", "Print the resolved config"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        if (name == "gradcheck") sub->add_option("--probes", flags.probes, "Probes per check")->check(CLI::PositiveNumber);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << json{{"error", "usage"}, {"message", e.what()}}.dump() << std::endl;
        return 2;
    }

    try {
        return run(app.get_subcommands().front()->get_name(), flags);
    } catch (const Error& e) {
        std::cerr << json{{"error", e.kind()}, {"message", e.what()}}.dump() << std::endl;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << std::endl;
    }
    return 1;
}
