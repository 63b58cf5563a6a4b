#include "vrpcp/pipeline.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "vrpcp/errors.hpp"

namespace vrpcp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kVirtualSplitStream = 0x51;
constexpr std::uint64_t kRealSplitStream = 0x52;
constexpr std::uint64_t kTeacherTrainWindows = 0x53;
constexpr std::uint64_t kTeacherValWindows = 0x54;
constexpr std::uint64_t kTeacherInit = 0x55;
constexpr std::uint64_t kStudentInit = 0x56;

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

Manifest open_dataset(const fs::path& dir, const char* what) {
    if (!fs::exists(dir / "manifest"))
        throw IoError(std::string("no ") + what + " dataset at '" + dir.string() + "' (run gen-data first)");
    return read_manifest(dir);
}

std::string provenance_or(const Checkpoint& c, const std::string& key) {
    const auto it = c.provenance.find(key);
    return it == c.provenance.end() ? std::string("<missing>") : it->second;
}

// Loads a teacher checkpoint and checks its architecture against the config.
Teacher<float> load_teacher(const fs::path& path, const TeacherConfig& expected, Checkpoint* out = nullptr) {
    Checkpoint c = load_checkpoint(path);
    Teacher<float> t = restore_teacher(c);
    if (!(t.config() == expected))
        throw CompatibilityError("teacher checkpoint '" + path.string() + "' was built with " + c.model_config +
                                 ", the config expects " + teacher_config_json(expected));
    if (out) *out = std::move(c);
    return t;
}

struct RealData {
    Manifest manifest;
    DatasetSplit split;
    std::vector<StudentExample> val, test;
};

RealData load_real(const RunConfig& c, const RunPaths& paths, bool need_test) {
    RealData r;
    r.manifest = open_dataset(paths.real_data, "proxy_real");
    r.split = real_split(c, r.manifest);
    const auto d = c.resolved_distill();
    r.val = build_student_examples(paths.real_data, r.manifest, r.split.val, d);
    if (need_test) r.test = build_student_examples(paths.real_data, r.manifest, r.split.test, d);
    return r;
}

MetricsReport evaluate(const Student<float>& student, const std::vector<StudentExample>& test, const RunConfig& c) {
    MetricsReport m = compute_metrics(predict(student, test), labels_of(test));
    m.config_hash = c.hash();
    m.seed = c.seed;
    return m;
}

std::string fixed3(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << v;
    return os.str();
}

}  // namespace

DatasetSplit real_split(const RunConfig& c, const Manifest& m) {
    return split_dataset(m, c.real_train_fraction, c.real_val_fraction, combine_seed(c.seed, kRealSplitStream));
}

RunPaths RunPaths::resolve(const RunConfig& c) {
    RunPaths p;
    p.out = c.out;
    p.virtual_data = c.virtual_data.empty() ? p.out / "virtual" : fs::path(c.virtual_data);
    p.real_data = c.real_data.empty() ? p.out / "proxy_real" : fs::path(c.real_data);
    p.teacher_checkpoint = c.teacher_checkpoint.empty() ? p.out / (teacher_file_stem(c.teacher.streams) + ".ckpt")
                                                        : fs::path(c.teacher_checkpoint);
    p.student_checkpoint =
        c.student_checkpoint.empty()
            ? p.out / (student_file_stem(c.student.variant, distillation_enabled(c)) + ".ckpt")
            : fs::path(c.student_checkpoint);
    return p;
}

std::string teacher_file_stem(const StreamSet& streams) {
    std::string s = "teacher_" + streams.name();
    std::replace(s.begin(), s.end(), '&', '_');
    return s;
}

std::string student_file_stem(StudentVariant variant, bool distilled) {
    return "student_" + to_string(variant) + (distilled ? "" : "_nodistill");
}

bool distillation_enabled(const RunConfig& c) {
    return c.distill.weights.response > 0.0 || c.distill.weights.feature > 0.0;
}

Manifest generate_data(const RunConfig& c, Domain domain) {
    return export_dataset(RunPaths::resolve(c).data_for(domain), c.export_config(domain));
}

TeacherStage run_train_teacher(const RunConfig& c) {
    const RunPaths paths = RunPaths::resolve(c);
    const Manifest manifest = open_dataset(paths.virtual_data, "virtual");
    const auto split =
        split_dataset(manifest, c.virtual_train_fraction, c.virtual_val_fraction, combine_seed(c.seed, kVirtualSplitStream));
    const DistillConfig d = c.resolved_distill();
    const auto train = build_teacher_examples(paths.virtual_data, manifest, split.train, d, c.teacher.streams,
                                              d.teacher_windows, combine_seed(c.seed, kTeacherTrainWindows));
    const auto val = build_teacher_examples(paths.virtual_data, manifest, split.val, d, c.teacher.streams,
                                            d.teacher_windows, combine_seed(c.seed, kTeacherValWindows));
    TeacherRun run = train_teacher(train, val, c.teacher, d, combine_seed(c.seed, kTeacherInit));
    run.log.config_hash = c.hash();

    TeacherStage stage{run.teacher, make_checkpoint(run.teacher), run.log, paths.teacher_checkpoint};
    stage.checkpoint.config_hash = c.hash();
    stage.checkpoint.seed = c.seed;
    stage.checkpoint.epoch = static_cast<std::uint32_t>(run.log.selected_epoch);
    stage.checkpoint.provenance = {{"virtual_manifest", manifest.hash()}, {"streams", c.teacher.streams.name()}};
    save_checkpoint(stage.path, stage.checkpoint);
    write_text(paths.out / (teacher_file_stem(c.teacher.streams) + ".log.jsonl"), run.log.to_jsonl());
    return stage;
}

StudentStage run_distill(const RunConfig& c) {
    const RunPaths paths = RunPaths::resolve(c);
    const DistillConfig d = c.resolved_distill();
    const RealData real = load_real(c, paths, false);
    const bool distilled = distillation_enabled(c);

    std::string teacher_digest = "none";
    std::optional<Teacher<float>> teacher;
    if (distilled) {
        Checkpoint tc;
        teacher = load_teacher(paths.teacher_checkpoint, c.teacher, &tc);
        teacher_digest = checkpoint_digest(tc);
    }
    const auto train =
        build_student_examples(paths.real_data, real.manifest, real.split.train, d, teacher ? &*teacher : nullptr);
    StudentRun run = distill_student(train, real.val, c.student, d, combine_seed(c.seed, kStudentInit));
    run.log.config_hash = c.hash();

    StudentStage stage{run.student, make_checkpoint(run.student), run.log, paths.student_checkpoint};
    stage.checkpoint.config_hash = c.hash();
    stage.checkpoint.seed = c.seed;
    stage.checkpoint.epoch = static_cast<std::uint32_t>(run.log.selected_epoch);
    stage.checkpoint.provenance = {{"real_manifest", real.manifest.hash()}, {"teacher", teacher_digest}};
    save_checkpoint(stage.path, stage.checkpoint);
    write_text(paths.out / (student_file_stem(c.student.variant, distilled) + ".log.jsonl"), run.log.to_jsonl());
    return stage;
}

MetricsReport run_eval(const RunConfig& c, bool allow_provenance_mismatch) {
    const RunPaths paths = RunPaths::resolve(c);
    const Checkpoint ckpt = load_checkpoint(paths.student_checkpoint);
    const Student<float> student = restore_student(ckpt);
    const RealData real = load_real(c, paths, true);

    if (!allow_provenance_mismatch) {
        if (ckpt.config_hash != c.hash())
            throw CompatibilityError("student checkpoint was produced under config " + ckpt.config_hash +
                                     ", the current config hashes to " + c.hash());
        if (provenance_or(ckpt, "real_manifest") != real.manifest.hash())
            throw CompatibilityError("student was trained on proxy_real dataset " + provenance_or(ckpt, "real_manifest") +
                                     ", evaluating on " + real.manifest.hash());
        const std::string teacher = provenance_or(ckpt, "teacher");
        if (teacher != "none") {
            if (!fs::exists(paths.teacher_checkpoint))
                throw CompatibilityError("student was distilled from teacher " + teacher + " but '" +
                                         paths.teacher_checkpoint.string() + "' does not exist");
            const auto digest = checkpoint_digest(load_checkpoint(paths.teacher_checkpoint));
            if (digest != teacher)
                throw CompatibilityError("student was distilled from teacher " + teacher + ", '" +
                                         paths.teacher_checkpoint.string() + "' is " + digest);
        }
    }
    if (!(student.config() == c.student))
        throw CompatibilityError("student checkpoint holds " + ckpt.model_config + ", the config expects " +
                                 student_config_json(c.student));

    const MetricsReport report = evaluate(student, real.test, c);
    write_text(paths.out / ("metrics_" + student_file_stem(c.student.variant, distillation_enabled(c)) + ".json"),
               report.to_json());
    return report;
}

const AblationCell& AblationTable::cell(const std::string& row, StudentVariant variant) const {
    for (const auto& c : cells)
        if (c.row == row && c.variant == variant) return c;
    throw RangeError("no ablation cell (" + row + ", " + to_string(variant) + ")");
}

std::string AblationTable::to_json() const {
    json out = json::array();
    for (const auto& c : cells) {
        json j{{"row", c.row}, {"variant", to_string(c.variant)}, {"present", c.report.has_value()}};
        if (c.report) j["metrics"] = json::parse(c.report->to_json());
        else j["note"] = c.note;
        out.push_back(std::move(j));
    }
    return out.dump(2) + "\n";
}

std::string AblationTable::to_text() const {
    std::size_t first = 0;
    for (const auto& r : rows) first = std::max(first, r.size());
    constexpr int width = 17;
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(first) + 2) << "Info.";
    for (auto v : variants) os << std::setw(width) << to_string(v);
    os << '\n' << std::setw(static_cast<int>(first) + 2) << "";
    for (std::size_t i = 0; i < variants.size(); ++i) os << std::setw(width) << "Acc    AUC";
    os << '\n';
    for (const auto& r : rows) {
        os << std::setw(static_cast<int>(first) + 2) << r;
        for (auto v : variants) {
            const auto& c = cell(r, v);
            std::string s = "absent";
            if (c.report) s = fixed3(c.report->acc) + "  " + (c.report->auc ? fixed3(*c.report->auc) : std::string("n/a"));
            os << std::setw(width) << s;
        }
        os << '\n';
    }
    return os.str();
}

AblationTable run_ablation(const RunConfig& c, const std::vector<StudentVariant>& variants) {
    const RunPaths paths = RunPaths::resolve(c);
    const RealData real = load_real(c, paths, true);

    AblationTable table;
    table.variants = variants;
    table.rows.push_back(kWithoutDistillRow);
    for (const auto& s : StreamSet::table_rows()) table.rows.push_back(s.name());

    auto train_cells = [&](const std::string& row, const RunConfig& base, const Teacher<float>* teacher) {
        const auto train = build_student_examples(paths.real_data, real.manifest, real.split.train,
                                                  base.resolved_distill(), teacher);
        for (auto v : variants) {
            RunConfig cell = base;
            cell.student.variant = v;
            const auto run = distill_student(train, real.val, cell.student, cell.resolved_distill(),
                                             combine_seed(cell.seed, kStudentInit));
            table.cells.push_back({row, v, evaluate(run.student, real.test, cell), ""});
        }
    };

    RunConfig plain = c;
    plain.distill.weights.response = plain.distill.weights.feature = 0.0;
    train_cells(kWithoutDistillRow, plain, nullptr);

    RunConfig distilled = c;
    if (!distillation_enabled(distilled)) distilled.distill.weights = LossWeights{};
    for (const auto& streams : StreamSet::table_rows()) {
        RunConfig row = distilled;
        row.teacher.streams = streams;
        row.teacher_checkpoint.clear();
        if (streams == c.teacher.streams) row.teacher_checkpoint = c.teacher_checkpoint;
        const fs::path path = RunPaths::resolve(row).teacher_checkpoint;
        if (!fs::exists(path)) {
            for (auto v : variants) table.cells.push_back({streams.name(), v, std::nullopt, "no teacher checkpoint at " + path.string()});
            continue;
        }
        const Teacher<float> teacher = load_teacher(path, row.teacher);
        train_cells(streams.name(), row, &teacher);
    }

    write_text(paths.out / "ablation.json", table.to_json());
    write_text(paths.out / "ablation.txt", table.to_text());
    return table;
}

}  // namespace vrpcp
