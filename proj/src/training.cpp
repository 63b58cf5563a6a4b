#include "vrpcp/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "vrpcp/errors.hpp"
#include "vrpcp/rng.hpp"

namespace vrpcp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum : std::uint64_t { kSplitStream = 0x5011, kWindowStream = 0x3A3D, kShuffleStream = 0x5F1E, kDropoutStream = 0xD209 };

void require_both_classes(const std::vector<int>& labels, const char* what) {
    bool pos = false, neg = false;
    for (int y : labels) (y == 1 ? pos : neg) = true;
    if (!pos || !neg) throw ConfigError(std::string(what) + " needs examples of both classes");
}

Vec<float> to_vec(const std::vector<float>& v) {
    Vec<float> out(static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Index>(i)) = v[i];
    return out;
}

std::vector<WindowRef> sample_windows(std::vector<WindowRef> windows, const WindowSampling& sampling, CounterRng rng) {
    std::vector<WindowRef> pos, neg;
    for (const auto& w : windows) (w.label == 1 ? pos : neg).push_back(w);
    auto take = [&rng](std::vector<WindowRef>& v, int cap) {
        if (cap < 0 || static_cast<int>(v.size()) <= cap) return;
        rng.shuffle(v);
        v.resize(static_cast<std::size_t>(cap));
    };
    take(pos, sampling.max_positive);
    take(neg, sampling.max_negative);
    std::vector<WindowRef> out;
    // Keep the enumeration order so the result does not depend on the shuffle.
    for (const auto& w : windows)
        if (std::find(pos.begin(), pos.end(), w) != pos.end() || std::find(neg.begin(), neg.end(), w) != neg.end())
            out.push_back(w);
    return out;
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    CounterRng(seed, kShuffleStream).child(static_cast<std::uint64_t>(epoch)).shuffle(order);
    return order;
}

int predicted_class(double p_crossing) { return p_crossing > 0.5 ? 1 : 0; }

template <typename Scalar>
double crossing_probability(const Tensor<Scalar>& logits) {
    return static_cast<double>(softmax(detach(logits)).value()(1));
}

}  // namespace

void DistillConfig::validate() const {
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (weights.response < 0 || weights.feature < 0 || weights.task < 0)
        throw ConfigError("loss weights must be >= 0");
    if (teacher_epochs < 1 || student_epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(adam.lr > 0.0) || !(student_lr > 0.0)) throw ConfigError("learning rate must be > 0");
    if (window_stride < 1) throw ConfigError("window_stride must be >= 1");
    if (clip.n_frames < 2) throw ConfigError("observation length must be >= 2 frames");
    if (clip.ttc[0] < 1 || clip.ttc[1] < clip.ttc[0]) throw ConfigError("ttc must satisfy 1 <= lo <= hi");
}

DatasetSplit split_dataset(const Manifest& manifest, double train_fraction, double val_fraction, std::uint64_t seed) {
    if (train_fraction < 0 || val_fraction < 0 || train_fraction + val_fraction > 1.0)
        throw ConfigError("split fractions must be >= 0 and sum to at most 1");
    DatasetSplit split;
    for (int label : {1, 0}) {
        std::vector<std::size_t> ids;
        for (std::size_t i = 0; i < manifest.entries.size(); ++i)
            if (manifest.entries[i].label == label) ids.push_back(i);
        CounterRng(seed, kSplitStream).child(static_cast<std::uint64_t>(label)).shuffle(ids);
        const auto n = static_cast<double>(ids.size());
        const auto n_train = static_cast<std::size_t>(std::lround(train_fraction * n));
        const auto n_val = std::min(ids.size() - n_train, static_cast<std::size_t>(std::lround(val_fraction * n)));
        for (std::size_t k = 0; k < ids.size(); ++k)
            (k < n_train ? split.train : (k < n_train + n_val ? split.val : split.test)).push_back(ids[k]);
    }
    for (auto* part : {&split.train, &split.val, &split.test}) std::sort(part->begin(), part->end());
    return split;
}

std::vector<TeacherExample> build_teacher_examples(const fs::path& dir, const Manifest& manifest,
                                                   const std::vector<std::size_t>& sequences,
                                                   const DistillConfig& config, const StreamSet& streams,
                                                   const WindowSampling& sampling, std::uint64_t seed) {
    std::vector<TeacherExample> out;
    for (std::size_t idx : sequences) {
        const AnnotatedSequence seq = load_sequence(dir, manifest, idx);
        std::optional<Scenario> scenario;
        if (config.clip.motion == MotionSource::ground_truth)
            scenario = simulate_scenario(scenario_for(manifest.config, static_cast<int>(idx)));
        const auto windows = sample_windows(enumerate_windows(seq, config.clip, config.window_stride), sampling,
                                            CounterRng(seed, kWindowStream).child(idx));
        for (const auto& w : windows) {
            const ClipInputs clip =
                assemble_clip(seq, w.t_start, w.track, config.clip, scenario ? &*scenario : nullptr);
            out.push_back({make_teacher_inputs<float>(clip, streams), clip.label});
        }
    }
    return out;
}

Vec<float> rectify_teacher_feature(const Vec<float>& feature) {
    return softplus(Tensor<float>::constant({feature.size()}, feature)).value();
}

std::vector<StudentExample> build_student_examples(const fs::path& dir, const Manifest& manifest,
                                                   const std::vector<std::size_t>& sequences,
                                                   const DistillConfig& config, const Teacher<float>* teacher) {
    std::vector<StudentExample> out;
    for (std::size_t idx : sequences) {
        const AnnotatedSequence seq = load_sequence(dir, manifest, idx);
        std::optional<Scenario> scenario;
        if (teacher && config.clip.motion == MotionSource::ground_truth)
            scenario = simulate_scenario(scenario_for(manifest.config, static_cast<int>(idx)));
        for (const auto& w : enumerate_windows(seq, config.clip, config.window_stride)) {
            StudentExample e;
            e.sequence = idx;
            if (teacher) {
                const ClipInputs clip =
                    assemble_clip(seq, w.t_start, w.track, config.clip, scenario ? &*scenario : nullptr);
                const auto in = make_teacher_inputs<float>(clip, teacher->config().streams);
                const auto t_out = teacher->forward(in, Mode::eval, nullptr);
                e.boxes = in.boxes;
                e.label = clip.label;
                e.teacher_logits = t_out.logits.value();
                e.teacher_feature = rectify_teacher_feature(t_out.feature.value());
            } else {
                const ClipInputs clip = assemble_boxes(seq, w.t_start, w.track, config.clip);
                e.boxes = Tensor<float>::constant({clip.n_frames, 4}, to_vec(clip.boxes));
                e.label = clip.label;
            }
            out.push_back(std::move(e));
        }
    }
    return out;
}

std::string TrainLog::to_jsonl() const {
    std::ostringstream os;
    os << json{{"kind", kind}, {"seed", seed}, {"config_hash", config_hash}, {"selected_epoch", selected_epoch}}.dump()
       << '\n';
    for (const auto& e : epochs) {
        json j{{"epoch", e.epoch},
               {"loss_response", e.loss_response},
               {"loss_feature", e.loss_feature},
               {"loss_task", e.loss_task},
               {"loss_total", e.loss_total},
               {"train_acc", e.train_acc},
               {"val_acc", e.val_acc ? json(*e.val_acc) : json(nullptr)},
               {"wall_seconds", e.wall_seconds}};
        os << j.dump() << '\n';
    }
    return os.str();
}

double accuracy(const std::vector<double>& probabilities, const std::vector<int>& labels) {
    if (probabilities.size() != labels.size() || labels.empty())
        throw DimensionError("accuracy needs equally sized, nonempty inputs");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted_class(probabilities[i]) == labels[i];
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<double> predict(const Teacher<float>& teacher, const std::vector<TeacherExample>& examples) {
    std::vector<double> out;
    out.reserve(examples.size());
    if (examples.empty()) return out;
    const auto disabled = teacher.disabled_encodings(examples.front().inputs.boxes.dim(0));
    for (const auto& e : examples) out.push_back(crossing_probability(teacher.forward(e.inputs, Mode::eval, nullptr, &disabled).logits));
    return out;
}

std::vector<double> predict(const Student<float>& student, const std::vector<StudentExample>& examples) {
    std::vector<double> out;
    out.reserve(examples.size());
    for (const auto& e : examples) out.push_back(static_cast<double>(student.forward(e.boxes, Mode::eval, nullptr).probabilities.value()(1)));
    return out;
}

TeacherRun train_teacher(const std::vector<TeacherExample>& train, const std::vector<TeacherExample>& val,
                         const TeacherConfig& teacher_config, const DistillConfig& config, std::uint64_t seed) {
    config.validate();
    if (train.empty()) throw ConfigError("teacher training set is empty");
    require_both_classes(labels_of(train), "teacher training");

    TeacherRun run{Teacher<float>::create(teacher_config, seed), {}};
    run.log.kind = "teacher";
    run.log.seed = seed;
    const auto params = run.teacher.parameters();
    Adam<float> adam(params, config.adam);
    const Index n_frames = train.front().inputs.boxes.dim(0);

    std::vector<Vec<float>> best;
    double best_val = -1.0;
    Timer timer;
    for (int epoch = 1; epoch <= config.teacher_epochs; ++epoch) {
        const auto order = epoch_order(train.size(), seed, epoch);
        EpochRecord rec;
        rec.epoch = epoch;
        std::size_t hits = 0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(config.batch_size));
            adam.zero_grad();
            const auto disabled = run.teacher.disabled_encodings(n_frames);
            for (std::size_t k = b; k < end; ++k) {
                const auto& ex = train[order[k]];
                CounterRng dropout_rng = CounterRng(seed, kDropoutStream).child(static_cast<std::uint64_t>(epoch)).child(k);
                const auto out = run.teacher.forward(ex.inputs, Mode::train, &dropout_rng, &disabled);
                const auto loss = loss_task(ex.label, out.logits);
                backward(loss);
                rec.loss_task += static_cast<double>(loss.item());
                hits += predicted_class(crossing_probability(out.logits)) == ex.label;
            }
            adam.step(1.0 / static_cast<double>(end - b));
        }
        rec.loss_task /= static_cast<double>(train.size());
        rec.loss_total = rec.loss_task;
        rec.train_acc = static_cast<double>(hits) / static_cast<double>(train.size());
        if (!val.empty()) {
            rec.val_acc = accuracy(predict(run.teacher, val), labels_of(val));
            if (*rec.val_acc > best_val) {
                best_val = *rec.val_acc;
                run.log.selected_epoch = epoch;
                best.clear();
                for (const auto& [name, t] : params) best.push_back(t.value());
            }
        }
        rec.wall_seconds = timer.seconds();
        run.log.epochs.push_back(rec);
    }
    if (val.empty()) {
        run.log.selected_epoch = config.teacher_epochs;
    } else {
        auto dst = params;
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i].second.mutable_value() = best[i];
    }
    return run;
}

StudentRun distill_student(const std::vector<StudentExample>& train, const std::vector<StudentExample>& val,
                           const StudentConfig& student_config, const DistillConfig& config, std::uint64_t seed) {
    config.validate();
    if (train.empty()) throw ConfigError("student training set is empty");
    require_both_classes(labels_of(train), "student training");
    const bool distill = config.weights.response != 0.0 || config.weights.feature != 0.0;
    if (distill)
        for (const auto& e : train)
            if (e.teacher_logits.size() != 2 || e.teacher_feature.size() != kFeatureDim)
                throw ContractError("distillation needs teacher outputs on every training example");

    StudentRun run{Student<float>::create(student_config, seed), {}};
    run.log.kind = "student/" + to_string(student_config.variant);
    run.log.seed = seed;
    AdamConfig adam_config = config.adam;
    adam_config.lr = config.student_lr;
    Adam<float> adam(run.student.parameters(), adam_config);
    const auto temperature = static_cast<float>(config.temperature);

    Timer timer;
    for (int epoch = 1; epoch <= config.student_epochs; ++epoch) {
        const auto order = epoch_order(train.size(), seed, epoch);
        EpochRecord rec;
        rec.epoch = epoch;
        std::size_t hits = 0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(config.batch_size));
            adam.zero_grad();
            for (std::size_t k = b; k < end; ++k) {
                const auto& ex = train[order[k]];
                CounterRng dropout_rng = CounterRng(seed, kDropoutStream).child(static_cast<std::uint64_t>(epoch)).child(k);
                const auto out = run.student.forward(ex.boxes, Mode::train, &dropout_rng);
                Tensor<float> t_logits, t_feature;
                if (distill) {
                    t_logits = Tensor<float>::constant({2}, ex.teacher_logits);
                    t_feature = Tensor<float>::constant({kFeatureDim}, ex.teacher_feature);
                }
                const auto terms = example_loss(ex.label, out.logits, out.feature, t_logits, t_feature, config.weights,
                                                temperature, config.response_kind());
                backward(terms.total);
                rec.loss_task += static_cast<double>(terms.task.item());
                if (terms.response.defined()) rec.loss_response += static_cast<double>(terms.response.item());
                if (terms.feature.defined()) rec.loss_feature += static_cast<double>(terms.feature.item());
                rec.loss_total += static_cast<double>(terms.total.item());
                hits += predicted_class(static_cast<double>(out.probabilities.value()(1))) == ex.label;
            }
            adam.step(1.0 / static_cast<double>(end - b));
        }
        const auto n = static_cast<double>(train.size());
        rec.loss_task /= n;
        rec.loss_response /= n;
        rec.loss_feature /= n;
        rec.loss_total /= n;
        rec.train_acc = static_cast<double>(hits) / n;
        if (!val.empty()) rec.val_acc = accuracy(predict(run.student, val), labels_of(val));
        rec.wall_seconds = timer.seconds();
        run.log.epochs.push_back(rec);
    }
    run.log.selected_epoch = config.student_epochs;
    return run;
}

}  // namespace vrpcp
