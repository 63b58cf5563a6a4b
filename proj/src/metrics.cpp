#include "vrpcp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "vrpcp/errors.hpp"

namespace vrpcp {

using nlohmann::json;

namespace {

void check_inputs(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.empty()) throw DataError("metrics need at least one example");
    if (scores.size() != labels.size())
        throw DimensionError("metrics: " + std::to_string(scores.size()) + " scores but " +
                             std::to_string(labels.size()) + " labels");
    for (int y : labels)
        if (y != 0 && y != 1) throw RangeError("metrics: label " + std::to_string(y) + " is not 0 or 1");
    for (double s : scores)
        if (!std::isfinite(s)) throw NumericDomainError("metrics: non-finite score");
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j, const char* key) {
    const auto& v = j.at(key);
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
}

}  // namespace

Confusion confusion_at_half(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_inputs(scores, labels);
    Confusion c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] > 0.5;
        if (labels[i] == 1)
            (predicted ? c.tp : c.fn) += 1;
        else
            (predicted ? c.fp : c.tn) += 1;
    }
    return c;
}

std::optional<double> rank_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_inputs(scores, labels);
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double positive_rank_sum = 0.0;
    long n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) {
                positive_rank_sum += midrank;
                ++n_pos;
            }
        i = j;
    }
    const long n_neg = static_cast<long>(n) - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;
    const double p = static_cast<double>(n_pos);
    return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(n_neg));
}

MetricsReport compute_metrics(const std::vector<double>& scores, const std::vector<int>& labels) {
    MetricsReport r;
    r.confusion = confusion_at_half(scores, labels);
    const auto& c = r.confusion;
    r.n_examples = static_cast<long>(scores.size());
    r.acc = static_cast<double>(c.tp + c.tn) / static_cast<double>(r.n_examples);
    if (c.tp + c.fp > 0) r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (r.precision && r.recall && *r.precision + *r.recall > 0.0)
        r.f1 = 2.0 * *r.precision * *r.recall / (*r.precision + *r.recall);
    r.auc = rank_auc(scores, labels);
    return r;
}

std::string MetricsReport::to_json() const {
    json j{{"acc", acc},
           {"auc", optional_json(auc)},
           {"f1", optional_json(f1)},
           {"precision", optional_json(precision)},
           {"recall", optional_json(recall)},
           {"auc_defined", auc.has_value()},
           {"confusion", {{"tp", confusion.tp}, {"fp", confusion.fp}, {"fn", confusion.fn}, {"tn", confusion.tn}}},
           {"n_examples", n_examples},
           {"config_hash", config_hash},
           {"seed", seed}};
    return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        MetricsReport r;
        r.acc = j.at("acc").get<double>();
        r.auc = optional_from(j, "auc");
        r.f1 = optional_from(j, "f1");
        r.precision = optional_from(j, "precision");
        r.recall = optional_from(j, "recall");
        const auto& c = j.at("confusion");
        r.confusion = {c.at("tp").get<long>(), c.at("fp").get<long>(), c.at("fn").get<long>(), c.at("tn").get<long>()};
        r.n_examples = j.at("n_examples").get<long>();
        r.config_hash = j.at("config_hash").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        return r;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed metrics report: ") + e.what());
    }
}

}  // namespace vrpcp
