#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vrpcp {

struct Confusion {
    long tp = 0, fp = 0, fn = 0, tn = 0;
    bool operator==(const Confusion&) const = default;
};

/// Binary classification metrics for the crossing class. Ratios whose
/// denominator is zero, and AUC on a single-class label set, are absent.
struct MetricsReport {
    double acc = 0.0;
    std::optional<double> auc;
    std::optional<double> f1;
    std::optional<double> precision;
    std::optional<double> recall;
    Confusion confusion;
    long n_examples = 0;
    std::string config_hash;
    std::uint64_t seed = 0;

    bool operator==(const MetricsReport&) const = default;

    std::string to_json() const;
    static MetricsReport from_json(const std::string& text);
};

/// Threshold 0.5 on the crossing probability; exactly 0.5 predicts class 0.
Confusion confusion_at_half(const std::vector<double>& scores, const std::vector<int>& labels);

/// Probability that a random positive outscores a random negative, ties
/// counting one half, computed from midranks in O(n log n).
std::optional<double> rank_auc(const std::vector<double>& scores, const std::vector<int>& labels);

MetricsReport compute_metrics(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace vrpcp
