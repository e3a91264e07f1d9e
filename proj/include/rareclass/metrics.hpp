#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace rareclass {

struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const { return tp + fp + fn + tn; }
};

/// Ratios with a zero denominator are reported as 0 and flagged.
struct MetricSet {
    double balanced_accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double far = 0.0;
    bool precision_undefined = false;
    bool recall_undefined = false;
    bool far_undefined = false;
};

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;
    double auc = 0.0;
};

/// Predicts positive iff score >= threshold.
ConfusionMatrix confusion(std::span<const int> labels, std::span<const double> scores, double threshold);

MetricSet metric_set(const ConfusionMatrix& c);

/// Thresholds sweep the distinct scores in descending order, preceded by a +inf
/// sentinel; tied scores form one step. AUC by the trapezoid rule.
RocCurve roc_curve(std::span<const int> labels, std::span<const double> scores);

/// Lines "fpr,tpr,threshold" with a header.
void write_roc_csv(const RocCurve& curve, const std::filesystem::path& path);

/// Standalone SVG of one or more curves with a diagonal reference.
void write_roc_svg(const std::vector<std::pair<std::string, RocCurve>>& curves, const std::string& title,
                   const std::filesystem::path& path);

}  // namespace rareclass
