#include "rareclass/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>

#include "rareclass/common.hpp"

namespace rareclass {

ConfusionMatrix confusion(std::span<const int> labels, std::span<const double> scores, double threshold) {
    if (labels.size() != scores.size()) throw Error("confusion: length mismatch");
    if (labels.empty()) throw Error("confusion: empty input");
    ConfusionMatrix c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        if (labels[i] == 1) {
            ++(predicted ? c.tp : c.fn);
        } else {
            ++(predicted ? c.fp : c.tn);
        }
    }
    return c;
}

namespace {
double ratio(std::size_t num, std::size_t den, bool& undefined) {
    undefined = den == 0;
    return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace

MetricSet metric_set(const ConfusionMatrix& c) {
    MetricSet m;
    m.precision = ratio(c.tp, c.tp + c.fp, m.precision_undefined);
    m.recall = ratio(c.tp, c.tp + c.fn, m.recall_undefined);
    m.far = ratio(c.fp, c.fp + c.tn, m.far_undefined);
    m.balanced_accuracy = 0.5 * (m.recall + (1.0 - m.far));
    return m;
}

RocCurve roc_curve(std::span<const int> labels, std::span<const double> scores) {
    if (labels.size() != scores.size()) throw Error("roc_curve: length mismatch");
    const std::size_t pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) throw Error("roc_curve: both classes required");

    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            ++(labels[order[i]] == 1 ? tp : fp);
            ++i;
        }
        curve.points.push_back({static_cast<double>(fp) / neg, static_cast<double>(tp) / pos, s});
    }
    double area = 0.0;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
    }
    curve.auc = std::clamp(area, 0.0, 1.0);
    return curve;
}

void write_roc_csv(const RocCurve& curve, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "fpr,tpr,threshold\n";
    for (const auto& p : curve.points) {
        out << format_double(p.fpr) << ',' << format_double(p.tpr) << ',' << format_double(p.threshold) << '\n';
    }
}

void write_roc_svg(const std::vector<std::pair<std::string, RocCurve>>& curves, const std::string& title,
                   const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    constexpr double size = 400.0;
    constexpr double margin = 50.0;
    const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
    auto px = [&](double f) { return format_fixed(margin + f * size, 2); };
    auto py = [&](double t) { return format_fixed(margin + (1.0 - t) * size, 2); };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * margin + 160 << "\" height=\""
        << size + 2 * margin << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << margin << "\" y=\"30\" font-family=\"sans-serif\" font-size=\"14\">" << title
        << "</text>\n";
    out << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << size << "\" height=\"" << size
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
        << "\" stroke=\"gray\" stroke-dasharray=\"4,4\"/>\n";
    out << "<text x=\"" << margin + size / 2 - 60 << "\" y=\"" << size + margin + 35
        << "\" font-family=\"sans-serif\" font-size=\"12\">False Positive Rate</text>\n";
    out << "<text x=\"15\" y=\"" << margin + size / 2 + 50 << "\" font-family=\"sans-serif\" font-size=\"12\" "
        << "transform=\"rotate(-90 15 " << margin + size / 2 + 50 << ")\">True Positive Rate</text>\n";
    for (std::size_t k = 0; k < curves.size(); ++k) {
        const auto& [name, curve] = curves[k];
        const char* colour = palette[k % 6];
        out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
        for (const auto& p : curve.points) out << px(p.fpr) << ',' << py(p.tpr) << ' ';
        out << "\"/>\n";
        out << "<text x=\"" << size + margin + 10 << "\" y=\"" << margin + 15 + 18 * static_cast<double>(k)
            << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << colour << "\">" << name
            << " (AUC " << format_fixed(curve.auc, 3) << ")</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace rareclass
