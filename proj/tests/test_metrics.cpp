#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "rareclass/metrics.hpp"
#include "support/surrogate.hpp"

using namespace rareclass;

namespace {

double mann_whitney(const std::vector<int>& y, const std::vector<double>& s) {
    double wins = 0.0;
    std::size_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == 1) ++pos; else ++neg;
        if (y[i] != 1) continue;
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (y[j] == 1) continue;
            wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
    }
    return wins / static_cast<double>(pos * neg);
}

}  // namespace

TEST_CASE("confusion counts") {
    const std::vector<int> y{1, 1, 0, 0};
    const auto c = confusion(y, std::vector<double>{0.9, 0.4, 0.6, 0.1}, 0.5);
    CHECK(c.tp == 1);
    CHECK(c.fn == 1);
    CHECK(c.fp == 1);
    CHECK(c.tn == 1);

    const auto perfect = confusion(y, std::vector<double>{0.9, 0.8, 0.2, 0.1}, 0.5);
    CHECK(perfect.fp == 0);
    CHECK(perfect.fn == 0);
    const auto low = confusion(y, std::vector<double>{0.1, 0.2, 0.3, 0.4}, 0.5);
    CHECK(low.tp == 0);
    CHECK(low.fp == 0);
    // A score equal to the threshold counts as positive.
    CHECK(confusion(std::vector<int>{1}, std::vector<double>{0.5}, 0.5).tp == 1);
    CHECK_THROWS_AS(confusion(y, std::vector<double>{0.1}, 0.5), Error);
}

TEST_CASE("metric set arithmetic") {
    const MetricSet m = metric_set({8, 1, 2, 89});
    CHECK(m.precision == doctest::Approx(0.889).epsilon(0.001));
    CHECK(m.recall == doctest::Approx(0.800).epsilon(0.001));
    CHECK(m.far == doctest::Approx(0.011).epsilon(0.01));
    CHECK(m.balanced_accuracy == doctest::Approx(0.894).epsilon(0.001));
    CHECK(std::abs(m.balanced_accuracy - (0.8 + 89.0 / 90.0) / 2.0) < 1e-15);

    const MetricSet p = metric_set({10, 0, 0, 90});
    CHECK(p.precision == 1.0);
    CHECK(p.recall == 1.0);
    CHECK(p.balanced_accuracy == 1.0);
    CHECK(p.far == 0.0);

    const MetricSet none = metric_set({0, 0, 10, 90});
    CHECK(none.recall == 0.0);
    CHECK(none.precision == 0.0);
    CHECK(none.precision_undefined);
    CHECK_FALSE(none.recall_undefined);
}

TEST_CASE("metric values stay in the unit interval") {
    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
        const ConfusionMatrix c{rng.below(20), rng.below(20), rng.below(20), rng.below(20)};
        const MetricSet m = metric_set(c);
        for (double v : {m.precision, m.recall, m.far, m.balanced_accuracy}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("ROC endpoints and orderings") {
    const std::vector<int> y{1, 1, 0, 0};
    const RocCurve good = roc_curve(y, std::vector<double>{0.9, 0.8, 0.2, 0.1});
    CHECK(good.auc == 1.0);
    CHECK(roc_curve(y, std::vector<double>{0.1, 0.2, 0.8, 0.9}).auc == 0.0);
    CHECK(good.points.front().fpr == 0.0);
    CHECK(good.points.front().tpr == 0.0);
    CHECK(std::isinf(good.points.front().threshold));
    CHECK(good.points.back().fpr == 1.0);
    CHECK(good.points.back().tpr == 1.0);
    CHECK_THROWS_AS(roc_curve(std::vector<int>{1, 1}, std::vector<double>{0.2, 0.3}), Error);
}

TEST_CASE("AUC equals the Mann-Whitney statistic on random vectors") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 5 + rng.below(60);
        std::vector<int> y(n);
        std::vector<double> s(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = i < 2 ? static_cast<int>(i) : (rng.uniform() < 0.3 ? 1 : 0);
            // Coarse scores so ties occur.
            s[i] = trial % 2 ? std::round(rng.uniform() * 8) / 8 : rng.uniform();
        }
        const RocCurve c = roc_curve(y, s);
        CHECK(std::abs(c.auc - mann_whitney(y, s)) < 1e-9);
        for (std::size_t i = 1; i < c.points.size(); ++i) {
            CHECK(c.points[i].fpr >= c.points[i - 1].fpr);
            CHECK(c.points[i].tpr >= c.points[i - 1].tpr);
        }
        std::vector<double> t(n);
        std::transform(s.begin(), s.end(), t.begin(), [](double v) { return std::exp(3 * v) - 7; });
        CHECK(roc_curve(y, t).auc == doctest::Approx(c.auc).epsilon(1e-12));
    }
}

TEST_CASE("table-style rows are reproduced from integer counts") {
    const ConfusionMatrix c{25, 3, 5, 437};
    const MetricSet m = metric_set(c);
    CHECK(format_fixed(m.precision, 2) == "0.89");
    CHECK(format_fixed(m.recall, 2) == "0.83");
}

TEST_CASE("ROC CSV export") {
    const auto dir = rareclass::testing::fresh_dir("roc_csv");
    const RocCurve c = roc_curve(std::vector<int>{1, 0, 1, 0}, std::vector<double>{0.9, 0.7, 0.6, 0.1});
    write_roc_csv(c, dir / "roc.csv");
    const std::string text = rareclass::testing::read_file(dir / "roc.csv");
    CHECK(text.rfind("fpr,tpr,threshold\n", 0) == 0);
    CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == c.points.size() + 1);
}
