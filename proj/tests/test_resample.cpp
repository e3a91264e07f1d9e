#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "rareclass/resample.hpp"

using namespace rareclass;

namespace {

Dataset cloud(std::size_t n_neg, std::size_t n_pos, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    FeatureMatrix x(n_neg + n_pos, cols);
    std::vector<int> y(n_neg + n_pos, 0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        y[r] = r >= n_neg ? 1 : 0;
        for (std::size_t c = 0; c < cols; ++c) x.set(r, c, rng.normal() + (y[r] ? 1.0 : 0.0));
    }
    return make_dataset(std::move(x), std::move(y));
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

}  // namespace

TEST_CASE("interpolation endpoints") {
    const std::vector<double> a{1, 2, 3};
    const std::vector<double> b{3, 0, 3};
    CHECK(interpolate(a, b, 0.0) == a);
    CHECK(interpolate(a, b, 1.0) == b);
    CHECK(interpolate(a, b, 0.5) == std::vector<double>{2, 1, 3});
}

TEST_CASE("smote: 73 minority / 1024 majority at 0.7 gives 716") {
    const Dataset d = cloud(1024, 73, 3, 1);
    auto [out, plan] = smote(d, {0.7, 5, 42});
    CHECK(out.count_class(1) == 716);
    CHECK(out.count_class(0) == 1024);
    CHECK(plan.after.minority == 716);
    CHECK(plan.records.size() == 716 - 73);
    CHECK(plan.synthetic.size() == out.rows());
}

TEST_CASE("smote: every synthetic row follows its recorded parents") {
    const Dataset d = cloud(200, 30, 4, 2);
    auto [out, plan] = smote(d, {1.0, 5, 3});
    std::vector<std::size_t> minority;
    for (std::size_t r = 0; r < d.rows(); ++r) {
        if (d.labels[r] == 1) minority.push_back(r);
    }
    for (const auto& rec : plan.records) {
        const auto x_i = d.features.row(rec.parent);
        const auto x_j = d.features.row(rec.neighbor);
        const auto got = out.features.row(rec.output_row);
        CHECK(d.labels[rec.parent] == 1);
        CHECK(d.labels[rec.neighbor] == 1);
        CHECK(out.labels[rec.output_row] == 1);
        CHECK(plan.synthetic[rec.output_row]);
        CHECK(out.row_ids[rec.output_row] == kSyntheticRow);
        CHECK(rec.lambda >= 0.0);
        CHECK(rec.lambda < 1.0);
        for (std::size_t c = 0; c < d.cols(); ++c) {
            CHECK(got[c] == x_i[c] + rec.lambda * (x_j[c] - x_i[c]));
            CHECK(got[c] >= std::min(x_i[c], x_j[c]));
            CHECK(got[c] <= std::max(x_i[c], x_j[c]));
        }
        // The neighbour is among the parent's five nearest minority rows.
        const double dj = sq_dist(x_i, x_j);
        std::size_t closer = 0;
        for (std::size_t m : minority) {
            if (m != rec.parent && sq_dist(x_i, d.features.row(m)) < dj) ++closer;
        }
        CHECK(closer < 5);
    }
    // Original rows are preserved, in order, and never flagged.
    for (std::size_t r = 0; r < d.rows(); ++r) {
        CHECK_FALSE(plan.synthetic[r]);
        CHECK(out.row_ids[r] == d.row_ids[r]);
        for (std::size_t c = 0; c < d.cols(); ++c) CHECK(out.features.value(r, c) == d.features.value(r, c));
    }
}

TEST_CASE("smote errors and the already-met case") {
    CHECK_THROWS_WITH_AS(smote(cloud(50, 5, 2, 1), {1.0, 5, 1}), doctest::Contains("must exceed k_neighbors"), Error);
    CHECK_THROWS_AS(smote(cloud(50, 10, 2, 1), {0.0, 5, 1}), Error);
    CHECK_THROWS_AS(smote(cloud(50, 10, 2, 1), {1.5, 5, 1}), Error);
    const Dataset d = cloud(40, 20, 2, 1);
    auto [out, plan] = smote(d, {0.5, 5, 1});
    CHECK(out.features == d.features);
    REQUIRE(plan.warnings.size() == 1);
    CHECK(plan.warnings[0].find("already met") != std::string::npos);
}

TEST_CASE("random undersampling") {
    {
        auto [out, plan] = random_undersample(cloud(100, 10, 2, 1), 1.0, 5);
        CHECK(out.count_class(0) == 10);
        CHECK(out.count_class(1) == 10);
    }
    {
        const Dataset d = cloud(100, 40, 2, 1);
        auto [out, plan] = random_undersample(d, 0.8, 5);
        CHECK(out.count_class(0) == 50);
        CHECK(out.count_class(1) == 40);
        // Minority untouched, kept majority rows are original rows.
        std::set<std::size_t> ids(out.row_ids.begin(), out.row_ids.end());
        for (std::size_t r = 0; r < d.rows(); ++r) {
            if (d.labels[r] == 1) CHECK(ids.count(d.row_ids[r]) == 1);
        }
        CHECK(random_undersample(d, 0.8, 5).first.row_ids == out.row_ids);
        CHECK(random_undersample(d, 0.8, 6).first.row_ids != out.row_ids);
    }
    {
        const Dataset d = cloud(100, 40, 2, 1);
        auto [out, plan] = random_undersample(d, 0.4, 5);
        CHECK(out.features == d.features);
        CHECK_FALSE(plan.warnings.empty());
    }
    CHECK_THROWS_AS(random_undersample(cloud(100, 10, 2, 1), 0.0, 5), Error);
}

TEST_CASE("combined resampling reaches 4:5 from 1:14") {
    const Dataset d = cloud(1400, 100, 3, 4);
    auto [out, plan] = combined_resample(d, 0.4, 0.8, 5, 9);
    CHECK(out.count_class(1) == 560);
    CHECK(out.count_class(0) == 700);
    CHECK(plan.strategy == ResampleStrategy::combined);
    for (const auto& rec : plan.records) {
        REQUIRE(rec.output_row < out.rows());
        const auto got = out.features.row(rec.output_row);
        for (std::size_t c = 0; c < d.cols(); ++c) {
            const double a = d.features.value(rec.parent, c), b = d.features.value(rec.neighbor, c);
            CHECK(got[c] == a + rec.lambda * (b - a));
        }
    }

    auto [bal, bplan] = combined_resample(cloud(300, 30, 2, 5), 1.0, 1.0, 5, 1);
    CHECK(bal.count_class(0) == bal.count_class(1));

    const Dataset s = cloud(500, 40, 2, 6);
    auto [only, oplan] = combined_resample(s, 0.7, std::nullopt, 5, 13);
    auto [ref, rplan] = smote(s, {0.7, 5, 13});
    CHECK(only.features == ref.features);
    CHECK(only.labels == ref.labels);
}

TEST_CASE("resampling is independent of the thread count") {
    const Dataset d = cloud(400, 30, 5, 8);
    const std::size_t before = num_threads();
    set_num_threads(1);
    auto one = combined_resample(d, 0.4, 0.8, 5, 21).first;
    set_num_threads(4);
    auto four = combined_resample(d, 0.4, 0.8, 5, 21).first;
    set_num_threads(before);
    CHECK(one.features == four.features);
    CHECK(one.row_ids == four.row_ids);
}
