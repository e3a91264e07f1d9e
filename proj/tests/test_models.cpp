#include <cmath>
#include <functional>

#include "doctest.h"
#include "rareclass/metrics.hpp"
#include "rareclass/models.hpp"
#include "support/surrogate.hpp"

using namespace rareclass;

namespace {

Dataset from_rows(const std::vector<std::vector<double>>& rows, std::vector<int> labels) {
    FeatureMatrix x(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) x.set(r, c, rows[r][c]);
    }
    return make_dataset(std::move(x), std::move(labels));
}

Dataset separable(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> rows;
    std::vector<int> y;
    for (int i = 0; i < 60; ++i) {
        const double a = rng.uniform(), b = rng.uniform();
        if (std::abs(a + b - 1.0) < 0.1) continue;
        rows.push_back({a, b});
        y.push_back(a + b > 1.0 ? 1 : 0);
    }
    return from_rows(rows, y);
}

Dataset noisy(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    FeatureMatrix x(rows, cols);
    std::vector<int> y(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        y[r] = rng.uniform() < 0.3 ? 1 : 0;
        for (std::size_t c = 0; c < cols; ++c) x.set(r, c, rng.normal() + (c < 2 && y[r] ? 1.0 : 0.0));
    }
    return make_dataset(std::move(x), std::move(y));
}

double accuracy(const TrainedModel& m, const Dataset& d) {
    const auto s = predict_scores(m, d.features);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < s.size(); ++i) ok += (s[i] >= 0.5) == (d.labels[i] == 1);
    return static_cast<double>(ok) / static_cast<double>(s.size());
}

const std::vector<ModelFamily> kFamilies{ModelFamily::logistic,         ModelFamily::linear_svm,
                                         ModelFamily::decision_tree,    ModelFamily::random_forest,
                                         ModelFamily::gradient_boosting, ModelFamily::regularized_boosting};

ModelSpec quick_spec(ModelFamily f) {
    ModelSpec s = default_spec(f);
    s.n_trees = 15;
    s.n_rounds = 20;
    s.epochs = 200;
    s.seed = 3;
    return s;
}

// Checks depth, leaf size and tree shape recursively.
void check_tree(const Tree& t, std::size_t max_depth, std::size_t min_leaf) {
    REQUIRE_FALSE(t.nodes.empty());
    std::function<void(int, std::size_t)> walk = [&](int i, std::size_t depth) {
        const TreeNode& n = t.nodes[static_cast<std::size_t>(i)];
        CHECK(depth <= max_depth);
        if (n.feature < 0) {
            CHECK(n.count >= min_leaf);
            return;
        }
        CHECK(n.gain > 0.0);
        walk(n.left, depth + 1);
        walk(n.right, depth + 1);
    };
    walk(0, 0);
}

}  // namespace

TEST_CASE("logistic separates a separable toy set") {
    const Dataset d = separable(1);
    ModelSpec s = default_spec(ModelFamily::logistic);
    s.learning_rate = 1.0;
    s.epochs = 3000;
    s.l2 = 0.0;
    const TrainedModel m = train(s, d);
    CHECK(accuracy(m, d) == 1.0);
    const auto scores = predict_scores(m, d.features);
    CHECK(roc_curve(d.labels, scores).auc == 1.0);
    for (std::size_t i = 1; i < m.loss_trace.size(); ++i) CHECK(m.loss_trace[i] <= m.loss_trace[i - 1] + 1e-12);
}

TEST_CASE("trees on XOR: depth 1 is at most 0.75, depth 2 is exact") {
    const Dataset xor4 = from_rows({{0, 0}, {0, 1}, {1, 0}, {1, 1}}, {0, 1, 1, 0});
    ModelSpec s = default_spec(ModelFamily::decision_tree);
    s.min_leaf = 1;
    s.max_depth = 1;
    CHECK(accuracy(train(s, xor4), xor4) <= 0.75);
    s.max_depth = 2;
    // Gini gain of every first split on XOR is zero, so the learner must split
    // through a tie; duplicate one point to break the symmetry.
    const Dataset xor5 = from_rows({{0, 0}, {0, 1}, {1, 0}, {1, 1}, {1, 1}}, {0, 1, 1, 0, 0});
    CHECK(accuracy(train(s, xor5), xor5) == 1.0);
}

TEST_CASE("every family trains, scores in [0, 1] and is deterministic") {
    const Dataset d = noisy(150, 4, 5);
    for (ModelFamily f : kFamilies) {
        CAPTURE(to_string(f));
        const ModelSpec s = quick_spec(f);
        const TrainedModel a = train(s, d);
        const TrainedModel b = train(s, d);
        const auto sa = predict_scores(a, d.features);
        CHECK(sa == predict_scores(b, d.features));
        CHECK(a.loss_trace == b.loss_trace);
        for (double v : sa) {
            CHECK(std::isfinite(v));
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        for (const Tree& t : a.trees) {
            if (f == ModelFamily::decision_tree || f == ModelFamily::random_forest) check_tree(t, s.max_depth, s.min_leaf);
        }
        if (f == ModelFamily::gradient_boosting || f == ModelFamily::regularized_boosting || f == ModelFamily::logistic) {
            for (std::size_t i = 1; i < a.loss_trace.size(); ++i) CHECK(a.loss_trace[i] <= a.loss_trace[i - 1] + 1e-12);
        }
    }
}

TEST_CASE("training is independent of the thread count") {
    const Dataset d = noisy(120, 5, 6);
    const std::size_t before = num_threads();
    for (ModelFamily f : {ModelFamily::random_forest, ModelFamily::regularized_boosting}) {
        set_num_threads(1);
        const auto one = predict_scores(train(quick_spec(f), d), d.features);
        set_num_threads(4);
        const auto four = predict_scores(train(quick_spec(f), d), d.features);
        CHECK(one == four);
    }
    set_num_threads(before);
}

TEST_CASE("empty boosting ensemble scores the prior") {
    const Dataset d = noisy(100, 3, 7);
    ModelSpec s = default_spec(ModelFamily::regularized_boosting);
    s.n_rounds = 0;
    const auto scores = predict_scores(train(s, d), d.features);
    const double p = static_cast<double>(d.count_class(1)) / static_cast<double>(d.rows());
    for (double v : scores) CHECK(v == doctest::Approx(p).epsilon(1e-12));
}

TEST_CASE("a one-tree forest scores like its tree") {
    const Dataset d = noisy(80, 3, 8);
    ModelSpec s = default_spec(ModelFamily::random_forest);
    s.n_trees = 1;
    const TrainedModel forest = train(s, d);
    TrainedModel single = forest;
    single.spec.family = ModelFamily::decision_tree;
    CHECK(predict_scores(forest, d.features) == predict_scores(single, d.features));
}

TEST_CASE("regularized boosting splits clear the gain penalty") {
    const Dataset d = noisy(200, 4, 9);
    ModelSpec s = quick_spec(ModelFamily::regularized_boosting);
    s.split_gamma = 0.5;
    for (const Tree& t : train(s, d).trees) {
        for (const TreeNode& n : t.nodes) {
            if (n.feature >= 0) CHECK(n.gain > s.split_gamma);
        }
    }
}

TEST_CASE("gradient checks") {
    const Dataset d = noisy(20, 5, 10);
    CHECK(gradient_check(default_spec(ModelFamily::logistic), d, 1e-5).max_relative_error < 1e-5);
    const auto hinge = gradient_check(default_spec(ModelFamily::linear_svm), d, 1e-5);
    CHECK(hinge.max_relative_error < 1e-5);

    // Zero weights on symmetric data give a zero bias gradient.
    const Dataset sym = from_rows({{1, 2}, {-1, -2}, {2, 1}, {-2, -1}}, {1, 0, 0, 1});
    const std::vector<double> zero(3, 0.0);
    const std::vector<double> w(4, 1.0);
    const auto lg = logistic_objective(zero, sym.features, sym.labels, w, 0.0);
    CHECK(lg.gradient[2] == doctest::Approx(0.0));

    // A point exactly on the margin is excluded.
    const Dataset margin = from_rows({{1, 0}, {0, 1}, {3, 3}}, {1, 0, 1});
    const std::vector<double> params{1.0, 0.0, 0.0};
    CHECK(gradient_check(default_spec(ModelFamily::linear_svm), margin, params, 1e-6).excluded_rows == 1);
}

TEST_CASE("class weight equals minority duplication for the logistic gradient") {
    const Dataset d = noisy(30, 3, 11);
    const std::size_t n1 = d.count_class(1);
    REQUIRE(n1 > 0);
    const double wt = 3.0;
    std::vector<double> weights(d.rows());
    for (std::size_t i = 0; i < d.rows(); ++i) weights[i] = d.labels[i] == 1 ? wt : 1.0;

    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < d.rows(); ++i) {
        for (int k = 0; k < (d.labels[i] == 1 ? 3 : 1); ++k) rows.push_back(i);
    }
    const Dataset dup = d.select_rows(rows);
    const std::vector<double> ones(dup.rows(), 1.0);
    const std::vector<double> params{0.3, -0.2, 0.1, 0.05};
    const auto a = logistic_objective(params, d.features, d.labels, weights, 1e-3);
    const auto b = logistic_objective(params, dup.features, dup.labels, ones, 1e-3);
    for (std::size_t j = 0; j < params.size(); ++j) CHECK(a.gradient[j] == doctest::Approx(b.gradient[j]).epsilon(1e-12));
}

TEST_CASE("model files round-trip exactly") {
    const Dataset d = noisy(90, 3, 12);
    const auto dir = rareclass::testing::fresh_dir("models_roundtrip");
    for (ModelFamily f : kFamilies) {
        CAPTURE(to_string(f));
        const TrainedModel m = train(quick_spec(f), d);
        save_model(m, dir / "m.txt");
        const TrainedModel back = load_model(dir / "m.txt");
        CHECK(predict_scores(back, d.features) == predict_scores(m, d.features));
        CHECK(back.column_ids == m.column_ids);
    }
}

TEST_CASE("model errors") {
    const Dataset one_class = from_rows({{1}, {2}, {3}}, {0, 0, 0});
    CHECK_THROWS_AS(train(default_spec(ModelFamily::logistic), one_class), Error);
    const Dataset d = noisy(40, 3, 13);
    const TrainedModel m = train(quick_spec(ModelFamily::logistic), d);
    CHECK_THROWS_AS(predict_scores(m, d.select_columns(std::vector<std::size_t>{0, 1}).features), Error);
    ModelSpec diverge = default_spec(ModelFamily::logistic);
    diverge.learning_rate = -1.0;
    CHECK_THROWS_AS(train(diverge, d), Error);
}
