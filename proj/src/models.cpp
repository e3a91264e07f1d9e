#include "rareclass/models.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

namespace rareclass {

const char* to_string(ModelFamily f) {
    switch (f) {
        case ModelFamily::logistic: return "logistic";
        case ModelFamily::linear_svm: return "linear_svm";
        case ModelFamily::decision_tree: return "decision_tree";
        case ModelFamily::random_forest: return "random_forest";
        case ModelFamily::gradient_boosting: return "gradient_boosting";
        case ModelFamily::regularized_boosting: return "regularized_boosting";
    }
    return "unknown";
}

ModelFamily parse_model_family(const std::string& name) {
    for (auto f : {ModelFamily::logistic, ModelFamily::linear_svm, ModelFamily::decision_tree,
                   ModelFamily::random_forest, ModelFamily::gradient_boosting, ModelFamily::regularized_boosting}) {
        if (name == to_string(f) || name == short_label(f)) return f;
    }
    throw Error("unknown model family '" + name + "'");
}

const char* short_label(ModelFamily f) {
    switch (f) {
        case ModelFamily::logistic: return "LR";
        case ModelFamily::linear_svm: return "SVM";
        case ModelFamily::decision_tree: return "DTC";
        case ModelFamily::random_forest: return "RF";
        case ModelFamily::gradient_boosting: return "GBC";
        case ModelFamily::regularized_boosting: return "XGB";
    }
    return "?";
}

void ModelSpec::validate() const {
    if (!(learning_rate >= 0.0) || !(l2 >= 0.0) || !(svm_c >= 0.0) || !(shrinkage >= 0.0) || !(leaf_l2 >= 0.0) ||
        !(split_gamma >= 0.0)) {
        throw Error("model spec: rates and weights must be non-negative");
    }
    if (max_depth < 1 || min_leaf < 1 || n_trees < 1 || epochs < 1) {
        throw Error("model spec: depths and counts must be at least 1");
    }
    if (family == ModelFamily::linear_svm && svm_c <= 0.0) throw Error("model spec: C must be positive");
}

ModelSpec default_spec(ModelFamily f) {
    ModelSpec s;
    s.family = f;
    if (f == ModelFamily::random_forest) s.max_depth = 12;
    return s;
}

// ------------------------------------------------------------
// Trees
// ------------------------------------------------------------

double Tree::predict(std::span<const double> row) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
        const auto& n = nodes[i];
        i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[i].value;
}

std::size_t Tree::depth() const {
    std::size_t d = 0;
    for (const auto& n : nodes) d = std::max(d, n.depth);
    return d;
}

namespace {

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

enum class Criterion { gini, squared_error, second_order };

/// Per-sample additive statistics. gini: (w*y, w); squared_error: (w*r, w, w*h);
/// second_order: (w*g, w*h).
struct NodeSums {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
};

struct TreeParams {
    Criterion criterion = Criterion::gini;
    std::size_t max_depth = 6;
    std::size_t min_leaf = 1;
    std::size_t features_per_split = 0;  // 0 = all
    double leaf_l2 = 0.0;
    double min_gain = 0.0;
};

class TreeBuilder {
public:
    /// presorted, when given, holds every row index ordered by (value, row) per
    /// feature; it lets large nodes be scanned without sorting. Only valid when
    /// the row list has no duplicates.
    TreeBuilder(const FeatureMatrix& x, const std::vector<NodeSums>& stats, const TreeParams& params,
                std::uint64_t seed, const std::vector<std::vector<std::uint32_t>>* presorted = nullptr)
        : x_(x), stats_(stats), params_(params), rng_(seed), presorted_(presorted), importance_(x.cols(), 0.0) {}

    Tree build(std::vector<std::size_t> rows) {
        rows_ = std::move(rows);
        if (presorted_) node_of_.assign(x_.rows(), -1);
        grow(0, rows_.size(), 0);
        return std::move(tree_);
    }

    const std::vector<double>& importance() const { return importance_; }

private:
    double score(const NodeSums& s) const {
        switch (params_.criterion) {
            case Criterion::gini: return s.b > 0 ? -2.0 * s.a * (s.b - s.a) / s.b : 0.0;
            case Criterion::squared_error: return s.b > 0 ? s.a * s.a / s.b : 0.0;
            case Criterion::second_order: return 0.5 * s.a * s.a / (s.b + params_.leaf_l2);
        }
        return 0.0;
    }

    double leaf_value(const NodeSums& s) const {
        switch (params_.criterion) {
            case Criterion::gini: return s.b > 0 ? s.a / s.b : 0.0;
            case Criterion::squared_error: return s.c > 1e-12 ? s.a / s.c : 0.0;
            case Criterion::second_order: return -s.a / (s.b + params_.leaf_l2);
        }
        return 0.0;
    }

    struct Split {
        bool found = false;
        std::size_t feature = 0;
        double threshold = 0.0;
        double gain = 0.0;
    };

    std::vector<std::size_t> candidate_features() {
        const std::size_t p = x_.cols();
        std::vector<std::size_t> f(p);
        std::iota(f.begin(), f.end(), std::size_t{0});
        const std::size_t m = params_.features_per_split;
        if (m == 0 || m >= p) return f;
        for (std::size_t i = 0; i < m; ++i) std::swap(f[i], f[i + rng_.below(p - i)]);
        f.resize(m);
        return f;
    }

    Split best_split(int node, std::size_t begin, std::size_t end, const NodeSums& total) {
        Split best;
        const double parent = score(total);
        const std::size_t n = end - begin;
        // Either path yields the node's rows ordered by (value, row).
        const bool scan = presorted_ && 2.0 * n * std::log2(double(n) + 1.0) > double(x_.rows());
        std::vector<std::pair<double, std::size_t>> order(n);
        for (std::size_t f : candidate_features()) {
            if (scan) {
                std::size_t k = 0;
                for (std::uint32_t r : (*presorted_)[f]) {
                    if (node_of_[r] == node) order[k++] = {x_.value(r, f), r};
                }
            } else {
                for (std::size_t i = 0; i < n; ++i) order[i] = {x_.value(rows_[begin + i], f), rows_[begin + i]};
                std::sort(order.begin(), order.end());
            }
            if (order.front().first == order.back().first) continue;
            NodeSums left;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                const auto& s = stats_[order[i].second];
                left.a += s.a;
                left.b += s.b;
                left.c += s.c;
                if (order[i].first == order[i + 1].first) continue;
                const std::size_t n_left = i + 1;
                if (n_left < params_.min_leaf || n - n_left < params_.min_leaf) continue;
                const NodeSums right{total.a - left.a, total.b - left.b, total.c - left.c};
                const double gain = score(left) + score(right) - parent;
                if (!(gain > params_.min_gain + 1e-12)) continue;
                const std::size_t col = x_.column_ids()[f];
                const bool better = !best.found || gain > best.gain ||
                                    (gain == best.gain && col < x_.column_ids()[best.feature]);
                if (better) {
                    best = {true, f, 0.5 * (order[i].first + order[i + 1].first), gain};
                }
            }
        }
        return best;
    }

    int grow(std::size_t begin, std::size_t end, std::size_t depth) {
        NodeSums total;
        for (std::size_t i = begin; i < end; ++i) {
            const auto& s = stats_[rows_[i]];
            total.a += s.a;
            total.b += s.b;
            total.c += s.c;
        }
        const int id = static_cast<int>(tree_.nodes.size());
        if (presorted_) {
            for (std::size_t i = begin; i < end; ++i) node_of_[rows_[i]] = id;
        }
        tree_.nodes.emplace_back();
        tree_.nodes[id].value = leaf_value(total);
        tree_.nodes[id].count = end - begin;
        tree_.nodes[id].depth = depth;
        if (depth >= params_.max_depth || end - begin < 2 * params_.min_leaf) return id;

        const Split split = best_split(id, begin, end, total);
        if (!split.found) return id;

        auto mid_it = std::stable_partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                                            rows_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t r) {
                                                return x_.value(r, split.feature) <= split.threshold;
                                            });
        const std::size_t mid = static_cast<std::size_t>(mid_it - rows_.begin());
        importance_[split.feature] += split.gain;
        const int left = grow(begin, mid, depth + 1);
        const int right = grow(mid, end, depth + 1);
        auto& node = tree_.nodes[id];
        node.feature = static_cast<int>(split.feature);
        node.column_id = x_.column_ids()[split.feature];
        node.threshold = split.threshold;
        node.gain = split.gain;
        node.left = left;
        node.right = right;
        return id;
    }

    const FeatureMatrix& x_;
    const std::vector<NodeSums>& stats_;
    TreeParams params_;
    Rng rng_;
    const std::vector<std::vector<std::uint32_t>>* presorted_;
    std::vector<int> node_of_;
    Tree tree_;
    std::vector<std::size_t> rows_;
    std::vector<double> importance_;
};

std::vector<std::vector<std::uint32_t>> presort(const FeatureMatrix& x) {
    std::vector<std::vector<std::uint32_t>> out(x.cols());
    for (std::size_t f = 0; f < x.cols(); ++f) {
        auto& o = out[f];
        o.resize(x.rows());
        std::iota(o.begin(), o.end(), 0u);
        std::sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) {
            const double va = x.value(a, f);
            const double vb = x.value(b, f);
            return va < vb || (va == vb && a < b);
        });
    }
    return out;
}

void require_trainable(const ModelSpec& spec, const Dataset& d) {
    spec.validate();
    d.validate();
    if (d.rows() == 0 || d.cols() == 0) throw Error("train: empty training set");
    if (d.count_class(0) == 0 || d.count_class(1) == 0) throw Error("train: single-class training set");
    for (double v : d.features.cells()) {
        if (!std::isfinite(v)) throw Error("train: features must be imputed and finite");
    }
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> r(n);
    std::iota(r.begin(), r.end(), std::size_t{0});
    return r;
}

double weighted_log_loss(std::span<const double> raw, std::span<const int> y, std::span<const double> w) {
    double loss = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        loss += w[i] * (softplus(raw[i]) - y[i] * raw[i]);
        total += w[i];
    }
    return loss / total;
}

std::string trace_tail(const std::vector<double>& trace) {
    std::string s;
    const std::size_t from = trace.size() > 5 ? trace.size() - 5 : 0;
    for (std::size_t i = from; i < trace.size(); ++i) s += (s.empty() ? "" : " ") + format_double(trace[i]);
    return s;
}

void check_finite_loss(double loss, const std::vector<double>& trace, const char* family) {
    if (!std::isfinite(loss)) {
        throw Error(std::string("train: non-finite loss in ") + family + " (trace: " + trace_tail(trace) + ")");
    }
}

// ------------------------------------------------------------
// Linear training
// ------------------------------------------------------------

void train_logistic(TrainedModel& m, const Dataset& d, const std::vector<double>& w) {
    const std::size_t p = d.cols();
    std::vector<double> params(p + 1, 0.0);
    auto current = logistic_objective(params, d.features, d.labels, w, m.spec.l2);
    check_finite_loss(current.loss, m.loss_trace, "logistic");
    m.loss_trace.push_back(current.loss);
    double lr = m.spec.learning_rate;
    std::vector<double> candidate(p + 1);
    for (std::size_t epoch = 0; epoch < m.spec.epochs; ++epoch) {
        bool accepted = false;
        // Step halving keeps the full-batch loss non-increasing.
        for (int attempt = 0; attempt < 60 && lr > 0.0; ++attempt) {
            for (std::size_t k = 0; k <= p; ++k) candidate[k] = params[k] - lr * current.gradient[k];
            auto next = logistic_objective(candidate, d.features, d.labels, w, m.spec.l2);
            if (std::isfinite(next.loss) && next.loss <= current.loss + 1e-12) {
                params.swap(candidate);
                current = std::move(next);
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        check_finite_loss(current.loss, m.loss_trace, "logistic");
        m.loss_trace.push_back(current.loss);
        if (!accepted) break;
    }
    m.weights.assign(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(p));
    m.bias = params[p];
}

void train_linear_svm(TrainedModel& m, const Dataset& d, const std::vector<double>& w) {
    const std::size_t p = d.cols();
    std::vector<double> params(p + 1, 0.0);
    std::vector<double> best = params;
    auto current = hinge_objective(params, d.features, d.labels, w, m.spec.svm_c);
    double best_loss = current.loss;
    for (std::size_t epoch = 0; epoch < m.spec.epochs; ++epoch) {
        const double step = m.spec.learning_rate / std::sqrt(static_cast<double>(epoch) + 1.0);
        for (std::size_t k = 0; k <= p; ++k) params[k] -= step * current.gradient[k];
        current = hinge_objective(params, d.features, d.labels, w, m.spec.svm_c);
        check_finite_loss(current.loss, m.loss_trace, "linear_svm");
        m.loss_trace.push_back(current.loss);
        if (current.loss < best_loss) {
            best_loss = current.loss;
            best = params;
        }
    }
    m.weights.assign(best.begin(), best.begin() + static_cast<std::ptrdiff_t>(p));
    m.bias = best[p];
}

// ------------------------------------------------------------
// Tree training
// ------------------------------------------------------------

void train_tree(TrainedModel& m, const Dataset& d, const std::vector<double>& w) {
    std::vector<NodeSums> stats(d.rows());
    for (std::size_t i = 0; i < d.rows(); ++i) stats[i] = {w[i] * d.labels[i], w[i], 0.0};
    TreeParams tp;
    tp.criterion = Criterion::gini;
    tp.max_depth = m.spec.max_depth;
    tp.min_leaf = m.spec.min_leaf;
    tp.features_per_split = m.spec.feature_subsample;
    const auto sorted = presort(d.features);
    TreeBuilder builder(d.features, stats, tp, substream(m.spec.seed, "tree"), &sorted);
    m.trees.push_back(builder.build(all_rows(d.rows())));
    m.importance = builder.importance();
}

void train_forest(TrainedModel& m, const Dataset& d, const std::vector<double>& w) {
    std::vector<NodeSums> stats(d.rows());
    for (std::size_t i = 0; i < d.rows(); ++i) stats[i] = {w[i] * d.labels[i], w[i], 0.0};
    TreeParams tp;
    tp.criterion = Criterion::gini;
    tp.max_depth = m.spec.max_depth;
    tp.min_leaf = m.spec.min_leaf;
    tp.features_per_split = m.spec.feature_subsample
                                ? m.spec.feature_subsample
                                : std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(double(d.cols()))));

    const std::size_t n = d.rows();
    std::vector<Tree> trees(m.spec.n_trees);
    std::vector<std::vector<double>> importances(m.spec.n_trees);
    parallel_for(m.spec.n_trees, [&](std::size_t t) {
        const std::uint64_t tree_seed = substream(substream(m.spec.seed, "forest"), t);
        Rng boot(substream(tree_seed, "bootstrap"));
        std::vector<std::size_t> rows(n);
        for (auto& r : rows) r = boot.below(n);
        std::sort(rows.begin(), rows.end());
        TreeBuilder builder(d.features, stats, tp, substream(tree_seed, "splits"));
        trees[t] = builder.build(std::move(rows));
        importances[t] = builder.importance();
    });
    m.trees = std::move(trees);
    m.importance.assign(d.cols(), 0.0);
    for (const auto& imp : importances) {
        for (std::size_t c = 0; c < d.cols(); ++c) m.importance[c] += imp[c] / static_cast<double>(m.spec.n_trees);
    }
}

void train_boosting(TrainedModel& m, const Dataset& d, const std::vector<double>& w, bool second_order) {
    const std::size_t n = d.rows();
    double pos = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        pos += w[i] * d.labels[i];
        total += w[i];
    }
    m.base_score = std::log(pos / (total - pos));
    m.importance.assign(d.cols(), 0.0);

    std::vector<double> raw(n, m.base_score);
    double loss = weighted_log_loss(raw, d.labels, w);
    m.loss_trace.push_back(loss);

    TreeParams tp;
    tp.criterion = second_order ? Criterion::second_order : Criterion::squared_error;
    tp.max_depth = m.spec.max_depth;
    tp.min_leaf = m.spec.min_leaf;
    tp.features_per_split = m.spec.feature_subsample;
    tp.leaf_l2 = second_order ? m.spec.leaf_l2 : 0.0;
    tp.min_gain = second_order ? m.spec.split_gamma : 0.0;

    std::vector<NodeSums> stats(n);
    std::vector<double> step(n);
    std::vector<double> trial(n);
    const auto rows = all_rows(n);
    const auto sorted = presort(d.features);
    for (std::size_t round = 0; round < m.spec.n_rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(raw[i]);
            const double h = std::max(p * (1.0 - p), 1e-16);
            if (second_order) {
                stats[i] = {w[i] * (p - d.labels[i]), w[i] * h, 0.0};
            } else {
                stats[i] = {w[i] * (d.labels[i] - p), w[i], w[i] * h};
            }
        }
        TreeBuilder builder(d.features, stats, tp, substream(substream(m.spec.seed, "boost"), round), &sorted);
        Tree tree = builder.build(rows);
        for (auto& node : tree.nodes) node.value *= m.spec.shrinkage;
        for (std::size_t i = 0; i < n; ++i) step[i] = tree.predict(d.features.row(i));

        // Halve the tree's contribution until the training loss does not increase.
        double scale = 1.0;
        double next_loss = loss;
        for (int attempt = 0; attempt < 40; ++attempt) {
            for (std::size_t i = 0; i < n; ++i) trial[i] = raw[i] + scale * step[i];
            next_loss = weighted_log_loss(trial, d.labels, w);
            if (std::isfinite(next_loss) && next_loss <= loss + 1e-12) break;
            scale *= 0.5;
        }
        if (!(std::isfinite(next_loss) && next_loss <= loss + 1e-12)) {
            scale = 0.0;
            next_loss = loss;
        }
        if (scale != 1.0) {
            for (auto& node : tree.nodes) node.value *= scale;
        }
        for (std::size_t i = 0; i < n; ++i) raw[i] += scale * step[i];
        loss = next_loss;
        check_finite_loss(loss, m.loss_trace, second_order ? "regularized_boosting" : "gradient_boosting");
        m.loss_trace.push_back(loss);
        const auto& imp = builder.importance();
        for (std::size_t c = 0; c < d.cols(); ++c) m.importance[c] += imp[c];
        m.trees.push_back(std::move(tree));
    }
}

}  // namespace

std::vector<double> sample_weights(std::span<const int> labels, ClassWeight mode) {
    std::vector<double> w(labels.size(), 1.0);
    if (mode == ClassWeight::none) return w;
    const double n = static_cast<double>(labels.size());
    const double n1 = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    const double n0 = n - n1;
    if (n0 == 0 || n1 == 0) return w;
    for (std::size_t i = 0; i < labels.size(); ++i) w[i] = labels[i] == 1 ? n / (2.0 * n1) : n / (2.0 * n0);
    return w;
}

TrainedModel train(const ModelSpec& spec, const Dataset& d) {
    require_trainable(spec, d);
    TrainedModel m;
    m.spec = spec;
    m.column_ids = d.features.column_ids();
    const auto w = sample_weights(d.labels, spec.class_weight);
    switch (spec.family) {
        case ModelFamily::logistic: train_logistic(m, d, w); break;
        case ModelFamily::linear_svm: train_linear_svm(m, d, w); break;
        case ModelFamily::decision_tree: train_tree(m, d, w); break;
        case ModelFamily::random_forest: train_forest(m, d, w); break;
        case ModelFamily::gradient_boosting: train_boosting(m, d, w, false); break;
        case ModelFamily::regularized_boosting: train_boosting(m, d, w, true); break;
    }
    if (spec.family == ModelFamily::logistic || spec.family == ModelFamily::linear_svm) {
        m.importance.resize(m.weights.size());
        for (std::size_t c = 0; c < m.weights.size(); ++c) m.importance[c] = std::abs(m.weights[c]);
    }
    return m;
}

double TrainedModel::raw_score(std::span<const double> row) const {
    switch (spec.family) {
        case ModelFamily::logistic:
        case ModelFamily::linear_svm: {
            double z = bias;
            for (std::size_t c = 0; c < weights.size(); ++c) z += weights[c] * row[c];
            return z;
        }
        case ModelFamily::decision_tree: return trees.front().predict(row);
        case ModelFamily::random_forest: {
            double s = 0.0;
            for (const auto& t : trees) s += t.predict(row);
            return trees.empty() ? 0.0 : s / static_cast<double>(trees.size());
        }
        case ModelFamily::gradient_boosting:
        case ModelFamily::regularized_boosting: {
            double z = base_score;
            for (const auto& t : trees) z += t.predict(row);
            return z;
        }
    }
    return 0.0;
}

double TrainedModel::score(std::span<const double> row) const {
    const double raw = raw_score(row);
    switch (spec.family) {
        case ModelFamily::decision_tree:
        case ModelFamily::random_forest: return std::clamp(raw, 0.0, 1.0);
        default: return sigmoid(raw);
    }
}

std::vector<double> predict_scores(const TrainedModel& m, const FeatureMatrix& rows) {
    if (rows.column_ids() != m.column_ids) throw Error("predict_scores: column mismatch");
    std::vector<double> out(rows.rows());
    for (std::size_t r = 0; r < rows.rows(); ++r) out[r] = m.score(rows.row(r));
    return out;
}

// ------------------------------------------------------------
// Linear objectives
// ------------------------------------------------------------

LossAndGradient logistic_objective(std::span<const double> params, const FeatureMatrix& x, std::span<const int> y,
                                   std::span<const double> weights, double l2) {
    const std::size_t p = x.cols();
    if (params.size() != p + 1) throw Error("logistic_objective: parameter size mismatch");
    LossAndGradient out;
    out.gradient.assign(p + 1, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto row = x.row(i);
        double z = params[p];
        for (std::size_t c = 0; c < p; ++c) z += params[c] * row[c];
        out.loss += weights[i] * (softplus(z) - y[i] * z);
        const double r = weights[i] * (sigmoid(z) - y[i]);
        for (std::size_t c = 0; c < p; ++c) out.gradient[c] += r * row[c];
        out.gradient[p] += r;
        total += weights[i];
    }
    out.loss /= total;
    for (auto& g : out.gradient) g /= total;
    double norm = 0.0;
    for (std::size_t c = 0; c < p; ++c) {
        norm += params[c] * params[c];
        out.gradient[c] += l2 * params[c];
    }
    out.loss += 0.5 * l2 * norm;
    return out;
}

LossAndGradient hinge_objective(std::span<const double> params, const FeatureMatrix& x, std::span<const int> y,
                                std::span<const double> weights, double c, std::span<const char> include) {
    const std::size_t p = x.cols();
    if (params.size() != p + 1) throw Error("hinge_objective: parameter size mismatch");
    LossAndGradient out;
    out.gradient.assign(p + 1, 0.0);
    double total = 0.0;
    std::size_t n_used = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        if (!include.empty() && !include[i]) continue;
        const auto row = x.row(i);
        const double s = y[i] == 1 ? 1.0 : -1.0;
        double z = params[p];
        for (std::size_t k = 0; k < p; ++k) z += params[k] * row[k];
        const double margin = 1.0 - s * z;
        total += weights[i];
        ++n_used;
        if (margin <= 0.0) continue;
        out.loss += weights[i] * margin;
        for (std::size_t k = 0; k < p; ++k) out.gradient[k] -= weights[i] * s * row[k];
        out.gradient[p] -= weights[i] * s;
    }
    if (n_used == 0) return out;
    out.loss /= total;
    for (auto& g : out.gradient) g /= total;
    const double lambda = 1.0 / (c * static_cast<double>(n_used));
    double norm = 0.0;
    for (std::size_t k = 0; k < p; ++k) {
        norm += params[k] * params[k];
        out.gradient[k] += lambda * params[k];
    }
    out.loss += 0.5 * lambda * norm;
    return out;
}

GradientCheckResult gradient_check(const ModelSpec& spec, const Dataset& data, std::span<const double> params,
                                   double epsilon) {
    if (spec.family != ModelFamily::logistic && spec.family != ModelFamily::linear_svm) {
        throw Error("gradient_check: only logistic and linear_svm are differentiable");
    }
    const auto w = sample_weights(data.labels, spec.class_weight);
    const std::size_t p = data.cols();
    GradientCheckResult result;

    std::vector<char> include(data.rows(), 1);
    if (spec.family == ModelFamily::linear_svm) {
        // A perturbation of size epsilon moves a margin by at most epsilon * (1 + |x|_1).
        for (std::size_t i = 0; i < data.rows(); ++i) {
            const auto row = data.features.row(i);
            double z = params[p];
            double reach = 1.0;
            for (std::size_t k = 0; k < p; ++k) {
                z += params[k] * row[k];
                reach += std::abs(row[k]);
            }
            const double s = data.labels[i] == 1 ? 1.0 : -1.0;
            if (std::abs(1.0 - s * z) <= 10.0 * epsilon * reach) {
                include[i] = 0;
                ++result.excluded_rows;
            }
        }
    }
    auto objective = [&](std::span<const double> q) {
        return spec.family == ModelFamily::logistic
                   ? logistic_objective(q, data.features, data.labels, w, spec.l2)
                   : hinge_objective(q, data.features, data.labels, w, spec.svm_c, include);
    };
    const auto analytic = objective(params).gradient;
    std::vector<double> q(params.begin(), params.end());
    for (std::size_t k = 0; k <= p; ++k) {
        const double saved = q[k];
        q[k] = saved + epsilon;
        const double up = objective(q).loss;
        q[k] = saved - epsilon;
        const double down = objective(q).loss;
        q[k] = saved;
        const double numeric = (up - down) / (2.0 * epsilon);
        const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-6});
        result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic[k] - numeric) / denom);
    }
    return result;
}

GradientCheckResult gradient_check(const ModelSpec& spec, const Dataset& data, double epsilon) {
    Rng rng(substream(spec.seed, "gradient_check"));
    std::vector<double> params(data.cols() + 1);
    for (auto& v : params) v = 0.5 * rng.normal();
    return gradient_check(spec, data, params, epsilon);
}

// ------------------------------------------------------------
// Serialisation
// ------------------------------------------------------------

namespace {

std::string hexf(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

double read_hexf(std::istream& in) {
    std::string tok;
    if (!(in >> tok)) throw Error("load_model: truncated file");
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) throw Error("load_model: bad number '" + tok + "'");
    return v;
}

template <typename T>
T read_int(std::istream& in) {
    long long v = 0;
    if (!(in >> v)) throw Error("load_model: truncated file");
    return static_cast<T>(v);
}

void expect(std::istream& in, const std::string& word) {
    std::string tok;
    if (!(in >> tok) || tok != word) throw Error("load_model: expected '" + word + "'");
}

}  // namespace

void save_model(const TrainedModel& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    const auto& s = m.spec;
    out << "rareclass-model 1\n";
    out << "family " << to_string(s.family) << '\n';
    out << "spec " << hexf(s.learning_rate) << ' ' << s.epochs << ' ' << hexf(s.l2) << ' ' << hexf(s.svm_c) << ' '
        << s.max_depth << ' ' << s.min_leaf << ' ' << s.n_trees << ' ' << s.feature_subsample << ' ' << s.n_rounds
        << ' ' << hexf(s.shrinkage) << ' ' << hexf(s.leaf_l2) << ' ' << hexf(s.split_gamma) << ' '
        << (s.class_weight == ClassWeight::balanced ? 1 : 0) << ' ' << s.seed << '\n';
    out << "columns " << m.column_ids.size();
    for (auto id : m.column_ids) out << ' ' << id;
    out << "\nweights " << m.weights.size();
    for (double v : m.weights) out << ' ' << hexf(v);
    out << "\nbias " << hexf(m.bias) << "\nbase " << hexf(m.base_score) << "\ntrees " << m.trees.size() << '\n';
    for (const auto& t : m.trees) {
        out << "tree " << t.nodes.size() << '\n';
        for (const auto& n : t.nodes) {
            out << n.feature << ' ' << n.column_id << ' ' << hexf(n.threshold) << ' ' << n.left << ' ' << n.right
                << ' ' << hexf(n.value) << ' ' << hexf(n.gain) << ' ' << n.count << ' ' << n.depth << '\n';
        }
    }
    out << "loss " << m.loss_trace.size();
    for (double v : m.loss_trace) out << ' ' << hexf(v);
    out << "\nimportance " << m.importance.size();
    for (double v : m.importance) out << ' ' << hexf(v);
    out << '\n';
}

TrainedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    expect(in, "rareclass-model");
    if (read_int<int>(in) != 1) throw Error("load_model: unsupported version");
    TrainedModel m;
    auto& s = m.spec;
    expect(in, "family");
    std::string family;
    in >> family;
    s.family = parse_model_family(family);
    expect(in, "spec");
    s.learning_rate = read_hexf(in);
    s.epochs = read_int<std::size_t>(in);
    s.l2 = read_hexf(in);
    s.svm_c = read_hexf(in);
    s.max_depth = read_int<std::size_t>(in);
    s.min_leaf = read_int<std::size_t>(in);
    s.n_trees = read_int<std::size_t>(in);
    s.feature_subsample = read_int<std::size_t>(in);
    s.n_rounds = read_int<std::size_t>(in);
    s.shrinkage = read_hexf(in);
    s.leaf_l2 = read_hexf(in);
    s.split_gamma = read_hexf(in);
    s.class_weight = read_int<int>(in) ? ClassWeight::balanced : ClassWeight::none;
    {
        std::string tok;
        in >> tok;
        s.seed = std::stoull(tok);
    }
    expect(in, "columns");
    m.column_ids.resize(read_int<std::size_t>(in));
    for (auto& id : m.column_ids) id = read_int<std::size_t>(in);
    expect(in, "weights");
    m.weights.resize(read_int<std::size_t>(in));
    for (auto& v : m.weights) v = read_hexf(in);
    expect(in, "bias");
    m.bias = read_hexf(in);
    expect(in, "base");
    m.base_score = read_hexf(in);
    expect(in, "trees");
    m.trees.resize(read_int<std::size_t>(in));
    for (auto& t : m.trees) {
        expect(in, "tree");
        t.nodes.resize(read_int<std::size_t>(in));
        for (auto& n : t.nodes) {
            n.feature = read_int<int>(in);
            n.column_id = read_int<std::size_t>(in);
            n.threshold = read_hexf(in);
            n.left = read_int<int>(in);
            n.right = read_int<int>(in);
            n.value = read_hexf(in);
            n.gain = read_hexf(in);
            n.count = read_int<std::size_t>(in);
            n.depth = read_int<std::size_t>(in);
        }
    }
    expect(in, "loss");
    m.loss_trace.resize(read_int<std::size_t>(in));
    for (auto& v : m.loss_trace) v = read_hexf(in);
    expect(in, "importance");
    m.importance.resize(read_int<std::size_t>(in));
    for (auto& v : m.importance) v = read_hexf(in);
    return m;
}

}  // namespace rareclass
