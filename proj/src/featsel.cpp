#include "rareclass/featsel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "rareclass/common.hpp"
#include "rareclass/metrics.hpp"
#include "rareclass/preprocess.hpp"

namespace rareclass {

namespace {

void require_complete(const Dataset& d, const char* op) {
    if (d.features.missing_count() != 0) throw Error(std::string(op) + ": input contains missing values");
    d.require_both_classes(op);
}

std::vector<std::size_t> all_positions(std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    return p;
}

std::vector<std::size_t> ids_of(const Dataset& d, const std::vector<std::size_t>& positions) {
    std::vector<std::size_t> ids;
    ids.reserve(positions.size());
    for (std::size_t p : positions) ids.push_back(d.features.column_ids()[p]);
    std::sort(ids.begin(), ids.end());
    return ids;
}

double rank_key(double s) { return std::isnan(s) ? -std::numeric_limits<double>::infinity() : s; }

}  // namespace

std::vector<std::size_t> top_k_columns(const std::vector<double>& scores, const std::vector<std::size_t>& column_ids,
                                       std::size_t n_keep) {
    if (scores.size() != column_ids.size()) throw Error("top_k_columns: length mismatch");
    auto order = all_positions(scores.size());
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double sa = rank_key(scores[a]);
        const double sb = rank_key(scores[b]);
        if (sa != sb) return sa > sb;
        return column_ids[a] < column_ids[b];
    });
    order.resize(std::min(n_keep, order.size()));
    std::sort(order.begin(), order.end());
    return order;
}

// ------------------------------------------------------------
// Filter methods
// ------------------------------------------------------------

double anova_f(std::span<const double> values, std::span<const int> labels) {
    if (values.size() != labels.size()) throw Error("anova_f: length mismatch");
    double sum[2] = {0, 0};
    std::size_t n[2] = {0, 0};
    for (std::size_t i = 0; i < values.size(); ++i) {
        const int g = labels[i] == 1;
        sum[g] += values[i];
        ++n[g];
    }
    if (n[0] == 0 || n[1] == 0) throw Error("anova_f: both classes required");
    const std::size_t total = n[0] + n[1];
    const double mean[2] = {sum[0] / n[0], sum[1] / n[1]};
    const double grand = (sum[0] + sum[1]) / total;
    double within = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double d = values[i] - mean[labels[i] == 1];
        within += d * d;
    }
    const double between = n[0] * (mean[0] - grand) * (mean[0] - grand) + n[1] * (mean[1] - grand) * (mean[1] - grand);
    if (total <= 2 || within <= 0.0) {
        return between > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    return between / (within / static_cast<double>(total - 2));
}

SelectorDecision select_f_score(const Dataset& train, std::size_t n_keep) {
    require_complete(train, "f_score");
    SelectorDecision out;
    out.selector = "f_score";
    out.scores.resize(train.cols());
    parallel_for(train.cols(), [&](std::size_t c) {
        const auto col = train.features.column(c);
        out.scores[c] = anova_f(col, train.labels);
    });
    out.selected = ids_of(train, top_k_columns(out.scores, train.features.column_ids(), n_keep));
    return out;
}

std::vector<std::size_t> equal_frequency_bins(std::span<const double> values, std::size_t n_bins) {
    if (n_bins < 1) throw Error("equal_frequency_bins: at least one bin required");
    const std::size_t n = values.size();
    auto order = all_positions(n);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return values[a] < values[b] || (values[a] == values[b] && a < b);
    });
    std::vector<std::size_t> codes(n, 0);
    std::size_t group_bin = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (k == 0 || values[order[k]] != values[order[k - 1]]) group_bin = k * n_bins / n;
        codes[order[k]] = group_bin;
    }
    return codes;
}

double mutual_information(std::span<const std::size_t> codes, std::span<const int> labels) {
    if (codes.size() != labels.size()) throw Error("mutual_information: length mismatch");
    if (codes.empty()) return 0.0;
    std::map<std::size_t, std::array<double, 2>> joint;
    double label_count[2] = {0, 0};
    for (std::size_t i = 0; i < codes.size(); ++i) {
        const int y = labels[i] == 1;
        joint[codes[i]][y] += 1.0;
        label_count[y] += 1.0;
    }
    const double n = static_cast<double>(codes.size());
    double mi = 0.0;
    for (const auto& [code, counts] : joint) {
        const double pb = (counts[0] + counts[1]) / n;
        for (int y = 0; y < 2; ++y) {
            if (counts[y] == 0.0) continue;
            const double p = counts[y] / n;
            mi += p * std::log(p / (pb * (label_count[y] / n)));
        }
    }
    return std::max(mi, 0.0);
}

SelectorDecision select_mutual_info(const Dataset& train, std::size_t n_keep, std::size_t n_bins) {
    require_complete(train, "mutual_info");
    SelectorDecision out;
    out.selector = "mutual_info_" + std::to_string(n_bins);
    out.scores.resize(train.cols());
    parallel_for(train.cols(), [&](std::size_t c) {
        const auto col = train.features.column(c);
        const auto codes = equal_frequency_bins(col, n_bins);
        out.scores[c] = mutual_information(codes, train.labels);
    });
    out.selected = ids_of(train, top_k_columns(out.scores, train.features.column_ids(), n_keep));
    return out;
}

// ------------------------------------------------------------
// LASSO
// ------------------------------------------------------------

namespace {

double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

/// Centred copy of the design, column-major.
struct CentredDesign {
    std::size_t n = 0;
    std::size_t p = 0;
    std::vector<double> x;  // column-major
    std::vector<double> mean;
    std::vector<double> sq;  // (1/n) |x_j|^2

    double* col(std::size_t j) { return x.data() + j * n; }
    const double* col(std::size_t j) const { return x.data() + j * n; }
};

CentredDesign centre(const FeatureMatrix& m) {
    CentredDesign d;
    d.n = m.rows();
    d.p = m.cols();
    d.x.resize(d.n * d.p);
    d.mean.assign(d.p, 0.0);
    d.sq.assign(d.p, 0.0);
    for (std::size_t j = 0; j < d.p; ++j) {
        double* c = d.col(j);
        double s = 0.0;
        for (std::size_t i = 0; i < d.n; ++i) {
            c[i] = m.value(i, j);
            s += c[i];
        }
        d.mean[j] = s / d.n;
        double q = 0.0;
        for (std::size_t i = 0; i < d.n; ++i) {
            c[i] -= d.mean[j];
            q += c[i] * c[i];
        }
        d.sq[j] = q / d.n;
    }
    return d;
}

double lasso_objective(const std::vector<double>& r, const std::vector<double>& w, double lambda) {
    double rss = 0.0;
    for (double v : r) rss += v * v;
    double l1 = 0.0;
    for (double v : w) l1 += std::abs(v);
    return rss / (2.0 * r.size()) + lambda * l1;
}

}  // namespace

LassoFit lasso_coordinate_descent(const FeatureMatrix& x, std::span<const double> y, double lambda, double tolerance,
                                  std::size_t max_sweeps) {
    if (x.rows() != y.size()) throw Error("lasso: length mismatch");
    if (x.rows() == 0) throw Error("lasso: empty input");
    if (x.missing_count() != 0) throw Error("lasso: input contains missing values");
    if (!(lambda >= 0.0)) throw Error("lasso: lambda must be non-negative");

    const CentredDesign d = centre(x);
    const double y_mean = std::accumulate(y.begin(), y.end(), 0.0) / d.n;
    std::vector<double> r(d.n);
    for (std::size_t i = 0; i < d.n; ++i) r[i] = y[i] - y_mean;

    LassoFit fit;
    fit.coefficients.assign(d.p, 0.0);
    auto& w = fit.coefficients;
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (std::size_t j = 0; j < d.p; ++j) {
            if (d.sq[j] <= 0.0) continue;
            const double* c = d.col(j);
            double g = 0.0;
            for (std::size_t i = 0; i < d.n; ++i) g += c[i] * r[i];
            g /= d.n;
            const double updated = soft_threshold(g + d.sq[j] * w[j], lambda) / d.sq[j];
            const double delta = updated - w[j];
            if (delta != 0.0) {
                for (std::size_t i = 0; i < d.n; ++i) r[i] -= delta * c[i];
                w[j] = updated;
                max_change = std::max(max_change, std::abs(delta) * std::sqrt(d.sq[j]));
            }
        }
        fit.objective_trace.push_back(lasso_objective(r, w, lambda));
        fit.sweeps = sweep + 1;
        if (max_change < tolerance) break;
    }

    double residual = 0.0;
    for (std::size_t j = 0; j < d.p; ++j) {
        const double* c = d.col(j);
        double g = 0.0;
        for (std::size_t i = 0; i < d.n; ++i) g += c[i] * r[i];
        g /= d.n;
        const double v = w[j] != 0.0 ? std::abs(g - lambda * (w[j] > 0 ? 1.0 : -1.0)) : std::max(0.0, std::abs(g) - lambda);
        residual = std::max(residual, v);
    }
    fit.optimality_residual = residual;
    fit.intercept = y_mean;
    for (std::size_t j = 0; j < d.p; ++j) fit.intercept -= d.mean[j] * w[j];
    return fit;
}

double lasso_lambda_max(const FeatureMatrix& x, std::span<const double> y) {
    if (x.rows() != y.size() || x.rows() == 0) throw Error("lasso: length mismatch");
    const CentredDesign d = centre(x);
    const double y_mean = std::accumulate(y.begin(), y.end(), 0.0) / d.n;
    double best = 0.0;
    for (std::size_t j = 0; j < d.p; ++j) {
        const double* c = d.col(j);
        double g = 0.0;
        for (std::size_t i = 0; i < d.n; ++i) g += c[i] * (y[i] - y_mean);
        best = std::max(best, std::abs(g / d.n));
    }
    return best;
}

SelectorDecision select_lasso(const Dataset& train, double lambda, std::uint64_t /*seed*/) {
    require_complete(train, "lasso");
    std::vector<double> y(train.rows());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = train.labels[i] == 1 ? 1.0 : -1.0;
    const LassoFit fit = lasso_coordinate_descent(train.features, y, lambda, 1e-7, 20000);
    SelectorDecision out;
    out.selector = "lasso";
    out.scores.resize(train.cols());
    std::vector<std::size_t> chosen;
    for (std::size_t j = 0; j < train.cols(); ++j) {
        out.scores[j] = std::abs(fit.coefficients[j]);
        if (fit.coefficients[j] != 0.0) chosen.push_back(j);
    }
    out.selected = ids_of(train, chosen);
    out.notes.push_back("lambda=" + format_double(lambda) + " sweeps=" + std::to_string(fit.sweeps));
    return out;
}

// ------------------------------------------------------------
// Boruta
// ------------------------------------------------------------

namespace {

/// P(X >= k) for X ~ Binomial(n, 1/2).
double binomial_upper(std::size_t k, std::size_t n) {
    double total = 0.0;
    for (std::size_t i = k; i <= n; ++i) {
        total += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) - n * std::log(2.0));
    }
    return std::min(total, 1.0);
}

}  // namespace

std::vector<BorutaStatus> boruta_statuses(const Dataset& train, std::size_t max_iterations, double alpha,
                                          std::uint64_t seed, const BorutaOptions& options) {
    require_complete(train, "boruta");
    if (max_iterations < 5) throw Error("boruta: at least 5 iterations required");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error("boruta: alpha must be in (0, 1)");

    const std::size_t p = train.cols();
    const std::size_t n = train.rows();
    std::vector<BorutaStatus> status(p, BorutaStatus::tentative);
    std::vector<std::size_t> hits(p, 0);
    const double adjusted = alpha / static_cast<double>(p);

    for (std::size_t it = 0; it < max_iterations; ++it) {
        std::vector<std::size_t> active;
        for (std::size_t j = 0; j < p; ++j) {
            if (status[j] != BorutaStatus::rejected) active.push_back(j);
        }
        if (std::none_of(status.begin(), status.end(), [](BorutaStatus s) { return s == BorutaStatus::tentative; })) {
            break;
        }
        const std::uint64_t it_seed = substream(substream(seed, "boruta"), it);
        Rng rng(substream(it_seed, "shadow"));

        // Every original column keeps a shadow, so the shadow pool does not
        // shrink as features are rejected. Real and shadow columns are
        // interleaved at random so that the lowest-id tie rule for equal
        // split gains favours neither side.
        const std::size_t m = active.size();
        std::vector<std::size_t> slot = all_positions(m + p);
        rng.shuffle(slot);
        FeatureMatrix x(n, all_positions(m + p));
        for (std::size_t k = 0; k < m; ++k) {
            for (std::size_t i = 0; i < n; ++i) x.set(i, slot[k], train.features.value(i, active[k]));
        }
        for (std::size_t j = 0; j < p; ++j) {
            std::vector<std::size_t> perm = all_positions(n);
            rng.shuffle(perm);
            for (std::size_t i = 0; i < n; ++i) x.set(i, slot[m + j], train.features.value(perm[i], j));
        }
        Dataset extended = make_dataset(std::move(x), train.labels);

        ModelSpec spec = default_spec(ModelFamily::random_forest);
        spec.n_trees = options.n_trees;
        spec.max_depth = options.max_depth;
        spec.min_leaf = options.min_leaf;
        spec.class_weight = ClassWeight::balanced;
        spec.seed = substream(it_seed, "forest");
        const TrainedModel forest = rareclass::train(spec, extended);

        double shadow_max = 0.0;
        for (std::size_t k = m; k < m + p; ++k) shadow_max = std::max(shadow_max, forest.importance[slot[k]]);
        for (std::size_t k = 0; k < m; ++k) {
            if (forest.importance[slot[k]] > shadow_max) ++hits[active[k]];
        }
        const std::size_t trials = it + 1;
        for (std::size_t j : active) {
            if (status[j] != BorutaStatus::tentative) continue;
            if (binomial_upper(hits[j], trials) < adjusted) {
                status[j] = BorutaStatus::confirmed;
            } else if (binomial_upper(trials - hits[j], trials) < adjusted) {
                status[j] = BorutaStatus::rejected;
            }
        }
    }
    return status;
}

SelectorDecision select_boruta(const Dataset& train, std::size_t max_iterations, double alpha, std::uint64_t seed,
                               const BorutaOptions& options) {
    const auto status = boruta_statuses(train, max_iterations, alpha, seed, options);
    SelectorDecision out;
    out.selector = "boruta";
    out.scores.resize(train.cols());
    std::vector<std::size_t> chosen;
    std::size_t tentative = 0;
    for (std::size_t j = 0; j < status.size(); ++j) {
        out.scores[j] = status[j] == BorutaStatus::confirmed ? 1.0 : status[j] == BorutaStatus::tentative ? 0.5 : 0.0;
        if (status[j] == BorutaStatus::confirmed) chosen.push_back(j);
        if (status[j] == BorutaStatus::tentative) ++tentative;
    }
    out.selected = ids_of(train, chosen);
    out.notes.push_back("confirmed=" + std::to_string(chosen.size()) + " tentative=" + std::to_string(tentative));
    return out;
}

// ------------------------------------------------------------
// RFE
// ------------------------------------------------------------

const char* to_string(RfeEstimator e) {
    switch (e) {
        case RfeEstimator::logistic: return "logistic";
        case RfeEstimator::linear_svm: return "linear_svm";
        case RfeEstimator::forest: return "forest";
    }
    return "unknown";
}

ModelSpec rfe_estimator_spec(RfeEstimator e, std::uint64_t seed) {
    ModelSpec s;
    switch (e) {
        case RfeEstimator::logistic:
            s = default_spec(ModelFamily::logistic);
            s.epochs = 100;
            break;
        case RfeEstimator::linear_svm:
            s = default_spec(ModelFamily::linear_svm);
            s.epochs = 100;
            break;
        case RfeEstimator::forest:
            s = default_spec(ModelFamily::random_forest);
            s.n_trees = 30;
            s.max_depth = 6;
            break;
    }
    s.class_weight = ClassWeight::balanced;
    s.seed = seed;
    return s;
}

RfeResult recursive_feature_elimination(const Dataset& train, const ModelSpec& estimator, std::size_t n_keep) {
    require_complete(train, "rfe");
    if (n_keep < 1) throw Error("rfe: n_keep must be at least 1");
    std::vector<std::size_t> current = all_positions(train.cols());
    RfeResult result;
    std::size_t step = 0;
    while (current.size() > n_keep) {
        ModelSpec spec = estimator;
        spec.seed = substream(estimator.seed, step++);
        const TrainedModel m = rareclass::train(spec, train.select_columns(current));
        std::size_t worst = 0;
        for (std::size_t k = 1; k < current.size(); ++k) {
            const double a = m.importance[k];
            const double b = m.importance[worst];
            if (a < b || (a == b && train.features.column_ids()[current[k]] > train.features.column_ids()[current[worst]])) {
                worst = k;
            }
        }
        result.eliminated.push_back(train.features.column_ids()[current[worst]]);
        current.erase(current.begin() + static_cast<std::ptrdiff_t>(worst));
    }
    result.kept = ids_of(train, current);
    return result;
}

SelectorDecision select_rfe(const Dataset& train, RfeEstimator estimator, std::size_t n_keep, std::uint64_t seed) {
    const RfeResult r = recursive_feature_elimination(train, rfe_estimator_spec(estimator, seed), n_keep);
    SelectorDecision out;
    out.selector = std::string("rfe_") + to_string(estimator);
    out.selected = r.kept;
    out.scores.assign(train.cols(), 0.0);
    // Later eliminations and survivors rank higher.
    for (std::size_t k = 0; k < r.eliminated.size(); ++k) {
        out.scores[train.features.position_of(r.eliminated[k])] = static_cast<double>(k + 1);
    }
    for (std::size_t id : r.kept) out.scores[train.features.position_of(id)] = static_cast<double>(train.cols());
    return out;
}

// ------------------------------------------------------------
// SFS
// ------------------------------------------------------------

const char* to_string(SfsEstimator e) {
    switch (e) {
        case SfsEstimator::boosted_trees: return "boosted_trees";
        case SfsEstimator::linear_svm: return "linear_svm";
    }
    return "unknown";
}

ModelSpec sfs_estimator_spec(SfsEstimator e, std::uint64_t seed) {
    ModelSpec s;
    if (e == SfsEstimator::boosted_trees) {
        s = default_spec(ModelFamily::regularized_boosting);
        s.n_rounds = 20;
        s.max_depth = 2;
        s.shrinkage = 0.3;
    } else {
        s = default_spec(ModelFamily::linear_svm);
        s.epochs = 30;
    }
    s.class_weight = ClassWeight::balanced;
    s.seed = seed;
    return s;
}

double cv_balanced_accuracy(const Dataset& train, const std::vector<std::size_t>& positions, const ModelSpec& spec,
                            std::size_t folds, std::uint64_t seed) {
    const SplitPlan plan = stratified_kfold(train, folds, seed);
    const Dataset subset = train.select_columns(positions);
    double total = 0.0;
    for (std::size_t k = 0; k < folds; ++k) {
        const SplitPlan f = plan.fold(k);
        const Dataset fit_rows = subset.select_rows(f.train_rows);
        const Dataset held = subset.select_rows(f.test_rows);
        ModelSpec s = spec;
        s.seed = substream(spec.seed, k);
        const TrainedModel m = rareclass::train(s, fit_rows);
        const auto scores = predict_scores(m, held.features);
        total += metric_set(confusion(held.labels, scores, 0.5)).balanced_accuracy;
    }
    return total / static_cast<double>(folds);
}

SelectorDecision select_sfs_with(const Dataset& train, const ModelSpec& spec, const std::string& name,
                                 SfsDirection direction, std::size_t n_keep, std::size_t cv_folds,
                                 std::uint64_t seed) {
    require_complete(train, "sfs");
    if (cv_folds < 2) throw Error("sfs: at least 2 folds required");
    const std::size_t p = train.cols();
    if (n_keep < 1 || n_keep > p) throw Error("sfs: n_keep must be in [1, columns]");
    const auto& ids = train.features.column_ids();
    const std::uint64_t cv_seed = substream(seed, "sfs/cv");

    std::vector<char> in(p, direction == SfsDirection::backward);
    std::size_t count = direction == SfsDirection::backward ? p : 0;
    SelectorDecision out;
    out.selector = name;
    out.scores.assign(p, 0.0);

    auto positions_with = [&](std::size_t toggled) {
        std::vector<std::size_t> pos;
        for (std::size_t j = 0; j < p; ++j) {
            if ((in[j] != 0) != (j == toggled)) pos.push_back(j);
        }
        return pos;
    };

    std::size_t step = 0;
    while (count != n_keep) {
        // Candidates in ascending column id so a strict improvement test keeps the lowest id on ties.
        std::vector<std::size_t> candidates;
        for (std::size_t j = 0; j < p; ++j) {
            if ((in[j] != 0) == (direction == SfsDirection::backward)) candidates.push_back(j);
        }
        std::sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
        std::vector<double> score(candidates.size());
        parallel_for(candidates.size(), [&](std::size_t k) {
            score[k] = cv_balanced_accuracy(train, positions_with(candidates[k]), spec, cv_folds, cv_seed);
        });
        std::size_t best = 0;
        for (std::size_t k = 1; k < candidates.size(); ++k) {
            if (score[k] > score[best]) best = k;
        }
        const std::size_t j = candidates[best];
        in[j] = direction == SfsDirection::forward;
        count += direction == SfsDirection::forward ? 1 : std::size_t(-1);
        ++step;
        out.scores[j] = direction == SfsDirection::forward ? static_cast<double>(p - step + 1) : static_cast<double>(step);
    }
    std::vector<std::size_t> chosen;
    for (std::size_t j = 0; j < p; ++j) {
        if (in[j]) {
            chosen.push_back(j);
            if (direction == SfsDirection::backward) out.scores[j] = static_cast<double>(p);
        }
    }
    out.selected = ids_of(train, chosen);
    return out;
}

SelectorDecision select_sfs(const Dataset& train, SfsEstimator estimator, SfsDirection direction, std::size_t n_keep,
                            std::size_t cv_folds, std::uint64_t seed) {
    return select_sfs_with(train, sfs_estimator_spec(estimator, seed), std::string("sfs_") + to_string(estimator),
                           direction, n_keep, cv_folds, seed);
}

// ------------------------------------------------------------
// Voting
// ------------------------------------------------------------

std::size_t FeatureVoteLedger::voted_count() const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const VoteEntry& e) { return e.votes > 0; }));
}

std::size_t FeatureVoteLedger::zero_vote_count() const { return entries.size() - voted_count(); }

std::vector<VoteEntry> FeatureVoteLedger::ranked() const {
    auto out = entries;
    std::stable_sort(out.begin(), out.end(), [](const VoteEntry& a, const VoteEntry& b) {
        if (a.votes != b.votes) return a.votes > b.votes;
        return a.column_id < b.column_id;
    });
    return out;
}

FeatureVoteLedger vote(const std::vector<SelectorDecision>& decisions, std::size_t threshold,
                       const std::vector<std::size_t>& universe) {
    if (decisions.empty()) throw Error("vote: no selector decisions");
    if (threshold < 1) throw Error("vote: threshold must be at least 1");
    FeatureVoteLedger ledger;
    if (threshold > decisions.size()) {
        ledger.warnings.push_back("threshold " + std::to_string(threshold) + " exceeds the " +
                                  std::to_string(decisions.size()) + " selectors run");
    }
    ledger.threshold = threshold;
    ledger.n_selectors = decisions.size();
    std::map<std::size_t, VoteEntry> by_id;
    for (std::size_t id : universe) by_id[id].column_id = id;
    for (const auto& d : decisions) {
        std::vector<std::size_t> unique = d.selected;
        std::sort(unique.begin(), unique.end());
        unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
        for (std::size_t id : unique) {
            auto it = by_id.find(id);
            if (it == by_id.end()) throw Error("vote: selector " + d.selector + " named unknown column " + std::to_string(id));
            ++it->second.votes;
            it->second.contributors.push_back(d.selector);
        }
        if (unique.empty()) ledger.warnings.push_back("selector " + d.selector + " selected no features");
    }
    for (auto& [id, e] : by_id) {
        if (e.votes >= threshold) ledger.selected.push_back(id);
        ledger.entries.push_back(std::move(e));
    }
    if (ledger.selected.empty()) ledger.warnings.push_back("no feature reached the vote threshold");
    return ledger;
}

void write_vote_ledger(const FeatureVoteLedger& ledger, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "column_id,votes,contributors\n";
    for (const auto& e : ledger.ranked()) {
        out << e.column_id << ',' << e.votes << ',';
        for (std::size_t k = 0; k < e.contributors.size(); ++k) out << (k ? ";" : "") << e.contributors[k];
        out << '\n';
    }
}

// ------------------------------------------------------------
// Roster
// ------------------------------------------------------------

std::vector<SelectorConfig> default_roster() {
    std::vector<SelectorConfig> r;
    auto add = [&](std::string name, SelectorKind kind) -> SelectorConfig& {
        SelectorConfig c;
        c.name = std::move(name);
        c.kind = kind;
        r.push_back(c);
        return r.back();
    };
    add("f_score", SelectorKind::f_score);
    add("mutual_info_10", SelectorKind::mutual_info).n_bins = 10;
    add("mutual_info_5", SelectorKind::mutual_info).n_bins = 5;
    add("mutual_info_20", SelectorKind::mutual_info).n_bins = 20;
    add("lasso_0.1", SelectorKind::lasso).lambda_fraction = 0.1;
    add("lasso_0.25", SelectorKind::lasso).lambda_fraction = 0.25;
    add("boruta", SelectorKind::boruta);
    add("rfe_logistic", SelectorKind::rfe).rfe_estimator = RfeEstimator::logistic;
    add("rfe_linear_svm", SelectorKind::rfe).rfe_estimator = RfeEstimator::linear_svm;
    add("rfe_forest", SelectorKind::rfe).rfe_estimator = RfeEstimator::forest;
    for (auto [name, est] : {std::pair{"sfs_boosted_trees", SfsEstimator::boosted_trees},
                             std::pair{"sfs_linear_svm", SfsEstimator::linear_svm}}) {
        auto& c = add(name, SelectorKind::sfs);
        c.sfs_estimator = est;
        c.max_keep = 20;
    }
    return r;
}

std::size_t default_budget(std::size_t n_cols, double budget_fraction) {
    if (!(budget_fraction > 0.0 && budget_fraction <= 1.0)) throw Error("budget fraction must be in (0, 1]");
    return std::clamp<std::size_t>(round_half_up(budget_fraction * static_cast<double>(n_cols)), 1, std::max<std::size_t>(n_cols, 1));
}

SelectorDecision run_selector(const SelectorConfig& cfg, const Dataset& train, std::size_t default_n_keep,
                              std::uint64_t master_seed) {
    std::size_t n_keep = std::min(cfg.n_keep ? cfg.n_keep : default_n_keep, train.cols());
    if (cfg.max_keep) n_keep = std::min(n_keep, cfg.max_keep);
    const std::uint64_t seed = substream(master_seed, cfg.name);
    SelectorDecision d;
    switch (cfg.kind) {
        case SelectorKind::f_score: d = select_f_score(train, n_keep); break;
        case SelectorKind::mutual_info: d = select_mutual_info(train, n_keep, cfg.n_bins); break;
        case SelectorKind::lasso: {
            std::vector<double> y(train.rows());
            for (std::size_t i = 0; i < y.size(); ++i) y[i] = train.labels[i] == 1 ? 1.0 : -1.0;
            d = select_lasso(train, cfg.lambda_fraction * lasso_lambda_max(train.features, y), seed);
            break;
        }
        case SelectorKind::boruta: d = select_boruta(train, cfg.boruta_iterations, cfg.boruta_alpha, seed); break;
        case SelectorKind::rfe: d = select_rfe(train, cfg.rfe_estimator, n_keep, seed); break;
        case SelectorKind::sfs:
            d = select_sfs(train, cfg.sfs_estimator, cfg.sfs_direction, n_keep, cfg.cv_folds, seed);
            break;
    }
    d.selector = cfg.name;
    return d;
}

std::vector<SelectorDecision> run_roster(const std::vector<SelectorConfig>& roster, const Dataset& train,
                                         double budget_fraction, std::uint64_t master_seed) {
    if (roster.empty()) throw Error("featsel: empty selector roster");
    const std::size_t budget = default_budget(train.cols(), budget_fraction);
    std::vector<SelectorDecision> out;
    out.reserve(roster.size());
    for (const auto& cfg : roster) out.push_back(run_selector(cfg, train, budget, master_seed));
    return out;
}

}  // namespace rareclass
