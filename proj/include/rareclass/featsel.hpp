#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rareclass/dataset.hpp"
#include "rareclass/models.hpp"

namespace rareclass {

struct SelectorDecision {
    std::string selector;
    /// Selected column ids, ascending.
    std::vector<std::size_t> selected;
    /// Per dataset column position, where the method produces a score.
    std::vector<double> scores;
    std::vector<std::string> notes;
};

/// Indices of the n_keep highest scores; ties go to the lower column id.
std::vector<std::size_t> top_k_columns(const std::vector<double>& scores, const std::vector<std::size_t>& column_ids,
                                       std::size_t n_keep);

// ------------------------------------------------------------
// Filter methods
// ------------------------------------------------------------

/// One-way ANOVA F between the two classes. Zero within-class variance with
/// distinct means yields +infinity.
double anova_f(std::span<const double> values, std::span<const int> labels);
SelectorDecision select_f_score(const Dataset& train, std::size_t n_keep);

/// Equal-frequency bin index per value (tied values share a bin).
std::vector<std::size_t> equal_frequency_bins(std::span<const double> values, std::size_t n_bins);
/// Plug-in mutual information (nats) between discrete codes and the binary label.
double mutual_information(std::span<const std::size_t> codes, std::span<const int> labels);
SelectorDecision select_mutual_info(const Dataset& train, std::size_t n_keep, std::size_t n_bins);

// ------------------------------------------------------------
// LASSO
// ------------------------------------------------------------

struct LassoFit {
    std::vector<double> coefficients;  // per column position
    double intercept = 0.0;
    std::vector<double> objective_trace;  // after each sweep
    std::size_t sweeps = 0;
    /// Max over coordinates of the subgradient optimality violation.
    double optimality_residual = 0.0;
};

/// Minimises (1/2n)|y - b - Xw|^2 + lambda |w|_1 by cyclic coordinate descent.
LassoFit lasso_coordinate_descent(const FeatureMatrix& x, std::span<const double> y, double lambda,
                                  double tolerance = 1e-7, std::size_t max_sweeps = 100000);

/// Smallest lambda with an all-zero solution: max_j |cov(x_j, y)|.
double lasso_lambda_max(const FeatureMatrix& x, std::span<const double> y);

/// LASSO on the +/-1 coded label; selected = non-zero coefficients.
SelectorDecision select_lasso(const Dataset& train, double lambda, std::uint64_t seed);

// ------------------------------------------------------------
// Wrapper methods
// ------------------------------------------------------------

enum class BorutaStatus { confirmed, rejected, tentative };

struct BorutaOptions {
    std::size_t max_iterations = 50;
    double alpha = 0.05;
    std::size_t n_trees = 50;
    std::size_t max_depth = 8;
    std::size_t min_leaf = 3;
};

SelectorDecision select_boruta(const Dataset& train, std::size_t max_iterations, double alpha, std::uint64_t seed,
                               const BorutaOptions& options = {});

/// Per-column Boruta outcome of the last select_boruta call is reported in notes;
/// this variant returns statuses directly for inspection.
std::vector<BorutaStatus> boruta_statuses(const Dataset& train, std::size_t max_iterations, double alpha,
                                          std::uint64_t seed, const BorutaOptions& options = {});

enum class RfeEstimator { logistic, linear_svm, forest };

const char* to_string(RfeEstimator e);

/// Estimator used by RFE; class-weighted.
ModelSpec rfe_estimator_spec(RfeEstimator e, std::uint64_t seed);

/// Elimination order (column ids, first eliminated first) plus the survivors.
struct RfeResult {
    std::vector<std::size_t> eliminated;
    std::vector<std::size_t> kept;
};

RfeResult recursive_feature_elimination(const Dataset& train, const ModelSpec& estimator, std::size_t n_keep);
SelectorDecision select_rfe(const Dataset& train, RfeEstimator estimator, std::size_t n_keep, std::uint64_t seed = 0);

enum class SfsEstimator { boosted_trees, linear_svm };
enum class SfsDirection { forward, backward };

const char* to_string(SfsEstimator e);

ModelSpec sfs_estimator_spec(SfsEstimator e, std::uint64_t seed);

/// Mean balanced accuracy over stratified folds, training on the listed column positions.
double cv_balanced_accuracy(const Dataset& train, const std::vector<std::size_t>& positions, const ModelSpec& spec,
                            std::size_t folds, std::uint64_t seed);

SelectorDecision select_sfs(const Dataset& train, SfsEstimator estimator, SfsDirection direction, std::size_t n_keep,
                            std::size_t cv_folds, std::uint64_t seed);
SelectorDecision select_sfs_with(const Dataset& train, const ModelSpec& spec, const std::string& name,
                                 SfsDirection direction, std::size_t n_keep, std::size_t cv_folds,
                                 std::uint64_t seed);

// ------------------------------------------------------------
// Voting
// ------------------------------------------------------------

struct VoteEntry {
    std::size_t column_id = 0;
    std::size_t votes = 0;
    std::vector<std::string> contributors;
};

struct FeatureVoteLedger {
    std::size_t threshold = 0;
    std::size_t n_selectors = 0;
    /// One entry per column seen by any decision, ascending column id.
    std::vector<VoteEntry> entries;
    std::vector<std::size_t> selected;
    std::vector<std::string> warnings;

    std::size_t voted_count() const;
    std::size_t zero_vote_count() const;
    /// Entries sorted by descending votes, then ascending column id.
    std::vector<VoteEntry> ranked() const;
};

/// Columns universe for zero-vote accounting; decisions may only name these ids.
/// A threshold above the number of decisions yields an empty selection with a warning.
FeatureVoteLedger vote(const std::vector<SelectorDecision>& decisions, std::size_t threshold,
                       const std::vector<std::size_t>& universe);

void write_vote_ledger(const FeatureVoteLedger& ledger, const std::filesystem::path& path);

// ------------------------------------------------------------
// Roster
// ------------------------------------------------------------

enum class SelectorKind { f_score, mutual_info, lasso, boruta, rfe, sfs };

struct SelectorConfig {
    std::string name;
    SelectorKind kind = SelectorKind::f_score;
    std::size_t n_bins = 10;                 // mutual_info
    double lambda_fraction = 0.1;            // lasso: lambda = fraction * lambda_max
    RfeEstimator rfe_estimator = RfeEstimator::logistic;
    SfsEstimator sfs_estimator = SfsEstimator::linear_svm;
    SfsDirection sfs_direction = SfsDirection::forward;
    std::size_t cv_folds = 3;
    std::size_t boruta_iterations = 50;
    double boruta_alpha = 0.05;
    /// Per-selector budget override; 0 uses the roster default.
    std::size_t n_keep = 0;
    /// Upper bound on the budget; 0 means none. Bounds the cost of sequential selection.
    std::size_t max_keep = 0;
};

/// The twelve-voter roster.
std::vector<SelectorConfig> default_roster();

/// Default budget: round(budget_fraction * columns), at least 1. The roster
/// default fraction is one half.
std::size_t default_budget(std::size_t n_cols, double budget_fraction);

SelectorDecision run_selector(const SelectorConfig& cfg, const Dataset& train, std::size_t default_n_keep,
                              std::uint64_t master_seed);

std::vector<SelectorDecision> run_roster(const std::vector<SelectorConfig>& roster, const Dataset& train,
                                         double budget_fraction, std::uint64_t master_seed);

}  // namespace rareclass
