#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rareclass/dataset.hpp"

namespace rareclass {

enum class ModelFamily { logistic, linear_svm, decision_tree, random_forest, gradient_boosting, regularized_boosting };

const char* to_string(ModelFamily f);
ModelFamily parse_model_family(const std::string& name);
/// Short display label used in report tables (LR, SVM, DTC, RF, GBC, XGB).
const char* short_label(ModelFamily f);

enum class ClassWeight { none, balanced };

struct ModelSpec {
    ModelFamily family = ModelFamily::logistic;

    // Linear models.
    double learning_rate = 0.1;
    std::size_t epochs = 500;
    double l2 = 1e-4;
    double svm_c = 1.0;

    // Trees and ensembles.
    std::size_t max_depth = 6;
    std::size_t min_leaf = 5;
    std::size_t n_trees = 200;
    /// Features tried per split; 0 means sqrt(p) for forests and all features otherwise.
    std::size_t feature_subsample = 0;
    std::size_t n_rounds = 200;
    double shrinkage = 0.1;
    double leaf_l2 = 1.0;
    double split_gamma = 0.0;

    ClassWeight class_weight = ClassWeight::none;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Conventional defaults for each family.
ModelSpec default_spec(ModelFamily f);

struct TreeNode {
    // Internal nodes: feature >= 0 and rows with value <= threshold go left.
    int feature = -1;  // position in the training column order
    std::size_t column_id = 0;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf output
    double gain = 0.0;
    std::size_t count = 0;
    std::size_t depth = 0;

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> row) const;
    std::size_t depth() const;
};

struct TrainedModel {
    ModelSpec spec;
    std::vector<std::size_t> column_ids;

    std::vector<double> weights;  // linear models
    double bias = 0.0;
    std::vector<Tree> trees;  // tree models
    double base_score = 0.0;  // boosting prior log-odds

    std::vector<double> loss_trace;
    /// Per column position: |weight| for linear models, summed split gain for trees.
    std::vector<double> importance;

    /// Raw margin / log-odds / probability before the score map.
    double raw_score(std::span<const double> row) const;
    double score(std::span<const double> row) const;
};

/// Balanced class weights n / (2 n_c), or all ones.
std::vector<double> sample_weights(std::span<const int> labels, ClassWeight mode);

TrainedModel train(const ModelSpec& spec, const Dataset& train);

/// Scores in [0, 1]; column ids must match the training columns.
std::vector<double> predict_scores(const TrainedModel& m, const FeatureMatrix& rows);

// ------------------------------------------------------------
// Linear objectives (exposed for gradient checking)
// ------------------------------------------------------------

/// Parameters are the weights followed by the bias.
struct LossAndGradient {
    double loss = 0.0;
    std::vector<double> gradient;
};

/// Weighted mean log-loss plus (l2 / 2) * |w|^2.
LossAndGradient logistic_objective(std::span<const double> params, const FeatureMatrix& x, std::span<const int> y,
                                   std::span<const double> weights, double l2);

/// Weighted mean hinge loss plus |w|^2 / (2 C n). Rows with include[i] == 0 are skipped.
LossAndGradient hinge_objective(std::span<const double> params, const FeatureMatrix& x, std::span<const int> y,
                                std::span<const double> weights, double c, std::span<const char> include = {});

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::size_t excluded_rows = 0;
};

/// Analytic gradient vs central differences at the given parameters. For the
/// hinge loss, rows within the kink neighbourhood are excluded.
GradientCheckResult gradient_check(const ModelSpec& spec, const Dataset& data, std::span<const double> params,
                                   double epsilon);

/// Convenience overload at seeded random parameters.
GradientCheckResult gradient_check(const ModelSpec& spec, const Dataset& data, double epsilon);

void save_model(const TrainedModel& m, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace rareclass
