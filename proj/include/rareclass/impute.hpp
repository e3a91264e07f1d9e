#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rareclass/dataset.hpp"

namespace rareclass {

/// One filled cell. Rows are positions in the target dataset.
struct ImputeLogEntry {
    std::size_t row = 0;
    std::size_t column_id = 0;
    std::string method;
    double value = 0.0;
    bool fallback = false;
};

using ImputeLog = std::vector<ImputeLogEntry>;

void write_impute_log(const ImputeLog& log, const std::filesystem::path& path);

// ------------------------------------------------------------
// Simple strategies
// ------------------------------------------------------------

enum class SimpleStrategy { mean, median, most_frequent, forward, backward, linear_interpolation };

const char* to_string(SimpleStrategy s);
SimpleStrategy parse_simple_strategy(const std::string& name);

struct ColumnPlan {
    std::size_t column_id = 0;
    SimpleStrategy strategy = SimpleStrategy::mean;
    /// Fill value for mean/median/most_frequent; fallback value for the row-order strategies.
    double fill = 0.0;
};

struct SimpleImputePlan {
    std::vector<ColumnPlan> columns;

    const ColumnPlan& for_column(std::size_t column_id) const;
    ColumnPlan& for_column(std::size_t column_id);
};

constexpr double kDefaultSkewThreshold = 1.0;

/// |skewness| > threshold -> median, otherwise mean. Fill values come from the
/// same training stats; overrides replace the strategy for the named columns.
SimpleImputePlan assign_simple_strategies(const std::vector<ColumnStats>& train_stats, double skew_threshold,
                                          const std::map<std::size_t, SimpleStrategy>& overrides = {});

/// Fits fill values for every strategy from training rows. Throws if a column
/// is entirely missing in training.
SimpleImputePlan fit_simple_plan(const Dataset& train, const std::map<std::size_t, SimpleStrategy>& strategies,
                                 SimpleStrategy default_strategy);

Dataset simple_impute(const SimpleImputePlan& plan, const Dataset& d, ImputeLog* log = nullptr);

// ------------------------------------------------------------
// k nearest neighbours
// ------------------------------------------------------------

struct KnnImputeParams {
    std::size_t k = 5;
};

/// Distance over features present in both rows: sqrt(sum of squares / shared count).
/// Returns nullopt when the rows share no present feature.
std::optional<double> masked_distance(std::span<const double> a, std::span<const double> b);

/// Each missing cell of target becomes the mean of that column over the k
/// nearest training rows that have it present. Cells with no eligible
/// neighbour take the training column mean and are logged as fallbacks.
Dataset knn_impute(const KnnImputeParams& p, const Dataset& train, const Dataset& target, ImputeLog* log = nullptr);

// ------------------------------------------------------------
// Chained equations
// ------------------------------------------------------------

enum class MiceInit { mean, median };
enum class MiceNoise { deterministic_prediction, gaussian_residual_draw };

struct MiceParams {
    std::size_t n_iterations = 5;
    MiceInit initial_fill = MiceInit::mean;
    MiceNoise noise_mode = MiceNoise::deterministic_prediction;
    std::uint64_t seed = 0;
    double ridge = 1e-8;
};

/// One regression of a column on all other columns (plus intercept).
struct MiceEquation {
    std::size_t column = 0;  // position
    std::vector<double> coefficients;  // intercept first, then other columns in position order
    double residual_std = 0.0;
    bool fallback = false;  // singular design: column mean used instead
};

/// Fitted chained-equation model: per sweep, the equations in the order applied.
struct MiceModel {
    MiceParams params;
    std::vector<std::size_t> column_ids;
    std::vector<double> initial_values;  // per position
    std::vector<double> column_means;  // per position, over present training values
    std::vector<std::vector<MiceEquation>> sweeps;
};

/// Fits on train; the modelled columns are those with a missing cell in train
/// or in the optional target, so the equations needed to fill target exist.
MiceModel fit_mice(const MiceParams& p, const Dataset& train, const Dataset* target = nullptr);

Dataset apply_mice(const MiceModel& model, const Dataset& target, ImputeLog* log = nullptr);

Dataset mice_impute(const MiceParams& p, const Dataset& train, const Dataset& target, ImputeLog* log = nullptr);

}  // namespace rareclass
