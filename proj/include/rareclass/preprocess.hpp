#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rareclass/dataset.hpp"

namespace rareclass {

enum class DropReason { high_missing, constant, correlated, constant_in_train };

const char* to_string(DropReason r);

struct DropLog {
    DropReason reason = DropReason::high_missing;
    double parameter = 0.0;
    std::vector<std::size_t> removed_column_ids;
    /// Parallel to removed_column_ids; set only for correlated drops.
    std::vector<std::optional<std::size_t>> kept_partner;

    std::size_t size() const { return removed_column_ids.size(); }
};

/// Removes columns whose missing fraction is strictly above threshold.
std::pair<Dataset, DropLog> drop_high_missing(const Dataset& d, double threshold);

/// Removes constant columns; all-missing columns are removed and logged as constant.
std::pair<Dataset, DropLog> drop_constant(const Dataset& d);

/// Greedy scan in ascending column-id order: a later column whose |r| with a
/// kept earlier column exceeds threshold is removed.
std::pair<Dataset, DropLog> drop_correlated(const Dataset& d, double threshold);

/// Appends logs as CSV rows "column_id,reason,threshold,kept_partner".
void write_drop_logs(const std::vector<DropLog>& logs, const std::filesystem::path& path);

// ------------------------------------------------------------
// Scaling
// ------------------------------------------------------------

struct ColumnScale {
    std::size_t column_id = 0;
    double min_x = 0.0;
    double max_x = 0.0;
    double ave_x = 0.0;
};

struct ScalerParams {
    std::vector<ColumnScale> columns;

    const ColumnScale& for_column(std::size_t column_id) const;
};

/// Per-column Min, Max, Ave over present training values.
ScalerParams fit_scaler(const Dataset& train);

/// x -> 0.5 + (x - ave) / (max - min) on present cells; no clamping.
Dataset apply_scaler(const ScalerParams& p, const Dataset& d);

// ------------------------------------------------------------
// Splitting
// ------------------------------------------------------------

struct SplitPlan {
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
    /// Per-row fold id when produced by stratified_kfold.
    std::optional<std::vector<std::size_t>> fold_of_row;
    std::size_t n_folds = 0;
    std::uint64_t seed = 0;

    /// Train/test rows of one fold (fold rows form the test side).
    SplitPlan fold(std::size_t k) const;
};

SplitPlan stratified_split(const Dataset& d, double test_fraction, std::uint64_t seed);

SplitPlan stratified_kfold(const Dataset& d, std::size_t k, std::uint64_t seed);

}  // namespace rareclass
