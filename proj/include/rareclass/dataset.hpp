#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rareclass/common.hpp"

namespace rareclass {

/// Row-major table of optional reals. A missing cell holds kMissing (NaN);
/// parsed inputs never contain a present NaN. Column identifiers are the
/// original 0-based column indices and survive every pruning step.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    /// All-missing matrix with the given columns.
    FeatureMatrix(std::size_t rows, std::vector<std::size_t> column_ids);
    /// Identity column ids 0..cols-1.
    FeatureMatrix(std::size_t rows, std::size_t cols);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return column_ids_.size(); }
    const std::vector<std::size_t>& column_ids() const { return column_ids_; }

    double value(std::size_t r, std::size_t c) const { return cells_[r * cols() + c]; }
    double& value(std::size_t r, std::size_t c) { return cells_[r * cols() + c]; }
    bool missing(std::size_t r, std::size_t c) const { return is_missing(value(r, c)); }
    std::optional<double> get(std::size_t r, std::size_t c) const;
    void set(std::size_t r, std::size_t c, double v) { value(r, c) = v; }
    void set_missing(std::size_t r, std::size_t c) { value(r, c) = kMissing; }

    std::span<const double> row(std::size_t r) const { return {cells_.data() + r * cols(), cols()}; }
    std::span<double> row(std::size_t r) { return {cells_.data() + r * cols(), cols()}; }
    std::vector<double> column(std::size_t c) const;
    const std::vector<double>& cells() const { return cells_; }

    /// Position of a column id, if present.
    std::optional<std::size_t> find(std::size_t column_id) const;
    /// Position of a column id; throws Error("unknown column ...") otherwise.
    std::size_t position_of(std::size_t column_id) const;

    FeatureMatrix select_columns(std::span<const std::size_t> positions) const;
    FeatureMatrix select_rows(std::span<const std::size_t> rows) const;
    void append_row(std::span<const double> values);

    std::size_t missing_count() const;

    bool operator==(const FeatureMatrix& other) const;

private:
    std::size_t rows_ = 0;
    std::vector<std::size_t> column_ids_;
    std::vector<double> cells_;
};

struct ProvenanceRecord {
    std::string operation;
    std::string parameters;
    std::vector<std::size_t> columns;
};

/// Row id given to rows that did not come from the input file.
constexpr std::size_t kSyntheticRow = static_cast<std::size_t>(-1);

struct Dataset {
    FeatureMatrix features;
    std::vector<int> labels;  // 0 = pass (majority), 1 = fail (minority)
    std::vector<ProvenanceRecord> provenance;
    /// Source row index per row; kSyntheticRow for generated rows.
    std::vector<std::size_t> row_ids;

    std::size_t rows() const { return features.rows(); }
    std::size_t cols() const { return features.cols(); }
    std::size_t count_class(int label) const;

    /// Throws unless labels/row_ids are consistent with the feature matrix.
    void validate() const;
    /// Throws Error("<op>: both classes required") unless both classes appear.
    void require_both_classes(const char* op) const;

    Dataset select_rows(std::span<const std::size_t> rows) const;
    Dataset select_columns(std::span<const std::size_t> positions) const;
    void log(std::string operation, std::string parameters, std::vector<std::size_t> columns = {});
};

/// Builds a dataset from a feature matrix and labels, assigning row ids 0..n-1.
Dataset make_dataset(FeatureMatrix features, std::vector<int> labels);

struct ColumnStats {
    std::size_t column_id = 0;
    double missing_fraction = 0.0;
    std::optional<double> mean;
    std::optional<double> median;
    std::optional<double> std;  // population standard deviation
    std::optional<double> skewness;
    std::optional<double> min;
    std::optional<double> max;
    std::size_t n_present = 0;
    std::size_t n_unique = 0;
    bool is_constant = false;
};

/// Missing-data summary. The overall figure is over all cells; the affected
/// figure is over the cells of columns that have at least one missing value.
struct MissingSummary {
    double cell_fraction = 0.0;
    double affected_column_cell_fraction = 0.0;
    std::size_t affected_columns = 0;
    std::size_t missing_cells = 0;
    std::size_t total_cells = 0;
};

Dataset load_secom(const std::filesystem::path& data_path, const std::filesystem::path& labels_path);

Dataset load_delimited(const std::filesystem::path& path, const std::string& label_column, char delimiter,
                       const std::set<std::string>& missing_tokens);

std::vector<ColumnStats> column_stats(const Dataset& d);
ColumnStats column_stats_of(std::size_t column_id, std::span<const double> values);

MissingSummary missing_summary(const Dataset& d);

/// Symmetric matrix of pairwise-complete Pearson correlations; absent entries
/// (fewer than two shared rows, or zero variance on the shared rows) are NaN.
class CorrelationMatrix {
public:
    CorrelationMatrix() = default;
    explicit CorrelationMatrix(std::size_t n) : n_(n), r_(n * n, kMissing) {}

    std::size_t size() const { return n_; }
    std::optional<double> at(std::size_t i, std::size_t j) const;
    double raw(std::size_t i, std::size_t j) const { return r_[i * n_ + j]; }
    void set(std::size_t i, std::size_t j, double v) {
        r_[i * n_ + j] = v;
        r_[j * n_ + i] = v;
    }

private:
    std::size_t n_ = 0;
    std::vector<double> r_;
};

/// Pearson correlation over rows where both inputs are present.
std::optional<double> pairwise_pearson(std::span<const double> x, std::span<const double> y);

CorrelationMatrix correlation_matrix(const Dataset& d);

/// Writes column stats as CSV (one row per column).
void write_column_stats(const std::vector<ColumnStats>& stats, const std::filesystem::path& path);

/// Writes a dataset as CSV: header "label,<column ids...>", "NaN" for missing.
void write_dataset_csv(const Dataset& d, const std::filesystem::path& path);
/// Reads a file produced by write_dataset_csv.
Dataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace rareclass
