#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "rareclass/dataset.hpp"
#include "rareclass/featsel.hpp"
#include "rareclass/impute.hpp"
#include "rareclass/metrics.hpp"
#include "rareclass/models.hpp"
#include "rareclass/preprocess.hpp"
#include "rareclass/resample.hpp"

namespace rareclass {

/// Error raised by the orchestrator; the message starts with the stage name.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& message)
        : Error("stage " + stage + ": " + message), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

enum class EvalMode { holdout, kfold };
enum class ImputeMethod { simple, knn, mice };

const char* to_string(ImputeMethod m);

struct ModelEntry {
    std::string name;  // report label, e.g. "XGB"
    ModelSpec spec;
};

struct PipelineConfig {
    // [data]
    std::string data_format = "secom";  // secom | csv
    std::filesystem::path data_path;
    std::filesystem::path labels_path;  // secom only
    std::string label_column = "label";  // csv only
    char delimiter = ',';

    // [prune]
    double missing_threshold = 0.5;
    double correlation_threshold = 0.7;

    // [split]
    EvalMode mode = EvalMode::holdout;
    double test_fraction = 0.3;
    std::size_t folds = 5;

    // [impute]
    ImputeMethod impute_method = ImputeMethod::knn;
    std::size_t knn_k = 5;
    double skew_threshold = kDefaultSkewThreshold;
    std::size_t mice_iterations = 5;
    bool eda_refinement = true;
    std::map<std::size_t, SimpleStrategy> impute_overrides;

    // [featsel]
    bool featsel_enabled = true;
    std::size_t vote_threshold = 3;
    double budget_fraction = 0.5;
    std::vector<SelectorConfig> roster = default_roster();

    // [resample]
    std::string scenario = "none";
    ResampleStrategy resample = ResampleStrategy::none;
    double over_ratio = 1.0;
    std::optional<double> under_ratio;
    std::size_t k_neighbors = 5;

    // [models]
    std::vector<ModelEntry> models = default_models();
    double decision_threshold = 0.5;

    // [run]
    std::uint64_t seed = 1;
    std::filesystem::path out_dir = "out";
    std::size_t threads = 0;  // 0 keeps the current setting

    /// The six report models with their default hyperparameters.
    static std::vector<ModelEntry> default_models();

    void validate() const;
    /// Sets the resampling fields for a named scenario; throws on unknown ids.
    void set_scenario(const std::string& id);
    /// Stable key = value listing of every setting except file paths.
    std::string canonical() const;
};

/// Section/key text format: "[section]" headers and "key = value" lines; '#'
/// starts a comment. Unknown sections or keys are errors.
PipelineConfig parse_config(std::istream& in, const PipelineConfig& base = {});
PipelineConfig load_config(const std::filesystem::path& path, const PipelineConfig& base = {});

/// Scenario names accepted by set_scenario and reproduce.
const std::vector<std::string>& scenario_ids();
/// 1 -> none, 2 -> smote_0.7, 3 -> combined_0.4_0.8.
std::string scenario_for_number(int n);

// ------------------------------------------------------------
// Leakage guard
// ------------------------------------------------------------

/// Hash of a partition's row ids and labels in row order.
std::uint64_t partition_hash(const Dataset& d);
/// Hash of a partition's row ids, labels and every feature bit.
std::uint64_t content_hash(const Dataset& d);

class LeakageGuard {
public:
    LeakageGuard() = default;
    explicit LeakageGuard(const Dataset& test);

    /// Throws if any source row of the test partition appears in fit_input.
    void check(const Dataset& fit_input, const std::string& stage) const;
    std::uint64_t test_hash() const { return hash_; }

private:
    std::unordered_set<std::size_t> test_rows_;
    std::uint64_t hash_ = 0;
};

// ------------------------------------------------------------
// Stages
// ------------------------------------------------------------

struct LoadedData {
    Dataset data;
    /// Hash of the input file bytes.
    std::uint64_t input_digest = 0;
};

LoadedData load_input(const PipelineConfig& cfg);

struct PruneResult {
    Dataset data;
    std::vector<DropLog> drops;
    std::size_t original_columns = 0;
    double original_missing_fraction = 0.0;
    double residual_missing_fraction = 0.0;
};

/// EDA summary plus the missing, constant and correlated drops.
PruneResult prune(const PipelineConfig& cfg, const Dataset& raw);

struct PreparedSplit {
    Dataset train;
    Dataset test;
    ScalerParams scaler;
    DropLog train_constant;  // columns constant on the training rows
    std::vector<std::size_t> eda_toggled;  // columns refilled by the refinement pass
    ImputeLog impute_log;
};

/// Train-constant drop, scaling and imputation, all fitted on train only.
PreparedSplit prepare_split(const PipelineConfig& cfg, const Dataset& train, const Dataset& test,
                            const LeakageGuard& guard);

struct Selection {
    std::vector<SelectorDecision> decisions;
    FeatureVoteLedger ledger;
};

Selection select_features(const PipelineConfig& cfg, const Dataset& train, const LeakageGuard& guard);

std::pair<Dataset, ResamplePlan> resample_training(const PipelineConfig& cfg, const Dataset& train,
                                                   const LeakageGuard& guard);

/// Trains every configured model; model seeds derive from the master seed.
std::vector<TrainedModel> train_models(const PipelineConfig& cfg, const Dataset& train, const LeakageGuard& guard);

struct ModelResult {
    std::string name;
    ConfusionMatrix confusion;
    MetricSet metrics;
    RocCurve roc;
    double auc = 0.0;
};

std::vector<ModelResult> evaluate_models(const PipelineConfig& cfg, const std::vector<TrainedModel>& models,
                                         const Dataset& test);

// ------------------------------------------------------------
// Scenario runner and report
// ------------------------------------------------------------

struct FoldResult {
    std::size_t fold = 0;
    std::vector<ModelResult> models;
};

struct EvalReport {
    std::string scenario;
    std::uint64_t seed = 0;
    std::string config_digest;
    EvalMode mode = EvalMode::holdout;

    /// Holdout results, or fold means (confusions summed, ROC over pooled scores).
    std::vector<ModelResult> models;
    std::vector<FoldResult> folds;

    std::size_t original_columns = 0;
    double original_missing_fraction = 0.0;
    double residual_missing_fraction = 0.0;
    std::vector<DropLog> drops;  // missing, constant, correlated, train-constant
    std::size_t train_rows = 0;
    std::size_t test_rows = 0;
    std::size_t features_used = 0;
    std::vector<std::size_t> eda_toggled;
    FeatureVoteLedger ledger;
    ResamplePlan resample;

    std::uint64_t test_hash_at_split = 0;
    std::uint64_t test_hash_at_eval = 0;
    /// Content hash of the test partition immediately before and after resampling.
    std::uint64_t test_content_before_resample = 0;
    std::uint64_t test_content_after_resample = 0;

    /// Wall-clock seconds per stage; shown on the console, never written to files.
    std::vector<std::pair<std::string, double>> timings;
};

/// Runs every stage on already loaded data.
EvalReport run_scenario_on(const PipelineConfig& cfg, const Dataset& raw, std::uint64_t input_digest);
EvalReport run_scenario(const PipelineConfig& cfg);

enum class ReportFormat { table_text, roc_csv, roc_plot, ledger };

std::set<ReportFormat> all_report_formats();

/// Text of report.txt.
std::string report_table(const EvalReport& r);

/// Writes the requested files and returns their paths in writing order.
std::vector<std::filesystem::path> emit_report(const EvalReport& r, const std::filesystem::path& out_dir,
                                               const std::set<ReportFormat>& formats);

/// Runs scenario 1, 2 or 3 with the given seed on the configured data files and
/// writes every report file into out_dir.
EvalReport reproduce(int scenario, std::uint64_t seed, const std::filesystem::path& out_dir,
                     const PipelineConfig& base = {});

}  // namespace rareclass
