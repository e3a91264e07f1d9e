#include <sstream>

#include "doctest.h"
#include "rareclass/pipeline.hpp"
#include "support/fast_config.hpp"
#include "support/surrogate.hpp"

using namespace rareclass;
using rareclass::testing::fast_config;
using rareclass::testing::make_surrogate;

namespace {

const Dataset& surrogate() {
    static const Dataset d = make_surrogate({});
    return d;
}

PipelineConfig parse(const std::string& text, const PipelineConfig& base = {}) {
    std::istringstream in(text);
    return parse_config(in, base);
}

}  // namespace

TEST_CASE("config text is parsed section by section") {
    const PipelineConfig cfg = parse(R"(
# comment
[prune]
missing_threshold = 0.4
correlation_threshold = 0.8
[split]
mode = kfold
folds = 4
[impute]
method = mice
override.12 = median
[featsel]
selectors = f_score, lasso_0.1, boruta
vote_threshold = 2
[resample]
scenario = combined_0.4_0.8
[models]
list = logistic, regularized_boosting
XGB.n_rounds = 50
threshold = 0.4
[run]
seed = 99
)");
    CHECK(cfg.missing_threshold == 0.4);
    CHECK(cfg.correlation_threshold == 0.8);
    CHECK(cfg.mode == EvalMode::kfold);
    CHECK(cfg.folds == 4);
    CHECK(cfg.impute_method == ImputeMethod::mice);
    CHECK(cfg.impute_overrides.at(12) == SimpleStrategy::median);
    CHECK(cfg.roster.size() == 3);
    CHECK(cfg.vote_threshold == 2);
    CHECK(cfg.resample == ResampleStrategy::combined);
    CHECK(*cfg.under_ratio == 0.8);
    REQUIRE(cfg.models.size() == 2);
    CHECK(cfg.models[1].name == "XGB");
    CHECK(cfg.models[1].spec.n_rounds == 50);
    CHECK(cfg.decision_threshold == 0.4);
    CHECK(cfg.seed == 99);
}

TEST_CASE("config defaults") {
    const PipelineConfig cfg;
    CHECK(cfg.missing_threshold == 0.5);
    CHECK(cfg.correlation_threshold == 0.7);
    CHECK(cfg.test_fraction == 0.3);
    CHECK(cfg.folds == 5);
    CHECK(cfg.vote_threshold == 3);
    CHECK(cfg.roster.size() == 12);
    CHECK(cfg.models.size() == 6);
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("config errors") {
    CHECK_THROWS_WITH_AS(parse("[prune]\nbogus = 1\n"), doctest::Contains("unknown key 'prune.bogus' (line 2)"), Error);
    CHECK_THROWS_WITH_AS(parse("[nope]\n"), doctest::Contains("unknown section"), Error);
    CHECK_THROWS_WITH_AS(parse("[resample]\nscenario = smote_0.9\n"), doctest::Contains("unknown scenario"), Error);
    CHECK_THROWS_AS(parse("[prune]\ncorrelation_threshold = 1.5\n"), Error);
    CHECK_THROWS_AS(parse("[featsel]\nselectors = f_score\nvote_threshold = 3\n"), Error);
    CHECK_THROWS_AS(parse("key = 1\n"), Error);

    PipelineConfig cfg;
    CHECK_THROWS_AS(cfg.set_scenario("bogus"), Error);
    CHECK_THROWS_AS(scenario_for_number(4), Error);
    CHECK(scenario_for_number(2) == "smote_0.7");
}

TEST_CASE("unknown scenario fails before loading any data") {
    PipelineConfig cfg = fast_config();
    cfg.data_path = "/nonexistent/secom.data";
    cfg.scenario = "smote_0.9";
    try {
        run_scenario(cfg);
        FAIL("expected an error");
    } catch (const StageError& e) {
        CHECK(e.stage() == "config");
    }
    CHECK_THROWS_AS(reproduce(7, 1, rareclass::testing::fresh_dir("bad_scenario")), StageError);
}

TEST_CASE("leakage guard trips when a test row reaches a fitting routine") {
    const Dataset& d = surrogate();
    const SplitPlan plan = stratified_split(d, 0.3, 5);
    const Dataset train = d.select_rows(plan.train_rows);
    const Dataset test = d.select_rows(plan.test_rows);
    const LeakageGuard guard(test);
    CHECK_NOTHROW(guard.check(train, "fit"));
    std::vector<std::size_t> leak = plan.train_rows;
    leak.push_back(plan.test_rows.front());
    CHECK_THROWS_WITH_AS(guard.check(d.select_rows(leak), "fit"), doctest::Contains("leakage guard"), Error);
    CHECK_THROWS_AS(resample_training(fast_config(), d, guard), Error);
    CHECK(guard.test_hash() == partition_hash(test));
}

TEST_CASE("holdout run on surrogate data") {
    PipelineConfig cfg = fast_config();
    cfg.set_scenario("combined_0.4_0.8");
    const EvalReport r = run_scenario_on(cfg, surrogate(), 1);
    CHECK(r.models.size() == 6);
    CHECK(r.test_hash_at_split == r.test_hash_at_eval);
    CHECK(r.test_content_before_resample == r.test_content_after_resample);
    CHECK(r.resample.strategy == ResampleStrategy::combined);
    const double ratio = static_cast<double>(r.resample.after.minority) / static_cast<double>(r.resample.after.majority);
    CHECK(ratio == doctest::Approx(0.8).epsilon(0.02));
    CHECK(r.test_rows == 180);
    CHECK(r.features_used == r.ledger.selected.size());
    CHECK(r.features_used > 0);
    for (const auto& m : r.models) {
        CHECK(m.confusion.tp + m.confusion.fp + m.confusion.fn + m.confusion.tn == r.test_rows);
        CHECK(m.auc >= 0.0);
        CHECK(m.auc <= 1.0);
    }
    // Constant and mostly-missing surrogate columns are pruned.
    std::size_t high_missing = 0, constant = 0;
    for (const auto& d : r.drops) {
        if (d.reason == DropReason::high_missing) high_missing += d.size();
        if (d.reason == DropReason::constant) constant += d.size();
    }
    CHECK(high_missing == 4);
    CHECK(constant == 5);
}

TEST_CASE("reports are a pure function of config, seed and input") {
    PipelineConfig cfg = fast_config();
    cfg.set_scenario("smote_0.7");
    const EvalReport a = run_scenario_on(cfg, surrogate(), 1);
    const std::size_t before = num_threads();
    set_num_threads(before == 1 ? 3 : 1);
    const EvalReport b = run_scenario_on(cfg, surrogate(), 1);
    set_num_threads(before);
    CHECK(report_table(a) == report_table(b));

    const auto da = rareclass::testing::fresh_dir("report_a");
    const auto db = rareclass::testing::fresh_dir("report_b");
    const auto fa = emit_report(a, da, all_report_formats());
    const auto fb = emit_report(b, db, all_report_formats());
    REQUIRE(fa.size() == fb.size());
    for (std::size_t i = 0; i < fa.size(); ++i) {
        CHECK(fa[i].filename() == fb[i].filename());
        CHECK(rareclass::testing::read_file(fa[i]) == rareclass::testing::read_file(fb[i]));
    }

    cfg.seed = 2;
    CHECK(run_scenario_on(cfg, surrogate(), 1).config_digest != a.config_digest);
    CHECK(run_scenario_on(fast_config(), surrogate(), 2).config_digest !=
          run_scenario_on(fast_config(), surrogate(), 1).config_digest);
}

TEST_CASE("report files and table layout") {
    const EvalReport r = run_scenario_on(fast_config(), surrogate(), 1);
    const std::string table = report_table(r);
    CHECK(table.find("Model   Balanced Accuracy   Precision   Recall      FAR         AUC") != std::string::npos);
    for (const char* m : {"LR", "SVM", "DTC", "RF", "GBC", "XGB"}) CHECK(table.find(std::string("\n") + m + " ") != std::string::npos);

    const auto dir = rareclass::testing::fresh_dir("report_files");
    CHECK(emit_report(r, dir, {}).empty());
    CHECK(std::filesystem::is_empty(dir));

    const auto files = emit_report(r, dir, all_report_formats());
    CHECK(files.size() == 1 + 6 + 6 + 3);
    for (const char* name : {"report.txt", "roc_XGB.csv", "roc_XGB.svg", "votes.csv", "drops.csv", "resample_plan.csv"}) {
        CHECK(std::filesystem::exists(dir / name));
    }
    const std::string roc = rareclass::testing::read_file(dir / "roc_LR.csv");
    CHECK(roc.rfind("fpr,tpr,threshold\n", 0) == 0);
}

TEST_CASE("k-fold evaluation reports fold results and pooled curves") {
    PipelineConfig cfg = fast_config();
    cfg.mode = EvalMode::kfold;
    cfg.folds = 3;
    cfg.models.resize(2);
    const EvalReport r = run_scenario_on(cfg, surrogate(), 1);
    CHECK(r.folds.size() == 3);
    REQUIRE(r.models.size() == 2);
    std::size_t total = 0;
    const auto& c = r.models[0].confusion;
    total = c.tp + c.fp + c.fn + c.tn;
    CHECK(total == surrogate().rows());
    double mean_ba = 0.0;
    for (const auto& f : r.folds) mean_ba += f.models[0].metrics.balanced_accuracy / 3.0;
    CHECK(r.models[0].metrics.balanced_accuracy == doctest::Approx(mean_ba));
}

TEST_CASE("stage errors carry the stage name") {
    PipelineConfig cfg = fast_config();
    cfg.data_path = "/nonexistent/secom.data";
    cfg.labels_path = "/nonexistent/secom_labels.data";
    try {
        run_scenario(cfg);
        FAIL("expected an error");
    } catch (const StageError& e) {
        CHECK(e.stage() == "load");
        CHECK(std::string(e.what()).rfind("stage load: ", 0) == 0);
    }
}

TEST_CASE("reproduce reads SECOM-format files and writes every report file") {
    const auto data_dir = rareclass::testing::fresh_dir("repro_data");
    rareclass::testing::write_secom_files(surrogate(), data_dir);
    PipelineConfig base = fast_config();
    base.data_path = data_dir / "secom.data";
    base.labels_path = data_dir / "secom_labels.data";
    const auto out = rareclass::testing::fresh_dir("repro_out");
    const EvalReport r = reproduce(2, 5, out, base);
    CHECK(r.scenario == "smote_0.7");
    CHECK(*r.resample.over_ratio == 0.7);
    CHECK_FALSE(r.resample.under_ratio.has_value());
    CHECK(std::filesystem::exists(out / "report.txt"));
    const auto again = rareclass::testing::fresh_dir("repro_out2");
    reproduce(2, 5, again, base);
    CHECK(rareclass::testing::read_file(out / "report.txt") == rareclass::testing::read_file(again / "report.txt"));
}
