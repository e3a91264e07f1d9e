#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "rareclass/pipeline.hpp"

namespace fs = std::filesystem;
using namespace rareclass;

namespace {

struct Options {
    std::string config;
    std::size_t threads = 0;
    std::string out;
};

/// SECOM files from the environment or ./data/secom when the config names none.
void resolve_data(PipelineConfig& cfg) {
    if (!cfg.data_path.empty()) return;
    std::vector<fs::path> dirs;
    if (const char* env = std::getenv("RARECLASS_SECOM_DIR")) dirs.emplace_back(env);
    dirs.emplace_back("data/secom");
    for (const auto& d : dirs) {
        if (fs::exists(d / "secom.data") && fs::exists(d / "secom_labels.data")) {
            cfg.data_format = "secom";
            cfg.data_path = d / "secom.data";
            cfg.labels_path = d / "secom_labels.data";
            return;
        }
    }
    throw StageError("load", "no data files configured and SECOM not found (set RARECLASS_SECOM_DIR)");
}

PipelineConfig make_config(const Options& o) {
    PipelineConfig cfg;
    if (!o.config.empty()) {
        try {
            cfg = load_config(o.config);
        } catch (const Error& e) {
            throw StageError("config", e.what());
        }
    }
    if (!o.out.empty()) cfg.out_dir = o.out;
    if (o.threads > 0) cfg.threads = o.threads;
    if (cfg.threads > 0) set_num_threads(cfg.threads);
    return cfg;
}

void print_timings(const EvalReport& r) {
    for (const auto& [name, seconds] : r.timings) std::cerr << "  " << name << ": " << format_fixed(seconds, 2) << " s\n";
}

fs::path prepared_dir(const PipelineConfig& cfg) { return cfg.out_dir; }

std::vector<std::size_t> read_selected(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string() + " (run select first)");
    std::vector<std::size_t> ids;
    std::size_t id = 0;
    while (in >> id) ids.push_back(id);
    return ids;
}

Dataset restrict_to(const Dataset& d, const std::vector<std::size_t>& ids) {
    std::vector<std::size_t> pos;
    for (std::size_t id : ids) pos.push_back(d.features.position_of(id));
    return d.select_columns(pos);
}

int cmd_eda(const std::string& data, const std::string& labels, const Options& o) {
    const PipelineConfig cfg = make_config(o);
    const Dataset d = load_secom(data, labels);
    const auto summary = missing_summary(d);
    std::cout << "rows " << d.rows() << ", columns " << d.cols() << ", failures " << d.count_class(1) << '\n';
    std::cout << "missing cells " << summary.missing_cells << " (" << format_fixed(100 * summary.cell_fraction, 2)
              << "%), columns with missing values " << summary.affected_columns << '\n';
    const PruneResult pr = prune(cfg, d);
    for (const auto& log : pr.drops) std::cout << "dropped " << to_string(log.reason) << ": " << log.size() << '\n';
    std::cout << "surviving columns " << pr.data.cols() << ", residual missing "
              << format_fixed(100 * pr.residual_missing_fraction, 2) << "%\n";
    if (!o.out.empty()) {
        fs::create_directories(o.out);
        write_column_stats(column_stats(d), fs::path(o.out) / "column_stats.csv");
        write_drop_logs(pr.drops, fs::path(o.out) / "drops.csv");
    }
    return 0;
}

int cmd_preprocess(const Options& o) {
    PipelineConfig cfg = make_config(o);
    resolve_data(cfg);
    const LoadedData loaded = load_input(cfg);
    PruneResult pr;
    try {
        pr = prune(cfg, loaded.data);
    } catch (const Error& e) {
        throw StageError("prune", e.what());
    }
    SplitPlan plan;
    try {
        plan = stratified_split(pr.data, cfg.test_fraction, substream(cfg.seed, "split"));
    } catch (const Error& e) {
        throw StageError("split", e.what());
    }
    const Dataset train = pr.data.select_rows(plan.train_rows);
    const Dataset test = pr.data.select_rows(plan.test_rows);
    const LeakageGuard guard(test);
    PreparedSplit prep;
    try {
        prep = prepare_split(cfg, train, test, guard);
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError("impute", e.what());
    }
    const fs::path dir = prepared_dir(cfg);
    fs::create_directories(dir);
    write_dataset_csv(prep.train, dir / "train.csv");
    write_dataset_csv(prep.test, dir / "test.csv");
    auto drops = pr.drops;
    drops.push_back(prep.train_constant);
    write_drop_logs(drops, dir / "drops.csv");
    write_impute_log(prep.impute_log, dir / "impute_log.csv");
    std::cout << "train " << prep.train.rows() << " x " << prep.train.cols() << ", test " << prep.test.rows()
              << " rows, written to " << dir.string() << '\n';
    return 0;
}

int cmd_select(const Options& o) {
    const PipelineConfig cfg = make_config(o);
    const fs::path dir = prepared_dir(cfg);
    Selection sel;
    try {
        const Dataset train = read_dataset_csv(dir / "train.csv");
        const Dataset test = read_dataset_csv(dir / "test.csv");
        sel = select_features(cfg, train, LeakageGuard(test));
    } catch (const Error& e) {
        throw StageError("featsel", e.what());
    }
    write_vote_ledger(sel.ledger, dir / "votes.csv");
    std::ofstream out(dir / "selected.txt");
    for (std::size_t id : sel.ledger.selected) out << id << '\n';
    std::cout << "selected " << sel.ledger.selected.size() << " of " << sel.ledger.entries.size() << " features ("
              << sel.ledger.voted_count() << " voted)\n";
    return 0;
}

int cmd_train(const Options& o) {
    const PipelineConfig cfg = make_config(o);
    const fs::path dir = prepared_dir(cfg);
    Dataset train;
    Dataset test;
    try {
        train = read_dataset_csv(dir / "train.csv");
        test = read_dataset_csv(dir / "test.csv");
        const auto ids = read_selected(dir / "selected.txt");
        train = restrict_to(train, ids);
    } catch (const Error& e) {
        throw StageError("load", e.what());
    }
    const LeakageGuard guard(test);
    std::pair<Dataset, ResamplePlan> resampled;
    try {
        resampled = resample_training(cfg, train, guard);
    } catch (const Error& e) {
        throw StageError("resample", e.what());
    }
    write_resample_plan(resampled.second, dir / "resample_plan.csv");
    std::vector<TrainedModel> models;
    try {
        models = train_models(cfg, resampled.first, guard);
    } catch (const Error& e) {
        throw StageError("train", e.what());
    }
    for (std::size_t i = 0; i < models.size(); ++i) {
        save_model(models[i], dir / ("model_" + cfg.models[i].name + ".txt"));
    }
    std::cout << "trained " << models.size() << " models on " << resampled.first.rows() << " rows\n";
    return 0;
}

int cmd_evaluate(const Options& o) {
    const PipelineConfig cfg = make_config(o);
    const fs::path dir = prepared_dir(cfg);
    EvalReport r;
    try {
        Dataset test = read_dataset_csv(dir / "test.csv");
        test = restrict_to(test, read_selected(dir / "selected.txt"));
        std::vector<TrainedModel> models;
        for (const auto& m : cfg.models) models.push_back(load_model(dir / ("model_" + m.name + ".txt")));
        r.models = evaluate_models(cfg, models, test);
        r.scenario = cfg.scenario;
        r.seed = cfg.seed;
        r.config_digest = hex64(fnv1a(cfg.canonical()));
        r.test_rows = test.rows();
        r.features_used = test.cols();
        r.test_hash_at_eval = partition_hash(test);
    } catch (const Error& e) {
        throw StageError("evaluate", e.what());
    }
    emit_report(r, dir, {ReportFormat::table_text, ReportFormat::roc_csv, ReportFormat::roc_plot});
    std::cout << report_table(r);
    return 0;
}

int cmd_run(const Options& o, const std::string& scenario) {
    PipelineConfig cfg = make_config(o);
    if (!scenario.empty()) cfg.set_scenario(scenario);
    resolve_data(cfg);
    const EvalReport r = run_scenario(cfg);
    emit_report(r, cfg.out_dir, all_report_formats());
    std::cout << report_table(r);
    print_timings(r);
    return 0;
}

int cmd_reproduce(const Options& o, int scenario, std::uint64_t seed) {
    PipelineConfig cfg = make_config(o);
    resolve_data(cfg);
    const fs::path out = o.out.empty() ? cfg.out_dir : fs::path(o.out);
    const EvalReport r = reproduce(scenario, seed, out, cfg);
    std::cout << report_table(r);
    print_timings(r);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rare-class classification toolkit"};
    app.require_subcommand(1);
    Options o;
    app.add_option("--config", o.config, "Pipeline configuration file");
    app.add_option("--threads", o.threads, "Worker threads (0 = hardware concurrency)");

    auto* eda = app.add_subcommand("eda", "Summarise a SECOM-format dataset and its pruning counts");
    std::string data;
    std::string labels;
    eda->add_option("data", data, "Feature file")->required();
    eda->add_option("labels", labels, "Labels file")->required();
    eda->add_option("--out", o.out, "Directory for column_stats.csv and drops.csv");

    auto* pre = app.add_subcommand("preprocess", "Prune, split, scale and impute; writes train.csv and test.csv");
    pre->add_option("--out", o.out, "Working directory");
    auto* sel = app.add_subcommand("select", "Run the selector roster and vote; writes votes.csv and selected.txt");
    sel->add_option("--out", o.out, "Working directory");
    auto* trn = app.add_subcommand("train", "Resample the training rows and fit every model");
    trn->add_option("--out", o.out, "Working directory");
    auto* evl = app.add_subcommand("evaluate", "Score saved models on test.csv and write the report");
    evl->add_option("--out", o.out, "Working directory");

    auto* run = app.add_subcommand("run", "Run the configured pipeline end to end");
    std::string scenario;
    run->add_option("--scenario", scenario, "none | smote_0.7 | combined_0.4_0.8");
    run->add_option("--out", o.out, "Output directory");

    auto* rep = app.add_subcommand("reproduce", "Run testing scenario 1, 2 or 3 on SECOM");
    int scenario_no = 0;
    std::uint64_t seed = 1;
    rep->add_option("--scenario", scenario_no, "1 | 2 | 3")->required();
    rep->add_option("--seed", seed, "Master seed");
    rep->add_option("--out", o.out, "Output directory")->required();

    for (auto* sub : {eda, pre, sel, trn, evl, run, rep}) {
        sub->add_option("--config", o.config, "Pipeline configuration file");
        sub->add_option("--threads", o.threads, "Worker threads");
    }

    CLI11_PARSE(app, argc, argv);
    try {
        if (*eda) return cmd_eda(data, labels, o);
        if (*pre) return cmd_preprocess(o);
        if (*sel) return cmd_select(o);
        if (*trn) return cmd_train(o);
        if (*evl) return cmd_evaluate(o);
        if (*run) return cmd_run(o, scenario);
        if (*rep) return cmd_reproduce(o, scenario_no, seed);
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: stage " << app.get_subcommands().front()->get_name() << ": " << e.what() << '\n';
        return 1;
    }
    return 0;
}
