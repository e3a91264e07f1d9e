#include "rareclass/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rareclass {

const char* to_string(ImputeMethod m) {
    switch (m) {
        case ImputeMethod::simple: return "simple";
        case ImputeMethod::knn: return "knn";
        case ImputeMethod::mice: return "mice";
    }
    return "unknown";
}

// ------------------------------------------------------------
// Configuration
// ------------------------------------------------------------

std::vector<ModelEntry> PipelineConfig::default_models() {
    std::vector<ModelEntry> out;
    for (auto f : {ModelFamily::logistic, ModelFamily::linear_svm, ModelFamily::decision_tree,
                   ModelFamily::random_forest, ModelFamily::gradient_boosting, ModelFamily::regularized_boosting}) {
        out.push_back({short_label(f), default_spec(f)});
    }
    return out;
}

const std::vector<std::string>& scenario_ids() {
    static const std::vector<std::string> ids = {"none", "smote_0.7", "combined_0.4_0.8"};
    return ids;
}

std::string scenario_for_number(int n) {
    if (n < 1 || n > 3) throw Error("unknown scenario " + std::to_string(n) + " (expected 1, 2 or 3)");
    return scenario_ids()[static_cast<std::size_t>(n - 1)];
}

void PipelineConfig::set_scenario(const std::string& id) {
    if (id == "none") {
        resample = ResampleStrategy::none;
        over_ratio = 1.0;
        under_ratio.reset();
    } else if (id == "smote_0.7") {
        resample = ResampleStrategy::smote_only;
        over_ratio = 0.7;
        under_ratio.reset();
    } else if (id == "combined_0.4_0.8") {
        resample = ResampleStrategy::combined;
        over_ratio = 0.4;
        under_ratio = 0.8;
    } else {
        throw Error("unknown scenario '" + id + "'");
    }
    scenario = id;
}

void PipelineConfig::validate() const {
    if (data_format != "secom" && data_format != "csv") throw Error("config: data.format must be secom or csv");
    if (!(missing_threshold > 0.0 && missing_threshold <= 1.0)) throw Error("config: missing_threshold must be in (0, 1]");
    if (!(correlation_threshold > 0.0 && correlation_threshold < 1.0)) {
        throw Error("config: correlation_threshold must be in (0, 1)");
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw Error("config: test_fraction must be in (0, 1)");
    if (folds < 2) throw Error("config: folds must be at least 2");
    if (knn_k < 1) throw Error("config: impute k must be at least 1");
    if (mice_iterations < 1) throw Error("config: mice_iterations must be at least 1");
    if (!(skew_threshold >= 0.0)) throw Error("config: skew_threshold must be non-negative");
    if (featsel_enabled) {
        if (roster.empty()) throw Error("config: empty selector roster");
        if (vote_threshold < 1 || vote_threshold > roster.size()) {
            throw Error("config: vote_threshold must be in [1, " + std::to_string(roster.size()) + "]");
        }
        if (!(budget_fraction > 0.0 && budget_fraction <= 1.0)) throw Error("config: budget_fraction must be in (0, 1]");
    }
    const auto& ids = scenario_ids();
    if (scenario != "custom" && std::find(ids.begin(), ids.end(), scenario) == ids.end()) {
        throw Error("config: unknown scenario '" + scenario + "'");
    }
    if (!(over_ratio > 0.0 && over_ratio <= 1.0)) throw Error("config: over_ratio must be in (0, 1]");
    if (under_ratio && !(*under_ratio > 0.0 && *under_ratio <= 1.0)) throw Error("config: under_ratio must be in (0, 1]");
    if (resample == ResampleStrategy::under_only && !under_ratio) throw Error("config: under_ratio required");
    if (k_neighbors < 1) throw Error("config: k_neighbors must be at least 1");
    if (models.empty()) throw Error("config: no models configured");
    for (const auto& m : models) m.spec.validate();
    if (!(decision_threshold >= 0.0 && decision_threshold <= 1.0)) {
        throw Error("config: decision_threshold must be in [0, 1]");
    }
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw Error("config: " + key + " expects a number, got '" + v + "'");
    }
}

std::size_t parse_count(const std::string& key, const std::string& v) {
    const double x = parse_real(key, v);
    if (x < 0 || x != std::floor(x)) throw Error("config: " + key + " expects a non-negative integer, got '" + v + "'");
    return static_cast<std::size_t>(x);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const auto x = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw Error("config: " + key + " expects an unsigned integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw Error("config: " + key + " expects true or false, got '" + v + "'");
}

ModelEntry& find_model(PipelineConfig& cfg, const std::string& name) {
    for (auto& m : cfg.models) {
        if (m.name == name) return m;
    }
    throw Error("config: unknown model '" + name + "'");
}

void set_model_param(ModelSpec& s, const std::string& key, const std::string& param, const std::string& v) {
    if (param == "learning_rate") s.learning_rate = parse_real(key, v);
    else if (param == "epochs") s.epochs = parse_count(key, v);
    else if (param == "l2") s.l2 = parse_real(key, v);
    else if (param == "C") s.svm_c = parse_real(key, v);
    else if (param == "max_depth") s.max_depth = parse_count(key, v);
    else if (param == "min_leaf") s.min_leaf = parse_count(key, v);
    else if (param == "n_trees") s.n_trees = parse_count(key, v);
    else if (param == "feature_subsample") s.feature_subsample = parse_count(key, v);
    else if (param == "n_rounds") s.n_rounds = parse_count(key, v);
    else if (param == "shrinkage") s.shrinkage = parse_real(key, v);
    else if (param == "leaf_l2") s.leaf_l2 = parse_real(key, v);
    else if (param == "gamma") s.split_gamma = parse_real(key, v);
    else if (param == "class_weight") {
        if (v == "none") s.class_weight = ClassWeight::none;
        else if (v == "balanced") s.class_weight = ClassWeight::balanced;
        else throw Error("config: " + key + " expects none or balanced");
    } else {
        throw Error("config: unknown key '" + key + "'");
    }
}

void apply_key(PipelineConfig& cfg, const std::string& section, const std::string& key, const std::string& v) {
    const std::string full = section + "." + key;
    auto unknown = [&]() { return Error("config: unknown key '" + full + "'"); };
    if (section == "data") {
        if (key == "format") cfg.data_format = v;
        else if (key == "data") cfg.data_path = v;
        else if (key == "labels") cfg.labels_path = v;
        else if (key == "label_column") cfg.label_column = v;
        else if (key == "delimiter") {
            if (v == "tab" || v == "\\t") cfg.delimiter = '\t';
            else if (v.size() == 1) cfg.delimiter = v[0];
            else throw Error("config: data.delimiter must be one character or 'tab'");
        } else throw unknown();
    } else if (section == "prune") {
        if (key == "missing_threshold") cfg.missing_threshold = parse_real(full, v);
        else if (key == "correlation_threshold") cfg.correlation_threshold = parse_real(full, v);
        else throw unknown();
    } else if (section == "split") {
        if (key == "mode") {
            if (v == "holdout") cfg.mode = EvalMode::holdout;
            else if (v == "kfold") cfg.mode = EvalMode::kfold;
            else throw Error("config: split.mode must be holdout or kfold");
        } else if (key == "test_fraction") cfg.test_fraction = parse_real(full, v);
        else if (key == "folds") cfg.folds = parse_count(full, v);
        else throw unknown();
    } else if (section == "impute") {
        if (key == "method") {
            if (v == "simple") cfg.impute_method = ImputeMethod::simple;
            else if (v == "knn") cfg.impute_method = ImputeMethod::knn;
            else if (v == "mice") cfg.impute_method = ImputeMethod::mice;
            else throw Error("config: impute.method must be simple, knn or mice");
        } else if (key == "k") cfg.knn_k = parse_count(full, v);
        else if (key == "skew_threshold") cfg.skew_threshold = parse_real(full, v);
        else if (key == "mice_iterations") cfg.mice_iterations = parse_count(full, v);
        else if (key == "eda_refinement") cfg.eda_refinement = parse_bool(full, v);
        else if (key.rfind("override.", 0) == 0) {
            cfg.impute_overrides[parse_count(full, key.substr(9))] = parse_simple_strategy(v);
        } else throw unknown();
    } else if (section == "featsel") {
        if (key == "enabled") cfg.featsel_enabled = parse_bool(full, v);
        else if (key == "vote_threshold") cfg.vote_threshold = parse_count(full, v);
        else if (key == "budget_fraction") cfg.budget_fraction = parse_real(full, v);
        else if (key == "selectors") {
            const auto all = default_roster();
            std::vector<SelectorConfig> chosen;
            for (const auto& name : split_list(v)) {
                auto it = std::find_if(all.begin(), all.end(), [&](const SelectorConfig& c) { return c.name == name; });
                if (it == all.end()) throw Error("config: unknown selector '" + name + "'");
                chosen.push_back(*it);
            }
            cfg.roster = chosen;
        } else if (key == "boruta_iterations") {
            for (auto& c : cfg.roster) c.boruta_iterations = parse_count(full, v);
        } else if (key == "cv_folds") {
            for (auto& c : cfg.roster) c.cv_folds = parse_count(full, v);
        } else if (key == "sfs_max_keep") {
            for (auto& c : cfg.roster) {
                if (c.kind == SelectorKind::sfs) c.max_keep = parse_count(full, v);
            }
        } else throw unknown();
    } else if (section == "resample") {
        if (key == "scenario") cfg.set_scenario(v);
        else if (key == "over_ratio") cfg.over_ratio = parse_real(full, v);
        else if (key == "under_ratio") {
            if (v == "none") cfg.under_ratio.reset();
            else cfg.under_ratio = parse_real(full, v);
        } else if (key == "k_neighbors") cfg.k_neighbors = parse_count(full, v);
        else throw unknown();
    } else if (section == "models") {
        if (key == "list") {
            std::vector<ModelEntry> chosen;
            for (const auto& name : split_list(v)) {
                const ModelFamily f = parse_model_family(name);
                chosen.push_back({short_label(f), default_spec(f)});
            }
            cfg.models = chosen;
        } else if (key == "threshold") {
            cfg.decision_threshold = parse_real(full, v);
        } else if (const auto dot = key.find('.'); dot != std::string::npos) {
            set_model_param(find_model(cfg, key.substr(0, dot)).spec, full, key.substr(dot + 1), v);
        } else throw unknown();
    } else if (section == "run") {
        if (key == "seed") cfg.seed = parse_u64(full, v);
        else if (key == "out") cfg.out_dir = v;
        else if (key == "threads") cfg.threads = parse_count(full, v);
        else throw unknown();
    } else {
        throw Error("config: unknown section [" + section + "]");
    }
}

}  // namespace

PipelineConfig parse_config(std::istream& in, const PipelineConfig& base) {
    PipelineConfig cfg = base;
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        try {
            if (line.front() == '[') {
                if (line.back() != ']') throw Error("config: malformed section header");
                section = trim(line.substr(1, line.size() - 2));
                static const std::set<std::string> known = {"data", "prune", "split", "impute",
                                                            "featsel", "resample", "models", "run"};
                if (!known.count(section)) throw Error("config: unknown section [" + section + "]");
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw Error("config: expected key = value");
            if (section.empty()) throw Error("config: key outside of a section");
            apply_key(cfg, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const Error& e) {
            throw Error(std::string(e.what()) + " (line " + std::to_string(line_no) + ")");
        }
    }
    cfg.validate();
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path, const PipelineConfig& base) {
    std::ifstream in(path);
    if (!in) throw Error("config: cannot read " + path.string());
    PipelineConfig cfg = parse_config(in, base);
    // Relative data paths are taken relative to the config file.
    const auto dir = path.parent_path();
    if (!cfg.data_path.empty() && cfg.data_path.is_relative() && cfg.data_path != base.data_path) {
        cfg.data_path = dir / cfg.data_path;
    }
    if (!cfg.labels_path.empty() && cfg.labels_path.is_relative() && cfg.labels_path != base.labels_path) {
        cfg.labels_path = dir / cfg.labels_path;
    }
    return cfg;
}

std::string PipelineConfig::canonical() const {
    std::ostringstream o;
    o << "data.format=" << data_format << '\n';
    o << "data.label_column=" << label_column << '\n';
    o << "data.delimiter=" << static_cast<int>(delimiter) << '\n';
    o << "prune.missing_threshold=" << format_double(missing_threshold) << '\n';
    o << "prune.correlation_threshold=" << format_double(correlation_threshold) << '\n';
    o << "split.mode=" << (mode == EvalMode::holdout ? "holdout" : "kfold") << '\n';
    o << "split.test_fraction=" << format_double(test_fraction) << '\n';
    o << "split.folds=" << folds << '\n';
    o << "impute.method=" << to_string(impute_method) << '\n';
    o << "impute.k=" << knn_k << '\n';
    o << "impute.skew_threshold=" << format_double(skew_threshold) << '\n';
    o << "impute.mice_iterations=" << mice_iterations << '\n';
    o << "impute.eda_refinement=" << eda_refinement << '\n';
    for (const auto& [id, s] : impute_overrides) o << "impute.override." << id << '=' << to_string(s) << '\n';
    o << "featsel.enabled=" << featsel_enabled << '\n';
    o << "featsel.vote_threshold=" << vote_threshold << '\n';
    o << "featsel.budget_fraction=" << format_double(budget_fraction) << '\n';
    for (const auto& c : roster) {
        o << "featsel.selector=" << c.name << ' ' << c.n_bins << ' ' << format_double(c.lambda_fraction) << ' '
          << c.cv_folds << ' ' << c.boruta_iterations << ' ' << format_double(c.boruta_alpha) << ' ' << c.n_keep
          << ' ' << c.max_keep << '\n';
    }
    o << "resample.scenario=" << scenario << '\n';
    o << "resample.strategy=" << to_string(resample) << '\n';
    o << "resample.over_ratio=" << format_double(over_ratio) << '\n';
    o << "resample.under_ratio=" << (under_ratio ? format_double(*under_ratio) : "none") << '\n';
    o << "resample.k_neighbors=" << k_neighbors << '\n';
    o << "models.threshold=" << format_double(decision_threshold) << '\n';
    for (const auto& m : models) {
        const auto& s = m.spec;
        o << "models." << m.name << '=' << to_string(s.family) << ' ' << format_double(s.learning_rate) << ' '
          << s.epochs << ' ' << format_double(s.l2) << ' ' << format_double(s.svm_c) << ' ' << s.max_depth << ' '
          << s.min_leaf << ' ' << s.n_trees << ' ' << s.feature_subsample << ' ' << s.n_rounds << ' '
          << format_double(s.shrinkage) << ' ' << format_double(s.leaf_l2) << ' ' << format_double(s.split_gamma)
          << ' ' << (s.class_weight == ClassWeight::balanced ? "balanced" : "none") << '\n';
    }
    o << "run.seed=" << seed << '\n';
    return o.str();
}

// ------------------------------------------------------------
// Leakage guard
// ------------------------------------------------------------

std::uint64_t partition_hash(const Dataset& d) {
    std::uint64_t h = fnv1a("partition");
    for (std::size_t i = 0; i < d.rows(); ++i) {
        h = fnv1a(&d.row_ids[i], sizeof(std::size_t), h);
        h = fnv1a(&d.labels[i], sizeof(int), h);
    }
    return h;
}

std::uint64_t content_hash(const Dataset& d) {
    std::uint64_t h = partition_hash(d);
    for (std::size_t id : d.features.column_ids()) h = fnv1a(&id, sizeof id, h);
    const auto& cells = d.features.cells();
    return fnv1a(cells.data(), cells.size() * sizeof(double), h);
}

LeakageGuard::LeakageGuard(const Dataset& test) : hash_(partition_hash(test)) {
    for (std::size_t id : test.row_ids) {
        if (id != kSyntheticRow) test_rows_.insert(id);
    }
}

void LeakageGuard::check(const Dataset& fit_input, const std::string& stage) const {
    for (std::size_t id : fit_input.row_ids) {
        if (id != kSyntheticRow && test_rows_.count(id)) {
            throw Error("leakage guard: test row " + std::to_string(id) + " reached " + stage);
        }
    }
}

// ------------------------------------------------------------
// Stages
// ------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

struct Timings {
    std::vector<std::pair<std::string, double>>* sink = nullptr;

    void add(const std::string& name, double seconds) const {
        if (!sink) return;
        for (auto& [n, s] : *sink) {
            if (n == name) {
                s += seconds;
                return;
            }
        }
        sink->emplace_back(name, seconds);
    }
};

/// Runs f, converting failures into StageError(name, ...).
template <typename F>
auto stage(const std::string& name, const Timings& timings, F&& f) -> decltype(f()) {
    const auto start = Clock::now();
    try {
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            timings.add(name, std::chrono::duration<double>(Clock::now() - start).count());
        } else {
            auto result = f();
            timings.add(name, std::chrono::duration<double>(Clock::now() - start).count());
            return result;
        }
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

std::uint64_t hash_file(const std::filesystem::path& path, std::uint64_t seed) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a(bytes, seed);
}

std::vector<std::size_t> positions_of(const Dataset& d, const std::vector<std::size_t>& ids) {
    std::vector<std::size_t> out;
    out.reserve(ids.size());
    for (std::size_t id : ids) out.push_back(d.features.position_of(id));
    return out;
}

/// Fills the listed columns of post_* from a simple plan fitted on pre_train.
void refill_simple(const Dataset& pre_train, const Dataset& pre_test, Dataset& post_train, Dataset& post_test,
                   const std::map<std::size_t, SimpleStrategy>& strategies, ImputeLog* log) {
    if (strategies.empty()) return;
    std::vector<std::size_t> ids;
    for (const auto& [id, s] : strategies) ids.push_back(id);
    const auto pos = positions_of(pre_train, ids);
    const Dataset sub_train = pre_train.select_columns(pos);
    const Dataset sub_test = pre_test.select_columns(pos);
    const SimpleImputePlan plan = fit_simple_plan(sub_train, strategies, SimpleStrategy::mean);
    ImputeLog sub_log;
    const Dataset filled_train = simple_impute(plan, sub_train, log ? &sub_log : nullptr);
    const Dataset filled_test = simple_impute(plan, sub_test);
    for (std::size_t k = 0; k < pos.size(); ++k) {
        for (std::size_t r = 0; r < post_train.rows(); ++r) post_train.features.set(r, pos[k], filled_train.features.value(r, k));
        for (std::size_t r = 0; r < post_test.rows(); ++r) post_test.features.set(r, pos[k], filled_test.features.value(r, k));
    }
    if (log) {
        // Replace earlier entries for the refilled cells.
        const std::set<std::size_t> refilled(ids.begin(), ids.end());
        std::erase_if(*log, [&](const ImputeLogEntry& e) { return refilled.count(e.column_id) != 0; });
        log->insert(log->end(), sub_log.begin(), sub_log.end());
    }
}

int sign_of(double v) { return (v > 0) - (v < 0); }

}  // namespace

LoadedData load_input(const PipelineConfig& cfg) {
    LoadedData out;
    if (cfg.data_format == "secom") {
        out.data = load_secom(cfg.data_path, cfg.labels_path);
        out.input_digest = hash_file(cfg.labels_path, hash_file(cfg.data_path, fnv1a("secom")));
    } else {
        out.data = load_delimited(cfg.data_path, cfg.label_column, cfg.delimiter, {"", "NaN", "nan", "NA", "?"});
        out.input_digest = hash_file(cfg.data_path, fnv1a("csv"));
    }
    return out;
}

PruneResult prune(const PipelineConfig& cfg, const Dataset& raw) {
    PruneResult r;
    r.original_columns = raw.cols();
    r.original_missing_fraction = missing_summary(raw).cell_fraction;
    auto [a, missing] = drop_high_missing(raw, cfg.missing_threshold);
    auto [b, constant] = drop_constant(a);
    auto [c, correlated] = drop_correlated(b, cfg.correlation_threshold);
    r.drops = {missing, constant, correlated};
    r.residual_missing_fraction = missing_summary(c).cell_fraction;
    r.data = std::move(c);
    return r;
}

PreparedSplit prepare_split(const PipelineConfig& cfg, const Dataset& train_in, const Dataset& test_in,
                            const LeakageGuard& guard) {
    PreparedSplit out;
    Dataset train;
    Dataset test;
    out.train_constant.reason = DropReason::constant_in_train;
    stage("scale", {}, [&] {
        guard.check(train_in, "scale");
        std::vector<std::size_t> keep;
        const auto stats = column_stats(train_in);
        for (std::size_t c = 0; c < stats.size(); ++c) {
            if (stats[c].n_present == 0 || stats[c].is_constant) {
                out.train_constant.removed_column_ids.push_back(stats[c].column_id);
                out.train_constant.kept_partner.emplace_back();
            } else {
                keep.push_back(c);
            }
        }
        if (keep.empty()) throw Error("no features remain");
        train = train_in.select_columns(keep);
        test = test_in.select_columns(keep);
        out.scaler = fit_scaler(train);
        train = apply_scaler(out.scaler, train);
        test = apply_scaler(out.scaler, test);
    });

    guard.check(train, "impute");
    const auto pre_stats = column_stats(train);
    std::map<std::size_t, SimpleStrategy> current;  // columns filled by a simple strategy
    switch (cfg.impute_method) {
        case ImputeMethod::simple: {
            const auto plan = assign_simple_strategies(pre_stats, cfg.skew_threshold, cfg.impute_overrides);
            out.train = simple_impute(plan, train, &out.impute_log);
            out.test = simple_impute(plan, test);
            for (const auto& c : plan.columns) current[c.column_id] = c.strategy;
            break;
        }
        case ImputeMethod::knn: {
            const KnnImputeParams p{cfg.knn_k};
            out.train = knn_impute(p, train, train, &out.impute_log);
            out.test = knn_impute(p, train, test);
            break;
        }
        case ImputeMethod::mice: {
            MiceParams p;
            p.n_iterations = cfg.mice_iterations;
            p.seed = substream(cfg.seed, "impute/mice");
            const MiceModel model = fit_mice(p, train, &test);
            out.train = apply_mice(model, train, &out.impute_log);
            out.test = apply_mice(model, test);
            break;
        }
    }
    if (cfg.impute_method != ImputeMethod::simple) {
        std::map<std::size_t, SimpleStrategy> overrides;
        for (const auto& [id, s] : cfg.impute_overrides) {
            if (train.features.find(id)) overrides[id] = s;
        }
        refill_simple(train, test, out.train, out.test, overrides, &out.impute_log);
        for (const auto& [id, s] : overrides) current[id] = s;
    }

    if (cfg.eda_refinement) {
        // One bounded pass: a column whose skew changes sign after filling is
        // refilled with the other of mean/median.
        const auto post_stats = column_stats(out.train);
        std::map<std::size_t, SimpleStrategy> toggled;
        for (std::size_t c = 0; c < pre_stats.size(); ++c) {
            const auto& before = pre_stats[c];
            if (before.n_present == train.rows()) continue;
            const int s0 = sign_of(before.skewness.value_or(0.0));
            const int s1 = sign_of(post_stats[c].skewness.value_or(0.0));
            if (s0 * s1 >= 0) continue;
            const auto it = current.find(before.column_id);
            SimpleStrategy next;
            if (it == current.end()) {
                next = std::abs(before.skewness.value_or(0.0)) > cfg.skew_threshold ? SimpleStrategy::median
                                                                                     : SimpleStrategy::mean;
            } else if (it->second == SimpleStrategy::mean) {
                next = SimpleStrategy::median;
            } else if (it->second == SimpleStrategy::median) {
                next = SimpleStrategy::mean;
            } else {
                continue;
            }
            toggled[before.column_id] = next;
        }
        refill_simple(train, test, out.train, out.test, toggled, &out.impute_log);
        for (const auto& [id, s] : toggled) out.eda_toggled.push_back(id);
    }
    return out;
}

Selection select_features(const PipelineConfig& cfg, const Dataset& train, const LeakageGuard& guard) {
    guard.check(train, "featsel");
    Selection s;
    if (!cfg.featsel_enabled) {
        SelectorDecision all;
        all.selector = "all";
        all.selected = train.features.column_ids();
        std::sort(all.selected.begin(), all.selected.end());
        s.decisions.push_back(all);
        s.ledger = vote(s.decisions, 1, train.features.column_ids());
        return s;
    }
    s.decisions = run_roster(cfg.roster, train, cfg.budget_fraction, substream(cfg.seed, "featsel"));
    s.ledger = vote(s.decisions, cfg.vote_threshold, train.features.column_ids());
    if (s.ledger.selected.empty()) throw Error("no feature reached the vote threshold");
    return s;
}

std::pair<Dataset, ResamplePlan> resample_training(const PipelineConfig& cfg, const Dataset& train,
                                                   const LeakageGuard& guard) {
    guard.check(train, "resample");
    const std::uint64_t seed = substream(cfg.seed, "resample");
    switch (cfg.resample) {
        case ResampleStrategy::none: {
            ResamplePlan plan;
            plan.before = {train.count_class(0), train.count_class(1)};
            plan.after = plan.before;
            plan.synthetic.assign(train.rows(), false);
            return {train, plan};
        }
        case ResampleStrategy::smote_only: return smote(train, {cfg.over_ratio, cfg.k_neighbors, seed});
        case ResampleStrategy::under_only: return random_undersample(train, *cfg.under_ratio, seed);
        case ResampleStrategy::combined:
            return combined_resample(train, cfg.over_ratio, cfg.under_ratio, cfg.k_neighbors, seed);
    }
    throw Error("unknown resampling strategy");
}

std::vector<TrainedModel> train_models(const PipelineConfig& cfg, const Dataset& train, const LeakageGuard& guard) {
    guard.check(train, "train");
    std::vector<TrainedModel> out;
    out.reserve(cfg.models.size());
    for (const auto& entry : cfg.models) {
        ModelSpec spec = entry.spec;
        spec.seed = substream(cfg.seed, "model/" + entry.name);
        try {
            out.push_back(rareclass::train(spec, train));
        } catch (const Error& e) {
            throw Error(entry.name + ": " + e.what());
        }
    }
    return out;
}

std::vector<ModelResult> evaluate_models(const PipelineConfig& cfg, const std::vector<TrainedModel>& models,
                                         const Dataset& test) {
    if (models.size() != cfg.models.size()) throw Error("model count does not match the configuration");
    std::vector<ModelResult> out;
    for (std::size_t i = 0; i < models.size(); ++i) {
        const auto scores = predict_scores(models[i], test.features);
        ModelResult r;
        r.name = cfg.models[i].name;
        r.confusion = confusion(test.labels, scores, cfg.decision_threshold);
        r.metrics = metric_set(r.confusion);
        r.roc = roc_curve(test.labels, scores);
        r.auc = r.roc.auc;
        out.push_back(std::move(r));
    }
    return out;
}

// ------------------------------------------------------------
// Scenario runner
// ------------------------------------------------------------

namespace {

struct FoldOutput {
    std::vector<ModelResult> results;
    std::vector<std::vector<double>> scores;  // per model, test order
    std::vector<int> labels;
    DropLog train_constant;
    std::vector<std::size_t> eda_toggled;
    FeatureVoteLedger ledger;
    ResamplePlan resample;
    std::size_t train_rows = 0;
    std::size_t test_rows = 0;
    std::size_t features = 0;
    std::uint64_t hash_split = 0;
    std::uint64_t hash_eval = 0;
    std::uint64_t content_before = 0;
    std::uint64_t content_after = 0;
};

FoldOutput run_fold(const PipelineConfig& cfg, const Dataset& data, const std::vector<std::size_t>& train_rows,
                    const std::vector<std::size_t>& test_rows, const Timings& timings) {
    FoldOutput f;
    const Dataset train = data.select_rows(train_rows);
    const Dataset test = data.select_rows(test_rows);
    const LeakageGuard guard(test);
    f.hash_split = guard.test_hash();

    PreparedSplit prep = stage("impute", timings, [&] { return prepare_split(cfg, train, test, guard); });
    f.train_constant = prep.train_constant;
    f.eda_toggled = prep.eda_toggled;

    const Selection sel = stage("featsel", timings, [&] { return select_features(cfg, prep.train, guard); });
    f.ledger = sel.ledger;
    const auto pos = positions_of(prep.train, sel.ledger.selected);
    const Dataset sel_train = prep.train.select_columns(pos);
    const Dataset sel_test = prep.test.select_columns(pos);
    f.features = pos.size();

    f.content_before = content_hash(sel_test);
    auto [res_train, plan] = stage("resample", timings, [&] { return resample_training(cfg, sel_train, guard); });
    f.content_after = content_hash(sel_test);
    f.resample = std::move(plan);
    f.train_rows = res_train.rows();
    f.test_rows = sel_test.rows();

    const auto models = stage("train", timings, [&] { return train_models(cfg, res_train, guard); });
    f.results = stage("evaluate", timings, [&] {
        f.hash_eval = partition_hash(sel_test);
        if (f.hash_eval != f.hash_split || f.content_before != f.content_after) {
            throw Error("leakage guard: test partition changed between split and evaluation");
        }
        for (const auto& m : models) f.scores.push_back(predict_scores(m, sel_test.features));
        return evaluate_models(cfg, models, sel_test);
    });
    f.labels = sel_test.labels;
    return f;
}

}  // namespace

EvalReport run_scenario_on(const PipelineConfig& cfg, const Dataset& raw, std::uint64_t input_digest) {
    stage("config", {}, [&] { cfg.validate(); });
    if (cfg.threads > 0) set_num_threads(cfg.threads);

    EvalReport report;
    Timings timings{&report.timings};
    report.scenario = cfg.scenario;
    report.seed = cfg.seed;
    report.mode = cfg.mode;
    report.config_digest = hex64(fnv1a(cfg.canonical(), input_digest));

    const PruneResult pr = stage("prune", timings, [&] { return prune(cfg, raw); });
    report.original_columns = pr.original_columns;
    report.original_missing_fraction = pr.original_missing_fraction;
    report.residual_missing_fraction = pr.residual_missing_fraction;
    report.drops = pr.drops;

    if (cfg.mode == EvalMode::holdout) {
        const SplitPlan plan =
            stage("split", timings, [&] { return stratified_split(pr.data, cfg.test_fraction, substream(cfg.seed, "split")); });
        FoldOutput f = run_fold(cfg, pr.data, plan.train_rows, plan.test_rows, timings);
        report.models = std::move(f.results);
        report.drops.push_back(f.train_constant);
        report.eda_toggled = f.eda_toggled;
        report.ledger = std::move(f.ledger);
        report.resample = std::move(f.resample);
        report.train_rows = f.train_rows;
        report.test_rows = f.test_rows;
        report.features_used = f.features;
        report.test_hash_at_split = f.hash_split;
        report.test_hash_at_eval = f.hash_eval;
        report.test_content_before_resample = f.content_before;
        report.test_content_after_resample = f.content_after;
        return report;
    }

    const SplitPlan plan =
        stage("split", timings, [&] { return stratified_kfold(pr.data, cfg.folds, substream(cfg.seed, "kfold")); });
    std::vector<FoldOutput> outputs;
    for (std::size_t k = 0; k < cfg.folds; ++k) {
        const SplitPlan fold = plan.fold(k);
        outputs.push_back(run_fold(cfg, pr.data, fold.train_rows, fold.test_rows, timings));
        report.folds.push_back({k, outputs.back().results});
    }
    // The first fold supplies the per-run artifacts (ledger, resample plan, drops).
    const FoldOutput& first = outputs.front();
    report.drops.push_back(first.train_constant);
    report.eda_toggled = first.eda_toggled;
    report.ledger = first.ledger;
    report.resample = first.resample;
    report.train_rows = first.train_rows;
    report.test_rows = first.test_rows;
    report.features_used = first.features;
    report.test_hash_at_split = first.hash_split;
    report.test_hash_at_eval = first.hash_eval;
    report.test_content_before_resample = first.content_before;
    report.test_content_after_resample = first.content_after;

    const double nf = static_cast<double>(outputs.size());
    for (std::size_t m = 0; m < cfg.models.size(); ++m) {
        ModelResult agg;
        agg.name = cfg.models[m].name;
        std::vector<int> labels;
        std::vector<double> scores;
        for (const auto& f : outputs) {
            const ModelResult& r = f.results[m];
            agg.confusion.tp += r.confusion.tp;
            agg.confusion.fp += r.confusion.fp;
            agg.confusion.fn += r.confusion.fn;
            agg.confusion.tn += r.confusion.tn;
            agg.metrics.balanced_accuracy += r.metrics.balanced_accuracy / nf;
            agg.metrics.precision += r.metrics.precision / nf;
            agg.metrics.recall += r.metrics.recall / nf;
            agg.metrics.far += r.metrics.far / nf;
            agg.metrics.precision_undefined |= r.metrics.precision_undefined;
            agg.metrics.recall_undefined |= r.metrics.recall_undefined;
            agg.metrics.far_undefined |= r.metrics.far_undefined;
            agg.auc += r.auc / nf;
            labels.insert(labels.end(), f.labels.begin(), f.labels.end());
            scores.insert(scores.end(), f.scores[m].begin(), f.scores[m].end());
        }
        agg.roc = roc_curve(labels, scores);
        report.models.push_back(std::move(agg));
    }
    return report;
}

EvalReport run_scenario(const PipelineConfig& cfg) {
    stage("config", {}, [&] { cfg.validate(); });
    const LoadedData loaded = stage("load", {}, [&] { return load_input(cfg); });
    return run_scenario_on(cfg, loaded.data, loaded.input_digest);
}

// ------------------------------------------------------------
// Report
// ------------------------------------------------------------

namespace {

struct ReferenceRow {
    const char* model;
    double ba, precision, recall, far;
};

/// Reference per-scenario results, listed as targets rather than gates.
const std::vector<ReferenceRow>& reference_rows(const std::string& scenario) {
    static const std::vector<ReferenceRow> none = {
        {"LR", 0.50, 0.50, 0.10, 0.01}, {"SVM", 0.71, 0.50, 0.59, 0.04}, {"DTC", 0.82, 0.79, 0.76, 0.01},
        {"RF", 0.50, 1.00, 0.17, 0.00}, {"GBC", 0.83, 0.66, 0.79, 0.04}, {"XGB", 0.81, 0.89, 0.83, 0.01}};
    static const std::vector<ReferenceRow> smote = {
        {"LR", 0.50, 0.40, 0.69, 0.07}, {"SVM", 0.55, 0.49, 0.72, 0.05}, {"DTC", 0.86, 0.53, 0.83, 0.05},
        {"RF", 0.53, 0.83, 0.66, 0.00}, {"GBC", 0.83, 0.80, 0.83, 0.01}, {"XGB", 0.81, 0.79, 0.90, 0.01}};
    static const std::vector<ReferenceRow> combined = {
        {"LR", 0.50, 0.34, 0.66, 0.08}, {"SVM", 0.55, 0.46, 0.76, 0.06}, {"DTC", 0.88, 0.48, 0.86, 0.06},
        {"RF", 0.53, 0.83, 0.83, 0.00}, {"GBC", 0.83, 0.62, 0.90, 0.04}, {"XGB", 0.81, 0.66, 0.96, 0.03}};
    static const std::vector<ReferenceRow> empty;
    if (scenario == "none") return none;
    if (scenario == "smote_0.7") return smote;
    if (scenario == "combined_0.4_0.8") return combined;
    return empty;
}

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

std::string cell(double v, bool undefined) { return format_fixed(v, 4) + (undefined ? "*" : ""); }

}  // namespace

std::set<ReportFormat> all_report_formats() {
    return {ReportFormat::table_text, ReportFormat::roc_csv, ReportFormat::roc_plot, ReportFormat::ledger};
}

std::string report_table(const EvalReport& r) {
    std::ostringstream o;
    o << "scenario: " << r.scenario << '\n';
    o << "seed: " << r.seed << '\n';
    o << "config digest: " << r.config_digest << '\n';
    o << "evaluation: " << (r.mode == EvalMode::holdout ? "holdout" : std::to_string(r.folds.size()) + "-fold")
      << ", train rows " << r.train_rows << ", test rows " << r.test_rows << ", features " << r.features_used << '\n';
    o << '\n';
    o << "columns: " << r.original_columns << ", missing fraction " << format_fixed(r.original_missing_fraction, 4)
      << '\n';
    std::size_t dropped = 0;
    for (const auto& d : r.drops) {
        o << "  dropped " << to_string(d.reason);
        if (d.reason == DropReason::high_missing || d.reason == DropReason::correlated) {
            o << " (threshold " << format_double(d.parameter) << ")";
        }
        o << ": " << d.size() << '\n';
        dropped += d.size();
    }
    o << "  surviving: " << r.original_columns - dropped << ", residual missing fraction after pruning "
      << format_fixed(r.residual_missing_fraction, 4) << '\n';
    o << "imputation refinement toggled " << r.eda_toggled.size() << " column(s)\n";
    o << "feature votes: threshold " << r.ledger.threshold << " of " << r.ledger.n_selectors << ", selected "
      << r.ledger.selected.size() << ", voted " << r.ledger.voted_count() << ", zero votes "
      << r.ledger.zero_vote_count() << '\n';
    for (const auto& w : r.ledger.warnings) o << "  warning: " << w << '\n';
    o << "resampling: " << to_string(r.resample.strategy);
    if (r.resample.over_ratio) o << ", over " << format_double(*r.resample.over_ratio);
    if (r.resample.under_ratio) o << ", under " << format_double(*r.resample.under_ratio);
    o << ", majority/minority " << r.resample.before.majority << '/' << r.resample.before.minority << " -> "
      << r.resample.after.majority << '/' << r.resample.after.minority << '\n';
    for (const auto& w : r.resample.warnings) o << "  warning: " << w << '\n';
    o << "test partition hash: split " << hex64(r.test_hash_at_split) << ", evaluation " << hex64(r.test_hash_at_eval)
      << '\n';
    o << '\n';

    const std::size_t w = 20;
    o << pad("Model", 8) << pad("Balanced Accuracy", w) << pad("Precision", 12) << pad("Recall", 12) << pad("FAR", 12)
      << "AUC\n";
    for (const auto& m : r.models) {
        o << pad(m.name, 8) << pad(cell(m.metrics.balanced_accuracy, false), w)
          << pad(cell(m.metrics.precision, m.metrics.precision_undefined), 12)
          << pad(cell(m.metrics.recall, m.metrics.recall_undefined), 12)
          << pad(cell(m.metrics.far, m.metrics.far_undefined), 12) << format_fixed(m.auc, 4) << '\n';
    }
    o << "(* undefined ratio reported as 0)\n";
    for (const auto& f : r.folds) {
        o << "\nfold " << f.fold << '\n';
        for (const auto& m : f.models) {
            o << pad(m.name, 8) << pad(cell(m.metrics.balanced_accuracy, false), w)
              << pad(cell(m.metrics.precision, m.metrics.precision_undefined), 12)
              << pad(cell(m.metrics.recall, m.metrics.recall_undefined), 12)
              << pad(cell(m.metrics.far, m.metrics.far_undefined), 12) << format_fixed(m.auc, 4) << '\n';
        }
    }

    const auto& ref = reference_rows(r.scenario);
    if (!ref.empty()) {
        o << "\nreference values for this scenario (stretch targets, not gates)\n";
        o << pad("Model", 8) << pad("Balanced Accuracy", w) << pad("Precision", 12) << pad("Recall", 12) << "FAR\n";
        for (const auto& row : ref) {
            o << pad(row.model, 8) << pad(format_fixed(row.ba, 2), w) << pad(format_fixed(row.precision, 2), 12)
              << pad(format_fixed(row.recall, 2), 12) << format_fixed(row.far, 2) << '\n';
        }
        if (r.scenario == "combined_0.4_0.8") o << "reference best AUC: 0.95 (XGB)\n";
    }
    return o.str();
}

std::vector<std::filesystem::path> emit_report(const EvalReport& r, const std::filesystem::path& out_dir,
                                               const std::set<ReportFormat>& formats) {
    std::vector<std::filesystem::path> files;
    if (formats.empty()) return files;
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error("cannot create " + out_dir.string() + ": " + ec.message());

    if (formats.count(ReportFormat::table_text)) {
        const auto path = out_dir / "report.txt";
        std::ofstream out(path);
        if (!out) throw Error("cannot write " + path.string());
        out << report_table(r);
        files.push_back(path);
    }
    if (formats.count(ReportFormat::roc_csv)) {
        for (const auto& m : r.models) {
            const auto path = out_dir / ("roc_" + m.name + ".csv");
            write_roc_csv(m.roc, path);
            files.push_back(path);
        }
    }
    if (formats.count(ReportFormat::roc_plot)) {
        for (const auto& m : r.models) {
            const auto path = out_dir / ("roc_" + m.name + ".svg");
            write_roc_svg({{m.name, m.roc}}, "ROC " + m.name + " (" + r.scenario + ")", path);
            files.push_back(path);
        }
    }
    if (formats.count(ReportFormat::ledger)) {
        const auto votes = out_dir / "votes.csv";
        write_vote_ledger(r.ledger, votes);
        files.push_back(votes);
        const auto drops = out_dir / "drops.csv";
        write_drop_logs(r.drops, drops);
        files.push_back(drops);
        const auto plan = out_dir / "resample_plan.csv";
        write_resample_plan(r.resample, plan);
        files.push_back(plan);
    }
    return files;
}

EvalReport reproduce(int scenario, std::uint64_t seed, const std::filesystem::path& out_dir,
                     const PipelineConfig& base) {
    PipelineConfig cfg = base;
    stage("config", {}, [&] { cfg.set_scenario(scenario_for_number(scenario)); });
    cfg.seed = seed;
    cfg.out_dir = out_dir;
    EvalReport r = run_scenario(cfg);
    stage("report", {}, [&] { emit_report(r, out_dir, all_report_formats()); });
    return r;
}

}  // namespace rareclass
