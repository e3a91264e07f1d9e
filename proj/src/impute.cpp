#include "rareclass/impute.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>

namespace rareclass {

void write_impute_log(const ImputeLog& log, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "row,column_id,method,value,fallback\n";
    for (const auto& e : log) {
        out << e.row << ',' << e.column_id << ',' << e.method << ',' << format_double(e.value) << ','
            << (e.fallback ? 1 : 0) << '\n';
    }
}

// ------------------------------------------------------------
// Simple strategies
// ------------------------------------------------------------

const char* to_string(SimpleStrategy s) {
    switch (s) {
        case SimpleStrategy::mean: return "mean";
        case SimpleStrategy::median: return "median";
        case SimpleStrategy::most_frequent: return "most_frequent";
        case SimpleStrategy::forward: return "forward";
        case SimpleStrategy::backward: return "backward";
        case SimpleStrategy::linear_interpolation: return "linear_interpolation";
    }
    return "unknown";
}

SimpleStrategy parse_simple_strategy(const std::string& name) {
    for (auto s : {SimpleStrategy::mean, SimpleStrategy::median, SimpleStrategy::most_frequent, SimpleStrategy::forward,
                   SimpleStrategy::backward, SimpleStrategy::linear_interpolation}) {
        if (name == to_string(s)) return s;
    }
    throw Error("unknown imputation strategy '" + name + "'");
}

const ColumnPlan& SimpleImputePlan::for_column(std::size_t column_id) const {
    for (const auto& c : columns) {
        if (c.column_id == column_id) return c;
    }
    throw Error("imputation plan has no entry for column " + std::to_string(column_id));
}

ColumnPlan& SimpleImputePlan::for_column(std::size_t column_id) {
    return const_cast<ColumnPlan&>(std::as_const(*this).for_column(column_id));
}

namespace {

double most_frequent_of(std::vector<double> present) {
    std::sort(present.begin(), present.end());
    double best = present.front();
    std::size_t best_run = 0;
    for (std::size_t i = 0; i < present.size();) {
        std::size_t j = i;
        while (j < present.size() && present[j] == present[i]) ++j;
        if (j - i > best_run) {
            best_run = j - i;
            best = present[i];
        }
        i = j;
    }
    return best;
}

double fill_value_for(SimpleStrategy s, const ColumnStats& st, std::span<const double> values) {
    switch (s) {
        case SimpleStrategy::median: return *st.median;
        case SimpleStrategy::most_frequent: {
            std::vector<double> present;
            for (double v : values) {
                if (!is_missing(v)) present.push_back(v);
            }
            return most_frequent_of(std::move(present));
        }
        default: return *st.mean;
    }
}

}  // namespace

SimpleImputePlan assign_simple_strategies(const std::vector<ColumnStats>& train_stats, double skew_threshold,
                                          const std::map<std::size_t, SimpleStrategy>& overrides) {
    SimpleImputePlan plan;
    for (const auto& st : train_stats) {
        if (!st.mean) {
            throw Error("column " + std::to_string(st.column_id) + " is entirely missing in training");
        }
        ColumnPlan cp;
        cp.column_id = st.column_id;
        const double skew = st.skewness.value_or(0.0);
        cp.strategy = std::abs(skew) > skew_threshold ? SimpleStrategy::median : SimpleStrategy::mean;
        if (auto it = overrides.find(st.column_id); it != overrides.end()) cp.strategy = it->second;
        if (cp.strategy == SimpleStrategy::most_frequent) {
            throw Error("most_frequent needs column values; use fit_simple_plan");
        }
        cp.fill = cp.strategy == SimpleStrategy::median ? *st.median : *st.mean;
        plan.columns.push_back(cp);
    }
    return plan;
}

SimpleImputePlan fit_simple_plan(const Dataset& train, const std::map<std::size_t, SimpleStrategy>& strategies,
                                 SimpleStrategy default_strategy) {
    SimpleImputePlan plan;
    for (std::size_t c = 0; c < train.cols(); ++c) {
        const std::size_t id = train.features.column_ids()[c];
        const auto values = train.features.column(c);
        const ColumnStats st = column_stats_of(id, values);
        if (!st.mean) throw Error("column " + std::to_string(id) + " is entirely missing in training");
        ColumnPlan cp;
        cp.column_id = id;
        auto it = strategies.find(id);
        cp.strategy = it != strategies.end() ? it->second : default_strategy;
        cp.fill = fill_value_for(cp.strategy, st, values);
        plan.columns.push_back(cp);
    }
    return plan;
}

Dataset simple_impute(const SimpleImputePlan& plan, const Dataset& d, ImputeLog* log) {
    Dataset out = d;
    for (std::size_t c = 0; c < d.cols(); ++c) {
        const std::size_t id = d.features.column_ids()[c];
        const ColumnPlan& cp = plan.for_column(id);
        const auto col = d.features.column(c);
        const std::size_t n = col.size();

        // prev[r] / next[r]: nearest present row at or before / at or after r.
        std::vector<std::optional<std::size_t>> prev(n), next(n);
        std::optional<std::size_t> last;
        for (std::size_t r = 0; r < n; ++r) {
            if (!is_missing(col[r])) last = r;
            prev[r] = last;
        }
        last.reset();
        for (std::size_t r = n; r-- > 0;) {
            if (!is_missing(col[r])) last = r;
            next[r] = last;
        }

        for (std::size_t r = 0; r < n; ++r) {
            if (!is_missing(col[r])) continue;
            double v = cp.fill;
            bool fallback = false;
            switch (cp.strategy) {
                case SimpleStrategy::mean:
                case SimpleStrategy::median:
                case SimpleStrategy::most_frequent: break;
                case SimpleStrategy::forward:
                    if (prev[r]) {
                        v = col[*prev[r]];
                    } else if (next[r]) {
                        v = col[*next[r]];
                    } else {
                        fallback = true;
                    }
                    break;
                case SimpleStrategy::backward:
                    if (next[r]) {
                        v = col[*next[r]];
                    } else if (prev[r]) {
                        v = col[*prev[r]];
                    } else {
                        fallback = true;
                    }
                    break;
                case SimpleStrategy::linear_interpolation:
                    if (prev[r] && next[r]) {
                        const double x0 = static_cast<double>(*prev[r]);
                        const double x1 = static_cast<double>(*next[r]);
                        const double t = (static_cast<double>(r) - x0) / (x1 - x0);
                        v = col[*prev[r]] + t * (col[*next[r]] - col[*prev[r]]);
                    } else {
                        fallback = true;
                    }
                    break;
            }
            out.features.value(r, c) = v;
            if (log) log->push_back({r, id, to_string(cp.strategy), v, fallback});
        }
    }
    out.log("simple_impute", "columns=" + std::to_string(d.cols()));
    return out;
}

// ------------------------------------------------------------
// k nearest neighbours
// ------------------------------------------------------------

std::optional<double> masked_distance(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    std::size_t shared = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (is_missing(a[i]) || is_missing(b[i])) continue;
        const double diff = a[i] - b[i];
        sum += diff * diff;
        ++shared;
    }
    if (shared == 0) return std::nullopt;
    return std::sqrt(sum / static_cast<double>(shared));
}

namespace {

void require_same_columns(const Dataset& a, const Dataset& b, const char* op) {
    if (a.features.column_ids() != b.features.column_ids()) {
        throw Error(std::string(op) + ": train and target columns differ");
    }
}

std::vector<double> present_means(const Dataset& train, std::size_t min_present, const char* op) {
    std::vector<double> means(train.cols(), 0.0);
    for (std::size_t c = 0; c < train.cols(); ++c) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t r = 0; r < train.rows(); ++r) {
            const double v = train.features.value(r, c);
            if (is_missing(v)) continue;
            sum += v;
            ++n;
        }
        if (n < std::max<std::size_t>(1, min_present)) {
            throw Error(std::string(op) + ": column " + std::to_string(train.features.column_ids()[c]) +
                        " has too few present training values");
        }
        means[c] = sum / static_cast<double>(n);
    }
    return means;
}

}  // namespace

Dataset knn_impute(const KnnImputeParams& p, const Dataset& train, const Dataset& target, ImputeLog* log) {
    if (p.k < 1) throw Error("knn_impute: k must be at least 1");
    require_same_columns(train, target, "knn_impute");
    const auto means = present_means(train, p.k, "knn_impute");

    Dataset out = target;
    std::vector<ImputeLog> row_logs(target.rows());
    parallel_for(target.rows(), [&](std::size_t r) {
        const auto row = target.features.row(r);
        if (std::none_of(row.begin(), row.end(), [](double v) { return is_missing(v); })) return;

        std::vector<std::pair<double, std::size_t>> neighbours;
        neighbours.reserve(train.rows());
        for (std::size_t t = 0; t < train.rows(); ++t) {
            if (auto dist = masked_distance(row, train.features.row(t))) neighbours.emplace_back(*dist, t);
        }
        std::sort(neighbours.begin(), neighbours.end());

        for (std::size_t c = 0; c < target.cols(); ++c) {
            if (!is_missing(row[c])) continue;
            double sum = 0.0;
            std::size_t used = 0;
            for (const auto& [dist, t] : neighbours) {
                const double v = train.features.value(t, c);
                if (is_missing(v)) continue;
                sum += v;
                if (++used == p.k) break;
            }
            const bool fallback = used == 0;
            const double v = fallback ? means[c] : sum / static_cast<double>(used);
            out.features.value(r, c) = v;
            row_logs[r].push_back({r, target.features.column_ids()[c], "knn", v, fallback});
        }
    });
    if (log) {
        for (auto& rl : row_logs) log->insert(log->end(), rl.begin(), rl.end());
    }
    out.log("knn_impute", "k=" + std::to_string(p.k));
    return out;
}

// ------------------------------------------------------------
// Chained equations
// ------------------------------------------------------------

namespace {

std::vector<std::size_t> modelled_columns(const Dataset& train, const Dataset* target) {
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < train.cols(); ++c) {
        bool any = false;
        for (std::size_t r = 0; r < train.rows() && !any; ++r) any = train.features.missing(r, c);
        if (target) {
            for (std::size_t r = 0; r < target->rows() && !any; ++r) any = target->features.missing(r, c);
        }
        if (any) cols.push_back(c);
    }
    return cols;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size();
    return m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

double predict_row(const MiceEquation& eq, std::span<const double> row) {
    double y = eq.coefficients[0];
    std::size_t k = 1;
    for (std::size_t c = 0; c < row.size(); ++c) {
        if (c == eq.column) continue;
        y += eq.coefficients[k++] * row[c];
    }
    return y;
}

/// Refills the originally-missing cells of eq.column in `state`, in row order.
void refill(const MiceEquation& eq, const MiceModel& model, std::size_t sweep, FeatureMatrix& state,
            const std::vector<std::vector<std::size_t>>& missing_rows, ImputeLog* log, bool final_sweep) {
    const auto& rows = missing_rows[eq.column];
    if (rows.empty()) return;
    const bool noisy = model.params.noise_mode == MiceNoise::gaussian_residual_draw && !eq.fallback;
    Rng rng(substream(substream(model.params.seed, "mice"), sweep * 1000003ULL + eq.column));
    for (std::size_t r : rows) {
        double v = eq.fallback ? model.column_means[eq.column] : predict_row(eq, state.row(r));
        if (noisy) v += eq.residual_std * rng.normal();
        state.value(r, eq.column) = v;
        if (log && final_sweep) {
            log->push_back({r, model.column_ids[eq.column], eq.fallback ? "mice_mean" : "mice", v, eq.fallback});
        }
    }
}

std::vector<std::vector<std::size_t>> missing_rows_by_column(const Dataset& d) {
    std::vector<std::vector<std::size_t>> out(d.cols());
    for (std::size_t r = 0; r < d.rows(); ++r) {
        for (std::size_t c = 0; c < d.cols(); ++c) {
            if (d.features.missing(r, c)) out[c].push_back(r);
        }
    }
    return out;
}

void initialise(const MiceModel& model, FeatureMatrix& state) {
    for (std::size_t r = 0; r < state.rows(); ++r) {
        for (std::size_t c = 0; c < state.cols(); ++c) {
            if (state.missing(r, c)) state.value(r, c) = model.initial_values[c];
        }
    }
}

MiceEquation fit_equation(std::size_t j, const FeatureMatrix& state, const std::vector<std::size_t>& observed,
                          double ridge) {
    const std::size_t p = state.cols();
    const std::size_t n = observed.size();
    Eigen::MatrixXd x(n, p);  // intercept + (p - 1) predictors
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = state.row(observed[i]);
        x(i, 0) = 1.0;
        std::size_t k = 1;
        for (std::size_t c = 0; c < p; ++c) {
            if (c != j) x(i, k++) = row[c];
        }
        y(i) = row[j];
    }
    Eigen::MatrixXd gram = x.transpose() * x;
    gram.diagonal().array() += ridge;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    Eigen::VectorXd beta = ldlt.solve(x.transpose() * y);

    MiceEquation eq;
    eq.column = j;
    if (ldlt.info() != Eigen::Success || !beta.allFinite() || !(ldlt.vectorD().array() > 0.0).all()) {
        eq.fallback = true;
        return eq;
    }
    eq.coefficients.assign(beta.data(), beta.data() + beta.size());
    const Eigen::VectorXd resid = y - x * beta;
    const double dof = n > p ? static_cast<double>(n - p) : 1.0;
    eq.residual_std = std::sqrt(resid.squaredNorm() / dof);
    return eq;
}

}  // namespace

MiceModel fit_mice(const MiceParams& p, const Dataset& train, const Dataset* target) {
    if (p.n_iterations < 1) throw Error("mice_impute: n_iterations must be at least 1");
    if (train.cols() < 2) throw Error("mice_impute: at least two columns required");
    if (target) require_same_columns(train, *target, "mice_impute");

    MiceModel model;
    model.params = p;
    model.column_ids = train.features.column_ids();
    model.column_means = present_means(train, 1, "mice_impute");
    model.initial_values = model.column_means;
    if (p.initial_fill == MiceInit::median) {
        for (std::size_t c = 0; c < train.cols(); ++c) {
            std::vector<double> present;
            for (double v : train.features.column(c)) {
                if (!is_missing(v)) present.push_back(v);
            }
            model.initial_values[c] = median_of(std::move(present));
        }
    }

    const auto columns = modelled_columns(train, target);
    if (columns.empty()) return model;

    const auto missing_rows = missing_rows_by_column(train);
    std::vector<std::vector<std::size_t>> observed(train.cols());
    for (std::size_t c : columns) {
        for (std::size_t r = 0; r < train.rows(); ++r) {
            if (!train.features.missing(r, c)) observed[c].push_back(r);
        }
        if (observed[c].size() < 2) {
            throw Error("mice_impute: column " + std::to_string(model.column_ids[c]) +
                        " has fewer than 2 observed training rows");
        }
    }

    FeatureMatrix state = train.features;
    initialise(model, state);
    for (std::size_t sweep = 0; sweep < p.n_iterations; ++sweep) {
        std::vector<MiceEquation> eqs;
        eqs.reserve(columns.size());
        for (std::size_t j : columns) {
            eqs.push_back(fit_equation(j, state, observed[j], p.ridge));
            refill(eqs.back(), model, sweep, state, missing_rows, nullptr, false);
        }
        model.sweeps.push_back(std::move(eqs));
    }
    return model;
}

Dataset apply_mice(const MiceModel& model, const Dataset& target, ImputeLog* log) {
    if (target.features.column_ids() != model.column_ids) throw Error("mice_impute: column mismatch");
    Dataset out = target;
    const auto missing_rows = missing_rows_by_column(target);
    initialise(model, out.features);
    for (std::size_t sweep = 0; sweep < model.sweeps.size(); ++sweep) {
        const bool final_sweep = sweep + 1 == model.sweeps.size();
        for (const auto& eq : model.sweeps[sweep]) {
            refill(eq, model, sweep, out.features, missing_rows, log, final_sweep);
        }
    }
    std::size_t fallbacks = 0;
    for (const auto& sw : model.sweeps) {
        for (const auto& eq : sw) fallbacks += eq.fallback;
    }
    out.log("mice_impute", "iterations=" + std::to_string(model.sweeps.size()) +
                               " fallback_equations=" + std::to_string(fallbacks));
    return out;
}

Dataset mice_impute(const MiceParams& p, const Dataset& train, const Dataset& target, ImputeLog* log) {
    return apply_mice(fit_mice(p, train, &target), target, log);
}

}  // namespace rareclass
