#include "rareclass/preprocess.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace rareclass {

const char* to_string(DropReason r) {
    switch (r) {
        case DropReason::high_missing: return "high_missing";
        case DropReason::constant: return "constant";
        case DropReason::correlated: return "correlated";
        case DropReason::constant_in_train: return "constant_in_train";
    }
    return "unknown";
}

namespace {

Dataset keep_columns(const Dataset& d, const std::vector<bool>& keep, const DropLog& log, const char* op) {
    std::vector<std::size_t> positions;
    for (std::size_t c = 0; c < keep.size(); ++c) {
        if (keep[c]) positions.push_back(c);
    }
    if (positions.empty()) throw Error(std::string(op) + ": no features remain");
    Dataset out = d.select_columns(positions);
    out.log(op, "threshold=" + format_double(log.parameter) + " removed=" + std::to_string(log.size()),
            log.removed_column_ids);
    return out;
}

}  // namespace

std::pair<Dataset, DropLog> drop_high_missing(const Dataset& d, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw Error("drop_high_missing: threshold must be in (0, 1]");
    DropLog log;
    log.reason = DropReason::high_missing;
    log.parameter = threshold;
    std::vector<bool> keep(d.cols(), true);
    for (std::size_t c = 0; c < d.cols(); ++c) {
        std::size_t miss = 0;
        for (std::size_t r = 0; r < d.rows(); ++r) miss += d.features.missing(r, c);
        const double frac = d.rows() ? static_cast<double>(miss) / d.rows() : 0.0;
        if (frac > threshold) {
            keep[c] = false;
            log.removed_column_ids.push_back(d.features.column_ids()[c]);
            log.kept_partner.emplace_back();
        }
    }
    Dataset out = keep_columns(d, keep, log, "drop_high_missing");
    return {std::move(out), std::move(log)};
}

std::pair<Dataset, DropLog> drop_constant(const Dataset& d) {
    DropLog log;
    log.reason = DropReason::constant;
    std::vector<bool> keep(d.cols(), true);
    for (std::size_t c = 0; c < d.cols(); ++c) {
        bool seen = false;
        bool constant = true;
        double first = 0.0;
        for (std::size_t r = 0; r < d.rows() && constant; ++r) {
            const double v = d.features.value(r, c);
            if (is_missing(v)) continue;
            if (!seen) {
                first = v;
                seen = true;
            } else if (v != first) {
                constant = false;
            }
        }
        if (constant) {
            keep[c] = false;
            log.removed_column_ids.push_back(d.features.column_ids()[c]);
            log.kept_partner.emplace_back();
        }
    }
    Dataset out = keep_columns(d, keep, log, "drop_constant");
    return {std::move(out), std::move(log)};
}

std::pair<Dataset, DropLog> drop_correlated(const Dataset& d, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw Error("drop_correlated: threshold must be in (0, 1)");
    DropLog log;
    log.reason = DropReason::correlated;
    log.parameter = threshold;

    const auto& ids = d.features.column_ids();
    std::vector<std::size_t> order(d.cols());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });

    std::vector<std::vector<double>> cols(d.cols());
    for (std::size_t c = 0; c < d.cols(); ++c) cols[c] = d.features.column(c);

    std::vector<bool> keep(d.cols(), true);
    for (std::size_t a = 0; a < order.size(); ++a) {
        const std::size_t i = order[a];
        if (!keep[i]) continue;
        // Candidates later in the scan are tested against the kept column i.
        std::vector<std::size_t> later;
        for (std::size_t b = a + 1; b < order.size(); ++b) {
            if (keep[order[b]]) later.push_back(order[b]);
        }
        std::vector<char> drop(later.size(), 0);
        parallel_for(later.size(), [&](std::size_t t) {
            auto r = pairwise_pearson(cols[i], cols[later[t]]);
            drop[t] = r && std::abs(*r) > threshold;
        });
        for (std::size_t t = 0; t < later.size(); ++t) {
            if (!drop[t]) continue;
            keep[later[t]] = false;
            log.removed_column_ids.push_back(ids[later[t]]);
            log.kept_partner.emplace_back(ids[i]);
        }
    }
    Dataset out = keep_columns(d, keep, log, "drop_correlated");
    return {std::move(out), std::move(log)};
}

void write_drop_logs(const std::vector<DropLog>& logs, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "column_id,reason,threshold,kept_partner\n";
    for (const auto& log : logs) {
        for (std::size_t i = 0; i < log.size(); ++i) {
            out << log.removed_column_ids[i] << ',' << to_string(log.reason) << ',' << format_double(log.parameter)
                << ',';
            if (log.kept_partner[i]) out << *log.kept_partner[i];
            out << '\n';
        }
    }
}

// ------------------------------------------------------------
// Scaling
// ------------------------------------------------------------

const ColumnScale& ScalerParams::for_column(std::size_t column_id) const {
    for (const auto& c : columns) {
        if (c.column_id == column_id) return c;
    }
    throw Error("unknown column " + std::to_string(column_id));
}

ScalerParams fit_scaler(const Dataset& train) {
    ScalerParams p;
    p.columns.reserve(train.cols());
    for (std::size_t c = 0; c < train.cols(); ++c) {
        const std::size_t id = train.features.column_ids()[c];
        double lo = 0.0;
        double hi = 0.0;
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t r = 0; r < train.rows(); ++r) {
            const double v = train.features.value(r, c);
            if (is_missing(v)) continue;
            if (n == 0) {
                lo = hi = v;
            } else {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            sum += v;
            ++n;
        }
        if (n == 0 || !(hi > lo)) throw Error("fit_scaler: column " + std::to_string(id) + " is constant");
        p.columns.push_back({id, lo, hi, sum / static_cast<double>(n)});
    }
    return p;
}

Dataset apply_scaler(const ScalerParams& p, const Dataset& d) {
    Dataset out = d;
    for (std::size_t c = 0; c < d.cols(); ++c) {
        const ColumnScale& s = p.for_column(d.features.column_ids()[c]);
        const double range = s.max_x - s.min_x;
        for (std::size_t r = 0; r < d.rows(); ++r) {
            double& v = out.features.value(r, c);
            if (!is_missing(v)) v = 0.5 + (v - s.ave_x) / range;
        }
    }
    out.log("apply_scaler", "columns=" + std::to_string(d.cols()));
    return out;
}

// ------------------------------------------------------------
// Splitting
// ------------------------------------------------------------

namespace {

std::vector<std::size_t> rows_of_class(const Dataset& d, int label) {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < d.rows(); ++r) {
        if (d.labels[r] == label) out.push_back(r);
    }
    return out;
}

}  // namespace

SplitPlan SplitPlan::fold(std::size_t k) const {
    if (!fold_of_row || k >= n_folds) throw Error("SplitPlan::fold: no such fold");
    SplitPlan out;
    out.seed = seed;
    for (std::size_t r = 0; r < fold_of_row->size(); ++r) {
        ((*fold_of_row)[r] == k ? out.test_rows : out.train_rows).push_back(r);
    }
    return out;
}

SplitPlan stratified_split(const Dataset& d, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw Error("stratified_split: test_fraction must be in (0, 1)");
    SplitPlan plan;
    plan.seed = seed;
    for (int label : {0, 1}) {
        auto rows = rows_of_class(d, label);
        if (rows.size() < 2) {
            throw Error("stratified_split: class " + std::to_string(label) + " has fewer than 2 members");
        }
        Rng rng(substream(seed, label == 0 ? "split/class0" : "split/class1"));
        rng.shuffle(rows);
        const std::size_t n_test = round_half_up(static_cast<double>(rows.size()) * test_fraction);
        plan.test_rows.insert(plan.test_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
        plan.train_rows.insert(plan.train_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
    }
    std::sort(plan.train_rows.begin(), plan.train_rows.end());
    std::sort(plan.test_rows.begin(), plan.test_rows.end());
    return plan;
}

SplitPlan stratified_kfold(const Dataset& d, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw Error("stratified_kfold: k must be at least 2");
    SplitPlan plan;
    plan.seed = seed;
    plan.n_folds = k;
    std::vector<std::size_t> fold(d.rows(), 0);
    // The majority class continues dealing where the minority stopped, so fold
    // totals differ by at most one.
    std::size_t next = 0;
    for (int label : {1, 0}) {
        auto rows = rows_of_class(d, label);
        if (rows.size() < k) {
            throw Error("stratified_kfold: class " + std::to_string(label) + " has fewer than k members");
        }
        Rng rng(substream(seed, label == 0 ? "kfold/class0" : "kfold/class1"));
        rng.shuffle(rows);
        for (std::size_t i = 0; i < rows.size(); ++i) fold[rows[i]] = (next + i) % k;
        next = (next + rows.size()) % k;
    }
    plan.fold_of_row = std::move(fold);
    return plan;
}

}  // namespace rareclass
