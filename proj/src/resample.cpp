#include "rareclass/resample.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace rareclass {

const char* to_string(ResampleStrategy s) {
    switch (s) {
        case ResampleStrategy::none: return "none";
        case ResampleStrategy::smote_only: return "smote_only";
        case ResampleStrategy::under_only: return "under_only";
        case ResampleStrategy::combined: return "combined";
    }
    return "unknown";
}

std::vector<double> interpolate(std::span<const double> parent, std::span<const double> neighbor, double lambda) {
    std::vector<double> out(parent.size());
    for (std::size_t i = 0; i < parent.size(); ++i) out[i] = parent[i] + lambda * (neighbor[i] - parent[i]);
    return out;
}

namespace {

ClassCounts counts_of(const Dataset& d) { return {d.count_class(0), d.count_class(1)}; }

void require_complete(const Dataset& d, const char* op) {
    if (d.features.missing_count() != 0) throw Error(std::string(op) + ": training data must be fully imputed");
}

/// k nearest minority neighbours (by squared Euclidean distance) of each minority row.
std::vector<std::vector<std::size_t>> minority_neighbours(const Dataset& d, const std::vector<std::size_t>& minority,
                                                          std::size_t k) {
    std::vector<std::vector<std::size_t>> out(minority.size());
    parallel_for(minority.size(), [&](std::size_t a) {
        const auto xa = d.features.row(minority[a]);
        std::vector<std::pair<double, std::size_t>> dist;
        dist.reserve(minority.size() - 1);
        for (std::size_t b = 0; b < minority.size(); ++b) {
            if (b == a) continue;
            const auto xb = d.features.row(minority[b]);
            double s = 0.0;
            for (std::size_t c = 0; c < xa.size(); ++c) {
                const double diff = xa[c] - xb[c];
                s += diff * diff;
            }
            dist.emplace_back(s, minority[b]);
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        out[a].reserve(k);
        for (std::size_t i = 0; i < k; ++i) out[a].push_back(dist[i].second);
    });
    return out;
}

}  // namespace

std::pair<Dataset, ResamplePlan> smote(const Dataset& train, const SmoteParams& p) {
    if (!(p.target_ratio > 0.0 && p.target_ratio <= 1.0)) throw Error("smote: target_ratio must be in (0, 1]");
    if (p.k_neighbors < 1) throw Error("smote: k_neighbors must be at least 1");
    train.require_both_classes("smote");
    require_complete(train, "smote");

    ResamplePlan plan;
    plan.strategy = ResampleStrategy::smote_only;
    plan.over_ratio = p.target_ratio;
    plan.before = counts_of(train);

    std::vector<std::size_t> minority;
    for (std::size_t r = 0; r < train.rows(); ++r) {
        if (train.labels[r] == 1) minority.push_back(r);
    }
    if (minority.size() <= p.k_neighbors) {
        throw Error("smote: minority count " + std::to_string(minority.size()) + " must exceed k_neighbors " +
                    std::to_string(p.k_neighbors));
    }

    const std::size_t target = floor_count(p.target_ratio * static_cast<double>(plan.before.majority));
    Dataset out = train;
    if (target <= plan.before.minority) {
        plan.warnings.push_back("smote: target ratio already met; no rows generated");
        plan.after = plan.before;
        plan.synthetic.assign(train.rows(), false);
        return {std::move(out), std::move(plan)};
    }
    const std::size_t n_new = target - plan.before.minority;
    const auto neighbours = minority_neighbours(train, minority, p.k_neighbors);

    // Each synthetic row draws from its own substream so the output does not
    // depend on how rows are distributed over threads.
    std::vector<SyntheticRecord> records(n_new);
    std::vector<std::vector<double>> rows(n_new);
    parallel_for(n_new, [&](std::size_t s) {
        Rng rng(substream(substream(p.seed, "smote"), s));
        const std::size_t a = rng.below(minority.size());
        const std::size_t neighbor = neighbours[a][rng.below(p.k_neighbors)];
        const double lambda = rng.uniform();
        records[s] = {train.rows() + s, minority[a], neighbor, lambda};
        rows[s] = interpolate(train.features.row(minority[a]), train.features.row(neighbor), lambda);
    });
    for (std::size_t s = 0; s < n_new; ++s) {
        out.features.append_row(rows[s]);
        out.labels.push_back(1);
        out.row_ids.push_back(kSyntheticRow);
    }
    plan.records = std::move(records);
    plan.synthetic.assign(train.rows(), false);
    plan.synthetic.resize(out.rows(), true);
    plan.after = counts_of(out);
    out.log("smote", "target_ratio=" + format_double(p.target_ratio) + " k=" + std::to_string(p.k_neighbors) +
                         " generated=" + std::to_string(n_new));
    return {std::move(out), std::move(plan)};
}

namespace {

/// Row positions kept by under-sampling, in input order; fills the plan's counts.
std::vector<std::size_t> undersample_rows(const Dataset& train, double target_ratio, std::uint64_t seed,
                                          ResamplePlan& plan) {
    if (!(target_ratio > 0.0 && target_ratio <= 1.0)) {
        throw Error("random_undersample: target_ratio must be in (0, 1]");
    }
    plan.strategy = ResampleStrategy::under_only;
    plan.under_ratio = target_ratio;
    plan.before = counts_of(train);
    const std::size_t keep = floor_count(static_cast<double>(plan.before.minority) / target_ratio);
    if (keep < 1) throw Error("random_undersample: implied majority target is zero");

    std::vector<std::size_t> rows(train.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    if (keep >= plan.before.majority) {
        plan.warnings.push_back("random_undersample: target ratio at or below current ratio; nothing removed");
        return rows;
    }

    std::vector<std::size_t> majority;
    for (std::size_t r = 0; r < train.rows(); ++r) {
        if (train.labels[r] == 0) majority.push_back(r);
    }
    Rng rng(substream(seed, "undersample"));
    rng.shuffle(majority);
    std::vector<bool> drop(train.rows(), false);
    for (std::size_t i = keep; i < majority.size(); ++i) drop[majority[i]] = true;
    rows.erase(std::remove_if(rows.begin(), rows.end(), [&](std::size_t r) { return drop[r]; }), rows.end());
    return rows;
}

}  // namespace

std::pair<Dataset, ResamplePlan> random_undersample(const Dataset& train, double target_ratio, std::uint64_t seed) {
    ResamplePlan plan;
    const auto rows = undersample_rows(train, target_ratio, seed, plan);
    Dataset out = rows.size() == train.rows() ? train : train.select_rows(rows);
    plan.synthetic.clear();
    for (std::size_t r : rows) plan.synthetic.push_back(train.row_ids[r] == kSyntheticRow);
    plan.after = counts_of(out);
    if (rows.size() != train.rows()) {
        out.log("random_undersample", "target_ratio=" + format_double(target_ratio) + " kept_majority=" +
                                          std::to_string(plan.after.majority));
    }
    return {std::move(out), std::move(plan)};
}

std::pair<Dataset, ResamplePlan> combined_resample(const Dataset& train, double over_ratio,
                                                   std::optional<double> under_ratio, std::size_t k_neighbors,
                                                   std::uint64_t seed) {
    auto [over, plan] = smote(train, {over_ratio, k_neighbors, seed});
    if (!under_ratio) return {std::move(over), std::move(plan)};

    ResamplePlan under_plan;
    const auto rows = undersample_rows(over, *under_ratio, substream(seed, "combined/under"), under_plan);
    Dataset out = rows.size() == over.rows() ? over : over.select_rows(rows);
    if (rows.size() != over.rows()) {
        out.log("random_undersample", "target_ratio=" + format_double(*under_ratio));
    }

    // Synthetic rows are minority rows and always survive; map them to their new positions.
    std::vector<std::size_t> new_index(over.rows(), kSyntheticRow);
    for (std::size_t i = 0; i < rows.size(); ++i) new_index[rows[i]] = i;
    for (auto& rec : plan.records) rec.output_row = new_index[rec.output_row];

    plan.strategy = ResampleStrategy::combined;
    plan.under_ratio = under_ratio;
    plan.after = counts_of(out);
    plan.synthetic.clear();
    for (std::size_t r : rows) plan.synthetic.push_back(over.row_ids[r] == kSyntheticRow);
    plan.warnings.insert(plan.warnings.end(), under_plan.warnings.begin(), under_plan.warnings.end());
    return {std::move(out), std::move(plan)};
}

void write_resample_plan(const ResamplePlan& plan, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    auto ratio = [](const std::optional<double>& r) { return r ? format_double(*r) : std::string(); };
    out << "key,value\n";
    out << "strategy," << to_string(plan.strategy) << '\n';
    out << "over_ratio," << ratio(plan.over_ratio) << '\n';
    out << "under_ratio," << ratio(plan.under_ratio) << '\n';
    out << "before_majority," << plan.before.majority << '\n';
    out << "before_minority," << plan.before.minority << '\n';
    out << "after_majority," << plan.after.majority << '\n';
    out << "after_minority," << plan.after.minority << '\n';
    out << "synthetic_rows," << plan.records.size() << '\n';
    for (const auto& w : plan.warnings) out << "warning," << w << '\n';
    out << "\noutput_row,parent,neighbor,lambda\n";
    for (const auto& r : plan.records) {
        out << r.output_row << ',' << r.parent << ',' << r.neighbor << ',' << format_double(r.lambda) << '\n';
    }
}

}  // namespace rareclass
