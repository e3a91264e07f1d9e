#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rareclass/dataset.hpp"

namespace rareclass {

struct SmoteParams {
    /// Minority/majority ratio after sampling, in (0, 1].
    double target_ratio = 1.0;
    std::size_t k_neighbors = 5;
    std::uint64_t seed = 0;
};

enum class ResampleStrategy { none, smote_only, under_only, combined };

const char* to_string(ResampleStrategy s);

/// Provenance of one generated row: x_new = x_parent + lambda * (x_neighbor - x_parent).
/// Parent and neighbour are row positions in the input dataset.
struct SyntheticRecord {
    std::size_t output_row = 0;
    std::size_t parent = 0;
    std::size_t neighbor = 0;
    double lambda = 0.0;
};

struct ClassCounts {
    std::size_t majority = 0;
    std::size_t minority = 0;
};

struct ResamplePlan {
    ResampleStrategy strategy = ResampleStrategy::none;
    std::optional<double> over_ratio;
    std::optional<double> under_ratio;
    ClassCounts before;
    ClassCounts after;
    std::vector<bool> synthetic;  // per output row
    std::vector<SyntheticRecord> records;
    std::vector<std::string> warnings;
};

/// Segment interpolation between two rows with one shared lambda.
std::vector<double> interpolate(std::span<const double> parent, std::span<const double> neighbor, double lambda);

/// Appends floor(target_ratio * majority) - minority synthetic minority rows.
/// Returns the input unchanged (with a warning) when the target is already met.
std::pair<Dataset, ResamplePlan> smote(const Dataset& train, const SmoteParams& p);

/// Keeps floor(minority / target_ratio) majority rows, chosen uniformly without replacement.
std::pair<Dataset, ResamplePlan> random_undersample(const Dataset& train, double target_ratio, std::uint64_t seed);

/// SMOTE to over_ratio, then (when under_ratio is set) under-sampling to under_ratio.
std::pair<Dataset, ResamplePlan> combined_resample(const Dataset& train, double over_ratio,
                                                   std::optional<double> under_ratio, std::size_t k_neighbors,
                                                   std::uint64_t seed);

void write_resample_plan(const ResamplePlan& plan, const std::filesystem::path& path);

}  // namespace rareclass
