// SPDX-License-Identifier: Apache-2.0

#pragma once

// Evaluation drivers: method presets, learned-weight analyses, normalized-error
// aggregation, and the noise-robustness sweep.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aft/manifest.hpp"
#include "aft/probe.hpp"
#include "aft/regularizers.hpp"
#include "aft/trainer.hpp"

namespace aft {

/// Method names: stl, aft, l2, kd, rkd, ft, plus AFT ablations written as
/// "aft:<variant>" with variant in {no-kernel, identity-mu, dense-mu, rbf, bilevel}.
std::vector<std::string> known_methods();
std::vector<std::string> ablation_variants();

/// Applies a method's regularizer settings to `base`. Throws UsageError for unknown names.
TrainConfig configure_method(TrainConfig base, const std::string& method);
/// Applies an AFT ablation to `config` in place. Throws UsageError for unknown variants.
void apply_ablation(TrainConfig& config, const std::string& variant);
/// Default beta grid for a method (empty for stl).
std::vector<double> default_beta_grid(const std::string& method);

struct WeightedProbeResult {
  double err_raw = 0.0;
  double err_weighted = 0.0;
};

/// Linear probes on psi and on psi * mu^T with identical settings; returns test errors.
WeightedProbeResult weighted_probe_comparison(const Matrix& psi, std::span<const std::uint32_t> labels,
                                              std::uint32_t n_classes, const MuWeights& mu,
                                              std::span<const std::size_t> train_rows,
                                              std::span<const std::size_t> test_rows,
                                              const ProbeOptions& options = {});

struct GroupStats {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

/// Linear-interpolated quantile of unsorted values, q in [0, 1].
double quantile(std::vector<double> values, double q);
GroupStats group_stats(const std::vector<double>& values);

struct MuDistribution {
  GroupStats signal;
  GroupStats noise;
};

/// Summary of sigmoid(s_i) over the two index groups. Diagonal mode only.
MuDistribution mu_distribution_report(const MuWeights& mu, std::span<const std::size_t> signal_dims,
                                      std::span<const std::size_t> noise_dims);

struct ErrorRecord {
  std::string method;
  std::string dataset;
  std::uint64_t seed = 0;
  double error = 0.0;
};

struct AggregateRow {
  ErrorRecord record;
  double normalized = 0.0;
};

struct MethodSummary {
  std::string method;
  std::size_t cells = 0;
  double mean_error = 0.0;
  double mean_normalized = 0.0;
  double se_normalized = 0.0;  // sample std / sqrt(cells); 0 for one cell
};

struct AggregateReport {
  std::vector<AggregateRow> rows;
  std::vector<MethodSummary> summary;  // sorted by method name
};

/// Divides every error by the STL error of its (dataset, seed) cell, then
/// averages per method with standard errors across cells.
AggregateReport aggregate_normalized_error(const std::vector<ErrorRecord>& records,
                                           const std::string& baseline = "stl");

/// Tab-separated table (one row per record) followed by a "# summary" block.
std::string format_report(const AggregateReport& report);

struct SweepOptions {
  std::vector<std::uint64_t> seeds{0};
  /// Per-method beta grids; missing entries use default_beta_grid().
  std::map<std::string, std::vector<double>> beta_grids;
  std::size_t threads = 1;
};

struct SweepCell {
  std::string method;
  std::size_t d_noise = 0;
  std::uint64_t seed = 0;
  double beta = 0.0;
  double test_error = 0.0;
  std::vector<std::pair<double, double>> holdout_accuracy;
  std::optional<MuWeights> mu;  // learned weights for mu-based methods
};

struct SweepResult {
  std::vector<SweepCell> cells;  // ordered by (seed, d_noise, method) as given
  AggregateReport report;        // datasets labelled "noise<d>"
};

/// Noise features for a sweep cell are drawn from a stream derived from the seed.
std::uint64_t noise_seed(std::uint64_t seed);

/// For every seed, d_noise and method: append d_noise standard-normal columns
/// to psi, tune beta on the holdout split (STL trains once at beta = 0), refit
/// on the full training set and record the test error.
SweepResult noise_robustness_sweep(const Dataset& base, const std::vector<std::size_t>& d_noise_list,
                                   const std::vector<std::string>& methods, const TrainConfig& config,
                                   const SweepOptions& options = {});

/// Worker count from AFT_THREADS (default 1, minimum 1).
std::size_t threads_from_env();

}  // namespace aft
