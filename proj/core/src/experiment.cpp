// SPDX-License-Identifier: Apache-2.0

#include "aft/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "aft/errors.hpp"
#include "aft/synthetic.hpp"

namespace aft {

std::vector<std::string> known_methods() {
  std::vector<std::string> out{"stl", "aft", "l2", "kd", "rkd", "ft"};
  for (const auto& v : ablation_variants()) out.push_back("aft:" + v);
  return out;
}

std::vector<std::string> ablation_variants() {
  return {"no-kernel", "identity-mu", "dense-mu", "rbf", "bilevel"};
}

void apply_ablation(TrainConfig& config, const std::string& variant) {
  config.regularizer.kind = RegularizerKind::aft;
  if (variant == "no-kernel") {
    config.regularizer.kind = RegularizerKind::l2;
    config.regularizer.mu_mode = MuMode::dense;
  } else if (variant == "identity-mu") {
    config.regularizer.mu_mode = MuMode::identity;
  } else if (variant == "dense-mu") {
    config.regularizer.mu_mode = MuMode::dense;
  } else if (variant == "rbf") {
    config.regularizer.kernel = Kernel::rbf;
  } else if (variant == "bilevel") {
    config.bilevel_inner_steps = 5;
  } else {
    std::string valid;
    for (const auto& v : ablation_variants()) valid += (valid.empty() ? "" : ", ") + v;
    throw UsageError("unknown ablation variant '" + variant + "' (valid: " + valid + ")");
  }
}

TrainConfig configure_method(TrainConfig config, const std::string& method) {
  auto& reg = config.regularizer;
  const auto colon = method.find(':');
  const std::string head = method.substr(0, colon);
  if (colon != std::string::npos) {
    if (head != "aft") throw UsageError("unknown method '" + method + "': only aft has ablations");
    reg.kernel = Kernel::linear;
    reg.mu_mode = MuMode::diagonal;
    apply_ablation(config, method.substr(colon + 1));
    return config;
  }
  if (head == "stl") {
    reg.kind = RegularizerKind::none;
    reg.beta = 0.0;
  } else if (head == "aft" || head == "l2" || head == "kd" || head == "rkd" || head == "ft") {
    reg.kind = parse_regularizer_kind(head);
    if (head == "l2") reg.mu_mode = MuMode::dense;
  } else {
    std::string valid;
    for (const auto& m : known_methods()) valid += (valid.empty() ? "" : ", ") + m;
    throw UsageError("unknown method '" + method + "' (valid: " + valid + ")");
  }
  return config;
}

std::vector<double> default_beta_grid(const std::string& method) {
  if (method == "stl") return {};
  if (method == "aft" || method == "l2" || method.rfind("aft:", 0) == 0) return {3.0, 10.0, 30.0};
  return {0.1, 1.0, 10.0, 100.0};
}

WeightedProbeResult weighted_probe_comparison(const Matrix& psi, std::span<const std::uint32_t> labels,
                                              std::uint32_t n_classes, const MuWeights& mu,
                                              std::span<const std::size_t> train_rows,
                                              std::span<const std::size_t> test_rows,
                                              const ProbeOptions& options) {
  const ProbeResult raw = linear_probe(psi, labels, n_classes, train_rows, test_rows, options);
  const ProbeResult weighted = linear_probe(mu.apply(psi), labels, n_classes, train_rows, test_rows, options);
  return {1.0 - raw.test_accuracy, 1.0 - weighted.test_accuracy};
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InputError("quantile: no values");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

GroupStats group_stats(const std::vector<double>& values) {
  GroupStats g;
  g.count = values.size();
  if (values.empty()) return g;
  double total = 0.0;
  for (double v : values) total += v;
  g.mean = total / static_cast<double>(values.size());
  g.median = quantile(values, 0.5);
  g.q1 = quantile(values, 0.25);
  g.q3 = quantile(values, 0.75);
  return g;
}

MuDistribution mu_distribution_report(const MuWeights& mu, std::span<const std::size_t> signal_dims,
                                      std::span<const std::size_t> noise_dims) {
  if (mu.mode != MuMode::diagonal) {
    throw UsageError("mu_distribution_report: requires diagonal mu, got " + to_string(mu.mode));
  }
  const auto w = mu.effective_diagonal();
  auto gather = [&](std::span<const std::size_t> dims) {
    std::vector<double> out;
    for (std::size_t d : dims) {
      if (d >= w.size()) throw DimensionError("mu_distribution_report: dimension out of range");
      out.push_back(w[d]);
    }
    return out;
  };
  return {group_stats(gather(signal_dims)), group_stats(gather(noise_dims))};
}

AggregateReport aggregate_normalized_error(const std::vector<ErrorRecord>& records,
                                           const std::string& baseline) {
  std::map<std::pair<std::string, std::uint64_t>, double> base;
  for (const auto& r : records) {
    if (r.method == baseline) base[{r.dataset, r.seed}] = r.error;
  }
  AggregateReport report;
  std::map<std::string, std::vector<const AggregateRow*>> by_method;
  report.rows.reserve(records.size());
  for (const auto& r : records) {
    const auto it = base.find({r.dataset, r.seed});
    if (it == base.end()) {
      throw AggregationError("no " + baseline + " record for cell (dataset=" + r.dataset +
                             ", seed=" + std::to_string(r.seed) + ")");
    }
    if (!(it->second > 0.0)) {
      throw AggregationError(baseline + " error is zero for cell (dataset=" + r.dataset +
                             ", seed=" + std::to_string(r.seed) + ")");
    }
    report.rows.push_back({r, r.error / it->second});
  }
  for (const auto& row : report.rows) by_method[row.record.method].push_back(&row);
  for (const auto& [method, rows] : by_method) {
    MethodSummary s;
    s.method = method;
    s.cells = rows.size();
    for (const auto* row : rows) {
      s.mean_error += row->record.error;
      s.mean_normalized += row->normalized;
    }
    s.mean_error /= static_cast<double>(s.cells);
    s.mean_normalized /= static_cast<double>(s.cells);
    if (s.cells > 1) {
      double var = 0.0;
      for (const auto* row : rows) var += (row->normalized - s.mean_normalized) * (row->normalized - s.mean_normalized);
      var /= static_cast<double>(s.cells - 1);
      s.se_normalized = std::sqrt(var / static_cast<double>(s.cells));
    }
    report.summary.push_back(s);
  }
  return report;
}

std::string format_report(const AggregateReport& report) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "method\tdataset\tseed\terror\tnormalized_error\n";
  for (const auto& row : report.rows) {
    out << row.record.method << '\t' << row.record.dataset << '\t' << row.record.seed << '\t'
        << row.record.error << '\t' << row.normalized << '\n';
  }
  out << "# summary\n";
  out << "method\tcells\tmean_error\tmean_normalized_error\tse_normalized_error\n";
  for (const auto& s : report.summary) {
    out << s.method << '\t' << s.cells << '\t' << s.mean_error << '\t' << s.mean_normalized << '\t'
        << s.se_normalized << '\n';
  }
  return out.str();
}

std::uint64_t noise_seed(std::uint64_t seed) { return derive_seed(seed, 0x401CE); }

std::size_t threads_from_env() {
  const char* env = std::getenv("AFT_THREADS");
  if (env == nullptr) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  return (end == env || v < 1) ? 1 : static_cast<std::size_t>(v);
}

SweepResult noise_robustness_sweep(const Dataset& base, const std::vector<std::size_t>& d_noise_list,
                                   const std::vector<std::string>& methods, const TrainConfig& config,
                                   const SweepOptions& options) {
  if (d_noise_list.empty() || d_noise_list.front() != 0 ||
      !std::is_sorted(d_noise_list.begin(), d_noise_list.end())) {
    throw UsageError("noise_robustness_sweep: d_noise list must be ascending and start at 0");
  }
  if (std::find(methods.begin(), methods.end(), "stl") == methods.end()) {
    throw UsageError("noise_robustness_sweep: methods must include stl");
  }
  for (const auto& m : methods) configure_method(config, m);  // validate names up front

  struct Job {
    std::size_t seed_index;
    std::size_t noise_index;
    std::string method;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < options.seeds.size(); ++s)
    for (std::size_t n = 0; n < d_noise_list.size(); ++n)
      for (const auto& m : methods) jobs.push_back({s, n, m});

  // Noisy copies of the dataset, one per (seed, d_noise).
  std::vector<std::vector<Dataset>> datasets(options.seeds.size());
  for (std::size_t s = 0; s < options.seeds.size(); ++s) {
    for (std::size_t d : d_noise_list) {
      Dataset ds = base;
      ds.pretrained = append_noise_features(base.pretrained, d, noise_seed(options.seeds[s]));
      datasets[s].push_back(std::move(ds));
    }
  }

  SweepResult result;
  result.cells.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        const Job& job = jobs[j];
        const std::uint64_t seed = options.seeds[job.seed_index];
        const Dataset& data = datasets[job.seed_index][job.noise_index];
        TrainConfig c = configure_method(config, job.method);
        c.seed = seed;
        SweepCell cell;
        cell.method = job.method;
        cell.d_noise = d_noise_list[job.noise_index];
        cell.seed = seed;
        RunRecord run;
        if (job.method == "stl") {
          run = run_training(c, data);
        } else {
          const auto it = options.beta_grids.find(job.method);
          const auto grid = it != options.beta_grids.end() ? it->second : default_beta_grid(job.method);
          BetaSelection sel = select_beta(c, data, grid);
          cell.beta = sel.beta;
          cell.holdout_accuracy = sel.holdout_accuracy;
          run = std::move(sel.final_run);
        }
        cell.test_error = 1.0 - run.final_test_accuracy().value_or(0.0);
        const auto kind = c.regularizer.kind;
        if (kind == RegularizerKind::aft || kind == RegularizerKind::l2) cell.mu = run.state.regularizer.mu();
        result.cells[j] = std::move(cell);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(options.threads, jobs.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<ErrorRecord> records;
  for (const auto& cell : result.cells) {
    records.push_back({cell.method, "noise" + std::to_string(cell.d_noise), cell.seed, cell.test_error});
  }
  result.report = aggregate_normalized_error(records);
  return result;
}

}  // namespace aft
