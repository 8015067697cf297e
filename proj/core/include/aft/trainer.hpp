// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "aft/errors.hpp"
#include "aft/manifest.hpp"
#include "aft/models.hpp"
#include "aft/optim.hpp"
#include "aft/regularizers.hpp"
#include "aft/rng.hpp"

namespace aft {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t steps = 2000;
  double lr_theta = 1e-3;
  double lr_mu = 1e-2;
  Schedule schedule = Schedule::cosine_to_zero;
  /// 0 = joint updates; k > 0 = k auxiliary updates on the same batch before each theta update.
  std::size_t bilevel_inner_steps = 0;
  std::uint64_t seed = 0;
  RegularizerSpec regularizer{RegularizerKind::none};  // beta lives here
  ExtractorConfig model;
  /// Evaluate every this many steps; 0 = only after the final step.
  std::size_t eval_every = 0;
  std::size_t ft_pretrain_steps = 1000;
  double ft_pretrain_lr = 1e-3;
  /// Extractor weights to start from instead of a random init.
  std::optional<Extractor> init_extractor;

  double beta() const { return regularizer.beta; }
  /// Throws ConfigError on violated invariants.
  void validate() const;
};

struct TrainState {
  Extractor extractor;
  LinearHead head;
  Regularizer regularizer;
  Adam theta_optimizer;
  Adam aux_optimizer;
  std::size_t step = 0;
  Rng batch_rng{0};

  ParamRefs theta();
  ParamRefs aux() { return regularizer.trainable(); }
};

/// Fresh state. Model, regularizer and batching draw from independent streams
/// derived from config.seed, so the model init does not depend on d_psi.
TrainState init_state(const TrainConfig& config, std::size_t d_in, std::size_t d_psi,
                      std::uint32_t n_classes);

struct Batch {
  Matrix x;
  Matrix psi;
  std::vector<std::uint32_t> y;
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> rows);

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;  // unregularized task loss
  double reg = 0.0;   // regularizer value (0 when inactive)
  double lr_theta = 0.0;
  double lr_mu = 0.0;
};

/// Raised when a step produces a non-finite loss or regularizer value.
class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& what, StepRecord record) : Error(what), record_(record) {}
  const StepRecord& record() const { return record_; }

 private:
  StepRecord record_;
};

/// One optimisation step on `batch`.
///
/// theta <- Adam(grad_theta(L + beta * delta)), aux <- Adam(grad_aux(delta)).
/// With beta == 0 the regularizer is not evaluated and aux is untouched.
StepRecord train_step(TrainState& state, const TrainConfig& config, const Batch& batch);

struct EvalRecord {
  std::size_t step = 0;
  std::optional<double> holdout_accuracy;
  std::optional<double> test_accuracy;
};

struct RunRecord {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
  TrainState state;

  std::optional<double> final_test_accuracy() const;
  std::optional<double> final_holdout_accuracy() const;
};

struct RunSplits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> holdout;
  std::vector<std::size_t> test;
};

/// Trains on `splits.train` with seeded per-epoch shuffles, evaluating on the
/// other two splits. A trailing batch with fewer than 2 rows is dropped.
RunRecord run_training(const TrainConfig& config, const Dataset& data, const RunSplits& splits);

/// Trains on the full training set (train + holdout) and evaluates on test.
RunRecord run_training(const TrainConfig& config, const Dataset& data);

double evaluate_accuracy(const TrainState& state, const Dataset& data, std::span<const std::size_t> rows);

struct BetaSelection {
  double beta = 0.0;
  std::vector<std::pair<double, double>> holdout_accuracy;  // (beta, accuracy), ascending beta
  RunRecord final_run;
};

/// Fits once per grid value on train-minus-holdout, keeps the beta with the
/// best holdout accuracy (ties go to the smaller beta), then refits on the
/// full training set at that beta.
BetaSelection select_beta(const TrainConfig& config, const Dataset& data, std::vector<double> grid);

}  // namespace aft
