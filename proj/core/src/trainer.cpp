// SPDX-License-Identifier: Apache-2.0

#include "aft/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace aft {

namespace {

enum Stream : std::uint64_t { kExtractor = 1, kHead = 2, kRegularizer = 3, kBatches = 4 };

void check_finite(double loss, double reg, const StepRecord& rec) {
  if (std::isfinite(loss) && std::isfinite(reg)) return;
  std::ostringstream msg;
  msg << "non-finite objective at step " << rec.step << " (loss=" << loss << ", reg=" << reg << ")";
  StepRecord bad = rec;
  bad.loss = loss;
  bad.reg = reg;
  throw TrainingAborted(msg.str(), bad);
}

bool regularized(const TrainState& state, const TrainConfig& config) {
  return state.regularizer.active() && config.beta() != 0.0;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (!(lr_theta >= 0.0) || !(lr_mu >= 0.0)) throw ConfigError("learning rates must be >= 0");
  if (!(regularizer.beta >= 0.0) || !std::isfinite(regularizer.beta)) throw ConfigError("beta must be >= 0");
  if (!(regularizer.eps_norm > 0.0) || !(regularizer.eps_sqrt >= 0.0)) throw ConfigError("eps values must be positive");
}

ParamRefs TrainState::theta() {
  ParamRefs refs = extractor.trainable();
  for (auto& r : head.trainable()) refs.push_back(r);
  return refs;
}

TrainState init_state(const TrainConfig& config, std::size_t d_in, std::size_t d_psi,
                      std::uint32_t n_classes) {
  config.validate();
  TrainState state;
  state.extractor = config.init_extractor ? *config.init_extractor
                                          : Extractor(config.model, d_in, derive_seed(config.seed, kExtractor));
  if (state.extractor.d_in() != d_in) {
    throw DimensionError("init_state: extractor expects " + std::to_string(state.extractor.d_in()) +
                         " inputs, data has " + std::to_string(d_in));
  }
  state.head = LinearHead(state.extractor.d_phi(), n_classes, derive_seed(config.seed, kHead));
  state.regularizer = Regularizer(config.regularizer, state.extractor.d_phi(), d_psi,
                                  derive_seed(config.seed, kRegularizer));
  state.batch_rng = Rng(derive_seed(config.seed, kBatches));
  return state;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> rows) {
  Batch b;
  b.x = select_rows(data.inputs, rows);
  b.psi = select_rows(data.pretrained, rows);
  b.y.reserve(rows.size());
  for (std::size_t r : rows) b.y.push_back(data.labels[r]);
  return b;
}

StepRecord train_step(TrainState& state, const TrainConfig& config, const Batch& batch) {
  const double mult = schedule_multiplier(config.schedule, state.step, config.steps);
  StepRecord rec{state.step, 0.0, 0.0, config.lr_theta * mult, config.lr_mu * mult};
  const bool with_reg = regularized(state, config);
  const bool has_aux = with_reg && !state.aux().empty();

  if (with_reg && config.bilevel_inner_steps > 0 && has_aux) {
    for (std::size_t k = 0; k < config.bilevel_inner_steps; ++k) {
      ad::Tape tape;
      ad::Var phi = state.extractor.forward(tape, tape.constant(batch.x));
      ad::Var delta = state.regularizer.evaluate(tape, phi, tape.constant(batch.psi));
      check_finite(0.0, delta.scalar(), rec);
      state.aux_optimizer.step(state.aux(), tape.backward(delta), rec.lr_mu);
    }
  }

  ad::Tape tape;
  const ForwardResult out = forward(tape, state.extractor, state.head, tape.constant(batch.x));
  ad::Var loss = ad::softmax_cross_entropy(out.logits, batch.y);
  rec.loss = loss.scalar();
  if (!with_reg) {
    check_finite(rec.loss, 0.0, rec);
    state.theta_optimizer.step(state.theta(), tape.backward(loss), rec.lr_theta);
    ++state.step;
    return rec;
  }

  ad::Var delta = state.regularizer.evaluate(tape, out.phi, tape.constant(batch.psi));
  rec.reg = delta.scalar();
  check_finite(rec.loss, rec.reg, rec);
  ad::Var total = ad::add(loss, ad::scale(delta, config.beta()));
  const ad::Gradients theta_grads = tape.backward(total);
  if (has_aux && config.bilevel_inner_steps == 0) {
    const ad::Gradients aux_grads = tape.backward(delta);
    state.theta_optimizer.step(state.theta(), theta_grads, rec.lr_theta);
    state.aux_optimizer.step(state.aux(), aux_grads, rec.lr_mu);
  } else {
    state.theta_optimizer.step(state.theta(), theta_grads, rec.lr_theta);
  }
  ++state.step;
  return rec;
}

double evaluate_accuracy(const TrainState& state, const Dataset& data, std::span<const std::size_t> rows) {
  const Matrix x = select_rows(data.inputs, rows);
  std::vector<std::uint32_t> y;
  y.reserve(rows.size());
  for (std::size_t r : rows) y.push_back(data.labels[r]);
  return accuracy(state.head.forward(state.extractor.forward(x)), y);
}

std::optional<double> RunRecord::final_test_accuracy() const {
  return evals.empty() ? std::nullopt : evals.back().test_accuracy;
}

std::optional<double> RunRecord::final_holdout_accuracy() const {
  return evals.empty() ? std::nullopt : evals.back().holdout_accuracy;
}

RunRecord run_training(const TrainConfig& config, const Dataset& data, const RunSplits& splits) {
  if (splits.train.size() < 2) throw ConfigError("run_training: train split needs at least 2 rows");
  RunRecord record;
  record.state = init_state(config, data.inputs.cols(), data.pretrained.cols(), data.n_classes);
  TrainState& state = record.state;

  if (regularized(state, config) && config.regularizer.kind == RegularizerKind::ft) {
    pretrain_paraphraser(select_rows(data.pretrained, splits.train), state.regularizer.ft(),
                         config.ft_pretrain_steps, config.ft_pretrain_lr);
  }

  auto evaluate = [&](std::size_t step) {
    EvalRecord e{step, std::nullopt, std::nullopt};
    if (!splits.holdout.empty()) e.holdout_accuracy = evaluate_accuracy(state, data, splits.holdout);
    if (!splits.test.empty()) e.test_accuracy = evaluate_accuracy(state, data, splits.test);
    record.evals.push_back(e);
  };

  std::vector<std::size_t> order = splits.train;
  std::size_t cursor = order.size();
  const std::size_t n = order.size();
  record.steps.reserve(config.steps);
  for (std::size_t s = 0; s < config.steps; ++s) {
    if (n - cursor < 2) {
      order = splits.train;
      state.batch_rng.shuffle(order);
      cursor = 0;
    }
    const std::size_t take = std::min(config.batch_size, n - cursor);
    const Batch batch = make_batch(data, std::span(order).subspan(cursor, take));
    cursor += take;
    record.steps.push_back(train_step(state, config, batch));
    if (config.eval_every > 0 && (s + 1) % config.eval_every == 0 && s + 1 < config.steps) {
      evaluate(s + 1);
    }
  }
  evaluate(config.steps);
  return record;
}

RunRecord run_training(const TrainConfig& config, const Dataset& data) {
  return run_training(config, data, RunSplits{data.splits.full_train(), {}, data.splits.test});
}

BetaSelection select_beta(const TrainConfig& config, const Dataset& data, std::vector<double> grid) {
  if (grid.empty()) throw ConfigError("select_beta: empty beta grid");
  if (data.splits.holdout.empty()) throw ConfigError("select_beta: manifest has no holdout split");
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  BetaSelection out;
  double best = -1.0;
  for (double beta : grid) {
    TrainConfig c = config;
    c.regularizer.beta = beta;
    const RunRecord run = run_training(c, data, RunSplits{data.splits.train, data.splits.holdout, {}});
    const double acc = run.final_holdout_accuracy().value_or(0.0);
    out.holdout_accuracy.emplace_back(beta, acc);
    if (acc > best) {
      best = acc;
      out.beta = beta;
    }
  }
  TrainConfig final_config = config;
  final_config.regularizer.beta = out.beta;
  out.final_run = run_training(final_config, data);
  return out;
}

}  // namespace aft
