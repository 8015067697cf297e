// SPDX-License-Identifier: Apache-2.0

#include "aft_tools/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "aft/errors.hpp"
#include "aft/experiment.hpp"
#include "aft/feature_store.hpp"
#include "aft/manifest.hpp"
#include "aft/probe.hpp"
#include "aft/run_io.hpp"
#include "aft/synthetic.hpp"

namespace aft::tools {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

template <typename T>
T get_key(const json& doc, const std::string& key) {
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

ExtractorConfig parse_model(const json& m) {
  static const std::vector<std::string> keys{"kind", "hidden", "d_phi", "activation"};
  if (!m.is_object()) throw ConfigError("config key 'model' must be an object");
  ExtractorConfig cfg;
  for (const auto& [k, v] : m.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      throw ConfigError("unknown key 'model." + k + "' (valid: " + join(keys) + ")");
    }
  }
  if (m.contains("kind")) cfg.kind = parse_extractor_kind(get_key<std::string>(m, "kind"));
  if (m.contains("hidden")) cfg.hidden = get_key<std::vector<std::size_t>>(m, "hidden");
  if (m.contains("d_phi")) cfg.d_phi = get_key<std::size_t>(m, "d_phi");
  if (m.contains("activation")) cfg.activation = parse_activation(get_key<std::string>(m, "activation"));
  return cfg;
}

json model_json(const ExtractorConfig& m) {
  return {{"kind", to_string(m.kind)}, {"hidden", m.hidden}, {"d_phi", m.d_phi},
          {"activation", to_string(m.activation)}};
}

std::string run_id_for(const ExperimentConfig& cfg, const std::string& method) {
  std::string id = cfg.run_id.empty() ? method : cfg.run_id;
  std::replace(id.begin(), id.end(), ':', '-');
  return id;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw InputError("cannot write '" + path.string() + "'");
}

void print_checksum(std::ostream& out, const fs::path& path) {
  out << "crc32 " << hex32(file_crc32(path)) << "  " << path.generic_string() << "\n";
}

// ---- synth ----

struct SynthArgs {
  SyntheticSpec spec;
  double test_fraction = 0.5;
  fs::path out;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  a.spec.validate();
  if (!(a.test_fraction >= 0.0 && a.test_fraction < 1.0)) throw UsageError("--test-fraction must be in [0, 1)");
  const SyntheticData data = synth_planted(a.spec);
  fs::create_directories(a.out);
  Manifest m;
  m.inputs = a.out / "inputs.aftf";
  m.pretrained = {a.out / "pretrained.aftf"};
  m.labels = a.out / "labels.aftl";
  m.splits = make_splits(a.spec.n_examples, a.test_fraction, a.spec.seed);
  write_features(data.inputs, m.inputs);
  write_features(data.psi, m.pretrained[0]);
  write_labels({data.labels, static_cast<std::uint32_t>(a.spec.n_classes)}, m.labels);
  const fs::path manifest_path = a.out / "manifest.json";
  save_manifest(m, manifest_path);
  for (const auto& p : {m.inputs, m.pretrained[0], m.labels, manifest_path}) print_checksum(out, p);
  return 0;
}

// ---- train / ablate ----

int train_method(const ExperimentConfig& cfg, const std::string& method, const std::string& run_id,
                 std::ostream& out) {
  const Dataset data = load_dataset(cfg.manifest);
  TrainConfig tc = configure_method(cfg.train, method);
  if (cfg.init_checkpoint) tc.init_extractor = extractor_from_checkpoint(read_checkpoint(*cfg.init_checkpoint));

  std::vector<double> grid;
  if (method == "stl") {
    if (cfg.beta.value_or(0.0) != 0.0 || !cfg.beta_grid.empty()) {
      throw ConfigError("method stl trains at beta = 0; remove beta/beta_grid");
    }
    tc.regularizer.beta = 0.0;
  } else if (cfg.beta) {
    tc.regularizer.beta = *cfg.beta;
  } else {
    grid = cfg.beta_grid.empty() ? default_beta_grid(method) : cfg.beta_grid;
  }
  tc.validate();

  RunRecord run;
  json holdout = json::array();
  if (!grid.empty()) {
    BetaSelection sel = select_beta(tc, data, grid);
    tc.regularizer.beta = sel.beta;
    for (const auto& [b, acc] : sel.holdout_accuracy) holdout.push_back({b, acc});
    run = std::move(sel.final_run);
  } else {
    run = run_training(tc, data);
  }

  fs::create_directories(cfg.out);
  const fs::path ckpt = cfg.out / (run_id + ".ckpt");
  const fs::path metrics = cfg.out / (run_id + ".metrics");
  write_checkpoint(ckpt, checkpoint_from_state(run.state));

  const auto& reg = tc.regularizer;
  json header{{"run_id", run_id},
              {"method", method},
              {"dataset", cfg.dataset},
              {"regularizer", to_string(reg.kind)},
              {"kernel", to_string(reg.kernel)},
              {"mu_mode", to_string(reg.mu_mode)},
              {"beta", reg.beta},
              {"beta_grid", grid},
              {"holdout_accuracy", holdout},
              {"bilevel_inner_steps", tc.bilevel_inner_steps},
              {"seed", tc.seed},
              {"steps", tc.steps},
              {"batch_size", tc.batch_size},
              {"lr_theta", tc.lr_theta},
              {"lr_mu", tc.lr_mu},
              {"schedule", to_string(tc.schedule)},
              {"model", model_json(tc.model)}};
  json final_line{{"checkpoint", ckpt.filename().generic_string()}};
  const auto test_acc = run.final_test_accuracy();
  final_line["test_accuracy"] = test_acc ? json(*test_acc) : json(nullptr);
  final_line["test_error"] = test_acc ? json(1.0 - *test_acc) : json(nullptr);
  write_metrics(metrics, header, run, final_line);
  write_file(cfg.out / (run_id + ".config.json"), cfg.source.dump(2) + "\n");

  out << "run " << run_id << " method " << method << " beta " << reg.beta;
  if (test_acc) out << " test_error " << 1.0 - *test_acc;
  out << "\n";
  print_checksum(out, metrics);
  print_checksum(out, ckpt);
  if (test_acc && !std::isfinite(*test_acc)) return 1;
  return 0;
}

// ---- sweep ----

json stats_json(const GroupStats& g) {
  return {{"count", g.count}, {"mean", g.mean}, {"median", g.median}, {"q1", g.q1}, {"q3", g.q3}};
}

int cmd_sweep(const ExperimentConfig& cfg, std::ostream& out) {
  const Dataset base = load_dataset(cfg.manifest);
  SweepOptions opt;
  opt.seeds = cfg.seeds;
  opt.threads = threads_from_env();
  for (const auto& m : cfg.methods) {
    if (m != "stl" && !cfg.beta_grid.empty()) opt.beta_grids[m] = cfg.beta_grid;
  }
  const SweepResult res = noise_robustness_sweep(base, cfg.d_noise, cfg.methods, cfg.train, opt);

  fs::create_directories(cfg.out);
  const fs::path report = cfg.out / (cfg.sweep_id + ".report");
  const fs::path cells = cfg.out / (cfg.sweep_id + ".cells");
  write_file(report, format_report(res.report));
  std::string lines;
  const std::size_t base_cols = base.pretrained.cols();
  for (const auto& c : res.cells) {
    json j{{"method", c.method}, {"d_noise", c.d_noise}, {"seed", c.seed}, {"beta", c.beta},
           {"test_error", c.test_error}};
    json h = json::array();
    for (const auto& [b, acc] : c.holdout_accuracy) h.push_back({b, acc});
    j["holdout_accuracy"] = h;
    if (c.mu && c.mu->mode == MuMode::diagonal) {
      std::vector<std::size_t> sig(base_cols), noise(c.d_noise);
      for (std::size_t i = 0; i < base_cols; ++i) sig[i] = i;
      for (std::size_t i = 0; i < c.d_noise; ++i) noise[i] = base_cols + i;
      const auto dist = mu_distribution_report(*c.mu, sig, noise);
      j["mu"] = {{"signal", stats_json(dist.signal)}, {"noise", stats_json(dist.noise)}};
    }
    lines += j.dump() + "\n";
  }
  write_file(cells, lines);
  write_file(cfg.out / (cfg.sweep_id + ".config.json"), cfg.source.dump(2) + "\n");
  out << format_report(res.report);
  print_checksum(out, report);
  print_checksum(out, cells);
  return 0;
}

// ---- probe ----

struct ProbeArgs {
  fs::path manifest;
  std::string source = "pretrained";
  fs::path features;
  fs::path labels;
  double test_fraction = 0.5;
  std::uint64_t seed = 0;
  ProbeOptions options;
  fs::path mu_checkpoint;
};

int cmd_probe(const ProbeArgs& a, std::ostream& out) {
  Matrix x;
  std::vector<std::uint32_t> y;
  std::uint32_t n_classes = 0;
  Splits splits;
  if (!a.manifest.empty()) {
    if (!a.features.empty() || !a.labels.empty()) throw UsageError("use either --manifest or --features/--labels");
    Dataset d = load_dataset(a.manifest);
    if (a.source == "pretrained") x = std::move(d.pretrained);
    else if (a.source == "inputs") x = std::move(d.inputs);
    else throw UsageError("--source must be pretrained or inputs");
    y = std::move(d.labels);
    n_classes = d.n_classes;
    splits = d.splits;
  } else {
    if (a.features.empty() || a.labels.empty()) throw UsageError("probe needs --manifest or both --features and --labels");
    x = read_features(a.features);
    Labels l = read_labels(a.labels);
    if (l.values.size() != x.rows()) {
      throw InputError("row count mismatch: " + a.features.string() + " has " + std::to_string(x.rows()) + ", " +
                       a.labels.string() + " has " + std::to_string(l.values.size()));
    }
    y = std::move(l.values);
    n_classes = l.n_classes;
    splits = make_splits(x.rows(), a.test_fraction, a.seed);
  }
  const auto train = splits.full_train();
  const auto& test = splits.test.empty() ? train : splits.test;
  const ProbeResult r = linear_probe(x, y, n_classes, train, test, a.options);
  out << "train_accuracy " << r.train_accuracy << "\n";
  out << "test_accuracy " << r.test_accuracy << "\n";
  out << "iterations " << r.iterations << "\n";
  if (!a.mu_checkpoint.empty()) {
    const Checkpoint ck = read_checkpoint(a.mu_checkpoint);
    const auto it = ck.tensors.find("mu.s");
    if (it == ck.tensors.end()) throw InputError("checkpoint has no diagonal mu ('mu.s')");
    MuWeights mu = MuWeights::diagonal(it->second.cols());
    mu.s = it->second;
    const auto w = weighted_probe_comparison(x, y, n_classes, mu, train, test, a.options);
    out << "err_raw " << w.err_raw << "\n";
    out << "err_weighted " << w.err_weighted << "\n";
  }
  return std::isfinite(r.final_loss) ? 0 : 1;
}

// ---- report ----

int cmd_report(const fs::path& dir, const fs::path& out_path, const std::string& baseline, std::ostream& out) {
  if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".metrics") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InputError("no .metrics files in " + dir.string());
  std::vector<ErrorRecord> records;
  for (const auto& f : files) {
    const auto lines = read_metrics(f);
    const json* header = nullptr;
    const json* fin = nullptr;
    for (const auto& l : lines) {
      if (l.value("type", "") == "header") header = &l;
      if (l.value("type", "") == "final") fin = &l;
    }
    if (header == nullptr || fin == nullptr || !fin->contains("test_error") || (*fin)["test_error"].is_null()) {
      throw InputError(f.string() + ": missing header or final test_error");
    }
    records.push_back({header->value("method", ""), header->value("dataset", ""),
                       header->value("seed", std::uint64_t{0}), (*fin)["test_error"].get<double>()});
  }
  const std::string text = format_report(aggregate_normalized_error(records, baseline));
  out << text;
  if (!out_path.empty()) {
    write_file(out_path, text);
    print_checksum(out, out_path);
  }
  return 0;
}

// ---- validate ----

int cmd_validate(const std::vector<fs::path>& paths, std::ostream& out) {
  for (const auto& p : paths) {
    if (p.extension() == ".json") {
      const Manifest m = load_manifest(p);
      const std::size_t n = validate_manifest(m);
      out << "ok manifest " << p.generic_string() << " rows " << n << " train " << m.splits.train.size()
          << " holdout " << m.splits.holdout.size() << " test " << m.splits.test.size() << "\n";
    } else {
      std::ifstream in(p, std::ios::binary);
      if (!in) throw InputError("cannot open '" + p.string() + "'");
      char magic[4] = {};
      in.read(magic, 4);
      const std::string tag(magic, static_cast<std::size_t>(in.gcount()));
      if (tag == "AFTL") {
        const Labels l = read_labels(p);
        out << "ok labels " << p.generic_string() << " rows " << l.values.size() << " classes " << l.n_classes << "\n";
      } else {
        const Matrix m = read_features(p);
        out << "ok features " << p.generic_string() << " rows " << m.rows() << " cols " << m.cols() << "\n";
      }
    }
    print_checksum(out, p);
  }
  return 0;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "manifest", "out", "method", "run_id", "dataset", "beta", "beta_grid", "init_checkpoint",
      "batch_size", "steps", "lr_theta", "lr_mu", "schedule", "bilevel_inner_steps", "seed",
      "kernel", "mu_mode", "eps_norm", "eps_sqrt", "model", "eval_every", "ft_pretrain_steps",
      "ft_pretrain_lr", "sweep_id", "d_noise", "methods", "seeds"};
  return keys;
}

ExperimentConfig parse_config(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  const auto& keys = config_keys();
  for (const auto& [k, v] : doc.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      throw ConfigError("unknown config key '" + k + "' (valid: " + join(keys) + ")");
    }
  }
  for (const char* req : {"manifest", "out"}) {
    if (!doc.contains(req)) throw ConfigError(std::string("missing required config key '") + req + "'");
  }
  ExperimentConfig c;
  c.source = doc;
  c.manifest = resolve(base_dir, get_key<std::string>(doc, "manifest"));
  c.out = resolve(base_dir, get_key<std::string>(doc, "out"));
  if (doc.contains("method")) c.method = get_key<std::string>(doc, "method");
  if (doc.contains("run_id")) c.run_id = get_key<std::string>(doc, "run_id");
  c.dataset = doc.contains("dataset") ? get_key<std::string>(doc, "dataset")
                                      : c.manifest.parent_path().filename().string();
  if (doc.contains("beta")) c.beta = get_key<double>(doc, "beta");
  if (doc.contains("beta_grid")) c.beta_grid = get_key<std::vector<double>>(doc, "beta_grid");
  if (c.beta && !c.beta_grid.empty()) throw ConfigError("set either beta or beta_grid, not both");
  if (doc.contains("init_checkpoint")) c.init_checkpoint = resolve(base_dir, get_key<std::string>(doc, "init_checkpoint"));

  TrainConfig& t = c.train;
  if (doc.contains("batch_size")) t.batch_size = get_key<std::size_t>(doc, "batch_size");
  if (doc.contains("steps")) t.steps = get_key<std::size_t>(doc, "steps");
  if (doc.contains("lr_theta")) t.lr_theta = get_key<double>(doc, "lr_theta");
  if (doc.contains("lr_mu")) t.lr_mu = get_key<double>(doc, "lr_mu");
  if (doc.contains("schedule")) t.schedule = parse_schedule(get_key<std::string>(doc, "schedule"));
  if (doc.contains("bilevel_inner_steps")) t.bilevel_inner_steps = get_key<std::size_t>(doc, "bilevel_inner_steps");
  if (doc.contains("seed")) t.seed = get_key<std::uint64_t>(doc, "seed");
  if (doc.contains("kernel")) t.regularizer.kernel = parse_kernel(get_key<std::string>(doc, "kernel"));
  if (doc.contains("mu_mode")) t.regularizer.mu_mode = parse_mu_mode(get_key<std::string>(doc, "mu_mode"));
  if (doc.contains("eps_norm")) t.regularizer.eps_norm = get_key<double>(doc, "eps_norm");
  if (doc.contains("eps_sqrt")) t.regularizer.eps_sqrt = get_key<double>(doc, "eps_sqrt");
  if (doc.contains("model")) t.model = parse_model(doc["model"]);
  if (doc.contains("eval_every")) t.eval_every = get_key<std::size_t>(doc, "eval_every");
  if (doc.contains("ft_pretrain_steps")) t.ft_pretrain_steps = get_key<std::size_t>(doc, "ft_pretrain_steps");
  if (doc.contains("ft_pretrain_lr")) t.ft_pretrain_lr = get_key<double>(doc, "ft_pretrain_lr");

  if (doc.contains("sweep_id")) c.sweep_id = get_key<std::string>(doc, "sweep_id");
  if (doc.contains("d_noise")) c.d_noise = get_key<std::vector<std::size_t>>(doc, "d_noise");
  if (doc.contains("methods")) c.methods = get_key<std::vector<std::string>>(doc, "methods");
  if (doc.contains("seeds")) c.seeds = get_key<std::vector<std::uint64_t>>(doc, "seeds");

  configure_method(t, c.method);  // rejects unknown names early
  t.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  return parse_config(doc, path.parent_path());
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive feature transfer: data generation, training, ablations, sweeps and reports", "aft"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a planted-signal dataset and its manifest");
  s->add_option("--n", synth.spec.n_examples, "Number of examples")->capture_default_str();
  s->add_option("--d-signal", synth.spec.d_signal, "Signal dimensions")->capture_default_str();
  s->add_option("--d-distractor", synth.spec.d_distractor, "Distractor dimensions")->capture_default_str();
  s->add_option("--d-noise", synth.spec.d_noise, "Pure-noise columns appended to the pre-trained features")
      ->capture_default_str();
  s->add_option("--classes", synth.spec.n_classes, "Number of classes")->capture_default_str();
  s->add_option("--temperature", synth.spec.label_temperature, "Label softmax temperature")->capture_default_str();
  s->add_option("--seed", synth.spec.seed, "Seed")->capture_default_str();
  s->add_option("--test-fraction", synth.test_fraction, "Fraction of rows in the test split")->capture_default_str();
  s->add_option("--out", synth.out, "Output directory")->required();

  fs::path train_config;
  auto* t = app.add_subcommand("train", "Train one method (tunes beta on the holdout split when a grid is given)");
  t->add_option("--config", train_config, "Experiment config (JSON)")->required();

  fs::path ablate_config;
  std::string variant;
  auto* ab = app.add_subcommand("ablate", "Train an AFT ablation");
  ab->add_option("--config", ablate_config, "Experiment config (JSON)")->required();
  ab->add_option("--variant", variant, "One of: " + join(ablation_variants()))->required();

  fs::path sweep_config;
  auto* sw = app.add_subcommand("sweep", "Noise-robustness sweep over d_noise, methods and seeds");
  sw->add_option("--config", sweep_config, "Experiment config (JSON)")->required();

  ProbeArgs probe;
  auto* pr = app.add_subcommand("probe", "Linear probe on frozen features");
  pr->add_option("--manifest", probe.manifest, "Dataset manifest (uses its splits)");
  pr->add_option("--source", probe.source, "Feature source with --manifest: pretrained or inputs")->capture_default_str();
  pr->add_option("--features", probe.features, "Feature file");
  pr->add_option("--labels", probe.labels, "Label file");
  pr->add_option("--test-fraction", probe.test_fraction, "Test fraction with --features")->capture_default_str();
  pr->add_option("--seed", probe.seed, "Split seed with --features")->capture_default_str();
  pr->add_option("--l2", probe.options.l2_penalty, "L2 penalty on the weights")->capture_default_str();
  pr->add_option("--max-iters", probe.options.max_iters, "Iteration cap")->capture_default_str();
  pr->add_option("--mu-checkpoint", probe.mu_checkpoint, "Also probe psi weighted by this checkpoint's mu");

  fs::path report_dir, report_out;
  std::string baseline = "stl";
  auto* rp = app.add_subcommand("report", "Normalized-error table over a directory of .metrics files");
  rp->add_option("--dir", report_dir, "Directory holding .metrics files")->required();
  rp->add_option("--out", report_out, "Write the table to this .report file");
  rp->add_option("--baseline", baseline, "Method used for normalization")->capture_default_str();

  std::vector<fs::path> validate_paths;
  auto* va = app.add_subcommand("validate", "Check feature, label and manifest files");
  va->add_option("paths", validate_paths, "Files to check (.json = manifest)")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (t->parsed()) {
      const auto cfg = load_config(train_config);
      return train_method(cfg, cfg.method, run_id_for(cfg, cfg.method), out);
    }
    if (ab->parsed()) {
      const auto cfg = load_config(ablate_config);
      const std::string method = "aft:" + variant;
      configure_method(cfg.train, method);
      const std::string id = (cfg.run_id.empty() ? std::string("aft") : cfg.run_id) + "-" + variant;
      return train_method(cfg, method, id, out);
    }
    if (sw->parsed()) return cmd_sweep(load_config(sweep_config), out);
    if (pr->parsed()) return cmd_probe(probe, out);
    if (rp->parsed()) return cmd_report(report_dir, report_out, baseline, out);
    if (va->parsed()) return cmd_validate(validate_paths, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace aft::tools
