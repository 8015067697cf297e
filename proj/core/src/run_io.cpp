// SPDX-License-Identifier: Apache-2.0

#include "aft/run_io.hpp"

#include <fstream>
#include <sstream>

#include "aft/errors.hpp"
#include "aft/feature_store.hpp"

namespace aft {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path tensor_dir(const fs::path& index) { return fs::path(index.string() + ".tensors"); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw InputError("write failed for '" + path.string() + "'");
}

}  // namespace

void write_checkpoint(const fs::path& index, const Checkpoint& checkpoint) {
  const fs::path dir = tensor_dir(index);
  fs::create_directories(dir);
  json entries = json::array();
  for (const auto& [name, value] : checkpoint.tensors) {
    const std::string file = name + ".aftf";
    write_features(value, dir / file);
    entries.push_back({{"name", name},
                       {"rows", value.rows()},
                       {"cols", value.cols()},
                       {"file", (dir.filename() / file).generic_string()},
                       {"crc32", file_crc32(dir / file)}});
  }
  json doc{{"format", "aft-checkpoint"}, {"version", 1}, {"meta", checkpoint.meta}, {"tensors", entries}};
  write_text(index, doc.dump(2) + "\n");
}

Checkpoint read_checkpoint(const fs::path& index) {
  std::ifstream in(index);
  if (!in) throw InputError("cannot open checkpoint '" + index.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint '" + index.string() + "': " + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != "aft-checkpoint" || doc.value("version", 0) != 1 ||
      !doc.contains("tensors") || !doc["tensors"].is_array()) {
    throw FormatError("checkpoint '" + index.string() + "': not an aft-checkpoint v1 index");
  }
  Checkpoint ck;
  ck.meta = doc.value("meta", json::object());
  const fs::path base = index.parent_path();
  for (const auto& e : doc["tensors"]) {
    try {
      const auto name = e.at("name").get<std::string>();
      const auto rows = e.at("rows").get<std::size_t>();
      const auto cols = e.at("cols").get<std::size_t>();
      Matrix m = read_features(base / e.at("file").get<std::string>());
      if (m.rows() != rows || m.cols() != cols) {
        throw FormatError("checkpoint tensor '" + name + "': index says " + std::to_string(rows) + "x" +
                          std::to_string(cols) + ", file holds " + m.shape_string());
      }
      ck.tensors.emplace(name, std::move(m));
    } catch (const json::exception& ex) {
      throw FormatError("checkpoint '" + index.string() + "': bad tensor entry: " + ex.what());
    }
  }
  return ck;
}

Checkpoint checkpoint_from_state(TrainState& state) {
  Checkpoint ck;
  for (const auto& [name, value] : state.theta()) ck.tensors.emplace(name, *value);
  for (const auto& [name, value] : state.aux()) ck.tensors.emplace(name, *value);
  const auto& cfg = state.extractor.config();
  ck.meta["extractor"] = {{"kind", to_string(cfg.kind)},
                          {"hidden", cfg.hidden},
                          {"d_phi", cfg.d_phi},
                          {"activation", to_string(cfg.activation)},
                          {"d_in", state.extractor.d_in()}};
  return ck;
}

Extractor extractor_from_checkpoint(const Checkpoint& checkpoint) {
  if (!checkpoint.meta.contains("extractor")) throw FormatError("checkpoint has no extractor metadata");
  ExtractorConfig cfg;
  std::size_t d_in = 0;
  try {
    const auto& m = checkpoint.meta.at("extractor");
    cfg.kind = parse_extractor_kind(m.at("kind").get<std::string>());
    cfg.hidden = m.at("hidden").get<std::vector<std::size_t>>();
    cfg.d_phi = m.at("d_phi").get<std::size_t>();
    cfg.activation = parse_activation(m.at("activation").get<std::string>());
    d_in = m.at("d_in").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint extractor metadata: ") + e.what());
  }
  Extractor ext(cfg, d_in, 0);
  for (std::size_t l = 0; l < ext.n_layers(); ++l) {
    for (auto [prefix, target] : {std::pair{"extractor.w", &ext.weights()[l]}, std::pair{"extractor.b", &ext.biases()[l]}}) {
      const std::string name = prefix + std::to_string(l);
      const auto it = checkpoint.tensors.find(name);
      if (it == checkpoint.tensors.end()) throw FormatError("checkpoint is missing tensor '" + name + "'");
      if (it->second.rows() != target->rows() || it->second.cols() != target->cols()) {
        throw FormatError("checkpoint tensor '" + name + "' has shape " + it->second.shape_string() +
                          ", expected " + target->shape_string());
      }
      *target = it->second;
    }
  }
  return ext;
}

json to_json(const StepRecord& r) {
  return {{"type", "step"}, {"step", r.step}, {"loss", r.loss}, {"reg", r.reg},
          {"lr_theta", r.lr_theta}, {"lr_mu", r.lr_mu}};
}

json to_json(const EvalRecord& r) {
  json j{{"type", "eval"}, {"step", r.step}};
  j["holdout_accuracy"] = r.holdout_accuracy ? json(*r.holdout_accuracy) : json(nullptr);
  j["test_accuracy"] = r.test_accuracy ? json(*r.test_accuracy) : json(nullptr);
  return j;
}

void write_metrics(const fs::path& path, const json& header, const RunRecord& run, const json& final_line) {
  std::ostringstream out;
  json h = header;
  h["type"] = "header";
  out << h.dump() << '\n';
  std::size_t e = 0;
  for (const auto& s : run.steps) {
    out << to_json(s).dump() << '\n';
    while (e < run.evals.size() && run.evals[e].step == s.step) out << to_json(run.evals[e++]).dump() << '\n';
  }
  for (; e < run.evals.size(); ++e) out << to_json(run.evals[e]).dump() << '\n';
  json f = final_line;
  f["type"] = "final";
  out << f.dump() << '\n';
  write_text(path, out.str());
}

std::vector<json> read_metrics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open metrics file '" + path.string() + "'");
  std::vector<json> lines;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      lines.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError("metrics '" + path.string() + "' line " + std::to_string(n) + ": " + e.what());
    }
  }
  return lines;
}

}  // namespace aft
