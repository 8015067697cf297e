// SPDX-License-Identifier: Apache-2.0

#include "aft/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "aft/errors.hpp"
#include "aft/feature_store.hpp"
#include "aft/rng.hpp"

namespace aft {

namespace {

using nlohmann::json;

std::vector<std::size_t> parse_split(const json& j, const std::string& name) {
  std::vector<std::size_t> out;
  if (j.is_null()) return out;
  if (j.is_array()) {
    for (const auto& v : j) out.push_back(v.get<std::size_t>());
  } else if (j.is_object()) {
    const auto begin = j.at("begin").get<std::size_t>();
    const auto end = j.at("end").get<std::size_t>();
    if (end < begin) throw ManifestError("split '" + name + "': end < begin");
    for (std::size_t i = begin; i < end; ++i) out.push_back(i);
  } else {
    throw ManifestError("split '" + name + "' must be an index list or {begin, end}");
  }
  std::sort(out.begin(), out.end());
  return out;
}

json encode_split(const std::vector<std::size_t>& idx) {
  bool contiguous = !idx.empty();
  for (std::size_t i = 1; i < idx.size() && contiguous; ++i) contiguous = idx[i] == idx[i - 1] + 1;
  if (contiguous) return json{{"begin", idx.front()}, {"end", idx.back() + 1}};
  return json(idx);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

std::vector<std::size_t> Splits::full_train() const {
  std::vector<std::size_t> out = train;
  out.insert(out.end(), holdout.begin(), holdout.end());
  std::sort(out.begin(), out.end());
  return out;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ManifestError("manifest " + path.string() + ": " + e.what());
  }
  const auto base = path.parent_path();
  Manifest m;
  try {
    for (const auto& [key, _] : j.items()) {
      if (key != "inputs" && key != "pretrained" && key != "labels" && key != "splits") {
        throw ManifestError("manifest " + path.string() + ": unknown key '" + key + "'");
      }
    }
    m.inputs = resolve(base, j.at("inputs").get<std::string>());
    for (const auto& p : j.at("pretrained")) m.pretrained.push_back(resolve(base, p.get<std::string>()));
    m.labels = resolve(base, j.at("labels").get<std::string>());
    const auto& s = j.at("splits");
    for (const auto& [key, _] : s.items()) {
      if (key != "train" && key != "holdout" && key != "test") {
        throw ManifestError("manifest " + path.string() + ": unknown split '" + key + "'");
      }
    }
    m.splits.train = parse_split(s.value("train", json()), "train");
    m.splits.holdout = parse_split(s.value("holdout", json()), "holdout");
    m.splits.test = parse_split(s.value("test", json()), "test");
  } catch (const json::exception& e) {
    throw ManifestError("manifest " + path.string() + ": " + e.what());
  }
  if (m.pretrained.empty()) throw ManifestError("manifest " + path.string() + ": no pretrained sources");
  return m;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  const auto base = path.parent_path();
  auto rel = [&](const std::filesystem::path& p) {
    return base.empty() ? p.generic_string() : std::filesystem::relative(p, base).generic_string();
  };
  json j;
  j["inputs"] = rel(manifest.inputs);
  j["pretrained"] = json::array();
  for (const auto& p : manifest.pretrained) j["pretrained"].push_back(rel(p));
  j["labels"] = rel(manifest.labels);
  j["splits"] = {{"train", encode_split(manifest.splits.train)},
                 {"holdout", encode_split(manifest.splits.holdout)},
                 {"test", encode_split(manifest.splits.test)}};
  std::ofstream out(path);
  if (!out) throw ManifestError("cannot write manifest " + path.string());
  out << j.dump(1) << "\n";
}

std::size_t validate_manifest(const Manifest& m) {
  const auto inputs = read_feature_header(m.inputs);
  const std::size_t n = inputs.n_rows;
  auto check = [&](const std::filesystem::path& p, std::uint64_t rows) {
    if (rows != n) {
      throw ManifestError("row-count mismatch: " + m.inputs.string() + " has " + std::to_string(n) +
                          " rows, " + p.string() + " has " + std::to_string(rows));
    }
  };
  for (const auto& p : m.pretrained) check(p, read_feature_header(p).n_rows);
  check(m.labels, read_label_header(m.labels).n_rows);

  std::vector<char> used(n, 0);
  auto mark = [&](const std::vector<std::size_t>& idx, const char* name) {
    for (std::size_t i : idx) {
      if (i >= n) {
        throw ManifestError(std::string("split '") + name + "' index " + std::to_string(i) +
                            " out of range [0, " + std::to_string(n) + ")");
      }
      if (used[i]) {
        throw ManifestError(std::string("split '") + name + "' overlaps another split at index " +
                            std::to_string(i));
      }
      used[i] = 1;
    }
  };
  mark(m.splits.train, "train");
  mark(m.splits.holdout, "holdout");
  mark(m.splits.test, "test");
  return n;
}

Splits make_splits(std::size_t n, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw UsageError("make_splits: test_fraction must lie in [0, 1)");
  }
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  const std::size_t n_pool = n - n_test;
  Splits s;
  std::vector<std::size_t> pool(n_pool);
  for (std::size_t i = 0; i < n_pool; ++i) pool[i] = i;
  Rng rng(derive_seed(seed, 0x5EED));
  rng.shuffle(pool);
  for (std::size_t k = 0; k < n_pool; ++k) (k % 10 == 0 ? s.holdout : s.train).push_back(pool[k]);
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.holdout.begin(), s.holdout.end());
  for (std::size_t i = n_pool; i < n; ++i) s.test.push_back(i);
  return s;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  return load_dataset(load_manifest(manifest_path));
}

Dataset load_dataset(const Manifest& manifest) {
  validate_manifest(manifest);
  Dataset d;
  d.inputs = read_features(manifest.inputs);
  auto concat = concat_sources(manifest.pretrained);
  d.pretrained = std::move(concat.features);
  d.source_dims = std::move(concat.source_dims);
  Labels labels = read_labels(manifest.labels);
  d.labels = std::move(labels.values);
  d.n_classes = labels.n_classes;
  d.splits = manifest.splits;
  return d;
}

}  // namespace aft
