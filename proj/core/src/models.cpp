// SPDX-License-Identifier: Apache-2.0

#include "aft/models.hpp"

#include <algorithm>
#include <cmath>

#include "aft/errors.hpp"
#include "aft/rng.hpp"

namespace aft {

namespace {

Matrix scaled_gaussian(std::size_t out, std::size_t in, Rng& rng) {
  Matrix w(out, in);
  const double sd = in == 0 ? 0.0 : 1.0 / std::sqrt(static_cast<double>(in));
  for (double& v : w.data()) v = sd * rng.normal();
  return w;
}

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = matmul(x, transpose(w));
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += b(0, j);
  return y;
}

ad::Var affine(ad::Tape& tape, ad::Var x, const Matrix& w, const Matrix& b, const std::string& wname,
               const std::string& bname) {
  ad::Var wv = tape.parameter(wname, w);
  ad::Var bv = tape.parameter(bname, b);
  return ad::add_row_vector(ad::matmul(x, ad::transpose(wv)), bv);
}

}  // namespace

ad::Var activate(ad::Var x, Activation activation) {
  switch (activation) {
    case Activation::tanh: return ad::tanh(x);
    case Activation::relu: return ad::relu(x);
    case Activation::identity: return x;
  }
  return x;
}

Matrix activate(const Matrix& x, Activation activation) {
  Matrix y = x;
  for (double& v : y.data()) {
    if (activation == Activation::tanh) v = std::tanh(v);
    else if (activation == Activation::relu) v = v > 0.0 ? v : 0.0;
  }
  return y;
}

Extractor::Extractor(const ExtractorConfig& config, std::size_t d_in, std::uint64_t seed)
    : config_(config), d_in_(d_in) {
  if (config.d_phi == 0) throw UsageError("Extractor: d_phi must be positive");
  Rng rng(seed);
  std::vector<std::size_t> widths{d_in};
  if (config.kind == ExtractorKind::mlp) widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(config.d_phi);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    weights_.push_back(scaled_gaussian(widths[l + 1], widths[l], rng));
    biases_.emplace_back(1, widths[l + 1]);
  }
}

Extractor Extractor::linear_identity(std::size_t d_in, std::size_t d_phi) {
  Extractor e;
  e.config_ = ExtractorConfig{ExtractorKind::linear, {}, d_phi, Activation::identity};
  e.d_in_ = d_in;
  Matrix w(d_phi, d_in);
  for (std::size_t i = 0; i < std::min(d_phi, d_in); ++i) w(i, i) = 1.0;
  e.weights_.push_back(std::move(w));
  e.biases_.emplace_back(1, d_phi);
  return e;
}

ParamRefs Extractor::trainable(const std::string& prefix) {
  ParamRefs refs;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    refs.emplace_back(prefix + ".w" + std::to_string(l), &weights_[l]);
    refs.emplace_back(prefix + ".b" + std::to_string(l), &biases_[l]);
  }
  return refs;
}

ad::Var Extractor::forward(ad::Tape& tape, ad::Var x, const std::string& prefix) const {
  if (x.value().cols() != d_in_) {
    throw DimensionError("Extractor::forward: input " + x.value().shape_string() + ", expected " +
                         std::to_string(d_in_) + " columns");
  }
  ad::Var h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = affine(tape, h, weights_[l], biases_[l], prefix + ".w" + std::to_string(l),
               prefix + ".b" + std::to_string(l));
    if (config_.kind == ExtractorKind::mlp) h = activate(h, config_.activation);
  }
  return h;
}

Matrix Extractor::forward(const Matrix& x) const {
  if (x.cols() != d_in_) {
    throw DimensionError("Extractor::forward: input " + x.shape_string() + ", expected " +
                         std::to_string(d_in_) + " columns");
  }
  Matrix h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = affine(h, weights_[l], biases_[l]);
    if (config_.kind == ExtractorKind::mlp) h = activate(h, config_.activation);
  }
  return h;
}

LinearHead::LinearHead(std::size_t d_phi, std::size_t d_out, std::uint64_t seed)
    : bias(1, d_out) {
  Rng rng(seed);
  weight = scaled_gaussian(d_out, d_phi, rng);
}

ParamRefs LinearHead::trainable(const std::string& prefix) {
  return {{prefix + ".w", &weight}, {prefix + ".b", &bias}};
}

ad::Var LinearHead::forward(ad::Tape& tape, ad::Var phi, const std::string& prefix) const {
  if (phi.value().cols() != weight.cols()) {
    throw DimensionError("LinearHead::forward: features " + phi.value().shape_string() +
                         " vs weight " + weight.shape_string());
  }
  return affine(tape, phi, weight, bias, prefix + ".w", prefix + ".b");
}

Matrix LinearHead::forward(const Matrix& phi) const {
  if (phi.cols() != weight.cols()) {
    throw DimensionError("LinearHead::forward: features " + phi.shape_string() + " vs weight " +
                         weight.shape_string());
  }
  return affine(phi, weight, bias);
}

ForwardResult forward(ad::Tape& tape, const Extractor& extractor, const LinearHead& head,
                      ad::Var x) {
  ad::Var phi = extractor.forward(tape, x);
  return {phi, head.forward(tape, phi)};
}

double cross_entropy(const Matrix& logits, std::span<const std::uint32_t> labels) {
  ad::Tape tape;
  return ad::softmax_cross_entropy(tape.constant(logits), labels).scalar();
}

double accuracy(const Matrix& logits, std::span<const std::uint32_t> labels) {
  if (labels.size() != logits.rows()) throw DimensionError("accuracy: label count mismatch");
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::vector<double> tensor_product_features(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i * b.size() + j] = a[i] * b[j];
  return out;
}

Matrix tensor_product_features(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw DimensionError("tensor_product_features: batch sizes differ");
  Matrix out(a.rows(), a.cols() * b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto row = tensor_product_features(a.row(r), b.row(r));
    std::copy(row.begin(), row.end(), out.row(r).begin());
  }
  return out;
}

std::string to_string(Activation activation) {
  switch (activation) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "?";
}

std::string to_string(ExtractorKind kind) { return kind == ExtractorKind::linear ? "linear" : "mlp"; }

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  throw UsageError("unknown activation '" + name + "' (valid: tanh, relu, identity)");
}

ExtractorKind parse_extractor_kind(const std::string& name) {
  if (name == "linear") return ExtractorKind::linear;
  if (name == "mlp") return ExtractorKind::mlp;
  throw UsageError("unknown extractor '" + name + "' (valid: linear, mlp)");
}

}  // namespace aft
