// SPDX-License-Identifier: Apache-2.0

#pragma once

// Reverse-mode differentiation over a fixed vocabulary of matrix operations.
//
// A Tape records every operation applied to its Vars. Parameters are named
// leaves; backward() returns one gradient per registered parameter name,
// zero-filled for parameters the loss does not depend on.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "aft/matrix.hpp"

namespace aft::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  /// Value of a 1x1 node.
  double scalar() const;
};

using Gradients = std::map<std::string, Matrix>;

/// Accumulates gradients for the inputs of a node during backward.
class GradSink {
 public:
  explicit GradSink(std::vector<Matrix>& grads) : grads_(grads) {}
  void accumulate(std::size_t id, const Matrix& g);

 private:
  std::vector<Matrix>& grads_;
};

class Tape {
 public:
  using BackwardFn = std::function<void(const Tape&, const Matrix& grad_out, GradSink&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Registers a named trainable leaf. Names must be unique per tape.
  Var parameter(const std::string& name, Matrix value);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }

  /// Exact gradients of a 1x1 node with respect to every registered parameter.
  Gradients backward(Var loss) const;

  /// Records a new node. Used by the operation vocabulary below.
  Var push(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward);

 private:
  struct Node {
    Matrix value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, std::size_t>> parameters_;
};

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double factor);
/// a + 1 * b, where b is a 1 x a.cols() row vector.
Var add_row_vector(Var a, Var b);
/// a * diag(w), where w is a 1 x a.cols() row vector.
Var mul_columns(Var a, Var w);
Var tanh(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var center_rows(Var a);
Var normalize_rows(Var a, double eps);
Var gram(Var a);
Var rbf_gram(Var a);
Var frob_distance(Var a, Var b, double scale, double eps);
/// Sum of squared entries, as a 1x1 node.
Var sum_squares(Var a);
Var sum(Var a);
/// Mean softmax cross-entropy over rows.
Var softmax_cross_entropy(Var logits, std::span<const std::uint32_t> labels);
/// Relational distillation loss: Huber distance term plus twice the Huber angle
/// term. The teacher side is treated as fixed (no gradient flows into it).
Var rkd_loss(Var student, Var teacher);

}  // namespace aft::ad
