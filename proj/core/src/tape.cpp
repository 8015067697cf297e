// SPDX-License-Identifier: Apache-2.0

#include "aft/tape.hpp"

#include <algorithm>
#include <cmath>

#include "aft/errors.hpp"

namespace aft::ad {

const Matrix& Var::value() const { return tape->value(id); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw UsageError("Var::scalar on " + v.shape_string());
  return v(0, 0);
}

void GradSink::accumulate(std::size_t id, const Matrix& g) {
  Matrix& slot = grads_[id];
  if (slot.rows() != g.rows() || slot.cols() != g.cols()) {
    slot = g;
    return;
  }
  auto s = slot.data();
  auto gd = g.data();
  for (std::size_t i = 0; i < s.size(); ++i) s[i] += gd[i];
}

Var Tape::constant(Matrix value) { return push(std::move(value), {}, nullptr); }

Var Tape::parameter(const std::string& name, Matrix value) {
  for (const auto& p : parameters_) {
    if (p.first == name) throw UsageError("Tape::parameter: duplicate name '" + name + "'");
  }
  Var v = push(std::move(value), {}, nullptr);
  parameters_.emplace_back(name, v.id);
  return v;
}

Var Tape::push(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward)});
  return Var{this, nodes_.size() - 1};
}

Gradients Tape::backward(Var loss) const {
  if (loss.tape != this) throw UsageError("Tape::backward: variable belongs to another tape");
  const Matrix& lv = value(loss.id);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw UsageError("Tape::backward: loss must be scalar, got " + lv.shape_string());
  }
  std::vector<Matrix> grads(nodes_.size());
  GradSink sink(grads);
  grads[loss.id] = Matrix(1, 1, 1.0);
  for (std::size_t k = loss.id + 1; k-- > 0;) {
    const Node& node = nodes_[k];
    if (!node.backward || grads[k].size() == 0) continue;
    node.backward(*this, grads[k], sink);
  }
  Gradients out;
  for (const auto& [name, id] : parameters_) {
    const Matrix& pv = value(id);
    const Matrix& g = grads[id];
    const bool reached = g.rows() == pv.rows() && g.cols() == pv.cols();
    out[name] = reached ? g : Matrix(pv.rows(), pv.cols());
  }
  return out;
}

namespace {

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw UsageError("operands live on different tapes");
  return *a.tape;
}

void require_row_vector(const Matrix& a, const Matrix& w, const char* op) {
  if (w.rows() != 1 || w.cols() != a.cols()) {
    throw DimensionError(std::string(op) + ": expected 1x" + std::to_string(a.cols()) +
                         " row vector, got " + w.shape_string());
  }
}

double huber(double x) { return std::abs(x) < 1.0 ? 0.5 * x * x : std::abs(x) - 0.5; }
double huber_grad(double x) { return std::abs(x) < 1.0 ? x : (x > 0.0 ? 1.0 : -1.0); }

struct PairwiseDistances {
  Matrix dist;   // B x B Euclidean distances
  double mean;   // mean over off-diagonal entries
};

PairwiseDistances pairwise_distances(const Matrix& x) {
  const std::size_t b = x.rows();
  PairwiseDistances out{Matrix(b, b), 0.0};
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) {
        const double d = x(i, k) - x(j, k);
        sq += d * d;
      }
      const double d = std::sqrt(sq);
      out.dist(i, j) = d;
      out.dist(j, i) = d;
      total += 2.0 * d;
    }
  }
  out.mean = total / static_cast<double>(b * (b - 1));
  return out;
}

// unit[a * B + c] = normalize(x_c - x_a); zero vector when x_c == x_a.
struct UnitDifferences {
  std::vector<double> unit;
  std::vector<double> norm;
};

UnitDifferences unit_differences(const Matrix& x) {
  const std::size_t b = x.rows();
  const std::size_t d = x.cols();
  UnitDifferences out{std::vector<double>(b * b * d, 0.0), std::vector<double>(b * b, 0.0)};
  for (std::size_t a = 0; a < b; ++a) {
    for (std::size_t c = 0; c < b; ++c) {
      double* u = out.unit.data() + (a * b + c) * d;
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        u[k] = x(c, k) - x(a, k);
        sq += u[k] * u[k];
      }
      const double n = std::sqrt(sq);
      out.norm[a * b + c] = n;
      if (n <= 1e-12) {
        std::fill(u, u + d, 0.0);
        continue;
      }
      for (std::size_t k = 0; k < d; ++k) u[k] /= n;
    }
  }
  return out;
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += a[k] * b[k];
  return s;
}

struct RkdTerms {
  double distance;
  double angle;
};

RkdTerms rkd_terms(const Matrix& s, const Matrix& t) {
  const std::size_t b = s.rows();
  const auto ds = pairwise_distances(s);
  const auto dt = pairwise_distances(t);
  double dist_loss = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      if (i == j) continue;
      const double sn = ds.mean > 0.0 ? ds.dist(i, j) / ds.mean : 0.0;
      const double tn = dt.mean > 0.0 ? dt.dist(i, j) / dt.mean : 0.0;
      dist_loss += huber(sn - tn);
    }
  dist_loss /= static_cast<double>(b * b);

  const auto us = unit_differences(s);
  const auto ut = unit_differences(t);
  double angle_loss = 0.0;
  for (std::size_t a = 0; a < b; ++a)
    for (std::size_t p = 0; p < b; ++p)
      for (std::size_t q = 0; q < b; ++q) {
        const double as = dot(&us.unit[(a * b + p) * s.cols()], &us.unit[(a * b + q) * s.cols()], s.cols());
        const double at = dot(&ut.unit[(a * b + p) * t.cols()], &ut.unit[(a * b + q) * t.cols()], t.cols());
        angle_loss += huber(as - at);
      }
  angle_loss /= static_cast<double>(b * b * b);
  return {dist_loss, angle_loss};
}

Matrix rkd_student_grad(const Matrix& s, const Matrix& t, double g_out) {
  const std::size_t b = s.rows();
  const std::size_t d = s.cols();
  Matrix grad(b, d);

  // Distance term.
  const auto ds = pairwise_distances(s);
  const auto dt = pairwise_distances(t);
  if (ds.mean > 0.0) {
    Matrix h(b, b);
    double weighted = 0.0;
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < b; ++j) {
        if (i == j) continue;
        const double tn = dt.mean > 0.0 ? dt.dist(i, j) / dt.mean : 0.0;
        h(i, j) = g_out * huber_grad(ds.dist(i, j) / ds.mean - tn) / static_cast<double>(b * b);
        weighted += h(i, j) * ds.dist(i, j);
      }
    const double pairs = static_cast<double>(b * (b - 1));
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < b; ++j) {
        if (i == j || ds.dist(i, j) <= 0.0) continue;
        const double dd = h(i, j) / ds.mean - weighted / (ds.mean * ds.mean * pairs);
        for (std::size_t k = 0; k < d; ++k) {
          const double v = dd * (s(i, k) - s(j, k)) / ds.dist(i, j);
          grad(i, k) += v;
          grad(j, k) -= v;
        }
      }
  }

  // Angle term, weighted 2:1 against the distance term.
  const auto us = unit_differences(s);
  const auto ut = unit_differences(t);
  const double w = 2.0 * g_out / static_cast<double>(b * b * b);
  std::vector<double> du(b * b * d, 0.0);
  for (std::size_t a = 0; a < b; ++a)
    for (std::size_t p = 0; p < b; ++p)
      for (std::size_t q = 0; q < b; ++q) {
        const double* up = &us.unit[(a * b + p) * d];
        const double* uq = &us.unit[(a * b + q) * d];
        const double as = dot(up, uq, d);
        const double at = dot(&ut.unit[(a * b + p) * t.cols()], &ut.unit[(a * b + q) * t.cols()], t.cols());
        const double g = w * huber_grad(as - at);
        double* dup = &du[(a * b + p) * d];
        double* duq = &du[(a * b + q) * d];
        for (std::size_t k = 0; k < d; ++k) {
          dup[k] += g * uq[k];
          duq[k] += g * up[k];
        }
      }
  for (std::size_t a = 0; a < b; ++a)
    for (std::size_t c = 0; c < b; ++c) {
      const double n = us.norm[a * b + c];
      if (n <= 1e-12) continue;
      const double* u = &us.unit[(a * b + c) * d];
      const double* g = &du[(a * b + c) * d];
      const double proj = dot(u, g, d);
      for (std::size_t k = 0; k < d; ++k) {
        const double dv = (g[k] - u[k] * proj) / n;
        grad(c, k) += dv;
        grad(a, k) -= dv;
      }
    }
  return grad;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.push(aft::matmul(a.value(), b.value()), {a.id, b.id},
                [a = a.id, b = b.id](const Tape& tp, const Matrix& g, GradSink& sink) {
                  sink.accumulate(a, aft::matmul(g, aft::transpose(tp.value(b))));
                  sink.accumulate(b, aft::matmul(aft::transpose(tp.value(a)), g));
                });
}

Var transpose(Var a) {
  return a.tape->push(aft::transpose(a.value()), {a.id},
                      [a = a.id](const Tape&, const Matrix& g, GradSink& sink) {
                        sink.accumulate(a, aft::transpose(g));
                      });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.push(aft::add(a.value(), b.value()), {a.id, b.id},
                [a = a.id, b = b.id](const Tape&, const Matrix& g, GradSink& sink) {
                  sink.accumulate(a, g);
                  sink.accumulate(b, g);
                });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.push(aft::sub(a.value(), b.value()), {a.id, b.id},
                [a = a.id, b = b.id](const Tape&, const Matrix& g, GradSink& sink) {
                  sink.accumulate(a, g);
                  sink.accumulate(b, aft::scale(g, -1.0));
                });
}

Var scale(Var a, double factor) {
  return a.tape->push(aft::scale(a.value(), factor), {a.id},
                      [a = a.id, factor](const Tape&, const Matrix& g, GradSink& sink) {
                        sink.accumulate(a, aft::scale(g, factor));
                      });
}

Var add_row_vector(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  require_row_vector(av, bv, "add_row_vector");
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv(0, j);
  return t.push(std::move(out), {a.id, b.id},
                [a = a.id, b = b.id](const Tape&, const Matrix& g, GradSink& sink) {
                  sink.accumulate(a, g);
                  Matrix gb(1, g.cols());
                  for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
                  sink.accumulate(b, gb);
                });
}

Var mul_columns(Var a, Var w) {
  Tape& t = tape_of(a, w);
  require_row_vector(a.value(), w.value(), "mul_columns");
  return t.push(aft::scale_columns(a.value(), w.value().data()), {a.id, w.id},
                [a = a.id, w = w.id](const Tape& tp, const Matrix& g, GradSink& sink) {
                  const Matrix& av = tp.value(a);
                  const Matrix& wv = tp.value(w);
                  sink.accumulate(a, aft::scale_columns(g, wv.data()));
                  Matrix gw(1, av.cols());
                  for (std::size_t i = 0; i < av.rows(); ++i)
                    for (std::size_t j = 0; j < av.cols(); ++j) gw(0, j) += g(i, j) * av(i, j);
                  sink.accumulate(w, gw);
                });
}

namespace {

template <typename F, typename D>
Var elementwise(Var a, F f, D derivative_from_input_and_output) {
  Matrix out = a.value();
  for (double& v : out.data()) v = f(v);
  const std::size_t out_id = a.tape->size();
  return a.tape->push(std::move(out), {a.id},
                      [a = a.id, out_id, derivative_from_input_and_output](
                          const Tape& tp, const Matrix& g, GradSink& sink) {
                        const Matrix& x = tp.value(a);
                        const Matrix& y = tp.value(out_id);
                        Matrix gx = g;
                        auto gd = gx.data();
                        for (std::size_t i = 0; i < gd.size(); ++i)
                          gd[i] *= derivative_from_input_and_output(x.data()[i], y.data()[i]);
                        sink.accumulate(a, gx);
                      });
}

}  // namespace

Var tanh(Var a) {
  return elementwise(a, [](double x) { return std::tanh(x); },
                     [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return elementwise(a, [](double x) { return x > 0.0 ? x : 0.0; },
                     [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return elementwise(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                     [](double, double y) { return y * (1.0 - y); });
}

Var center_rows(Var a) {
  return a.tape->push(aft::center_rows(a.value()), {a.id},
                      [a = a.id](const Tape&, const Matrix& g, GradSink& sink) {
                        sink.accumulate(a, aft::center_rows(g));
                      });
}

Var normalize_rows(Var a, double eps) {
  const std::size_t out_id = a.tape->size();
  return a.tape->push(aft::normalize_rows(a.value(), eps), {a.id},
                      [a = a.id, out_id, eps](const Tape& tp, const Matrix& g, GradSink& sink) {
                        const Matrix& x = tp.value(a);
                        const Matrix& y = tp.value(out_id);
                        Matrix gx(x.rows(), x.cols());
                        for (std::size_t i = 0; i < x.rows(); ++i) {
                          double sq = 0.0;
                          for (double v : x.row(i)) sq += v * v;
                          const double norm = std::sqrt(sq);
                          if (norm <= eps) continue;
                          double proj = 0.0;
                          for (std::size_t j = 0; j < x.cols(); ++j) proj += y(i, j) * g(i, j);
                          for (std::size_t j = 0; j < x.cols(); ++j)
                            gx(i, j) = (g(i, j) - y(i, j) * proj) / norm;
                        }
                        sink.accumulate(a, gx);
                      });
}

Var gram(Var a) {
  return a.tape->push(aft::gram(a.value()), {a.id},
                      [a = a.id](const Tape& tp, const Matrix& g, GradSink& sink) {
                        sink.accumulate(a, aft::matmul(aft::add(g, aft::transpose(g)), tp.value(a)));
                      });
}

Var rbf_gram(Var a) {
  const std::size_t out_id = a.tape->size();
  return a.tape->push(aft::rbf_gram(a.value()), {a.id},
                      [a = a.id, out_id](const Tape& tp, const Matrix& g, GradSink& sink) {
                        const Matrix& x = tp.value(a);
                        const Matrix& k = tp.value(out_id);
                        Matrix gx(x.rows(), x.cols());
                        for (std::size_t i = 0; i < x.rows(); ++i)
                          for (std::size_t j = 0; j < x.rows(); ++j) {
                            if (i == j) continue;
                            const double c = -2.0 * k(i, j) * (g(i, j) + g(j, i));
                            for (std::size_t d = 0; d < x.cols(); ++d)
                              gx(i, d) += c * (x(i, d) - x(j, d));
                          }
                        sink.accumulate(a, gx);
                      });
}

Var frob_distance(Var a, Var b, double scale, double eps) {
  Tape& t = tape_of(a, b);
  const double value = aft::frob_distance(a.value(), b.value(), scale, eps);
  return t.push(Matrix(1, 1, value), {a.id, b.id},
                [a = a.id, b = b.id, scale, value](const Tape& tp, const Matrix& g, GradSink& sink) {
                  const double root = value * scale;
                  Matrix diff = aft::sub(tp.value(a), tp.value(b));
                  Matrix ga = aft::scale(diff, g(0, 0) / (scale * root));
                  sink.accumulate(a, ga);
                  sink.accumulate(b, aft::scale(ga, -1.0));
                });
}

Var sum_squares(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v * v;
  return a.tape->push(Matrix(1, 1, s), {a.id},
                      [a = a.id](const Tape& tp, const Matrix& g, GradSink& sink) {
                        sink.accumulate(a, aft::scale(tp.value(a), 2.0 * g(0, 0)));
                      });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape->push(Matrix(1, 1, s), {a.id},
                      [a = a.id](const Tape& tp, const Matrix& g, GradSink& sink) {
                        const Matrix& x = tp.value(a);
                        sink.accumulate(a, Matrix(x.rows(), x.cols(), g(0, 0)));
                      });
}

Var softmax_cross_entropy(Var logits, std::span<const std::uint32_t> labels) {
  const Matrix& z = logits.value();
  if (labels.size() != z.rows()) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + z.shape_string());
  }
  Matrix probs(z.rows(), z.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    if (labels[i] >= z.cols()) throw InputError("softmax_cross_entropy: label out of range");
    auto row = z.row(i);
    const double m = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (std::size_t j = 0; j < z.cols(); ++j) {
      probs(i, j) = std::exp(row[j] - m);
      denom += probs(i, j);
    }
    for (std::size_t j = 0; j < z.cols(); ++j) probs(i, j) /= denom;
    loss += m + std::log(denom) - row[labels[i]];
  }
  const double b = static_cast<double>(z.rows());
  std::vector<std::uint32_t> y(labels.begin(), labels.end());
  return logits.tape->push(Matrix(1, 1, loss / b), {logits.id},
                           [id = logits.id, probs = std::move(probs), y = std::move(y), b](
                               const Tape&, const Matrix& g, GradSink& sink) {
                             Matrix gz = probs;
                             for (std::size_t i = 0; i < gz.rows(); ++i) gz(i, y[i]) -= 1.0;
                             sink.accumulate(id, aft::scale(gz, g(0, 0) / b));
                           });
}

Var rkd_loss(Var student, Var teacher) {
  Tape& t = tape_of(student, teacher);
  const Matrix& s = student.value();
  const Matrix& tv = teacher.value();
  if (s.rows() != tv.rows()) {
    throw DimensionError("rkd_loss: batch sizes differ, " + s.shape_string() + " vs " +
                         tv.shape_string());
  }
  if (s.rows() < 3) throw BatchSizeError("rkd_loss: needs at least 3 examples per batch");
  const RkdTerms terms = rkd_terms(s, tv);
  return t.push(Matrix(1, 1, terms.distance + 2.0 * terms.angle), {student.id, teacher.id},
                [s = student.id, te = teacher.id](const Tape& tp, const Matrix& g, GradSink& sink) {
                  sink.accumulate(s, rkd_student_grad(tp.value(s), tp.value(te), g(0, 0)));
                });
}

}  // namespace aft::ad
