#include "frozenseg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "frozenseg/errors.hpp"
#include "frozenseg/kernels.hpp"

namespace frozenseg {

Parameter::Parameter(std::string n, Matrix v, bool t)
    : name(std::move(n)), value(std::move(v)), gradient(value.rows(), value.cols()), trainable(t) {}

void Parameter::zero_grad() {
  if (!gradient.same_shape(value)) gradient = Matrix(value.rows(), value.cols());
  gradient.fill(0.0);
}

const Matrix& Var::value() const {
  if (tape_ == nullptr) throw GraphError("use of an unbound Var");
  return tape_->value(id_);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = p.trainable;
  Var v = push(std::move(n));
  param_nodes_.emplace(&p, v.id());
  return v;
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (in.tape() != this) throw GraphError("op input recorded on a different tape");
    n.inputs.push_back(in.id());
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Matrix& Tape::grad_accumulator(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw GraphError("backward: loss belongs to a different tape");
  const std::size_t root = loss.id();
  if (nodes_[root].value.rows() != 1 || nodes_[root].value.cols() != 1) {
    throw GraphError("backward: loss must be a 1x1 node, got " + shape_string(nodes_[root].value));
  }
  for (auto& n : nodes_) n.grad = Matrix();
  nodes_[root].grad = Matrix(1, 1, 1.0);

  for (std::size_t id = root + 1; id-- > 0;) {
    Node& n = nodes_[id];
    for (std::size_t in : n.inputs) {
      if (in >= id) throw GraphError("backward: node " + std::to_string(id) + " depends on later node " +
                                     std::to_string(in) + " (cycle)");
    }
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, id);
  }
  for (auto& n : nodes_) {
    if (n.param == nullptr || !n.param->trainable || n.grad.empty()) continue;
    Parameter& p = *n.param;
    if (!p.gradient.same_shape(p.value)) p.gradient = Matrix(p.value.rows(), p.value.cols());
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.gradient.data()[i] += n.grad.data()[i];
  }
}

namespace ad {
namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw GraphError("op applied to an unbound Var");
  return *a.tape();
}

void same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw GraphError("op inputs recorded on different tapes");
}

}  // namespace

Var matmul(Var a, Var b) {
  same_tape(a, b);
  Tape& t = tape_of(a);
  Matrix out = frozenseg::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia))
      kernels::parallel::gemm(g, false, tp.value(ib), true, tp.grad_accumulator(ia), true);
    if (tp.requires_grad(ib))
      kernels::parallel::gemm(tp.value(ia), true, g, false, tp.grad_accumulator(ib), true);
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  return t.record(a.value().transposed(), {a}, [ia](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix& ga = tp.grad_accumulator(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(c, r) += g(r, c);
  });
}

namespace {

Var add_scaled(Var a, Var b, Real sign) {
  same_tape(a, b);
  require_same_shape(a.value(), b.value(), sign > 0 ? "add" : "sub");
  Tape& t = tape_of(a);
  Matrix out = a.value();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += sign * bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib, sign](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).data();
    if (tp.requires_grad(ia)) {
      auto ga = tp.grad_accumulator(ia).data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(ib)) {
      auto gb = tp.grad_accumulator(ib).data();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign * g[i];
    }
  });
}

}  // namespace

Var add(Var a, Var b) { return add_scaled(a, b, 1.0); }
Var sub(Var a, Var b) { return add_scaled(a, b, -1.0); }

Var hadamard(Var a, Var b) {
  same_tape(a, b);
  require_same_shape(a.value(), b.value(), "hadamard");
  Tape& t = tape_of(a);
  Matrix out = a.value();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).data();
    if (tp.requires_grad(ia)) {
      auto ga = tp.grad_accumulator(ia).data();
      const auto bv = tp.value(ib).data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(ib)) {
      auto gb = tp.grad_accumulator(ib).data();
      const auto av = tp.value(ia).data();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, Real s) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  for (auto& v : out.data()) v *= s;
  const std::size_t ia = a.id();
  return t.record(std::move(out), {a}, [ia, s](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).data();
    auto ga = tp.grad_accumulator(ia).data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var add_row(Var a, Var row) {
  same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: " + shape_string(a.value()) + " + " + shape_string(row.value()));
  }
  Tape& t = tape_of(a);
  Matrix out = a.value();
  const auto rv = row.value().row(0);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto o = out.row(r);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] += rv[c];
  }
  const std::size_t ia = a.id(), ir = row.id();
  return t.record(std::move(out), {a, row}, [ia, ir](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) {
      auto ga = tp.grad_accumulator(ia).data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g.data()[i];
    }
    if (tp.requires_grad(ir)) {
      auto gr = tp.grad_accumulator(ir).row(0);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto gg = g.row(r);
        for (std::size_t c = 0; c < gg.size(); ++c) gr[c] += gg[c];
      }
    }
  });
}

Var repeat_row(Var row, std::size_t n) {
  if (row.rows() != 1) throw DimensionError("repeat_row: expected a single row");
  Tape& t = tape_of(row);
  Matrix out(n, row.cols());
  for (std::size_t r = 0; r < n; ++r) std::copy_n(row.value().data().begin(), row.cols(), out.row(r).begin());
  const std::size_t ir = row.id();
  return t.record(std::move(out), {row}, [ir](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    auto gr = tp.grad_accumulator(ir).row(0);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto gg = g.row(r);
      for (std::size_t c = 0; c < gg.size(); ++c) gr[c] += gg[c];
    }
  });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  const std::size_t ia = a.id();
  return t.record(std::move(out), {a}, [ia](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).data();
    const auto x = tp.value(ia).data();
    auto ga = tp.grad_accumulator(ia).data();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) ga[i] += g[i];
  });
}

namespace {
inline Real sigmoid_scalar(Real x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const Real e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  for (auto& v : out.data()) v = sigmoid_scalar(v);
  const std::size_t ia = a.id();
  return t.record(std::move(out), {a}, [ia](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).data();
    const auto y = tp.value(self).data();
    auto ga = tp.grad_accumulator(ia).data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

namespace {

// Shared backward for softmax-like nodes: dx = (g - <g, y>) * y * scale.
void softmax_backward(Tape& tp, std::size_t self, std::size_t input, Real scale) {
  const Matrix& g = tp.grad(self);
  const Matrix& y = tp.value(self);
  Matrix& gx = tp.grad_accumulator(input);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto yr = y.row(r);
    auto gr = g.row(r);
    Real dot = 0.0;
    for (std::size_t c = 0; c < yr.size(); ++c) dot += gr[c] * yr[c];
    auto gxr = gx.row(r);
    for (std::size_t c = 0; c < yr.size(); ++c) gxr[c] += (gr[c] - dot) * yr[c] * scale;
  }
}

}  // namespace

Var softmax_rows(Var a, Real temperature) {
  Tape& t = tape_of(a);
  Matrix out = frozenseg::softmax_rows(a.value(), temperature);
  const std::size_t ia = a.id();
  const Real inv_t = 1.0 / temperature;
  return t.record(std::move(out), {a}, [ia, inv_t](Tape& tp, std::size_t self) {
    softmax_backward(tp, self, ia, inv_t);
  });
}

Var masked_softmax_rows(Var a, const Matrix& allow, Real scale) {
  require_same_shape(a.value(), allow, "masked_softmax_rows");
  require_finite(a.value(), "masked_softmax_rows");
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto al = allow.row(r);
    const bool any = std::any_of(al.begin(), al.end(), [](Real v) { return v != 0.0; });
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t c = 0; c < x.cols(); ++c)
      if (!any || al[c] != 0.0) mx = std::max(mx, x(r, c) * scale);
    Real s = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (any && al[c] == 0.0) continue;
      out(r, c) = std::exp(x(r, c) * scale - mx);
      s += out(r, c);
    }
    for (auto& v : out.row(r)) v /= s;
  }
  const std::size_t ia = a.id();
  return t.record(std::move(out), {a}, [ia, scale](Tape& tp, std::size_t self) {
    softmax_backward(tp, self, ia, scale);
  });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, Real eps) {
  same_tape(x, gamma);
  same_tape(x, beta);
  const std::size_t n = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n) {
    throw DimensionError("layer_norm_rows: affine parameters must be 1x" + std::to_string(n));
  }
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), n);
  std::vector<Real> inv_std(xv.rows());
  Matrix out(xv.rows(), n);
  const auto gv = gamma.value().row(0);
  const auto bv = beta.value().row(0);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto xr = xv.row(r);
    Real mu = 0.0;
    for (Real v : xr) mu += v;
    mu /= static_cast<Real>(n);
    Real var = 0.0;
    for (Real v : xr) var += (v - mu) * (v - mu);
    var /= static_cast<Real>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat(r, c) = (xr[c] - mu) * inv_std[r];
      out(r, c) = xhat(r, c) * gv[c] + bv[c];
    }
  }
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return t.record(std::move(out), {x, gamma, beta},
                  [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                      Tape& tp, std::size_t self) {
                    const Matrix& g = tp.grad(self);
                    const std::size_t n = g.cols();
                    const auto gv = tp.value(ig).row(0);
                    if (tp.requires_grad(ig) || tp.requires_grad(ib)) {
                      Matrix& gg = tp.grad_accumulator(ig);
                      Matrix& gb = tp.grad_accumulator(ib);
                      for (std::size_t r = 0; r < g.rows(); ++r)
                        for (std::size_t c = 0; c < n; ++c) {
                          gg(0, c) += g(r, c) * xhat(r, c);
                          gb(0, c) += g(r, c);
                        }
                    }
                    if (!tp.requires_grad(ix)) return;
                    Matrix& gx = tp.grad_accumulator(ix);
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                      Real mean_d = 0.0, mean_dx = 0.0;
                      for (std::size_t c = 0; c < n; ++c) {
                        const Real d = g(r, c) * gv[c];
                        mean_d += d;
                        mean_dx += d * xhat(r, c);
                      }
                      mean_d /= static_cast<Real>(n);
                      mean_dx /= static_cast<Real>(n);
                      for (std::size_t c = 0; c < n; ++c) {
                        const Real d = g(r, c) * gv[c];
                        gx(r, c) += inv_std[r] * (d - mean_d - xhat(r, c) * mean_dx);
                      }
                    }
                  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  if (start + count > a.cols()) throw DimensionError("slice_cols: range past end");
  Tape& t = tape_of(a);
  Matrix out(a.rows(), count);
  for (std::size_t r = 0; r < a.rows(); ++r)
    std::copy_n(a.value().row(r).begin() + static_cast<long>(start), count, out.row(r).begin());
  const std::size_t ia = a.id();
  return t.record(std::move(out), {a}, [ia, start](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix& ga = tp.grad_accumulator(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, start + c) += g(r, c);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Tape& t = tape_of(parts.front());
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    same_tape(parts.front(), p);
    if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p.value().row(r).begin(), p.cols(), out.row(r).begin() + static_cast<long>(off));
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.cols();
  }
  return t.record(std::move(out), parts, [ids, offsets](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.requires_grad(ids[k])) continue;
      Matrix& gp = tp.grad_accumulator(ids[k]);
      for (std::size_t r = 0; r < gp.rows(); ++r)
        for (std::size_t c = 0; c < gp.cols(); ++c) gp(r, c) += g(r, offsets[k] + c);
    }
  });
}

Var l2_normalize_rows(Var a, Real eps) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  std::vector<Real> norms(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    Real s = 0.0;
    for (Real v : x.row(r)) s += v * v;
    norms[r] = std::max(std::sqrt(s), eps);
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(r, c) / norms[r];
  }
  const std::size_t ia = a.id();
  return t.record(std::move(out), {a}, [ia, eps, norms = std::move(norms)](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& y = tp.value(self);
    Matrix& ga = tp.grad_accumulator(ia);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      Real dot = 0.0;
      if (norms[r] > eps)
        for (std::size_t c = 0; c < g.cols(); ++c) dot += y(r, c) * g(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += (g(r, c) - y(r, c) * dot) / norms[r];
    }
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  Real s = 0.0;
  for (Real v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return t.record(Matrix(1, 1, s), {a}, [ia](Tape& tp, std::size_t self) {
    const Real g = tp.grad(self)(0, 0);
    for (auto& v : tp.grad_accumulator(ia).data()) v += g;
  });
}

Var mean(Var a) {
  if (a.value().size() == 0) throw DimensionError("mean of an empty matrix");
  return scale(sum(a), 1.0 / static_cast<Real>(a.value().size()));
}

Var cross_entropy_rows(Var logits, const std::vector<int>& targets, const std::vector<Real>& weights) {
  const Matrix& x = logits.value();
  if (targets.size() != x.rows() || weights.size() != x.rows()) {
    throw DimensionError("cross_entropy_rows: need one target and weight per row");
  }
  Real wsum = 0.0;
  for (Real w : weights) wsum += w;
  if (!(wsum > 0.0)) throw NumericError("cross_entropy_rows: weights must have a positive sum");
  Tape& t = tape_of(logits);
  Matrix probs = frozenseg::softmax_rows(x, 1.0);
  Real loss = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const int tr = targets[r];
    if (tr < 0 || static_cast<std::size_t>(tr) >= x.cols()) throw DimensionError("cross_entropy_rows: target out of range");
    auto xr = x.row(r);
    const Real mx = *std::max_element(xr.begin(), xr.end());
    Real s = 0.0;
    for (Real v : xr) s += std::exp(v - mx);
    loss += weights[r] * (mx + std::log(s) - xr[static_cast<std::size_t>(tr)]);
  }
  loss /= wsum;
  const std::size_t ia = logits.id();
  return t.record(Matrix(1, 1, loss), {logits},
                  [ia, targets, weights, wsum, probs = std::move(probs)](Tape& tp, std::size_t self) {
                    const Real g = tp.grad(self)(0, 0);
                    Matrix& ga = tp.grad_accumulator(ia);
                    for (std::size_t r = 0; r < probs.rows(); ++r) {
                      const Real w = g * weights[r] / wsum;
                      for (std::size_t c = 0; c < probs.cols(); ++c) {
                        const Real onehot = static_cast<int>(c) == targets[r] ? 1.0 : 0.0;
                        ga(r, c) += w * (probs(r, c) - onehot);
                      }
                    }
                  });
}

Var bce_with_logits(Var logits, const Matrix& targets) {
  require_same_shape(logits.value(), targets, "bce_with_logits");
  if (targets.size() == 0) throw DimensionError("bce_with_logits: empty input");
  Tape& t = tape_of(logits);
  const auto x = logits.value().data();
  const auto y = targets.data();
  Real loss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    loss += std::max(x[i], 0.0) - x[i] * y[i] + std::log1p(std::exp(-std::abs(x[i])));
  const Real n = static_cast<Real>(x.size());
  loss /= n;
  const std::size_t ia = logits.id();
  return t.record(Matrix(1, 1, loss), {logits}, [ia, targets, n](Tape& tp, std::size_t self) {
    const Real g = tp.grad(self)(0, 0) / n;
    const auto x = tp.value(ia).data();
    auto ga = tp.grad_accumulator(ia).data();
    const auto y = targets.data();
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g * (sigmoid_scalar(x[i]) - y[i]);
  });
}

Var dice_loss(Var logits, const Matrix& targets) {
  require_same_shape(logits.value(), targets, "dice_loss");
  if (targets.rows() == 0) throw DimensionError("dice_loss: empty input");
  Tape& t = tape_of(logits);
  const Matrix& x = logits.value();
  Matrix s(x.rows(), x.cols());
  std::vector<Real> num(x.rows()), den(x.rows());
  Real loss = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    Real st = 0.0, ss = 0.0, tt = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      s(r, c) = sigmoid_scalar(x(r, c));
      st += s(r, c) * targets(r, c);
      ss += s(r, c);
      tt += targets(r, c);
    }
    num[r] = 2.0 * st + 1.0;
    den[r] = ss + tt + 1.0;
    loss += 1.0 - num[r] / den[r];
  }
  const Real rows = static_cast<Real>(x.rows());
  loss /= rows;
  const std::size_t ia = logits.id();
  return t.record(Matrix(1, 1, loss), {logits},
                  [ia, targets, rows, s = std::move(s), num = std::move(num), den = std::move(den)](
                      Tape& tp, std::size_t self) {
                    const Real g = tp.grad(self)(0, 0) / rows;
                    Matrix& ga = tp.grad_accumulator(ia);
                    for (std::size_t r = 0; r < s.rows(); ++r) {
                      const Real d2 = den[r] * den[r];
                      for (std::size_t c = 0; c < s.cols(); ++c) {
                        const Real dl_ds = -(2.0 * targets(r, c) * den[r] - num[r]) / d2;
                        ga(r, c) += g * dl_ds * s(r, c) * (1.0 - s(r, c));
                      }
                    }
                  });
}

}  // namespace ad

Matrix finite_difference_gradient(const std::function<Real(const Parameter&)>& f, Parameter& p, Real h) {
  if (!(h > 0.0)) throw NumericError("finite_difference_gradient: step must be positive");
  Matrix grad(p.value.rows(), p.value.cols());
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const Real orig = p.value.data()[i];
    p.value.data()[i] = orig + h;
    const Real plus = f(p);
    p.value.data()[i] = orig - h;
    const Real minus = f(p);
    p.value.data()[i] = orig;
    grad.data()[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

}  // namespace frozenseg
