#pragma once

// Tape-based reverse-mode differentiation over a small fixed op set.
//
// A Tape records every operation as a node holding its forward value and a
// closure that pushes the node's output gradient into its inputs. Nodes are
// appended in evaluation order, so the tape is topologically sorted and
// backward() is a single reverse sweep.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <unordered_map>
#include <vector>

#include "frozenseg/matrix.hpp"

namespace frozenseg {

/// A named weight tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix gradient;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string name, Matrix value, bool trainable = true);

  void zero_grad();
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf bound to a Parameter. Repeated calls for the same parameter return
  /// the same node; backward() accumulates into parameter.gradient when the
  /// parameter is trainable.
  Var parameter(Parameter& p);

  /// Appends an op node. Throws GraphError if an input belongs to another tape.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Matrix value, const std::vector<Var>& inputs, BackwardFn backward);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient of the loss w.r.t. node `id`; empty until backward() reaches it.
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  /// Zero-initialised gradient buffer for an input node, for use inside
  /// backward closures.
  Matrix& grad_accumulator(std::size_t id);

  /// Reverse sweep from a 1x1 loss node. Throws GraphError for a non-scalar
  /// loss, a foreign node, or a node whose inputs do not precede it.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

/// Differentiable ops. All shapes are checked and mismatches raise DimensionError.
namespace ad {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, Real s);
/// a (n x c) plus a 1 x c row broadcast to every row.
Var add_row(Var a, Var row);
/// Stacks a 1 x c row n times.
Var repeat_row(Var row, std::size_t n);
Var relu(Var a);
Var sigmoid(Var a);
Var softmax_rows(Var a, Real temperature = 1.0);
/// Softmax of a * scale restricted to entries where allow(r, c) != 0; other
/// entries get exactly zero weight. A row with no allowed entry attends to
/// every entry.
Var masked_softmax_rows(Var a, const Matrix& allow, Real scale = 1.0);
Var layer_norm_rows(Var x, Var gamma, Var beta, Real eps = 1e-5);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var concat_cols(const std::vector<Var>& parts);
/// Rows scaled to unit L2 norm; rows with norm below eps are divided by eps.
Var l2_normalize_rows(Var a, Real eps = 1e-12);
Var sum(Var a);
Var mean(Var a);

/// Weighted mean over rows of -log softmax(logits)[target]. Weights must have
/// a positive sum.
Var cross_entropy_rows(Var logits, const std::vector<int>& targets,
                       const std::vector<Real>& weights);
/// Mean binary cross-entropy of sigmoid(logits) against soft targets in [0, 1].
Var bce_with_logits(Var logits, const Matrix& targets);
/// Mean over rows of 1 - (2 sum(s*t) + 1) / (sum(s) + sum(t) + 1) with s = sigmoid(logits).
Var dice_loss(Var logits, const Matrix& targets);

}  // namespace ad

/// Central-difference estimate of d f / d p.value, element by element.
/// `f` is evaluated with p.value perturbed in place; p.value is restored.
Matrix finite_difference_gradient(const std::function<Real(const Parameter&)>& f, Parameter& p,
                                  Real h = 1e-4);

}  // namespace frozenseg
