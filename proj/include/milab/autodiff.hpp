#pragma once

// Reverse-mode automatic differentiation over dense double tensors.
//
// A Tape records every primitive op in execution order; node ids are
// therefore a topological order. backward() replays the recorded rules in
// reverse and accumulates into leaf gradients, so calling it twice without
// zero_grad() doubles them.
//
// One tape per thread. Parameters are copied onto a tape as leaves, which
// keeps shared model tensors read-only while many bags are differentiated
// concurrently; gradients are read back from the tape and reduced by the
// caller.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "milab/tensor.hpp"

namespace milab::ad {

class Tape;

class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// What a backward rule sees. in_grads[k] is null when input k does not
// require a gradient.
struct BackwardContext {
  std::span<const Tensor* const> inputs;
  const Tensor& output;
  std::span<const double> out_grad;
  std::span<std::vector<double>* const> in_grads;
};

using BackwardRule = std::function<void(const BackwardContext&)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf whose gradient accumulates on the tape (see grad()).
  Var variable(Tensor value);
  // Leaf that additionally accumulates into source.grad() on backward().
  // source must outlive the tape.
  Var watch(Tensor& source);

  // Appends an op node. Used by the primitive ops below.
  Var record(Tensor value, std::vector<Var> inputs, BackwardRule rule);

  void backward(Var loss);

  // Accumulated gradient of a leaf; all zeros if backward() never reached it.
  const std::vector<double>& grad(Var leaf) const;
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;

  struct Node {
    Tensor value;
    bool requires_grad = false;
    bool leaf = false;
    Tensor* watched = nullptr;
    std::vector<std::size_t> inputs;
    BackwardRule rule;
    std::vector<double> leaf_grad;
  };

  Var push_leaf(Tensor value, bool requires_grad, Tensor* watched);
  const Node& node(Var v) const;

  // deque keeps node addresses stable as the tape grows.
  std::deque<Node> nodes_;
};

// Primitive ops. All inputs must live on the same tape.
Var matmul(Var a, Var b);
Var transpose(Var a);
// Same shape, or one operand with a single element (scalar broadcast).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
// x: N x H plus bias of H values added to every row.
Var add_bias(Var x, Var bias);
// x: N x D with row i multiplied by w[i]; w holds N values.
Var mul_rows(Var x, Var w);
Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
// Numerically stable softmax. Rank-1 input: axis must be 0. Rank-2 input:
// axis 0 normalises each column, axis 1 each row.
Var softmax(Var x, std::size_t axis);
// Rank-2 reduction to a rank-1 tensor; rank-1 reduction to shape {1}.
Var sum_axis(Var x, std::size_t axis);
Var sum(Var x);
Var reshape(Var x, Shape shape);
// -log softmax(logits)[label]; logits hold C values.
Var cross_entropy(Var logits, std::size_t label);

// Forward-only helpers used outside of tapes.
double sigmoid(double x);
std::vector<double> softmax(std::span<const double> x);

struct GradCheckReport {
  // Per input: ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2),
  // zero when both vanish.
  std::vector<double> rel_error;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = false;
};

using TapeFunction = std::function<Var(Tape&, std::span<const Var>)>;

// Central finite differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps)
// against reverse-mode gradients, for every element of every input.
GradCheckReport grad_check(const TapeFunction& fn,
                           std::span<const Tensor> inputs, double eps,
                           double tol);
GradCheckReport grad_check(const std::function<Var(Var)>& fn, const Tensor& x,
                           double eps, double tol);

}  // namespace milab::ad
