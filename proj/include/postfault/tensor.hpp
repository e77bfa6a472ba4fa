#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace postfault {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Dense row-major array of 64-bit reals.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor column(std::span<const double> values);
  static Tensor row(std::span<const double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rank() const noexcept { return shape_.size(); }
  bool is_scalar() const noexcept { return data_.size() == 1; }

  /// Leading extent; 1 for rank-0/1 tensors.
  std::size_t rows() const noexcept;
  /// Product of the trailing extents.
  std::size_t cols() const noexcept;

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }

  double item() const;
  bool all_finite() const noexcept;

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  bool tracked() const;
};

enum class ElementwiseOp { add, sub, mul, sin, exp, log, square };

/// Gradient of a scalar loss keyed by leaf name.
using Gradients = std::map<std::string, Tensor>;

/// Define-by-run record of primitive operations for reverse-mode differentiation.
///
/// Nodes are appended in creation order, which is a topological order of the
/// graph; backward() walks them once in reverse. A node is tracked when any of
/// its inputs is, and only tracked nodes receive gradients.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable leaf. Names must be unique on the tape.
  Var leaf(std::string name, Tensor value);
  /// Untracked input.
  Var constant(Tensor value);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool tracked(Var v) const { return nodes_.at(v.id).tracked; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// dLoss/dleaf for every leaf on the tape; leaves the loss does not reach get zeros.
  Gradients backward(Var loss);

 private:
  enum class Op : std::uint8_t {
    leaf,
    constant,
    matmul,
    add,
    sub,
    mul,
    sin,
    exp,
    log,
    square,
    add_row,
    row_sum,
    sum,
    mean,
    scale,
    shift,
    clamp,
  };

  struct Node {
    Op op = Op::constant;
    std::size_t a = 0;
    std::size_t b = 0;
    double c0 = 0.0;
    double c1 = 0.0;
    bool tracked = false;
    Tensor value;
    std::string name;
  };

  Var push(Op op, Tensor value, std::size_t a, std::size_t b, bool tracked, double c0 = 0.0,
           double c1 = 0.0);
  void backprop(const Node& node, const Tensor& g, std::vector<Tensor>& grads) const;

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> leaves_;

  friend Var matmul(Var, Var);
  friend Var elementwise(ElementwiseOp, std::span<const Var>);
  friend Var add_row(Var, Var);
  friend Var row_sum(Var);
  friend Var sum(Var);
  friend Var mean(Var);
  friend Var scale(Var, double);
  friend Var shift(Var, double);
  friend Var clamp(Var, double, double);
};

// Primitive operations. Binary elementwise ops accept equal shapes or a
// scalar operand on either side; nothing else broadcasts.

Var matmul(Var a, Var b);
Var elementwise(ElementwiseOp op, std::span<const Var> args);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var sin(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
/// x[batch×n] + bias[1×n] added to every row.
Var add_row(Var x, Var bias);
/// [batch×n] -> [batch×1]
Var row_sum(Var x);
Var sum(Var x);
Var mean(Var x);
Var scale(Var x, double factor);
Var shift(Var x, double offset);
/// Pointwise clamp to [lo, hi]; gradient is zero where the bound is active.
Var clamp(Var x, double lo, double hi);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// Value-level helpers with no tape.
Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace postfault
