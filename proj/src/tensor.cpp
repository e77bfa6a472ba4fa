#include "postfault/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "postfault/error.hpp"

namespace postfault {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + " expects a matrix, got shape " +
                         shape_string(t.shape()));
  }
}

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string(what) + " produced a non-finite value");
}

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw ContractError("variable is not attached to a tape");
  return *a.tape;
}

Tape& common_tape(Var a, Var b) {
  Tape& t = tape_of(a);
  if (b.tape != a.tape) throw ContractError("operands live on different tapes");
  return t;
}

// Shape of a binary elementwise result, or throws.
const Shape& binary_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() == b.shape()) return a.shape();
  if (a.is_scalar() && b.is_scalar()) return a.rank() >= b.rank() ? a.shape() : b.shape();
  if (b.is_scalar()) return a.shape();
  if (a.is_scalar()) return b.shape();
  throw DimensionError(std::string(what) + ": incompatible shapes " + shape_string(a.shape()) +
                       " and " + shape_string(b.shape()));
}

// Reduce a gradient shaped like the result back onto an operand of shape `target`.
Tensor unbroadcast(const Tensor& g, const Tensor& operand) {
  if (g.shape() == operand.shape()) return g;
  double s = 0.0;
  for (double v : g.data()) s += v;
  return Tensor(operand.shape(), s);
}

void accumulate(Tensor& into, const Tensor& g) {
  if (into.size() == 0) {
    into = g;
    return;
  }
  auto dst = into.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor extents must be positive");
  }
  data_.assign(product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor extents must be positive");
  }
  if (product(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  if (r == 0) throw DimensionError("empty matrix literal");
  const std::size_t c = rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::column(std::span<const double> values) {
  return Tensor({values.size(), 1}, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::row(std::span<const double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

std::size_t Tensor::rows() const noexcept { return shape_.size() < 2 ? 1 : shape_[0]; }

std::size_t Tensor::cols() const noexcept {
  if (shape_.empty()) return data_.size();
  if (shape_.size() == 1) return shape_[0];
  return data_.size() / shape_[0];
}

double Tensor::item() const {
  if (!is_scalar()) throw ContractError("item() on non-scalar tensor " + shape_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " * " +
                         shape_string(b.shape()));
  }
  Tensor out({a.shape()[0], b.shape()[1]});
  MutMap(out.data().data(), static_cast<Eigen::Index>(out.rows()),
         static_cast<Eigen::Index>(out.cols())).noalias() = as_matrix(a) * as_matrix(b);
  return out;
}

const Tensor& Var::value() const { return tape_of(*this).value(*this); }
bool Var::tracked() const { return tape_of(*this).tracked(*this); }

Var Tape::push(Op op, Tensor value, std::size_t a, std::size_t b, bool tracked, double c0,
               double c1) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.c0 = c0;
  n.c1 = c1;
  n.tracked = tracked;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::leaf(std::string name, Tensor value) {
  if (leaves_.count(name)) throw ContractError("duplicate leaf name '" + name + "'");
  require_finite(value, name.c_str());
  Var v = push(Op::leaf, std::move(value), 0, 0, true);
  nodes_.back().name = name;
  leaves_.emplace(std::move(name), v.id);
  return v;
}

Var Tape::constant(Tensor value) { return push(Op::constant, std::move(value), 0, 0, false); }

Var matmul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  Tensor out = matmul(a.value(), b.value());
  require_finite(out, "matmul");
  return t.push(Tape::Op::matmul, std::move(out), a.id, b.id, a.tracked() || b.tracked());
}

Var elementwise(ElementwiseOp op, std::span<const Var> args) {
  const bool binary =
      op == ElementwiseOp::add || op == ElementwiseOp::sub || op == ElementwiseOp::mul;
  if (args.size() != (binary ? 2u : 1u)) throw ContractError("elementwise: wrong operand count");

  if (binary) {
    Var a = args[0], b = args[1];
    Tape& t = common_tape(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor out(binary_shape(av, bv, "elementwise"));
    const bool as = av.size() == 1 && bv.size() != 1;
    const bool bs = bv.size() == 1 && av.size() != 1;
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
      double x = av[as ? 0 : i];
      double y = bv[bs ? 0 : i];
      o[i] = op == ElementwiseOp::add ? x + y : op == ElementwiseOp::sub ? x - y : x * y;
    }
    require_finite(out, "elementwise");
    Tape::Op code = op == ElementwiseOp::add   ? Tape::Op::add
                    : op == ElementwiseOp::sub ? Tape::Op::sub
                                               : Tape::Op::mul;
    return t.push(code, std::move(out), a.id, b.id, a.tracked() || b.tracked());
  }

  Var a = args[0];
  Tape& t = tape_of(a);
  Tensor out = a.value();
  Tape::Op code{};
  const char* what = "";
  switch (op) {
    case ElementwiseOp::sin:
      for (double& v : out.data()) v = std::sin(v);
      code = Tape::Op::sin;
      what = "sin";
      break;
    case ElementwiseOp::exp:
      for (double& v : out.data()) v = std::exp(v);
      code = Tape::Op::exp;
      what = "exp";
      break;
    case ElementwiseOp::log:
      for (double& v : out.data()) v = std::log(v);
      code = Tape::Op::log;
      what = "log";
      break;
    case ElementwiseOp::square:
      for (double& v : out.data()) v = v * v;
      code = Tape::Op::square;
      what = "square";
      break;
    default:
      throw ContractError("elementwise: unknown op");
  }
  require_finite(out, what);
  return t.push(code, std::move(out), a.id, 0, a.tracked());
}

Var add(Var a, Var b) {
  Var args[] = {a, b};
  return elementwise(ElementwiseOp::add, args);
}
Var sub(Var a, Var b) {
  Var args[] = {a, b};
  return elementwise(ElementwiseOp::sub, args);
}
Var mul(Var a, Var b) {
  Var args[] = {a, b};
  return elementwise(ElementwiseOp::mul, args);
}
Var sin(Var a) { return elementwise(ElementwiseOp::sin, std::span<const Var>(&a, 1)); }
Var exp(Var a) { return elementwise(ElementwiseOp::exp, std::span<const Var>(&a, 1)); }
Var log(Var a) { return elementwise(ElementwiseOp::log, std::span<const Var>(&a, 1)); }
Var square(Var a) { return elementwise(ElementwiseOp::square, std::span<const Var>(&a, 1)); }

Var add_row(Var x, Var bias) {
  Tape& t = common_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_matrix(xv, "add_row");
  if (bv.size() != xv.cols()) {
    throw DimensionError("add_row: bias " + shape_string(bv.shape()) + " vs input " +
                         shape_string(xv.shape()));
  }
  Tensor out = xv;
  const std::size_t n = xv.cols();
  auto o = out.data();
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    for (std::size_t c = 0; c < n; ++c) o[r * n + c] += bv[c];
  }
  require_finite(out, "add_row");
  return t.push(Tape::Op::add_row, std::move(out), x.id, bias.id, x.tracked() || bias.tracked());
}

Var row_sum(Var x) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  require_matrix(xv, "row_sum");
  Tensor out({xv.rows(), 1});
  const std::size_t n = xv.cols();
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += xv[r * n + c];
    out[r] = s;
  }
  require_finite(out, "row_sum");
  return t.push(Tape::Op::row_sum, std::move(out), x.id, 0, x.tracked());
}

Var sum(Var x) {
  Tape& t = tape_of(x);
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  Tensor out = Tensor::scalar(s);
  require_finite(out, "sum");
  return t.push(Tape::Op::sum, std::move(out), x.id, 0, x.tracked());
}

Var mean(Var x) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.data()) s += v;
  Tensor out = Tensor::scalar(s / static_cast<double>(xv.size()));
  require_finite(out, "mean");
  return t.push(Tape::Op::mean, std::move(out), x.id, 0, x.tracked());
}

Var scale(Var x, double factor) {
  Tape& t = tape_of(x);
  Tensor out = x.value();
  for (double& v : out.data()) v *= factor;
  require_finite(out, "scale");
  return t.push(Tape::Op::scale, std::move(out), x.id, 0, x.tracked(), factor);
}

Var shift(Var x, double offset) {
  Tape& t = tape_of(x);
  Tensor out = x.value();
  for (double& v : out.data()) v += offset;
  require_finite(out, "shift");
  return t.push(Tape::Op::shift, std::move(out), x.id, 0, x.tracked(), offset);
}

Var clamp(Var x, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lo > hi");
  Tape& t = tape_of(x);
  Tensor out = x.value();
  for (double& v : out.data()) v = std::clamp(v, lo, hi);
  return t.push(Tape::Op::clamp, std::move(out), x.id, 0, x.tracked(), lo, hi);
}

void Tape::backprop(const Node& n, const Tensor& g, std::vector<Tensor>& grads) const {
  auto send = [&](std::size_t id, Tensor contrib) {
    if (!nodes_[id].tracked) return;
    accumulate(grads[id], contrib);
  };
  const Tensor& av = nodes_[n.a].value;

  switch (n.op) {
    case Op::leaf:
    case Op::constant:
      return;
    case Op::matmul: {
      const Tensor& bv = nodes_[n.b].value;
      if (nodes_[n.a].tracked) {
        Tensor ga(av.shape());
        MutMap(ga.data().data(), static_cast<Eigen::Index>(ga.rows()),
               static_cast<Eigen::Index>(ga.cols())).noalias() =
            as_matrix(g) * as_matrix(bv).transpose();
        send(n.a, std::move(ga));
      }
      if (nodes_[n.b].tracked) {
        Tensor gb(bv.shape());
        MutMap(gb.data().data(), static_cast<Eigen::Index>(gb.rows()),
               static_cast<Eigen::Index>(gb.cols())).noalias() =
            as_matrix(av).transpose() * as_matrix(g);
        send(n.b, std::move(gb));
      }
      return;
    }
    case Op::add:
    case Op::sub: {
      const Tensor& bv = nodes_[n.b].value;
      if (nodes_[n.a].tracked) send(n.a, unbroadcast(g, av));
      if (nodes_[n.b].tracked) {
        Tensor gb = unbroadcast(g, bv);
        if (n.op == Op::sub) {
          for (double& v : gb.data()) v = -v;
        }
        send(n.b, std::move(gb));
      }
      return;
    }
    case Op::mul: {
      const Tensor& bv = nodes_[n.b].value;
      const bool as = av.size() == 1 && bv.size() != 1;
      const bool bs = bv.size() == 1 && av.size() != 1;
      if (nodes_[n.a].tracked) {
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= bv[bs ? 0 : i];
        send(n.a, unbroadcast(ga, av));
      }
      if (nodes_[n.b].tracked) {
        Tensor gb = g;
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= av[as ? 0 : i];
        send(n.b, unbroadcast(gb, bv));
      }
      return;
    }
    case Op::sin: {
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= std::cos(av[i]);
      send(n.a, std::move(ga));
      return;
    }
    case Op::exp: {
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= n.value[i];
      send(n.a, std::move(ga));
      return;
    }
    case Op::log: {
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] /= av[i];
      send(n.a, std::move(ga));
      return;
    }
    case Op::square: {
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= 2.0 * av[i];
      send(n.a, std::move(ga));
      return;
    }
    case Op::add_row: {
      if (nodes_[n.a].tracked) send(n.a, g);
      if (nodes_[n.b].tracked) {
        const Tensor& bv = nodes_[n.b].value;
        Tensor gb(bv.shape());
        const std::size_t c = bv.size();
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t j = 0; j < c; ++j) gb[j] += g[r * c + j];
        }
        send(n.b, std::move(gb));
      }
      return;
    }
    case Op::row_sum: {
      Tensor ga(av.shape());
      const std::size_t c = av.cols();
      for (std::size_t r = 0; r < av.rows(); ++r) {
        for (std::size_t j = 0; j < c; ++j) ga[r * c + j] = g[r];
      }
      send(n.a, std::move(ga));
      return;
    }
    case Op::sum:
      send(n.a, Tensor(av.shape(), g[0]));
      return;
    case Op::mean:
      send(n.a, Tensor(av.shape(), g[0] / static_cast<double>(av.size())));
      return;
    case Op::scale: {
      Tensor ga = g;
      for (double& v : ga.data()) v *= n.c0;
      send(n.a, std::move(ga));
      return;
    }
    case Op::shift:
      send(n.a, g);
      return;
    case Op::clamp: {
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) {
        if (av[i] < n.c0 || av[i] > n.c1) ga[i] = 0.0;
      }
      send(n.a, std::move(ga));
      return;
    }
  }
}

Gradients Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("backward: loss is not on this tape");
  const Node& top = nodes_.at(loss.id);
  if (!top.value.is_scalar()) {
    throw ContractError("backward: loss must be scalar, got " + shape_string(top.value.shape()));
  }

  std::vector<Tensor> grads(loss.id + 1);
  if (top.tracked) grads[loss.id] = Tensor(top.value.shape(), 1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (grads[i].size() == 0) continue;
    backprop(nodes_[i], grads[i], grads);
  }

  Gradients out;
  for (const auto& [name, id] : leaves_) {
    if (id < grads.size() && grads[id].size() != 0) {
      out.emplace(name, std::move(grads[id]));
    } else {
      out.emplace(name, Tensor(nodes_[id].value.shape(), 0.0));
    }
  }
  return out;
}

}  // namespace postfault
