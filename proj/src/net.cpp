#include "postfault/net.hpp"

#include <cmath>
#include <random>

#include "postfault/error.hpp"
#include "postfault/random.hpp"

namespace postfault {

namespace {

std::string key(std::string_view prefix, std::string_view layer, char wb) {
  std::string k(prefix);
  k += '.';
  k += layer;
  k += '.';
  k += wb;
  return k;
}

std::string z_name(std::size_t l) { return "z" + std::to_string(l); }

Tensor row_zeros(std::size_t n) { return Tensor({1, n}, 0.0); }

}  // namespace

void ModifiedMlpConfig::validate() const {
  if (input_dim < 1 || width < 1 || depth < 1 || output_dim < 1) {
    throw ConfigError("modified MLP dimensions must all be >= 1");
  }
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor w({fan_in, fan_out});
  for (double& v : w.data()) v = dist(rng);
  return w;
}

ModifiedMlpParams glorot_init(const ModifiedMlpConfig& config, std::uint64_t seed) {
  config.validate();
  const auto tag = stream_tag("glorot");
  std::uint64_t layer = 0;
  auto next = [&](std::size_t in, std::size_t out) {
    return glorot_uniform(in, out, substream_seed(seed, tag, layer++));
  };

  ModifiedMlpParams p;
  p.config = config;
  p.u_w = next(config.input_dim, config.width);
  p.u_b = row_zeros(config.width);
  p.v_w = next(config.input_dim, config.width);
  p.v_b = row_zeros(config.width);
  p.z_w.push_back(next(config.input_dim, config.width));
  p.z_b.push_back(row_zeros(config.width));
  for (std::size_t k = 1; k <= config.depth; ++k) {
    p.z_w.push_back(next(config.width, config.width));
    p.z_b.push_back(row_zeros(config.width));
  }
  p.out_w = next(config.width, config.output_dim);
  p.out_b = row_zeros(config.output_dim);
  return p;
}

void ModifiedMlpParams::append_to(ParameterVector& pv, std::string_view prefix) const {
  pv.append(key(prefix, "u", 'w'), u_w);
  pv.append(key(prefix, "u", 'b'), u_b);
  pv.append(key(prefix, "v", 'w'), v_w);
  pv.append(key(prefix, "v", 'b'), v_b);
  for (std::size_t l = 0; l < z_w.size(); ++l) {
    pv.append(key(prefix, z_name(l), 'w'), z_w[l]);
    pv.append(key(prefix, z_name(l), 'b'), z_b[l]);
  }
  pv.append(key(prefix, "out", 'w'), out_w);
  pv.append(key(prefix, "out", 'b'), out_b);
}

ModifiedMlpParams ModifiedMlpParams::read_from(const ParameterVector& pv,
                                               const ModifiedMlpConfig& config,
                                               std::string_view prefix) {
  config.validate();
  auto fetch = [&](std::string_view layer, char wb, std::size_t rows, std::size_t cols) {
    Tensor t = pv.tensor(key(prefix, layer, wb));
    if (t.shape() != Shape{rows, cols}) {
      throw DimensionError("parameter " + key(prefix, layer, wb) + " has shape " +
                           shape_string(t.shape()) + ", expected " +
                           shape_string(Shape{rows, cols}));
    }
    return t;
  };
  ModifiedMlpParams p;
  p.config = config;
  p.u_w = fetch("u", 'w', config.input_dim, config.width);
  p.u_b = fetch("u", 'b', 1, config.width);
  p.v_w = fetch("v", 'w', config.input_dim, config.width);
  p.v_b = fetch("v", 'b', 1, config.width);
  for (std::size_t l = 0; l <= config.depth; ++l) {
    p.z_w.push_back(fetch(z_name(l), 'w', l == 0 ? config.input_dim : config.width, config.width));
    p.z_b.push_back(fetch(z_name(l), 'b', 1, config.width));
  }
  p.out_w = fetch("out", 'w', config.width, config.output_dim);
  p.out_b = fetch("out", 'b', 1, config.output_dim);
  return p;
}

MlpVars bind(Tape& tape, const ModifiedMlpParams& params, std::string_view prefix,
             bool trainable) {
  auto put = [&](std::string_view layer, char wb, const Tensor& t) {
    return trainable ? tape.leaf(key(prefix, layer, wb), t) : tape.constant(t);
  };
  MlpVars v;
  v.input_dim = params.config.input_dim;
  v.u_w = put("u", 'w', params.u_w);
  v.u_b = put("u", 'b', params.u_b);
  v.v_w = put("v", 'w', params.v_w);
  v.v_b = put("v", 'b', params.v_b);
  for (std::size_t l = 0; l < params.z_w.size(); ++l) {
    v.z_w.push_back(put(z_name(l), 'w', params.z_w[l]));
    v.z_b.push_back(put(z_name(l), 'b', params.z_b[l]));
  }
  v.out_w = put("out", 'w', params.out_w);
  v.out_b = put("out", 'b', params.out_b);
  return v;
}

Var linear(Var h, Var w, Var b) { return add_row(matmul(h, w), b); }

Var hidden(const MlpVars& net, Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.cols() != net.input_dim) {
    throw DimensionError("network expects " + std::to_string(net.input_dim) +
                         " input columns, got shape " + shape_string(xv.shape()));
  }
  Var u = sin(linear(x, net.u_w, net.u_b));
  Var v = sin(linear(x, net.v_w, net.v_b));
  Var h = sin(linear(x, net.z_w[0], net.z_b[0]));
  Var one = x.tape->constant(Tensor::scalar(1.0));
  for (std::size_t k = 1; k < net.z_w.size(); ++k) {
    Var z = sin(linear(h, net.z_w[k], net.z_b[k]));
    h = (one - z) * u + z * v;
  }
  return h;
}

Var forward(const MlpVars& net, Var x) { return linear(hidden(net, x), net.out_w, net.out_b); }

Tensor forward(const ModifiedMlpParams& params, const Tensor& x) {
  Tape tape;
  MlpVars v = bind(tape, params, "net", false);
  return forward(v, tape.constant(x)).value();
}

}  // namespace postfault
