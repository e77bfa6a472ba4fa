#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "postfault/parameters.hpp"
#include "postfault/tensor.hpp"

namespace postfault {

struct ModifiedMlpConfig {
  std::size_t input_dim = 1;
  std::size_t width = 100;
  std::size_t depth = 3;  // number of gated hidden layers d
  std::size_t output_dim = 100;

  void validate() const;
  bool operator==(const ModifiedMlpConfig&) const = default;
};

/// Weights of the gated sinusoidal network.
///
/// z_w/z_b hold d+1 layers: entry 0 lifts the input to the first hidden
/// state H^1, entries 1..d produce the gates Z^1..Z^d.
struct ModifiedMlpParams {
  ModifiedMlpConfig config;
  Tensor u_w, u_b;
  Tensor v_w, v_b;
  std::vector<Tensor> z_w, z_b;
  Tensor out_w, out_b;

  /// Appends every tensor under "<prefix>.<layer>.<w|b>" in a fixed order.
  void append_to(ParameterVector& pv, std::string_view prefix) const;
  static ModifiedMlpParams read_from(const ParameterVector& pv, const ModifiedMlpConfig& config,
                                     std::string_view prefix);
  bool operator==(const ModifiedMlpParams&) const = default;
};

/// Weights uniform in ±sqrt(6/(fan_in+fan_out)), biases zero.
ModifiedMlpParams glorot_init(const ModifiedMlpConfig& config, std::uint64_t seed);

/// Fills one weight matrix the way glorot_init does.
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed);

/// The same parameters as tape variables.
struct MlpVars {
  std::size_t input_dim = 0;
  Var u_w, u_b, v_w, v_b;
  std::vector<Var> z_w, z_b;
  Var out_w, out_b;
};

/// Places the parameters on `tape`: trainable leaves named like append_to, or constants.
MlpVars bind(Tape& tape, const ModifiedMlpParams& params, std::string_view prefix,
             bool trainable);

/// Final hidden state H^{d+1}.
Var hidden(const MlpVars& net, Var x);
/// Linear read-out H W + b.
Var linear(Var h, Var w, Var b);
Var forward(const MlpVars& net, Var x);

Tensor forward(const ModifiedMlpParams& params, const Tensor& x);

}  // namespace postfault
