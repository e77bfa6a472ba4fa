#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "postfault/tensor.hpp"

namespace postfault {

struct ParamSlot {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
  std::size_t size() const;
};

/// Flat vector of every trainable value plus the named-shape manifest that
/// says where each parameter tensor lives in it.
class ParameterVector {
 public:
  void append(std::string name, const Tensor& value);

  const std::vector<ParamSlot>& slots() const noexcept { return slots_; }
  const ParamSlot& slot(const std::string& name) const;
  bool contains(const std::string& name) const;

  Tensor tensor(const std::string& name) const;
  std::span<const double> view(const std::string& name) const;
  std::span<double> view(const std::string& name);

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  bool same_layout(const ParameterVector& other) const;
  /// Copy of this layout holding `values`.
  ParameterVector with_values(std::vector<double> values) const;
  /// Gradients keyed by slot name laid out flat; names absent from `grads` are zero.
  std::vector<double> flatten(const Gradients& grads) const;

  bool operator==(const ParameterVector& other) const;

 private:
  std::vector<ParamSlot> slots_;
  std::vector<double> values_;
};

}  // namespace postfault
