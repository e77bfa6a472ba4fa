#include "postfault/parameters.hpp"

#include <algorithm>
#include <cstring>
#include <functional>
#include <numeric>

#include "postfault/error.hpp"

namespace postfault {

std::size_t ParamSlot::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void ParameterVector::append(std::string name, const Tensor& value) {
  if (contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  slots_.push_back(ParamSlot{std::move(name), value.shape(), values_.size()});
  values_.insert(values_.end(), value.data().begin(), value.data().end());
}

const ParamSlot& ParameterVector::slot(const std::string& name) const {
  for (const auto& s : slots_) {
    if (s.name == name) return s;
  }
  throw ContractError("no parameter named '" + name + "'");
}

bool ParameterVector::contains(const std::string& name) const {
  return std::any_of(slots_.begin(), slots_.end(),
                     [&](const ParamSlot& s) { return s.name == name; });
}

Tensor ParameterVector::tensor(const std::string& name) const {
  const ParamSlot& s = slot(name);
  auto first = values_.begin() + static_cast<std::ptrdiff_t>(s.offset);
  return Tensor(s.shape, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(s.size())));
}

std::span<const double> ParameterVector::view(const std::string& name) const {
  const ParamSlot& s = slot(name);
  return std::span<const double>(values_).subspan(s.offset, s.size());
}

std::span<double> ParameterVector::view(const std::string& name) {
  const ParamSlot& s = slot(name);
  return std::span<double>(values_).subspan(s.offset, s.size());
}

bool ParameterVector::same_layout(const ParameterVector& other) const {
  if (slots_.size() != other.slots_.size()) return false;
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const auto& a = slots_[i];
    const auto& b = other.slots_[i];
    if (a.name != b.name || a.shape != b.shape || a.offset != b.offset) return false;
  }
  return true;
}

ParameterVector ParameterVector::with_values(std::vector<double> values) const {
  if (values.size() != values_.size()) {
    throw DimensionError("parameter vector of length " + std::to_string(values.size()) +
                         " does not fit layout of length " + std::to_string(values_.size()));
  }
  ParameterVector out;
  out.slots_ = slots_;
  out.values_ = std::move(values);
  return out;
}

std::vector<double> ParameterVector::flatten(const Gradients& grads) const {
  std::vector<double> out(values_.size(), 0.0);
  for (const auto& s : slots_) {
    auto it = grads.find(s.name);
    if (it == grads.end()) continue;
    if (it->second.size() != s.size()) {
      throw DimensionError("gradient for '" + s.name + "' has the wrong size");
    }
    std::copy(it->second.data().begin(), it->second.data().end(),
              out.begin() + static_cast<std::ptrdiff_t>(s.offset));
  }
  return out;
}

bool ParameterVector::operator==(const ParameterVector& other) const {
  if (!same_layout(other) || values_.size() != other.values_.size()) return false;
  // bitwise, so -0.0 and 0.0 differ and NaN payloads compare by value
  return values_.empty() ||
         std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(double)) == 0;
}

}  // namespace postfault
