#include "rtd/core/parameters.hpp"

#include <algorithm>

#include "rtd/core/errors.hpp"

namespace rtd {

std::string_view group_name(ParamGroup group) {
  switch (group) {
    case ParamGroup::kShared: return "shared";
    case ParamGroup::kGenerator: return "generator";
    case ParamGroup::kSamplingHead: return "sampling_head";
    case ParamGroup::kDiscriminator: return "discriminator";
  }
  return "?";
}

Tensor ParameterStore::add(std::string name, ParamGroup group, Shape shape) {
  RTD_REQUIRE(find(name) == nullptr, "duplicate parameter name: " + name);
  Tensor t = Tensor::zeros(std::move(shape), true);
  params_.push_back({std::move(name), group, t});
  return t;
}

const NamedParameter* ParameterStore::find(std::string_view name) const {
  auto it = std::find_if(params_.begin(), params_.end(), [&](const NamedParameter& p) { return p.name == name; });
  return it == params_.end() ? nullptr : &*it;
}

const Tensor& ParameterStore::get(std::string_view name) const {
  const NamedParameter* p = find(name);
  RTD_REQUIRE(p != nullptr, "unknown parameter: " + std::string(name));
  return p->tensor;
}

std::size_t ParameterStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) {
    p.tensor.mutable_grad();
    p.tensor.zero_grad();
  }
}

}  // namespace rtd
