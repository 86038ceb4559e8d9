#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "rtd/core/tensor.hpp"

namespace rtd {

enum class ParamGroup { kShared, kGenerator, kSamplingHead, kDiscriminator };

std::string_view group_name(ParamGroup group);

struct NamedParameter {
  std::string name;
  ParamGroup group;
  Tensor tensor;
};

// Insertion-ordered registry of trainable leaves. Order is part of the
// checkpoint layout, so it must be deterministic.
class ParameterStore {
 public:
  Tensor add(std::string name, ParamGroup group, Shape shape);

  const Tensor& get(std::string_view name) const;
  const NamedParameter* find(std::string_view name) const;
  std::vector<NamedParameter>& all() { return params_; }
  const std::vector<NamedParameter>& all() const { return params_; }
  std::size_t total_elements() const;

  // Allocates and zeroes every gradient buffer.
  void zero_grad();

 private:
  std::vector<NamedParameter> params_;
};

}  // namespace rtd
