#pragma once

#include <map>
#include <string>

#include "fireset/tensor.hpp"

namespace fireset {

// Named parameter leaves with deterministic (alphabetical) iteration order.
template <typename S>
class Params {
 public:
  Tensor<S>& create(const std::string& name, Shape shape, std::vector<S> values) {
    if (by_name_.count(name)) throw ManifestError("duplicate parameter '" + name + "'");
    auto [it, ok] = by_name_.emplace(name, Tensor<S>::variable(std::move(shape),
                                                               std::move(values), name));
    (void)ok;
    return it->second;
  }

  bool has(const std::string& name) const { return by_name_.count(name) != 0; }

  Tensor<S>& at(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ManifestError("unknown parameter '" + name + "'");
    return it->second;
  }
  const Tensor<S>& at(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ManifestError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::map<std::string, Tensor<S>>& all() { return by_name_; }
  const std::map<std::string, Tensor<S>>& all() const { return by_name_; }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : by_name_) n += t.size();
    return n;
  }

  void zero_grads() {
    for (auto& [_, t] : by_name_) t.zero_grad();
  }

 private:
  std::map<std::string, Tensor<S>> by_name_;
};

}  // namespace fireset
