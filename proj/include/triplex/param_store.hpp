// Copyright 2026 The Triplex Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "triplex/autograd.hpp"
#include "triplex/errors.hpp"
#include "triplex/tensor.hpp"

namespace triplex {

// The five parameter groups of the pipeline. Freezing is per group; a
// group's trainable flag drives requires_grad on every leaf in it.
inline const std::set<std::string>& param_groups() {
  static const std::set<std::string> g = {"encoder", "adapter", "llm_core",
                                          "llm_lora", "heads"};
  return g;
}

// Named tensor collection with per-group trainable flags. Single writer:
// exactly one trainer mutates values; concurrent readers must not overlap
// a mutation.
class ParamStore {
 public:
  ParamStore() {
    for (const auto& g : param_groups()) trainable_[g] = false;
  }

  void insert(const std::string& name, const std::string& group, Tensor init) {
    if (!param_groups().count(group))
      throw ConfigError("unknown param group: " + group);
    if (entries_.count(name))
      throw ConfigError("duplicate param name: " + name);
    Var v(std::move(init), trainable_.at(group));
    entries_.emplace(name, v);
    group_of_[name] = group;
  }

  bool has(const std::string& name) const { return entries_.count(name) > 0; }

  const Var& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end())
      throw ConfigError("unknown param name: " + name);
    return it->second;
  }

  const std::string& group(const std::string& name) const {
    return group_of_.at(name);
  }

  bool group_trainable(const std::string& group) const {
    return trainable_.at(group);
  }

  void set_trainable(const std::string& group, bool flag) {
    if (!param_groups().count(group))
      throw ConfigError("unknown param group: " + group);
    trainable_[group] = flag;
    for (auto& [name, var] : entries_)
      if (group_of_[name] == group) var.set_requires_grad(flag);
  }

  void freeze_all() {
    for (const auto& g : param_groups()) set_trainable(g, false);
  }

  void zero_grads() {
    for (auto& [name, var] : entries_) var.zero_grad();
  }

  // gradients of all trainable leaves that received one in the last sweep
  std::map<std::string, Tensor> collect_grads() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, var] : entries_)
      if (var.requires_grad() && var.has_grad()) out[name] = var.grad();
    return out;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, var] : entries_) out.push_back(name);
    return out;
  }

  std::vector<std::string> names_in_group(const std::string& group) const {
    std::vector<std::string> out;
    for (const auto& [name, g] : group_of_)
      if (g == group) out.push_back(name);
    return out;
  }

  std::map<std::string, Tensor> snapshot() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, var] : entries_) out[name] = var.value();
    return out;
  }

  std::map<std::string, Tensor> snapshot_group(const std::string& group) const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, var] : entries_)
      if (group_of_.at(name) == group) out[name] = var.value();
    return out;
  }

  void load_tensor(const std::string& name, const Tensor& t) {
    auto it = entries_.find(name);
    if (it == entries_.end())
      throw ConfigError("load_tensor: unknown param " + name);
    if (!it->second.value().same_shape(t))
      throw ShapeMismatch("load_tensor: shape mismatch for " + name + ": " +
                          it->second.value().shape_str() + " vs " +
                          t.shape_str());
    it->second.value() = t;
  }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, Var> entries_;  // ordered: deterministic iteration
  std::map<std::string, std::string> group_of_;
  std::map<std::string, bool> trainable_;
};

// Adam with bias correction and linear learning-rate warmup.
struct AdamState {
  long long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long warmup_steps = 0;
  std::map<std::string, Tensor> m, v;

  double effective_lr(long long at_step) const {
    if (warmup_steps <= 0) return lr;
    const double f = std::min(1.0, static_cast<double>(at_step) /
                                       static_cast<double>(warmup_steps));
    return lr * f;
  }
};

// One optimizer step over the supplied gradients. Supplying a gradient for
// a frozen group is a wiring bug and raises GradForFrozenGroup; parameters
// outside the gradient map are left bit-identical.
inline void adam_step(ParamStore& params,
                      const std::map<std::string, Tensor>& grads,
                      AdamState& state) {
  for (const auto& [name, g] : grads) {
    if (!params.has(name))
      throw ConfigError("adam_step: gradient for unknown param " + name);
    if (!params.group_trainable(params.group(name)))
      throw GradForFrozenGroup("adam_step: gradient supplied for frozen group " +
                               params.group(name) + " (param " + name + ")");
  }
  state.step += 1;
  const double lr_t = state.effective_lr(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    Tensor& value = const_cast<Var&>(params.at(name)).value();
    if (!value.same_shape(g))
      throw ShapeMismatch("adam_step: grad shape for " + name);
    auto mit = state.m.find(name);
    if (mit == state.m.end()) {
      state.m[name] = Tensor::zeros(value.dims);
      state.v[name] = Tensor::zeros(value.dims);
      mit = state.m.find(name);
    }
    Tensor& m = mit->second;
    Tensor& v = state.v[name];
    for (std::size_t i = 0; i < value.size(); ++i) {
      m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * g.data[i];
      v.data[i] =
          state.beta2 * v.data[i] + (1.0 - state.beta2) * g.data[i] * g.data[i];
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      value.data[i] -= lr_t * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace triplex
