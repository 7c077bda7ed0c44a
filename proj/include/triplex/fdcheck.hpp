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

#include <functional>
#include <vector>

#include "triplex/autograd.hpp"
#include "triplex/ops.hpp"

namespace triplex {

// Central-difference gradient check. `f` must be a pure scalar-valued
// function of its inputs; it is re-evaluated 2 * total_elements times, so
// keep the points small. Returns the maximum relative error between the
// analytic gradient and (f(x+h) - f(x-h)) / 2h, with the relative
// denominator max(|analytic|, |numeric|, 1e-8).
inline double finite_difference_check(
    const std::function<Var(const std::vector<Var>&)>& f,
    const std::vector<Tensor>& points, double h = 1e-5) {
  std::vector<Var> vars;
  vars.reserve(points.size());
  for (const Tensor& p : points) vars.emplace_back(p, /*requires_grad=*/true);
  Var y = f(vars);
  backward(y);
  std::vector<Tensor> analytic;
  for (Var& v : vars)
    analytic.push_back(v.has_grad() ? v.grad() : Tensor::zeros(v.value().dims));

  auto eval = [&](const std::vector<Tensor>& pts) {
    std::vector<Var> cs;
    cs.reserve(pts.size());
    for (const Tensor& p : pts) cs.push_back(Var::constant(p));
    return f(cs).value().item();
  };

  double max_rel = 0.0;
  std::vector<Tensor> work = points;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = 0; j < points[i].size(); ++j) {
      const double orig = work[i].data[j];
      work[i].data[j] = orig + h;
      const double fp = eval(work);
      work[i].data[j] = orig - h;
      const double fm = eval(work);
      work[i].data[j] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[i].data[j];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace triplex
