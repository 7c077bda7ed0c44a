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

#include <filesystem>
#include <string>
#include <vector>

#include "triplex/rng.hpp"
#include "triplex/tensor.hpp"

namespace triplex_test {

inline triplex::Tensor rand_tensor(triplex::Rng& rng,
                                   std::vector<std::size_t> dims,
                                   double scale = 1.0) {
  triplex::Tensor t = triplex::Tensor::zeros(std::move(dims));
  for (double& v : t.data) v = rng.uniform(-scale, scale);
  return t;
}

// values kept away from zero, for kinked ops like relu
inline triplex::Tensor rand_tensor_nudged(triplex::Rng& rng,
                                          std::vector<std::size_t> dims,
                                          double min_abs = 0.1) {
  triplex::Tensor t = rand_tensor(rng, std::move(dims));
  for (double& v : t.data) {
    if (v >= 0.0 && v < min_abs) v += min_abs;
    if (v < 0.0 && v > -min_abs) v -= min_abs;
  }
  return t;
}

inline bool bitwise_equal(const triplex::Tensor& a, const triplex::Tensor& b) {
  if (a.dims != b.dims) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.data[i] != b.data[i]) return false;
  return true;
}

// unique scratch directory per test binary run
inline std::string scratch_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("triplex_test_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace triplex_test
