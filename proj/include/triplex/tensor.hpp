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

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "triplex/errors.hpp"
#include "triplex/rng.hpp"

namespace triplex {

// Dense row-major tensor of doubles. Shapes are small at desk scale, so
// everything lives in one contiguous vector.
struct Tensor {
  std::vector<std::size_t> dims;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> d, std::vector<double> v)
      : dims(std::move(d)), data(std::move(v)) {}

  static std::size_t count(const std::vector<std::size_t>& d) {
    std::size_t n = 1;
    for (std::size_t x : d) n *= x;
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> d) {
    std::size_t n = count(d);
    return Tensor(std::move(d), std::vector<double>(n, 0.0));
  }

  static Tensor full(std::vector<std::size_t> d, double v) {
    std::size_t n = count(d);
    return Tensor(std::move(d), std::vector<double>(n, v));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  std::size_t rank() const { return dims.size(); }

  std::size_t rows() const { return dims.at(0); }
  std::size_t cols() const { return dims.at(1); }

  double& operator()(std::size_t i) { return data[i]; }
  double operator()(std::size_t i) const { return data[i]; }
  double& operator()(std::size_t i, std::size_t j) {
    return data[i * dims[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data[i * dims[1] + j];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * dims[1] + j) * dims[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * dims[1] + j) * dims[2] + k];
  }

  double item() const {
    if (size() != 1) throw ShapeMismatch("item() on non-scalar tensor");
    return data[0];
  }

  bool same_shape(const Tensor& o) const { return dims == o.dims; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < dims.size(); ++i)
      os << dims[i] << (i + 1 < dims.size() ? "," : "");
    os << ")";
    return os.str();
  }
};

inline Tensor randn(Rng& rng, std::vector<std::size_t> dims, double stddev) {
  Tensor t = Tensor::zeros(std::move(dims));
  for (double& v : t.data) v = rng.normal(0.0, stddev);
  return t;
}

inline void check_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2)
    throw ShapeMismatch(std::string(what) + ": expected rank-2, got " +
                        t.shape_str());
}

// C += A * B        (M,K)x(K,N)
inline void mm_nn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.dims[0], k = a.dims[1], n = b.dims[1];
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  double* pc = c.data.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A * B^T      (M,K)x(N,K)
inline void mm_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.dims[0], k = a.dims[1], n = b.dims[0];
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  double* pc = c.data.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      pc[i * n + j] += s;
    }
  }
}

// C += A^T * B      (K,M)x(K,N)
inline void mm_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t k = a.dims[0], m = a.dims[1], n = b.dims[1];
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  double* pc = c.data.data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = pa + p * m;
    const double* brow = pb + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

inline Tensor mm_nn(const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul lhs");
  check_matrix(b, "matmul rhs");
  if (a.dims[1] != b.dims[0])
    throw ShapeMismatch("matmul: " + a.shape_str() + " x " + b.shape_str());
  Tensor c = Tensor::zeros({a.dims[0], b.dims[1]});
  mm_nn_acc(a, b, c);
  return c;
}

inline Tensor mm_nt(const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul lhs");
  check_matrix(b, "matmul rhs");
  if (a.dims[1] != b.dims[1])
    throw ShapeMismatch("matmul_nt: " + a.shape_str() + " x " + b.shape_str() +
                        "^T");
  Tensor c = Tensor::zeros({a.dims[0], b.dims[0]});
  mm_nt_acc(a, b, c);
  return c;
}

}  // namespace triplex
