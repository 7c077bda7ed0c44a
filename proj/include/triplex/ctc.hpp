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

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "triplex/autograd.hpp"
#include "triplex/errors.hpp"
#include "triplex/ops.hpp"

namespace triplex {

namespace detail {

constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

}  // namespace detail

// CTC loss: -log of the total probability of all frame-level paths that
// collapse (repeats removed, then blanks removed) to the target sequence.
// Computed with the forward/backward recursion over the blank-extended
// label sequence, entirely in log space. logits are (T, V+1) with the
// blank column at `blank`; the gradient w.r.t. logits is analytic.
inline Var ctc_loss(const Var& logits, const std::vector<int>& target,
                    int blank) {
  check_matrix(logits.value(), "ctc_loss");
  const std::size_t t_len = logits.value().dims[0];
  const std::size_t n_cls = logits.value().dims[1];
  if (blank < 0 || static_cast<std::size_t>(blank) >= n_cls)
    throw ShapeMismatch("ctc_loss: blank id out of range");
  for (int l : target) {
    if (l < 0 || static_cast<std::size_t>(l) >= n_cls)
      throw ShapeMismatch("ctc_loss: label out of range");
    if (l == blank) throw ShapeMismatch("ctc_loss: target contains blank");
  }

  // minimal frames: one per label plus one separator per repeated pair
  const std::size_t l_len = target.size();
  std::size_t repeats = 0;
  for (std::size_t i = 0; i + 1 < l_len; ++i)
    if (target[i] == target[i + 1]) ++repeats;
  if (t_len < l_len + repeats)
    throw TargetTooLong("ctc_loss: no valid alignment, T=" +
                        std::to_string(t_len) + " < " +
                        std::to_string(l_len + repeats));

  const std::size_t s_len = 2 * l_len + 1;
  auto ext_label = [&](std::size_t s) -> int {
    return (s % 2 == 0) ? blank : target[s / 2];
  };

  // log softmax rows
  std::vector<double> lp(t_len * n_cls);
  for (std::size_t t = 0; t < t_len; ++t) {
    auto row = log_softmax_row(logits.value().data.data() + t * n_cls, n_cls);
    std::copy(row.begin(), row.end(), lp.begin() + t * n_cls);
  }
  auto lp_at = [&](std::size_t t, std::size_t s) {
    return lp[t * n_cls + static_cast<std::size_t>(ext_label(s))];
  };

  const double z = detail::kLogZero;
  std::vector<double> alpha(t_len * s_len, z), beta(t_len * s_len, z);

  alpha[0] = lp_at(0, 0);
  if (s_len > 1) alpha[1] = lp_at(0, 1);
  for (std::size_t t = 1; t < t_len; ++t) {
    for (std::size_t s = 0; s < s_len; ++s) {
      double a = alpha[(t - 1) * s_len + s];
      if (s >= 1) a = detail::log_add(a, alpha[(t - 1) * s_len + s - 1]);
      if (s >= 2 && ext_label(s) != blank && ext_label(s) != ext_label(s - 2))
        a = detail::log_add(a, alpha[(t - 1) * s_len + s - 2]);
      alpha[t * s_len + s] = (a == z) ? z : a + lp_at(t, s);
    }
  }

  double log_p = alpha[(t_len - 1) * s_len + s_len - 1];
  if (s_len > 1)
    log_p = detail::log_add(log_p, alpha[(t_len - 1) * s_len + s_len - 2]);
  const double loss = -log_p;

  beta[(t_len - 1) * s_len + s_len - 1] = lp_at(t_len - 1, s_len - 1);
  if (s_len > 1)
    beta[(t_len - 1) * s_len + s_len - 2] = lp_at(t_len - 1, s_len - 2);
  for (std::size_t ti = t_len - 1; ti-- > 0;) {
    for (std::size_t s = 0; s < s_len; ++s) {
      double b = beta[(ti + 1) * s_len + s];
      if (s + 1 < s_len) b = detail::log_add(b, beta[(ti + 1) * s_len + s + 1]);
      if (s + 2 < s_len && ext_label(s + 2) != blank &&
          ext_label(s + 2) != ext_label(s))
        b = detail::log_add(b, beta[(ti + 1) * s_len + s + 2]);
      beta[ti * s_len + s] = (b == z) ? z : b + lp_at(ti, s);
    }
  }

  // d loss / d logit[t][k] = p[t][k] - exp(logQ[t][k] - log_p), where
  // logQ[t][k] = logsumexp_{s: label(s)=k} (alpha[t][s] + beta[t][s]) - lp[t][k]
  // (alpha and beta both include the emission at t, hence the division).
  Tensor grad = Tensor::zeros({t_len, n_cls});
  for (std::size_t t = 0; t < t_len; ++t) {
    std::vector<double> log_q(n_cls, z);
    for (std::size_t s = 0; s < s_len; ++s) {
      const double ab = (alpha[t * s_len + s] == z || beta[t * s_len + s] == z)
                            ? z
                            : alpha[t * s_len + s] + beta[t * s_len + s];
      if (ab == z) continue;
      const auto k = static_cast<std::size_t>(ext_label(s));
      log_q[k] = detail::log_add(log_q[k], ab);
    }
    for (std::size_t k = 0; k < n_cls; ++k) {
      const double p = std::exp(lp[t * n_cls + k]);
      double q = 0.0;
      if (log_q[k] != z) q = std::exp(log_q[k] - lp[t * n_cls + k] - log_p);
      grad.data[t * n_cls + k] = p - q;
    }
  }

  detail::Node* ln = logits.node();
  return make_op(Tensor::scalar(loss), {logits},
                 [ln, grad = std::move(grad)](const Tensor& g) {
                   if (!ln->requires_grad) return;
                   Tensor& gl = detail::grad_of(ln);
                   for (std::size_t i = 0; i < grad.size(); ++i)
                     gl.data[i] += g.data[0] * grad.data[i];
                 });
}

}  // namespace triplex
