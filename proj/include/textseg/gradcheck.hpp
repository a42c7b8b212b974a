// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "textseg/tensor.hpp"

namespace textseg {

// Central finite differences against reverse-mode gradients, in double.
// Every element of every listed tensor is swept. The loss builder is called
// with gradients disabled for the probe evaluations, so the probes do not
// grow the tape.

struct GradcheckResult {
  double max_rel = 0.0;
  double max_abs = 0.0;
  std::string worst_name;
  size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  size_t checked = 0;

  bool within(double tol) const { return max_rel <= tol; }
};

constexpr double kGradcheckStep = 1e-5;
constexpr double kGradcheckTol = 1e-4;
// Denominator floor for the relative error. Central differences at h=1e-5 in
// double carry ~1e-9 of absolute noise through a deep graph, so components
// smaller than the floor are held to absolute accuracy instead; a relative
// comparison down there would measure roundoff, not the gradient.
constexpr double kGradcheckFloor = 1e-3;

template <typename LossFn>
GradcheckResult gradcheck(LossFn&& make_loss,
                          const std::vector<std::pair<std::string, Tensor<double>>>& params,
                          double h = kGradcheckStep) {
  // drop any gradients left over from earlier backward passes on other
  // subgraphs; backward only re-zeroes what its own record reaches
  for (auto& [name, t] : params) Tensor<double>(t).clear_grad();

  Tensor<double> loss = make_loss();
  if (!std::isfinite(loss.item())) throw NumericError("gradcheck: loss is not finite");
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& [name, t] : params) {
    if (!t.requires_grad()) throw ConfigError("gradcheck: tensor '" + name + "' does not require grad");
    // parameters the loss never touches keep an empty grad; that is a zero
    std::vector<double> g = t.grad();
    if (g.empty()) g.assign(t.size(), 0.0);
    analytic.push_back(std::move(g));
  }

  GradcheckResult res;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<double> t = params[pi].second;
    auto& vals = t.mutable_data();
    for (size_t i = 0; i < vals.size(); ++i) {
      double saved = vals[i];
      double f1, f2;
      {
        NoGradGuard ng;
        vals[i] = saved + h;
        f1 = make_loss().item();
        vals[i] = saved - h;
        f2 = make_loss().item();
      }
      vals[i] = saved;
      if (!std::isfinite(f1) || !std::isfinite(f2))
        throw NumericError("gradcheck: perturbed loss is not finite at '" + params[pi].first + "'[" +
                           std::to_string(i) + "]");
      double fd = (f1 - f2) / (2.0 * h);
      double an = analytic[pi][i];
      double abs_err = std::fabs(an - fd);
      double rel = abs_err / std::max({std::fabs(an), std::fabs(fd), kGradcheckFloor});
      if (rel > res.max_rel) {
        res.max_rel = rel;
        res.max_abs = abs_err;
        res.worst_name = params[pi].first;
        res.worst_index = i;
        res.worst_analytic = an;
        res.worst_numeric = fd;
      }
      ++res.checked;
    }
  }
  return res;
}

}  // namespace textseg
