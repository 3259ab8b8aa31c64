#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lowmt/rng.hpp"
#include "lowmt/tensor.hpp"

namespace lowmt {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_row = 0;
  Eigen::Index worst_col = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  size_t coords_checked = 0;
};

// Central-difference verification of analytic gradients. `eval` recomputes the
// scalar objective from the current contents of the parameter storages, which
// this function perturbs in place and restores. At most `max_coords` randomly
// chosen coordinates are probed per parameter.
inline GradCheckResult finite_difference_check(
    const std::function<double()>& eval,
    const std::vector<std::pair<std::string, MatX<double>*>>& params,
    const std::vector<MatX<double>>& analytic, double h, size_t max_coords,
    uint64_t seed) {
  if (params.size() != analytic.size())
    throw TensorError("finite_difference_check: " + std::to_string(params.size()) +
                      " parameters but " + std::to_string(analytic.size()) + " gradients");
  if (h <= 0) throw TensorError("finite_difference_check: h must be positive");

  GradCheckResult result;
  Rng rng(seed_stream(seed, "gradcheck"));
  for (size_t p = 0; p < params.size(); ++p) {
    const std::string& name = params[p].first;
    MatX<double>& theta = *params[p].second;
    const MatX<double>& grad = analytic[p];
    if (grad.rows() != theta.rows() || grad.cols() != theta.cols())
      throw TensorError("finite_difference_check: gradient shape mismatch for " + name);
    if (!grad.allFinite())
      throw TensorError("finite_difference_check: non-finite analytic gradient in " + name);

    size_t n = static_cast<size_t>(theta.size());
    std::vector<size_t> coords(n);
    for (size_t i = 0; i < n; ++i) coords[i] = i;
    if (n > max_coords) {
      for (size_t i = 0; i < max_coords; ++i) {
        size_t j = i + static_cast<size_t>(rng.below(n - i));
        std::swap(coords[i], coords[j]);
      }
      coords.resize(max_coords);
    }

    for (size_t flat : coords) {
      Eigen::Index r = static_cast<Eigen::Index>(flat) / theta.cols();
      Eigen::Index c = static_cast<Eigen::Index>(flat) % theta.cols();
      double saved = theta(r, c);
      theta(r, c) = saved + h;
      double up = eval();
      theta(r, c) = saved - h;
      double down = eval();
      theta(r, c) = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw TensorError("finite_difference_check: non-finite objective when perturbing " +
                          name);
      double numeric = (up - down) / (2.0 * h);
      double a = grad(r, c);
      double rel = std::abs(a - numeric) /
                   std::max({1.0, std::abs(a), std::abs(numeric)});
      result.coords_checked++;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = name;
        result.worst_row = r;
        result.worst_col = c;
        result.analytic_at_worst = a;
        result.numeric_at_worst = numeric;
      }
    }
  }
  return result;
}

}  // namespace lowmt
