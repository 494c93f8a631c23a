#pragma once

#include <array>
#include <span>
#include <vector>

#include "retinn/common.hpp"
#include "retinn/locations.hpp"

namespace retinn {

// Per-pair costs: lambda_i = (1-alpha)/N + alpha/(4*N_i), where N_i counts the
// pairs in pair i's severity interval. All four intervals must be populated
// when alpha > 0 (empty-interval division). Sums to 1 when they are.
std::vector<double> sample_weights(std::span<const int> intervals,
                                   const std::array<int, 4>& interval_counts,
                                   double alpha);

// Per-location costs: rho_j = exp(-d_j^2 / (2 gamma^2)) normalized over the 52
// locations, computed with max-shifted exponentials. d_j is the distance from
// the field center in grid units.
std::vector<double> location_weights(const LocationTable& table, double gamma);
std::vector<double> location_weights(std::span<const double> distances_units,
                                     double gamma);

// sum_i lambda_i sum_j rho_j (y_ij - pred_ij)^2 over N x 52 rows
double vf_loss(std::span<const double> preds, std::span<const double> targets,
               std::span<const double> lambda, std::span<const double> rho);

// sum_i lambda_i (z_i - md_pred_i)^2
double md_loss(std::span<const double> md_preds, std::span<const double> md_true,
               std::span<const double> lambda);

// (1 - beta) * l_vf + beta * l_md, beta in [0, 1]
double total_loss(double l_vf, double l_md, double beta);

struct LossWeights {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 5.0;
  std::vector<double> lambda;  // one per training pair
  std::vector<double> rho;     // 52 entries

  static LossWeights make(double alpha, double beta, double gamma,
                          std::span<const int> intervals,
                          const std::array<int, 4>& counts,
                          const LocationTable& table);
};

}  // namespace retinn
