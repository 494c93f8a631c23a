#include "retinn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace retinn {

std::vector<double> sample_weights(std::span<const int> intervals,
                                   const std::array<int, 4>& interval_counts,
                                   double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  int n = 0;
  for (int c : interval_counts) n += c;
  if (n <= 0) throw ConfigError("sample_weights needs at least one pair");
  if (alpha > 0.0) {
    for (std::size_t k = 0; k < interval_counts.size(); ++k)
      if (interval_counts[k] == 0)
        throw ConfigError("severity interval " + std::to_string(k + 1) +
                          " is empty; cannot weight it with alpha > 0");
  }
  std::vector<double> lambda;
  lambda.reserve(intervals.size());
  for (int iv : intervals) {
    if (iv < 1 || iv > 4) throw ConfigError("interval id out of range 1..4");
    int ni = interval_counts[static_cast<std::size_t>(iv - 1)];
    double w = (1.0 - alpha) / static_cast<double>(n);
    if (alpha > 0.0) w += alpha / (4.0 * static_cast<double>(ni));
    lambda.push_back(w);
  }
  return lambda;
}

std::vector<double> location_weights(std::span<const double> distances_units,
                                     double gamma) {
  if (!(gamma > 0.0))
    throw ConfigError("gamma must be positive, got " + std::to_string(gamma));
  double min_d2 = std::numeric_limits<double>::infinity();
  for (double d : distances_units) min_d2 = std::min(min_d2, d * d);
  std::vector<double> rho;
  rho.reserve(distances_units.size());
  double sum = 0.0;
  for (double d : distances_units) {
    double e = std::exp(-(d * d - min_d2) / (2.0 * gamma * gamma));
    rho.push_back(e);
    sum += e;
  }
  for (double& r : rho) r /= sum;
  return rho;
}

std::vector<double> location_weights(const LocationTable& table, double gamma) {
  return location_weights(table.center_distances_units(), gamma);
}

double vf_loss(std::span<const double> preds, std::span<const double> targets,
               std::span<const double> lambda, std::span<const double> rho) {
  std::size_t n = lambda.size();
  std::size_t j_n = rho.size();
  if (preds.size() != n * j_n || targets.size() != n * j_n)
    throw ConfigError("vf_loss shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double inner = 0.0;
    const double* p = preds.data() + i * j_n;
    const double* y = targets.data() + i * j_n;
    for (std::size_t j = 0; j < j_n; ++j) {
      double r = y[j] - p[j];
      inner += rho[j] * r * r;
    }
    total += lambda[i] * inner;
  }
  return total;
}

double md_loss(std::span<const double> md_preds, std::span<const double> md_true,
               std::span<const double> lambda) {
  if (md_preds.size() != lambda.size() || md_true.size() != lambda.size())
    throw ConfigError("md_loss shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    double r = md_true[i] - md_preds[i];
    total += lambda[i] * r * r;
  }
  return total;
}

double total_loss(double l_vf, double l_md, double beta) {
  if (beta < 0.0 || beta > 1.0)
    throw ConfigError("beta must lie in [0, 1], got " + std::to_string(beta));
  return (1.0 - beta) * l_vf + beta * l_md;
}

LossWeights LossWeights::make(double alpha, double beta, double gamma,
                              std::span<const int> intervals,
                              const std::array<int, 4>& counts,
                              const LocationTable& table) {
  LossWeights w;
  w.alpha = alpha;
  w.beta = beta;
  if (beta < 0.0 || beta > 1.0)
    throw ConfigError("beta must lie in [0, 1], got " + std::to_string(beta));
  w.gamma = gamma;
  w.lambda = sample_weights(intervals, counts, alpha);
  w.rho = location_weights(table, gamma);
  return w;
}

}  // namespace retinn
