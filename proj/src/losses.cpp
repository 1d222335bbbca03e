// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "cifsimul/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cifsimul {

double QuantityLossSeq(const WeightSequence &alpha, int target_len,
                       double beta) {
  const double sum = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  const double diff = static_cast<double>(target_len) - sum / beta;
  return diff * diff;
}

std::vector<double> GradQuantitySeq(const WeightSequence &alpha,
                                    int target_len, double beta) {
  const double sum = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  const double g =
      2.0 * (sum / beta - static_cast<double>(target_len)) / beta;
  return std::vector<double>(alpha.size(), g);
}

double QuantityLossToken(const WeightSequence &alpha,
                         const std::vector<std::pair<int, int>> &boundaries,
                         int target_len, double beta) {
  Require(target_len >= 1, "quantity_loss_token: target length must be >= 1");
  Require(!boundaries.empty(), "quantity_loss_token: empty boundary map");
  std::vector<double> prefix(alpha.size() + 1, 0.0);
  for (std::size_t j = 0; j < alpha.size(); ++j)
    prefix[j + 1] = prefix[j] + alpha[j];
  double loss = 0.0;
  for (const auto &[frame, t_j] : boundaries) {
    Require(frame >= 1 && frame <= static_cast<int>(alpha.size()),
            "quantity_loss_token: boundary frame out of range");
    const double diff = static_cast<double>(t_j) - prefix[frame] / beta;
    loss += diff * diff;
  }
  return loss / static_cast<double>(target_len);
}

std::vector<double> GradQuantityToken(
    const WeightSequence &alpha,
    const std::vector<std::pair<int, int>> &boundaries, int target_len,
    double beta) {
  std::vector<double> prefix(alpha.size() + 1, 0.0);
  for (std::size_t j = 0; j < alpha.size(); ++j)
    prefix[j + 1] = prefix[j] + alpha[j];
  // alpha_k enters every boundary term with j >= k through the cumsum.
  std::vector<double> grad(alpha.size(), 0.0);
  const double scale = -2.0 / (static_cast<double>(target_len) * beta);
  for (const auto &[frame, t_j] : boundaries) {
    const double diff = static_cast<double>(t_j) - prefix[frame] / beta;
    grad[frame - 1] += scale * diff;
  }
  double carry = 0.0;
  for (std::size_t k = alpha.size(); k-- > 0;) {
    carry += grad[k];
    grad[k] = carry;
  }
  return grad;
}

double DalLatencyLoss(const std::vector<double> &delays, double source_len,
                      int target_len) {
  Require(!delays.empty(), "dal: empty delay sequence");
  Require(source_len > 0.0 && target_len >= 1, "dal: bad U or T");
  const double gamma = source_len / static_cast<double>(target_len);
  double g = delays[0];
  double sum = g;
  for (std::size_t i = 1; i < delays.size(); ++i) {
    g = std::max(delays[i], g + gamma);
    sum += g - static_cast<double>(i) * gamma;
  }
  return sum / static_cast<double>(delays.size());
}

std::vector<double> GradDal(const std::vector<double> &delays,
                            double source_len, int target_len) {
  Require(!delays.empty(), "dal: empty delay sequence");
  const double gamma = source_len / static_cast<double>(target_len);
  const std::size_t n = delays.size();
  // Forward pass records which branch each max took.
  std::vector<bool> took_delay(n, false);
  double g = delays[0];
  took_delay[0] = true;
  for (std::size_t i = 1; i < n; ++i) {
    const double carried = g + gamma;
    if (delays[i] >= carried) {
      g = delays[i];
      took_delay[i] = true;
    } else {
      g = carried;
    }
  }
  // Each g_i contributes 1/n directly, plus whatever flows back from
  // later g's through the carried branch.
  std::vector<double> grad(n, 0.0);
  double upstream = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double gi = 1.0 / static_cast<double>(n) + upstream;
    if (took_delay[i]) {
      grad[i] = gi;
      upstream = 0.0;
    } else {
      upstream = gi;
    }
  }
  return grad;
}

LossBreakdown CombinedObjective(double ce, double ctc, double qua, double lat,
                                const LossWeights &weights) {
  weights.Validate();
  Require(std::isfinite(ce) && std::isfinite(ctc) && std::isfinite(qua) &&
              std::isfinite(lat),
          "combined_objective: non-finite loss part");
  LossBreakdown out;
  out.ce = ce;
  out.ctc = ctc;
  out.qua = qua;
  out.lat = lat;
  out.total = ce + weights.lambda_ctc * ctc + weights.lambda_qua * qua +
              weights.lambda_lat * lat;
  return out;
}

}  // namespace cifsimul
