// cifsimul/losses.hpp
//
// Quantity losses (sequence- and token-level), the DAL latency loss over
// expected delays, the combined training objective and analytic
// gradients.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef CIFSIMUL_LOSSES_HPP
#define CIFSIMUL_LOSSES_HPP

#include <vector>

#include "cifsimul/core.hpp"

namespace cifsimul {

struct LossBreakdown {
  double ce = 0.0;
  double ctc = 0.0;
  double qua = 0.0;
  double lat = 0.0;
  double total = 0.0;
};

/// (T - sum(alpha)/beta)^2
double QuantityLossSeq(const WeightSequence &alpha, int target_len,
                       double beta);
/// Gradient is the same value 2*(sum/beta - T)/beta at every index.
std::vector<double> GradQuantitySeq(const WeightSequence &alpha,
                                    int target_len, double beta);

/// Token-level quantity loss: mean over boundary frames j of
/// (t_j - cumsum_j(alpha)/beta)^2, normalized by target length.
double QuantityLossToken(const WeightSequence &alpha,
                         const std::vector<std::pair<int, int>> &boundaries,
                         int target_len, double beta);
std::vector<double> GradQuantityToken(
    const WeightSequence &alpha,
    const std::vector<std::pair<int, int>> &boundaries, int target_len,
    double beta);

/// DAL recurrence over per-token delays (frames):
/// gamma = U/T; g_1 = d_1, g_i = max(d_i, g_{i-1} + gamma);
/// returns mean of g_i - (i-1)*gamma.
double DalLatencyLoss(const std::vector<double> &delays, double source_len,
                      int target_len);
/// Subgradient: through the max, each d_i receives weight only where it
/// attains the running maximum.
std::vector<double> GradDal(const std::vector<double> &delays,
                            double source_len, int target_len);

LossBreakdown CombinedObjective(double ce, double ctc, double qua, double lat,
                                const LossWeights &weights);

}  // namespace cifsimul

#endif  // CIFSIMUL_LOSSES_HPP
