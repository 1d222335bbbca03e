// cifsimul/metrics.hpp
//
// Speech-latency evaluation over read/write traces: AP, AL, DAL and
// computation-aware DAL with the per-token delta.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef CIFSIMUL_METRICS_HPP
#define CIFSIMUL_METRICS_HPP

#include <optional>
#include <vector>

#include "cifsimul/core.hpp"

namespace cifsimul {

struct LatencyReport {
  double ap = 0.0;
  double al_ms = 0.0;
  double dal_ms = 0.0;
  std::optional<double> dal_ca_ms;  // only with compute stamps
  std::optional<double> delta_ms;   // dal_ca_ms - dal_ms
  int target_len = 0;
  double source_ms = 0.0;
};

/// Delay of the i-th WRITE in ms: elapsed source frames times frame_ms.
std::vector<double> DelaysFromTrace(const ReadWriteTrace &trace);

/// AP = sum(d_i) / (T * source_ms).
double AverageProportion(const std::vector<double> &delays_ms,
                         double source_ms, int target_len);

/// AL with cutoff at the first delay reaching source_ms; r uses the
/// reference target length.
double AverageLagging(const std::vector<double> &delays_ms, double source_ms,
                      int target_len_ref);

/// DAL recurrence with gamma = source_ms / T.
double DalMetric(const std::vector<double> &delays_ms, double source_ms,
                 int target_len);

/// Computation-aware delays: elapsed source ms plus cumulative compute
/// time up to and including each WRITE.
std::vector<double> ComputationAwareDelays(const ReadWriteTrace &trace);

struct DalCaResult {
  double dal_ca_ms = 0.0;
  double delta_ms = 0.0;
};
DalCaResult DalComputationAware(const ReadWriteTrace &trace);

/// All metrics for one trace. AL uses target_len_ref when supplied, else
/// the hypothesis length.
LatencyReport EvaluateTrace(const ReadWriteTrace &trace,
                            std::optional<int> target_len_ref = std::nullopt);

/// Unweighted arithmetic mean per metric. CA fields present only when
/// every trace carried compute stamps.
LatencyReport AverageReports(const std::vector<LatencyReport> &reports);

}  // namespace cifsimul

#endif  // CIFSIMUL_METRICS_HPP
