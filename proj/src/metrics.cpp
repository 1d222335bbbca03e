// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "cifsimul/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "cifsimul/losses.hpp"

namespace cifsimul {

std::vector<double> DelaysFromTrace(const ReadWriteTrace &trace) {
  trace.Validate();
  std::vector<double> delays;
  for (const auto &e : trace.events)
    if (e.kind == ReadWriteTrace::Event::Kind::kWrite)
      delays.push_back(e.elapsed_frames * trace.frame_ms);
  return delays;
}

double AverageProportion(const std::vector<double> &delays_ms,
                         double source_ms, int target_len) {
  Require(target_len >= 1 && source_ms > 0.0, "average_proportion: bad args");
  double sum = 0.0;
  for (double d : delays_ms) sum += d;
  return sum / (static_cast<double>(target_len) * source_ms);
}

double AverageLagging(const std::vector<double> &delays_ms, double source_ms,
                      int target_len_ref) {
  Require(target_len_ref >= 1, "average_lagging: bad reference length");
  Require(!delays_ms.empty(), "average_lagging: empty delays");
  const double r = source_ms / static_cast<double>(target_len_ref);
  std::size_t tau = delays_ms.size();
  for (std::size_t i = 0; i < delays_ms.size(); ++i) {
    if (delays_ms[i] >= source_ms) {
      tau = i + 1;
      break;
    }
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < tau; ++i)
    sum += delays_ms[i] - static_cast<double>(i) * r;
  return sum / static_cast<double>(tau);
}

double DalMetric(const std::vector<double> &delays_ms, double source_ms,
                 int target_len) {
  return DalLatencyLoss(delays_ms, source_ms, target_len);
}

std::vector<double> ComputationAwareDelays(const ReadWriteTrace &trace) {
  trace.Validate();
  Require(trace.HasComputeStamps(),
          "computation_aware: trace lacks compute stamps");
  std::vector<double> delays;
  double compute_total = 0.0;
  for (const auto &e : trace.events) {
    if (e.kind != ReadWriteTrace::Event::Kind::kWrite) continue;
    compute_total += *e.compute_ms;
    delays.push_back(e.elapsed_frames * trace.frame_ms + compute_total);
  }
  return delays;
}

DalCaResult DalComputationAware(const ReadWriteTrace &trace) {
  const auto delays = DelaysFromTrace(trace);
  const auto ca_delays = ComputationAwareDelays(trace);
  const double source_ms = trace.source_total_frames * trace.frame_ms;
  const int t = static_cast<int>(delays.size());
  DalCaResult out;
  out.dal_ca_ms = DalMetric(ca_delays, source_ms, t);
  out.delta_ms = out.dal_ca_ms - DalMetric(delays, source_ms, t);
  return out;
}

LatencyReport EvaluateTrace(const ReadWriteTrace &trace,
                            std::optional<int> target_len_ref) {
  const auto delays = DelaysFromTrace(trace);
  Require(!delays.empty(), "evaluate_trace: trace has no WRITE events");
  LatencyReport rep;
  rep.target_len = static_cast<int>(delays.size());
  rep.source_ms = trace.source_total_frames * trace.frame_ms;
  rep.ap = AverageProportion(delays, rep.source_ms, rep.target_len);
  rep.al_ms = AverageLagging(delays, rep.source_ms,
                             target_len_ref.value_or(rep.target_len));
  rep.dal_ms = DalMetric(delays, rep.source_ms, rep.target_len);
  if (trace.HasComputeStamps()) {
    const auto ca = DalComputationAware(trace);
    rep.dal_ca_ms = ca.dal_ca_ms;
    rep.delta_ms = ca.delta_ms;
  }
  return rep;
}

LatencyReport AverageReports(const std::vector<LatencyReport> &reports) {
  Require(!reports.empty(), "average_reports: empty batch");
  LatencyReport mean;
  bool all_ca = true;
  double ca_sum = 0.0, delta_sum = 0.0;
  for (const auto &r : reports) {
    mean.ap += r.ap;
    mean.al_ms += r.al_ms;
    mean.dal_ms += r.dal_ms;
    mean.target_len += r.target_len;
    mean.source_ms += r.source_ms;
    if (r.dal_ca_ms && r.delta_ms) {
      ca_sum += *r.dal_ca_ms;
      delta_sum += *r.delta_ms;
    } else {
      all_ca = false;
    }
  }
  const double n = static_cast<double>(reports.size());
  mean.ap /= n;
  mean.al_ms /= n;
  mean.dal_ms /= n;
  mean.source_ms /= n;
  if (all_ca) {
    mean.dal_ca_ms = ca_sum / n;
    mean.delta_ms = delta_sum / n;
  }
  return mean;
}

}  // namespace cifsimul
