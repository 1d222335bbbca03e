// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "cifsimul/cif.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cifsimul {

namespace {

void AxpyInto(std::vector<double> &acc, double w,
              const std::vector<double> &v) {
  if (acc.empty()) acc.assign(v.size(), 0.0);
  Require(acc.size() == v.size(), "cif: frame dimension mismatch");
  for (std::size_t i = 0; i < v.size(); ++i) acc[i] += w * v[i];
}

Firing MakeFiringFromQueue(const CifState &state, bool is_tail) {
  Firing f;
  f.is_tail = is_tail;
  f.terms.reserve(state.queue_weights.size());
  for (std::size_t i = 0; i < state.queue_weights.size(); ++i) {
    f.terms.emplace_back(state.queue_frame_indices[i], state.queue_weights[i]);
    AxpyInto(f.embedding, state.queue_weights[i], state.queue_frames[i]);
  }
  return f;
}

void ClearQueue(CifState &state) {
  state.queue_weights.clear();
  state.queue_frame_indices.clear();
  state.queue_frames.clear();
  state.accumulated = 0.0;
}

void Enqueue(CifState &state, const std::vector<double> &h, int frame,
             double weight) {
  state.queue_weights.push_back(weight);
  state.queue_frame_indices.push_back(frame);
  state.queue_frames.push_back(h);
  state.accumulated += weight;
}

}  // namespace

std::vector<Firing> CifStep(CifState &state, const std::vector<double> &h,
                            double alpha, const CifConfig &cfg) {
  Require(std::isfinite(alpha) && alpha >= 0.0,
          "cif_step: alpha must be finite and non-negative");
  for (double v : h)
    Require(std::isfinite(v), "cif_step: non-finite frame entry");
  if (!state.queue_frames.empty())
    Require(state.queue_frames.front().size() == h.size(),
            "cif_step: frame dimension mismatch");

  state.frames_seen += 1;
  const int frame = state.frames_seen;

  std::vector<Firing> out;
  double remaining = alpha;
  while (state.accumulated + remaining >= cfg.beta) {
    const double left = cfg.beta - state.accumulated;  // alpha^l
    Enqueue(state, h, frame, left);
    Firing f = MakeFiringFromQueue(state, /*is_tail=*/false);
    f.fire_frame = frame;
    f.index = ++state.fired;
    out.push_back(std::move(f));
    ClearQueue(state);
    remaining -= left;  // alpha^r; may still exceed beta for scaled weights
  }
  // A copy of h_j stays queued even when the remainder is zero.
  Enqueue(state, h, frame, remaining);
  return out;
}

std::optional<Firing> TailHandle(CifState &state, const CifConfig &cfg) {
  if (state.queue_weights.empty() || state.accumulated < cfg.tail_threshold)
    return std::nullopt;
  Firing f = MakeFiringFromQueue(state, /*is_tail=*/true);
  f.fire_frame = state.frames_seen;
  f.index = ++state.fired;
  ClearQueue(state);
  return f;
}

IntegrationTrace IntegrateAndFire(const FeatureSequence &features,
                                  const WeightSequence &alpha,
                                  const CifConfig &cfg) {
  features.Validate();
  cfg.Validate();
  Require(alpha.size() == features.NumFrames(),
          "integrate_and_fire: weight/feature length mismatch");

  IntegrationTrace trace;
  CifState state;
  std::vector<double> h(features.Dim());
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    std::copy(features.frames.row(j), features.frames.row(j) + features.Dim(),
              h.begin());
    for (auto &f : CifStep(state, h, alpha[j], cfg))
      trace.firings.push_back(std::move(f));
  }
  if (auto tail = TailHandle(state, cfg))
    trace.firings.push_back(std::move(*tail));
  return trace;
}

WeightSequence ScaleWeights(const WeightSequence &alpha, int target_len,
                            const CifConfig &cfg) {
  cfg.Validate();
  Require(target_len >= 1, "scale_weights: target length must be >= 1");
  const double sum = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  Require(sum > 0.0, "scale_weights: degenerate weights (sum == 0)");
  const double factor = cfg.beta * static_cast<double>(target_len) / sum;
  WeightSequence out(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) out[i] = alpha[i] * factor;
  return out;
}

namespace {

// Weight-only replica of the fold: firings as (frame, weight) term lists,
// same split rule, same tail rule.
struct WeightFiring {
  int fire_frame = 0;
  std::vector<std::pair<int, double>> terms;
  bool is_tail = false;
};

std::vector<WeightFiring> WeightFold(const WeightSequence &alpha,
                                     const CifConfig &cfg) {
  std::vector<WeightFiring> firings;
  std::vector<std::pair<int, double>> queue;
  double accumulated = 0.0;
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    const int frame = static_cast<int>(j) + 1;
    double remaining = alpha[j];
    Require(std::isfinite(remaining) && remaining >= 0.0,
            "expected_delays: bad weight");
    while (accumulated + remaining >= cfg.beta) {
      const double left = cfg.beta - accumulated;
      queue.emplace_back(frame, left);
      firings.push_back({frame, queue, false});
      queue.clear();
      accumulated = 0.0;
      remaining -= left;
    }
    queue.emplace_back(frame, remaining);
    accumulated += remaining;
  }
  if (!queue.empty() && accumulated >= cfg.tail_threshold)
    firings.push_back({static_cast<int>(alpha.size()), queue, true});
  return firings;
}

}  // namespace

std::vector<double> ExpectedDelays(const WeightSequence &alpha,
                                   const CifConfig &cfg, int target_len) {
  cfg.Validate();
  Require(target_len >= 1, "expected_delays: target length must be >= 1");
  auto firings = WeightFold(alpha, cfg);
  Require(static_cast<int>(firings.size()) >= target_len,
          "expected_delays: fewer firings than target length");
  std::vector<double> delays(target_len);
  for (int i = 0; i < target_len; ++i) {
    double d = 0.0;
    for (const auto &[frame, w] : firings[i].terms)
      d += w * static_cast<double>(frame);
    delays[i] = d / cfg.beta;
  }
  return delays;
}

Matrix ExpectedDelaysJacobian(const WeightSequence &alpha,
                              const CifConfig &cfg, int target_len) {
  cfg.Validate();
  const std::size_t n_frames = alpha.size();
  auto firings = WeightFold(alpha, cfg);
  Require(static_cast<int>(firings.size()) >= target_len,
          "expected_delays: fewer firings than target length");

  std::vector<double> prefix(n_frames + 1, 0.0);
  for (std::size_t j = 0; j < n_frames; ++j)
    prefix[j + 1] = prefix[j] + alpha[j];

  // Term weight of frame k in firing i is the overlap of [S_{k-1}, S_k]
  // with [(i-1)beta, i*beta] (tail: upper end unclamped). With split
  // points held fixed, each clamp contributes +-1 to all alphas at or
  // before its frame.
  Matrix jac(static_cast<std::size_t>(target_len), n_frames, 0.0);
  for (int i = 0; i < target_len; ++i) {
    const bool tail = firings[i].is_tail;
    const double lo = static_cast<double>(i) * cfg.beta;
    const double hi = static_cast<double>(i + 1) * cfg.beta;
    std::vector<double> bucket(n_frames + 1, 0.0);  // add to alpha_1..alpha_m
    for (const auto &[frame, w] : firings[i].terms) {
      (void)w;
      const std::size_t k = static_cast<std::size_t>(frame);
      const bool upper_active = tail || prefix[k] < hi;
      const bool lower_active = prefix[k - 1] > lo;
      const double coef = static_cast<double>(frame) / cfg.beta;
      if (upper_active) bucket[k] += coef;
      if (lower_active && k >= 1) bucket[k - 1] -= coef;
    }
    double carry = 0.0;
    for (std::size_t m = n_frames; m >= 1; --m) {
      carry += bucket[m];
      jac.at(static_cast<std::size_t>(i), m - 1) = carry;
    }
  }
  return jac;
}

CifBackwardResult EmbeddingBackward(const FeatureSequence &features,
                                    const WeightSequence &alpha,
                                    const CifConfig &cfg,
                                    const IntegrationTrace &trace,
                                    const Matrix &grad_embeddings) {
  const std::size_t n_frames = features.NumFrames();
  const std::size_t dim = features.Dim();
  Require(grad_embeddings.rows == trace.firings.size() &&
              grad_embeddings.cols == dim,
          "embedding_backward: gradient shape mismatch");

  std::vector<double> prefix(n_frames + 1, 0.0);
  for (std::size_t j = 0; j < n_frames; ++j)
    prefix[j + 1] = prefix[j] + alpha[j];

  CifBackwardResult result;
  result.grad_alpha.assign(n_frames, 0.0);
  result.grad_features = Matrix(n_frames, dim, 0.0);
  std::vector<double> bucket(n_frames + 1, 0.0);

  for (std::size_t fi = 0; fi < trace.firings.size(); ++fi) {
    const Firing &f = trace.firings[fi];
    const double lo = static_cast<double>(f.index - 1) * cfg.beta;
    const double hi = static_cast<double>(f.index) * cfg.beta;
    const double *gc = grad_embeddings.row(fi);
    for (const auto &[frame, w] : f.terms) {
      const std::size_t k = static_cast<std::size_t>(frame);
      // dL/dh_k += w * dL/dc_i
      double *gh = result.grad_features.row(k - 1);
      const double *hk = features.frames.row(k - 1);
      double dot = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        gh[c] += w * gc[c];
        dot += gc[c] * hk[c];
      }
      const bool upper_active = f.is_tail || prefix[k] < hi;
      const bool lower_active = prefix[k - 1] > lo;
      if (upper_active) bucket[k] += dot;
      if (lower_active && k >= 1) bucket[k - 1] -= dot;
    }
  }
  double carry = 0.0;
  for (std::size_t m = n_frames; m >= 1; --m) {
    carry += bucket[m];
    result.grad_alpha[m - 1] = carry;
  }
  return result;
}

std::vector<int> InferenceDelays(const IntegrationTrace &trace,
                                 int lookahead_frames, int total_frames) {
  std::vector<int> delays;
  delays.reserve(trace.firings.size());
  for (const auto &f : trace.firings)
    delays.push_back(std::min(f.fire_frame + lookahead_frames, total_frames));
  return delays;
}

}  // namespace cifsimul
