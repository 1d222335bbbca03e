// cifsimul/cif.hpp
//
// The continuous integrate-and-fire mechanism: incremental and offline
// firing, training-time weight scaling, tail handling, expected delays
// and their analytic gradients.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef CIFSIMUL_CIF_HPP
#define CIFSIMUL_CIF_HPP

#include <optional>
#include <vector>

#include "cifsimul/core.hpp"

namespace cifsimul {

/// Accumulation queues between steps. A value type: stepping is pure in
/// the sense that (state, frame) -> (state', firings) with no hidden
/// globals, so independent streams can run on independent threads.
struct CifState {
  std::vector<double> queue_weights;
  std::vector<int> queue_frame_indices;            // 1-based
  std::vector<std::vector<double>> queue_frames;   // copies of h_j
  double accumulated = 0.0;
  int frames_seen = 0;
  int fired = 0;  // firings emitted so far (assigns Firing::index)
};

/// Feed one frame. If accumulated + alpha stays below beta the frame is
/// queued; otherwise alpha is split into the part topping the queue up
/// to beta (integrated) and the remainder (requeued). Scaled weights can
/// exceed beta, so one frame may emit several firings.
std::vector<Firing> CifStep(CifState &state, const std::vector<double> &h,
                            double alpha, const CifConfig &cfg);

/// Residual fire at end of input: if the leftover accumulation reaches
/// tail_threshold, emit it unnormalized, flagged is_tail.
std::optional<Firing> TailHandle(CifState &state, const CifConfig &cfg);

/// Fold CifStep over the whole sequence, then TailHandle.
IntegrationTrace IntegrateAndFire(const FeatureSequence &features,
                                  const WeightSequence &alpha,
                                  const CifConfig &cfg);

/// alpha' = alpha * beta * T / sum(alpha). Output sums to beta*T.
WeightSequence ScaleWeights(const WeightSequence &alpha, int target_len,
                            const CifConfig &cfg);

/// Expected delay of each target token in frames:
/// d_i = (1/beta) * sum over the i-th firing's terms of weight * frame.
/// Requires the firing structure of alpha (with tail handling) to yield
/// at least target_len firings.
std::vector<double> ExpectedDelays(const WeightSequence &alpha,
                                   const CifConfig &cfg, int target_len);

/// Jacobian d(delay_i)/d(alpha_j), T x U. The split points are treated
/// as locally constant, so this is the piecewise-linear derivative away
/// from threshold ties.
Matrix ExpectedDelaysJacobian(const WeightSequence &alpha,
                              const CifConfig &cfg, int target_len);

/// Backward pass through the integrated embeddings: given upstream
/// gradients dL/dc_i (one row per firing of `trace`), accumulate
/// dL/dalpha and dL/dh under the same fixed-split convention.
struct CifBackwardResult {
  std::vector<double> grad_alpha;  // length U
  Matrix grad_features;            // U x d
};
CifBackwardResult EmbeddingBackward(const FeatureSequence &features,
                                    const WeightSequence &alpha,
                                    const CifConfig &cfg,
                                    const IntegrationTrace &trace,
                                    const Matrix &grad_embeddings);

/// Measured per-token delays at inference: firing frame plus the block
/// look-ahead, clamped at U.
std::vector<int> InferenceDelays(const IntegrationTrace &trace,
                                 int lookahead_frames, int total_frames);

}  // namespace cifsimul

#endif  // CIFSIMUL_CIF_HPP
