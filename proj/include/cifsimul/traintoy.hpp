// cifsimul/traintoy.hpp
//
// A minimal differentiable stack: the CIF weight predictor (causal conv,
// layer norm, GELU, linear, sigmoid), the position-wise fusion, the
// infinite-lookback mask, a toy softmax head, deterministic gradient
// descent on the synthetic task, and a finite-difference checker.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef CIFSIMUL_TRAINTOY_HPP
#define CIFSIMUL_TRAINTOY_HPP

#include <array>
#include <functional>
#include <vector>

#include "cifsimul/cif.hpp"
#include "cifsimul/core.hpp"
#include "cifsimul/simul.hpp"

namespace cifsimul {

// Exact GELU: x * Phi(x) with the normal CDF.
double Gelu(double x);
double GeluGrad(double x);

/// Weight predictor parameters. The convolution (kernel width 3) is
/// strictly causal: tap 0 applies to frame j-2, tap 2 to frame j.
struct WeightPredictorParams {
  std::array<Matrix, 3> conv;    // each d x d, no bias
  std::vector<double> ln_gain;   // d
  std::vector<double> ln_bias;   // d
  std::vector<double> proj;      // d -> 1
  double proj_bias = 0.0;

  std::size_t Dim() const { return proj.size(); }
  std::vector<double> Flatten() const;
  void Unflatten(const std::vector<double> &flat);
  void Scale(double s);
  void Axpy(double s, const WeightPredictorParams &other);
};

WeightPredictorParams ZeroPredictorParams(std::size_t dim);

/// alpha_j = sigmoid(proj . GELU(layernorm(conv(x)_j)) + bias), in (0,1).
WeightSequence WeightPredictorForward(const FeatureSequence &x,
                                      const WeightPredictorParams &p);

struct PredictorBackwardResult {
  WeightPredictorParams grad;
  Matrix grad_input;  // zero when stop_gradient is set
};
PredictorBackwardResult WeightPredictorBackward(
    const FeatureSequence &x, const WeightPredictorParams &p,
    const std::vector<double> &grad_alpha, bool stop_gradient);

/// Position-wise fusion of an integrated embedding with a decoder state:
/// W_o GELU(W_s c + W_t s + b).
struct FusionParams {
  Matrix w_out, w_source, w_target;  // d x d
  std::vector<double> bias;          // d

  std::vector<double> Flatten() const;
  void Unflatten(const std::vector<double> &flat);
};

std::vector<double> PositionwiseFusion(const std::vector<double> &c,
                                       const std::vector<double> &s,
                                       const FusionParams &p);

struct FusionBackwardResult {
  FusionParams grad;
  std::vector<double> grad_c;
  std::vector<double> grad_s;
};
FusionBackwardResult PositionwiseFusionBackward(
    const std::vector<double> &c, const std::vector<double> &s,
    const FusionParams &p, const std::vector<double> &grad_out);

/// Infinite-lookback attention mask: (i, k) allowed iff k <= i (1-based).
std::vector<std::vector<bool>> IlaMask(int target_len);

/// Max over coordinates of |analytic - central| / max(1e-8, |a| + |c|).
double FdGradCheck(const std::function<double(const std::vector<double> &)> &f,
                   const std::vector<double> &point,
                   const std::vector<double> &analytic_grad,
                   double eps = 1e-5);

/// The trainable toy model. The CE head (fusion + learned per-position
/// decoder states + linear softmax) is optional; the policy itself only
/// needs the predictor.
struct ToyModel {
  WeightPredictorParams predictor;
  bool has_ce_head = false;
  FusionParams fusion;
  Matrix decoder_states;        // max_positions x d (stand-in for s_i)
  Matrix softmax_w;             // vocab x d
  std::vector<double> softmax_b;

  std::string ToJson() const;
  static ToyModel FromJson(const std::string &text);
};

struct TrainHyper {
  double lr = 0.05;
  int steps = 400;
  unsigned long long seed = 0;
  bool use_ce = false;
  int max_positions = 32;
};

struct TrainResult {
  ToyModel model;
  std::vector<double> loss_curve;  // mean total loss per step
};

ToyModel InitToyModel(std::size_t dim, int vocab_size, const TrainHyper &h);

/// Deterministic full-batch gradient descent on
/// lambda_qua * token-level quantity loss (true boundaries)
/// + lambda_lat * DAL over expected delays of the scaled weights
/// (+ cross-entropy of the softmax head over fused states, weight 1,
/// when use_ce is set). Zero steps returns the initialization.
TrainResult TrainToy(const std::vector<SyntheticUtterance> &corpus,
                     const LossWeights &weights, const TrainHyper &hyper,
                     const CifConfig &cif_cfg, const ToyModel *init = nullptr);

/// Variant of the quantity-loss wiring that takes boundaries from CTC
/// forced alignment over a toy emission head instead of the synthetic
/// ground truth. Exercises the full auxiliary-alignment path.
std::vector<std::pair<int, int>> CtcBoundariesForUtterance(
    const SyntheticUtterance &utt, const Matrix &emission_w,
    const std::vector<double> &emission_b);

WeightPredictor ModelPredictor(const WeightPredictorParams &params);
EmbeddingDecoder GreedyDecoder(const ToyModel &model);

struct PolicyEval {
  double exact_fire_fraction = 0.0;   // firings == T
  double boundary_hit_fraction = 0.0; // firings within the frame tolerance
};
PolicyEval EvaluatePolicy(const ToyModel &model,
                          const std::vector<SyntheticUtterance> &corpus,
                          const CifConfig &cif_cfg, int tolerance_frames = 2);

}  // namespace cifsimul

#endif  // CIFSIMUL_TRAINTOY_HPP
