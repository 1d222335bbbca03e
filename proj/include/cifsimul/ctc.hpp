// cifsimul/ctc.hpp
//
// CTC loss, Viterbi forced alignment and boundary extraction. All DP in
// log-space; the brute-force enumerator is the verification oracle.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef CIFSIMUL_CTC_HPP
#define CIFSIMUL_CTC_HPP

#include <vector>

#include "cifsimul/core.hpp"

namespace cifsimul {

/// Per-frame log-probabilities over the vocabulary (blank included).
struct EmissionGrid {
  Matrix log_probs;  // U x V
  int blank_id = 0;

  std::size_t NumFrames() const { return log_probs.rows; }
  std::size_t VocabSize() const { return log_probs.cols; }
  // Checks rows log-sum-exp to ~0. Not called on the loss path: gradient
  // checks perturb individual entries.
  void Validate(double tol = 1e-6) const;
};

/// Feasibility: U >= T + number of adjacent repeats in y.
bool CtcFeasible(const EmissionGrid &emissions, const TargetSequence &target);

/// Negative log-likelihood, summed over all valid alignment paths.
double CtcLoss(const EmissionGrid &emissions, const TargetSequence &target);

/// d(loss)/d(log_probs) via forward-backward posteriors. U x V.
Matrix CtcLossGrad(const EmissionGrid &emissions, const TargetSequence &target);

/// Maximum-probability valid path (Viterbi over the blank-interleaved
/// label sequence). Ties prefer stay, then blank, then advance.
AlignmentPath CtcForcedAlignment(const EmissionGrid &emissions,
                                 const TargetSequence &target);

/// Boundaries: frames j with a_j != blank and a_j != a_{j+1}
/// (a_{U+1} := blank), mapped to the 1-based index of the aligned token.
std::vector<std::pair<int, int>> ExtractBoundaries(const AlignmentPath &path);

/// Exhaustive enumeration oracle. Bounds: U <= 8, T <= 4, V <= 4.
struct BruteForceCtcResult {
  double loss = 0.0;
  std::vector<int> best_path;       // token ids per frame (incl. blank id)
  double best_path_log_prob = 0.0;
};
BruteForceCtcResult BruteForceCtc(const EmissionGrid &emissions,
                                  const TargetSequence &target);

}  // namespace cifsimul

#endif  // CIFSIMUL_CTC_HPP
