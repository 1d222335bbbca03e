// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "cifsimul/ctc.hpp"

#include <algorithm>
#include <cmath>

namespace cifsimul {

namespace {

constexpr double kNegInf = -1e30;

double LogSumExp2(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b <= kNegInf) return a;
  return a + std::log1p(std::exp(b - a));
}

double LogSumExp3(double a, double b, double c) {
  return LogSumExp2(LogSumExp2(a, b), c);
}

// Blank-interleaved extended label sequence: phi y_1 phi y_2 ... y_T phi.
std::vector<int> ExtendedLabels(const TargetSequence &target) {
  std::vector<int> ext;
  ext.reserve(2 * target.tokens.size() + 1);
  ext.push_back(target.BlankId());
  for (int tok : target.tokens) {
    ext.push_back(tok);
    ext.push_back(target.BlankId());
  }
  return ext;
}

int AdjacentRepeats(const TargetSequence &target) {
  int n = 0;
  for (std::size_t i = 1; i < target.tokens.size(); ++i)
    if (target.tokens[i] == target.tokens[i - 1]) ++n;
  return n;
}

void CheckInputs(const EmissionGrid &emissions, const TargetSequence &target) {
  target.Validate();
  Require(emissions.NumFrames() >= 1, "ctc: empty emission grid");
  Require(emissions.blank_id ==
              static_cast<int>(emissions.VocabSize()) - 1 &&
          emissions.blank_id == target.BlankId(),
          "ctc: blank id must be vocab_size - 1 on both sides");
  Require(CtcFeasible(emissions, target),
          "ctc: target infeasible for this input length");
}

// Forward log-alphas over (frame, extended state); alpha includes the
// emission at its own frame.
Matrix ForwardAlphas(const EmissionGrid &e, const std::vector<int> &ext) {
  const std::size_t n_frames = e.NumFrames();
  const std::size_t n_states = ext.size();
  Matrix la(n_frames, n_states, kNegInf);
  la.at(0, 0) = e.log_probs.at(0, ext[0]);
  if (n_states > 1) la.at(0, 1) = e.log_probs.at(0, ext[1]);
  for (std::size_t u = 1; u < n_frames; ++u) {
    for (std::size_t s = 0; s < n_states; ++s) {
      double acc = la.at(u - 1, s);
      if (s >= 1) acc = LogSumExp2(acc, la.at(u - 1, s - 1));
      if (s >= 2 && ext[s] != ext[0] && ext[s] != ext[s - 2])
        acc = LogSumExp2(acc, la.at(u - 1, s - 2));
      la.at(u, s) = acc + e.log_probs.at(u, ext[s]);
    }
  }
  return la;
}

}  // namespace

void EmissionGrid::Validate(double tol) const {
  Require(blank_id >= 0 && blank_id < static_cast<int>(VocabSize()),
          "EmissionGrid: blank id out of range");
  for (std::size_t u = 0; u < NumFrames(); ++u) {
    double m = kNegInf;
    for (std::size_t v = 0; v < VocabSize(); ++v)
      m = std::max(m, log_probs.at(u, v));
    double s = 0.0;
    for (std::size_t v = 0; v < VocabSize(); ++v)
      s += std::exp(log_probs.at(u, v) - m);
    Require(std::abs(m + std::log(s)) <= tol,
            "EmissionGrid: row is not log-normalized");
  }
}

bool CtcFeasible(const EmissionGrid &emissions, const TargetSequence &target) {
  return static_cast<int>(emissions.NumFrames()) >=
         static_cast<int>(target.tokens.size()) + AdjacentRepeats(target);
}

double CtcLoss(const EmissionGrid &emissions, const TargetSequence &target) {
  CheckInputs(emissions, target);
  const auto ext = ExtendedLabels(target);
  const Matrix la = ForwardAlphas(emissions, ext);
  const std::size_t u = emissions.NumFrames() - 1;
  const std::size_t S = ext.size();
  double log_p = la.at(u, S - 1);
  if (S >= 2) log_p = LogSumExp2(log_p, la.at(u, S - 2));
  return -log_p;
}

Matrix CtcLossGrad(const EmissionGrid &emissions,
                   const TargetSequence &target) {
  CheckInputs(emissions, target);
  const auto ext = ExtendedLabels(target);
  const std::size_t n_frames = emissions.NumFrames();
  const std::size_t n_states = ext.size();
  const Matrix la = ForwardAlphas(emissions, ext);

  // Backward pass; lb also includes the emission at its own frame.
  Matrix lb(n_frames, n_states, kNegInf);
  lb.at(n_frames - 1, n_states - 1) =
      emissions.log_probs.at(n_frames - 1, ext[n_states - 1]);
  if (n_states >= 2)
    lb.at(n_frames - 1, n_states - 2) =
        emissions.log_probs.at(n_frames - 1, ext[n_states - 2]);
  for (std::size_t u = n_frames - 1; u-- > 0;) {
    for (std::size_t s = 0; s < n_states; ++s) {
      double acc = lb.at(u + 1, s);
      if (s + 1 < n_states) acc = LogSumExp2(acc, lb.at(u + 1, s + 1));
      if (s + 2 < n_states && ext[s + 2] != ext[0] && ext[s + 2] != ext[s])
        acc = LogSumExp2(acc, lb.at(u + 1, s + 2));
      lb.at(u, s) = acc + emissions.log_probs.at(u, ext[s]);
    }
  }

  double log_p = la.at(n_frames - 1, n_states - 1);
  if (n_states >= 2)
    log_p = LogSumExp2(log_p, la.at(n_frames - 1, n_states - 2));

  Matrix grad(n_frames, emissions.VocabSize(), 0.0);
  for (std::size_t u = 0; u < n_frames; ++u) {
    std::vector<double> acc(emissions.VocabSize(), kNegInf);
    for (std::size_t s = 0; s < n_states; ++s)
      acc[ext[s]] = LogSumExp2(acc[ext[s]], la.at(u, s) + lb.at(u, s));
    for (std::size_t v = 0; v < emissions.VocabSize(); ++v) {
      if (acc[v] <= kNegInf) continue;
      // alpha*beta double-counts the emission at u; divide it back out.
      grad.at(u, v) =
          -std::exp(acc[v] - log_p - emissions.log_probs.at(u, v));
    }
  }
  return grad;
}

AlignmentPath CtcForcedAlignment(const EmissionGrid &emissions,
                                 const TargetSequence &target) {
  CheckInputs(emissions, target);
  const auto ext = ExtendedLabels(target);
  const std::size_t n_frames = emissions.NumFrames();
  const std::size_t n_states = ext.size();

  Matrix delta(n_frames, n_states, kNegInf);
  std::vector<std::vector<int>> back(n_frames,
                                     std::vector<int>(n_states, -1));
  delta.at(0, 0) = emissions.log_probs.at(0, ext[0]);
  if (n_states > 1) delta.at(0, 1) = emissions.log_probs.at(0, ext[1]);
  for (std::size_t u = 1; u < n_frames; ++u) {
    for (std::size_t s = 0; s < n_states; ++s) {
      // Tie-break order: stay, blank (s-1), advance (s-2).
      double best = delta.at(u - 1, s);
      int from = static_cast<int>(s);
      if (s >= 1 && delta.at(u - 1, s - 1) > best) {
        best = delta.at(u - 1, s - 1);
        from = static_cast<int>(s) - 1;
      }
      if (s >= 2 && ext[s] != ext[0] && ext[s] != ext[s - 2] &&
          delta.at(u - 1, s - 2) > best) {
        best = delta.at(u - 1, s - 2);
        from = static_cast<int>(s) - 2;
      }
      if (best > kNegInf) {
        delta.at(u, s) = best + emissions.log_probs.at(u, ext[s]);
        back[u][s] = from;
      }
    }
  }

  std::size_t s = n_states - 1;
  if (n_states >= 2 &&
      delta.at(n_frames - 1, n_states - 2) > delta.at(n_frames - 1, s))
    s = n_states - 2;
  Require(delta.at(n_frames - 1, s) > kNegInf,
          "forced_alignment: no valid path");

  AlignmentPath path;
  path.labels.assign(n_frames, 0);
  for (std::size_t u = n_frames; u-- > 0;) {
    // Odd extended states are tokens; state 2i+1 is target position i+1.
    path.labels[u] = (s % 2 == 1) ? static_cast<int>((s + 1) / 2) : 0;
    if (u > 0) s = static_cast<std::size_t>(back[u][s]);
  }
  path.boundary_map = ExtractBoundaries(path);
  return path;
}

std::vector<std::pair<int, int>> ExtractBoundaries(const AlignmentPath &path) {
  std::vector<std::pair<int, int>> boundaries;
  const std::size_t n = path.labels.size();
  for (std::size_t j = 0; j < n; ++j) {
    const int lab = path.labels[j];
    if (lab == 0) continue;
    const int next = (j + 1 < n) ? path.labels[j + 1] : 0;
    if (lab != next) boundaries.emplace_back(static_cast<int>(j) + 1, lab);
  }
  return boundaries;
}

BruteForceCtcResult BruteForceCtc(const EmissionGrid &emissions,
                                  const TargetSequence &target) {
  target.Validate();
  const std::size_t n_frames = emissions.NumFrames();
  const std::size_t vocab = emissions.VocabSize();
  Require(n_frames <= 8 && target.tokens.size() <= 4 && vocab <= 4,
          "brute_force_ctc: enumeration bounds exceeded");

  std::vector<int> path(n_frames, 0);
  BruteForceCtcResult result;
  result.best_path_log_prob = kNegInf;
  double total_prob = 0.0;
  bool any = false;

  const int blank = emissions.blank_id;
  while (true) {
    // Collapse: drop repeats, then blanks.
    std::vector<int> collapsed;
    for (std::size_t u = 0; u < n_frames; ++u) {
      if (u > 0 && path[u] == path[u - 1]) continue;
      if (path[u] != blank) collapsed.push_back(path[u]);
    }
    if (collapsed == target.tokens) {
      double lp = 0.0;
      for (std::size_t u = 0; u < n_frames; ++u)
        lp += emissions.log_probs.at(u, path[u]);
      total_prob += std::exp(lp);
      any = true;
      if (lp > result.best_path_log_prob) {
        result.best_path_log_prob = lp;
        result.best_path = path;
      }
    }
    // Next path in lexicographic order.
    std::size_t u = 0;
    while (u < n_frames && path[u] == static_cast<int>(vocab) - 1)
      path[u++] = 0;
    if (u == n_frames) break;
    ++path[u];
  }
  Require(any, "brute_force_ctc: no valid path (infeasible)");
  result.loss = -std::log(total_prob);
  return result;
}

}  // namespace cifsimul
