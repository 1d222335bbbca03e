// cifsimul/core.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef CIFSIMUL_CORE_HPP
#define CIFSIMUL_CORE_HPP

#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cifsimul {

inline void Require(bool cond, const std::string &msg) {
  if (!cond) throw std::invalid_argument(msg);
}

/// Dense row-major matrix of doubles. Used for feature grids, emission
/// grids and toy-model parameters.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double &at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  const double *row(std::size_t r) const { return data.data() + r * cols; }
  double *row(std::size_t r) { return data.data() + r * cols; }

  bool AllFinite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

/// Encoder states h_1..h_U with the wall-clock span of one frame.
/// Default 40 ms: 10 ms feature shift times two stride-2 convolutions.
struct FeatureSequence {
  Matrix frames;                   // U x d
  double frame_duration_ms = 40.0;

  std::size_t NumFrames() const { return frames.rows; }
  std::size_t Dim() const { return frames.cols; }
  void Validate() const;
};

/// Per-frame firing weights alpha_1..alpha_U.
using WeightSequence = std::vector<double>;

struct WeightViolation {
  std::size_t index;
  double value;
  std::string message;
};

/// Raw weights are sigmoid outputs and must lie in (0,1); scaled weights
/// may exceed 1 and must only be non-negative and finite.
std::optional<WeightViolation> ValidateWeights(const WeightSequence &w,
                                               bool scaled);

struct CifConfig {
  double beta = 1.0;
  double tail_threshold = 0.5;  // beta / 2

  void Validate() const {
    Require(beta > 0.0, "CifConfig: beta must be positive");
    Require(tail_threshold > 0.0 && tail_threshold <= beta,
            "CifConfig: tail_threshold must be in (0, beta]");
  }
};

/// One CIF firing: which frames contributed, with what weights, and the
/// integrated embedding they produced.
struct Firing {
  int index = 0;       // 1-based target position
  int fire_frame = 0;  // 1-based frame index where the firing triggered
  std::vector<std::pair<int, double>> terms;  // (1-based frame, weight)
  std::vector<double> embedding;
  bool is_tail = false;

  double WeightSum() const {
    double s = 0.0;
    for (const auto &t : terms) s += t.second;
    return s;
  }
};

struct IntegrationTrace {
  std::vector<Firing> firings;

  std::vector<int> FireFrames() const {
    std::vector<int> out;
    out.reserve(firings.size());
    for (const auto &f : firings) out.push_back(f.fire_frame);
    return out;
  }
};

struct TargetSequence {
  std::vector<int> tokens;
  int vocab_size = 0;

  // Blank id is vocab_size - 1 in all CTC interfaces.
  int BlankId() const { return vocab_size - 1; }
  void Validate() const;
};

/// CTC alignment a_1..a_U. Labels hold the 1-based target position at
/// each frame, 0 meaning blank. boundary_map pairs (frame j, t_j) in
/// increasing frame order.
struct AlignmentPath {
  std::vector<int> labels;
  std::vector<std::pair<int, int>> boundary_map;
};

/// Ordered READ/WRITE events, the input to all latency metrics.
struct ReadWriteTrace {
  struct Event {
    enum class Kind { kRead, kWrite };
    Kind kind;
    int frames = 0;          // READ: number of source frames consumed
    int token = 0;           // WRITE: emitted token id
    int elapsed_frames = 0;  // WRITE: source frames read before this write
    std::optional<double> compute_ms;  // WRITE: wall-clock stamp
  };

  std::vector<Event> events;
  int source_total_frames = 0;
  int target_len = 0;
  double frame_ms = 40.0;

  std::size_t NumWrites() const;
  bool HasComputeStamps() const;
  void Validate() const;
};

struct LossWeights {
  double lambda_ctc = 0.3;
  double lambda_qua = 1.0;
  double lambda_lat = 0.0;

  void Validate() const {
    Require(std::isfinite(lambda_ctc) && lambda_ctc >= 0.0 &&
                std::isfinite(lambda_qua) && lambda_qua >= 0.0 &&
                std::isfinite(lambda_lat) && lambda_lat >= 0.0,
            "LossWeights: lambdas must be finite and non-negative");
  }
};

inline double FramesToMs(double n_frames, double frame_duration_ms) {
  Require(n_frames >= 0.0, "FramesToMs: negative frame count");
  return n_frames * frame_duration_ms;
}

// ReadWriteTrace JSONL format. First line is a header object
// {"frame_ms":40,"source_frames":U,"target_len":T}; each following line
// is {"type":"read","frames":n} or
// {"type":"write","token":id,"elapsed_frames":n,"compute_ms":x}.
std::string SerializeTrace(const ReadWriteTrace &trace);
ReadWriteTrace ParseTrace(const std::string &jsonl);
ReadWriteTrace ReadTraceFile(const std::string &path);
void WriteTraceFile(const ReadWriteTrace &trace, const std::string &path);

// IntegrationTrace JSONL (one firing per line) for the CLI plot command.
std::string SerializeIntegrationTrace(const IntegrationTrace &trace);
IntegrationTrace ParseIntegrationTrace(const std::string &jsonl);

}  // namespace cifsimul

#endif  // CIFSIMUL_CORE_HPP
