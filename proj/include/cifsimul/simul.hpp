// cifsimul/simul.hpp
//
// Streaming execution: block-wise source delivery, the CIF adaptive
// policy runner, the wait-k fixed baseline, long-utterance construction
// and the synthetic task generator.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef CIFSIMUL_SIMUL_HPP
#define CIFSIMUL_SIMUL_HPP

#include <functional>
#include <optional>
#include <vector>

#include "cifsimul/cif.hpp"
#include "cifsimul/core.hpp"

namespace cifsimul {

/// Block streaming geometry. Defaults are 16 main + 8 look-ahead frames,
/// i.e. 640 ms / 320 ms at 40 ms per frame.
struct BlockConfig {
  int main_frames = 16;
  int lookahead_frames = 8;

  void Validate() const {
    Require(main_frames >= 1 && lookahead_frames >= 0,
            "BlockConfig: need main >= 1 and lookahead >= 0");
  }
};

/// One streaming block; 1-based inclusive frame spans. The available
/// span extends lookahead past the main span, clamped at U.
struct Block {
  int main_begin = 0;
  int main_end = 0;
  int avail_end = 0;
};

std::vector<Block> StreamBlocks(int total_frames, const BlockConfig &cfg);

/// Causal weight predictor: alpha for frame j (1-based) may depend only
/// on frames <= j.
using WeightPredictor =
    std::function<double(const FeatureSequence &, int frame)>;

/// Queried once per firing with all integrated embeddings so far.
/// Returns the next token id, or nullopt for end-of-sequence.
using EmbeddingDecoder = std::function<std::optional<int>(
    const std::vector<std::vector<double>> &)>;

/// Wait-k decoder: token for the i-th write position (1-based), or
/// nullopt when done.
using PositionDecoder = std::function<std::optional<int>(int)>;

struct PolicyRunResult {
  ReadWriteTrace trace;
  IntegrationTrace integration;
};

/// CIF adaptive policy over streaming blocks. READ events count newly
/// available frames (main plus look-ahead growth) so that each WRITE's
/// elapsed_frames equals the source actually consumed. Inference always
/// uses raw (unscaled) weights. Firings keep being recorded after the
/// decoder stops, but no further WRITEs are emitted.
PolicyRunResult RunCifPolicy(const FeatureSequence &features,
                             const WeightPredictor &predictor,
                             const EmbeddingDecoder &decoder,
                             const CifConfig &cif_cfg,
                             const BlockConfig &block_cfg);

/// Fixed baseline: read k blocks, then alternate one WRITE / one READ;
/// after source exhaustion, write until the decoder stops.
ReadWriteTrace RunWaitkPolicy(const FeatureSequence &features,
                              const PositionDecoder &decoder, int k,
                              const BlockConfig &block_cfg);

struct SyntheticUtterance {
  FeatureSequence features;
  TargetSequence target;
  std::vector<int> true_boundaries;  // 1-based last frame of each segment
  int talk_id = 0;
};

/// Greedy concatenation within each talk, in original order, until each
/// result lasts at least min_seconds. The trailing remainder of a talk
/// is emitted as-is. min_seconds == 0 returns the input unchanged.
std::vector<SyntheticUtterance> ConcatLongUtterances(
    const std::vector<SyntheticUtterance> &utterances, double min_seconds);

struct SynthConfig {
  int n_utts = 64;
  int target_len_min = 3;
  int target_len_max = 8;
  int segment_len_min = 4;
  int segment_len_max = 10;
  int feature_dim = 8;
  int vocab_size = 12;  // includes the reserved blank
  double noise = 0.1;
  double frame_ms = 40.0;
  int utts_per_talk = 4;
  unsigned long long seed = 0;

  void Validate() const;
};

/// Deterministic synthetic corpus. Each token spans a sampled segment;
/// features carry the token embedding on channels 1.. and a boundary cue
/// of amplitude 1 on channel 0 at each segment's last frame, plus
/// Gaussian noise.
std::vector<SyntheticUtterance> SynthTask(const SynthConfig &cfg);

// Corpus manifest (JSON) for the CLI.
std::string SerializeCorpus(const std::vector<SyntheticUtterance> &corpus);
std::vector<SyntheticUtterance> ParseCorpus(const std::string &text);
std::string SerializeSynthConfig(const SynthConfig &cfg);
SynthConfig ParseSynthConfig(const std::string &text);

// Shipped predictor/decoder plumbing.
WeightPredictor ScriptedPredictor(WeightSequence alphas);
EmbeddingDecoder EchoDecoder(TargetSequence target);
PositionDecoder PositionEchoDecoder(TargetSequence target);

}  // namespace cifsimul

#endif  // CIFSIMUL_SIMUL_HPP
