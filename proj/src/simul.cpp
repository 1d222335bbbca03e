// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "cifsimul/simul.hpp"

#include <algorithm>
#include <random>

#include "json.hpp"

namespace cifsimul {

using nlohmann::json;

std::vector<Block> StreamBlocks(int total_frames, const BlockConfig &cfg) {
  cfg.Validate();
  Require(total_frames >= 1, "stream_blocks: empty sequence");
  std::vector<Block> blocks;
  for (int begin = 1; begin <= total_frames; begin += cfg.main_frames) {
    Block b;
    b.main_begin = begin;
    b.main_end = std::min(begin + cfg.main_frames - 1, total_frames);
    b.avail_end = std::min(b.main_end + cfg.lookahead_frames, total_frames);
    blocks.push_back(b);
  }
  return blocks;
}

PolicyRunResult RunCifPolicy(const FeatureSequence &features,
                             const WeightPredictor &predictor,
                             const EmbeddingDecoder &decoder,
                             const CifConfig &cif_cfg,
                             const BlockConfig &block_cfg) {
  features.Validate();
  cif_cfg.Validate();
  const int total = static_cast<int>(features.NumFrames());

  PolicyRunResult result;
  result.trace.frame_ms = features.frame_duration_ms;
  result.trace.source_total_frames = total;

  CifState state;
  std::vector<double> h(features.Dim());
  std::vector<std::vector<double>> embeddings;
  int available = 0;
  bool stopped = false;

  auto emit_firing = [&](Firing &&firing) {
    embeddings.push_back(firing.embedding);
    result.integration.firings.push_back(std::move(firing));
    if (stopped) return;
    const auto token = decoder(embeddings);
    if (!token) {
      stopped = true;
      return;
    }
    ReadWriteTrace::Event w;
    w.kind = ReadWriteTrace::Event::Kind::kWrite;
    w.token = *token;
    w.elapsed_frames = available;
    result.trace.events.push_back(w);
  };

  for (const Block &block : StreamBlocks(total, block_cfg)) {
    const int newly_available = block.avail_end - available;
    if (newly_available > 0) {
      ReadWriteTrace::Event r;
      r.kind = ReadWriteTrace::Event::Kind::kRead;
      r.frames = newly_available;
      result.trace.events.push_back(r);
      available = block.avail_end;
    }
    for (int j = block.main_begin; j <= block.main_end; ++j) {
      std::copy(features.frames.row(j - 1),
                features.frames.row(j - 1) + features.Dim(), h.begin());
      for (auto &firing : CifStep(state, h, predictor(features, j), cif_cfg))
        emit_firing(std::move(firing));
    }
  }
  if (auto tail = TailHandle(state, cif_cfg)) emit_firing(std::move(*tail));

  result.trace.target_len = static_cast<int>(result.trace.NumWrites());
  return result;
}

ReadWriteTrace RunWaitkPolicy(const FeatureSequence &features,
                              const PositionDecoder &decoder, int k,
                              const BlockConfig &block_cfg) {
  features.Validate();
  Require(k >= 1, "waitk: k must be >= 1");
  const int total = static_cast<int>(features.NumFrames());
  const auto blocks = StreamBlocks(total, block_cfg);

  ReadWriteTrace trace;
  trace.frame_ms = features.frame_duration_ms;
  trace.source_total_frames = total;

  int available = 0;
  std::size_t next_block = 0;
  auto read_block = [&]() {
    const Block &b = blocks[next_block++];
    if (b.avail_end > available) {
      ReadWriteTrace::Event r;
      r.kind = ReadWriteTrace::Event::Kind::kRead;
      r.frames = b.avail_end - available;
      trace.events.push_back(r);
      available = b.avail_end;
    }
  };

  for (int i = 0; i < k && next_block < blocks.size(); ++i) read_block();
  for (int position = 1;; ++position) {
    const auto token = decoder(position);
    if (!token) break;
    ReadWriteTrace::Event w;
    w.kind = ReadWriteTrace::Event::Kind::kWrite;
    w.token = *token;
    w.elapsed_frames = available;
    trace.events.push_back(w);
    if (next_block < blocks.size()) read_block();
  }
  trace.target_len = static_cast<int>(trace.NumWrites());
  return trace;
}

std::vector<SyntheticUtterance> ConcatLongUtterances(
    const std::vector<SyntheticUtterance> &utterances, double min_seconds) {
  Require(min_seconds >= 0.0, "longutt: negative duration");
  if (min_seconds == 0.0) return utterances;

  // Talks in order of first appearance; utterances keep original order.
  std::vector<int> talk_order;
  for (const auto &u : utterances)
    if (std::find(talk_order.begin(), talk_order.end(), u.talk_id) ==
        talk_order.end())
      talk_order.push_back(u.talk_id);

  std::vector<SyntheticUtterance> out;
  for (int talk : talk_order) {
    SyntheticUtterance acc;
    double acc_seconds = 0.0;
    bool open = false;
    for (const auto &u : utterances) {
      if (u.talk_id != talk) continue;
      if (!open) {
        acc = u;
        open = true;
      } else {
        const int offset = static_cast<int>(acc.features.NumFrames());
        Matrix &dst = acc.features.frames;
        const Matrix &src = u.features.frames;
        Require(dst.cols == src.cols, "longutt: feature dim mismatch");
        dst.data.insert(dst.data.end(), src.data.begin(), src.data.end());
        dst.rows += src.rows;
        acc.target.tokens.insert(acc.target.tokens.end(),
                                 u.target.tokens.begin(),
                                 u.target.tokens.end());
        for (int b : u.true_boundaries)
          acc.true_boundaries.push_back(b + offset);
      }
      acc_seconds = acc.features.NumFrames() *
                    acc.features.frame_duration_ms / 1000.0;
      if (acc_seconds >= min_seconds) {
        out.push_back(std::move(acc));
        acc = SyntheticUtterance{};
        open = false;
      }
    }
    if (open) out.push_back(std::move(acc));
  }
  return out;
}

void SynthConfig::Validate() const {
  Require(n_utts >= 1, "synth: n_utts must be >= 1");
  Require(target_len_min >= 1 && target_len_max >= target_len_min,
          "synth: bad target length range");
  Require(segment_len_min >= 1 && segment_len_max >= segment_len_min,
          "synth: bad segment length range");
  Require(feature_dim >= 2, "synth: feature_dim must be >= 2");
  Require(vocab_size >= 3, "synth: vocab too small");
  Require(noise >= 0.0, "synth: negative noise");
  Require(frame_ms > 0.0, "synth: frame_ms must be positive");
  Require(utts_per_talk >= 1, "synth: utts_per_talk must be >= 1");
}

std::vector<SyntheticUtterance> SynthTask(const SynthConfig &cfg) {
  cfg.Validate();
  std::mt19937_64 rng(cfg.seed);
  const int n_tokens = cfg.vocab_size - 1;  // blank reserved

  // Fixed per-token embedding on channels 1..d-1.
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Matrix embed(n_tokens, cfg.feature_dim - 1);
  for (double &v : embed.data) v = unit(rng);

  std::uniform_int_distribution<int> len_dist(cfg.target_len_min,
                                              cfg.target_len_max);
  std::uniform_int_distribution<int> seg_dist(cfg.segment_len_min,
                                              cfg.segment_len_max);
  std::uniform_int_distribution<int> tok_dist(0, n_tokens - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<SyntheticUtterance> corpus;
  corpus.reserve(cfg.n_utts);
  for (int u = 0; u < cfg.n_utts; ++u) {
    SyntheticUtterance utt;
    utt.talk_id = u / cfg.utts_per_talk;
    const int target_len = len_dist(rng);
    utt.target.vocab_size = cfg.vocab_size;

    std::vector<int> seg_lens(target_len);
    int total_frames = 0;
    for (int &s : seg_lens) {
      s = seg_dist(rng);
      total_frames += s;
    }
    utt.features.frame_duration_ms = cfg.frame_ms;
    utt.features.frames = Matrix(total_frames, cfg.feature_dim, 0.0);

    int frame = 0;
    for (int i = 0; i < target_len; ++i) {
      const int tok = tok_dist(rng);
      utt.target.tokens.push_back(tok);
      for (int s = 0; s < seg_lens[i]; ++s, ++frame) {
        double *row = utt.features.frames.row(frame);
        row[0] = (s == seg_lens[i] - 1) ? 1.0 : 0.0;  // boundary cue
        for (int c = 1; c < cfg.feature_dim; ++c)
          row[c] = embed.at(tok, c - 1);
      }
      utt.true_boundaries.push_back(frame);  // 1-based last frame
    }
    if (cfg.noise > 0.0)
      for (double &v : utt.features.frames.data) v += cfg.noise * gauss(rng);
    corpus.push_back(std::move(utt));
  }
  return corpus;
}

std::string SerializeCorpus(const std::vector<SyntheticUtterance> &corpus) {
  json root;
  root["version"] = 1;
  json utts = json::array();
  for (const auto &u : corpus) {
    json j;
    j["talk_id"] = u.talk_id;
    j["tokens"] = u.target.tokens;
    j["vocab_size"] = u.target.vocab_size;
    j["boundaries"] = u.true_boundaries;
    j["frame_ms"] = u.features.frame_duration_ms;
    json rows = json::array();
    for (std::size_t r = 0; r < u.features.NumFrames(); ++r) {
      json row = json::array();
      for (std::size_t c = 0; c < u.features.Dim(); ++c)
        row.push_back(u.features.frames.at(r, c));
      rows.push_back(std::move(row));
    }
    j["frames"] = std::move(rows);
    utts.push_back(std::move(j));
  }
  root["utterances"] = std::move(utts);
  return root.dump();
}

std::vector<SyntheticUtterance> ParseCorpus(const std::string &text) {
  const json root = json::parse(text);
  std::vector<SyntheticUtterance> corpus;
  for (const auto &j : root.at("utterances")) {
    SyntheticUtterance u;
    u.talk_id = j.at("talk_id").get<int>();
    u.target.tokens = j.at("tokens").get<std::vector<int>>();
    u.target.vocab_size = j.at("vocab_size").get<int>();
    u.true_boundaries = j.at("boundaries").get<std::vector<int>>();
    u.features.frame_duration_ms = j.at("frame_ms").get<double>();
    const auto &rows = j.at("frames");
    Require(!rows.empty(), "corpus: empty utterance");
    u.features.frames =
        Matrix(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < u.features.Dim(); ++c)
        u.features.frames.at(r, c) = rows[r][c].get<double>();
    corpus.push_back(std::move(u));
  }
  return corpus;
}

std::string SerializeSynthConfig(const SynthConfig &cfg) {
  json j;
  j["n_utts"] = cfg.n_utts;
  j["target_len_min"] = cfg.target_len_min;
  j["target_len_max"] = cfg.target_len_max;
  j["segment_len_min"] = cfg.segment_len_min;
  j["segment_len_max"] = cfg.segment_len_max;
  j["feature_dim"] = cfg.feature_dim;
  j["vocab_size"] = cfg.vocab_size;
  j["noise"] = cfg.noise;
  j["frame_ms"] = cfg.frame_ms;
  j["utts_per_talk"] = cfg.utts_per_talk;
  j["seed"] = cfg.seed;
  return j.dump();
}

SynthConfig ParseSynthConfig(const std::string &text) {
  const json j = json::parse(text);
  SynthConfig cfg;
  if (j.contains("n_utts")) cfg.n_utts = j["n_utts"].get<int>();
  if (j.contains("target_len_min"))
    cfg.target_len_min = j["target_len_min"].get<int>();
  if (j.contains("target_len_max"))
    cfg.target_len_max = j["target_len_max"].get<int>();
  if (j.contains("segment_len_min"))
    cfg.segment_len_min = j["segment_len_min"].get<int>();
  if (j.contains("segment_len_max"))
    cfg.segment_len_max = j["segment_len_max"].get<int>();
  if (j.contains("feature_dim")) cfg.feature_dim = j["feature_dim"].get<int>();
  if (j.contains("vocab_size")) cfg.vocab_size = j["vocab_size"].get<int>();
  if (j.contains("noise")) cfg.noise = j["noise"].get<double>();
  if (j.contains("frame_ms")) cfg.frame_ms = j["frame_ms"].get<double>();
  if (j.contains("utts_per_talk"))
    cfg.utts_per_talk = j["utts_per_talk"].get<int>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<unsigned long long>();
  cfg.Validate();
  return cfg;
}

WeightPredictor ScriptedPredictor(WeightSequence alphas) {
  return [alphas = std::move(alphas)](const FeatureSequence &, int frame) {
    Require(frame >= 1 && frame <= static_cast<int>(alphas.size()),
            "scripted predictor: frame out of range");
    return alphas[frame - 1];
  };
}

EmbeddingDecoder EchoDecoder(TargetSequence target) {
  return [target = std::move(target)](
             const std::vector<std::vector<double>> &embeddings)
             -> std::optional<int> {
    const std::size_t i = embeddings.size();  // firing count so far
    if (i > target.tokens.size()) return std::nullopt;
    return target.tokens[i - 1];
  };
}

PositionDecoder PositionEchoDecoder(TargetSequence target) {
  return [target = std::move(target)](int position) -> std::optional<int> {
    if (position < 1 || position > static_cast<int>(target.tokens.size()))
      return std::nullopt;
    return target.tokens[position - 1];
  };
}

}  // namespace cifsimul
