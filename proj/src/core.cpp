// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "cifsimul/core.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace cifsimul {

using nlohmann::json;

void FeatureSequence::Validate() const {
  Require(frames.rows >= 1 && frames.cols >= 1,
          "FeatureSequence: need U >= 1 and d >= 1");
  Require(frames.AllFinite(), "FeatureSequence: non-finite entry");
  Require(frame_duration_ms > 0.0,
          "FeatureSequence: frame_duration_ms must be positive");
}

std::optional<WeightViolation> ValidateWeights(const WeightSequence &w,
                                               bool scaled) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    double v = w[i];
    if (!std::isfinite(v))
      return WeightViolation{i, v, "non-finite weight"};
    if (scaled) {
      if (v < 0.0) return WeightViolation{i, v, "scaled weight < 0"};
    } else {
      if (v <= 0.0 || v >= 1.0)
        return WeightViolation{i, v, "raw weight outside (0,1)"};
    }
  }
  return std::nullopt;
}

void TargetSequence::Validate() const {
  Require(!tokens.empty(), "TargetSequence: need T >= 1");
  Require(vocab_size >= 2, "TargetSequence: vocab must hold a blank");
  for (int t : tokens) {
    Require(t >= 0 && t < vocab_size, "TargetSequence: token id out of range");
    Require(t != BlankId(), "TargetSequence: blank id may not appear");
  }
}

std::size_t ReadWriteTrace::NumWrites() const {
  std::size_t n = 0;
  for (const auto &e : events)
    if (e.kind == Event::Kind::kWrite) ++n;
  return n;
}

bool ReadWriteTrace::HasComputeStamps() const {
  for (const auto &e : events)
    if (e.kind == Event::Kind::kWrite && !e.compute_ms.has_value())
      return false;
  return NumWrites() > 0;
}

void ReadWriteTrace::Validate() const {
  Require(frame_ms > 0.0, "ReadWriteTrace: frame_ms must be positive");
  long long read_sum = 0;
  long long last_elapsed = -1;
  for (const auto &e : events) {
    if (e.kind == Event::Kind::kRead) {
      Require(e.frames >= 0, "ReadWriteTrace: negative READ");
      read_sum += e.frames;
    } else {
      Require(e.elapsed_frames == read_sum,
              "ReadWriteTrace: WRITE elapsed_frames does not match "
              "preceding READs");
      Require(e.elapsed_frames >= last_elapsed,
              "ReadWriteTrace: elapsed_frames must be non-decreasing");
      last_elapsed = e.elapsed_frames;
    }
  }
  Require(read_sum <= source_total_frames,
          "ReadWriteTrace: READs exceed source_total_frames");
}

std::string SerializeTrace(const ReadWriteTrace &trace) {
  std::ostringstream out;
  json header;
  header["frame_ms"] = trace.frame_ms;
  header["source_frames"] = trace.source_total_frames;
  header["target_len"] = trace.target_len;
  out << header.dump() << "\n";
  for (const auto &e : trace.events) {
    json line;
    if (e.kind == ReadWriteTrace::Event::Kind::kRead) {
      line["type"] = "read";
      line["frames"] = e.frames;
    } else {
      line["type"] = "write";
      line["token"] = e.token;
      line["elapsed_frames"] = e.elapsed_frames;
      if (e.compute_ms) line["compute_ms"] = *e.compute_ms;
    }
    out << line.dump() << "\n";
  }
  return out.str();
}

ReadWriteTrace ParseTrace(const std::string &jsonl) {
  std::istringstream in(jsonl);
  std::string line;
  ReadWriteTrace trace;
  bool saw_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error &e) {
      throw std::invalid_argument("trace line " + std::to_string(line_no) +
                                  ": " + e.what());
    }
    if (!saw_header) {
      Require(j.contains("frame_ms") && j.contains("source_frames") &&
                  j.contains("target_len"),
              "trace header missing fields");
      trace.frame_ms = j["frame_ms"].get<double>();
      trace.source_total_frames = j["source_frames"].get<int>();
      trace.target_len = j["target_len"].get<int>();
      saw_header = true;
      continue;
    }
    ReadWriteTrace::Event e;
    const std::string type = j.at("type").get<std::string>();
    if (type == "read") {
      e.kind = ReadWriteTrace::Event::Kind::kRead;
      e.frames = j.at("frames").get<int>();
    } else if (type == "write") {
      e.kind = ReadWriteTrace::Event::Kind::kWrite;
      e.token = j.at("token").get<int>();
      e.elapsed_frames = j.at("elapsed_frames").get<int>();
      if (j.contains("compute_ms"))
        e.compute_ms = j["compute_ms"].get<double>();
    } else {
      throw std::invalid_argument("trace line " + std::to_string(line_no) +
                                  ": unknown event type '" + type + "'");
    }
    trace.events.push_back(e);
  }
  Require(saw_header, "trace has no header line");
  trace.Validate();
  return trace;
}

ReadWriteTrace ReadTraceFile(const std::string &path) {
  std::ifstream in(path);
  Require(in.good(), "cannot open trace file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return ParseTrace(buf.str());
}

void WriteTraceFile(const ReadWriteTrace &trace, const std::string &path) {
  std::ofstream out(path);
  Require(out.good(), "cannot write trace file: " + path);
  out << SerializeTrace(trace);
}

std::string SerializeIntegrationTrace(const IntegrationTrace &trace) {
  std::ostringstream out;
  for (const auto &f : trace.firings) {
    json line;
    line["index"] = f.index;
    line["fire_frame"] = f.fire_frame;
    json terms = json::array();
    for (const auto &t : f.terms) terms.push_back({t.first, t.second});
    line["terms"] = terms;
    line["embedding"] = f.embedding;
    line["is_tail"] = f.is_tail;
    out << line.dump() << "\n";
  }
  return out.str();
}

IntegrationTrace ParseIntegrationTrace(const std::string &jsonl) {
  std::istringstream in(jsonl);
  std::string line;
  IntegrationTrace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    Firing f;
    f.index = j.at("index").get<int>();
    f.fire_frame = j.at("fire_frame").get<int>();
    for (const auto &t : j.at("terms"))
      f.terms.emplace_back(t.at(0).get<int>(), t.at(1).get<double>());
    f.embedding = j.at("embedding").get<std::vector<double>>();
    f.is_tail = j.at("is_tail").get<bool>();
    trace.firings.push_back(std::move(f));
  }
  return trace;
}

}  // namespace cifsimul
