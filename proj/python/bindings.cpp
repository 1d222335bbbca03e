// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Python bindings for the main operations.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cifsimul/cif.hpp"
#include "cifsimul/core.hpp"
#include "cifsimul/ctc.hpp"
#include "cifsimul/losses.hpp"
#include "cifsimul/metrics.hpp"
#include "cifsimul/simul.hpp"
#include "cifsimul/traintoy.hpp"

namespace py = pybind11;
using namespace cifsimul;

namespace {

Matrix MatrixFromRows(const std::vector<std::vector<double>> &rows) {
  Require(!rows.empty() && !rows.front().empty(), "empty matrix");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    Require(rows[r].size() == m.cols, "ragged matrix");
    for (std::size_t c = 0; c < m.cols; ++c) m.at(r, c) = rows[r][c];
  }
  return m;
}

FeatureSequence MakeFeatures(const std::vector<std::vector<double>> &rows,
                             double frame_ms) {
  FeatureSequence f;
  f.frames = MatrixFromRows(rows);
  f.frame_duration_ms = frame_ms;
  return f;
}

}  // namespace

PYBIND11_MODULE(_cifsimul, m) {
  m.doc() = "CIF simultaneous-translation policy engine";

  py::class_<CifConfig>(m, "CifConfig")
      .def(py::init<>())
      .def_readwrite("beta", &CifConfig::beta)
      .def_readwrite("tail_threshold", &CifConfig::tail_threshold);

  py::class_<Firing>(m, "Firing")
      .def_readonly("index", &Firing::index)
      .def_readonly("fire_frame", &Firing::fire_frame)
      .def_readonly("terms", &Firing::terms)
      .def_readonly("embedding", &Firing::embedding)
      .def_readonly("is_tail", &Firing::is_tail);

  py::class_<IntegrationTrace>(m, "IntegrationTrace")
      .def_readonly("firings", &IntegrationTrace::firings)
      .def("fire_frames", &IntegrationTrace::FireFrames);

  m.def(
      "integrate_and_fire",
      [](const std::vector<std::vector<double>> &frames,
         const std::vector<double> &alpha, const CifConfig &cfg,
         double frame_ms) {
        return IntegrateAndFire(MakeFeatures(frames, frame_ms), alpha, cfg);
      },
      py::arg("frames"), py::arg("alpha"), py::arg("cfg") = CifConfig{},
      py::arg("frame_ms") = 40.0);

  m.def(
      "scale_weights",
      [](const std::vector<double> &alpha, int target_len,
         const CifConfig &cfg) { return ScaleWeights(alpha, target_len, cfg); },
      py::arg("alpha"), py::arg("target_len"), py::arg("cfg") = CifConfig{});

  m.def(
      "expected_delays",
      [](const std::vector<double> &alpha, int target_len,
         const CifConfig &cfg) {
        return ExpectedDelays(alpha, cfg, target_len);
      },
      py::arg("alpha"), py::arg("target_len"), py::arg("cfg") = CifConfig{});

  m.def(
      "ctc_loss",
      [](const std::vector<std::vector<double>> &log_probs,
         const std::vector<int> &tokens) {
        EmissionGrid grid;
        grid.log_probs = MatrixFromRows(log_probs);
        grid.blank_id = static_cast<int>(grid.VocabSize()) - 1;
        TargetSequence y;
        y.tokens = tokens;
        y.vocab_size = static_cast<int>(grid.VocabSize());
        return CtcLoss(grid, y);
      },
      py::arg("log_probs"), py::arg("tokens"));

  m.def(
      "ctc_forced_alignment",
      [](const std::vector<std::vector<double>> &log_probs,
         const std::vector<int> &tokens) {
        EmissionGrid grid;
        grid.log_probs = MatrixFromRows(log_probs);
        grid.blank_id = static_cast<int>(grid.VocabSize()) - 1;
        TargetSequence y;
        y.tokens = tokens;
        y.vocab_size = static_cast<int>(grid.VocabSize());
        const auto path = CtcForcedAlignment(grid, y);
        return py::make_tuple(path.labels, path.boundary_map);
      },
      py::arg("log_probs"), py::arg("tokens"));

  m.def("quantity_loss_seq", &QuantityLossSeq, py::arg("alpha"),
        py::arg("target_len"), py::arg("beta") = 1.0);
  m.def("quantity_loss_token", &QuantityLossToken, py::arg("alpha"),
        py::arg("boundaries"), py::arg("target_len"), py::arg("beta") = 1.0);
  m.def("dal_latency_loss", &DalLatencyLoss, py::arg("delays"),
        py::arg("source_len"), py::arg("target_len"));

  m.def("average_proportion", &AverageProportion, py::arg("delays_ms"),
        py::arg("source_ms"), py::arg("target_len"));
  m.def("average_lagging", &AverageLagging, py::arg("delays_ms"),
        py::arg("source_ms"), py::arg("target_len_ref"));
  m.def("dal_metric", &DalMetric, py::arg("delays_ms"), py::arg("source_ms"),
        py::arg("target_len"));

  m.def(
      "evaluate_trace_jsonl",
      [](const std::string &jsonl) {
        const auto rep = EvaluateTrace(ParseTrace(jsonl));
        py::dict d;
        d["ap"] = rep.ap;
        d["al_ms"] = rep.al_ms;
        d["dal_ms"] = rep.dal_ms;
        if (rep.dal_ca_ms) d["dal_ca_ms"] = *rep.dal_ca_ms;
        if (rep.delta_ms) d["delta_ms"] = *rep.delta_ms;
        d["target_len"] = rep.target_len;
        d["source_ms"] = rep.source_ms;
        return d;
      },
      py::arg("jsonl"));

  m.def("ila_mask", &IlaMask, py::arg("target_len"));
  m.def("gelu", &Gelu, py::arg("x"));

  m.def(
      "synth_corpus_json",
      [](const std::string &config_json) {
        return SerializeCorpus(SynthTask(ParseSynthConfig(config_json)));
      },
      py::arg("config_json"));

  m.def(
      "run_cif_policy_scripted",
      [](const std::vector<std::vector<double>> &frames,
         const std::vector<double> &alpha, const std::vector<int> &tokens,
         int vocab_size, const CifConfig &cif_cfg, int main_frames,
         int lookahead_frames, double frame_ms) {
        BlockConfig block;
        block.main_frames = main_frames;
        block.lookahead_frames = lookahead_frames;
        TargetSequence target;
        target.tokens = tokens;
        target.vocab_size = vocab_size;
        auto run =
            RunCifPolicy(MakeFeatures(frames, frame_ms),
                         ScriptedPredictor(alpha), EchoDecoder(target),
                         cif_cfg, block);
        return py::make_tuple(SerializeTrace(run.trace),
                              run.integration.FireFrames());
      },
      py::arg("frames"), py::arg("alpha"), py::arg("tokens"),
      py::arg("vocab_size"), py::arg("cfg") = CifConfig{},
      py::arg("main_frames") = 16, py::arg("lookahead_frames") = 8,
      py::arg("frame_ms") = 40.0);
}
