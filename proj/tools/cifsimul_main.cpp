// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Command-line front end: simulation, latency metrics, policy plotting,
// gradient checking, toy training and long-utterance construction.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "cifsimul/cif.hpp"
#include "cifsimul/core.hpp"
#include "cifsimul/ctc.hpp"
#include "cifsimul/losses.hpp"
#include "cifsimul/metrics.hpp"
#include "cifsimul/simul.hpp"
#include "cifsimul/traintoy.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cifsimul;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string ReadFileOrThrow(const std::string &path) {
  std::ifstream in(path);
  if (!in.good()) throw UsageError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void WriteFileOrThrow(const std::string &path, const std::string &content) {
  std::ofstream out(path);
  if (!out.good()) throw UsageError("cannot write file: " + path);
  out << content;
}

int ThreadBudget() {
  if (const char *env = std::getenv("CIF_SIMUL_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Ordered parallel map across utterances; results land at their index.
template <typename Fn>
void ParallelFor(std::size_t n, Fn &&fn) {
  const int threads = std::min<int>(ThreadBudget(), static_cast<int>(n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1))
        fn(i);
    });
  for (auto &th : pool) th.join();
}

Matrix ReadCsvMatrix(const std::string &path) {
  std::ifstream in(path);
  if (!in.good()) throw UsageError("cannot open CSV: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw UsageError("ragged CSV: " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw UsageError("empty CSV: " + path);
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < m.cols; ++c) m.at(r, c) = rows[r][c];
  return m;
}

// Oracle predictor from true boundaries: near-zero interior weight, a
// compensating spike at each boundary so the cumulative sum hits the
// token index exactly at the boundary frame.
WeightPredictor OraclePredictor(const SyntheticUtterance &utt) {
  constexpr double kInterior = 1e-6;
  WeightSequence alphas(utt.features.NumFrames(), kInterior);
  int prev = 0;
  for (int b : utt.true_boundaries) {
    alphas[b - 1] = 1.0 - static_cast<double>(b - 1 - prev) * kInterior;
    prev = b;
  }
  return ScriptedPredictor(std::move(alphas));
}

struct CommonOpts {
  double beta = 1.0;
  double tail = -1.0;  // default beta/2
  double frame_ms = 40.0;
  double block_ms = 640.0;
  double lookahead_ms = 320.0;

  CifConfig Cif() const {
    CifConfig cfg;
    cfg.beta = beta;
    cfg.tail_threshold = tail > 0.0 ? tail : beta / 2.0;
    return cfg;
  }
  BlockConfig Blocks() const {
    BlockConfig b;
    b.main_frames = std::max(1, static_cast<int>(block_ms / frame_ms + 0.5));
    b.lookahead_frames =
        std::max(0, static_cast<int>(lookahead_ms / frame_ms + 0.5));
    return b;
  }
};

void AddCommonOpts(CLI::App *cmd, CommonOpts &opts) {
  cmd->add_option("--beta", opts.beta, "CIF firing threshold");
  cmd->add_option("--tail", opts.tail, "tail threshold (default beta/2)");
  cmd->add_option("--frame-ms", opts.frame_ms, "encoder frame duration, ms");
  cmd->add_option("--block-ms", opts.block_ms, "streaming main context, ms");
  cmd->add_option("--lookahead-ms", opts.lookahead_ms,
                  "streaming look-ahead, ms");
}

std::vector<SyntheticUtterance> LoadCorpus(const std::string &synth_path,
                                           const std::string &corpus_path,
                                           unsigned long long seed_override,
                                           bool has_seed) {
  if (!synth_path.empty()) {
    SynthConfig cfg = ParseSynthConfig(ReadFileOrThrow(synth_path));
    if (has_seed) cfg.seed = seed_override;
    return SynthTask(cfg);
  }
  if (!corpus_path.empty()) return ParseCorpus(ReadFileOrThrow(corpus_path));
  throw UsageError("need --synth or --corpus");
}

// ---------------------------------------------------------------------------
// simulate

int CmdSimulate(const std::string &synth_path, const std::string &corpus_path,
                const std::string &features_path,
                const std::string &weights_path,
                const std::string &params_path, const std::string &out_dir,
                const std::string &policy, int k, double compute_ms,
                unsigned long long seed, bool has_seed,
                const CommonOpts &opts) {
  fs::create_directories(out_dir);
  const CifConfig cif_cfg = opts.Cif();
  const BlockConfig block_cfg = opts.Blocks();

  std::vector<SyntheticUtterance> corpus;
  std::vector<WeightSequence> scripted;  // per utterance, may be empty
  if (!features_path.empty()) {
    SyntheticUtterance utt;
    utt.features.frames = ReadCsvMatrix(features_path);
    utt.features.frame_duration_ms = opts.frame_ms;
    utt.target.vocab_size = 2;
    if (weights_path.empty())
      throw UsageError("--features requires --weights (scripted predictor)");
    const Matrix w = ReadCsvMatrix(weights_path);
    WeightSequence alphas(w.data.begin(), w.data.end());
    if (alphas.size() != utt.features.NumFrames())
      throw UsageError("--weights length does not match --features rows");
    // Echo decoder needs some target; token 0 per firing.
    utt.target.tokens.assign(utt.features.NumFrames(), 0);
    corpus.push_back(std::move(utt));
    scripted.push_back(std::move(alphas));
  } else {
    corpus = LoadCorpus(synth_path, corpus_path, seed, has_seed);
  }

  std::optional<ToyModel> model;
  if (!params_path.empty())
    model = ToyModel::FromJson(ReadFileOrThrow(params_path));

  std::vector<std::string> trace_files(corpus.size());
  ParallelFor(corpus.size(), [&](std::size_t i) {
    const auto &utt = corpus[i];
    ReadWriteTrace trace;
    IntegrationTrace integration;
    if (policy == "waitk") {
      trace = RunWaitkPolicy(utt.features, PositionEchoDecoder(utt.target), k,
                             block_cfg);
    } else {
      WeightPredictor predictor =
          !scripted.empty() ? ScriptedPredictor(scripted[i])
          : model           ? ModelPredictor(model->predictor)
                            : OraclePredictor(utt);
      auto run = RunCifPolicy(utt.features, predictor,
                              EchoDecoder(utt.target), cif_cfg, block_cfg);
      trace = std::move(run.trace);
      integration = std::move(run.integration);
    }
    if (compute_ms > 0.0)
      for (auto &e : trace.events)
        if (e.kind == ReadWriteTrace::Event::Kind::kWrite)
          e.compute_ms = compute_ms;

    char name[64];
    std::snprintf(name, sizeof(name), "utt_%05zu", i);
    const std::string base = (fs::path(out_dir) / name).string();
    WriteFileOrThrow(base + ".trace.jsonl", SerializeTrace(trace));
    if (policy != "waitk")
      WriteFileOrThrow(base + ".integration.jsonl",
                       SerializeIntegrationTrace(integration));
    trace_files[i] = std::string(name) + ".trace.jsonl";
  });

  json index;
  index["policy"] = policy;
  index["n_utts"] = corpus.size();
  index["traces"] = trace_files;
  WriteFileOrThrow((fs::path(out_dir) / "index.json").string(),
                   index.dump(2) + "\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// metrics

json ReportToJson(const LatencyReport &r) {
  json j;
  j["ap"] = r.ap;
  j["al_ms"] = r.al_ms;
  j["dal_ms"] = r.dal_ms;
  if (r.dal_ca_ms) j["dal_ca_ms"] = *r.dal_ca_ms;
  if (r.delta_ms) j["delta_ms"] = *r.delta_ms;
  j["target_len"] = r.target_len;
  j["source_ms"] = r.source_ms;
  return j;
}

int CmdMetrics(const std::string &trace_dir, const std::string &out_path,
               const std::string &csv_path) {
  std::vector<fs::path> files;
  if (!fs::is_directory(trace_dir))
    throw UsageError("not a directory: " + trace_dir);
  for (const auto &entry : fs::directory_iterator(trace_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 12 &&
        name.substr(name.size() - 12) == ".trace.jsonl")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw UsageError("no *.trace.jsonl in " + trace_dir);

  std::vector<LatencyReport> reports(files.size());
  std::vector<std::string> errors(files.size());
  ParallelFor(files.size(), [&](std::size_t i) {
    try {
      reports[i] = EvaluateTrace(ReadTraceFile(files[i].string()));
    } catch (const std::exception &e) {
      errors[i] = files[i].string() + ": " + e.what();
    }
  });
  for (const auto &err : errors)
    if (!err.empty()) throw UsageError(err);

  json out;
  json rows = json::array();
  std::ostringstream csv;
  csv << "utterance,ap,al_ms,dal_ms,dal_ca_ms,delta_ms,target_len,source_ms\n";
  for (std::size_t i = 0; i < files.size(); ++i) {
    json row = ReportToJson(reports[i]);
    row["utterance"] = files[i].filename().string();
    rows.push_back(row);
    const auto &r = reports[i];
    csv << files[i].filename().string() << "," << r.ap << "," << r.al_ms
        << "," << r.dal_ms << ",";
    if (r.dal_ca_ms) csv << *r.dal_ca_ms;
    csv << ",";
    if (r.delta_ms) csv << *r.delta_ms;
    csv << "," << r.target_len << "," << r.source_ms << "\n";
  }
  out["utterances"] = rows;
  out["mean"] = ReportToJson(AverageReports(reports));
  if (!out_path.empty()) WriteFileOrThrow(out_path, out.dump(2) + "\n");
  else std::cout << out.dump(2) << "\n";
  if (!csv_path.empty()) WriteFileOrThrow(csv_path, csv.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// plot-policy

int CmdPlotPolicy(const std::string &trace_path,
                  const std::string &integration_path,
                  const std::string &svg_path, const std::string &csv_path) {
  const ReadWriteTrace trace = ReadTraceFile(trace_path);
  IntegrationTrace integration;
  if (!integration_path.empty())
    integration = ParseIntegrationTrace(ReadFileOrThrow(integration_path));

  // Staircase: (elapsed source frames, target index) at each WRITE.
  std::vector<std::pair<int, int>> steps;
  int token_index = 0;
  for (const auto &e : trace.events)
    if (e.kind == ReadWriteTrace::Event::Kind::kWrite)
      steps.emplace_back(e.elapsed_frames, ++token_index);
  if (!integration.firings.empty() &&
      integration.firings.size() >= steps.size()) {
    // Prefer firing frames when available: they mark the CIF decision.
    steps.clear();
    for (const auto &f : integration.firings)
      steps.emplace_back(f.fire_frame, f.index);
  }

  std::ostringstream csv;
  csv << "frame,token_index\n";
  for (const auto &[frame, idx] : steps) csv << frame << "," << idx << "\n";
  WriteFileOrThrow(csv_path, csv.str());

  const int width = 640, height = 400, margin = 40;
  const double max_x = std::max(1, trace.source_total_frames);
  const double max_y = std::max<std::size_t>(1, steps.size());
  auto sx = [&](double f) {
    return margin + f / max_x * (width - 2 * margin);
  };
  auto sy = [&](double t) {
    return height - margin - t / max_y * (height - 2 * margin);
  };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << margin << "\" y1=\"" << height - margin
      << "\" x2=\"" << width - margin << "\" y2=\"" << height - margin
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\""
      << margin << "\" y2=\"" << height - margin
      << "\" stroke=\"black\"/>\n";
  double px = 0.0, py = 0.0;
  for (const auto &[frame, idx] : steps) {
    // Read segment (red), then write step (blue).
    svg << "<line x1=\"" << sx(px) << "\" y1=\"" << sy(py) << "\" x2=\""
        << sx(frame) << "\" y2=\"" << sy(py)
        << "\" stroke=\"red\" stroke-width=\"2\"/>\n";
    svg << "<line x1=\"" << sx(frame) << "\" y1=\"" << sy(py) << "\" x2=\""
        << sx(frame) << "\" y2=\"" << sy(idx)
        << "\" stroke=\"blue\" stroke-width=\"2\"/>\n";
    svg << "<circle cx=\"" << sx(frame) << "\" cy=\"" << sy(idx)
        << "\" r=\"3\" fill=\"blue\"/>\n";
    px = frame;
    py = idx;
  }
  svg << "</svg>\n";
  WriteFileOrThrow(svg_path, svg.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

int CmdGradcheck(unsigned long long seed, double tolerance) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const CifConfig cif_cfg;
  double worst = 0.0;
  bool ok = true;

  auto report = [&](const std::string &name, double err) {
    worst = std::max(worst, err);
    const bool pass = err < tolerance;
    ok = ok && pass;
    std::cout << (pass ? "ok   " : "FAIL ") << name << "  max rel err "
              << err << "\n";
  };

  {  // sequence quantity loss
    std::vector<double> alpha(12);
    for (double &a : alpha) a = unif(rng);
    const int target_len = 5;
    auto f = [&](const std::vector<double> &x) {
      return QuantityLossSeq(x, target_len, cif_cfg.beta);
    };
    report("quantity_seq",
           FdGradCheck(f, alpha, GradQuantitySeq(alpha, target_len,
                                                 cif_cfg.beta)));
  }
  {  // token quantity loss
    std::vector<double> alpha(12);
    for (double &a : alpha) a = unif(rng);
    std::vector<std::pair<int, int>> boundaries{{4, 1}, {8, 2}, {12, 3}};
    auto f = [&](const std::vector<double> &x) {
      return QuantityLossToken(x, boundaries, 3, cif_cfg.beta);
    };
    report("quantity_token",
           FdGradCheck(f, alpha,
                       GradQuantityToken(alpha, boundaries, 3, cif_cfg.beta)));
  }
  {  // DAL over delays, away from ties
    std::vector<double> delays{1.3, 4.1, 5.2, 9.9};
    auto f = [&](const std::vector<double> &d) {
      return DalLatencyLoss(d, 12.0, 4);
    };
    report("dal", FdGradCheck(f, delays, GradDal(delays, 12.0, 4)));
  }
  {  // expected delays (scalar probe: sum of delays)
    std::vector<double> alpha(10);
    for (double &a : alpha) a = unif(rng);
    const int target_len =
        std::max(1, static_cast<int>(
                        std::accumulate(alpha.begin(), alpha.end(), 0.0)) -
                        1);
    auto f = [&](const std::vector<double> &x) {
      const auto d = ExpectedDelays(x, cif_cfg, target_len);
      return std::accumulate(d.begin(), d.end(), 0.0);
    };
    const Matrix jac = ExpectedDelaysJacobian(alpha, cif_cfg, target_len);
    std::vector<double> grad(alpha.size(), 0.0);
    for (std::size_t i = 0; i < jac.rows; ++i)
      for (std::size_t j = 0; j < jac.cols; ++j) grad[j] += jac.at(i, j);
    report("expected_delays", FdGradCheck(f, alpha, grad));
  }
  {  // fusion
    const std::size_t d = 4;
    FusionParams p;
    p.w_out = Matrix(d, d);
    p.w_source = Matrix(d, d);
    p.w_target = Matrix(d, d);
    p.bias.assign(d, 0.0);
    for (Matrix *m : {&p.w_out, &p.w_source, &p.w_target})
      for (double &v : m->data) v = 0.3 * gauss(rng);
    std::vector<double> c(d), s(d), probe(d);
    for (auto *v : {&c, &s, &probe})
      for (double &x : *v) x = gauss(rng);
    auto f = [&](const std::vector<double> &flat) {
      FusionParams q = p;
      q.Unflatten(flat);
      const auto out = PositionwiseFusion(c, s, q);
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) acc += probe[i] * out[i];
      return acc;
    };
    const auto back = PositionwiseFusionBackward(c, s, p, probe);
    report("fusion", FdGradCheck(f, p.Flatten(), back.grad.Flatten()));
  }
  {  // ctc loss wrt log-probs
    const std::size_t n_frames = 6, vocab = 3;
    EmissionGrid grid;
    grid.blank_id = static_cast<int>(vocab) - 1;
    grid.log_probs = Matrix(n_frames, vocab);
    for (double &v : grid.log_probs.data) v = -1.0 + 0.5 * gauss(rng);
    TargetSequence y;
    y.vocab_size = static_cast<int>(vocab);
    y.tokens = {0, 1};
    auto f = [&](const std::vector<double> &flat) {
      EmissionGrid g = grid;
      g.log_probs.data = flat;
      return CtcLoss(g, y);
    };
    report("ctc_loss",
           FdGradCheck(f, grid.log_probs.data, CtcLossGrad(grid, y).data));
  }
  {  // weight predictor parameters
    const std::size_t d = 4, n_frames = 7;
    FeatureSequence x;
    x.frames = Matrix(n_frames, d);
    for (double &v : x.frames.data) v = gauss(rng);
    WeightPredictorParams p = ZeroPredictorParams(d);
    for (auto &m : p.conv)
      for (double &v : m.data) v = 0.2 * gauss(rng);
    std::fill(p.ln_gain.begin(), p.ln_gain.end(), 1.0);
    for (double &v : p.proj) v = 0.2 * gauss(rng);
    std::vector<double> probe(n_frames);
    for (double &v : probe) v = gauss(rng);
    auto f = [&](const std::vector<double> &flat) {
      WeightPredictorParams q = p;
      q.Unflatten(flat);
      const auto alpha = WeightPredictorForward(x, q);
      double acc = 0.0;
      for (std::size_t j = 0; j < n_frames; ++j) acc += probe[j] * alpha[j];
      return acc;
    };
    const auto back = WeightPredictorBackward(x, p, probe, true);
    report("weight_predictor",
           FdGradCheck(f, p.Flatten(), back.grad.Flatten()));
  }

  std::cout << "worst " << worst << (ok ? " (all ok)" : " (FAILURES)")
            << "\n";
  return ok ? kExitOk : kExitInternal;
}

// ---------------------------------------------------------------------------
// train-toy / longutt

int CmdTrainToy(const std::string &synth_path, const std::string &corpus_path,
                const std::string &init_path, const std::string &out_path,
                const std::string &curve_path, const LossWeights &weights,
                const TrainHyper &hyper, unsigned long long seed,
                bool has_seed, const CommonOpts &opts) {
  auto corpus = LoadCorpus(synth_path, corpus_path, seed, has_seed);
  std::optional<ToyModel> init;
  if (!init_path.empty())
    init = ToyModel::FromJson(ReadFileOrThrow(init_path));
  const auto result = TrainToy(corpus, weights, hyper, opts.Cif(),
                               init ? &*init : nullptr);
  WriteFileOrThrow(out_path, result.model.ToJson() + "\n");
  if (!curve_path.empty()) {
    std::ostringstream csv;
    csv << "step,loss\n";
    for (std::size_t i = 0; i < result.loss_curve.size(); ++i)
      csv << i << "," << result.loss_curve[i] << "\n";
    WriteFileOrThrow(curve_path, csv.str());
  }
  if (!result.loss_curve.empty())
    std::cout << "final loss " << result.loss_curve.back() << "\n";
  return kExitOk;
}

int CmdLongutt(const std::string &corpus_path, double min_seconds,
               const std::string &out_path) {
  const auto corpus = ParseCorpus(ReadFileOrThrow(corpus_path));
  const auto merged = ConcatLongUtterances(corpus, min_seconds);
  WriteFileOrThrow(out_path, SerializeCorpus(merged) + "\n");
  std::cout << merged.size() << " utterances\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"CIF simultaneous-translation policy engine"};
  app.require_subcommand(1);

  // simulate
  auto *sim = app.add_subcommand("simulate", "run a policy, write traces");
  std::string sim_synth, sim_corpus, sim_features, sim_weights, sim_params,
      sim_out;
  std::string sim_policy = "cif";
  int sim_k = 2;
  double sim_compute = 0.0;
  unsigned long long sim_seed = 0;
  CommonOpts sim_opts;
  sim->add_option("--synth", sim_synth, "synthetic corpus config JSON");
  sim->add_option("--corpus", sim_corpus, "corpus manifest JSON");
  sim->add_option("--features", sim_features, "feature CSV (rows = frames)");
  sim->add_option("--weights", sim_weights, "scripted alpha CSV");
  sim->add_option("--params", sim_params, "trained model JSON");
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--policy", sim_policy, "cif or waitk")
      ->check(CLI::IsMember({"cif", "waitk"}));
  sim->add_option("--k", sim_k, "wait-k blocks");
  sim->add_option("--compute-ms", sim_compute,
                  "stamp each WRITE with this compute time");
  auto *sim_seed_opt = sim->add_option("--seed", sim_seed, "synthesis seed");
  AddCommonOpts(sim, sim_opts);

  // metrics
  auto *met = app.add_subcommand("metrics", "latency metrics over traces");
  std::string met_dir, met_out, met_csv;
  met->add_option("--traces", met_dir, "directory of *.trace.jsonl")
      ->required();
  met->add_option("--out", met_out, "JSON report path");
  met->add_option("--csv", met_csv, "CSV row file");

  // plot-policy
  auto *plot = app.add_subcommand("plot-policy", "read/write staircase plot");
  std::string plot_trace, plot_integration, plot_svg, plot_csv;
  plot->add_option("--trace", plot_trace, "trace JSONL")->required();
  plot->add_option("--integration", plot_integration, "integration JSONL");
  plot->add_option("--svg", plot_svg, "output SVG")->required();
  plot->add_option("--csv", plot_csv, "output CSV")->required();

  // gradcheck
  auto *grad = app.add_subcommand("gradcheck", "finite-difference suite");
  unsigned long long grad_seed = 0;
  double grad_tol = 1e-4;
  bool grad_all = false;
  grad->add_flag("--all", grad_all, "run every check (default)");
  grad->add_option("--seed", grad_seed, "probe seed");
  grad->add_option("--tolerance", grad_tol, "max relative error");

  // train-toy
  auto *train = app.add_subcommand("train-toy", "train the toy CIF model");
  std::string train_synth, train_corpus, train_init, train_out, train_curve;
  LossWeights train_weights;
  TrainHyper train_hyper;
  unsigned long long train_seed = 0;
  CommonOpts train_opts;
  train->add_option("--synth", train_synth, "synthetic corpus config JSON");
  train->add_option("--corpus", train_corpus, "corpus manifest JSON");
  train->add_option("--init", train_init, "initial checkpoint JSON");
  train->add_option("--out", train_out, "trained model JSON")->required();
  train->add_option("--curve", train_curve, "loss curve CSV");
  train->add_option("--lambda-ctc", train_weights.lambda_ctc, "ctc weight");
  train->add_option("--lambda-qua", train_weights.lambda_qua,
                    "quantity weight");
  train->add_option("--lambda-lat", train_weights.lambda_lat,
                    "latency weight");
  train->add_option("--lr", train_hyper.lr, "learning rate");
  train->add_option("--steps", train_hyper.steps, "gradient steps");
  train->add_flag("--ce", train_hyper.use_ce, "train the CE head too");
  auto *train_seed_opt =
      train->add_option("--seed", train_seed, "training / synthesis seed");
  AddCommonOpts(train, train_opts);

  // longutt
  auto *lng = app.add_subcommand("longutt", "concatenate long utterances");
  std::string lng_corpus, lng_out;
  double lng_min_seconds = 0.0;
  lng->add_option("--corpus", lng_corpus, "corpus manifest JSON")->required();
  lng->add_option("--L", lng_min_seconds, "minimum seconds per utterance")
      ->required();
  lng->add_option("--out", lng_out, "output manifest JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sim->parsed())
      return CmdSimulate(sim_synth, sim_corpus, sim_features, sim_weights,
                         sim_params, sim_out, sim_policy, sim_k, sim_compute,
                         sim_seed, sim_seed_opt->count() > 0, sim_opts);
    if (met->parsed()) return CmdMetrics(met_dir, met_out, met_csv);
    if (plot->parsed())
      return CmdPlotPolicy(plot_trace, plot_integration, plot_svg, plot_csv);
    if (grad->parsed()) return CmdGradcheck(grad_seed, grad_tol);
    if (train->parsed()) {
      if (train_seed_opt->count() > 0) train_hyper.seed = train_seed;
      return CmdTrainToy(train_synth, train_corpus, train_init, train_out,
                         train_curve, train_weights, train_hyper, train_seed,
                         train_seed_opt->count() > 0, train_opts);
    }
    if (lng->parsed()) return CmdLongutt(lng_corpus, lng_min_seconds, lng_out);
  } catch (const UsageError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception &e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
