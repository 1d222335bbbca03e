// End-to-end checks of the command-line binary. The binary path comes in
// as the first program argument.
#define DOCTEST_CONFIG_IMPLEMENT
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cifsimul/cif.hpp"
#include "cifsimul/core.hpp"
#include "cifsimul/simul.hpp"
#include "doctest.h"

namespace fs = std::filesystem;

namespace {

std::string g_binary;
fs::path g_work;

int Run(const std::string &args) {
  const std::string cmd =
      "\"" + g_binary + "\" " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

void WriteFile(const fs::path &path, const std::string &content) {
  std::ofstream out(path);
  out << content;
}

std::string Slurp(const fs::path &path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path FreshDir(const std::string &name) {
  const fs::path dir = g_work / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string SynthJson(int n_utts, unsigned long long seed) {
  std::ostringstream s;
  s << "{\"n_utts\":" << n_utts << ",\"seed\":" << seed << "}";
  return s.str();
}

// Directory contents as one sorted name -> bytes dump, for byte-identical
// determinism comparisons.
std::string DirDump(const fs::path &dir) {
  std::vector<fs::path> files;
  for (const auto &e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto &f : files) {
    out += f.filename().string();
    out += '\0';
    out += Slurp(f);
    out += '\0';
  }
  return out;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(Run("") == 2);                 // missing subcommand
  CHECK(Run("simulate --out " + (g_work / "x").string()) == 2);  // no input
  CHECK(Run("simulate --synth /nonexistent.json --out " +
            (g_work / "x").string()) == 2);
  CHECK(Run("metrics --traces /nonexistent-dir") == 2);
  CHECK(Run("simulate --policy dance --synth a --out b") == 2);
  CHECK(Run("totally-unknown-subcommand") == 2);
}

TEST_CASE("simulate, metrics and plot pipeline") {
  const auto dir = FreshDir("pipeline");
  WriteFile(dir / "synth.json", SynthJson(4, 11));
  const auto traces = dir / "traces";
  CHECK(Run("simulate --synth " + (dir / "synth.json").string() +
            " --out " + traces.string() + " --compute-ms 5") == 0);
  CHECK(fs::exists(traces / "index.json"));
  CHECK(fs::exists(traces / "utt_00000.trace.jsonl"));
  CHECK(fs::exists(traces / "utt_00003.trace.jsonl"));
  CHECK(fs::exists(traces / "utt_00000.integration.jsonl"));

  CHECK(Run("metrics --traces " + traces.string() + " --out " +
            (dir / "report.json").string() + " --csv " +
            (dir / "report.csv").string()) == 0);
  const std::string report = Slurp(dir / "report.json");
  CHECK(report.find("\"mean\"") != std::string::npos);
  CHECK(report.find("dal_ca_ms") != std::string::npos);
  const std::string csv = Slurp(dir / "report.csv");
  CHECK(csv.rfind("utterance,ap,al_ms,dal_ms", 0) == 0);

  CHECK(Run("plot-policy --trace " +
            (traces / "utt_00000.trace.jsonl").string() + " --integration " +
            (traces / "utt_00000.integration.jsonl").string() + " --svg " +
            (dir / "plot.svg").string() + " --csv " +
            (dir / "plot.csv").string()) == 0);
  const std::string svg = Slurp(dir / "plot.svg");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("stroke=\"red\"") != std::string::npos);
  CHECK(svg.find("stroke=\"blue\"") != std::string::npos);
  CHECK(Slurp(dir / "plot.csv").rfind("frame,token_index", 0) == 0);
}

TEST_CASE("scripted simulate reproduces the offline firing schedule") {
  const auto dir = FreshDir("scripted");
  WriteFile(dir / "features.csv", "1\n2\n3\n");
  WriteFile(dir / "alphas.csv", "0.6\n0.7\n0.9\n");
  const auto traces = dir / "traces";
  CHECK(Run("simulate --features " + (dir / "features.csv").string() +
            " --weights " + (dir / "alphas.csv").string() + " --out " +
            traces.string() + " --block-ms 40 --lookahead-ms 0") == 0);
  const auto integration = cifsimul::ParseIntegrationTrace(
      Slurp(traces / "utt_00000.integration.jsonl"));
  REQUIRE(integration.firings.size() == 2);
  CHECK(integration.FireFrames() == std::vector<int>{2, 3});
  const auto trace =
      cifsimul::ParseTrace(Slurp(traces / "utt_00000.trace.jsonl"));
  CHECK(trace.NumWrites() == 2);
  trace.Validate();
}

TEST_CASE("waitk policy traces") {
  const auto dir = FreshDir("waitk");
  WriteFile(dir / "synth.json", SynthJson(3, 5));
  const auto traces = dir / "traces";
  CHECK(Run("simulate --synth " + (dir / "synth.json").string() +
            " --policy waitk --k 2 --out " + traces.string()) == 0);
  const auto trace =
      cifsimul::ParseTrace(Slurp(traces / "utt_00000.trace.jsonl"));
  trace.Validate();
  CHECK(trace.NumWrites() == std::size_t(trace.target_len));
  CHECK(!fs::exists(traces / "utt_00000.integration.jsonl"));
}

TEST_CASE("longutt concatenates the corpus") {
  const auto dir = FreshDir("longutt");
  cifsimul::SynthConfig cfg;
  cfg.n_utts = 16;
  cfg.utts_per_talk = 16;
  cfg.seed = 21;
  const auto corpus = cifsimul::SynthTask(cfg);
  WriteFile(dir / "corpus.json", cifsimul::SerializeCorpus(corpus));
  CHECK(Run("longutt --corpus " + (dir / "corpus.json").string() +
            " --L 8 --out " + (dir / "merged.json").string()) == 0);
  const auto merged = cifsimul::ParseCorpus(Slurp(dir / "merged.json"));
  CHECK(merged.size() < corpus.size());
  std::size_t frames_in = 0, frames_out = 0;
  for (const auto &u : corpus) frames_in += u.features.NumFrames();
  for (const auto &u : merged) frames_out += u.features.NumFrames();
  CHECK(frames_in == frames_out);
  // All but the trailing remainder of each talk reach 8 seconds.
  CHECK(merged.front().features.NumFrames() >= 200);

  CHECK(Run("longutt --corpus /nonexistent.json --L 4 --out " +
            (dir / "o.json").string()) == 2);
}

TEST_CASE("gradcheck passes and exits cleanly") {
  CHECK(Run("gradcheck --seed 1") == 0);
  CHECK(Run("gradcheck --seed 2 --tolerance 1e-12") == 1);
}

TEST_CASE("train-toy writes a loadable model and a loss curve") {
  const auto dir = FreshDir("train");
  WriteFile(dir / "synth.json", SynthJson(8, 42));
  CHECK(Run("train-toy --synth " + (dir / "synth.json").string() +
            " --steps 20 --seed 42 --out " + (dir / "model.json").string() +
            " --curve " + (dir / "curve.csv").string()) == 0);
  const std::string model = Slurp(dir / "model.json");
  CHECK(model.find("schema_version") != std::string::npos);
  const std::string curve = Slurp(dir / "curve.csv");
  CHECK(curve.rfind("step,loss", 0) == 0);

  // The trained checkpoint drives simulate.
  CHECK(Run("simulate --synth " + (dir / "synth.json").string() +
            " --params " + (dir / "model.json").string() + " --out " +
            (dir / "traces").string()) == 0);
}

TEST_CASE("reruns are byte-identical") {
  const auto dir = FreshDir("determinism");
  WriteFile(dir / "synth.json", SynthJson(4, 17));
  for (const std::string tag : {"a", "b"}) {
    const auto traces = dir / ("traces_" + tag);
    CHECK(Run("simulate --synth " + (dir / "synth.json").string() +
              " --seed 17 --compute-ms 3 --out " + traces.string()) == 0);
    CHECK(Run("metrics --traces " + traces.string() + " --out " +
              (dir / ("report_" + tag + ".json")).string()) == 0);
    CHECK(Run("train-toy --synth " + (dir / "synth.json").string() +
              " --steps 10 --seed 17 --out " +
              (dir / ("model_" + tag + ".json")).string()) == 0);
  }
  CHECK(DirDump(dir / "traces_a") == DirDump(dir / "traces_b"));
  CHECK(Slurp(dir / "report_a.json") == Slurp(dir / "report_b.json"));
  CHECK(Slurp(dir / "model_a.json") == Slurp(dir / "model_b.json"));
}

int main(int argc, char **argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: test_cli <cifsimul-binary> [doctest args]\n");
    return 1;
  }
  g_binary = argv[1];
  g_work = fs::temp_directory_path() / "cifsimul_cli_test";
  fs::create_directories(g_work);
  doctest::Context ctx;
  ctx.applyCommandLine(argc - 1, argv + 1);
  const int rc = ctx.run();
  fs::remove_all(g_work);
  return rc;
}
