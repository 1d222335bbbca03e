#include <cmath>
#include <numeric>
#include <random>

#include "cifsimul/cif.hpp"
#include "cifsimul/traintoy.hpp"
#include "doctest.h"
#include "reference_cif.hpp"

using namespace cifsimul;

namespace {

FeatureSequence MakeFeatures(std::size_t n, std::size_t d, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  FeatureSequence f;
  f.frames = Matrix(n, d);
  for (double &v : f.frames.data) v = g(rng);
  return f;
}

// Frames where h_j is the scalar j, handy for hand-checked sums.
FeatureSequence IndexFeatures(std::size_t n) {
  FeatureSequence f;
  f.frames = Matrix(n, 1);
  for (std::size_t j = 0; j < n; ++j) f.frames.at(j, 0) = double(j + 1);
  return f;
}

bool AwayFromTies(const WeightSequence &alpha, double beta, double margin) {
  double s = 0.0;
  for (double a : alpha) {
    s += a;
    const double frac = s / beta - std::floor(s / beta);
    if (std::min(frac, 1.0 - frac) * beta < margin) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("cif_step split example") {
  CifConfig cfg;
  CifState state;
  auto fires = CifStep(state, {1.0}, 0.6, cfg);  // h1 = [1]
  CHECK(fires.empty());
  CHECK(state.accumulated == doctest::Approx(0.6));
  fires = CifStep(state, {10.0}, 0.7, cfg);  // h2 = [10]
  REQUIRE(fires.size() == 1);
  CHECK(fires[0].embedding[0] == doctest::Approx(0.6 * 1.0 + 0.4 * 10.0));
  REQUIRE(fires[0].terms.size() == 2);
  CHECK(fires[0].terms[1].second == doctest::Approx(0.4));  // alpha^l
  CHECK(state.accumulated == doctest::Approx(0.3));         // alpha^r
  CHECK(state.queue_frame_indices == std::vector<int>{2});
}

TEST_CASE("cif_step identity case") {
  CifConfig cfg;
  CifState state;
  auto fires = CifStep(state, {2.0}, 1.0, cfg);
  REQUIRE(fires.size() == 1);
  CHECK(fires[0].embedding[0] == doctest::Approx(2.0));
  CHECK(state.accumulated == doctest::Approx(0.0));
  // The frame copy stays queued with weight 0.
  CHECK(state.queue_frame_indices == std::vector<int>{1});
}

TEST_CASE("cif_step repeated split for scaled weight") {
  CifConfig cfg;
  CifState state;
  auto fires = CifStep(state, {3.0}, 2.5, cfg);
  REQUIRE(fires.size() == 2);
  CHECK(fires[0].embedding[0] == doctest::Approx(3.0));
  CHECK(fires[1].embedding[0] == doctest::Approx(3.0));
  CHECK(state.accumulated == doctest::Approx(0.5));
}

TEST_CASE("cif_step rejects bad input") {
  CifConfig cfg;
  CifState state;
  CHECK_THROWS(CifStep(state, {1.0}, std::nan(""), cfg));
  CifStep(state, {1.0, 2.0}, 0.1, cfg);
  CHECK_THROWS(CifStep(state, {1.0}, 0.1, cfg));  // dimension mismatch
}

TEST_CASE("integrate_and_fire reference example") {
  CifConfig cfg;
  const auto f = IndexFeatures(3);  // h = [1, 2, 3]
  const auto trace = IntegrateAndFire(f, {0.6, 0.7, 0.9}, cfg);
  REQUIRE(trace.firings.size() == 2);
  CHECK(trace.firings[0].fire_frame == 2);
  CHECK(trace.firings[0].embedding[0] == doctest::Approx(0.6 + 0.4 * 2));
  CHECK(trace.firings[1].fire_frame == 3);
  CHECK(trace.firings[1].embedding[0] == doctest::Approx(0.3 * 2 + 0.7 * 3));
  CHECK(!trace.firings[1].is_tail);  // residual 0.2 < 0.5, discarded
}

TEST_CASE("integrate_and_fire identity and tail cases") {
  CifConfig cfg;
  {
    const auto trace = IntegrateAndFire(IndexFeatures(2), {1.0, 1.0}, cfg);
    REQUIRE(trace.firings.size() == 2);
    CHECK(trace.firings[0].embedding[0] == doctest::Approx(1.0));
    CHECK(trace.firings[1].embedding[0] == doctest::Approx(2.0));
  }
  {
    const auto trace = IntegrateAndFire(IndexFeatures(2), {0.4, 0.3}, cfg);
    REQUIRE(trace.firings.size() == 1);
    CHECK(trace.firings[0].is_tail);
    CHECK(trace.firings[0].fire_frame == 2);
    CHECK(trace.firings[0].embedding[0] == doctest::Approx(0.4 + 0.3 * 2));
  }
  CHECK_THROWS(IntegrateAndFire(IndexFeatures(2), {0.5}, cfg));
}

TEST_CASE("tail_handle boundary is inclusive") {
  CifConfig cfg;
  CifState state;
  CifStep(state, {1.0}, 0.5, cfg);
  auto tail = TailHandle(state, cfg);
  REQUIRE(tail.has_value());  // exactly at threshold fires
  CHECK(tail->is_tail);
  CifState below;
  CifStep(below, {1.0}, 0.2, cfg);
  CHECK(!TailHandle(below, cfg).has_value());
}

TEST_CASE("scale_weights") {
  CifConfig cfg;
  const auto scaled = ScaleWeights({0.6, 0.7, 0.9}, 2, cfg);
  CHECK(scaled[0] == doctest::Approx(6.0 / 11.0));
  CHECK(scaled[1] == doctest::Approx(7.0 / 11.0));
  CHECK(scaled[2] == doctest::Approx(9.0 / 11.0));
  CHECK(std::accumulate(scaled.begin(), scaled.end(), 0.0) ==
        doctest::Approx(2.0).epsilon(1e-9));

  const auto same = ScaleWeights({0.5, 1.5}, 2, cfg);
  CHECK(same[0] == doctest::Approx(0.5));
  CHECK(same[1] == doctest::Approx(1.5));

  CHECK_THROWS(ScaleWeights({0.0, 0.0, 0.0}, 2, cfg));
}

TEST_CASE("expected_delays examples") {
  CifConfig cfg;
  {
    const auto d = ExpectedDelays({0.6, 0.7, 0.9}, cfg, 2);
    CHECK(d[0] == doctest::Approx(1.4));
    CHECK(d[1] == doctest::Approx(2.7));
  }
  {
    const auto d = ExpectedDelays({1.0, 1.0}, cfg, 2);
    CHECK(d[0] == doctest::Approx(1.0));
    CHECK(d[1] == doctest::Approx(2.0));
  }
  {
    const auto d = ExpectedDelays({0.5, 0.5, 0.5, 0.5}, cfg, 2);
    CHECK(d[0] == doctest::Approx(1.5));
    CHECK(d[1] == doctest::Approx(3.5));
  }
  CHECK_THROWS(ExpectedDelays({0.1, 0.1}, cfg, 2));
}

TEST_CASE("inference_delays") {
  IntegrationTrace trace;
  Firing f;
  f.fire_frame = 2;
  trace.firings.push_back(f);
  f.fire_frame = 3;
  trace.firings.push_back(f);
  CHECK(InferenceDelays(trace, 0, 3) == std::vector<int>{2, 3});
  CHECK(InferenceDelays(trace, 8, 3) == std::vector<int>{3, 3});
  trace.firings[0].fire_frame = 16;
  trace.firings[1].fire_frame = 20;
  CHECK(InferenceDelays(trace, 8, 100) == std::vector<int>{24, 28});
}

TEST_CASE("online/offline equivalence under arbitrary prefix segmentation") {
  CifConfig cfg;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    const auto f = MakeFeatures(n, 3, 100 + trial);
    WeightSequence alpha(n);
    for (double &a : alpha) a = u(rng);
    const auto offline = IntegrateAndFire(f, alpha, cfg);

    CifState state;
    IntegrationTrace online;
    std::vector<double> h(3);
    for (std::size_t j = 0; j < n; ++j) {
      std::copy(f.frames.row(j), f.frames.row(j) + 3, h.begin());
      for (auto &fire : CifStep(state, h, alpha[j], cfg))
        online.firings.push_back(std::move(fire));
    }
    if (auto tail = TailHandle(state, cfg))
      online.firings.push_back(std::move(*tail));

    REQUIRE(online.firings.size() == offline.firings.size());
    for (std::size_t i = 0; i < online.firings.size(); ++i) {
      CHECK(online.firings[i].fire_frame == offline.firings[i].fire_frame);
      CHECK(online.firings[i].terms == offline.firings[i].terms);
      CHECK(online.firings[i].embedding == offline.firings[i].embedding);
    }
  }
}

TEST_CASE("conservation and per-firing weight sums") {
  CifConfig cfg;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 30;
    WeightSequence alpha(n);
    for (double &a : alpha) a = u(rng);
    const auto f = MakeFeatures(n, 2, 200 + trial);

    CifState state;
    std::vector<Firing> fires;
    std::vector<double> h(2);
    for (std::size_t j = 0; j < n; ++j) {
      std::copy(f.frames.row(j), f.frames.row(j) + 2, h.begin());
      for (auto &fire : CifStep(state, h, alpha[j], cfg))
        fires.push_back(std::move(fire));
    }
    double fired_weight = 0.0;
    for (const auto &fire : fires) {
      CHECK(fire.WeightSum() == doctest::Approx(cfg.beta).epsilon(1e-9));
      fired_weight += fire.WeightSum();
    }
    const double total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    CHECK(fired_weight + state.accumulated ==
          doctest::Approx(total).epsilon(1e-9));
  }
}

TEST_CASE("scaled weights with tail give exactly T firings") {
  CifConfig cfg;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 40;
    const int target_len = 1 + int(rng() % std::min<std::size_t>(n, 10));
    WeightSequence alpha(n);
    for (double &a : alpha) a = u(rng);
    const auto scaled = ScaleWeights(alpha, target_len, cfg);
    const auto trace =
        IntegrateAndFire(MakeFeatures(n, 2, 300 + trial), scaled, cfg);
    CHECK(int(trace.firings.size()) == target_len);
  }
}

TEST_CASE("expected delays are strictly increasing for positive weights") {
  CifConfig cfg;
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + rng() % 30;
    WeightSequence alpha(n);
    for (double &a : alpha) a = u(rng);
    const int target_len = 1 + int(rng() % 4);
    const auto scaled = ScaleWeights(alpha, target_len, cfg);
    const auto d = ExpectedDelays(scaled, cfg, target_len);
    for (std::size_t i = 1; i < d.size(); ++i) CHECK(d[i] > d[i - 1]);
  }
}

TEST_CASE("reference oracle agreement") {
  CifConfig cfg;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 60;
    const std::size_t d = 1 + rng() % 4;
    WeightSequence alpha(n);
    for (double &a : alpha) a = u(rng);
    const auto f = MakeFeatures(n, d, 400 + trial);
    const auto trace = IntegrateAndFire(f, alpha, cfg);
    const auto ref = cifsimul::testing::ReferenceIntegrateAndFire(
        f.frames, alpha, cfg.beta, cfg.tail_threshold);
    REQUIRE(trace.firings.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(trace.firings[i].fire_frame == ref[i].fire_frame);
      CHECK(trace.firings[i].is_tail == ref[i].is_tail);
      for (std::size_t c = 0; c < d; ++c)
        CHECK(trace.firings[i].embedding[c] ==
              doctest::Approx(ref[i].embedding[c]).epsilon(1e-9));
    }
  }
}

TEST_CASE("delay jacobian matches finite differences away from ties") {
  CifConfig cfg;
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::normal_distribution<double> g(0.0, 1.0);
  int done = 0;
  while (done < 30) {
    const std::size_t n = 5 + rng() % 15;
    WeightSequence alpha(n);
    for (double &a : alpha) a = u(rng);
    if (!AwayFromTies(alpha, cfg.beta, 1e-3)) continue;
    const double sum = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    if (sum < 1.0) continue;
    const int target_len = int(sum);
    std::vector<double> firings_probe(target_len);
    for (double &v : firings_probe) v = g(rng);
    auto fn = [&](const std::vector<double> &x) {
      const auto d = ExpectedDelays(x, cfg, target_len);
      double acc = 0.0;
      for (int i = 0; i < target_len; ++i) acc += firings_probe[i] * d[i];
      return acc;
    };
    const Matrix jac = ExpectedDelaysJacobian(alpha, cfg, target_len);
    std::vector<double> analytic(n, 0.0);
    for (int i = 0; i < target_len; ++i)
      for (std::size_t j = 0; j < n; ++j)
        analytic[j] += firings_probe[i] * jac.at(i, j);
    CHECK(FdGradCheck(fn, alpha, analytic) < 1e-4);
    ++done;
  }
}

TEST_CASE("embedding backward matches finite differences") {
  CifConfig cfg;
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::normal_distribution<double> g(0.0, 1.0);
  int done = 0;
  while (done < 20) {
    const std::size_t n = 4 + rng() % 10;
    const std::size_t dim = 1 + rng() % 3;
    WeightSequence alpha(n);
    for (double &a : alpha) a = u(rng);
    if (!AwayFromTies(alpha, cfg.beta, 1e-3)) continue;
    const auto f = MakeFeatures(n, dim, 500 + done);
    const auto trace = IntegrateAndFire(f, alpha, cfg);
    if (trace.firings.empty()) continue;

    Matrix probe(trace.firings.size(), dim);
    for (double &v : probe.data) v = g(rng);
    auto loss = [&](const FeatureSequence &feat, const WeightSequence &a) {
      const auto t = IntegrateAndFire(feat, a, cfg);
      REQUIRE(t.firings.size() == trace.firings.size());
      double acc = 0.0;
      for (std::size_t i = 0; i < t.firings.size(); ++i)
        for (std::size_t c = 0; c < dim; ++c)
          acc += probe.at(i, c) * t.firings[i].embedding[c];
      return acc;
    };
    const auto back = EmbeddingBackward(f, alpha, cfg, trace, probe);

    auto fn_alpha = [&](const std::vector<double> &x) { return loss(f, x); };
    CHECK(FdGradCheck(fn_alpha, alpha, back.grad_alpha) < 1e-4);

    auto fn_feat = [&](const std::vector<double> &flat) {
      FeatureSequence feat = f;
      feat.frames.data = flat;
      return loss(feat, alpha);
    };
    CHECK(FdGradCheck(fn_feat, f.frames.data, back.grad_features.data) <
          1e-4);
    ++done;
  }
}
