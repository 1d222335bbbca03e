// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "cifsimul/traintoy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cifsimul/ctc.hpp"
#include "cifsimul/losses.hpp"
#include "json.hpp"

namespace cifsimul {

using nlohmann::json;

namespace {
constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2Pi = 0.3989422804014327;
}  // namespace

double Gelu(double x) { return x * 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }

double GeluGrad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

// ---------------------------------------------------------------------------
// Weight predictor

std::vector<double> WeightPredictorParams::Flatten() const {
  std::vector<double> out;
  for (const auto &m : conv) out.insert(out.end(), m.data.begin(), m.data.end());
  out.insert(out.end(), ln_gain.begin(), ln_gain.end());
  out.insert(out.end(), ln_bias.begin(), ln_bias.end());
  out.insert(out.end(), proj.begin(), proj.end());
  out.push_back(proj_bias);
  return out;
}

void WeightPredictorParams::Unflatten(const std::vector<double> &flat) {
  std::size_t pos = 0;
  for (auto &m : conv) {
    std::copy(flat.begin() + pos, flat.begin() + pos + m.data.size(),
              m.data.begin());
    pos += m.data.size();
  }
  auto take = [&](std::vector<double> &v) {
    std::copy(flat.begin() + pos, flat.begin() + pos + v.size(), v.begin());
    pos += v.size();
  };
  take(ln_gain);
  take(ln_bias);
  take(proj);
  proj_bias = flat[pos++];
  Require(pos == flat.size(), "predictor params: flat size mismatch");
}

void WeightPredictorParams::Scale(double s) {
  for (auto &m : conv)
    for (double &v : m.data) v *= s;
  for (double &v : ln_gain) v *= s;
  for (double &v : ln_bias) v *= s;
  for (double &v : proj) v *= s;
  proj_bias *= s;
}

void WeightPredictorParams::Axpy(double s, const WeightPredictorParams &o) {
  for (int t = 0; t < 3; ++t)
    for (std::size_t i = 0; i < conv[t].data.size(); ++i)
      conv[t].data[i] += s * o.conv[t].data[i];
  for (std::size_t i = 0; i < ln_gain.size(); ++i) {
    ln_gain[i] += s * o.ln_gain[i];
    ln_bias[i] += s * o.ln_bias[i];
    proj[i] += s * o.proj[i];
  }
  proj_bias += s * o.proj_bias;
}

WeightPredictorParams ZeroPredictorParams(std::size_t dim) {
  WeightPredictorParams p;
  for (auto &m : p.conv) m = Matrix(dim, dim, 0.0);
  p.ln_gain.assign(dim, 0.0);
  p.ln_bias.assign(dim, 0.0);
  p.proj.assign(dim, 0.0);
  return p;
}

namespace {

struct PredictorCache {
  Matrix conv_out;  // U x d
  Matrix xhat;      // normalized pre-gain
  Matrix ln_y;      // after gain/bias
  Matrix gelu_out;  // U x d
  std::vector<double> inv_sigma;  // per frame
  std::vector<double> alpha;
};

PredictorCache PredictorForwardCached(const FeatureSequence &x,
                                      const WeightPredictorParams &p) {
  const std::size_t n = x.NumFrames();
  const std::size_t d = x.Dim();
  Require(p.Dim() == d, "weight predictor: dimension mismatch");
  PredictorCache cache;
  cache.conv_out = Matrix(n, d, 0.0);
  cache.xhat = Matrix(n, d, 0.0);
  cache.ln_y = Matrix(n, d, 0.0);
  cache.gelu_out = Matrix(n, d, 0.0);
  cache.inv_sigma.resize(n);
  cache.alpha.resize(n);

  for (std::size_t j = 0; j < n; ++j) {
    double *z = cache.conv_out.row(j);
    // Left-padded causal conv: tap t applies to frame j - 2 + t.
    for (int t = 0; t < 3; ++t) {
      const long src = static_cast<long>(j) - 2 + t;
      if (src < 0) continue;
      const double *xin = x.frames.row(src);
      const Matrix &w = p.conv[t];
      for (std::size_t c = 0; c < d; ++c) {
        const double *wrow = w.row(c);
        double acc = 0.0;
        for (std::size_t i = 0; i < d; ++i) acc += wrow[i] * xin[i];
        z[c] += acc;
      }
    }
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += z[c];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (z[c] - mean) * (z[c] - mean);
    var /= static_cast<double>(d);
    const double inv_sigma = 1.0 / std::sqrt(var + kLnEps);
    cache.inv_sigma[j] = inv_sigma;

    double logit = p.proj_bias;
    for (std::size_t c = 0; c < d; ++c) {
      const double xhat = (z[c] - mean) * inv_sigma;
      const double y = p.ln_gain[c] * xhat + p.ln_bias[c];
      const double g = Gelu(y);
      cache.xhat.at(j, c) = xhat;
      cache.ln_y.at(j, c) = y;
      cache.gelu_out.at(j, c) = g;
      logit += p.proj[c] * g;
    }
    cache.alpha[j] = 1.0 / (1.0 + std::exp(-logit));
  }
  return cache;
}

}  // namespace

WeightSequence WeightPredictorForward(const FeatureSequence &x,
                                      const WeightPredictorParams &p) {
  return PredictorForwardCached(x, p).alpha;
}

PredictorBackwardResult WeightPredictorBackward(
    const FeatureSequence &x, const WeightPredictorParams &p,
    const std::vector<double> &grad_alpha, bool stop_gradient) {
  const std::size_t n = x.NumFrames();
  const std::size_t d = x.Dim();
  Require(grad_alpha.size() == n, "predictor backward: gradient length");
  const PredictorCache cache = PredictorForwardCached(x, p);

  PredictorBackwardResult result;
  result.grad = ZeroPredictorParams(d);
  result.grad_input = Matrix(n, d, 0.0);

  std::vector<double> dz(d);
  for (std::size_t j = 0; j < n; ++j) {
    const double a = cache.alpha[j];
    const double dlogit = grad_alpha[j] * a * (1.0 - a);
    result.grad.proj_bias += dlogit;

    double dxhat_mean = 0.0;
    double dxhat_xhat_mean = 0.0;
    std::vector<double> dxhat(d);
    for (std::size_t c = 0; c < d; ++c) {
      const double g = cache.gelu_out.at(j, c);
      result.grad.proj[c] += dlogit * g;
      const double dy = dlogit * p.proj[c] * GeluGrad(cache.ln_y.at(j, c));
      result.grad.ln_gain[c] += dy * cache.xhat.at(j, c);
      result.grad.ln_bias[c] += dy;
      dxhat[c] = dy * p.ln_gain[c];
      dxhat_mean += dxhat[c];
      dxhat_xhat_mean += dxhat[c] * cache.xhat.at(j, c);
    }
    dxhat_mean /= static_cast<double>(d);
    dxhat_xhat_mean /= static_cast<double>(d);
    for (std::size_t c = 0; c < d; ++c)
      dz[c] = cache.inv_sigma[j] *
              (dxhat[c] - dxhat_mean - cache.xhat.at(j, c) * dxhat_xhat_mean);

    for (int t = 0; t < 3; ++t) {
      const long src = static_cast<long>(j) - 2 + t;
      if (src < 0) continue;
      const double *xin = x.frames.row(src);
      Matrix &gw = result.grad.conv[t];
      for (std::size_t c = 0; c < d; ++c) {
        double *gwrow = gw.row(c);
        for (std::size_t i = 0; i < d; ++i) gwrow[i] += dz[c] * xin[i];
      }
      if (!stop_gradient) {
        double *gx = result.grad_input.row(src);
        const Matrix &w = p.conv[t];
        for (std::size_t c = 0; c < d; ++c) {
          const double *wrow = w.row(c);
          for (std::size_t i = 0; i < d; ++i) gx[i] += dz[c] * wrow[i];
        }
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Fusion

std::vector<double> FusionParams::Flatten() const {
  std::vector<double> out;
  for (const Matrix *m : {&w_out, &w_source, &w_target})
    out.insert(out.end(), m->data.begin(), m->data.end());
  out.insert(out.end(), bias.begin(), bias.end());
  return out;
}

void FusionParams::Unflatten(const std::vector<double> &flat) {
  std::size_t pos = 0;
  for (Matrix *m : {&w_out, &w_source, &w_target}) {
    std::copy(flat.begin() + pos, flat.begin() + pos + m->data.size(),
              m->data.begin());
    pos += m->data.size();
  }
  std::copy(flat.begin() + pos, flat.begin() + pos + bias.size(),
            bias.begin());
  pos += bias.size();
  Require(pos == flat.size(), "fusion params: flat size mismatch");
}

namespace {

std::vector<double> MatVec(const Matrix &m, const std::vector<double> &v) {
  Require(m.cols == v.size(), "fusion: dimension mismatch");
  std::vector<double> out(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double *row = m.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * v[c];
    out[r] = acc;
  }
  return out;
}

std::vector<double> MatTVec(const Matrix &m, const std::vector<double> &v) {
  std::vector<double> out(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double *row = m.row(r);
    for (std::size_t c = 0; c < m.cols; ++c) out[c] += row[c] * v[r];
  }
  return out;
}

std::vector<double> FusionPreactivation(const std::vector<double> &c,
                                        const std::vector<double> &s,
                                        const FusionParams &p) {
  auto pre = MatVec(p.w_source, c);
  const auto ts = MatVec(p.w_target, s);
  for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += ts[i] + p.bias[i];
  return pre;
}

}  // namespace

std::vector<double> PositionwiseFusion(const std::vector<double> &c,
                                       const std::vector<double> &s,
                                       const FusionParams &p) {
  auto pre = FusionPreactivation(c, s, p);
  for (double &v : pre) v = Gelu(v);
  return MatVec(p.w_out, pre);
}

FusionBackwardResult PositionwiseFusionBackward(
    const std::vector<double> &c, const std::vector<double> &s,
    const FusionParams &p, const std::vector<double> &grad_out) {
  const std::size_t d = c.size();
  const auto pre = FusionPreactivation(c, s, p);
  std::vector<double> act(d);
  for (std::size_t i = 0; i < d; ++i) act[i] = Gelu(pre[i]);

  FusionBackwardResult result;
  result.grad.w_out = Matrix(d, d, 0.0);
  result.grad.w_source = Matrix(d, d, 0.0);
  result.grad.w_target = Matrix(d, d, 0.0);
  result.grad.bias.assign(d, 0.0);

  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t i = 0; i < d; ++i)
      result.grad.w_out.at(r, i) = grad_out[r] * act[i];

  auto dact = MatTVec(p.w_out, grad_out);
  std::vector<double> dpre(d);
  for (std::size_t i = 0; i < d; ++i) dpre[i] = dact[i] * GeluGrad(pre[i]);

  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      result.grad.w_source.at(r, i) = dpre[r] * c[i];
      result.grad.w_target.at(r, i) = dpre[r] * s[i];
    }
    result.grad.bias[r] = dpre[r];
  }
  result.grad_c = MatTVec(p.w_source, dpre);
  result.grad_s = MatTVec(p.w_target, dpre);
  return result;
}

std::vector<std::vector<bool>> IlaMask(int target_len) {
  Require(target_len >= 1, "ila_mask: T must be >= 1");
  std::vector<std::vector<bool>> mask(
      target_len, std::vector<bool>(target_len, false));
  for (int i = 0; i < target_len; ++i)
    for (int k = 0; k <= i; ++k) mask[i][k] = true;
  return mask;
}

double FdGradCheck(const std::function<double(const std::vector<double> &)> &f,
                   const std::vector<double> &point,
                   const std::vector<double> &analytic_grad, double eps) {
  Require(point.size() == analytic_grad.size(),
          "fd_gradcheck: size mismatch");
  double max_err = 0.0;
  std::vector<double> x = point;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double fp = f(x);
    x[i] = orig - eps;
    const double fm = f(x);
    x[i] = orig;
    Require(std::isfinite(fp) && std::isfinite(fm),
            "fd_gradcheck: non-finite evaluation");
    const double central = (fp - fm) / (2.0 * eps);
    const double a = analytic_grad[i];
    const double err =
        std::abs(a - central) / std::max(1e-8, std::abs(a) + std::abs(central));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

// ---------------------------------------------------------------------------
// Toy model and training

namespace {

json MatrixToJson(const Matrix &m) {
  json j;
  j["rows"] = m.rows;
  j["cols"] = m.cols;
  j["data"] = m.data;
  return j;
}

Matrix MatrixFromJson(const json &j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  m.data = j.at("data").get<std::vector<double>>();
  Require(m.data.size() == m.rows * m.cols, "model json: matrix size");
  return m;
}

}  // namespace

std::string ToyModel::ToJson() const {
  json j;
  j["schema_version"] = 1;
  j["conv"] = {MatrixToJson(predictor.conv[0]), MatrixToJson(predictor.conv[1]),
               MatrixToJson(predictor.conv[2])};
  j["ln_gain"] = predictor.ln_gain;
  j["ln_bias"] = predictor.ln_bias;
  j["proj"] = predictor.proj;
  j["proj_bias"] = predictor.proj_bias;
  j["has_ce_head"] = has_ce_head;
  if (has_ce_head) {
    j["fusion_w_out"] = MatrixToJson(fusion.w_out);
    j["fusion_w_source"] = MatrixToJson(fusion.w_source);
    j["fusion_w_target"] = MatrixToJson(fusion.w_target);
    j["fusion_bias"] = fusion.bias;
    j["decoder_states"] = MatrixToJson(decoder_states);
    j["softmax_w"] = MatrixToJson(softmax_w);
    j["softmax_b"] = softmax_b;
  }
  return j.dump();
}

ToyModel ToyModel::FromJson(const std::string &text) {
  const json j = json::parse(text);
  Require(j.at("schema_version").get<int>() == 1,
          "model json: unsupported schema version");
  ToyModel m;
  for (int t = 0; t < 3; ++t)
    m.predictor.conv[t] = MatrixFromJson(j.at("conv").at(t));
  m.predictor.ln_gain = j.at("ln_gain").get<std::vector<double>>();
  m.predictor.ln_bias = j.at("ln_bias").get<std::vector<double>>();
  m.predictor.proj = j.at("proj").get<std::vector<double>>();
  m.predictor.proj_bias = j.at("proj_bias").get<double>();
  m.has_ce_head = j.at("has_ce_head").get<bool>();
  if (m.has_ce_head) {
    m.fusion.w_out = MatrixFromJson(j.at("fusion_w_out"));
    m.fusion.w_source = MatrixFromJson(j.at("fusion_w_source"));
    m.fusion.w_target = MatrixFromJson(j.at("fusion_w_target"));
    m.fusion.bias = j.at("fusion_bias").get<std::vector<double>>();
    m.decoder_states = MatrixFromJson(j.at("decoder_states"));
    m.softmax_w = MatrixFromJson(j.at("softmax_w"));
    m.softmax_b = j.at("softmax_b").get<std::vector<double>>();
  }
  return m;
}

ToyModel InitToyModel(std::size_t dim, int vocab_size, const TrainHyper &h) {
  std::mt19937_64 rng(h.seed);
  std::uniform_real_distribution<double> init(-0.1, 0.1);
  ToyModel m;
  m.predictor = ZeroPredictorParams(dim);
  for (auto &mat : m.predictor.conv)
    for (double &v : mat.data) v = init(rng);
  std::fill(m.predictor.ln_gain.begin(), m.predictor.ln_gain.end(), 1.0);
  for (double &v : m.predictor.proj) v = init(rng);
  m.predictor.proj_bias = init(rng);
  if (h.use_ce) {
    m.has_ce_head = true;
    m.fusion.w_out = Matrix(dim, dim);
    m.fusion.w_source = Matrix(dim, dim);
    m.fusion.w_target = Matrix(dim, dim);
    m.fusion.bias.assign(dim, 0.0);
    for (Matrix *mat : {&m.fusion.w_out, &m.fusion.w_source,
                        &m.fusion.w_target})
      for (double &v : mat->data) v = init(rng);
    m.decoder_states = Matrix(h.max_positions, dim);
    for (double &v : m.decoder_states.data) v = init(rng);
    m.softmax_w = Matrix(vocab_size, dim);
    for (double &v : m.softmax_w.data) v = init(rng);
    m.softmax_b.assign(vocab_size, 0.0);
  }
  return m;
}

namespace {

struct ModelGrads {
  WeightPredictorParams predictor;
  FusionParams fusion;
  Matrix decoder_states;
  Matrix softmax_w;
  std::vector<double> softmax_b;
};

ModelGrads ZeroGrads(const ToyModel &m) {
  ModelGrads g;
  g.predictor = ZeroPredictorParams(m.predictor.Dim());
  if (m.has_ce_head) {
    const std::size_t d = m.predictor.Dim();
    g.fusion.w_out = Matrix(d, d, 0.0);
    g.fusion.w_source = Matrix(d, d, 0.0);
    g.fusion.w_target = Matrix(d, d, 0.0);
    g.fusion.bias.assign(d, 0.0);
    g.decoder_states = Matrix(m.decoder_states.rows, d, 0.0);
    g.softmax_w = Matrix(m.softmax_w.rows, d, 0.0);
    g.softmax_b.assign(m.softmax_b.size(), 0.0);
  }
  return g;
}

// Chain rule through alpha' = alpha * beta*T / sum(alpha).
std::vector<double> ScalingBackward(const WeightSequence &alpha,
                                    const std::vector<double> &grad_scaled,
                                    double beta, int target_len) {
  const double sum = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  const double factor = beta * static_cast<double>(target_len) / sum;
  double dot = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i)
    dot += grad_scaled[i] * alpha[i];
  std::vector<double> grad(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i)
    grad[i] = factor * (grad_scaled[i] - dot / sum);
  return grad;
}

// Per-utterance loss and gradient accumulation. Returns the combined
// loss value for this utterance.
double UtteranceBackward(const ToyModel &model,
                         const SyntheticUtterance &utt,
                         const LossWeights &weights, const CifConfig &cif_cfg,
                         ModelGrads &grads) {
  const int target_len = static_cast<int>(utt.target.tokens.size());
  const WeightSequence alpha =
      WeightPredictorForward(utt.features, model.predictor);
  std::vector<double> grad_alpha(alpha.size(), 0.0);

  std::vector<std::pair<int, int>> boundaries;
  for (int i = 0; i < target_len; ++i)
    boundaries.emplace_back(utt.true_boundaries[i], i + 1);

  double qua = 0.0, lat = 0.0, ce = 0.0;
  if (weights.lambda_qua > 0.0) {
    qua = QuantityLossToken(alpha, boundaries, target_len, cif_cfg.beta);
    const auto g = GradQuantityToken(alpha, boundaries, target_len,
                                     cif_cfg.beta);
    for (std::size_t i = 0; i < alpha.size(); ++i)
      grad_alpha[i] += weights.lambda_qua * g[i];
  }

  const bool needs_scaled = weights.lambda_lat > 0.0 || model.has_ce_head;
  WeightSequence scaled;
  if (needs_scaled) scaled = ScaleWeights(alpha, target_len, cif_cfg);

  if (weights.lambda_lat > 0.0) {
    const auto delays = ExpectedDelays(scaled, cif_cfg, target_len);
    const double source_len = static_cast<double>(alpha.size());
    lat = DalLatencyLoss(delays, source_len, target_len);
    const auto grad_d = GradDal(delays, source_len, target_len);
    const Matrix jac = ExpectedDelaysJacobian(scaled, cif_cfg, target_len);
    std::vector<double> grad_scaled(alpha.size(), 0.0);
    for (int i = 0; i < target_len; ++i)
      for (std::size_t j = 0; j < alpha.size(); ++j)
        grad_scaled[j] += grad_d[i] * jac.at(i, j);
    const auto g = ScalingBackward(alpha, grad_scaled, cif_cfg.beta,
                                   target_len);
    for (std::size_t i = 0; i < alpha.size(); ++i)
      grad_alpha[i] += weights.lambda_lat * g[i];
  }

  if (model.has_ce_head) {
    Require(target_len <= static_cast<int>(model.decoder_states.rows),
            "train_toy: utterance longer than max_positions");
    const auto trace = IntegrateAndFire(utt.features, scaled, cif_cfg);
    Require(static_cast<int>(trace.firings.size()) == target_len,
            "train_toy: scaled weights did not yield T firings");
    const std::size_t d = model.predictor.Dim();
    const std::size_t vocab = model.softmax_w.rows;
    Matrix grad_embeddings(trace.firings.size(), d, 0.0);

    for (int i = 0; i < target_len; ++i) {
      const auto &c = trace.firings[i].embedding;
      std::vector<double> s(model.decoder_states.row(i),
                            model.decoder_states.row(i) + d);
      const auto fused = PositionwiseFusion(c, s, model.fusion);
      auto logits = MatVec(model.softmax_w, fused);
      for (std::size_t v = 0; v < vocab; ++v) logits[v] += model.softmax_b[v];
      double max_logit = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double l : logits) z += std::exp(l - max_logit);
      const double log_z = max_logit + std::log(z);
      const int y = utt.target.tokens[i];
      ce += (log_z - logits[y]) / static_cast<double>(target_len);

      std::vector<double> dlogits(vocab);
      for (std::size_t v = 0; v < vocab; ++v)
        dlogits[v] = std::exp(logits[v] - log_z) / target_len;
      dlogits[y] -= 1.0 / target_len;

      std::vector<double> dfused(d, 0.0);
      for (std::size_t v = 0; v < vocab; ++v) {
        const double *w = model.softmax_w.row(v);
        double *gw = grads.softmax_w.row(v);
        for (std::size_t cidx = 0; cidx < d; ++cidx) {
          gw[cidx] += dlogits[v] * fused[cidx];
          dfused[cidx] += dlogits[v] * w[cidx];
        }
        grads.softmax_b[v] += dlogits[v];
      }

      const auto fb = PositionwiseFusionBackward(c, s, model.fusion, dfused);
      for (std::size_t k = 0; k < grads.fusion.w_out.data.size(); ++k) {
        grads.fusion.w_out.data[k] += fb.grad.w_out.data[k];
        grads.fusion.w_source.data[k] += fb.grad.w_source.data[k];
        grads.fusion.w_target.data[k] += fb.grad.w_target.data[k];
      }
      for (std::size_t k = 0; k < d; ++k) {
        grads.fusion.bias[k] += fb.grad.bias[k];
        grads.decoder_states.at(i, k) += fb.grad_s[k];
        grad_embeddings.at(i, k) = fb.grad_c[k];
      }
    }
    const auto cif_back = EmbeddingBackward(utt.features, scaled, cif_cfg,
                                            trace, grad_embeddings);
    const auto g = ScalingBackward(alpha, cif_back.grad_alpha, cif_cfg.beta,
                                   target_len);
    for (std::size_t i = 0; i < alpha.size(); ++i) grad_alpha[i] += g[i];
  }

  const auto back = WeightPredictorBackward(utt.features, model.predictor,
                                            grad_alpha,
                                            /*stop_gradient=*/true);
  grads.predictor.Axpy(1.0, back.grad);
  const double ce_weight = model.has_ce_head ? 1.0 : 0.0;
  return ce_weight * ce + weights.lambda_qua * qua + weights.lambda_lat * lat;
}

}  // namespace

TrainResult TrainToy(const std::vector<SyntheticUtterance> &corpus,
                     const LossWeights &weights, const TrainHyper &hyper,
                     const CifConfig &cif_cfg, const ToyModel *init) {
  Require(!corpus.empty(), "train_toy: empty corpus");
  weights.Validate();
  cif_cfg.Validate();
  const std::size_t dim = corpus.front().features.Dim();
  const int vocab = corpus.front().target.vocab_size;

  TrainResult result;
  result.model = init ? *init : InitToyModel(dim, vocab, hyper);

  const double inv_n = 1.0 / static_cast<double>(corpus.size());
  for (int step = 0; step < hyper.steps; ++step) {
    ModelGrads grads = ZeroGrads(result.model);
    double total = 0.0;
    for (const auto &utt : corpus)
      total += UtteranceBackward(result.model, utt, weights, cif_cfg, grads);
    total *= inv_n;
    if (!std::isfinite(total))
      throw std::runtime_error("train_toy: loss diverged at step " +
                               std::to_string(step));
    result.loss_curve.push_back(total);

    const double lr = hyper.lr * inv_n;
    result.model.predictor.Axpy(-lr, grads.predictor);
    if (result.model.has_ce_head) {
      auto axpy = [lr](Matrix &dst, const Matrix &src) {
        for (std::size_t i = 0; i < dst.data.size(); ++i)
          dst.data[i] -= lr * src.data[i];
      };
      axpy(result.model.fusion.w_out, grads.fusion.w_out);
      axpy(result.model.fusion.w_source, grads.fusion.w_source);
      axpy(result.model.fusion.w_target, grads.fusion.w_target);
      for (std::size_t i = 0; i < result.model.fusion.bias.size(); ++i)
        result.model.fusion.bias[i] -= lr * grads.fusion.bias[i];
      axpy(result.model.decoder_states, grads.decoder_states);
      axpy(result.model.softmax_w, grads.softmax_w);
      for (std::size_t i = 0; i < result.model.softmax_b.size(); ++i)
        result.model.softmax_b[i] -= lr * grads.softmax_b[i];
    }
  }
  return result;
}

std::vector<std::pair<int, int>> CtcBoundariesForUtterance(
    const SyntheticUtterance &utt, const Matrix &emission_w,
    const std::vector<double> &emission_b) {
  const std::size_t n = utt.features.NumFrames();
  const std::size_t vocab = emission_w.rows;
  EmissionGrid grid;
  grid.blank_id = static_cast<int>(vocab) - 1;
  grid.log_probs = Matrix(n, vocab, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> x(utt.features.frames.row(j),
                          utt.features.frames.row(j) + utt.features.Dim());
    auto logits = MatVec(emission_w, x);
    for (std::size_t v = 0; v < vocab; ++v) logits[v] += emission_b[v];
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - m);
    const double log_z = m + std::log(z);
    for (std::size_t v = 0; v < vocab; ++v)
      grid.log_probs.at(j, v) = logits[v] - log_z;
  }
  const auto path = CtcForcedAlignment(grid, utt.target);
  return path.boundary_map;
}

WeightPredictor ModelPredictor(const WeightPredictorParams &params) {
  return [params](const FeatureSequence &f, int frame) {
    // Recompute from the causal window only; identical arithmetic to the
    // batch forward.
    const std::size_t d = f.Dim();
    Require(params.Dim() == d, "model predictor: dimension mismatch");
    std::vector<double> z(d, 0.0);
    for (int t = 0; t < 3; ++t) {
      const int src = frame - 3 + t;  // 0-based source row
      if (src < 0) continue;
      const double *xin = f.frames.row(src);
      for (std::size_t c = 0; c < d; ++c) {
        const double *wrow = params.conv[t].row(c);
        double acc = 0.0;
        for (std::size_t i = 0; i < d; ++i) acc += wrow[i] * xin[i];
        z[c] += acc;
      }
    }
    double mean = 0.0;
    for (double v : z) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : z) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv_sigma = 1.0 / std::sqrt(var + kLnEps);
    double logit = params.proj_bias;
    for (std::size_t c = 0; c < d; ++c) {
      const double xhat = (z[c] - mean) * inv_sigma;
      logit += params.proj[c] * Gelu(params.ln_gain[c] * xhat +
                                     params.ln_bias[c]);
    }
    return 1.0 / (1.0 + std::exp(-logit));
  };
}

EmbeddingDecoder GreedyDecoder(const ToyModel &model) {
  Require(model.has_ce_head, "greedy decoder: model has no CE head");
  return [model](const std::vector<std::vector<double>> &embeddings)
             -> std::optional<int> {
    const std::size_t i = embeddings.size();
    if (i > model.decoder_states.rows) return std::nullopt;
    const std::size_t d = model.predictor.Dim();
    std::vector<double> s(model.decoder_states.row(i - 1),
                          model.decoder_states.row(i - 1) + d);
    const auto fused = PositionwiseFusion(embeddings.back(), s, model.fusion);
    auto logits = MatVec(model.softmax_w, fused);
    for (std::size_t v = 0; v < logits.size(); ++v)
      logits[v] += model.softmax_b[v];
    const int best = static_cast<int>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (best == static_cast<int>(logits.size()) - 1) return std::nullopt;
    return best;
  };
}

PolicyEval EvaluatePolicy(const ToyModel &model,
                          const std::vector<SyntheticUtterance> &corpus,
                          const CifConfig &cif_cfg, int tolerance_frames) {
  Require(!corpus.empty(), "evaluate_policy: empty corpus");
  int exact = 0;
  long long firings_total = 0;
  long long firings_hit = 0;
  for (const auto &utt : corpus) {
    const auto alpha = WeightPredictorForward(utt.features, model.predictor);
    const auto trace = IntegrateAndFire(utt.features, alpha, cif_cfg);
    const int target_len = static_cast<int>(utt.target.tokens.size());
    if (static_cast<int>(trace.firings.size()) == target_len) ++exact;
    firings_total += static_cast<long long>(trace.firings.size());
    const std::size_t matched =
        std::min(trace.firings.size(), utt.true_boundaries.size());
    for (std::size_t i = 0; i < matched; ++i)
      if (std::abs(trace.firings[i].fire_frame - utt.true_boundaries[i]) <=
          tolerance_frames)
        ++firings_hit;
  }
  PolicyEval eval;
  eval.exact_fire_fraction =
      static_cast<double>(exact) / static_cast<double>(corpus.size());
  eval.boundary_hit_fraction =
      firings_total == 0
          ? 0.0
          : static_cast<double>(firings_hit) /
                static_cast<double>(firings_total);
  return eval;
}

}  // namespace cifsimul
