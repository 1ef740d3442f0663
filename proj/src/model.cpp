#include "sdplm/model.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include <json.hpp>

#include "sdplm/errors.hpp"
#include "sdplm/rng.hpp"

namespace sdplm {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y += M x
void matvec_acc(const Mat& m, const double* x, double* y) {
  for (size_t r = 0; r < m.rows; ++r) {
    const double* row = m.row(r);
    double acc = 0.0;
    for (size_t c = 0; c < m.cols; ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}

// y += M^T x  (x has m.rows entries, y has m.cols)
void matvec_transpose_acc(const Mat& m, const double* x, double* y) {
  for (size_t r = 0; r < m.rows; ++r) {
    const double* row = m.row(r);
    const double xr = x[r];
    if (xr == 0.0) continue;
    for (size_t c = 0; c < m.cols; ++c) y[c] += xr * row[c];
  }
}

// M += x y^T
void outer_acc(Mat& m, const double* x, const double* y) {
  for (size_t r = 0; r < m.rows; ++r) {
    double* row = m.row(r);
    const double xr = x[r];
    if (xr == 0.0) continue;
    for (size_t c = 0; c < m.cols; ++c) row[c] += xr * y[c];
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 1 || embedding_dim < 1 || hidden_dim < 1) {
    throw ConfigError("model: dimensions must be at least 1");
  }
  if (init_scale < 0) throw ConfigError("model: init_scale must be >= 0");
  if (tie_embeddings && embedding_dim != hidden_dim) {
    throw ConfigError("model: tied embeddings require embedding_dim == hidden_dim");
  }
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["vocab_size"] = vocab_size;
  j["embedding_dim"] = embedding_dim;
  j["hidden_dim"] = hidden_dim;
  j["tie_embeddings"] = tie_embeddings;
  j["init_scale"] = init_scale;
  j["forget_bias"] = forget_bias;
  j["seed"] = seed;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config: invalid JSON: ") + e.what());
  }
  ModelConfig cfg;
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.embedding_dim = j.at("embedding_dim").get<int>();
  cfg.hidden_dim = j.at("hidden_dim").get<int>();
  cfg.tie_embeddings = j.value("tie_embeddings", false);
  cfg.init_scale = j.value("init_scale", 0.1);
  cfg.forget_bias = j.value("forget_bias", 1.0);
  cfg.seed = j.value("seed", uint64_t{0});
  return cfg;
}

Parameters Parameters::shaped(const ModelConfig& cfg) {
  cfg.validate();
  const size_t v = static_cast<size_t>(cfg.vocab_size);
  const size_t e = static_cast<size_t>(cfg.embedding_dim);
  const size_t h = static_cast<size_t>(cfg.hidden_dim);
  Parameters p;
  p.tied = cfg.tie_embeddings;
  p.embedding = Mat(v, e);
  p.lstm_wx = Mat(4 * h, e);
  p.lstm_wh = Mat(4 * h, h);
  p.lstm_b.assign(4 * h, 0.0);
  if (!p.tied) p.out_w = Mat(v, h);
  p.out_b.assign(v, 0.0);
  return p;
}

void Parameters::for_each_array(
    const std::function<void(const char*, std::span<double>)>& fn) {
  fn("embedding", std::span<double>(embedding.a));
  fn("lstm_wx", std::span<double>(lstm_wx.a));
  fn("lstm_wh", std::span<double>(lstm_wh.a));
  fn("lstm_b", std::span<double>(lstm_b));
  if (!tied) fn("out_w", std::span<double>(out_w.a));
  fn("out_b", std::span<double>(out_b));
}

void Parameters::for_each_array(
    const std::function<void(const char*, std::span<const double>)>& fn) const {
  fn("embedding", std::span<const double>(embedding.a));
  fn("lstm_wx", std::span<const double>(lstm_wx.a));
  fn("lstm_wh", std::span<const double>(lstm_wh.a));
  fn("lstm_b", std::span<const double>(lstm_b));
  if (!tied) fn("out_w", std::span<const double>(out_w.a));
  fn("out_b", std::span<const double>(out_b));
}

size_t Parameters::total_size() const {
  size_t n = 0;
  for_each_array([&](const char*, std::span<const double> a) { n += a.size(); });
  return n;
}

double Parameters::l2_norm() const {
  double sq = 0.0;
  for_each_array([&](const char*, std::span<const double> a) {
    for (double v : a) sq += v * v;
  });
  return std::sqrt(sq);
}

void Parameters::fill_zero() {
  for_each_array([](const char*, std::span<double> a) {
    std::fill(a.begin(), a.end(), 0.0);
  });
}

void Parameters::add_scaled(const Parameters& other, double s) {
  auto add = [s](std::span<double> dst, std::span<const double> src) {
    if (dst.size() != src.size()) throw ShapeError("parameters: shape mismatch");
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
  };
  add(embedding.a, other.embedding.a);
  add(lstm_wx.a, other.lstm_wx.a);
  add(lstm_wh.a, other.lstm_wh.a);
  add(lstm_b, other.lstm_b);
  if (!tied) add(out_w.a, other.out_w.a);
  add(out_b, other.out_b);
}

void Parameters::scale(double s) {
  for_each_array([s](const char*, std::span<double> a) {
    for (double& v : a) v *= s;
  });
}

bool Parameters::all_finite() const {
  bool ok = true;
  for_each_array([&](const char*, std::span<const double> a) {
    for (double v : a) {
      if (!std::isfinite(v)) {
        ok = false;
        return;
      }
    }
  });
  return ok;
}

size_t parameter_count(const ModelConfig& cfg) {
  return Parameters::shaped(cfg).total_size();
}

LaneState zero_lane(const ModelConfig& cfg) {
  LaneState lane;
  lane.h.assign(static_cast<size_t>(cfg.hidden_dim), 0.0);
  lane.c.assign(static_cast<size_t>(cfg.hidden_dim), 0.0);
  return lane;
}

ModelState init_model(const ModelConfig& cfg) {
  cfg.validate();
  ModelState state;
  state.config = cfg;
  state.params = Parameters::shaped(cfg);
  Rng rng(derive_seed(cfg.seed, "model-init"));
  state.params.for_each_array([&](const char*, std::span<double> a) {
    for (double& v : a) v = rng.uniform(-cfg.init_scale, cfg.init_scale);
  });
  if (cfg.init_scale > 0.0) {
    const size_t h = static_cast<size_t>(cfg.hidden_dim);
    for (size_t i = h; i < 2 * h; ++i) state.params.lstm_b[i] = cfg.forget_bias;
  }
  return state;
}

void lstm_step(const ModelState& state, TokenId x, Vec& h, Vec& c) {
  const ModelConfig& cfg = state.config;
  const size_t hd = static_cast<size_t>(cfg.hidden_dim);
  if (x < 0 || x >= cfg.vocab_size) throw ShapeError("model: token id out of range");
  Vec z(4 * hd, 0.0);
  for (size_t i = 0; i < 4 * hd; ++i) z[i] = state.params.lstm_b[i];
  matvec_acc(state.params.lstm_wx, state.params.embedding.row(static_cast<size_t>(x)),
             z.data());
  matvec_acc(state.params.lstm_wh, h.data(), z.data());
  for (size_t i = 0; i < hd; ++i) {
    const double gi = sigmoid(z[i]);
    const double gf = sigmoid(z[hd + i]);
    const double gg = std::tanh(z[2 * hd + i]);
    const double go = sigmoid(z[3 * hd + i]);
    c[i] = gf * c[i] + gi * gg;
    h[i] = go * std::tanh(c[i]);
  }
}

void next_token_logprobs(const ModelState& state, const Vec& h, Vec& out) {
  const size_t v = static_cast<size_t>(state.config.vocab_size);
  out.assign(v, 0.0);
  const Mat& proj = state.params.tied ? state.params.embedding : state.params.out_w;
  for (size_t r = 0; r < v; ++r) {
    const double* row = proj.row(r);
    double acc = state.params.out_b[r];
    for (size_t ci = 0; ci < proj.cols; ++ci) acc += row[ci] * h[ci];
    out[r] = acc;
  }
  double mx = out[0];
  for (double val : out) mx = std::max(mx, val);
  double z = 0.0;
  for (double val : out) z += std::exp(val - mx);
  const double logz = mx + std::log(z);
  for (double& val : out) val -= logz;
}

ForwardOut forward(const ModelState& state, std::span<const TokenId> tokens,
                   std::span<const TokenId> targets, const LaneState& carried) {
  const ModelConfig& cfg = state.config;
  const size_t hd = static_cast<size_t>(cfg.hidden_dim);
  const size_t v = static_cast<size_t>(cfg.vocab_size);
  const size_t T = tokens.size();
  if (targets.size() != T) throw ShapeError("forward: targets misaligned with tokens");
  if (carried.h.size() != hd || carried.c.size() != hd) {
    throw ShapeError("forward: carried state has the wrong width");
  }

  ForwardOut out;
  Tape& tape = out.tape;
  tape.tokens.assign(tokens.begin(), tokens.end());
  tape.targets.assign(targets.begin(), targets.end());
  tape.h0 = carried.h;
  tape.c0 = carried.c;
  tape.gate_i = Mat(T, hd);
  tape.gate_f = Mat(T, hd);
  tape.gate_g = Mat(T, hd);
  tape.gate_o = Mat(T, hd);
  tape.cell = Mat(T, hd);
  tape.tanh_cell = Mat(T, hd);
  tape.hidden = Mat(T, hd);
  tape.probs = Mat(T, v);
  tape.nll.assign(T, 0.0);

  Vec h = carried.h;
  Vec c = carried.c;
  Vec z(4 * hd);
  const Mat& proj = state.params.tied ? state.params.embedding : state.params.out_w;
  for (size_t t = 0; t < T; ++t) {
    const TokenId x = tokens[t];
    if (x < 0 || x >= cfg.vocab_size) {
      throw ShapeError("forward: token id out of range");
    }
    const TokenId y = targets[t];
    if (y >= cfg.vocab_size) throw ShapeError("forward: target id out of range");

    for (size_t i = 0; i < 4 * hd; ++i) z[i] = state.params.lstm_b[i];
    matvec_acc(state.params.lstm_wx,
               state.params.embedding.row(static_cast<size_t>(x)), z.data());
    matvec_acc(state.params.lstm_wh, h.data(), z.data());
    double* gi = tape.gate_i.row(t);
    double* gf = tape.gate_f.row(t);
    double* gg = tape.gate_g.row(t);
    double* go = tape.gate_o.row(t);
    double* ct = tape.cell.row(t);
    double* tc = tape.tanh_cell.row(t);
    double* ht = tape.hidden.row(t);
    for (size_t i = 0; i < hd; ++i) {
      gi[i] = sigmoid(z[i]);
      gf[i] = sigmoid(z[hd + i]);
      gg[i] = std::tanh(z[2 * hd + i]);
      go[i] = sigmoid(z[3 * hd + i]);
      ct[i] = gf[i] * c[i] + gi[i] * gg[i];
      tc[i] = std::tanh(ct[i]);
      ht[i] = go[i] * tc[i];
      h[i] = ht[i];
      c[i] = ct[i];
    }
    if (y >= 0) {
      double* p = tape.probs.row(t);
      double mx = -1e300;
      for (size_t r = 0; r < v; ++r) {
        const double* row = proj.row(r);
        double acc = state.params.out_b[r];
        for (size_t ci = 0; ci < proj.cols; ++ci) acc += row[ci] * h[ci];
        p[r] = acc;
        mx = std::max(mx, acc);
      }
      double zsum = 0.0;
      for (size_t r = 0; r < v; ++r) zsum += std::exp(p[r] - mx);
      const double logz = mx + std::log(zsum);
      for (size_t r = 0; r < v; ++r) p[r] = std::exp(p[r] - logz);
      tape.nll[t] = -std::log(p[static_cast<size_t>(y)]);
      out.nll_sum += tape.nll[t];
      out.loss_terms += 1;
    }
  }
  out.nll = tape.nll;
  out.state.h = std::move(h);
  out.state.c = std::move(c);
  return out;
}

ForwardOut forward(const ModelState& state, std::span<const TokenId> tokens,
                   const LaneState& carried) {
  std::vector<TokenId> targets(tokens.size(), -1);
  for (size_t t = 0; t + 1 < tokens.size(); ++t) targets[t] = tokens[t + 1];
  return forward(state, tokens, targets, carried);
}

Parameters backward(const ModelState& state, Tape& tape, double loss_scale) {
  if (tape.consumed) throw UsageError("backward: tape already consumed");
  tape.consumed = true;

  const ModelConfig& cfg = state.config;
  const size_t hd = static_cast<size_t>(cfg.hidden_dim);
  const size_t v = static_cast<size_t>(cfg.vocab_size);
  const size_t T = tape.tokens.size();

  Parameters grad = Parameters::shaped(cfg);
  Vec dh(hd, 0.0), dc(hd, 0.0);
  Vec dlogits(v), dz(4 * hd), dht(hd);
  const Mat& proj = state.params.tied ? state.params.embedding : state.params.out_w;
  Mat& proj_grad = grad.tied ? grad.embedding : grad.out_w;

  for (size_t t = T; t-- > 0;) {
    const double* ht = tape.hidden.row(t);
    const double* h_prev = (t > 0) ? tape.hidden.row(t - 1) : tape.h0.data();
    const double* c_prev = (t > 0) ? tape.cell.row(t - 1) : tape.c0.data();
    std::copy(dh.begin(), dh.end(), dht.begin());

    const TokenId y = tape.targets[t];
    if (y >= 0) {
      const double* p = tape.probs.row(t);
      for (size_t r = 0; r < v; ++r) dlogits[r] = loss_scale * p[r];
      dlogits[static_cast<size_t>(y)] -= loss_scale;
      outer_acc(proj_grad, dlogits.data(), ht);
      for (size_t r = 0; r < v; ++r) grad.out_b[r] += dlogits[r];
      matvec_transpose_acc(proj, dlogits.data(), dht.data());
    }

    const double* gi = tape.gate_i.row(t);
    const double* gf = tape.gate_f.row(t);
    const double* gg = tape.gate_g.row(t);
    const double* go = tape.gate_o.row(t);
    const double* tc = tape.tanh_cell.row(t);
    for (size_t i = 0; i < hd; ++i) {
      const double dct = dc[i] + dht[i] * go[i] * (1.0 - tc[i] * tc[i]);
      const double di = dct * gg[i];
      const double df = dct * c_prev[i];
      const double dg = dct * gi[i];
      const double do_ = dht[i] * tc[i];
      dz[i] = di * gi[i] * (1.0 - gi[i]);
      dz[hd + i] = df * gf[i] * (1.0 - gf[i]);
      dz[2 * hd + i] = dg * (1.0 - gg[i] * gg[i]);
      dz[3 * hd + i] = do_ * go[i] * (1.0 - go[i]);
      dc[i] = dct * gf[i];
    }
    const size_t x = static_cast<size_t>(tape.tokens[t]);
    outer_acc(grad.lstm_wx, dz.data(), state.params.embedding.row(x));
    outer_acc(grad.lstm_wh, dz.data(), h_prev);
    for (size_t i = 0; i < 4 * hd; ++i) grad.lstm_b[i] += dz[i];
    matvec_transpose_acc(state.params.lstm_wx, dz.data(), grad.embedding.row(x));
    std::fill(dh.begin(), dh.end(), 0.0);
    matvec_transpose_acc(state.params.lstm_wh, dz.data(), dh.data());
  }
  return grad;
}

PplReport evaluate(const ModelState& state, const Corpus& corpus,
                   const std::vector<PrivacyMask>* masks) {
  if (corpus.records.empty()) throw DataError("evaluate: empty corpus");
  if (masks && masks->size() != corpus.records.size()) {
    throw ShapeError("evaluate: masks misaligned with corpus");
  }
  PplReport rep;
  double total = 0.0, total_private = 0.0;
  Vec logprobs;
  for (size_t r = 0; r < corpus.records.size(); ++r) {
    const auto& ids = corpus.records[r].ids;
    if (ids.size() < 2) continue;
    LaneState lane = zero_lane(state.config);
    for (size_t t = 0; t + 1 < ids.size(); ++t) {
      lstm_step(state, ids[t], lane.h, lane.c);
      next_token_logprobs(state, lane.h, logprobs);
      const double nll = -logprobs[static_cast<size_t>(ids[t + 1])];
      total += nll;
      rep.loss_terms += 1;
      if (masks && (*masks)[r].bits.at(t + 1) == 0) {
        total_private += nll;
        rep.private_terms += 1;
      }
    }
  }
  if (rep.loss_terms == 0) {
    throw DataError("evaluate: corpus has no predicted tokens");
  }
  rep.ppl = std::exp(total / static_cast<double>(rep.loss_terms));
  rep.private_ppl =
      rep.private_terms == 0
          ? 0.0
          : std::exp(total_private / static_cast<double>(rep.private_terms));
  return rep;
}

double sequence_nll(const ModelState& state, std::span<const TokenId> ids) {
  if (ids.empty()) throw DataError("sequence_nll: empty sequence");
  LaneState lane = zero_lane(state.config);
  Vec logprobs;
  double total = 0.0;
  for (size_t t = 0; t + 1 < ids.size(); ++t) {
    lstm_step(state, ids[t], lane.h, lane.c);
    next_token_logprobs(state, lane.h, logprobs);
    total += -logprobs[static_cast<size_t>(ids[t + 1])];
  }
  return total;
}

}  // namespace sdplm
