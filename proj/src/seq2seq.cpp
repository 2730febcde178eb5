#include "protoncast/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>

#include "protoncast/error.hpp"
#include "protoncast/ops.hpp"
#include "protoncast/rng.hpp"

namespace protoncast {

using ops::CVec;
using ops::Vec;

std::string_view to_string(Mode m) { return m == Mode::AR ? "AR" : "OS"; }

std::string Strategy::name() const {
  return std::string(to_string(features)) + "_" + std::string(to_string(variant)) + "_" +
         std::string(to_string(mode));
}

Strategy parse_strategy(std::string_view name) {
  for (auto f : {Features::P, Features::P_XR})
    for (auto v : {Variant::orig, Variant::trend})
      for (auto m : {Mode::AR, Mode::OS}) {
        const Strategy s{f, v, m};
        if (s.name() != name) continue;
        if (v == Variant::trend && m != Mode::OS)
          throw Error(ErrorCode::InvalidConfig,
                      std::string(name) + ": trend-smoothed data is only used with one-shot decoding");
        return s;
      }
  throw Error(ErrorCode::InvalidConfig, "unknown strategy '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (hidden == 0 || embed == 0)
    throw Error(ErrorCode::InvalidConfig, "hidden and embedding sizes must be at least 1");
  if (input_len == 0 || output_len == 0)
    throw Error(ErrorCode::InvalidConfig, "sequence lengths must be at least 1");
  if (variant == Variant::trend && mode != Mode::OS)
    throw Error(ErrorCode::InvalidConfig, "trend-smoothed data requires one-shot mode");
}

PreprocessSpec ModelConfig::preprocess(std::size_t half_window, double log_floor) const {
  return PreprocessSpec{features, variant, half_window, log_floor, input_len, output_len};
}

ModelConfig make_config(const Strategy& s, std::size_t hidden, std::size_t embed, std::size_t input_len,
                        std::size_t output_len) {
  ModelConfig c{hidden, embed, s.features, s.variant, s.mode, input_len, output_len};
  c.validate();
  return c;
}

std::pair<std::size_t, std::size_t> parse_structure(std::string_view text) {
  const auto dash = text.find('-');
  std::size_t h = 0, e = 0;
  bool ok = dash != std::string_view::npos;
  if (ok) {
    auto r1 = std::from_chars(text.data(), text.data() + dash, h);
    auto r2 = std::from_chars(text.data() + dash + 1, text.data() + text.size(), e);
    ok = r1.ec == std::errc{} && r1.ptr == text.data() + dash && r2.ec == std::errc{} &&
         r2.ptr == text.data() + text.size() && h > 0 && e > 0;
  }
  if (!ok) throw Error(ErrorCode::InvalidConfig, "bad model structure '" + std::string(text) + "' (want H-E)");
  return {h, e};
}

namespace {

void add_lstm(ParameterStore& p, const std::string& prefix, std::size_t in, std::size_t hidden) {
  p.add(prefix + ".kernel", Tensor({in, 4 * hidden}));
  p.add(prefix + ".recurrent", Tensor({hidden, 4 * hidden}));
  p.add(prefix + ".bias", Tensor({4 * hidden}));
}

void add_dense(ParameterStore& p, const std::string& prefix, std::size_t in, std::size_t out) {
  p.add(prefix + ".w", Tensor({in, out}));
  p.add(prefix + ".b", Tensor({out}));
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

ParameterStore param_layout(const ModelConfig& config) {
  config.validate();
  const std::size_t H = config.hidden;
  const std::size_t E = config.embed;
  ParameterStore p;
  add_lstm(p, "enc.lstm0", config.feature_count(), H);
  add_lstm(p, "enc.lstm1", H, H);
  add_dense(p, "embed", H, E);
  add_dense(p, "att.query", E + 1, H);
  add_dense(p, "dec.init0", E + H, H);
  add_dense(p, "dec.init1", E + H, H);
  add_lstm(p, "dec.lstm0", config.decoder_input_size(), H);
  add_lstm(p, "dec.lstm1", H, H);
  add_dense(p, "out", H, 1);
  return p;
}

ParameterStore init_params(const ModelConfig& config, std::uint64_t seed) {
  ParameterStore p = param_layout(config);
  const std::size_t H = config.hidden;
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(H));
  for (auto& [name, t] : p) {
    if (ends_with(name, ".bias")) {
      // forget gate block
      for (std::size_t i = H; i < 2 * H; ++i) t[i] = 1.0;
    } else if (!ends_with(name, ".b")) {
      for (double& v : t.data()) v = rng.uniform(-bound, bound);
    }
  }
  return p;
}

namespace {

// ---------------------------------------------------------------------------
// LSTM layer unrolled over a sequence.

struct LstmLayer {
  MatrixRef kernel;
  MatrixRef recurrent;
  const double* bias = nullptr;
  std::size_t in = 0;
  std::size_t hidden = 0;
};

struct LstmLayerGrads {
  MutMatrixRef kernel;
  MutMatrixRef recurrent;
  double* bias = nullptr;
};

LstmLayer bind_lstm(const Tensor& kernel, const Tensor& recurrent, const Tensor& bias) {
  const std::size_t H = recurrent.rows();
  if (kernel.rank() != 2 || recurrent.rank() != 2 || kernel.cols() != 4 * H || recurrent.cols() != 4 * H ||
      bias.size() != 4 * H)
    throw Error(ErrorCode::ShapeMismatch, "inconsistent LSTM weight shapes");
  return {kernel.view(), recurrent.view(), bias.data().data(), kernel.rows(), H};
}

LstmLayer bind_lstm(const ParameterStore& p, const std::string& prefix) {
  return bind_lstm(p.at(prefix + ".kernel"), p.at(prefix + ".recurrent"), p.at(prefix + ".bias"));
}

LstmLayerGrads bind_lstm_grads(ParameterStore& g, const std::string& prefix) {
  return {g.at(prefix + ".kernel").view(), g.at(prefix + ".recurrent").view(),
          g.at(prefix + ".bias").data().data()};
}

struct LayerTrace {
  std::size_t steps = 0;
  std::size_t in = 0;
  std::size_t hidden = 0;
  std::vector<double> x;       // steps × in
  std::vector<double> h;       // (steps+1) × H; row 0 is the initial state
  std::vector<double> c;       // (steps+1) × H
  std::vector<double> gates;   // steps × 4H, activated i f g o
  std::vector<double> tanh_c;  // steps × H
  std::vector<double> dgates;  // steps × 4H, adjoints of the pre-activations

  void reset(std::size_t n_steps, std::size_t n_in, std::size_t n_hidden) {
    steps = n_steps;
    in = n_in;
    hidden = n_hidden;
    x.assign(steps * in, 0.0);
    h.assign((steps + 1) * hidden, 0.0);
    c.assign((steps + 1) * hidden, 0.0);
    gates.assign(steps * 4 * hidden, 0.0);
    tanh_c.assign(steps * hidden, 0.0);
    dgates.assign(steps * 4 * hidden, 0.0);
  }

  double* x_row(std::size_t t) { return x.data() + t * in; }
  double* h_row(std::size_t t) { return h.data() + t * hidden; }
  double* c_row(std::size_t t) { return c.data() + t * hidden; }
  double* gate_row(std::size_t t) { return gates.data() + t * 4 * hidden; }
  double* dgate_row(std::size_t t) { return dgates.data() + t * 4 * hidden; }
  const double* h_row(std::size_t t) const { return h.data() + t * hidden; }

  MatrixRef inputs() const { return {x.data(), steps, in}; }
  MatrixRef previous_hidden() const { return {h.data(), steps, hidden}; }
  MatrixRef outputs() const { return {h.data() + hidden, steps, hidden}; }
};

// Fills gate rows with x·K + b for every step at once.
void project_inputs(const LstmLayer& L, LayerTrace& tr) {
  const std::size_t G = 4 * L.hidden;
  ops::matmul(tr.inputs(), L.kernel, {tr.gates.data(), tr.steps, G});
  for (std::size_t t = 0; t < tr.steps; ++t) {
    double* a = tr.gate_row(t);
    for (std::size_t j = 0; j < G; ++j) a[j] += L.bias[j];
  }
}

// Advances step t. With `projected`, the gate row already holds x·K + b.
void lstm_step(const LstmLayer& L, LayerTrace& tr, std::size_t t, bool projected) {
  const std::size_t H = L.hidden;
  const std::size_t G = 4 * H;
  double* a = tr.gate_row(t);
  if (!projected) {
    ops::matmul({tr.x_row(t), 1, L.in}, L.kernel, {a, 1, G});
    for (std::size_t j = 0; j < G; ++j) a[j] += L.bias[j];
  }
  ops::matmul({tr.h_row(t), 1, H}, L.recurrent, {a, 1, G}, true);

  Vec gates(a, G);
  ops::sigmoid(gates.subspan(0, 2 * H), gates.subspan(0, 2 * H));
  ops::tanh(gates.subspan(2 * H, H), gates.subspan(2 * H, H));
  ops::sigmoid(gates.subspan(3 * H, H), gates.subspan(3 * H, H));

  const double* i = a;
  const double* f = a + H;
  const double* g = a + 2 * H;
  const double* o = a + 3 * H;
  const double* c_prev = tr.c_row(t);
  double* c = tr.c_row(t + 1);
  double* h = tr.h_row(t + 1);
  double* tc = tr.tanh_c.data() + t * H;
  for (std::size_t k = 0; k < H; ++k) {
    c[k] = f[k] * c_prev[k] + i[k] * g[k];
    tc[k] = std::tanh(c[k]);
    h[k] = o[k] * tc[k];
  }
}

// dh, dc: adjoints of h_{t+1}, c_{t+1}. Writes the pre-activation adjoint row and
// overwrites dh_prev/dc_prev with the adjoints of h_t, c_t.
void lstm_backward_step(const LstmLayer& L, LayerTrace& tr, std::size_t t, CVec dh, CVec dc, Vec dh_prev,
                        Vec dc_prev) {
  const std::size_t H = L.hidden;
  const double* a = tr.gate_row(t);
  const double* i = a;
  const double* f = a + H;
  const double* g = a + 2 * H;
  const double* o = a + 3 * H;
  const double* c_prev = tr.c_row(t);
  const double* tc = tr.tanh_c.data() + t * H;
  double* da = tr.dgate_row(t);
  for (std::size_t k = 0; k < H; ++k) {
    const double dct = dc[k] + dh[k] * o[k] * (1.0 - tc[k] * tc[k]);
    const double d_o = dh[k] * tc[k];
    da[k] = dct * g[k] * i[k] * (1.0 - i[k]);
    da[H + k] = dct * c_prev[k] * f[k] * (1.0 - f[k]);
    da[2 * H + k] = dct * i[k] * (1.0 - g[k] * g[k]);
    da[3 * H + k] = d_o * o[k] * (1.0 - o[k]);
    dc_prev[k] = dct * f[k];
  }
  ops::matvec(L.recurrent, CVec(da, 4 * H), dh_prev);
}

void lstm_input_grad(const LstmLayer& L, LayerTrace& tr, std::size_t t, Vec dx) {
  ops::matvec(L.kernel, CVec(tr.dgate_row(t), 4 * L.hidden), dx);
}

void lstm_weight_grads(const LayerTrace& tr, const LstmLayer& L, const LstmLayerGrads& g) {
  const std::size_t G = 4 * L.hidden;
  const MatrixRef dA{tr.dgates.data(), tr.steps, G};
  ops::matmul_backward(tr.inputs(), L.kernel, dA, {}, g.kernel);
  ops::matmul_backward(tr.previous_hidden(), L.recurrent, dA, {}, g.recurrent);
  for (std::size_t t = 0; t < tr.steps; ++t)
    for (std::size_t j = 0; j < G; ++j) g.bias[j] += dA.data[t * G + j];
}

// ---------------------------------------------------------------------------
// Dense layers: y = x·W + b with W stored [in, out].

struct Dense {
  MatrixRef w;
  const double* b = nullptr;
};

struct DenseGrads {
  MutMatrixRef w;
  double* b = nullptr;
};

Dense bind_dense(const ParameterStore& p, const std::string& prefix) {
  const Tensor& w = p.at(prefix + ".w");
  const Tensor& b = p.at(prefix + ".b");
  if (w.rank() != 2 || b.size() != w.cols()) throw Error(ErrorCode::ShapeMismatch, prefix + ": bad dense shape");
  return {w.view(), b.data().data()};
}

DenseGrads bind_dense_grads(ParameterStore& g, const std::string& prefix) {
  return {g.at(prefix + ".w").view(), g.at(prefix + ".b").data().data()};
}

void dense_forward(const Dense& d, CVec x, Vec y) {
  ops::matmul({x.data(), 1, x.size()}, d.w, {y.data(), 1, y.size()});
  for (std::size_t j = 0; j < y.size(); ++j) y[j] += d.b[j];
}

// dx may be empty.
void dense_backward(const Dense& d, const DenseGrads& g, CVec x, CVec dy, Vec dx) {
  ops::matmul_backward({x.data(), 1, x.size()}, d.w, {dy.data(), 1, dy.size()},
                       dx.empty() ? MutMatrixRef{} : MutMatrixRef{dx.data(), 1, dx.size()}, g.w);
  for (std::size_t j = 0; j < dy.size(); ++j) g.b[j] += dy[j];
}

// ---------------------------------------------------------------------------

struct Network {
  std::size_t H = 0;
  std::size_t E = 0;
  LstmLayer enc0, enc1, dec0, dec1;
  Dense embed, query, init0, init1, out;

  Network(const ParameterStore& p, const ModelConfig& cfg) : H(cfg.hidden), E(cfg.embed) {
    enc0 = bind_lstm(p, "enc.lstm0");
    enc1 = bind_lstm(p, "enc.lstm1");
    dec0 = bind_lstm(p, "dec.lstm0");
    dec1 = bind_lstm(p, "dec.lstm1");
    embed = bind_dense(p, "embed");
    query = bind_dense(p, "att.query");
    init0 = bind_dense(p, "dec.init0");
    init1 = bind_dense(p, "dec.init1");
    out = bind_dense(p, "out");
    if (enc0.hidden != H || enc0.in != cfg.feature_count() || enc1.in != H || dec0.in != cfg.decoder_input_size() ||
        dec1.in != H || embed.w.rows != H || embed.w.cols != E || query.w.rows != E + 1 || query.w.cols != H ||
        init0.w.rows != E + H || init1.w.rows != E + H || out.w.rows != H || out.w.cols != 1)
      throw Error(ErrorCode::ShapeMismatch, "parameters do not match model config " + cfg.structure());
  }
};

struct NetworkGrads {
  LstmLayerGrads enc0, enc1, dec0, dec1;
  DenseGrads embed, query, init0, init1, out;

  explicit NetworkGrads(ParameterStore& g)
      : enc0(bind_lstm_grads(g, "enc.lstm0")),
        enc1(bind_lstm_grads(g, "enc.lstm1")),
        dec0(bind_lstm_grads(g, "dec.lstm0")),
        dec1(bind_lstm_grads(g, "dec.lstm1")),
        embed(bind_dense_grads(g, "embed")),
        query(bind_dense_grads(g, "att.query")),
        init0(bind_dense_grads(g, "dec.init0")),
        init1(bind_dense_grads(g, "dec.init1")),
        out(bind_dense_grads(g, "out")) {}
};

struct AttentionTrace {
  std::vector<double> basis;    // [E+1]
  std::vector<double> query;    // [H]
  std::vector<double> weights;  // [T_in]
  std::vector<double> context;  // [H]
};

// q = basis·W_q + b_q; weights = softmax(enc·q / √H); context = weightsᵀ·enc.
void attention_forward(const Dense& query, MatrixRef enc, CVec basis, AttentionTrace& tr) {
  const std::size_t H = query.w.cols;
  if (basis.size() != query.w.rows || enc.cols != H || enc.rows == 0)
    throw Error(ErrorCode::ShapeMismatch, "attention inputs do not match the query projection");
  tr.basis.assign(basis.begin(), basis.end());
  tr.query.assign(H, 0.0);
  dense_forward(query, tr.basis, tr.query);
  tr.weights.assign(enc.rows, 0.0);
  ops::matvec(enc, tr.query, tr.weights);
  const double scale = 1.0 / std::sqrt(static_cast<double>(H));
  for (double& s : tr.weights) s *= scale;
  ops::softmax(tr.weights, tr.weights);
  tr.context.assign(H, 0.0);
  ops::matmul({tr.weights.data(), 1, enc.rows}, enc, {tr.context.data(), 1, H});
}

// Accumulates into d_enc (T_in × H) and d_basis (E+1).
void attention_backward(const Dense& query, const DenseGrads& g, MatrixRef enc, const AttentionTrace& tr,
                        CVec d_context, MutMatrixRef d_enc, Vec d_basis) {
  const std::size_t T = enc.rows;
  const std::size_t H = enc.cols;
  std::vector<double> d_weights(T, 0.0);
  ops::matmul_backward({tr.weights.data(), 1, T}, enc, {d_context.data(), 1, H},
                       {d_weights.data(), 1, T}, d_enc);
  std::vector<double> d_scores(T, 0.0);
  ops::softmax_backward(tr.weights, d_weights, d_scores);
  const double scale = 1.0 / std::sqrt(static_cast<double>(H));
  for (double& s : d_scores) s *= scale;
  std::vector<double> d_query(H, 0.0);
  ops::matvec_backward(enc, tr.query, d_scores, d_enc, d_query);
  dense_backward(query, g, tr.basis, d_query, d_basis);
}

struct EncoderTrace {
  LayerTrace l0, l1;
  std::vector<double> embedding;
};

void encoder_forward(const Network& net, const Tensor& input, EncoderTrace& tr) {
  const std::size_t T = input.rows();
  if (input.cols() != net.enc0.in) throw Error(ErrorCode::ShapeMismatch, "input feature count does not match model");
  tr.l0.reset(T, net.enc0.in, net.H);
  std::copy(input.data().begin(), input.data().end(), tr.l0.x.begin());
  project_inputs(net.enc0, tr.l0);
  for (std::size_t t = 0; t < T; ++t) lstm_step(net.enc0, tr.l0, t, true);

  tr.l1.reset(T, net.H, net.H);
  std::copy(tr.l0.h.begin() + static_cast<std::ptrdiff_t>(net.H), tr.l0.h.end(), tr.l1.x.begin());
  project_inputs(net.enc1, tr.l1);
  for (std::size_t t = 0; t < T; ++t) lstm_step(net.enc1, tr.l1, t, true);

  tr.embedding.assign(net.E, 0.0);
  dense_forward(net.embed, CVec(tr.l1.h_row(T), net.H), tr.embedding);
}

// d_enc: adjoint of the top-layer outputs (T × H); d_embedding: adjoint of e.
void encoder_backward(const Network& net, const NetworkGrads& g, EncoderTrace& tr, std::vector<double> d_enc,
                      CVec d_embedding) {
  const std::size_t T = tr.l1.steps;
  const std::size_t H = net.H;
  dense_backward(net.embed, g.embed, CVec(tr.l1.h_row(T), H), d_embedding,
                 Vec(d_enc.data() + (T - 1) * H, H));

  std::vector<double> dh(H, 0.0), dc(H, 0.0), dh_prev(H), dc_prev(H);
  for (std::size_t t = T; t-- > 0;) {
    for (std::size_t k = 0; k < H; ++k) dh[k] += d_enc[t * H + k];
    lstm_backward_step(net.enc1, tr.l1, t, dh, dc, dh_prev, dc_prev);
    dh.swap(dh_prev);
    dc.swap(dc_prev);
  }
  lstm_weight_grads(tr.l1, net.enc1, g.enc1);

  // Adjoint of the lower layer's outputs.
  std::vector<double> d_lower(T * H, 0.0);
  ops::matmul_backward(tr.l1.inputs(), net.enc1.kernel, {tr.l1.dgates.data(), T, 4 * H}, {d_lower.data(), T, H}, {});

  std::fill(dh.begin(), dh.end(), 0.0);
  std::fill(dc.begin(), dc.end(), 0.0);
  for (std::size_t t = T; t-- > 0;) {
    for (std::size_t k = 0; k < H; ++k) dh[k] += d_lower[t * H + k];
    lstm_backward_step(net.enc0, tr.l0, t, dh, dc, dh_prev, dc_prev);
    dh.swap(dh_prev);
    dc.swap(dc_prev);
  }
  lstm_weight_grads(tr.l0, net.enc0, g.enc0);
}

struct DecoderTrace {
  Mode mode = Mode::OS;
  bool teacher_forced = false;
  std::vector<double> embedding;
  std::vector<AttentionTrace> attention;  // OS: one; AR: one per step (step 0 shares the init context)
  std::vector<double> init_input;         // concat(e, context of the first step)
  std::vector<double> init_h0, init_h1;
  LayerTrace l0, l1;
  std::vector<double> prediction;
};

void decoder_forward(const Network& net, const ModelConfig& cfg, CVec embedding, MatrixRef enc, double last_observed,
                     std::optional<CVec> teacher, DecoderTrace& tr) {
  const std::size_t H = net.H;
  const std::size_t E = net.E;
  const std::size_t T = cfg.output_len;
  if (embedding.size() != E) throw Error(ErrorCode::ShapeMismatch, "embedding size does not match model");
  if (enc.cols != H || enc.rows == 0) throw Error(ErrorCode::ShapeMismatch, "encoder outputs do not match model");
  if (teacher && teacher->size() != T)
    throw Error(ErrorCode::ShapeMismatch, "teacher sequence must have output_len entries");

  tr.mode = cfg.mode;
  tr.teacher_forced = cfg.mode == Mode::AR && teacher.has_value();
  tr.embedding.assign(embedding.begin(), embedding.end());
  tr.attention.assign(cfg.mode == Mode::AR ? T : 1, {});

  std::vector<double> basis(E + 1);
  std::copy(embedding.begin(), embedding.end(), basis.begin());
  basis[E] = last_observed;
  attention_forward(net.query, enc, basis, tr.attention[0]);

  tr.init_input.assign(E + H, 0.0);
  ops::concat({embedding, tr.attention[0].context}, tr.init_input);
  tr.init_h0.assign(H, 0.0);
  tr.init_h1.assign(H, 0.0);
  dense_forward(net.init0, tr.init_input, tr.init_h0);
  dense_forward(net.init1, tr.init_input, tr.init_h1);
  ops::tanh(tr.init_h0, tr.init_h0);
  ops::tanh(tr.init_h1, tr.init_h1);

  tr.l0.reset(T, net.dec0.in, H);
  tr.l1.reset(T, H, H);
  std::copy(tr.init_h0.begin(), tr.init_h0.end(), tr.l0.h.begin());
  std::copy(tr.init_h1.begin(), tr.init_h1.end(), tr.l1.h.begin());
  tr.prediction.assign(T, 0.0);

  if (cfg.mode == Mode::OS) {
    // Constant step input: project once.
    std::vector<double> projected(4 * H, 0.0);
    for (std::size_t t = 0; t < T; ++t) std::copy(tr.init_input.begin(), tr.init_input.end(), tr.l0.x_row(t));
    ops::matmul({tr.init_input.data(), 1, E + H}, net.dec0.kernel, {projected.data(), 1, 4 * H});
    for (std::size_t j = 0; j < 4 * H; ++j) projected[j] += net.dec0.bias[j];
    for (std::size_t t = 0; t < T; ++t) std::copy(projected.begin(), projected.end(), tr.l0.gate_row(t));
  }

  for (std::size_t t = 0; t < T; ++t) {
    if (cfg.mode == Mode::AR) {
      double prev = last_observed;
      if (t > 0) prev = tr.teacher_forced ? (*teacher)[t - 1] : tr.prediction[t - 1];
      if (t > 0) {
        basis[E] = prev;
        attention_forward(net.query, enc, basis, tr.attention[t]);
      }
      double* x = tr.l0.x_row(t);
      std::copy(embedding.begin(), embedding.end(), x);
      std::copy(tr.attention[t].context.begin(), tr.attention[t].context.end(), x + E);
      x[E + H] = prev;
    }
    lstm_step(net.dec0, tr.l0, t, cfg.mode == Mode::OS);
    std::copy_n(tr.l0.h_row(t + 1), H, tr.l1.x_row(t));
    lstm_step(net.dec1, tr.l1, t, false);
    dense_forward(net.out, CVec(tr.l1.h_row(t + 1), H), Vec(&tr.prediction[t], 1));
  }
}

// Returns the adjoint of the embedding; accumulates the encoder-output adjoint.
std::vector<double> decoder_backward(const Network& net, const NetworkGrads& g, DecoderTrace& tr, MatrixRef enc,
                                     CVec d_prediction, MutMatrixRef d_enc) {
  const std::size_t H = net.H;
  const std::size_t E = net.E;
  const std::size_t T = tr.prediction.size();
  if (d_prediction.size() != T) throw Error(ErrorCode::ShapeMismatch, "prediction adjoint has wrong length");

  std::vector<double> d_pred(d_prediction.begin(), d_prediction.end());
  std::vector<double> d_embedding(E, 0.0);
  std::vector<double> d_first_context(H, 0.0);
  std::vector<double> dh0(H, 0.0), dc0(H, 0.0), dh1(H, 0.0), dc1(H, 0.0), dh_prev(H), dc_prev(H);
  std::vector<double> dx(net.dec0.in);
  std::vector<double> d_basis(E + 1);

  for (std::size_t t = T; t-- > 0;) {
    dense_backward(net.out, g.out, CVec(tr.l1.h_row(t + 1), H), CVec(&d_pred[t], 1), dh1);
    lstm_backward_step(net.dec1, tr.l1, t, dh1, dc1, dh_prev, dc_prev);
    dh1.swap(dh_prev);
    dc1.swap(dc_prev);
    std::fill(dx.begin(), dx.begin() + static_cast<std::ptrdiff_t>(H), 0.0);
    lstm_input_grad(net.dec1, tr.l1, t, Vec(dx.data(), H));
    for (std::size_t k = 0; k < H; ++k) dh0[k] += dx[k];

    lstm_backward_step(net.dec0, tr.l0, t, dh0, dc0, dh_prev, dc_prev);
    dh0.swap(dh_prev);
    dc0.swap(dc_prev);

    if (tr.mode == Mode::AR) {
      std::fill(dx.begin(), dx.end(), 0.0);
      lstm_input_grad(net.dec0, tr.l0, t, dx);
      for (std::size_t k = 0; k < E; ++k) d_embedding[k] += dx[k];
      double d_prev = dx[E + H];
      const CVec d_context(dx.data() + E, H);
      if (t == 0) {
        for (std::size_t k = 0; k < H; ++k) d_first_context[k] += d_context[k];
      } else {
        std::fill(d_basis.begin(), d_basis.end(), 0.0);
        attention_backward(net.query, g.query, enc, tr.attention[t], d_context, d_enc, d_basis);
        for (std::size_t k = 0; k < E; ++k) d_embedding[k] += d_basis[k];
        d_prev += d_basis[E];
        if (!tr.teacher_forced) d_pred[t - 1] += d_prev;
      }
    }
  }
  lstm_weight_grads(tr.l1, net.dec1, g.dec1);
  lstm_weight_grads(tr.l0, net.dec0, g.dec0);

  std::vector<double> d_init_input(E + H, 0.0);
  if (tr.mode == Mode::OS) {
    std::vector<double> d_gate_sum(4 * H, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      const double* row = tr.l0.dgate_row(t);
      for (std::size_t j = 0; j < 4 * H; ++j) d_gate_sum[j] += row[j];
    }
    ops::matvec(net.dec0.kernel, d_gate_sum, d_init_input);
  }

  // Initial hidden states: h0 = tanh(init_input·W + b).
  std::vector<double> d_pre(H);
  for (int layer = 0; layer < 2; ++layer) {
    const auto& h_init = layer == 0 ? tr.init_h0 : tr.init_h1;
    const auto& dh = layer == 0 ? dh0 : dh1;
    std::fill(d_pre.begin(), d_pre.end(), 0.0);
    ops::tanh_backward(h_init, dh, d_pre);
    dense_backward(layer == 0 ? net.init0 : net.init1, layer == 0 ? g.init0 : g.init1, tr.init_input, d_pre,
                   d_init_input);
  }
  for (std::size_t k = 0; k < E; ++k) d_embedding[k] += d_init_input[k];
  for (std::size_t k = 0; k < H; ++k) d_first_context[k] += d_init_input[E + k];

  std::fill(d_basis.begin(), d_basis.end(), 0.0);
  attention_backward(net.query, g.query, enc, tr.attention[0], d_first_context, d_enc, d_basis);
  for (std::size_t k = 0; k < E; ++k) d_embedding[k] += d_basis[k];
  return d_embedding;
}

void run_lstm_cell(const LstmWeights& w, CVec x, CVec h_prev, CVec c_prev, LayerTrace& tr, LstmLayer& layer) {
  layer = bind_lstm(w.kernel, w.recurrent, w.bias);
  if (x.size() != layer.in || h_prev.size() != layer.hidden || c_prev.size() != layer.hidden)
    throw Error(ErrorCode::ShapeMismatch, "lstm_cell operand sizes do not match weights");
  tr.reset(1, layer.in, layer.hidden);
  std::copy(x.begin(), x.end(), tr.x.begin());
  std::copy(h_prev.begin(), h_prev.end(), tr.h.begin());
  std::copy(c_prev.begin(), c_prev.end(), tr.c.begin());
  lstm_step(layer, tr, 0, false);
}

}  // namespace

LstmState lstm_cell(CVec x, CVec h_prev, CVec c_prev, const LstmWeights& w) {
  LayerTrace tr;
  LstmLayer layer;
  run_lstm_cell(w, x, h_prev, c_prev, tr, layer);
  return {std::vector<double>(tr.h_row(1), tr.h_row(1) + layer.hidden),
          std::vector<double>(tr.c_row(1), tr.c_row(1) + layer.hidden)};
}

LstmCellAdjoint lstm_cell_backward(CVec x, CVec h_prev, CVec c_prev, const LstmWeights& w, CVec dh, CVec dc,
                                   LstmGrads grads) {
  LayerTrace tr;
  LstmLayer layer;
  run_lstm_cell(w, x, h_prev, c_prev, tr, layer);
  if (dh.size() != layer.hidden || dc.size() != layer.hidden)
    throw Error(ErrorCode::ShapeMismatch, "lstm_cell_backward adjoint sizes do not match weights");
  LstmCellAdjoint adj{std::vector<double>(layer.in, 0.0), std::vector<double>(layer.hidden),
                      std::vector<double>(layer.hidden)};
  lstm_backward_step(layer, tr, 0, dh, dc, adj.dh_prev, adj.dc_prev);
  lstm_input_grad(layer, tr, 0, adj.dx);
  lstm_weight_grads(tr, layer, {grads.kernel.view(), grads.recurrent.view(), grads.bias.data().data()});
  return adj;
}

Encoding encode(const Tensor& input, const ParameterStore& params, const ModelConfig& config) {
  const Network net(params, config);
  if (input.rank() != 2) throw Error(ErrorCode::ShapeMismatch, "encoder input must be a matrix");
  EncoderTrace tr;
  encoder_forward(net, input, tr);
  const std::size_t T = input.rows();
  std::vector<double> outputs(tr.l1.h.begin() + static_cast<std::ptrdiff_t>(net.H), tr.l1.h.end());
  return {Tensor({T, net.H}, std::move(outputs)), tr.embedding};
}

AttentionResult attend(CVec query_basis, const Tensor& encoder_outputs, const ParameterStore& params) {
  if (encoder_outputs.rank() != 2) throw Error(ErrorCode::ShapeMismatch, "encoder outputs must be a matrix");
  AttentionTrace tr;
  attention_forward(bind_dense(params, "att.query"), encoder_outputs.view(), query_basis, tr);
  return {tr.context, tr.weights};
}

std::vector<double> decode_os(CVec embedding, const Tensor& encoder_outputs, double last_observed,
                              const ParameterStore& params, const ModelConfig& config) {
  if (config.mode != Mode::OS) throw Error(ErrorCode::InvalidConfig, "decode_os needs a one-shot config");
  const Network net(params, config);
  DecoderTrace tr;
  decoder_forward(net, config, embedding, encoder_outputs.view(), last_observed, std::nullopt, tr);
  return tr.prediction;
}

std::vector<double> decode_ar(CVec embedding, const Tensor& encoder_outputs, double last_observed,
                              const ParameterStore& params, const ModelConfig& config, std::optional<CVec> teacher) {
  if (config.mode != Mode::AR) throw Error(ErrorCode::InvalidConfig, "decode_ar needs an autoregressive config");
  const Network net(params, config);
  DecoderTrace tr;
  decoder_forward(net, config, embedding, encoder_outputs.view(), last_observed, teacher, tr);
  return tr.prediction;
}

void check_sample(const Sample& sample, const ModelConfig& config, bool need_full_target) {
  if (sample.input.rank() != 2 || sample.input.cols() != config.feature_count())
    throw Error(ErrorCode::ShapeMismatch, sample.event_id + ": sample has " + std::to_string(sample.input.cols()) +
                                              " feature columns, model expects " +
                                              std::to_string(config.feature_count()));
  if (sample.input.rows() != config.input_len)
    throw Error(ErrorCode::ShapeMismatch, sample.event_id + ": input window length " +
                                              std::to_string(sample.input.rows()) + " != " +
                                              std::to_string(config.input_len));
  if (need_full_target && sample.target.size() != config.output_len)
    throw Error(ErrorCode::ShapeMismatch, sample.event_id + ": target length " +
                                              std::to_string(sample.target.size()) + " != " +
                                              std::to_string(config.output_len));
}

struct Seq2SeqPass::Impl {
  const ParameterStore& params;
  ModelConfig config;
  Network net;
  EncoderTrace encoder;
  DecoderTrace decoder;
  bool ran = false;

  Impl(const ParameterStore& p, const ModelConfig& c) : params(p), config(c), net(p, c) {}
};

Seq2SeqPass::Seq2SeqPass(const ParameterStore& params, const ModelConfig& config) {
  config.validate();
  impl_ = std::make_unique<Impl>(params, config);
}

Seq2SeqPass::~Seq2SeqPass() = default;
Seq2SeqPass::Seq2SeqPass(Seq2SeqPass&&) noexcept = default;
Seq2SeqPass& Seq2SeqPass::operator=(Seq2SeqPass&&) noexcept = default;

const std::vector<double>& Seq2SeqPass::run(const Tensor& input, std::optional<CVec> teacher) {
  auto& m = *impl_;
  if (input.rank() != 2 || input.cols() != m.config.feature_count() || input.rows() != m.config.input_len)
    throw Error(ErrorCode::ShapeMismatch, "input shape " + shape_string(input.shape()) + " does not match model");
  encoder_forward(m.net, input, m.encoder);
  const double last_observed = input.at(input.rows() - 1, 0);
  decoder_forward(m.net, m.config, m.encoder.embedding, m.encoder.l1.outputs(), last_observed,
                  m.config.mode == Mode::AR ? teacher : std::nullopt, m.decoder);
  m.ran = true;
  return m.decoder.prediction;
}

const std::vector<double>& Seq2SeqPass::prediction() const { return impl_->decoder.prediction; }

void Seq2SeqPass::backward(CVec prediction_grad, ParameterStore& grads) {
  auto& m = *impl_;
  if (!m.ran) throw Error(ErrorCode::InvalidArgument, "backward called before run");
  NetworkGrads g(grads);
  const MatrixRef enc = m.encoder.l1.outputs();
  std::vector<double> d_enc(enc.rows * enc.cols, 0.0);
  const auto d_embedding =
      decoder_backward(m.net, g, m.decoder, enc, prediction_grad, {d_enc.data(), enc.rows, enc.cols});
  encoder_backward(m.net, g, m.encoder, std::move(d_enc), d_embedding);
}

std::vector<double> forward(const Sample& sample, const ParameterStore& params, const ModelConfig& config,
                            bool teacher_forcing) {
  const bool use_teacher = teacher_forcing && config.mode == Mode::AR;
  check_sample(sample, config, use_teacher);
  Seq2SeqPass pass(params, config);
  return pass.run(sample.input, use_teacher ? std::optional<CVec>(sample.target) : std::nullopt);
}

double loss_and_gradient(const Sample& sample, const ParameterStore& params, const ModelConfig& config,
                         bool teacher_forcing, ParameterStore& grads, double scale) {
  check_sample(sample, config, true);
  const bool use_teacher = teacher_forcing && config.mode == Mode::AR;
  Seq2SeqPass pass(params, config);
  const auto& pred = pass.run(sample.input, use_teacher ? std::optional<CVec>(sample.target) : std::nullopt);
  const double loss = ops::mse_loss(pred, sample.target);
  std::vector<double> d_pred(pred.size(), 0.0);
  ops::mse_loss_backward(pred, sample.target, scale, d_pred);
  pass.backward(d_pred, grads);
  return loss;
}

}  // namespace protoncast
