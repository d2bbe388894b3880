#include "dialprobe/models.hpp"

#include <algorithm>
#include <cmath>

namespace dialprobe::models {

using tensor::Parameter;
using tensor::Shape;
using tensor::Tensor;

std::string_view to_string(Kind k) {
  switch (k) {
  case Kind::Seq2Seq: return "seq2seq";
  case Kind::Seq2SeqAttn: return "seq2seq_attn";
  case Kind::Hred: return "hred";
  case Kind::BiLstmAttn: return "bilstm_attn";
  case Kind::Transformer: return "transformer";
  }
  return "seq2seq";
}

Kind parse_kind(std::string_view name) {
  for (Kind k : all_kinds())
    if (to_string(k) == name) return k;
  throw UsageError("unknown model '" + std::string(name) +
                   "' (expected seq2seq, seq2seq_attn, hred, bilstm_attn or transformer)");
}

const std::vector<Kind>& all_kinds() {
  static const std::vector<Kind> kinds = {Kind::Seq2Seq, Kind::Seq2SeqAttn, Kind::Hred, Kind::BiLstmAttn,
                                          Kind::Transformer};
  return kinds;
}

ModelConfig preset(Kind kind, std::string_view scale, std::size_t vocab_size) {
  ModelConfig c;
  c.kind = kind;
  c.vocab_size = vocab_size;
  const bool tr = kind == Kind::Transformer;
  if (scale == "desk") {
    c.hidden = 64;
    c.embed = tr ? 64 : 32;
  } else if (scale == "paper") {
    c.hidden = tr ? 512 : 256;
    c.embed = tr ? 512 : 128;
  } else if (scale == "tiny") {
    c.hidden = 8;
    c.embed = tr ? 8 : 4;
  } else {
    throw UsageError("unknown scale '" + std::string(scale) + "' (expected desk, paper or tiny)");
  }
  c.layers = 2;
  c.heads = 2;
  c.lr = tr ? 1e-3 : 4e-3;
  return c;
}

// ---------------------------------------------------------------------------
// Shared machinery

Model::Model(ModelConfig cfg, std::uint64_t seed)
    : cfg_(cfg), init_rng_(std::make_unique<Rng>(sub_seed(seed, "init:" + std::string(to_string(cfg.kind))))) {
  if (cfg_.vocab_size <= corpus::kReservedTokens) throw ShapeMismatch("model vocabulary is empty");
  if (cfg_.hidden == 0 || cfg_.embed == 0 || cfg_.layers == 0) throw ShapeMismatch("model sizes must be positive");
}

Parameter& Model::add_param(const std::string& name, Tensor value) { return params_.add(name, std::move(value)); }

Var Model::zeros(Graph& g, std::size_t rows, std::size_t cols) const { return g.constant(Tensor(Shape{rows, cols})); }

Model::LstmStack Model::make_lstm(const std::string& prefix, std::size_t layers, std::size_t input,
                                  std::size_t hidden) {
  LstmStack s;
  s.hidden = hidden;
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string base = prefix + ".l" + std::to_string(l);
    const std::size_t in = l == 0 ? input : hidden;
    LstmLayer layer;
    layer.wx = &add_param(base + ".wx", tensor::uniform_init(Shape{in, 4 * hidden}, bound, *init_rng_));
    layer.wh = &add_param(base + ".wh", tensor::uniform_init(Shape{hidden, 4 * hidden}, bound, *init_rng_));
    Tensor b(Shape{1, 4 * hidden});
    for (std::size_t j = hidden; j < 2 * hidden; ++j) b.data[j] = 1.0;  // forget gate
    layer.b = &add_param(base + ".b", std::move(b));
    s.layers.push_back(layer);
  }
  return s;
}

Var Model::run_lstm(Graph& g, const LstmStack& s, Var x, const std::vector<Var>& h0, const std::vector<Var>& c0,
                    std::vector<Var>& final_h, std::vector<Var>& final_c) const {
  const std::size_t H = s.hidden;
  const std::size_t T = g.value(x).rows();
  final_h.assign(s.layers.size(), Var{});
  final_c.assign(s.layers.size(), Var{});
  Var input = x;
  for (std::size_t l = 0; l < s.layers.size(); ++l) {
    const LstmLayer& L = s.layers[l];
    Var proj = tensor::add(g, tensor::matmul(g, input, leaf(g, L.wx)), leaf(g, L.b));
    Var wh = leaf(g, L.wh);
    Var h = h0.empty() ? zeros(g, 1, H) : h0[l];
    Var c = c0.empty() ? zeros(g, 1, H) : c0[l];
    std::vector<Var> rows;
    rows.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
      Var gates = tensor::add(g, tensor::slice(g, proj, 0, t, t + 1), tensor::matmul(g, h, wh));
      Var hc = tensor::lstm_cell(g, gates, c);
      h = tensor::slice(g, hc, 1, 0, H);
      c = tensor::slice(g, hc, 1, H, 2 * H);
      rows.push_back(h);
    }
    final_h[l] = h;
    final_c[l] = c;
    input = T == 1 ? rows[0] : tensor::concat(g, rows, 0);
  }
  return input;
}

Var Model::lstm_step(Graph& g, const LstmStack& s, Var x, std::vector<Var>& h, std::vector<Var>& c) const {
  const std::size_t H = s.hidden;
  Var input = x;
  for (std::size_t l = 0; l < s.layers.size(); ++l) {
    const LstmLayer& L = s.layers[l];
    Var gates = tensor::add(g, tensor::add(g, tensor::matmul(g, input, leaf(g, L.wx)), tensor::matmul(g, h[l], leaf(g, L.wh))),
                            leaf(g, L.b));
    Var hc = tensor::lstm_cell(g, gates, c[l]);
    h[l] = tensor::slice(g, hc, 1, 0, H);
    c[l] = tensor::slice(g, hc, 1, H, 2 * H);
    input = h[l];
  }
  return input;
}

Encoded Model::encode(Graph& g, const Context& ctx) const {
  if (ctx.tokens.empty()) throw EmptyContext("context has no tokens");
  for (TokenId id : ctx.tokens)
    if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size)
      throw ShapeMismatch("token id " + std::to_string(id) + " outside vocabulary of " +
                          std::to_string(cfg_.vocab_size));
  return encode_impl(g, ctx);
}

DecoderState Model::start(Graph& g, const Encoded& enc) const { return start_impl(g, enc); }

DecoderState Model::start_impl(Graph&, const Encoded& enc) const {
  DecoderState st;
  st.h = enc.init_h;
  st.c = enc.init_c;
  return st;
}

Var Model::teacher_forced(Graph& g, const Encoded& enc, std::span<const TokenId> inputs,
                          std::vector<std::vector<double>>* attention_log) const {
  DecoderState st = start(g, enc);
  st.attention_log = attention_log;
  std::vector<Var> rows;
  rows.reserve(inputs.size());
  for (TokenId t : inputs) rows.push_back(step(g, enc, st, t));
  return rows.size() == 1 ? rows[0] : tensor::concat(g, rows, 0);
}

namespace {

// Additive alignment v . tanh(H W_a + s U_a), softmax-normalized over positions.
struct Attention {
  Parameter* wa = nullptr;
  Parameter* ua = nullptr;
  Parameter* v = nullptr;

  Var keys(Graph& g, Var states) const { return tensor::matmul(g, states, g.param(*wa)); }

  Var context(Graph& g, const Encoded& enc, Var query, std::vector<std::vector<double>>* log) const {
    Var q = tensor::matmul(g, query, g.param(*ua));
    Var e = tensor::tanh(g, tensor::add(g, enc.keys, q));
    Var scores = tensor::transpose(g, tensor::matmul(g, e, g.param(*v)));
    Var w = tensor::softmax(g, scores);
    if (log) log->push_back(g.value(w).data);
    return tensor::matmul(g, w, enc.states);
  }
};

// ---------------------------------------------------------------------------
// Recurrent models

class RecurrentBase : public Model {
public:
  RecurrentBase(const ModelConfig& cfg, std::uint64_t seed) : Model(cfg, seed) {
    embed_ = &add_param("embed", tensor::uniform_init(Shape{cfg.vocab_size, cfg.embed}, 0.1, *init_rng_));
  }

  Var step(Graph& g, const Encoded& enc, DecoderState& st, TokenId input) const override {
    const TokenId ids[1] = {input};
    Var x = tensor::embed_lookup(g, g.param(*embed_), ids);
    if (attention_) x = tensor::concat(g, {x, attn_.context(g, enc, st.h.back(), st.attention_log)}, 1);
    Var top = lstm_step(g, decoder_, x, st.h, st.c);
    return tensor::add(g, tensor::matmul(g, top, g.param(*out_w_)), g.param(*out_b_));
  }

protected:
  void build_decoder(bool attention, std::size_t decoder_layers) {
    attention_ = attention;
    const std::size_t H = cfg_.hidden;
    decoder_ = make_lstm("dec", decoder_layers, cfg_.embed + (attention ? H : 0), H);
    if (attention) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(H));
      attn_.wa = &add_param("attn.wa", tensor::uniform_init(Shape{H, H}, bound, *init_rng_));
      attn_.ua = &add_param("attn.ua", tensor::uniform_init(Shape{H, H}, bound, *init_rng_));
      attn_.v = &add_param("attn.v", tensor::uniform_init(Shape{H, 1}, bound, *init_rng_));
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(H));
    out_w_ = &add_param("out.w", tensor::uniform_init(Shape{H, cfg_.vocab_size}, bound, *init_rng_));
    out_b_ = &add_param("out.b", Tensor(Shape{1, cfg_.vocab_size}));
  }

  Var embed_tokens(Graph& g, std::span<const TokenId> ids) const {
    return tensor::embed_lookup(g, g.param(*embed_), ids);
  }

  void attach_keys(Graph& g, Encoded& enc) const {
    if (!attention_) return;
    enc.keys = attn_.keys(g, enc.states);
    enc.has_keys = true;
  }

  Parameter* embed_ = nullptr;
  Parameter* out_w_ = nullptr;
  Parameter* out_b_ = nullptr;
  LstmStack decoder_;
  Attention attn_;
  bool attention_ = false;
};

class Seq2SeqModel final : public RecurrentBase {
public:
  Seq2SeqModel(const ModelConfig& cfg, std::uint64_t seed, bool attention) : RecurrentBase(cfg, seed) {
    encoder_ = make_lstm("enc", cfg.layers, cfg.embed, cfg.hidden);
    build_decoder(attention, cfg.layers);
  }

protected:
  Encoded encode_impl(Graph& g, const Context& ctx) const override {
    Encoded enc;
    enc.states = run_lstm(g, encoder_, embed_tokens(g, ctx.tokens), {}, {}, enc.init_h, enc.init_c);
    enc.summary = enc.init_h.back();
    attach_keys(g, enc);
    return enc;
  }

private:
  LstmStack encoder_;
};

class BiLstmModel final : public RecurrentBase {
public:
  BiLstmModel(const ModelConfig& cfg, std::uint64_t seed) : RecurrentBase(cfg, seed) {
    fwd_ = make_lstm("enc_fwd", cfg.layers, cfg.embed, cfg.hidden);
    bwd_ = make_lstm("enc_bwd", cfg.layers, cfg.embed, cfg.hidden);
    build_decoder(true, cfg.layers);
  }

protected:
  Encoded encode_impl(Graph& g, const Context& ctx) const override {
    const std::size_t T = ctx.tokens.size();
    std::vector<TokenId> reversed(ctx.tokens.rbegin(), ctx.tokens.rend());
    std::vector<Var> fh, fc, bh, bc;
    Var f = run_lstm(g, fwd_, embed_tokens(g, ctx.tokens), {}, {}, fh, fc);
    Var b = run_lstm(g, bwd_, embed_tokens(g, reversed), {}, {}, bh, bc);
    // Backward states come out in reversed order; realign them by position.
    Var b_aligned = b;
    if (T > 1) {
      std::vector<Var> rows;
      rows.reserve(T);
      for (std::size_t t = T; t-- > 0;) rows.push_back(tensor::slice(g, b, 0, t, t + 1));
      b_aligned = tensor::concat(g, rows, 0);
    }
    Encoded enc;
    enc.states = tensor::add(g, f, b_aligned);
    for (std::size_t l = 0; l < fh.size(); ++l) {
      enc.init_h.push_back(tensor::add(g, fh[l], bh[l]));
      enc.init_c.push_back(tensor::add(g, fc[l], bc[l]));
    }
    enc.summary = enc.init_h.back();
    attach_keys(g, enc);
    return enc;
  }

private:
  LstmStack fwd_, bwd_;
};

class HredModel final : public RecurrentBase {
public:
  HredModel(const ModelConfig& cfg, std::uint64_t seed) : RecurrentBase(cfg, seed) {
    sentence_ = make_lstm("sent", 1, cfg.embed, cfg.hidden);
    context_ = make_lstm("ctx", 1, cfg.hidden, cfg.hidden);
    build_decoder(true, cfg.layers);
  }

protected:
  Encoded encode_impl(Graph& g, const Context& ctx) const override {
    const std::size_t T = ctx.tokens.size();
    std::vector<std::size_t> segments(ctx.segments.begin(), ctx.segments.end());
    if (segments.empty()) segments.push_back(T);
    std::size_t total = 0;
    for (std::size_t s : segments) total += s;
    if (total != T || std::find(segments.begin(), segments.end(), 0) != segments.end())
      throw ShapeMismatch("segment lengths do not partition the context");

    Var x = embed_tokens(g, ctx.tokens);
    std::vector<Var> sentences;
    std::size_t begin = 0;
    std::vector<Var> h, c;
    for (std::size_t len : segments) {
      Var part = segments.size() == 1 ? x : tensor::slice(g, x, 0, begin, begin + len);
      run_lstm(g, sentence_, part, {}, {}, h, c);
      sentences.push_back(h[0]);
      begin += len;
    }
    Var sent = sentences.size() == 1 ? sentences[0] : tensor::concat(g, sentences, 0);
    Encoded enc;
    enc.states = run_lstm(g, context_, sent, {}, {}, h, c);
    enc.summary = h[0];
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      enc.init_h.push_back(h[0]);
      enc.init_c.push_back(c[0]);
    }
    attach_keys(g, enc);
    return enc;
  }

private:
  LstmStack sentence_, context_;
};

// ---------------------------------------------------------------------------
// Transformer

class TransformerModel final : public Model {
public:
  TransformerModel(const ModelConfig& cfg, std::uint64_t seed) : Model(cfg, seed) {
    const std::size_t d = cfg.hidden;
    if (cfg.embed != d) throw ShapeMismatch("transformer embedding width must equal hidden size");
    if (cfg.heads == 0 || d % cfg.heads != 0) throw ShapeMismatch("hidden size must be divisible by heads");
    embed_ = &add_param("embed", tensor::uniform_init(Shape{cfg.vocab_size, d}, 0.1, *init_rng_));
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const std::string base = "enc" + std::to_string(l);
      EncoderLayer e;
      e.self = make_attention(base + ".self");
      e.ln1 = make_norm(base + ".ln1");
      e.ff = make_ff(base + ".ff");
      e.ln2 = make_norm(base + ".ln2");
      enc_.push_back(e);
    }
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const std::string base = "dec" + std::to_string(l);
      DecoderLayer dl;
      dl.self = make_attention(base + ".self");
      dl.ln1 = make_norm(base + ".ln1");
      dl.cross = make_attention(base + ".cross");
      dl.ln2 = make_norm(base + ".ln2");
      dl.ff = make_ff(base + ".ff");
      dl.ln3 = make_norm(base + ".ln3");
      dec_.push_back(dl);
    }
    out_w_ = &add_param("out.w", tensor::uniform_init(Shape{d, cfg.vocab_size}, 0.05, *init_rng_));
    out_b_ = &add_param("out.b", Tensor(Shape{1, cfg.vocab_size}));
  }

  Var step(Graph& g, const Encoded& enc, DecoderState& st, TokenId input) const override {
    st.prefix.push_back(input);
    Var y = decode(g, enc, st.prefix);
    const std::size_t n = st.prefix.size();
    return logits(g, n == 1 ? y : tensor::slice(g, y, 0, n - 1, n));
  }

  Var teacher_forced(Graph& g, const Encoded& enc, std::span<const TokenId> inputs,
                     std::vector<std::vector<double>>*) const override {
    return logits(g, decode(g, enc, inputs));
  }

protected:
  Encoded encode_impl(Graph& g, const Context& ctx) const override {
    Var x = embed_with_positions(g, ctx.tokens);
    for (const auto& e : enc_) {
      x = norm(g, e.ln1, tensor::add(g, x, attend(g, e.self, x, x, false)));
      x = norm(g, e.ln2, tensor::add(g, x, feed_forward(g, e.ff, x)));
    }
    Encoded enc;
    enc.states = x;
    enc.summary = tensor::mean_over_axis(g, x, 0);
    return enc;
  }

private:
  struct Mha {
    Parameter *wq, *wk, *wv, *wo;
  };
  struct Norm {
    Parameter *gain, *bias;
  };
  struct Ff {
    Parameter *w1, *b1, *w2, *b2;
  };
  struct EncoderLayer {
    Mha self;
    Norm ln1;
    Ff ff;
    Norm ln2;
  };
  struct DecoderLayer {
    Mha self;
    Norm ln1;
    Mha cross;
    Norm ln2;
    Ff ff;
    Norm ln3;
  };

  double xavier(std::size_t in, std::size_t out) const {
    return std::sqrt(6.0 / static_cast<double>(in + out));
  }

  Mha make_attention(const std::string& base) {
    const std::size_t d = cfg_.hidden;
    const double b = xavier(d, d);
    return {&add_param(base + ".wq", tensor::uniform_init(Shape{d, d}, b, *init_rng_)),
            &add_param(base + ".wk", tensor::uniform_init(Shape{d, d}, b, *init_rng_)),
            &add_param(base + ".wv", tensor::uniform_init(Shape{d, d}, b, *init_rng_)),
            &add_param(base + ".wo", tensor::uniform_init(Shape{d, d}, b, *init_rng_))};
  }

  Norm make_norm(const std::string& base) {
    const std::size_t d = cfg_.hidden;
    return {&add_param(base + ".gain", Tensor(Shape{1, d}, 1.0)), &add_param(base + ".bias", Tensor(Shape{1, d}))};
  }

  Ff make_ff(const std::string& base) {
    const std::size_t d = cfg_.hidden, f = cfg_.ff_mult * cfg_.hidden;
    return {&add_param(base + ".w1", tensor::uniform_init(Shape{d, f}, xavier(d, f), *init_rng_)),
            &add_param(base + ".b1", Tensor(Shape{1, f})),
            &add_param(base + ".w2", tensor::uniform_init(Shape{f, d}, xavier(f, d), *init_rng_)),
            &add_param(base + ".b2", Tensor(Shape{1, d}))};
  }

  Var embed_with_positions(Graph& g, std::span<const TokenId> ids) const {
    const std::size_t d = cfg_.hidden, T = ids.size();
    Var x = tensor::scale(g, tensor::embed_lookup(g, g.param(*embed_), ids), std::sqrt(static_cast<double>(d)));
    Tensor pe(Shape{T, d});
    for (std::size_t pos = 0; pos < T; ++pos)
      for (std::size_t i = 0; i < d; ++i) {
        const double angle =
            static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i - i % 2) / static_cast<double>(d));
        pe.at(pos, i) = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
      }
    return tensor::add(g, x, g.constant(std::move(pe)));
  }

  Var norm(Graph& g, const Norm& n, Var x) const {
    return tensor::layer_norm(g, x, g.param(*n.gain), g.param(*n.bias));
  }

  Var feed_forward(Graph& g, const Ff& f, Var x) const {
    Var h = tensor::relu(g, tensor::add(g, tensor::matmul(g, x, g.param(*f.w1)), g.param(*f.b1)));
    return tensor::add(g, tensor::matmul(g, h, g.param(*f.w2)), g.param(*f.b2));
  }

  Var attend(Graph& g, const Mha& m, Var q_in, Var kv_in, bool causal) const {
    const std::size_t d = cfg_.hidden, heads = cfg_.heads, dk = d / heads;
    const std::size_t tq = g.value(q_in).rows(), tk = g.value(kv_in).rows();
    Var q = tensor::matmul(g, q_in, g.param(*m.wq));
    Var k = tensor::matmul(g, kv_in, g.param(*m.wk));
    Var v = tensor::matmul(g, kv_in, g.param(*m.wv));
    Var mask;
    if (causal && tq > 1) {
      Tensor mt(Shape{tq, tk});
      for (std::size_t i = 0; i < tq; ++i)
        for (std::size_t j = i + 1; j < tk; ++j) mt.at(i, j) = -1e9;
      mask = g.constant(std::move(mt));
    }
    const double inv = 1.0 / std::sqrt(static_cast<double>(dk));
    std::vector<Var> outs;
    for (std::size_t h = 0; h < heads; ++h) {
      Var qh = heads == 1 ? q : tensor::slice(g, q, 1, h * dk, (h + 1) * dk);
      Var kh = heads == 1 ? k : tensor::slice(g, k, 1, h * dk, (h + 1) * dk);
      Var vh = heads == 1 ? v : tensor::slice(g, v, 1, h * dk, (h + 1) * dk);
      Var s = tensor::scale(g, tensor::matmul(g, qh, tensor::transpose(g, kh)), inv);
      if (causal && tq > 1) s = tensor::add(g, s, mask);
      outs.push_back(tensor::matmul(g, tensor::softmax(g, s), vh));
    }
    Var joined = heads == 1 ? outs[0] : tensor::concat(g, outs, 1);
    return tensor::matmul(g, joined, g.param(*m.wo));
  }

  Var decode(Graph& g, const Encoded& enc, std::span<const TokenId> inputs) const {
    Var y = embed_with_positions(g, inputs);
    for (const auto& l : dec_) {
      y = norm(g, l.ln1, tensor::add(g, y, attend(g, l.self, y, y, true)));
      y = norm(g, l.ln2, tensor::add(g, y, attend(g, l.cross, y, enc.states, false)));
      y = norm(g, l.ln3, tensor::add(g, y, feed_forward(g, l.ff, y)));
    }
    return y;
  }

  Var logits(Graph& g, Var y) const {
    return tensor::add(g, tensor::matmul(g, y, g.param(*out_w_)), g.param(*out_b_));
  }

  Parameter* embed_ = nullptr;
  Parameter* out_w_ = nullptr;
  Parameter* out_b_ = nullptr;
  std::vector<EncoderLayer> enc_;
  std::vector<DecoderLayer> dec_;
};

} // namespace

std::unique_ptr<Model> make_model(const ModelConfig& cfg, std::uint64_t seed) {
  switch (cfg.kind) {
  case Kind::Seq2Seq: return std::make_unique<Seq2SeqModel>(cfg, seed, false);
  case Kind::Seq2SeqAttn: return std::make_unique<Seq2SeqModel>(cfg, seed, true);
  case Kind::Hred: return std::make_unique<HredModel>(cfg, seed);
  case Kind::BiLstmAttn: return std::make_unique<BiLstmModel>(cfg, seed);
  case Kind::Transformer: return std::make_unique<TransformerModel>(cfg, seed);
  }
  throw UsageError("unknown model kind");
}

// ---------------------------------------------------------------------------
// Free functions

Var step_loss(Graph& g, const Model& m, const Context& ctx, std::span<const TokenId> target,
              std::vector<std::vector<double>>* attention_log) {
  if (target.empty()) throw EmptyTarget("target sequence is empty");
  std::vector<TokenId> inputs;
  inputs.reserve(target.size());
  inputs.push_back(corpus::kSos);
  inputs.insert(inputs.end(), target.begin(), target.end() - 1);
  Encoded enc = m.encode(g, ctx);
  Var logits = m.teacher_forced(g, enc, inputs, attention_log);
  return tensor::cross_entropy(g, logits, target);
}

std::vector<TokenId> greedy_decode(const Model& m, const Context& ctx, std::size_t max_len) {
  Graph g(false);
  Encoded enc = m.encode(g, ctx);
  DecoderState st = m.start(g, enc);
  std::vector<TokenId> out;
  TokenId input = corpus::kSos;
  for (std::size_t t = 0; t < max_len; ++t) {
    const Tensor& logits = g.value(m.step(g, enc, st, input));
    const auto best = std::max_element(logits.data.begin(), logits.data.end()) - logits.data.begin();
    const TokenId tok = static_cast<TokenId>(best);
    if (tok == corpus::kEos) break;
    out.push_back(tok);
    input = tok;
  }
  return out;
}

std::vector<double> embed_context(const Model& m, const Context& ctx) {
  Graph g(false);
  Encoded enc = m.encode(g, ctx);
  return g.value(enc.summary).data;
}

Context context_of(const corpus::TrainingExample& ex) { return Context{ex.context, ex.segments}; }

} // namespace dialprobe::models
