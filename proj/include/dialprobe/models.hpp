#pragma once

#include "dialprobe/corpus.hpp"
#include "dialprobe/errors.hpp"
#include "dialprobe/tensor.hpp"
#include "dialprobe/textmetrics.hpp"
#include "dialprobe/util.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dialprobe::models {

using corpus::TokenId;
using tensor::Graph;
using tensor::Var;

enum class Kind { Seq2Seq, Seq2SeqAttn, Hred, BiLstmAttn, Transformer };

std::string_view to_string(Kind k);  // seq2seq, seq2seq_attn, hred, bilstm_attn, transformer
Kind parse_kind(std::string_view name);
const std::vector<Kind>& all_kinds();

struct ModelConfig {
  Kind kind = Kind::Seq2Seq;
  std::size_t vocab_size = 0;
  std::size_t hidden = 64;
  std::size_t embed = 32;
  std::size_t layers = 2;  // per stack; the transformer uses this many encoder and decoder layers each
  std::size_t heads = 2;
  std::size_t ff_mult = 4;
  double lr = 4e-3;
  std::size_t epochs = 25;
  std::size_t max_decode_len = 30;
  std::size_t batch_size = 4;
  double clip_norm = 5.0;
};

// Presets: "desk" (default), "paper" and "tiny" (gradient checks).
ModelConfig preset(Kind kind, std::string_view scale, std::size_t vocab_size);

// Context handed to an encoder. segments are per-turn lengths and are only
// read by the hierarchical model; empty means one segment.
struct Context {
  std::span<const TokenId> tokens;
  std::span<const std::size_t> segments;
};

struct Encoded {
  Var states;   // [T, H] top-layer per-position states (per-sentence for HRED)
  Var summary;  // [1, H]
  std::vector<Var> init_h, init_c;  // recurrent decoder initial state
  Var keys;                         // attention projection of states, when used
  bool has_keys = false;
};

struct DecoderState {
  std::vector<Var> h, c;
  std::vector<TokenId> prefix;  // transformer only
  // Attention distributions of every step, when the caller asks for them.
  std::vector<std::vector<double>>* attention_log = nullptr;
};

class Model {
public:
  Model(ModelConfig cfg, std::uint64_t seed);
  virtual ~Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  tensor::ParameterSet& params() { return params_; }
  const tensor::ParameterSet& params() const { return params_; }
  std::size_t width() const { return cfg_.hidden; }

  // Throws EmptyContext on an empty token sequence.
  Encoded encode(Graph& g, const Context& ctx) const;
  DecoderState start(Graph& g, const Encoded& enc) const;
  // One decoding step on `input`; returns logits [1, V].
  virtual Var step(Graph& g, const Encoded& enc, DecoderState& st, TokenId input) const = 0;
  // Teacher-forced logits [T, V] for decoder inputs (SOS + target[0..T-2]).
  virtual Var teacher_forced(Graph& g, const Encoded& enc, std::span<const TokenId> inputs,
                             std::vector<std::vector<double>>* attention_log = nullptr) const;

protected:
  virtual Encoded encode_impl(Graph& g, const Context& ctx) const = 0;
  virtual DecoderState start_impl(Graph& g, const Encoded& enc) const;

  tensor::Parameter& add_param(const std::string& name, tensor::Tensor value);
  static Var leaf(Graph& g, tensor::Parameter* p) { return g.param(*p); }

  struct LstmLayer {
    tensor::Parameter* wx = nullptr;  // [in, 4H], gate order i f g o
    tensor::Parameter* wh = nullptr;  // [H, 4H]
    tensor::Parameter* b = nullptr;   // [1, 4H]
  };
  struct LstmStack {
    std::vector<LstmLayer> layers;
    std::size_t hidden = 0;
  };
  LstmStack make_lstm(const std::string& prefix, std::size_t layers, std::size_t input, std::size_t hidden);
  // Runs a stack over X [T, in] from the given initial states (zeros when
  // empty). Returns top-layer states [T, H]; final_h/final_c get per-layer
  // final states.
  Var run_lstm(Graph& g, const LstmStack& s, Var x, const std::vector<Var>& h0, const std::vector<Var>& c0,
               std::vector<Var>& final_h, std::vector<Var>& final_c) const;
  // One step of a stack on x [1, in]; updates h/c in place, returns top h.
  Var lstm_step(Graph& g, const LstmStack& s, Var x, std::vector<Var>& h, std::vector<Var>& c) const;

  Var zeros(Graph& g, std::size_t rows, std::size_t cols) const;

  ModelConfig cfg_;
  mutable tensor::ParameterSet params_;
  std::unique_ptr<Rng> init_rng_;
};

std::unique_ptr<Model> make_model(const ModelConfig& cfg, std::uint64_t seed);

// Fused teacher-forced loss (sum over target tokens) for one example.
// Throws EmptyTarget on an empty target.
Var step_loss(Graph& g, const Model& m, const Context& ctx, std::span<const TokenId> target,
              std::vector<std::vector<double>>* attention_log = nullptr);

// Argmax decoding until EOS or max_len tokens; EOS is not returned.
std::vector<TokenId> greedy_decode(const Model& m, const Context& ctx, std::size_t max_len);

// Fixed-width encoder summary of a context.
std::vector<double> embed_context(const Model& m, const Context& ctx);
Context context_of(const corpus::TrainingExample& ex);

// ---------------------------------------------------------------------------
// Checkpoints

enum class Tag { Untrained, LastEpoch, BestMetric, Epoch };

struct Checkpoint {
  Tag tag = Tag::Untrained;
  std::string metric;  // selection metric name for BestMetric
  double metric_value = 0.0;
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  ModelConfig config;
  std::uint64_t vocab_digest = 0;
  std::vector<std::pair<std::string, tensor::Tensor>> tensors;

  // "untrained", "last", "best", "epoch:N"
  std::string tag_string() const;
};

Checkpoint snapshot(const Model& m, Tag tag, std::size_t epoch, std::uint64_t seed, std::uint64_t vocab_digest);
std::unique_ptr<Model> restore(const Checkpoint& ck);

std::string serialize_checkpoint(const Checkpoint& ck);
Checkpoint parse_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean per-token cross-entropy
  double valid_metric = 0.0;
};

struct RunRecord {
  ModelConfig config;
  std::uint64_t seed = 0;
  textmetrics::Metric metric = textmetrics::Metric::Bleu2;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::vector<Checkpoint> checkpoints;  // untrained, [epoch:N...], last, best
  std::size_t parameter_count = 0;
};

class DivergedLoss : public Error {
public:
  DivergedLoss(const std::string& msg, RunRecord partial)
      : Error("DivergedLoss", msg), partial_(std::move(partial)) {}
  const RunRecord& partial() const { return partial_; }

private:
  RunRecord partial_;
};

struct TrainOptions {
  textmetrics::Metric metric = textmetrics::Metric::Bleu2;
  bool validate = true;
  bool epoch_snapshots = false;
  // Stop once the epoch's mean training loss reaches this value.
  std::optional<double> target_loss;
};

// Index of the first maximum.
std::size_t best_epoch_index(const std::vector<double>& metric_per_epoch);

RunRecord train(const corpus::Corpus& corpus, const ModelConfig& config, std::uint64_t seed,
                const TrainOptions& options = {});

// Mean per-token loss over a split, without updates.
double evaluate_loss(const Model& m, const std::vector<corpus::TrainingExample>& examples);

} // namespace dialprobe::models
