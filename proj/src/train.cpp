#include "dialprobe/models.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>

namespace dialprobe::models {

using tensor::Shape;
using tensor::Tensor;
using json = nlohmann::json;

namespace {

constexpr std::string_view kMagic = "DPCK1\n";

std::string_view tag_name(Tag t) {
  switch (t) {
  case Tag::Untrained: return "untrained";
  case Tag::LastEpoch: return "last";
  case Tag::BestMetric: return "best";
  case Tag::Epoch: return "epoch";
  }
  return "untrained";
}

Tag parse_tag(const std::string& s) {
  if (s == "untrained") return Tag::Untrained;
  if (s == "last") return Tag::LastEpoch;
  if (s == "best") return Tag::BestMetric;
  if (s == "epoch") return Tag::Epoch;
  throw CorruptCheckpoint("unknown checkpoint tag '" + s + "'");
}

json config_json(const ModelConfig& c) {
  return {{"kind", to_string(c.kind)}, {"vocab_size", c.vocab_size}, {"hidden", c.hidden},
          {"embed", c.embed},          {"layers", c.layers},         {"heads", c.heads},
          {"ff_mult", c.ff_mult},      {"lr", c.lr},                 {"epochs", c.epochs},
          {"max_decode_len", c.max_decode_len}, {"batch_size", c.batch_size}, {"clip_norm", c.clip_norm}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.kind = parse_kind(j.at("kind").get<std::string>());
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.embed = j.at("embed").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ff_mult = j.at("ff_mult").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.max_decode_len = j.at("max_decode_len").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.clip_norm = j.at("clip_norm").get<double>();
  return c;
}

void append_le(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double read_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

} // namespace

std::string Checkpoint::tag_string() const {
  if (tag == Tag::Epoch) return "epoch:" + std::to_string(epoch);
  return std::string(tag_name(tag));
}

Checkpoint snapshot(const Model& m, Tag tag, std::size_t epoch, std::uint64_t seed, std::uint64_t vocab_digest) {
  Checkpoint ck;
  ck.tag = tag;
  ck.epoch = epoch;
  ck.seed = seed;
  ck.config = m.config();
  ck.vocab_digest = vocab_digest;
  const auto& ps = m.params();
  ck.tensors.reserve(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) ck.tensors.emplace_back(ps[i].name, ps[i].value);
  return ck;
}

std::unique_ptr<Model> restore(const Checkpoint& ck) {
  auto m = make_model(ck.config, ck.seed);
  auto& ps = m->params();
  if (ps.size() != ck.tensors.size())
    throw CorruptCheckpoint("checkpoint has " + std::to_string(ck.tensors.size()) + " tensors, model expects " +
                            std::to_string(ps.size()));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& [name, t] = ck.tensors[i];
    if (name != ps[i].name || t.shape != ps[i].value.shape)
      throw CorruptCheckpoint("tensor " + name + " " + t.shape.str() + " does not match " + ps[i].name + " " +
                              ps[i].value.shape.str());
    ps[i].value = t;
  }
  return m;
}

std::string serialize_checkpoint(const Checkpoint& ck) {
  json manifest = {{"config", config_json(ck.config)},
                   {"tag", tag_name(ck.tag)},
                   {"metric", ck.metric},
                   {"metric_value", ck.metric_value},
                   {"epoch", ck.epoch},
                   {"seed", ck.seed},
                   {"vocab_digest", hex64(ck.vocab_digest)}};
  json tensors = json::array();
  std::size_t total = 0;
  for (const auto& [name, t] : ck.tensors) {
    json dims = json::array();
    for (std::size_t d = 0; d < t.shape.rank(); ++d) dims.push_back(t.shape[d]);
    tensors.push_back({{"name", name}, {"shape", dims}});
    total += t.size();
  }
  manifest["tensors"] = tensors;
  std::string out(kMagic);
  out += manifest.dump();
  out += '\n';
  out.reserve(out.size() + total * 8);
  for (const auto& [name, t] : ck.tensors)
    for (double v : t.data) append_le(out, v);
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, kMagic.size()) != kMagic) throw CorruptCheckpoint("bad magic");
  const std::size_t nl = bytes.find('\n', kMagic.size());
  if (nl == std::string_view::npos) throw CorruptCheckpoint("manifest is not terminated");
  Checkpoint ck;
  std::size_t offset = nl + 1;
  try {
    const json m = json::parse(bytes.substr(kMagic.size(), nl - kMagic.size()));
    ck.config = config_from_json(m.at("config"));
    ck.tag = parse_tag(m.at("tag").get<std::string>());
    ck.metric = m.at("metric").get<std::string>();
    ck.metric_value = m.at("metric_value").get<double>();
    ck.epoch = m.at("epoch").get<std::size_t>();
    ck.seed = m.at("seed").get<std::uint64_t>();
    ck.vocab_digest = std::stoull(m.at("vocab_digest").get<std::string>(), nullptr, 16);
    for (const auto& t : m.at("tensors")) {
      const auto dims = t.at("shape").get<std::vector<std::size_t>>();
      Shape s;
      if (dims.size() == 1) s = Shape{dims[0]};
      else if (dims.size() == 2) s = Shape{dims[0], dims[1]};
      else if (dims.size() == 3) s = Shape{dims[0], dims[1], dims[2]};
      else throw CorruptCheckpoint("tensor rank " + std::to_string(dims.size()) + " unsupported");
      Tensor value(s);
      if (offset + value.size() * 8 > bytes.size()) throw CorruptCheckpoint("file is truncated");
      for (double& v : value.data) {
        v = read_le(bytes.data() + offset);
        offset += 8;
      }
      ck.tensors.emplace_back(t.at("name").get<std::string>(), std::move(value));
    }
  } catch (const json::exception& e) {
    throw CorruptCheckpoint(std::string("manifest: ") + e.what());
  } catch (const UsageError& e) {
    throw CorruptCheckpoint(e.what());
  }
  if (offset != bytes.size()) throw CorruptCheckpoint("trailing bytes after tensor data");
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) { write_file_atomic(path, serialize_checkpoint(ck)); }

Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

// ---------------------------------------------------------------------------
// Training

std::size_t best_epoch_index(const std::vector<double>& metric_per_epoch) {
  if (metric_per_epoch.empty()) throw EmptyEvaluationSplit("no epochs to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < metric_per_epoch.size(); ++i)
    if (metric_per_epoch[i] > metric_per_epoch[best]) best = i;
  return best;
}

double evaluate_loss(const Model& m, const std::vector<corpus::TrainingExample>& examples) {
  double loss = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : examples) {
    Graph g(false);
    loss += g.value(step_loss(g, m, context_of(ex), ex.target)).item();
    tokens += ex.target.size();
  }
  if (tokens == 0) throw EmptyEvaluationSplit("no target tokens to evaluate");
  return loss / static_cast<double>(tokens);
}

namespace {

double validation_metric(const Model& m, const corpus::Corpus& corpus,
                         const std::vector<corpus::TrainingExample>& valid, textmetrics::Metric metric) {
  std::vector<textmetrics::Sentence> cands, refs;
  cands.reserve(valid.size());
  refs.reserve(valid.size());
  for (const auto& ex : valid) {
    cands.push_back(corpus.vocab.decode(greedy_decode(m, context_of(ex), m.config().max_decode_len)));
    refs.push_back(ex.target_words);
  }
  return textmetrics::score(metric, cands, refs).value;
}

} // namespace

RunRecord train(const corpus::Corpus& corpus, const ModelConfig& config, std::uint64_t seed,
                const TrainOptions& options) {
  if (config.vocab_size != corpus.vocab.size())
    throw VocabMismatch("config vocabulary " + std::to_string(config.vocab_size) + " vs corpus " +
                        std::to_string(corpus.vocab.size()));
  const auto train_set = corpus::make_examples(corpus, corpus::Split::Train);
  if (train_set.empty()) throw EmptyCorpus("no training examples");
  std::vector<corpus::TrainingExample> valid;
  if (options.validate) {
    valid = corpus::make_examples(corpus, corpus::Split::Valid);
    if (valid.empty()) throw EmptyEvaluationSplit("validation split has no examples");
  }

  auto model = make_model(config, seed);
  const std::uint64_t digest = corpus.vocab.digest();
  RunRecord rec;
  rec.config = config;
  rec.seed = seed;
  rec.metric = options.metric;
  rec.parameter_count = model->params().count();
  rec.checkpoints.push_back(snapshot(*model, Tag::Untrained, 0, seed, digest));

  tensor::AdamState adam;
  adam.lr = config.lr;
  Rng order_rng(sub_seed(seed, "shuffle"));
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t batch = std::max<std::size_t>(1, config.batch_size);

  std::optional<Checkpoint> best;
  std::vector<double> metrics;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::size_t batch_tokens = 0;
      for (std::size_t k = start; k < end; ++k) batch_tokens += train_set[order[k]].target.size();
      model->params().zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const auto& ex = train_set[order[k]];
        Graph g;
        Var loss = step_loss(g, *model, context_of(ex), ex.target);
        const double v = g.value(loss).item();
        if (!std::isfinite(v)) throw DivergedLoss("non-finite loss at epoch " + std::to_string(epoch), rec);
        epoch_loss += v;
        g.backward(tensor::scale(g, loss, 1.0 / static_cast<double>(batch_tokens)));
      }
      epoch_tokens += batch_tokens;
      try {
        tensor::clip_grad_norm(model->params(), config.clip_norm);
        tensor::adam_step(adam, model->params());
      } catch (const NonFiniteGradient& e) {
        throw DivergedLoss(std::string("epoch ") + std::to_string(epoch) + ": " + e.what(), rec);
      }
    }
    EpochRecord er;
    er.epoch = epoch;
    er.train_loss = epoch_loss / static_cast<double>(epoch_tokens);
    if (options.validate) {
      er.valid_metric = validation_metric(*model, corpus, valid, options.metric);
      metrics.push_back(er.valid_metric);
      if (!best || er.valid_metric > best->metric_value) {
        best = snapshot(*model, Tag::BestMetric, epoch, seed, digest);
        best->metric = std::string(textmetrics::to_string(options.metric));
        best->metric_value = er.valid_metric;
      }
    }
    rec.epochs.push_back(er);
    if (options.epoch_snapshots) rec.checkpoints.push_back(snapshot(*model, Tag::Epoch, epoch, seed, digest));
    if (options.target_loss && er.train_loss <= *options.target_loss) break;
  }
  const std::size_t last = rec.epochs.empty() ? 0 : rec.epochs.back().epoch;
  rec.checkpoints.push_back(snapshot(*model, Tag::LastEpoch, last, seed, digest));
  if (best) {
    rec.best_epoch = best_epoch_index(metrics) + 1;
    rec.checkpoints.push_back(std::move(*best));
  } else {
    rec.best_epoch = last;
  }
  return rec;
}

} // namespace dialprobe::models
