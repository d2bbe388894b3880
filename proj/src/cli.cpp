#include "dialprobe/cli.hpp"

#include "dialprobe/analysis.hpp"
#include "dialprobe/errors.hpp"
#include "dialprobe/humaneval.hpp"
#include "dialprobe/models.hpp"
#include "dialprobe/parallel.hpp"
#include "dialprobe/probeclf.hpp"
#include "dialprobe/probes.hpp"
#include "dialprobe/util.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <map>
#include <ostream>

namespace dialprobe::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

enum Cmd : unsigned {
  kSynth = 1,
  kTrain = 2,
  kProbe = 4,
  kReport = 8,
  kHuman = 16,
  kPca = 32,
  kDist = 64,
  kAll = 127,
};

struct Key {
  const char* key;
  const char* help;
  unsigned cmds;
  bool is_flag = false;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      {"seed", "global seed(s), comma separated", kAll},
      {"out", "output directory", kAll},
      {"scale", "model size preset: tiny|desk|paper", kAll},
      {"metric", "checkpoint selection metric: bleu2|rouge_f1|meteor", kAll},
      {"probe", "probe classifier: linear|mlp", kAll},
      {"workers", "worker threads", kAll},
      {"corpus", "corpus file (.json goal-oriented, otherwise chit-chat text)", kTrain | kProbe | kPca | kDist},
      {"runs", "directory written by `train`", kProbe | kPca},
      {"results", "probe report CSV", kReport},
      {"annotations", "annotation CSV (pair_id,pass_id,choice)", kHuman},
      {"models", "model kinds, comma separated, or all", kTrain},
      {"epochs", "training epochs (default: preset)", kTrain},
      {"epoch_snapshots", "keep a checkpoint after every epoch", kTrain, true},
      {"tasks", "probe tasks, comma separated (default: all for the corpus style)", kProbe},
      {"checkpoint", "checkpoints: all, or a list of untrained|last|best|epochs|epoch:N", kProbe | kPca},
      {"split", "split to project: train|valid|test", kPca},
      {"dialogues", "number of synthetic dialogues", kSynth},
      {"style", "synthetic corpus style: goal|chitchat", kSynth},
      {"topics", "synthetic topic count", kSynth},
      {"max_turns", "maximum turns per synthetic dialogue", kSynth},
      {"valid_fraction", "fraction of dialogues in Valid", kSynth},
      {"test_fraction", "fraction of dialogues in Test", kSynth},
      {"word_min_freq", "WordCont minimum Train frequency", kProbe},
      {"word_max_freq", "WordCont maximum Train frequency", kProbe},
      {"num_all_topics_prefix", "NumAllTopics over the context prefix only", kProbe, true},
      {"sets", "bootstrap sets per pass", kHuman},
      {"set_size", "records per bootstrap set", kHuman},
  };
  return k;
}

std::string flag_of(const std::string& key) {
  std::string f = "--" + key;
  std::replace(f.begin(), f.end(), '_', '-');
  return f;
}

std::size_t parse_count(const std::string& v, const std::string& what, std::size_t min) {
  long long n = 0;
  try {
    n = parse_int(v);
  } catch (const std::exception&) {
    throw UsageError(what + ": '" + v + "' is not an integer");
  }
  if (n < static_cast<long long>(min)) throw UsageError(what + ": must be at least " + std::to_string(min));
  return static_cast<std::size_t>(n);
}

bool parse_bool(const std::string& v, const std::string& what) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError(what + ": '" + v + "' is not a boolean");
}

void one_of(const std::string& v, std::initializer_list<const char*> allowed, const std::string& what) {
  for (const char* a : allowed)
    if (v == a) return;
  std::vector<std::string> names(allowed.begin(), allowed.end());
  throw UsageError(what + ": '" + v + "' is not one of " + join(names, ", "));
}

std::vector<std::string> list_of(const std::string& v) {
  std::vector<std::string> out;
  for (const auto& p : split(v, ',')) {
    std::string t = trim(p);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

bool valid_checkpoint_item(const std::string& item) {
  if (item == "untrained" || item == "last" || item == "best" || item == "epochs") return true;
  if (item.rfind("epoch:", 0) != 0) return false;
  const std::string n = item.substr(6);
  return !n.empty() && std::all_of(n.begin(), n.end(), ::isdigit);
}

} // namespace

void apply_setting(Settings& s, const std::string& key, const std::string& value, const std::string& what) {
  const std::string& v = value;
  if (key == "corpus") s.corpus = v;
  else if (key == "runs") s.runs = v;
  else if (key == "results") s.results = v;
  else if (key == "annotations") s.annotations = v;
  else if (key == "out") {
    if (v.empty()) throw UsageError(what + ": empty output directory");
    s.out = v;
  } else if (key == "scale") {
    one_of(v, {"desk", "paper", "tiny"}, what);
    s.scale = v;
  } else if (key == "metric") {
    try {
      textmetrics::parse_metric(v);
    } catch (const Error&) {
      throw UsageError(what + ": '" + v + "' is not one of bleu2, rouge_f1, meteor");
    }
    s.metric = v;
  } else if (key == "probe") {
    one_of(v, {"linear", "mlp"}, what);
    s.probe = v;
  } else if (key == "seed" || key == "seeds") {
    std::vector<std::uint64_t> seeds;
    for (const auto& p : list_of(v)) seeds.push_back(parse_count(p, what, 0));
    if (seeds.empty()) throw UsageError(what + ": at least one seed is required");
    s.seeds = seeds;
  } else if (key == "models") {
    auto m = list_of(v);
    if (m.empty()) throw UsageError(what + ": at least one model is required");
    for (const auto& k : m)
      if (k != "all") {
        try {
          models::parse_kind(k);
        } catch (const Error&) {
          throw UsageError(what + ": unknown model '" + k + "'");
        }
      }
    s.models = m;
  } else if (key == "tasks") {
    auto t = list_of(v);
    for (const auto& k : t) {
      try {
        probes::parse_task(k);
      } catch (const Error&) {
        throw UsageError(what + ": unknown task '" + k + "'");
      }
    }
    s.tasks = t;
  } else if (key == "checkpoint") {
    auto items = list_of(v);
    if (items.empty()) throw UsageError(what + ": empty checkpoint selection");
    for (const auto& i : items)
      if (i != "all" && !valid_checkpoint_item(i)) throw UsageError(what + ": unknown checkpoint '" + i + "'");
    s.checkpoint = v;
  } else if (key == "split") {
    one_of(v, {"train", "valid", "test"}, what);
    s.split = v;
  } else if (key == "style") {
    one_of(v, {"goal", "chitchat"}, what);
    s.style = v;
  } else if (key == "epochs") s.epochs = parse_count(v, what, 1);
  else if (key == "workers") s.workers = parse_count(v, what, 1);
  else if (key == "dialogues") s.dialogues = parse_count(v, what, 1);
  else if (key == "topics") s.topics = parse_count(v, what, 1);
  else if (key == "max_turns") s.max_turns = parse_count(v, what, 2);
  else if (key == "word_min_freq") s.word_min_freq = parse_count(v, what, 0);
  else if (key == "word_max_freq") s.word_max_freq = parse_count(v, what, 0);
  else if (key == "sets") s.sets = parse_count(v, what, 1);
  else if (key == "set_size") s.set_size = parse_count(v, what, 1);
  else if (key == "epoch_snapshots") s.epoch_snapshots = parse_bool(v, what);
  else if (key == "num_all_topics_prefix") s.num_all_topics_prefix = parse_bool(v, what);
  else if (key == "valid_fraction" || key == "test_fraction") {
    double d = 0.0;
    try {
      d = parse_double(v);
    } catch (const std::exception&) {
      throw UsageError(what + ": '" + v + "' is not a number");
    }
    if (!(d >= 0.0 && d < 1.0)) throw UsageError(what + ": must lie in [0, 1)");
    (key == "valid_fraction" ? s.valid_fraction : s.test_fraction) = d;
  } else {
    throw UsageError(what + ": unknown setting '" + key + "'");
  }
}

void apply_config_text(Settings& s, const std::string& json_text, const std::string& origin) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const std::exception& e) {
    throw UsageError(origin + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError(origin + ": configuration must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    const std::string what = origin + ": " + k;
    std::string text;
    auto scalar = [&](const ordered_json& x) -> std::string {
      if (x.is_string()) return x.get<std::string>();
      if (x.is_boolean()) return x.get<bool>() ? "true" : "false";
      if (x.is_number()) return x.dump();
      throw UsageError(what + ": unsupported value " + x.dump());
    };
    if (v.is_array()) {
      std::vector<std::string> parts;
      for (const auto& e : v) parts.push_back(scalar(e));
      text = join(parts, ",");
    } else {
      text = scalar(v);
    }
    apply_setting(s, k, text, what);
  }
}

std::string settings_json(const Settings& s) {
  ordered_json j;
  j["corpus"] = s.corpus;
  j["runs"] = s.runs;
  j["results"] = s.results;
  j["annotations"] = s.annotations;
  j["out"] = s.out;
  j["models"] = s.models;
  j["scale"] = s.scale;
  j["epochs"] = s.epochs ? ordered_json(*s.epochs) : ordered_json(nullptr);
  j["seeds"] = s.seeds;
  j["metric"] = s.metric;
  j["probe"] = s.probe;
  j["tasks"] = s.tasks;
  j["checkpoint"] = s.checkpoint;
  j["split"] = s.split;
  j["workers"] = s.workers;
  j["epoch_snapshots"] = s.epoch_snapshots;
  j["dialogues"] = s.dialogues;
  j["style"] = s.style;
  j["topics"] = s.topics;
  j["max_turns"] = s.max_turns;
  j["valid_fraction"] = s.valid_fraction;
  j["test_fraction"] = s.test_fraction;
  j["word_min_freq"] = s.word_min_freq;
  j["word_max_freq"] = s.word_max_freq;
  j["num_all_topics_prefix"] = s.num_all_topics_prefix;
  j["sets"] = s.sets;
  j["set_size"] = s.set_size;
  return j.dump(2);
}

namespace {

// ---------------------------------------------------------------------------
// Shared plumbing

std::string require_path(const std::string& path, const std::string& flag) {
  if (path.empty()) throw UsageError(flag + " is required");
  if (!fs::exists(path)) throw UsageError(flag + ": '" + path + "' does not exist");
  return path;
}

std::string out_path(const Settings& s, const std::string& name) { return (fs::path(s.out) / name).string(); }

void write_manifest(const Settings& s, const std::string& command, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
  ordered_json j;
  j["command"] = command;
  j["version"] = kVersion;
  j["config"] = ordered_json::parse(settings_json(s));
  j["seeds"] = s.seeds;
  ordered_json digests = ordered_json::object();
  for (const auto& p : inputs) digests[p] = hex64(fnv1a64(read_file(p)));
  j["inputs"] = std::move(digests);
  j["outputs"] = outputs;
  write_file_atomic(out_path(s, "manifest-" + command + ".json"), j.dump(2) + "\n");
}

std::string checkpoint_file(const std::string& tag) {
  std::string f = tag;
  std::replace(f.begin(), f.end(), ':', '-');
  return f + ".ckpt";
}

std::string tag_of_file(const fs::path& p) {
  std::string stem = p.stem().string();
  if (stem.rfind("epoch-", 0) == 0) stem[5] = ':';
  return stem;
}

bool checkpoint_selected(const std::string& tag, const std::string& selection) {
  for (const auto& item : list_of(selection)) {
    if (item == "all" || item == tag) return true;
    if (item == "epochs" && tag.rfind("epoch:", 0) == 0) return true;
  }
  return false;
}

struct FoundCheckpoint {
  std::string run;   // run directory name
  std::string path;
  std::string tag;
};

std::vector<FoundCheckpoint> find_checkpoints(const Settings& s) {
  const std::string root = require_path(s.runs, "--runs");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<FoundCheckpoint> out;
  for (const auto& d : dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(d))
      if (e.is_regular_file() && e.path().extension() == ".ckpt") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const std::string tag = tag_of_file(f);
      if (checkpoint_selected(tag, s.checkpoint)) out.push_back({d.filename().string(), f.string(), tag});
    }
  }
  if (out.empty())
    throw UsageError("--checkpoint: no checkpoint under '" + root + "' matches '" + s.checkpoint + "'");
  return out;
}

corpus::Split split_of(const std::string& name) { return corpus::parse_split(name); }

// ---------------------------------------------------------------------------
// Commands

int cmd_synth(const Settings& s, std::ostream& out) {
  corpus::SynthConfig sc;
  sc.n_dialogues = s.dialogues;
  sc.topics = s.topics;
  sc.max_turns = s.max_turns;
  sc.style = s.style == "goal" ? corpus::Style::GoalOriented : corpus::Style::ChitChat;
  sc.valid_fraction = s.valid_fraction;
  sc.test_fraction = s.test_fraction;
  const std::string file = s.style == "goal" ? "corpus.json" : "corpus.txt";
  write_manifest(s, "synth", {}, {file, "tallies.csv"});
  auto syn = corpus::synthesize_corpus(s.seeds.front(), sc);
  const std::string text = sc.style == corpus::Style::GoalOriented ? corpus::serialize_goal_oriented(syn.corpus)
                                                                   : corpus::serialize_chitchat(syn.corpus);
  write_file_atomic(out_path(s, file), text);
  write_file_atomic(out_path(s, "tallies.csv"), analysis::histograms_csv(syn.tallies));
  out << out_path(s, file) << "\n";
  return 0;
}

int cmd_train(const Settings& s, std::ostream& out) {
  const std::string path = require_path(s.corpus, "--corpus");
  const auto c = corpus::load_corpus(path);
  std::vector<models::Kind> kinds;
  for (const auto& m : s.models) {
    if (m == "all") {
      kinds = models::all_kinds();
      break;
    }
    kinds.push_back(models::parse_kind(m));
  }
  struct Job {
    models::Kind kind;
    std::uint64_t seed;
    std::string dir;
  };
  std::vector<Job> jobs;
  for (auto k : kinds)
    for (auto seed : s.seeds) jobs.push_back({k, seed, std::string(models::to_string(k)) + "-seed" + std::to_string(seed)});
  std::vector<std::string> outputs;
  for (const auto& j : jobs) outputs.push_back(j.dir);
  write_manifest(s, "train", {path}, outputs);

  models::TrainOptions opt;
  opt.metric = textmetrics::parse_metric(s.metric);
  opt.epoch_snapshots = s.epoch_snapshots;
  std::vector<models::RunRecord> records(jobs.size());
  parallel_for(jobs.size(), s.workers, [&](std::size_t i) {
    auto cfg = models::preset(jobs[i].kind, s.scale, c.vocab.size());
    if (s.epochs) cfg.epochs = *s.epochs;
    records[i] = models::train(c, cfg, jobs[i].seed, opt);
  });

  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& r = records[i];
    const fs::path dir = fs::path(s.out) / jobs[i].dir;
    for (const auto& ck : r.checkpoints) models::save_checkpoint(ck, (dir / checkpoint_file(ck.tag_string())).string());
    std::vector<textmetrics::MetricRow> rows;
    std::string epochs = "epoch,train_loss,valid_metric\n";
    for (const auto& e : r.epochs) {
      rows.push_back({std::string(models::to_string(jobs[i].kind)), jobs[i].seed, e.epoch, r.metric, e.valid_metric});
      epochs += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," + format_double(e.valid_metric) + "\n";
    }
    write_file_atomic((dir / "metrics.csv").string(), textmetrics::metric_csv(rows));
    write_file_atomic((dir / "epochs.csv").string(), epochs);
    ordered_json run;
    run["model"] = models::to_string(jobs[i].kind);
    run["seed"] = jobs[i].seed;
    run["metric"] = textmetrics::to_string(r.metric);
    run["epochs_run"] = r.epochs.size();
    run["best_epoch"] = r.best_epoch;
    run["parameter_count"] = r.parameter_count;
    write_file_atomic((dir / "run.json").string(), run.dump(2) + "\n");
    out << jobs[i].dir << ": " << r.epochs.size() << " epochs, best epoch " << r.best_epoch << "\n";
  }
  return 0;
}

std::vector<probes::Task> selected_tasks(const Settings& s, corpus::Style style) {
  if (s.tasks.empty()) return probes::tasks_for(style);
  std::vector<probes::Task> out;
  for (const auto& t : s.tasks) {
    const auto task = probes::parse_task(t);
    if (!probes::applicable(task, style)) throw NotApplicable(t + " does not apply to this corpus style");
    out.push_back(task);
  }
  return out;
}

int cmd_probe(const Settings& s, std::ostream& out) {
  const std::string path = require_path(s.corpus, "--corpus");
  const auto found = find_checkpoints(s);
  std::vector<std::string> inputs = {path};
  for (const auto& f : found) inputs.push_back(f.path);
  write_manifest(s, "probe", inputs, {"probe_report.csv"});

  const auto c = corpus::load_corpus(path);
  std::vector<models::Checkpoint> cks;
  for (const auto& f : found) cks.push_back(models::load_checkpoint(f.path));
  probeclf::EvalOptions opt;
  opt.probe.word_min_freq = s.word_min_freq;
  opt.probe.word_max_freq = s.word_max_freq;
  opt.probe.num_all_topics_prefix = s.num_all_topics_prefix;
  opt.workers = s.workers;
  const auto results =
      probeclf::evaluate(c, cks, selected_tasks(s, c.style), probeclf::parse_probe_kind(s.probe), opt);
  write_file_atomic(out_path(s, "probe_report.csv"), probeclf::report_csv(results));
  out << results.size() << " probe results for " << cks.size() << " checkpoints\n";
  return 0;
}

int cmd_report(const Settings& s, std::ostream& out) {
  const std::string path = require_path(s.results, "--results");
  write_manifest(s, "report", {path}, {"grading.json", "aggregate.csv", "evolution.csv"});
  const auto results = probeclf::parse_report_csv(read_file(path));
  const auto grading = analysis::difficulty_grade(results);
  const auto agg = analysis::aggregate_by_difficulty(results, grading);
  write_file_atomic(out_path(s, "grading.json"), analysis::grading_json(grading));
  write_file_atomic(out_path(s, "aggregate.csv"), analysis::aggregate_csv(agg));
  write_file_atomic(out_path(s, "evolution.csv"), analysis::evolution_csv(analysis::evolution_curves(results)));
  out << grading.tasks.size() << " tasks graded, " << agg.size() << " aggregate rows\n";
  return 0;
}

int cmd_humaneval(const Settings& s, std::ostream& out) {
  const std::string path = require_path(s.annotations, "--annotations");
  write_manifest(s, "humaneval", {path}, {"tie_histogram.csv", "tie_summary.json"});
  const auto records = humaneval::ingest_annotations(read_file(path));
  humaneval::BootstrapOptions opt;
  opt.n_sets = s.sets;
  opt.set_size = s.set_size;
  opt.seed = s.seeds.front();
  opt.workers = s.workers;
  const auto dists = humaneval::bootstrap_tie_fraction(records, opt);
  std::vector<humaneval::Summary> sums;
  for (const auto& d : dists) sums.push_back(humaneval::summarize(d));
  write_file_atomic(out_path(s, "tie_histogram.csv"), humaneval::histogram_csv(sums));
  write_file_atomic(out_path(s, "tie_summary.json"), humaneval::summary_json(dists, sums, opt));
  for (const auto& m : sums)
    out << "pass " << m.pass_id << ": mean tie fraction " << format_double(m.mean) << ", std "
        << format_double(m.std) << "\n";
  return 0;
}

int cmd_pca(const Settings& s, std::ostream& out) {
  const std::string path = require_path(s.corpus, "--corpus");
  const auto found = find_checkpoints(s);
  std::vector<std::string> inputs = {path}, outputs = {"pca_summary.csv"};
  auto name_of = [](const FoundCheckpoint& f) {
    std::string tag = f.tag;
    std::replace(tag.begin(), tag.end(), ':', '-');
    return "pca_" + f.run + "_" + tag + ".csv";
  };
  for (const auto& f : found) {
    inputs.push_back(f.path);
    outputs.push_back(name_of(f));
  }
  write_manifest(s, "pca", inputs, outputs);

  const auto c = corpus::load_corpus(path);
  const auto split = split_of(s.split);
  std::vector<std::string> csv(found.size());
  std::vector<analysis::PcaProjection> proj(found.size());
  parallel_for(found.size(), s.workers, [&](std::size_t i) {
    auto model = models::restore(models::load_checkpoint(found[i].path));
    const auto emb = probes::embed_split(c, *model, split);
    proj[i] = analysis::pca2(emb.rows);
    csv[i] = analysis::pca_csv(proj[i], emb.dialogue_ids, emb.turn_indices);
  });
  std::string summary = "run,checkpoint,explained_1,explained_2,x_min,x_max,y_min,y_max\n";
  for (std::size_t i = 0; i < found.size(); ++i) {
    write_file_atomic(out_path(s, name_of(found[i])), csv[i]);
    const auto& p = proj[i];
    summary += found[i].run + "," + found[i].tag + "," + format_double(p.explained[0]) + "," +
               format_double(p.explained[1]) + "," + format_double(p.min[0]) + "," + format_double(p.max[0]) + "," +
               format_double(p.min[1]) + "," + format_double(p.max[1]) + "\n";
  }
  write_file_atomic(out_path(s, "pca_summary.csv"), summary);
  out << found.size() << " projections\n";
  return 0;
}

int cmd_distributions(const Settings& s, std::ostream& out) {
  const std::string path = require_path(s.corpus, "--corpus");
  write_manifest(s, "distributions", {path}, {"distributions.csv"});
  const auto h = analysis::info_distribution(corpus::load_corpus(path));
  write_file_atomic(out_path(s, "distributions.csv"), analysis::histograms_csv(h));
  for (const auto& [name, counts] : h) {
    corpus::HistogramSet one = {{name, counts}};
    // Drop the histogram column for the per-histogram files.
    std::string text = "key,count\n";
    const std::string full = analysis::histograms_csv(one);
    for (const auto& line : split(full.substr(full.find('\n') + 1), '\n'))
      if (!line.empty()) text += line.substr(name.size() + 1) + "\n";
    write_file_atomic(out_path(s, "hist_" + name + ".csv"), text);
  }
  out << h.size() << " histograms\n";
  return 0;
}

struct Command {
  const char* name;
  const char* help;
  Cmd bit;
  int (*run)(const Settings&, std::ostream&);
};

const Command kCommands[] = {
    {"synth", "write a synthetic annotated corpus", kSynth, cmd_synth},
    {"train", "train models over (model x seed) and save checkpoints", kTrain, cmd_train},
    {"probe", "fit probe classifiers on checkpoint encodings", kProbe, cmd_probe},
    {"report", "difficulty grading, aggregate scores and evolution curves", kReport, cmd_report},
    {"humaneval", "bootstrap the tie fraction of pairwise annotations", kHuman, cmd_humaneval},
    {"pca", "project context encodings to two principal axes", kPca, cmd_pca},
    {"distributions", "information distribution histograms of a corpus", kDist, cmd_distributions},
};

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Probing toolkit for generative dialogue models", "dialprobe"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::map<std::string, std::string> raw;
  std::map<std::string, bool> flags;
  std::string config;
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& cmd : kCommands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", config, "JSON configuration file; flags override it");
    for (const auto& k : keys()) {
      if (!(k.cmds & cmd.bit)) continue;
      std::string flag = flag_of(k.key);
      if (std::string(k.key) == "seed") flag += ",--seeds";
      if (k.is_flag) sub->add_flag(flag, flags[k.key], k.help);
      else sub->add_option(flag, raw[k.key], k.help);
    }
    subs.emplace_back(sub, &cmd);
  }

  std::vector<const char*> argv = {"dialprobe"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  for (const auto& [sub, cmd] : subs) {
    if (!sub->parsed()) continue;
    try {
      Settings s;
      s.workers = default_workers();
      if (!config.empty()) apply_config_text(s, read_file(require_path(config, "--config")), config);
      for (const auto& k : keys()) {
        if (!(k.cmds & cmd->bit)) continue;
        const std::string flag = flag_of(k.key);
        if (sub->get_option(flag)->count() == 0) continue;
        apply_setting(s, k.key, k.is_flag ? (flags[k.key] ? "true" : "false") : raw[k.key], flag);
      }
      return cmd->run(s, out);
    } catch (const UsageError& e) {
      err << "error: " << e.what() << "\n";
      return 2;
    } catch (const models::DivergedLoss& e) {
      err << "error: " << e.what() << " (after " << e.partial().epochs.size() << " epochs)\n";
      return 1;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}

} // namespace dialprobe::cli
