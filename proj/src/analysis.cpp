#include "dialprobe/analysis.hpp"

#include "dialprobe/errors.hpp"
#include "dialprobe/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace dialprobe::analysis {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

std::vector<double> mul(const Matrix& c, const std::vector<double>& v) {
  std::vector<double> out(v.size(), 0.0);
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = dot(c[i], v);
  return out;
}

void remove_component(std::vector<double>& v, const std::vector<double>& axis) {
  const double p = dot(v, axis);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * axis[i];
}

void orient(std::vector<double>& v) {
  for (double x : v)
    if (std::abs(x) > 1e-12) {
      if (x < 0)
        for (double& y : v) y = -y;
      return;
    }
}

// Returns a unit vector; zero when the matrix annihilates everything
// orthogonal to `against`.
std::vector<double> power_iteration(const Matrix& c, const std::vector<double>* against, double scale,
                                    const PcaOptions& opt) {
  const std::size_t d = c.size();
  Rng rng(sub_seed(0x9ca, against ? "axis2" : "axis1"));
  std::vector<double> v(d);
  for (auto& x : v) x = rng.normal();
  if (against) remove_component(v, *against);
  double n = norm(v);
  for (auto& x : v) x /= n;
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    auto w = mul(c, v);
    if (against) remove_component(w, *against);
    n = norm(w);
    if (n <= 1e-12 * scale) return std::vector<double>(d, 0.0);
    for (auto& x : w) x /= n;
    double delta = 0.0;
    for (std::size_t i = 0; i < d; ++i) delta = std::max(delta, std::abs(w[i] - v[i]));
    v = std::move(w);
    if (delta < opt.tolerance) break;
  }
  return v;
}

} // namespace

PcaProjection pca2(const Matrix& x, const PcaOptions& options) {
  if (x.size() < 3) throw DegenerateData("PCA needs at least 3 embeddings");
  const std::size_t d = x[0].size();
  if (d < 2) throw DegenerateData("PCA needs embeddings at least 2 wide");
  for (const auto& r : x)
    if (r.size() != d) throw DegenerateData("embeddings differ in width");
  const double n = static_cast<double>(x.size());

  PcaProjection p;
  p.mean.assign(d, 0.0);
  for (const auto& r : x)
    for (std::size_t j = 0; j < d; ++j) p.mean[j] += r[j];
  for (auto& m : p.mean) m /= n;

  Matrix cov(d, std::vector<double>(d, 0.0));
  std::vector<double> centered(d);
  for (const auto& r : x) {
    for (std::size_t j = 0; j < d; ++j) centered[j] = r[j] - p.mean[j];
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) cov[i][j] += centered[i] * centered[j];
  }
  double total = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      cov[i][j] /= n - 1.0;
      cov[j][i] = cov[i][j];
    }
  for (std::size_t i = 0; i < d; ++i) total += cov[i][i];
  if (!(total > 0.0)) throw DegenerateData("embeddings have zero variance");

  p.axes[0] = power_iteration(cov, nullptr, total, options);
  orient(p.axes[0]);
  // Hotelling deflation; the projection in power_iteration keeps the second
  // axis orthogonal despite rounding.
  Matrix deflated = cov;
  const double l1 = dot(p.axes[0], mul(cov, p.axes[0]));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) deflated[i][j] -= l1 * p.axes[0][i] * p.axes[0][j];
  p.axes[1] = power_iteration(deflated, &p.axes[0], total, options);
  if (norm(p.axes[1]) == 0.0) {
    // Rank one: any unit vector orthogonal to the first axis.
    for (std::size_t k = 0; k < d; ++k) {
      std::vector<double> e(d, 0.0);
      e[k] = 1.0;
      remove_component(e, p.axes[0]);
      const double m = norm(e);
      if (m > 1e-6) {
        for (auto& v : e) v /= m;
        p.axes[1] = e;
        break;
      }
    }
  }
  remove_component(p.axes[1], p.axes[0]);
  const double m = norm(p.axes[1]);
  for (auto& v : p.axes[1]) v /= m;
  orient(p.axes[1]);

  for (int a = 0; a < 2; ++a) {
    p.eigenvalues[a] = std::max(0.0, dot(p.axes[a], mul(cov, p.axes[a])));
    p.explained[a] = std::min(1.0, p.eigenvalues[a] / total);
  }
  p.coords.reserve(x.size());
  for (const auto& r : x) {
    std::array<double, 2> c{};
    for (int a = 0; a < 2; ++a)
      for (std::size_t j = 0; j < d; ++j) c[a] += (r[j] - p.mean[j]) * p.axes[a][j];
    p.coords.push_back(c);
  }
  for (int a = 0; a < 2; ++a) {
    p.min[a] = p.max[a] = p.coords[0][a];
    for (const auto& c : p.coords) {
      p.min[a] = std::min(p.min[a], c[a]);
      p.max[a] = std::max(p.max[a], c[a]);
    }
  }
  return p;
}

std::string pca_csv(const PcaProjection& p, const std::vector<std::string>& ids, const std::vector<std::size_t>& turns) {
  if (ids.size() != p.coords.size() || turns.size() != p.coords.size())
    throw ShapeMismatch("PCA rows and example ids differ in count");
  std::string out = "dialogue_id,turn_index,x,y\n";
  for (std::size_t i = 0; i < p.coords.size(); ++i)
    out += ids[i] + "," + std::to_string(turns[i]) + "," + format_double(p.coords[i][0]) + "," +
           format_double(p.coords[i][1]) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Grade g) {
  switch (g) {
  case Grade::Easy: return "Easy";
  case Grade::Medium: return "Medium";
  case Grade::Hard: return "Hard";
  }
  return "Hard";
}

Grade grade_of(double avg) {
  if (avg > 0.50) return Grade::Easy;
  if (avg > 0.25) return Grade::Medium;
  return Grade::Hard;
}

const std::vector<std::string>& grading_models() {
  static const std::vector<std::string> m = {"bilstm_attn", "hred", "seq2seq", "seq2seq_attn"};
  return m;
}

const TaskGrade* DifficultyGrading::find(const std::string& task) const {
  for (const auto& t : tasks)
    if (t.task == task) return &t;
  return nullptr;
}

namespace {

// (model, task) -> F1 averaged over seeds, for one checkpoint tag.
std::map<std::pair<std::string, std::string>, double> seed_means(const std::vector<probeclf::ProbeResult>& results,
                                                                 const std::string& checkpoint) {
  std::map<std::pair<std::string, std::string>, std::pair<double, std::size_t>> acc;
  for (const auto& r : results) {
    if (r.checkpoint != checkpoint) continue;
    auto& a = acc[{r.model, r.task}];
    a.first += r.f1;
    ++a.second;
  }
  std::map<std::pair<std::string, std::string>, double> out;
  for (const auto& [k, a] : acc) out[k] = a.first / static_cast<double>(a.second);
  return out;
}

} // namespace

DifficultyGrading difficulty_grade(const std::vector<probeclf::ProbeResult>& results) {
  const auto means = seed_means(results, "untrained");
  std::set<std::string> tasks;
  for (const auto& [k, v] : means) tasks.insert(k.second);
  DifficultyGrading g;
  for (const auto& task : tasks) {
    double sum = 0.0;
    for (const auto& m : grading_models()) {
      auto it = means.find({m, task});
      if (it == means.end()) throw MissingResult("no untrained result for " + m + " on " + task);
      sum += it->second;
    }
    const double avg = sum / static_cast<double>(grading_models().size());
    g.tasks.push_back({task, grade_of(avg), avg});
  }
  return g;
}

std::vector<GradeAggregate> aggregate_by_difficulty(const std::vector<probeclf::ProbeResult>& results,
                                                    const DifficultyGrading& grading, const std::string& checkpoint) {
  const auto means = seed_means(results, checkpoint);
  std::set<Grade> graded;
  for (const auto& t : grading.tasks) graded.insert(t.grade);
  std::map<std::string, std::map<Grade, std::vector<double>>> by_model;
  for (const auto& [k, v] : means) {
    const TaskGrade* tg = grading.find(k.second);
    if (!tg) throw MissingResult("task " + k.second + " has no difficulty grade");
    by_model[k.first][tg->grade].push_back(v);
  }
  std::vector<GradeAggregate> out;
  for (auto& [model, grades] : by_model)
    for (Grade g : graded) {
      auto it = grades.find(g);
      if (it == grades.end())
        throw EmptyGrade(std::string(to_string(g)) + " has no " + checkpoint + " results for " + model);
      const auto& v = it->second;
      GradeAggregate a;
      a.model = model;
      a.grade = g;
      a.n_tasks = v.size();
      for (double f : v) a.mean += f;
      a.mean /= static_cast<double>(v.size());
      if (v.size() > 1) {
        double ss = 0.0;
        for (double f : v) ss += (f - a.mean) * (f - a.mean);
        a.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
      }
      out.push_back(a);
    }
  return out;
}

std::string grading_json(const DifficultyGrading& grading) {
  nlohmann::ordered_json tasks = nlohmann::ordered_json::object();
  for (const auto& t : grading.tasks)
    tasks[t.task] = {{"grade", std::string(to_string(t.grade))}, {"avg_untrained", t.avg_untrained}};
  nlohmann::ordered_json j;
  j["grading_models"] = grading_models();
  j["tasks"] = std::move(tasks);
  return j.dump(2) + "\n";
}

std::string aggregate_csv(const std::vector<GradeAggregate>& rows) {
  std::string out = "model,grade,mean,std,n_tasks\n";
  for (const auto& r : rows)
    out += r.model + "," + std::string(to_string(r.grade)) + "," + format_double(r.mean) + "," +
           format_double(r.std) + "," + std::to_string(r.n_tasks) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

corpus::HistogramSet info_distribution(const corpus::Corpus& c) {
  using corpus::Speaker;
  corpus::HistogramSet h;
  auto key = [](std::size_t n) { return std::to_string(n); };
  for (const auto& d : c.dialogues) {
    std::set<std::string> given;
    std::size_t last_repeats = 0, load = 0;
    for (std::size_t k = 0; k < d.turns.size(); ++k) {
      const auto& t = d.turns[k];
      if (t.speaker == Speaker::User) {
        last_repeats = 0;
        for (const auto& sv : t.user_info) last_repeats += given.count(sv.slot);
        for (const auto& sv : t.user_info) given.insert(sv.slot);
        load += t.user_info.size();
        ++h["info_per_user_turn"][key(t.user_info.size())];
      } else {
        ++h["repeats_per_context"][key(last_repeats)];
        ++h["utterance_location"][key(std::min<std::size_t>(4, 5 * k / d.turns.size()))];
        ++h["response_length"][key(t.words.size())];
      }
    }
    for (const auto& topic : d.goal_topics) ++h["topic_frequency"][topic];
    ++h["topics_per_dialogue"][key(d.goal_topics.size())];
    ++h["multi_topic"][d.goal_topics.size() > 1 ? "multi" : "single"];
    ++h["info_load_per_dialogue"][key(load)];
  }
  return h;
}

std::string histograms_csv(const corpus::HistogramSet& h) {
  std::string out = "histogram,key,count\n";
  for (const auto& [name, counts] : h) {
    std::vector<std::pair<std::string, long long>> rows(counts.begin(), counts.end());
    // Numeric keys in numeric order.
    auto numeric = [](const std::string& s) { return !s.empty() && std::all_of(s.begin(), s.end(), ::isdigit); };
    std::stable_sort(rows.begin(), rows.end(), [&](const auto& a, const auto& b) {
      if (numeric(a.first) && numeric(b.first)) return std::stoll(a.first) < std::stoll(b.first);
      return false;
    });
    for (const auto& [k, n] : rows) out += name + "," + k + "," + std::to_string(n) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

std::map<EvolutionKey, std::vector<EvolutionPoint>> evolution_curves(const std::vector<probeclf::ProbeResult>& results) {
  std::map<EvolutionKey, std::vector<EvolutionPoint>> out;
  for (const auto& r : results) {
    std::size_t epoch = 0;
    if (r.checkpoint.rfind("epoch:", 0) == 0) {
      const long long e = parse_int(r.checkpoint.substr(6));
      if (e < 0) throw SchemaError("negative epoch in checkpoint tag " + r.checkpoint);
      epoch = static_cast<std::size_t>(e);
    } else if (r.checkpoint != "untrained") {
      continue;
    }
    out[{r.model, r.seed, r.task}].push_back({epoch, r.f1});
  }
  for (auto& [k, s] : out)
    std::stable_sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.epoch < b.epoch; });
  return out;
}

std::string evolution_csv(const std::map<EvolutionKey, std::vector<EvolutionPoint>>& curves) {
  std::string out = "model,seed,task,epoch,f1\n";
  for (const auto& [k, s] : curves)
    for (const auto& p : s)
      out += k.model + "," + std::to_string(k.seed) + "," + k.task + "," + std::to_string(p.epoch) + "," +
             format_double(p.f1) + "\n";
  return out;
}

} // namespace dialprobe::analysis
