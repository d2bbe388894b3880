#include "dialprobe/textmetrics.hpp"

#include "dialprobe/errors.hpp"
#include "dialprobe/util.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

namespace dialprobe::textmetrics {

std::string_view to_string(Metric m) {
  switch (m) {
  case Metric::Bleu2: return "bleu2";
  case Metric::RougeF1: return "rouge_f1";
  case Metric::Meteor: return "meteor";
  }
  return "bleu2";
}

Metric parse_metric(std::string_view name) {
  if (name == "bleu2") return Metric::Bleu2;
  if (name == "rouge_f1") return Metric::RougeF1;
  if (name == "meteor") return Metric::Meteor;
  throw UsageError("unknown metric '" + std::string(name) + "' (expected bleu2, rouge_f1 or meteor)");
}

namespace {

void check_inputs(const std::vector<Sentence>& c, const std::vector<Sentence>& r) {
  if (c.empty()) throw EmptyCandidateSet("no candidates to score");
  if (c.size() != r.size())
    throw ShapeMismatch(std::to_string(c.size()) + " candidates vs " + std::to_string(r.size()) + " references");
}

Sentence lowered(const Sentence& s) {
  Sentence out;
  out.reserve(s.size());
  for (const auto& w : s) out.push_back(to_lower(w));
  return out;
}

std::map<std::string, long long> ngram_counts(const Sentence& s, std::size_t n) {
  std::map<std::string, long long> out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    std::string key = s[i];
    for (std::size_t k = 1; k < n; ++k) key += '\x1f' + s[i + k];
    ++out[key];
  }
  return out;
}

long long clipped_matches(const Sentence& c, const Sentence& r, std::size_t n) {
  auto cc = ngram_counts(c, n);
  auto rc = ngram_counts(r, n);
  long long m = 0;
  for (const auto& [g, k] : cc) {
    auto it = rc.find(g);
    if (it != rc.end()) m += std::min(k, it->second);
  }
  return m;
}

} // namespace

MetricScore bleu2(const std::vector<Sentence>& candidates, const std::vector<Sentence>& references) {
  check_inputs(candidates, references);
  MetricScore s;
  s.metric = Metric::Bleu2;
  s.pairs = candidates.size();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Sentence c = lowered(candidates[i]);
    const Sentence r = lowered(references[i]);
    s.match1 += clipped_matches(c, r, 1);
    s.match2 += clipped_matches(c, r, 2);
    s.total1 += static_cast<long long>(c.size());
    s.total2 += c.size() >= 2 ? static_cast<long long>(c.size() - 1) : 0;
    s.cand_len += static_cast<long long>(c.size());
    s.ref_len += static_cast<long long>(r.size());
  }
  if (s.total1 == 0 || s.total2 == 0 || s.match1 == 0 || s.match2 == 0) return s;
  const double p1 = static_cast<double>(s.match1) / static_cast<double>(s.total1);
  const double p2 = static_cast<double>(s.match2) / static_cast<double>(s.total2);
  const double bp = s.cand_len > s.ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(s.ref_len) / static_cast<double>(s.cand_len));
  s.value = bp * std::exp(0.5 * std::log(p1) + 0.5 * std::log(p2));
  return s;
}

MetricScore rouge_f1(const std::vector<Sentence>& candidates, const std::vector<Sentence>& references) {
  check_inputs(candidates, references);
  MetricScore s;
  s.metric = Metric::RougeF1;
  s.pairs = candidates.size();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Sentence c = lowered(candidates[i]);
    const Sentence r = lowered(references[i]);
    const double m = static_cast<double>(clipped_matches(c, r, 1));
    const double p = c.empty() ? 0.0 : m / static_cast<double>(c.size());
    const double rc = r.empty() ? 0.0 : m / static_cast<double>(r.size());
    s.pair_sum += p + rc > 0.0 ? 2.0 * p * rc / (p + rc) : 0.0;
  }
  s.value = s.pair_sum / static_cast<double>(s.pairs);
  return s;
}

namespace {

struct AlignSearch {
  const Sentence& c;
  const Sentence& r;
  std::vector<std::vector<std::size_t>> options;  // ref positions per cand position
  std::vector<std::size_t> suffix_cap;            // upper bound on matches from i on
  std::vector<char> used;
  std::size_t target = 0;
  std::size_t best_chunks = 0;
  std::size_t nodes = 0;
  std::size_t cap = 0;
  bool exhausted = false;

  // prev: ref position matched by cand i-1, or npos.
  void dfs(std::size_t i, std::size_t matched, std::size_t chunks, std::size_t prev) {
    if (exhausted) return;
    if (++nodes > cap) {
      exhausted = true;
      return;
    }
    if (chunks >= best_chunks) return;
    if (matched + suffix_cap[i] < target) return;
    if (i == c.size()) {
      if (matched == target) best_chunks = chunks;
      return;
    }
    // Extending the current chunk first finds low-chunk solutions early.
    const auto& opts = options[i];
    if (prev != SIZE_MAX && prev + 1 < r.size() && !used[prev + 1] &&
        std::find(opts.begin(), opts.end(), prev + 1) != opts.end()) {
      used[prev + 1] = 1;
      dfs(i + 1, matched + 1, chunks, prev + 1);
      used[prev + 1] = 0;
    }
    for (std::size_t j : opts) {
      if (used[j] || (prev != SIZE_MAX && j == prev + 1)) continue;
      used[j] = 1;
      dfs(i + 1, matched + 1, chunks + 1, j);
      used[j] = 0;
    }
    dfs(i + 1, matched, chunks, SIZE_MAX);
  }
};

Alignment greedy_alignment(const Sentence& c, const Sentence& r) {
  std::vector<char> used(r.size(), 0);
  Alignment a;
  std::size_t prev = SIZE_MAX;
  for (std::size_t i = 0; i < c.size(); ++i) {
    std::size_t pick = SIZE_MAX;
    if (prev != SIZE_MAX && prev + 1 < r.size() && !used[prev + 1] && r[prev + 1] == c[i]) pick = prev + 1;
    for (std::size_t j = 0; pick == SIZE_MAX && j < r.size(); ++j)
      if (!used[j] && r[j] == c[i]) pick = j;
    if (pick == SIZE_MAX) {
      prev = SIZE_MAX;
      continue;
    }
    used[pick] = 1;
    ++a.matches;
    if (prev == SIZE_MAX || pick != prev + 1) ++a.chunks;
    prev = pick;
  }
  return a;
}

} // namespace

Alignment meteor_align(const Sentence& candidate, const Sentence& reference, std::size_t node_cap) {
  const Sentence c = lowered(candidate);
  const Sentence r = lowered(reference);
  Alignment greedy = greedy_alignment(c, r);
  const std::size_t target = static_cast<std::size_t>(clipped_matches(c, r, 1));
  if (target == 0) return {};
  // Greedy attains the maximum match count; the search only lowers chunks.
  AlignSearch s{c, r, {}, {}, {}, target, greedy.chunks, 0, node_cap, false};
  s.options.resize(c.size());
  std::unordered_map<std::string, std::vector<std::size_t>> where;
  for (std::size_t j = 0; j < r.size(); ++j) where[r[j]].push_back(j);
  for (std::size_t i = 0; i < c.size(); ++i)
    if (auto it = where.find(c[i]); it != where.end()) s.options[i] = it->second;
  s.suffix_cap.assign(c.size() + 1, 0);
  for (std::size_t i = c.size(); i-- > 0;) s.suffix_cap[i] = s.suffix_cap[i + 1] + (s.options[i].empty() ? 0 : 1);
  s.used.assign(r.size(), 0);
  s.dfs(0, 0, 0, SIZE_MAX);
  return {target, s.best_chunks};
}

double meteor_sentence(const Sentence& candidate, const Sentence& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const Alignment a = meteor_align(candidate, reference);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(a.chunks) / m;
  return fmean * (1.0 - 0.5 * frag * frag * frag);
}

MetricScore meteor_exact(const std::vector<Sentence>& candidates, const std::vector<Sentence>& references) {
  check_inputs(candidates, references);
  MetricScore s;
  s.metric = Metric::Meteor;
  s.pairs = candidates.size();
  for (std::size_t i = 0; i < candidates.size(); ++i) s.pair_sum += meteor_sentence(candidates[i], references[i]);
  s.value = s.pair_sum / static_cast<double>(s.pairs);
  return s;
}

MetricScore score(Metric m, const std::vector<Sentence>& candidates, const std::vector<Sentence>& references) {
  switch (m) {
  case Metric::Bleu2: return bleu2(candidates, references);
  case Metric::RougeF1: return rouge_f1(candidates, references);
  case Metric::Meteor: return meteor_exact(candidates, references);
  }
  return bleu2(candidates, references);
}

std::string metric_csv(const std::vector<MetricRow>& rows) {
  std::string out = "model,seed,epoch,metric,value\n";
  for (const auto& r : rows)
    out += r.model + "," + std::to_string(r.seed) + "," + std::to_string(r.epoch) + "," +
           std::string(to_string(r.metric)) + "," + format_double(r.value) + "\n";
  return out;
}

} // namespace dialprobe::textmetrics
