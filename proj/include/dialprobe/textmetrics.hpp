#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dialprobe::textmetrics {

using Sentence = std::vector<std::string>;

enum class Metric { Bleu2, RougeF1, Meteor };

std::string_view to_string(Metric m);  // "bleu2", "rouge_f1", "meteor"
Metric parse_metric(std::string_view name);

struct MetricScore {
  Metric metric = Metric::Bleu2;
  double value = 0.0;  // in [0,1]
  std::size_t pairs = 0;
  // BLEU: pooled clipped n-gram counts and lengths.
  long long match1 = 0, total1 = 0, match2 = 0, total2 = 0;
  long long cand_len = 0, ref_len = 0;
  // ROUGE / METEOR: sum of per-pair scores (value = sum / pairs).
  double pair_sum = 0.0;
};

// Corpus BLEU-2 with pooled clipped precisions and a brevity penalty.
MetricScore bleu2(const std::vector<Sentence>& candidates, const std::vector<Sentence>& references);
// ROUGE-1 F1 per pair, averaged.
MetricScore rouge_f1(const std::vector<Sentence>& candidates, const std::vector<Sentence>& references);
// METEOR with exact unigram matching only, averaged per pair.
MetricScore meteor_exact(const std::vector<Sentence>& candidates, const std::vector<Sentence>& references);
MetricScore score(Metric m, const std::vector<Sentence>& candidates, const std::vector<Sentence>& references);

struct Alignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};
// Maximizes matches, then minimizes chunks. Falls back to a greedy
// left-to-right alignment when the search exceeds node_cap expansions.
Alignment meteor_align(const Sentence& candidate, const Sentence& reference, std::size_t node_cap = 200000);
double meteor_sentence(const Sentence& candidate, const Sentence& reference);

struct MetricRow {
  std::string model;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  Metric metric = Metric::Bleu2;
  double value = 0.0;
};

// `model,seed,epoch,metric,value`
std::string metric_csv(const std::vector<MetricRow>& rows);

} // namespace dialprobe::textmetrics
