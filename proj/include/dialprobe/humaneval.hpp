#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dialprobe::humaneval {

enum class Choice { A, B, Tie };
Choice parse_choice(std::string_view s);  // exactly "A", "B" or "Tie"

struct AnnotationRecord {
  std::string pair_id;
  int pass_id = 1;
  Choice choice = Choice::A;
};

// CSV with header `pair_id,pass_id,choice`. Throws DuplicateRecord on a
// repeated (pair_id, pass_id) and BadChoice on an unknown choice.
std::vector<AnnotationRecord> ingest_annotations(std::string_view csv);

struct BootstrapOptions {
  std::size_t n_sets = 50000;
  std::size_t set_size = 200;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  // Samples per RNG sub-stream; fixes the stream layout independently of
  // the worker count.
  std::size_t block = 1000;
};

struct TieDistribution {
  int pass_id = 1;
  std::size_t n_records = 0;
  double tie_rate = 0.0;  // of the pass itself
  std::size_t set_size = 0;
  std::vector<std::uint32_t> ties;  // ties per sampled set
  double fraction(std::size_t i) const { return static_cast<double>(ties[i]) / static_cast<double>(set_size); }
};

// Passes in ascending pass_id order; each draws n_sets sets of set_size
// records with replacement. Throws InsufficientRecords when a pass has fewer
// than set_size records.
std::vector<TieDistribution> bootstrap_tie_fraction(const std::vector<AnnotationRecord>& records,
                                                    const BootstrapOptions& options = {});

struct Summary {
  int pass_id = 1;
  double mean = 0.0;
  double std = 0.0;  // population
  double mass_at_most_half = 0.0;
  // 101 bins of width 0.01; bin b holds fractions in [b/100, (b+1)/100).
  std::vector<long long> histogram;
  std::size_t samples = 0;
};

Summary summarize(const std::vector<double>& fractions, int pass_id = 1);
Summary summarize(const TieDistribution& d);

// `pass_id,bin_low,count`, every bin of every pass.
std::string histogram_csv(const std::vector<Summary>& summaries);
std::string summary_json(const std::vector<TieDistribution>& dists, const std::vector<Summary>& summaries,
                         const BootstrapOptions& options);

} // namespace dialprobe::humaneval
