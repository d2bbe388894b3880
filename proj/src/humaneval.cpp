#include "dialprobe/humaneval.hpp"

#include "dialprobe/errors.hpp"
#include "dialprobe/parallel.hpp"
#include "dialprobe/util.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <map>
#include <set>

namespace dialprobe::humaneval {

Choice parse_choice(std::string_view s) {
  if (s == "A") return Choice::A;
  if (s == "B") return Choice::B;
  if (s == "Tie") return Choice::Tie;
  throw BadChoice("choice '" + std::string(s) + "' (expected A, B or Tie)");
}

std::vector<AnnotationRecord> ingest_annotations(std::string_view csv) {
  const auto lines = split(csv, '\n');
  if (lines.empty() || trim(lines[0]) != "pair_id,pass_id,choice")
    throw SchemaError("annotation header must be pair_id,pass_id,choice");
  std::vector<AnnotationRecord> out;
  std::set<std::pair<std::string, int>> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string line = trim(lines[i]);
    if (line.empty()) continue;
    const auto f = split(line, ',');
    const std::string where = "line " + std::to_string(i + 1);
    if (f.size() != 3) throw SchemaError(where + ": expected 3 fields");
    AnnotationRecord r;
    r.pair_id = trim(f[0]);
    if (r.pair_id.empty()) throw SchemaError(where + ": empty pair_id");
    long long pass = 0;
    try {
      pass = parse_int(trim(f[1]));
    } catch (const std::exception&) {
      throw SchemaError(where + ": pass_id '" + f[1] + "' is not an integer");
    }
    if (pass < 1) throw SchemaError(where + ": pass_id must be positive");
    r.pass_id = static_cast<int>(pass);
    r.choice = parse_choice(trim(f[2]));
    if (!seen.emplace(r.pair_id, r.pass_id).second)
      throw DuplicateRecord(where + ": (" + r.pair_id + ", " + std::to_string(r.pass_id) + ") already seen");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<TieDistribution> bootstrap_tie_fraction(const std::vector<AnnotationRecord>& records,
                                                    const BootstrapOptions& options) {
  if (options.set_size == 0) throw UsageError("set size must be positive");
  std::map<int, std::vector<char>> passes;
  for (const auto& r : records) passes[r.pass_id].push_back(r.choice == Choice::Tie);
  std::vector<TieDistribution> out;
  for (const auto& [pass, ties] : passes) {
    if (ties.size() < options.set_size)
      throw InsufficientRecords("pass " + std::to_string(pass) + " has " + std::to_string(ties.size()) +
                                " records, sets need " + std::to_string(options.set_size));
    TieDistribution d;
    d.pass_id = pass;
    d.n_records = ties.size();
    d.set_size = options.set_size;
    std::size_t total = 0;
    for (char t : ties) total += static_cast<std::size_t>(t);
    d.tie_rate = static_cast<double>(total) / static_cast<double>(ties.size());
    d.ties.assign(options.n_sets, 0);
    const std::size_t block = std::max<std::size_t>(1, options.block);
    const std::size_t n_blocks = (options.n_sets + block - 1) / block;
    parallel_for(n_blocks, options.workers, [&](std::size_t b) {
      Rng rng(sub_seed(options.seed, "pass:" + std::to_string(pass) + ":block:" + std::to_string(b)));
      const std::size_t end = std::min(options.n_sets, (b + 1) * block);
      for (std::size_t s = b * block; s < end; ++s) {
        std::uint32_t k = 0;
        for (std::size_t j = 0; j < options.set_size; ++j) k += static_cast<std::uint32_t>(ties[rng.index(ties.size())]);
        d.ties[s] = k;
      }
    });
    out.push_back(std::move(d));
  }
  return out;
}

namespace {

Summary summarize_counts(const std::vector<double>& fractions, const std::vector<std::size_t>& bins, int pass_id) {
  if (fractions.empty()) throw InsufficientRecords("empty tie distribution");
  Summary s;
  s.pass_id = pass_id;
  s.samples = fractions.size();
  s.histogram.assign(101, 0);
  double sum = 0.0;
  std::size_t low = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    sum += fractions[i];
    if (fractions[i] <= 0.5) ++low;
    ++s.histogram[std::min<std::size_t>(100, bins[i])];
  }
  s.mean = sum / static_cast<double>(fractions.size());
  double var = 0.0;
  for (double f : fractions) var += (f - s.mean) * (f - s.mean);
  s.std = std::sqrt(var / static_cast<double>(fractions.size()));
  s.mass_at_most_half = static_cast<double>(low) / static_cast<double>(fractions.size());
  return s;
}

} // namespace

Summary summarize(const std::vector<double>& fractions, int pass_id) {
  std::vector<std::size_t> bins(fractions.size());
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] >= 0.0 && fractions[i] <= 1.0)) throw DegenerateData("tie fraction outside [0,1]");
    // The small offset keeps exact multiples of 0.01 in their own bin.
    bins[i] = static_cast<std::size_t>(std::floor(fractions[i] * 100.0 + 1e-9));
  }
  return summarize_counts(fractions, bins, pass_id);
}

Summary summarize(const TieDistribution& d) {
  std::vector<double> fractions(d.ties.size());
  std::vector<std::size_t> bins(d.ties.size());
  for (std::size_t i = 0; i < d.ties.size(); ++i) {
    fractions[i] = d.fraction(i);
    bins[i] = static_cast<std::size_t>(d.ties[i]) * 100 / d.set_size;
  }
  return summarize_counts(fractions, bins, d.pass_id);
}

std::string histogram_csv(const std::vector<Summary>& summaries) {
  std::string out = "pass_id,bin_low,count\n";
  char low[16];
  for (const auto& s : summaries)
    for (std::size_t b = 0; b < s.histogram.size(); ++b) {
      std::snprintf(low, sizeof low, "%.2f", static_cast<double>(b) / 100.0);
      out += std::to_string(s.pass_id) + "," + low + "," + std::to_string(s.histogram[b]) + "\n";
    }
  return out;
}

std::string summary_json(const std::vector<TieDistribution>& dists, const std::vector<Summary>& summaries,
                         const BootstrapOptions& options) {
  nlohmann::ordered_json passes = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    const auto& s = summaries[i];
    nlohmann::ordered_json p;
    p["pass_id"] = s.pass_id;
    if (i < dists.size()) {
      p["n_records"] = dists[i].n_records;
      p["tie_rate"] = dists[i].tie_rate;
    }
    p["mean"] = s.mean;
    p["std"] = s.std;
    p["mass_at_most_half"] = s.mass_at_most_half;
    p["samples"] = s.samples;
    passes.push_back(std::move(p));
  }
  nlohmann::ordered_json j;
  j["sampling"] = "with_replacement";
  j["n_sets"] = options.n_sets;
  j["set_size"] = options.set_size;
  j["seed"] = options.seed;
  j["passes"] = std::move(passes);
  return j.dump(2) + "\n";
}

} // namespace dialprobe::humaneval
