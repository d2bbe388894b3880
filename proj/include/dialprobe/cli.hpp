#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dialprobe::cli {

inline constexpr const char* kVersion = "dialprobe 0.1.0";

// Resolved configuration: defaults, then the --config file, then flags.
struct Settings {
  std::string corpus;
  std::string runs;
  std::string results;
  std::string annotations;
  std::string out = "out";
  std::vector<std::string> models = {"all"};
  std::string scale = "desk";
  std::optional<std::size_t> epochs;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string metric = "bleu2";
  std::string probe = "linear";
  std::vector<std::string> tasks;  // empty: every task of the corpus style
  std::string checkpoint = "all";
  std::string split = "valid";
  std::size_t workers = 1;
  bool epoch_snapshots = false;
  // synth
  std::size_t dialogues = 100;
  std::string style = "goal";
  std::size_t topics = 4;
  std::size_t max_turns = 12;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
  // probe labels
  std::size_t word_min_freq = 1000;
  std::size_t word_max_freq = 3000;
  bool num_all_topics_prefix = false;
  // humaneval
  std::size_t sets = 50000;
  std::size_t set_size = 200;
};

// Sets one setting from its textual form. key is the config-file name
// (snake_case); flags map onto the same keys. Throws UsageError naming `what`.
void apply_setting(Settings& s, const std::string& key, const std::string& value, const std::string& what);
// Applies every member of a JSON object.
void apply_config_text(Settings& s, const std::string& json_text, const std::string& origin);
std::string settings_json(const Settings& s);

// Entry point shared by the executable and the tests. Returns the process
// exit code: 0 on success, 2 on usage errors, 1 on any other error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace dialprobe::cli
