#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dialprobe::corpus {

using TokenId = std::int32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kSos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr std::size_t kReservedTokens = 4;
inline constexpr std::size_t kMaxContextTokens = 100;

class Vocab {
public:
  Vocab();

  // Builds a vocabulary from tokenized sentences. Ids are assigned by
  // descending frequency, ties broken lexicographically.
  static Vocab build(const std::vector<const std::vector<std::string>*>& sentences);

  TokenId id(std::string_view token) const;  // kUnk when unknown
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::int64_t frequency(std::string_view token) const;  // 0 when unknown
  std::int64_t frequency(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::vector<TokenId> encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const std::vector<TokenId>& ids) const;
  // Digest over the ordered token list; models record it so probes can
  // detect a checkpoint trained on a different vocabulary.
  std::uint64_t digest() const;

private:
  std::unordered_map<std::string, TokenId> index_;
  std::vector<std::string> tokens_;
  std::vector<std::int64_t> freq_;
};

struct SlotValue {
  std::string topic;
  std::string slot;
  std::string value;
  auto operator<=>(const SlotValue&) const = default;
};

struct DialogueAct {
  std::string name;
  std::vector<SlotValue> args;
  bool operator==(const DialogueAct&) const = default;
};

enum class Speaker { User, System };
enum class Split { Train, Valid, Test };
enum class Style { GoalOriented, ChitChat };

std::string_view to_string(Split s);
std::string_view to_string(Speaker s);
Split parse_split(std::string_view s);
// Hash-based 80/10/10 assignment used when a corpus file carries no split.
Split default_split(const std::string& id);

struct Turn {
  Speaker speaker = Speaker::User;
  std::vector<std::string> words;  // normalized surface tokens
  std::vector<TokenId> tokens;     // ids under the corpus vocab
  std::vector<SlotValue> user_info;
  std::vector<std::string> topics;  // sorted, unique
  std::optional<DialogueAct> act;
};

struct Dialogue {
  std::string id;
  Split split = Split::Train;
  std::vector<Turn> turns;
  std::vector<std::string> goal_topics;  // sorted, unique
  std::vector<std::string> persona_sentences;
  std::optional<std::vector<std::string>> persona;  // sorted keywords
};

struct Corpus {
  Style style = Style::GoalOriented;
  std::vector<Dialogue> dialogues;
  Vocab vocab;
};

struct TrainingExample {
  std::string dialogue_id;
  std::size_t dialogue_index = 0;
  std::size_t turn_index = 0;            // the System turn being predicted
  std::vector<TokenId> context;          // at most kMaxContextTokens
  std::vector<std::size_t> segments;     // per-turn lengths inside context
  std::vector<TokenId> target;           // ends with kEos
  std::vector<std::string> target_words; // reference text, no EOS
};

// Lowercases, separates punctuation into standalone tokens and splits on
// whitespace.
std::vector<std::string> tokenize(std::string_view text);
// Lowercase and collapse internal whitespace.
std::string normalize_value(std::string_view value);
// The fixed 179-word English stop-word list used for persona keywords.
const std::set<std::string>& default_stop_words();

Corpus parse_goal_oriented(std::string_view json_text);
Corpus parse_chitchat(std::string_view text,
                      const std::set<std::string>& stop_words = default_stop_words());
std::string serialize_goal_oriented(const Corpus& corpus);
std::string serialize_chitchat(const Corpus& corpus);
// Dispatches on extension: ".json" is goal-oriented, anything else chit-chat.
Corpus load_corpus(const std::string& path);

// Rebuilds the vocabulary from the Train split and re-encodes every turn.
void finalize(Corpus& corpus);

std::vector<TrainingExample> make_examples(const Corpus& corpus, Split split,
                                           std::size_t max_context = kMaxContextTokens);

// Structural equality used by round-trip tests (vocab compared by tokens).
bool same_structure(const Corpus& a, const Corpus& b);

// Histogram name -> key -> count.
using HistogramSet = std::map<std::string, std::map<std::string, long long>>;

struct SynthConfig {
  std::size_t n_dialogues = 100;
  std::size_t topics = 4;
  std::size_t slots_per_topic = 3;
  std::size_t values_per_slot = 4;
  std::size_t max_turns = 12;
  Style style = Style::GoalOriented;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
};

struct SyntheticCorpus {
  Corpus corpus;
  // Counts kept by the generator while it writes dialogues; an oracle for
  // analysis::info_distribution that does not look at the finished corpus.
  HistogramSet tallies;
};

SyntheticCorpus synthesize_corpus(std::uint64_t seed, const SynthConfig& config);

} // namespace dialprobe::corpus
