#include "dialprobe/corpus.hpp"

#include "dialprobe/util.hpp"

#include <algorithm>
#include <cmath>

namespace dialprobe::corpus {

namespace {

const std::vector<std::string> kTopicNames = {"hotel", "restaurant", "train", "taxi",
                                              "attraction", "hospital", "police", "bus"};
const std::vector<std::string> kSlotNames = {"area", "price", "stars", "day",  "people",
                                             "time", "food",  "name",  "parking", "internet"};
const std::vector<std::string> kOpeners = {"i need a", "i am looking for a", "find me a"};
const std::vector<std::string> kNouns = {
    "cars",   "dogs",   "cats",    "music",  "books",   "movies", "pizza",  "hiking",
    "tennis", "guitar", "paint",   "coffee", "tea",     "snow",   "beach",  "garden",
    "chess",  "boats",  "horses",  "opera",  "poetry",  "cheese", "apples", "trains",
    "soccer", "yoga",   "jazz",    "rock",   "science", "history", "cooking", "travel",
    "birds",  "fish",   "running", "dance",  "photos",  "games",  "stars",  "rain"};

std::string topic_name(std::size_t t) {
  return t < kTopicNames.size() ? kTopicNames[t] : "topic" + std::to_string(t);
}

std::string capitalized(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

void append(std::vector<std::string>& words, const std::string& phrase) {
  for (auto& w : split(phrase, ' '))
    if (!w.empty()) words.push_back(w);
}

void append_pairs(std::vector<std::string>& words, const std::vector<SlotValue>& svs) {
  for (std::size_t i = 0; i < svs.size(); ++i) {
    if (i) words.push_back("and");
    words.push_back(svs[i].slot);
    words.push_back(svs[i].value);
  }
}

struct TopicSpec {
  std::string name;
  std::vector<std::string> slots;  // sorted
};

std::vector<TopicSpec> make_topics(const SynthConfig& cfg) {
  std::vector<TopicSpec> topics;
  for (std::size_t t = 0; t < cfg.topics; ++t) {
    TopicSpec spec{topic_name(t), {}};
    for (std::size_t j = 0; j < cfg.slots_per_topic; ++j) {
      std::size_t k = t + j;
      spec.slots.push_back(cfg.slots_per_topic <= kSlotNames.size()
                               ? kSlotNames[k % kSlotNames.size()]
                               : "slot" + std::to_string(k));
    }
    std::sort(spec.slots.begin(), spec.slots.end());
    spec.slots.erase(std::unique(spec.slots.begin(), spec.slots.end()), spec.slots.end());
    topics.push_back(std::move(spec));
  }
  return topics;
}

std::string key(std::size_t n) { return std::to_string(n); }

void assign_splits(Corpus& corpus, const SynthConfig& cfg) {
  const std::size_t n = corpus.dialogues.size();
  std::size_t n_valid = static_cast<std::size_t>(std::llround(cfg.valid_fraction * n));
  std::size_t n_test = static_cast<std::size_t>(std::llround(cfg.test_fraction * n));
  if (cfg.valid_fraction > 0 && n >= 3) n_valid = std::max<std::size_t>(n_valid, 1);
  if (n_valid + n_test >= n) n_test = 0;
  if (n_valid >= n) n_valid = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Split s = Split::Train;
    if (i >= n - n_test) s = Split::Test;
    else if (i >= n - n_test - n_valid) s = Split::Valid;
    corpus.dialogues[i].split = s;
  }
}

Dialogue goal_dialogue(Rng& rng, const SynthConfig& cfg, const std::vector<TopicSpec>& topics,
                       std::size_t index, HistogramSet& tallies) {
  Dialogue d;
  char id[32];
  std::snprintf(id, sizeof id, "synth-%05zu", index);
  d.id = id;

  const std::size_t n_pairs = 1 + rng.index(std::max<std::size_t>(1, cfg.max_turns / 2));
  const std::size_t n_topics = 1 + rng.index(std::min({std::size_t{3}, topics.size(), n_pairs}));
  std::vector<std::size_t> order(topics.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  order.resize(n_topics);

  // Contiguous, non-empty blocks of pairs per topic.
  std::vector<std::size_t> cuts;
  {
    std::vector<std::size_t> candidates;
    for (std::size_t c = 1; c < n_pairs; ++c) candidates.push_back(c);
    rng.shuffle(candidates);
    cuts.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n_topics - 1));
    std::sort(cuts.begin(), cuts.end());
  }
  std::vector<std::size_t> pair_topic(n_pairs);
  for (std::size_t p = 0, block = 0; p < n_pairs; ++p) {
    while (block < cuts.size() && p >= cuts[block]) ++block;
    pair_topic[p] = order[block];
  }
  const std::size_t last_block_start = cuts.empty() ? 0 : cuts.back();
  const bool closing = n_pairs - last_block_start >= 2 && rng.bernoulli(0.3);

  const std::size_t n_turns = 2 * n_pairs;
  std::set<std::string> given_slots;  // slot names given in earlier user turns
  std::map<std::string, std::map<std::string, std::string>> constraints;
  std::set<std::string> goal;
  long long info_load = 0;

  for (std::size_t p = 0; p < n_pairs; ++p) {
    const TopicSpec& topic = topics[pair_topic[p]];
    goal.insert(topic.name);
    const bool is_closing = closing && p + 1 == n_pairs;

    Turn user;
    user.speaker = Speaker::User;
    user.topics = {topic.name};
    if (is_closing) {
      append(user.words, "thank you , that is all .");
    } else {
      std::size_t max_info = std::min<std::size_t>(3, topic.slots.size());
      std::size_t n_info = rng.bernoulli(0.15) ? 0 : 1 + rng.index(max_info);
      std::vector<std::string> slots = topic.slots;
      rng.shuffle(slots);
      slots.resize(n_info);
      std::sort(slots.begin(), slots.end());
      for (const auto& s : slots) {
        std::string value = s + std::to_string(rng.index(cfg.values_per_slot));
        user.user_info.push_back({topic.name, s, value});
      }
      if (user.user_info.empty()) {
        append(user.words, "can you help me with a " + topic.name + " ?");
      } else {
        append(user.words, kOpeners[rng.index(kOpeners.size())] + " " + topic.name + " with");
        append_pairs(user.words, user.user_info);
        user.words.push_back(".");
      }
    }
    ++tallies["info_per_user_turn"][key(user.user_info.size())];
    info_load += static_cast<long long>(user.user_info.size());

    std::size_t repeats = 0;
    for (const auto& sv : user.user_info) repeats += given_slots.count(sv.slot);
    for (const auto& sv : user.user_info) {
      given_slots.insert(sv.slot);
      constraints[topic.name][sv.slot] = sv.value;
    }

    Turn system;
    system.speaker = Speaker::System;
    system.topics = {topic.name};
    const auto& c = constraints[topic.name];
    std::vector<SlotValue> args;
    for (const auto& [slot, value] : c) args.push_back({topic.name, slot, value});
    if (is_closing) {
      append(system.words, "you are welcome , goodbye .");
    } else if (c.empty()) {
      append(system.words, "what " + topic.name + " are you looking for ?");
      system.act = DialogueAct{capitalized(topic.name) + "-Request", {}};
    } else if (c.size() < topic.slots.size()) {
      std::string missing;
      for (const auto& s : topic.slots)
        if (!c.count(s)) {
          missing = s;
          break;
        }
      append(system.words, "i found a " + topic.name + " with");
      append_pairs(system.words, args);
      append(system.words, ". what " + missing + " do you want ?");
      system.act = DialogueAct{capitalized(topic.name) + "-Inform", args};
    } else {
      append(system.words, "i booked the " + topic.name + " with");
      append_pairs(system.words, args);
      system.words.push_back(".");
      system.act = DialogueAct{capitalized(topic.name) + "-Book", args};
    }

    const std::size_t system_index = 2 * p + 1;
    ++tallies["repeats_per_context"][key(repeats)];
    ++tallies["utterance_location"][key(std::min<std::size_t>(4, 5 * system_index / n_turns))];
    ++tallies["response_length"][key(system.words.size())];

    d.turns.push_back(std::move(user));
    d.turns.push_back(std::move(system));
  }

  d.goal_topics.assign(goal.begin(), goal.end());
  for (const auto& t : d.goal_topics) ++tallies["topic_frequency"][t];
  ++tallies["topics_per_dialogue"][key(d.goal_topics.size())];
  ++tallies["multi_topic"][d.goal_topics.size() > 1 ? "multi" : "single"];
  ++tallies["info_load_per_dialogue"][key(static_cast<std::size_t>(info_load))];
  return d;
}

Dialogue chitchat_dialogue(Rng& rng, const SynthConfig& cfg, std::size_t index) {
  static const std::vector<std::string> kPersonaTemplates = {
      "i like {} .", "my favorite thing is {} .", "i have a lot of {} .", "i often think about {} ."};
  static const std::vector<std::string> kUserTemplates = {
      "do you like {} ?", "what do you think about {} ?", "i enjoy {} a lot ."};
  static const std::vector<std::string> kSystemTemplates = {
      "yes , i like {} .", "{} is great .", "i prefer {} ."};
  auto fill = [](const std::string& tpl, const std::string& word) {
    std::string out = tpl;
    out.replace(out.find("{}"), 2, word);
    return out;
  };

  Dialogue d;
  d.id = "chitchat-" + std::to_string(index);
  const std::size_t n_persona = 3 + rng.index(3);
  for (std::size_t i = 0; i < n_persona; ++i)
    d.persona_sentences.push_back(fill(kPersonaTemplates[rng.index(kPersonaTemplates.size())],
                                       kNouns[rng.index(kNouns.size())]));
  std::set<std::string> kw;
  for (const auto& s : d.persona_sentences)
    for (const auto& w : tokenize(s))
      if (std::isalnum(static_cast<unsigned char>(w[0])) && !default_stop_words().count(w))
        kw.insert(w);
  d.persona = std::vector<std::string>(kw.begin(), kw.end());

  const std::size_t n_pairs = 1 + rng.index(std::max<std::size_t>(1, cfg.max_turns / 2));
  for (std::size_t p = 0; p < n_pairs; ++p) {
    Turn user;
    user.speaker = Speaker::User;
    user.words = tokenize(fill(kUserTemplates[rng.index(kUserTemplates.size())],
                               kNouns[rng.index(kNouns.size())]));
    Turn system;
    system.speaker = Speaker::System;
    system.words = tokenize(fill(kSystemTemplates[rng.index(kSystemTemplates.size())],
                                 kNouns[rng.index(kNouns.size())]));
    d.turns.push_back(std::move(user));
    d.turns.push_back(std::move(system));
  }
  return d;
}

} // namespace

SyntheticCorpus synthesize_corpus(std::uint64_t seed, const SynthConfig& config) {
  SynthConfig cfg = config;
  cfg.n_dialogues = std::max<std::size_t>(1, cfg.n_dialogues);
  cfg.topics = std::max<std::size_t>(1, cfg.topics);
  cfg.slots_per_topic = std::max<std::size_t>(1, cfg.slots_per_topic);
  cfg.values_per_slot = std::max<std::size_t>(1, cfg.values_per_slot);
  cfg.max_turns = std::max<std::size_t>(1, cfg.max_turns);

  Rng rng(sub_seed(seed, "synth"));
  SyntheticCorpus out;
  out.corpus.style = cfg.style;
  if (cfg.style == Style::GoalOriented) {
    const auto topics = make_topics(cfg);
    for (std::size_t i = 0; i < cfg.n_dialogues; ++i)
      out.corpus.dialogues.push_back(goal_dialogue(rng, cfg, topics, i, out.tallies));
  } else {
    for (std::size_t i = 0; i < cfg.n_dialogues; ++i)
      out.corpus.dialogues.push_back(chitchat_dialogue(rng, cfg, i));
  }
  if (cfg.style == Style::GoalOriented) {
    assign_splits(out.corpus, cfg);
  } else {
    // Chit-chat files carry no split column; use the same rule the parser does.
    for (auto& d : out.corpus.dialogues) d.split = default_split(d.id);
  }
  finalize(out.corpus);
  return out;
}

} // namespace dialprobe::corpus
