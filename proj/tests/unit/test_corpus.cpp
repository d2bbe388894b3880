#include <doctest.h>

#include "dialprobe/corpus.hpp"
#include "dialprobe/errors.hpp"
#include "dialprobe/util.hpp"

#include <algorithm>

using namespace dialprobe;
using namespace dialprobe::corpus;

namespace {

const char* kOneDialogue = R"({"dialogues":[{"id":"d1","goal_topics":["hotel"],"turns":[
  {"speaker":"user","text":"I want a CHEAP hotel.","info":[{"topic":"hotel","slot":"price","value":"Cheap"}],"topics":["hotel"]},
  {"speaker":"system","text":"Sure, which area?","topics":["hotel"],"act":{"name":"Hotel-Request","args":[]}}]}]})";

std::string long_dialogue_json(std::vector<std::size_t> user_lens) {
  std::string turns;
  for (std::size_t p = 0; p < user_lens.size(); ++p) {
    std::string text;
    for (std::size_t i = 0; i < user_lens[p]; ++i) text += "w" + std::to_string(p * 1000 + i) + " ";
    if (p) turns += ",";
    turns += R"({"speaker":"user","text":")" + text + R"("},{"speaker":"system","text":"ok"})";
  }
  return R"({"dialogues":[{"id":"x","goal_topics":[],"split":"train","turns":[)" + turns + "]}]}";
}

std::vector<TokenId> history(const Corpus& c, std::size_t upto) {
  std::vector<TokenId> out;
  for (std::size_t t = 0; t < upto; ++t)
    out.insert(out.end(), c.dialogues[0].turns[t].tokens.begin(), c.dialogues[0].turns[t].tokens.end());
  return out;
}

} // namespace

TEST_CASE("goal-oriented parse keeps user info") {
  Corpus c = parse_goal_oriented(kOneDialogue);
  REQUIRE(c.dialogues.size() == 1);
  const Turn& t0 = c.dialogues[0].turns[0];
  REQUIRE(t0.user_info.size() == 1);
  CHECK(t0.user_info[0] == SlotValue{"hotel", "price", "cheap"});
  CHECK(t0.words == std::vector<std::string>{"i", "want", "a", "cheap", "hotel", "."});
  CHECK(c.dialogues[0].turns[1].act->name == "Hotel-Request");
  CHECK_FALSE(c.dialogues[0].persona.has_value());
}

TEST_CASE("schema errors") {
  SUBCASE("system turn with user info names the turn") {
    std::string bad = kOneDialogue;
    bad.replace(bad.find(R"("topics":["hotel"],"act")"), 0,
                R"("info":[{"topic":"hotel","slot":"area","value":"north"}],)");
    try {
      parse_goal_oriented(bad);
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find("$.dialogues[0].turns[1]") != std::string::npos);
    }
  }
  SUBCASE("missing field") {
    CHECK_THROWS_AS(parse_goal_oriented(R"({"dialogues":[{"id":"a","turns":[]}]})"), SchemaError);
  }
  SUBCASE("wrong type") {
    CHECK_THROWS_AS(parse_goal_oriented(R"({"dialogues":[{"id":3,"goal_topics":[],"turns":[]}]})"), SchemaError);
  }
  SUBCASE("goal topics must match turn topics") {
    std::string bad = kOneDialogue;
    bad.replace(bad.find(R"("goal_topics":["hotel"])"), 22, R"("goal_topics":["taxi"])");
    CHECK_THROWS_AS(parse_goal_oriented(bad), SchemaError);
  }
  SUBCASE("empty corpus") {
    CHECK_THROWS_AS(parse_goal_oriented(R"({"dialogues":[]})"), EmptyCorpus);
    CHECK_THROWS_AS(parse_chitchat(""), EmptyCorpus);
    CHECK_THROWS_AS(parse_chitchat("\n\n"), EmptyCorpus);
  }
}

TEST_CASE("persona keywords drop stop words") {
  const std::string text = "your persona: i like red cars .\n1 hi there\thello\n";
  Corpus c = parse_chitchat(text, {"i", "like"});
  REQUIRE(c.dialogues.size() == 1);
  CHECK(*c.dialogues[0].persona == std::vector<std::string>{"cars", "red"});

  Corpus d = parse_chitchat(text);
  CHECK(*d.dialogues[0].persona == std::vector<std::string>{"cars", "like", "red"});
}

TEST_CASE("chit-chat dialogues split on blank lines and restarted numbering") {
  const std::string text =
      "1 your persona: i love dogs .\n2 hi\thello\n3 how are you\tfine\n"
      "1 your persona: i play chess .\n2 yo\they\n\n"
      "your persona: i swim .\n1 a\tb\n";
  Corpus c = parse_chitchat(text);
  REQUIRE(c.dialogues.size() == 3);
  CHECK(c.dialogues[0].turns.size() == 4);
  CHECK(c.dialogues[1].turns.size() == 2);
  CHECK(*c.dialogues[2].persona == std::vector<std::string>{"swim"});
  CHECK(c.dialogues[0].turns[1].speaker == Speaker::System);
}

TEST_CASE("make_examples") {
  SUBCASE("one example per system turn") {
    Corpus c = parse_goal_oriented(long_dialogue_json({2, 2, 2}));
    auto ex = make_examples(c, Split::Train);
    CHECK(ex.size() == 3);
    for (const auto& e : ex) CHECK(e.target.back() == kEos);
  }
  SUBCASE("a 140-token context keeps tokens 41..140") {
    Corpus c = parse_goal_oriented(long_dialogue_json({70, 69}));
    auto ex = make_examples(c, Split::Train);
    REQUIRE(ex.size() == 2);
    auto full = history(c, 3);
    REQUIRE(full.size() == 140);
    CHECK(ex[1].context == std::vector<TokenId>(full.begin() + 40, full.end()));
    CHECK(ex[1].segments == std::vector<std::size_t>{30, 1, 69});
  }
  SUBCASE("two-turn dialogue uses the user turn as context") {
    Corpus c = parse_goal_oriented(kOneDialogue);
    c.dialogues[0].split = Split::Train;
    auto ex = make_examples(c, Split::Train);
    REQUIRE(ex.size() == 1);
    CHECK(ex[0].context == c.dialogues[0].turns[0].tokens);
    CHECK(ex[0].segments == std::vector<std::size_t>{c.dialogues[0].turns[0].tokens.size()});
  }
}

TEST_CASE("vocab") {
  Corpus c = parse_goal_oriented(long_dialogue_json({5, 5, 5, 5}));
  const Vocab& v = c.vocab;
  CHECK(v.token(kPad) == "<pad>");
  CHECK(v.id("never-seen") == kUnk);
  for (std::size_t i = kReservedTokens; i < v.size(); ++i) {
    CHECK(v.id(v.token(static_cast<TokenId>(i))) == static_cast<TokenId>(i));
    CHECK(v.frequency(static_cast<TokenId>(i)) >= 1);
  }
  CHECK(v.token(static_cast<TokenId>(kReservedTokens)) == "ok");  // most frequent
}

TEST_CASE("vocabulary comes from the train split only") {
  std::string text = R"({"dialogues":[
    {"id":"a","split":"train","goal_topics":[],"turns":[{"speaker":"user","text":"alpha"},{"speaker":"system","text":"beta"}]},
    {"id":"b","split":"valid","goal_topics":[],"turns":[{"speaker":"user","text":"gamma"},{"speaker":"system","text":"beta"}]}]})";
  Corpus c = parse_goal_oriented(text);
  CHECK_FALSE(c.vocab.contains("gamma"));
  CHECK(c.dialogues[1].turns[0].tokens == std::vector<TokenId>{kUnk});
}

TEST_CASE("synthetic corpora") {
  SynthConfig cfg;
  cfg.n_dialogues = 5;
  SUBCASE("deterministic in seed") {
    auto a = serialize_goal_oriented(synthesize_corpus(7, cfg).corpus);
    auto b = serialize_goal_oriented(synthesize_corpus(7, cfg).corpus);
    CHECK(a == b);
    CHECK(a != serialize_goal_oriented(synthesize_corpus(8, cfg).corpus));
  }
  SUBCASE("topics restricted to the configured count") {
    cfg.n_dialogues = 60;
    cfg.topics = 2;
    auto s = synthesize_corpus(1, cfg);
    for (const auto& d : s.corpus.dialogues)
      for (const auto& t : d.goal_topics) CHECK((t == "hotel" || t == "restaurant"));
  }
  SUBCASE("annotations can be re-derived from the text") {
    cfg.n_dialogues = 200;
    auto s = synthesize_corpus(3, cfg);
    for (const auto& d : s.corpus.dialogues) {
      std::set<std::string> seen;
      for (const auto& t : d.turns) {
        seen.insert(t.topics.begin(), t.topics.end());
        REQUIRE(t.topics.size() == 1);
        if (t.act || !t.user_info.empty())
          CHECK(std::find(t.words.begin(), t.words.end(), t.topics[0]) != t.words.end());
        for (const auto& sv : t.user_info) {
          const std::vector<std::string> pair = {sv.slot, sv.value};
          CHECK(std::search(t.words.begin(), t.words.end(), pair.begin(), pair.end()) != t.words.end());
        }
        if (t.act)
          for (const auto& sv : t.act->args) {
            const std::vector<std::string> pair = {sv.slot, sv.value};
            CHECK(std::search(t.words.begin(), t.words.end(), pair.begin(), pair.end()) != t.words.end());
          }
      }
      CHECK(std::vector<std::string>(seen.begin(), seen.end()) == d.goal_topics);
    }
  }
  SUBCASE("splits are disjoint and all present") {
    cfg.n_dialogues = 50;
    auto s = synthesize_corpus(2, cfg);
    std::map<Split, int> n;
    for (const auto& d : s.corpus.dialogues) ++n[d.split];
    CHECK(n[Split::Train] + n[Split::Valid] + n[Split::Test] == 50);
    CHECK(n[Split::Valid] == 5);
    CHECK(n[Split::Test] == 5);
  }
}

TEST_CASE("round trips") {
  SynthConfig cfg;
  cfg.n_dialogues = 40;
  SUBCASE("goal-oriented") {
    Corpus c = synthesize_corpus(4, cfg).corpus;
    Corpus back = parse_goal_oriented(serialize_goal_oriented(c));
    CHECK(same_structure(c, back));
    CHECK(serialize_goal_oriented(back) == serialize_goal_oriented(c));
  }
  SUBCASE("chit-chat") {
    cfg.style = Style::ChitChat;
    Corpus c = synthesize_corpus(4, cfg).corpus;
    Corpus back = parse_chitchat(serialize_chitchat(c));
    CHECK(same_structure(c, back));
  }
}

TEST_CASE("every example is bounded and terminated") {
  SynthConfig cfg;
  cfg.n_dialogues = 100;
  cfg.max_turns = 40;
  Corpus c = synthesize_corpus(12, cfg).corpus;
  std::size_t system_turns = 0;
  for (const auto& d : c.dialogues)
    if (d.split == Split::Train)
      for (const auto& t : d.turns) system_turns += t.speaker == Speaker::System;
  auto ex = make_examples(c, Split::Train);
  CHECK(ex.size() == system_turns);
  for (const auto& e : ex) {
    CHECK(e.context.size() <= kMaxContextTokens);
    CHECK(e.target.back() == kEos);
    for (TokenId id : e.context) CHECK(static_cast<std::size_t>(id) < c.vocab.size());
  }
}
