#include <doctest.h>

#include "dialprobe/errors.hpp"
#include "dialprobe/probes.hpp"
#include "label_oracle.hpp"

using namespace dialprobe;
using namespace dialprobe::probes;

namespace {

corpus::Corpus synth(std::uint64_t seed, std::size_t n) {
  corpus::SynthConfig sc;
  sc.n_dialogues = n;
  return corpus::synthesize_corpus(seed, sc).corpus;
}

std::string rendered(const Label& l) { return l.skip ? "SKIP" : join(l.names, "|"); }

const char* kTwoRepeats = R"({"dialogues": [{"id": "d0", "split": "train", "goal_topics": ["hotel"], "turns": [
  {"speaker": "user", "text": "hotel in the centre", "topics": ["hotel"],
   "info": [{"topic": "hotel", "slot": "area", "value": "centre"}]},
  {"speaker": "system", "text": "what price ?", "topics": ["hotel"], "act": null},
  {"speaker": "user", "text": "cheap hotel in the centre", "topics": ["hotel"],
   "info": [{"topic": "hotel", "slot": "area", "value": "centre"}, {"topic": "hotel", "slot": "price", "value": "cheap"}]},
  {"speaker": "system", "text": "booked", "topics": ["hotel"],
   "act": {"name": "Hotel-Book", "args": [{"topic": "hotel", "slot": "area", "value": "centre"}]}},
  {"speaker": "user", "text": "thanks", "topics": []},
  {"speaker": "system", "text": "bye", "topics": []},
  {"speaker": "user", "text": "bye", "topics": []},
  {"speaker": "system", "text": "bye", "topics": []},
  {"speaker": "user", "text": "bye", "topics": []},
  {"speaker": "system", "text": "bye", "topics": []}
]}]})";

} // namespace

TEST_CASE("task table") {
  CHECK(all_tasks().size() == 18);
  CHECK(tasks_for(corpus::Style::GoalOriented).size() == 16);
  CHECK(tasks_for(corpus::Style::ChitChat).size() == 3);
  CHECK(info(Task::UtteranceLoc).fixed_classes == 5);
  CHECK(info(Task::RecentSlots).kind == LabelKind::MultiLabel);
  CHECK(info(Task::PersonalInfo).kind == LabelKind::MultiLabel);
  CHECK(info(Task::ActionSelect).kind == LabelKind::MultiClass);
  CHECK(info(Task::NumAllTopics).fixed_classes == 6);
  CHECK(info(Task::NumRepeatInfo).fixed_classes == 7);
  CHECK(info(Task::NumRecentInfo).fixed_classes == 10);
  CHECK(info(Task::NumAllInfo).fixed_classes == 20);
  for (const auto& t : all_tasks()) CHECK(parse_task(t.name) == t.task);
  CHECK_THROWS_AS(parse_task("BigramShift"), UsageError);
}

TEST_CASE("hand examples") {
  auto c = corpus::parse_goal_oriented(kTwoRepeats);
  const auto& d = c.dialogues[0];
  CHECK(rendered(build_labels(c, Task::UtteranceLoc, d, 7)) == "3");
  CHECK(rendered(build_labels(c, Task::RepeatInfo, d, 3)) == "area");
  CHECK(rendered(build_labels(c, Task::NumRepeatInfo, d, 3)) == "1");
  CHECK(rendered(build_labels(c, Task::AllSlots, d, 3)) == "area|price");
  CHECK(rendered(build_labels(c, Task::NumAllInfo, d, 3)) == "3");
  CHECK(rendered(build_labels(c, Task::RecentValues, d, 3)) == "centre|cheap");
  CHECK(rendered(build_labels(c, Task::ActionSelect, d, 3)) == "Hotel-Book");
  CHECK(rendered(build_labels(c, Task::EntitySlots, d, 3)) == "area");
  CHECK(build_labels(c, Task::ActionSelect, d, 1).skip);
  CHECK(build_labels(c, Task::EntityValues, d, 1).skip);
  CHECK(rendered(build_labels(c, Task::RepeatInfo, d, 1)) == "");
  CHECK(rendered(build_labels(c, Task::NumRepeatInfo, d, 1)) == "0");
  // The recent user turn at 4 carries no topic.
  CHECK(build_labels(c, Task::RecentTopic, d, 5).skip);
  CHECK(rendered(build_labels(c, Task::AllTopics, d, 5)) == "hotel");
  CHECK(rendered(build_labels(c, Task::IsMultiTopic, d, 5)) == "0");
  CHECK(rendered(build_labels(c, Task::NumRecentInfo, d, 5)) == "0");
  CHECK_THROWS_AS(build_labels(c, Task::WordCont, d, 1), NotApplicable);
  CHECK_THROWS_AS(build_labels(c, Task::UtteranceLoc, d, 2), ShapeMismatch);
}

TEST_CASE("utterance location buckets are monotone and cover five ranges") {
  for (std::size_t n = 2; n <= 30; n += 2) {
    std::size_t last = 0;
    std::set<std::size_t> seen;
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t b = std::min<std::size_t>(4, 5 * t / n);
      CHECK(b >= last);
      last = b;
      seen.insert(b);
    }
    if (n >= 5) CHECK(seen.size() == 5);
  }
}

TEST_CASE("labels match the raw-annotation oracle") {
  auto c = synth(31, 120);
  const auto expected = oracle::goal_labels(corpus::serialize_goal_oriented(c));
  LabelBuilder b(c);
  std::size_t checked = 0;
  for (const auto& d : c.dialogues)
    for (std::size_t k = 1; k < d.turns.size(); ++k) {
      if (d.turns[k].speaker != corpus::Speaker::System) continue;
      for (Task t : tasks_for(c.style)) {
        const std::string name(to_string(t));
        INFO(d.id, " turn ", k, " ", name);
        REQUIRE(expected.count({d.id, k, name}));
        CHECK(rendered(b.build(t, d, k)) == expected.at({d.id, k, name}));
        ++checked;
      }
    }
  CHECK(checked > 1000);
}

TEST_CASE("cross-task consistency") {
  auto c = synth(8, 80);
  LabelBuilder b(c);
  for (const auto& d : c.dialogues)
    for (std::size_t k = 1; k < d.turns.size(); k += 2) {
      auto rep = b.build(Task::RepeatInfo, d, k);
      CHECK(b.build(Task::NumRepeatInfo, d, k).names[0] == std::to_string(rep.names.size()));
      auto topics = b.build(Task::AllTopics, d, k);
      CHECK(b.build(Task::IsMultiTopic, d, k).names[0] == (topics.names.size() > 1 ? "1" : "0"));
    }
}

TEST_CASE("synthetic tallies agree with labels") {
  corpus::SynthConfig sc;
  sc.n_dialogues = 150;
  auto s = corpus::synthesize_corpus(77, sc);
  LabelBuilder b(s.corpus);
  corpus::HistogramSet got;
  for (const auto& d : s.corpus.dialogues)
    for (std::size_t k = 1; k < d.turns.size(); k += 2) {
      ++got["utterance_location"][b.build(Task::UtteranceLoc, d, k).names[0]];
      ++got["repeats_per_context"][b.build(Task::NumRepeatInfo, d, k).names[0]];
    }
  CHECK(got["utterance_location"] == s.tallies["utterance_location"]);
  CHECK(got["repeats_per_context"] == s.tallies["repeats_per_context"]);
}

TEST_CASE("chit-chat tasks") {
  const std::string text =
      "1 your persona: i like red cars .\n"
      "2 your persona: my dog is called rex .\n"
      "3 hello there\tapple banana apple\n"
      "4 banana again\tcherry banana\n";
  auto c = corpus::parse_chitchat(text);
  const auto& d = c.dialogues[0];
  REQUIRE(d.turns.size() == 4);
  ProbeConfig pc;
  pc.word_min_freq = 2;
  pc.word_max_freq = 2;
  LabelBuilder b(c, pc);
  // banana occurs 3 times, apple twice.
  CHECK(b.mid_frequency_words() == std::vector<std::string>{"apple"});
  CHECK(rendered(b.build(Task::WordCont, d, 1)) == "SKIP");
  CHECK(rendered(b.build(Task::WordCont, d, 3)) == "apple");
  CHECK(rendered(b.build(Task::PersonalInfo, d, 1)) == join(*d.persona, "|"));
  CHECK_THROWS_AS(b.build(Task::AllSlots, d, 1), NotApplicable);

  pc.word_max_freq = 3;
  LabelBuilder b2(c, pc);
  CHECK(rendered(b2.build(Task::WordCont, d, 3)) == "banana");
  // Truncating the context to the last turn hides the earlier apples.
  pc.max_context = 2;
  pc.word_max_freq = 2;
  LabelBuilder b3(c, pc);
  CHECK(rendered(b3.build(Task::WordCont, d, 3)) == "SKIP");
}

TEST_CASE("label spaces") {
  std::vector<Label> ls = {{false, {"b", "a"}}, {true, {}}, {false, {"c"}}};
  auto s = build_label_space(Task::AllSlots, ls);
  CHECK(s.names == std::vector<std::string>{"a", "b", "c"});
  CHECK(*s.index("c") == 2);
  CHECK(!s.index("z"));
  auto n = build_label_space(Task::NumAllInfo, {});
  CHECK(n.size() == 20);
  CHECK(*n.index("10") == 10);
}

TEST_CASE("probe datasets are aligned and checkpoint independent in labels") {
  auto c = synth(5, 40);
  auto cfg = models::preset(models::Kind::Seq2Seq, "tiny", c.vocab.size());
  auto m1 = models::make_model(cfg, 1);
  auto m2 = models::make_model(cfg, 2);
  auto ck1 = models::snapshot(*m1, models::Tag::Untrained, 0, 1, c.vocab.digest());
  auto ck2 = models::snapshot(*m2, models::Tag::BestMetric, 3, 2, c.vocab.digest());
  for (Task t : tasks_for(c.style)) {
    auto a = build_probe_dataset(c, ck1, t);
    auto b = build_probe_dataset(c, ck2, t);
    CHECK(a.train_x.size() == a.train_y.size());
    CHECK(a.eval_x.size() == a.eval_y.size());
    CHECK(a.train_y == b.train_y);
    CHECK(a.eval_y == b.eval_y);
    CHECK(a.train_x != b.train_x);
    for (const auto& row : a.train_x) CHECK(row.size() == 8);
  }
  auto ck_bad = ck1;
  ck_bad.vocab_digest ^= 1;
  CHECK_THROWS_AS(build_probe_dataset(c, ck_bad, Task::AllSlots), VocabMismatch);

  auto no_valid = c;
  for (auto& d : no_valid.dialogues)
    if (d.split == corpus::Split::Valid) d.split = corpus::Split::Train;
  CHECK_THROWS_AS(build_probe_dataset(no_valid, ck1, Task::AllSlots), EmptyEvaluationSplit);
}

TEST_CASE("probe dump csv") {
  auto c = corpus::parse_goal_oriented(kTwoRepeats);
  LabelBuilder b(c);
  auto ex = probe_examples(b, Task::AllSlots, corpus::Split::Train);
  REQUIRE(ex.size() == 5);
  const std::string csv = probe_dump_csv(ex, Task::AllSlots);
  CHECK(csv.rfind("dialogue_id,turn_index,task,label\nd0,1,AllSlots,area\nd0,3,AllSlots,area|price\n", 0) == 0);
  auto act = probe_examples(b, Task::ActionSelect, corpus::Split::Train);
  CHECK(probe_dump_csv(act, Task::ActionSelect) == "dialogue_id,turn_index,task,label\nd0,3,ActionSelect,Hotel-Book\n");
}
