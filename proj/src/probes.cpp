#include "dialprobe/probes.hpp"

#include "dialprobe/errors.hpp"
#include "dialprobe/util.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace dialprobe::probes {

using corpus::Dialogue;
using corpus::Speaker;
using corpus::Split;
using corpus::Turn;

const std::vector<TaskInfo>& all_tasks() {
  using enum Task;
  using enum LabelKind;
  using A = Applicability;
  static const std::vector<TaskInfo> tasks = {
      {UtteranceLoc, "UtteranceLoc", MultiClass, A::Both, 5},
      {WordCont, "WordCont", MultiClass, A::ChitChat, 0},
      {IsMultiTopic, "IsMultiTopic", Binary, A::GoalOriented, 2},
      {NumAllTopics, "NumAllTopics", MultiClass, A::GoalOriented, 6},
      {RepeatInfo, "RepeatInfo", MultiLabel, A::GoalOriented, 0},
      {NumRepeatInfo, "NumRepeatInfo", MultiClass, A::GoalOriented, 7},
      {AllTopics, "AllTopics", MultiLabel, A::GoalOriented, 0},
      {RecentSlots, "RecentSlots", MultiLabel, A::GoalOriented, 0},
      {NumRecentInfo, "NumRecentInfo", MultiClass, A::GoalOriented, 10},
      {RecentValues, "RecentValues", MultiLabel, A::GoalOriented, 0},
      {AllSlots, "AllSlots", MultiLabel, A::GoalOriented, 0},
      {AllValues, "AllValues", MultiLabel, A::GoalOriented, 0},
      {RecentTopic, "RecentTopic", MultiClass, A::GoalOriented, 0},
      {NumAllInfo, "NumAllInfo", MultiClass, A::GoalOriented, 20},
      {PersonalInfo, "PersonalInfo", MultiLabel, A::ChitChat, 0},
      {ActionSelect, "ActionSelect", MultiClass, A::GoalOriented, 0},
      {EntitySlots, "EntitySlots", MultiLabel, A::GoalOriented, 0},
      {EntityValues, "EntityValues", MultiLabel, A::GoalOriented, 0},
  };
  return tasks;
}

const TaskInfo& info(Task t) { return all_tasks()[static_cast<std::size_t>(t)]; }

std::string_view to_string(Task t) { return info(t).name; }

Task parse_task(std::string_view name) {
  for (const auto& ti : all_tasks())
    if (ti.name == name) return ti.task;
  throw UsageError("unknown probe task '" + std::string(name) + "'");
}

bool applicable(Task t, corpus::Style style) {
  switch (info(t).applies) {
  case Applicability::Both: return true;
  case Applicability::GoalOriented: return style == corpus::Style::GoalOriented;
  case Applicability::ChitChat: return style == corpus::Style::ChitChat;
  }
  return false;
}

std::vector<Task> tasks_for(corpus::Style style) {
  std::vector<Task> out;
  for (const auto& ti : all_tasks())
    if (applicable(ti.task, style)) out.push_back(ti.task);
  return out;
}

// ---------------------------------------------------------------------------
// Labels

LabelBuilder::LabelBuilder(const corpus::Corpus& corpus, ProbeConfig config) : corpus_(corpus), config_(config) {
  const auto& vocab = corpus.vocab;
  is_mid_.assign(vocab.size(), 0);
  // Ids are already in descending frequency order.
  for (std::size_t id = corpus::kReservedTokens; id < vocab.size() && mid_words_.size() < config_.word_count; ++id) {
    const auto f = vocab.frequency(static_cast<corpus::TokenId>(id));
    if (f >= static_cast<std::int64_t>(config_.word_min_freq) && f <= static_cast<std::int64_t>(config_.word_max_freq)) {
      mid_words_.push_back(vocab.token(static_cast<corpus::TokenId>(id)));
      is_mid_[id] = 1;
    }
  }
}

namespace {

Label single(std::size_t n) { return Label{false, {std::to_string(n)}}; }
Label single(std::string s) { return Label{false, {std::move(s)}}; }
Label set_of(const std::set<std::string>& s) { return Label{false, {s.begin(), s.end()}}; }
Label skipped() { return Label{true, {}}; }

const Turn* recent_user(const Dialogue& d, std::size_t turn_index) {
  for (std::size_t i = turn_index; i-- > 0;)
    if (d.turns[i].speaker == Speaker::User) return &d.turns[i];
  return nullptr;
}

} // namespace

Label LabelBuilder::build(Task task, const Dialogue& d, std::size_t turn_index) const {
  if (!applicable(task, corpus_.style))
    throw NotApplicable(std::string(to_string(task)) + " does not apply to this corpus style");
  if (turn_index == 0 || turn_index >= d.turns.size() || d.turns[turn_index].speaker != Speaker::System)
    throw ShapeMismatch("turn " + std::to_string(turn_index) + " of " + d.id + " is not a probed System turn");
  const std::size_t cap = info(task).fixed_classes == 0 ? 0 : info(task).fixed_classes - 1;
  auto capped = [&](std::size_t n) { return single(std::min(n, cap)); };

  const Turn* recent = recent_user(d, turn_index);
  std::set<std::string> context_topics;
  std::set<std::string> all_slots, all_values;
  std::size_t all_info = 0;
  for (std::size_t i = 0; i < turn_index; ++i) {
    const Turn& t = d.turns[i];
    context_topics.insert(t.topics.begin(), t.topics.end());
    if (t.speaker != Speaker::User) continue;
    for (const auto& sv : t.user_info) {
      all_slots.insert(sv.slot);
      all_values.insert(sv.value);
    }
    all_info += t.user_info.size();
  }

  switch (task) {
  case Task::UtteranceLoc: return single(std::min<std::size_t>(4, 5 * turn_index / d.turns.size()));
  case Task::WordCont: {
    std::vector<corpus::TokenId> history;
    for (std::size_t i = 0; i < turn_index; ++i)
      history.insert(history.end(), d.turns[i].tokens.begin(), d.turns[i].tokens.end());
    const std::size_t from = history.size() > config_.max_context ? history.size() - config_.max_context : 0;
    for (std::size_t i = history.size(); i-- > from;) {
      const auto id = static_cast<std::size_t>(history[i]);
      if (id < is_mid_.size() && is_mid_[id]) return single(corpus_.vocab.token(history[i]));
    }
    return skipped();
  }
  case Task::IsMultiTopic: return single(context_topics.size() > 1 ? 1 : 0);
  case Task::NumAllTopics:
    return capped(config_.num_all_topics_prefix ? context_topics.size() : d.goal_topics.size());
  case Task::AllTopics: return set_of(context_topics);
  case Task::RepeatInfo:
  case Task::NumRepeatInfo: {
    if (!recent) return skipped();
    std::set<std::string> earlier;
    for (const Turn* t = &d.turns[0]; t != recent; ++t)
      if (t->speaker == Speaker::User)
        for (const auto& sv : t->user_info) earlier.insert(sv.slot);
    std::set<std::string> repeats;
    for (const auto& sv : recent->user_info)
      if (earlier.count(sv.slot)) repeats.insert(sv.slot);
    return task == Task::RepeatInfo ? set_of(repeats) : capped(repeats.size());
  }
  case Task::RecentSlots:
  case Task::RecentValues: {
    if (!recent) return skipped();
    std::set<std::string> s;
    for (const auto& sv : recent->user_info) s.insert(task == Task::RecentSlots ? sv.slot : sv.value);
    return set_of(s);
  }
  case Task::NumRecentInfo: return recent ? capped(recent->user_info.size()) : skipped();
  case Task::AllSlots: return set_of(all_slots);
  case Task::AllValues: return set_of(all_values);
  case Task::RecentTopic:
    if (!recent || recent->topics.empty()) return skipped();
    return single(recent->topics.front());
  case Task::NumAllInfo: return capped(all_info);
  case Task::PersonalInfo:
    if (!d.persona) return skipped();
    return Label{false, *d.persona};
  case Task::ActionSelect:
  case Task::EntitySlots:
  case Task::EntityValues: {
    const auto& act = d.turns[turn_index].act;
    if (!act) return skipped();
    if (task == Task::ActionSelect) return single(act->name);
    std::set<std::string> s;
    for (const auto& sv : act->args) s.insert(task == Task::EntitySlots ? sv.slot : sv.value);
    return set_of(s);
  }
  }
  throw UsageError("unhandled task");
}

Label build_labels(const corpus::Corpus& corpus, Task task, const Dialogue& d, std::size_t turn_index,
                   const ProbeConfig& config) {
  return LabelBuilder(corpus, config).build(task, d, turn_index);
}

std::optional<std::size_t> LabelSpace::index(const std::string& name) const {
  if (info(task).fixed_classes > 0) {
    // "10" sorts before "2", so numeric names are searched linearly.
    auto f = std::find(names.begin(), names.end(), name);
    if (f == names.end()) return std::nullopt;
    return static_cast<std::size_t>(f - names.begin());
  }
  auto it = std::lower_bound(names.begin(), names.end(), name);
  if (it == names.end() || *it != name) return std::nullopt;
  return static_cast<std::size_t>(it - names.begin());
}

LabelSpace build_label_space(Task task, const std::vector<Label>& train_labels) {
  LabelSpace s;
  s.task = task;
  if (const std::size_t n = info(task).fixed_classes; n > 0) {
    for (std::size_t i = 0; i < n; ++i) s.names.push_back(std::to_string(i));
    return s;
  }
  std::set<std::string> seen;
  for (const auto& l : train_labels)
    if (!l.skip) seen.insert(l.names.begin(), l.names.end());
  s.names.assign(seen.begin(), seen.end());
  return s;
}

std::vector<ProbeExample> probe_examples(const LabelBuilder& builder, Task task, Split split) {
  const auto& c = builder.corpus();
  std::vector<ProbeExample> out;
  for (const auto& ex : corpus::make_examples(c, split, builder.config().max_context)) {
    ProbeExample p;
    p.dialogue_id = ex.dialogue_id;
    p.turn_index = ex.turn_index;
    p.split = split;
    p.label = builder.build(task, c.dialogues[ex.dialogue_index], ex.turn_index);
    out.push_back(std::move(p));
  }
  return out;
}

std::string probe_dump_csv(const std::vector<ProbeExample>& examples, Task task) {
  std::string out = "dialogue_id,turn_index,task,label\n";
  for (const auto& e : examples) {
    if (e.label.skip) continue;
    out += e.dialogue_id + "," + std::to_string(e.turn_index) + "," + std::string(to_string(task)) + "," +
           join(e.label.names, "|") + "\n";
  }
  return out;
}

EmbeddingSet embed_split(const corpus::Corpus& corpus, const models::Model& model, Split split,
                         std::size_t max_context) {
  EmbeddingSet out;
  out.width = model.width();
  for (const auto& ex : corpus::make_examples(corpus, split, max_context)) {
    out.dialogue_ids.push_back(ex.dialogue_id);
    out.turn_indices.push_back(ex.turn_index);
    out.rows.push_back(models::embed_context(model, models::context_of(ex)));
  }
  return out;
}

ProbeDataset build_probe_dataset(const LabelBuilder& builder, Task task, const EmbeddingSet& train,
                                 const EmbeddingSet& valid) {
  if (valid.rows.empty()) throw EmptyEvaluationSplit("validation split has no examples");
  const auto train_labels = probe_examples(builder, task, Split::Train);
  const auto valid_labels = probe_examples(builder, task, Split::Valid);
  if (train_labels.size() != train.rows.size() || valid_labels.size() != valid.rows.size())
    throw ShapeMismatch("embeddings and labels are not aligned");

  ProbeDataset ds;
  ds.task = task;
  ds.kind = info(task).kind;
  {
    std::vector<Label> ls;
    for (const auto& e : train_labels) ls.push_back(e.label);
    ds.space = build_label_space(task, ls);
  }
  std::map<std::string, std::size_t> unseen;
  auto indices = [&](const Label& l) {
    LabelIndices out;
    for (const auto& n : l.names) {
      if (auto i = ds.space.index(n)) {
        out.push_back(*i);
      } else {
        auto [it, fresh] = unseen.emplace(n, ds.space.size() + unseen.size());
        out.push_back(it->second);
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  for (std::size_t i = 0; i < train_labels.size(); ++i) {
    if (train_labels[i].label.skip) continue;
    if (train.dialogue_ids[i] != train_labels[i].dialogue_id || train.turn_indices[i] != train_labels[i].turn_index)
      throw ShapeMismatch("train embedding " + std::to_string(i) + " belongs to another example");
    ds.train_x.push_back(train.rows[i]);
    ds.train_y.push_back(indices(train_labels[i].label));
  }
  for (std::size_t i = 0; i < valid_labels.size(); ++i) {
    if (valid_labels[i].label.skip) continue;
    if (valid.dialogue_ids[i] != valid_labels[i].dialogue_id || valid.turn_indices[i] != valid_labels[i].turn_index)
      throw ShapeMismatch("valid embedding " + std::to_string(i) + " belongs to another example");
    ds.eval_x.push_back(valid.rows[i]);
    ds.eval_y.push_back(indices(valid_labels[i].label));
    ds.eval_ids.push_back(valid_labels[i].dialogue_id);
    ds.eval_turns.push_back(valid_labels[i].turn_index);
  }
  return ds;
}

ProbeDataset build_probe_dataset(const corpus::Corpus& corpus, const models::Checkpoint& checkpoint, Task task,
                                 const ProbeConfig& config) {
  if (checkpoint.vocab_digest != corpus.vocab.digest())
    throw VocabMismatch("checkpoint vocabulary digest " + hex64(checkpoint.vocab_digest) + " differs from corpus " +
                        hex64(corpus.vocab.digest()));
  auto model = models::restore(checkpoint);
  LabelBuilder builder(corpus, config);
  const auto valid = embed_split(corpus, *model, Split::Valid, config.max_context);
  if (valid.rows.empty()) throw EmptyEvaluationSplit("validation split has no examples");
  const auto train = embed_split(corpus, *model, Split::Train, config.max_context);
  return build_probe_dataset(builder, task, train, valid);
}

} // namespace dialprobe::probes
