#pragma once

#include "dialprobe/corpus.hpp"
#include "dialprobe/models.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dialprobe::probes {

enum class Task {
  UtteranceLoc,
  WordCont,
  IsMultiTopic,
  NumAllTopics,
  RepeatInfo,
  NumRepeatInfo,
  AllTopics,
  RecentSlots,
  NumRecentInfo,
  RecentValues,
  AllSlots,
  AllValues,
  RecentTopic,
  NumAllInfo,
  PersonalInfo,
  ActionSelect,
  EntitySlots,
  EntityValues,
};

enum class LabelKind { Binary, MultiClass, MultiLabel };
enum class Applicability { GoalOriented, ChitChat, Both };

struct TaskInfo {
  Task task;
  std::string_view name;
  LabelKind kind;
  Applicability applies;
  // Count and position tasks have a fixed class set "0".."n-1"; 0 means the
  // label vocabulary comes from the Train split.
  std::size_t fixed_classes;
};

const std::vector<TaskInfo>& all_tasks();
const TaskInfo& info(Task t);
std::string_view to_string(Task t);
Task parse_task(std::string_view name);
bool applicable(Task t, corpus::Style style);
std::vector<Task> tasks_for(corpus::Style style);

struct ProbeConfig {
  // WordCont vocabulary: the first word_count words, by descending Train
  // frequency, whose frequency lies in [word_min_freq, word_max_freq].
  std::size_t word_min_freq = 1000;
  std::size_t word_max_freq = 3000;
  std::size_t word_count = 500;
  // NumAllTopics over the context prefix instead of the whole dialogue.
  bool num_all_topics_prefix = false;
  std::size_t max_context = corpus::kMaxContextTokens;
};

// A label as names: one name for single-label tasks, a (sorted, possibly
// empty) set for multi-label tasks. skip marks examples the task ignores.
struct Label {
  bool skip = false;
  std::vector<std::string> names;
  bool operator==(const Label&) const = default;
};

class LabelBuilder {
public:
  LabelBuilder(const corpus::Corpus& corpus, ProbeConfig config = {});

  // turn_index must address a System turn of d. Throws NotApplicable when the
  // task does not fit the corpus style.
  Label build(Task task, const corpus::Dialogue& d, std::size_t turn_index) const;
  const std::vector<std::string>& mid_frequency_words() const { return mid_words_; }
  const ProbeConfig& config() const { return config_; }
  const corpus::Corpus& corpus() const { return corpus_; }

private:
  const corpus::Corpus& corpus_;
  ProbeConfig config_;
  std::vector<std::string> mid_words_;
  std::vector<char> is_mid_;  // by token id
};

Label build_labels(const corpus::Corpus& corpus, Task task, const corpus::Dialogue& d, std::size_t turn_index,
                   const ProbeConfig& config = {});

// Ordered label vocabulary of a task. Fixed-size tasks list "0".."n-1";
// the others list every name seen in the given labels, lexicographically.
struct LabelSpace {
  Task task = Task::UtteranceLoc;
  std::vector<std::string> names;
  std::size_t size() const { return names.size(); }
  std::optional<std::size_t> index(const std::string& name) const;
};
LabelSpace build_label_space(Task task, const std::vector<Label>& train_labels);

struct ProbeExample {
  std::string dialogue_id;
  std::size_t turn_index = 0;
  corpus::Split split = corpus::Split::Train;
  Label label;
};

// One label per TrainingExample of the split, in make_examples order,
// including skipped ones (so they stay aligned with embeddings).
std::vector<ProbeExample> probe_examples(const LabelBuilder& builder, Task task, corpus::Split split);

// `dialogue_id,turn_index,task,label`, multi-label cells `|`-joined. Skipped
// examples are left out.
std::string probe_dump_csv(const std::vector<ProbeExample>& examples, Task task);

// Encoder summaries for every example of a split, in make_examples order.
struct EmbeddingSet {
  std::vector<std::string> dialogue_ids;
  std::vector<std::size_t> turn_indices;
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
};
EmbeddingSet embed_split(const corpus::Corpus& corpus, const models::Model& model, corpus::Split split,
                         std::size_t max_context = corpus::kMaxContextTokens);

// Class indices per example; a single element for single-label tasks. Valid
// labels missing from the Train label space get indices >= space.size() so
// they can only count as misses.
using LabelIndices = std::vector<std::size_t>;

struct ProbeDataset {
  Task task = Task::UtteranceLoc;
  LabelKind kind = LabelKind::MultiClass;
  LabelSpace space;
  std::vector<std::vector<double>> train_x, eval_x;
  std::vector<LabelIndices> train_y, eval_y;
  std::vector<std::string> eval_ids;
  std::vector<std::size_t> eval_turns;
};

// Pairs precomputed Train/Valid embeddings with labels and drops skips.
ProbeDataset build_probe_dataset(const LabelBuilder& builder, Task task, const EmbeddingSet& train,
                                 const EmbeddingSet& valid);
// Convenience wrapper that restores the checkpoint and embeds both splits.
// Throws VocabMismatch when the checkpoint was trained on another vocabulary
// and EmptyEvaluationSplit when Valid has no examples.
ProbeDataset build_probe_dataset(const corpus::Corpus& corpus, const models::Checkpoint& checkpoint, Task task,
                                 const ProbeConfig& config = {});

} // namespace dialprobe::probes
