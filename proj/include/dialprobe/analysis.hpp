#pragma once

#include "dialprobe/corpus.hpp"
#include "dialprobe/probeclf.hpp"

#include <array>
#include <map>
#include <string>
#include <vector>

namespace dialprobe::analysis {

using Matrix = std::vector<std::vector<double>>;

// ---------------------------------------------------------------------------
// PCA

struct PcaOptions {
  double tolerance = 1e-12;
  std::size_t max_iterations = 10000;
};

struct PcaProjection {
  std::vector<double> mean;
  std::array<std::vector<double>, 2> axes;
  std::array<double, 2> eigenvalues{};  // covariance, n-1 denominator
  std::array<double, 2> explained{};    // eigenvalue / total variance
  std::vector<std::array<double, 2>> coords;
  std::array<double, 2> min{}, max{};   // coordinate ranges per axis
};

// Top two covariance eigenvectors by power iteration with deflation. Each
// axis has its first nonzero coordinate positive. Throws DegenerateData for
// fewer than 3 rows, ragged or 1-wide rows, or zero variance.
PcaProjection pca2(const Matrix& embeddings, const PcaOptions& options = {});

// `dialogue_id,turn_index,x,y`
std::string pca_csv(const PcaProjection& p, const std::vector<std::string>& dialogue_ids,
                    const std::vector<std::size_t>& turn_indices);

// ---------------------------------------------------------------------------
// Difficulty

enum class Grade { Easy, Medium, Hard };
std::string_view to_string(Grade g);
// Easy above 0.50, Medium in (0.25, 0.50], Hard at or below 0.25.
Grade grade_of(double avg_untrained_f1);

// Models whose untrained scores define task difficulty.
const std::vector<std::string>& grading_models();

struct TaskGrade {
  std::string task;
  Grade grade = Grade::Hard;
  double avg_untrained = 0.0;
};

struct DifficultyGrading {
  std::vector<TaskGrade> tasks;  // by task name
  const TaskGrade* find(const std::string& task) const;
};

// Uses the "untrained" rows of the grading models; rows of other models or
// checkpoints are ignored. Seeds of one model are averaged first. Throws
// MissingResult when a task lacks one of the grading models.
DifficultyGrading difficulty_grade(const std::vector<probeclf::ProbeResult>& results);

struct GradeAggregate {
  std::string model;
  Grade grade = Grade::Easy;
  double mean = 0.0;
  double std = 0.0;  // sample, 0 for a single task
  std::size_t n_tasks = 0;
};

// Mean and sample std over the tasks of each grade of the "best" rows, per
// model, seeds averaged per task. Throws MissingResult for a task the grading
// does not cover and EmptyGrade when a graded grade has no tasks for a model.
std::vector<GradeAggregate> aggregate_by_difficulty(const std::vector<probeclf::ProbeResult>& results,
                                                    const DifficultyGrading& grading,
                                                    const std::string& checkpoint = "best");

std::string grading_json(const DifficultyGrading& grading);
// `model,grade,mean,std,n_tasks`
std::string aggregate_csv(const std::vector<GradeAggregate>& rows);

// ---------------------------------------------------------------------------
// Corpus statistics

// topic_frequency, topics_per_dialogue, info_per_user_turn,
// repeats_per_context, multi_topic, utterance_location, response_length and
// info_load_per_dialogue, over every dialogue of the corpus.
corpus::HistogramSet info_distribution(const corpus::Corpus& corpus);
// `histogram,key,count`
std::string histograms_csv(const corpus::HistogramSet& h);

// ---------------------------------------------------------------------------
// Per-epoch evolution

struct EvolutionPoint {
  std::size_t epoch = 0;
  double f1 = 0.0;
};

struct EvolutionKey {
  std::string model;
  std::uint64_t seed = 0;
  std::string task;
  auto operator<=>(const EvolutionKey&) const = default;
};

// Series from "epoch:N" rows (and "untrained" as epoch 0), sorted by epoch.
// Other checkpoints are ignored.
std::map<EvolutionKey, std::vector<EvolutionPoint>> evolution_curves(
    const std::vector<probeclf::ProbeResult>& results);
// `model,seed,task,epoch,f1`
std::string evolution_csv(const std::map<EvolutionKey, std::vector<EvolutionPoint>>& curves);

} // namespace dialprobe::analysis
