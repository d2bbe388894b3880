#pragma once

#include "dialprobe/models.hpp"
#include "dialprobe/probes.hpp"

#include <functional>
#include <string>
#include <vector>

namespace dialprobe::probeclf {

using probes::LabelIndices;
using probes::LabelKind;
using Matrix = std::vector<std::vector<double>>;

enum class ProbeKind { Linear, Mlp };
std::string_view to_string(ProbeKind k);  // "linear", "mlp"
ProbeKind parse_probe_kind(std::string_view name);

// Per-dimension zero mean / unit variance from the fitting rows. Constant
// dimensions keep scale 1.
struct Standardizer {
  std::vector<double> mean, scale;
  static Standardizer fit(const Matrix& x);
  std::vector<double> apply(const std::vector<double>& row) const;
};

// ---------------------------------------------------------------------------
// Optimizer

struct LbfgsOptions {
  std::size_t max_iter = 250;
  double tol = 1e-4;  // on the gradient infinity norm
  std::size_t history = 10;
};

struct LbfgsReport {
  std::size_t iterations = 0;
  double loss = 0.0;
  double grad_inf_norm = 0.0;
  bool converged = false;
  std::vector<double> trace;  // objective after every accepted step, starting at x0
};

// f(x, grad) returns the objective and writes its gradient.
using Objective = std::function<double(const std::vector<double>& x, std::vector<double>& grad)>;
LbfgsReport minimize_lbfgs(const Objective& f, std::vector<double>& x, const LbfgsOptions& opt = {});

// ---------------------------------------------------------------------------
// Probes

struct LinearOptions {
  double C = 1.0;
  LbfgsOptions lbfgs;
};

struct MlpOptions {
  std::size_t hidden = 100;
  double alpha = 1e-4;
  double lr = 1e-3;
  std::size_t batch_size = 200;
  std::size_t max_epochs = 250;
  double tol = 1e-4;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
};

struct FitOptions {
  LinearOptions linear;
  MlpOptions mlp;
  bool standardize = true;
};

struct FittedProbe {
  ProbeKind kind = ProbeKind::Linear;
  LabelKind label_kind = LabelKind::MultiClass;
  std::size_t n_classes = 0;     // label space size
  Standardizer standardizer;
  bool standardize = true;
  // Single-label: the classes seen in training, in index order. The model
  // scores these columns only.
  std::vector<std::size_t> classes;
  // Set when training data had fewer than two classes; predictions are then
  // the constant `constant_class`.
  bool degenerate = false;
  std::size_t constant_class = 0;
  // Linear: single-label weights [classes x (d+1)], or one [d+1] head per
  // label for multi-label. Heads with no positives (or no negatives) predict
  // a constant, recorded in head_constant (-1 none, 0 never, 1 always).
  Matrix weights;
  std::vector<int> head_constant;
  std::vector<LbfgsReport> reports;
  // MLP: [d x hidden], [hidden], [hidden x outputs], [outputs].
  std::vector<double> w1, b1, w2, b2;
  std::size_t width = 0, hidden = 0, outputs = 0;
  std::size_t epochs_run = 0;
};

// y holds class indices in [0, n_classes). Multi-class needs one index per
// row; multi-label rows are sets.
FittedProbe fit(ProbeKind kind, const Matrix& x, const std::vector<LabelIndices>& y, LabelKind label_kind,
                std::size_t n_classes, const FitOptions& options = {});
std::vector<LabelIndices> predict(const FittedProbe& probe, const Matrix& x);

// Regularized training objective of the multinomial model at weights w
// ([K x (d+1)] row-major, bias last), for standardized inputs; exposed for
// convexity checks.
double multinomial_objective(const Matrix& x, const std::vector<std::size_t>& y, std::size_t k,
                             const std::vector<double>& w, double C, std::vector<double>* grad);

struct F1Counts {
  long long tp = 0, fp = 0, fn = 0;
  double f1() const;
};
// Pools TP/FP/FN over (example, label) pairs; single-label tasks use one-hot
// sets, so the score equals accuracy. 0/0 is 0.
F1Counts micro_counts(const std::vector<LabelIndices>& predictions, const std::vector<LabelIndices>& golds);
double micro_f1(const std::vector<LabelIndices>& predictions, const std::vector<LabelIndices>& golds,
                LabelKind kind);

// ---------------------------------------------------------------------------
// Evaluation

struct ProbeResult {
  std::string model;
  std::uint64_t seed = 0;
  std::string checkpoint;  // tag string
  std::string task;
  double f1 = 0.0;
  std::size_t n_train = 0;
  std::size_t n_eval = 0;
  bool degenerate = false;
};

struct EvalOptions {
  probes::ProbeConfig probe;
  FitOptions fit;
  std::size_t workers = 1;
};

ProbeResult fit_and_score(const probes::ProbeDataset& ds, ProbeKind kind, const FitOptions& options = {});

// Every (checkpoint, task) pair: fit on Train embeddings, score on Valid.
// Results are sorted by (task, model, seed, checkpoint).
std::vector<ProbeResult> evaluate(const corpus::Corpus& corpus, const std::vector<models::Checkpoint>& checkpoints,
                                  const std::vector<probes::Task>& tasks, ProbeKind kind,
                                  const EvalOptions& options = {});

void sort_results(std::vector<ProbeResult>& results);
// `model,seed,checkpoint,task,f1,n_train,n_eval`
std::string report_csv(const std::vector<ProbeResult>& results);
std::vector<ProbeResult> parse_report_csv(std::string_view text);

} // namespace dialprobe::probeclf
