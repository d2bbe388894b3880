#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dialprobe {
class Rng;
}

namespace dialprobe::tensor {

// Row-major shape of rank 0..3.
class Shape {
public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);

  std::size_t rank() const { return rank_; }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }
  std::size_t numel() const;
  // Rank-2 accessors; a rank-1 shape reads as a single row.
  std::size_t rows() const { return rank_ == 2 ? dims_[0] : (rank_ == 3 ? dims_[0] * dims_[1] : 1); }
  std::size_t cols() const { return rank_ == 0 ? 1 : dims_[rank_ - 1]; }
  bool operator==(const Shape& o) const;
  std::string str() const;

private:
  std::array<std::size_t, 3> dims_{};
  std::size_t rank_ = 0;
};

struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(s), data(s.numel(), fill) {}
  Tensor(Shape s, std::vector<double> values);

  static Tensor row(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.rows(); }
  std::size_t cols() const { return shape.cols(); }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  double item() const { return data.at(0); }
  bool all_finite() const;
};

// A trainable tensor together with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}
  void zero_grad();
};

// Owns parameters in registration order (the order checkpoints use).
class ParameterSet {
public:
  Parameter& add(std::string name, Tensor value);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }
  std::size_t count() const;  // total scalar count
  void zero_grad();

private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

struct Var {
  std::uint32_t id = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so recording
// order is already topological; backward() walks it once in reverse.
class Graph {
public:
  using BackwardFn = std::function<void(Graph&, std::uint32_t self)>;

  // With record=false, ops compute values only (inference).
  explicit Graph(bool record = true) : record_(record) { nodes_.reserve(256); }

  Var constant(Tensor value);
  Var param(Parameter& p);

  const Tensor& value(Var v) const;
  const Shape& shape(Var v) const { return value(v).shape; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient buffer of a node, allocated on first use. For parameter leaves
  // this is the parameter's own accumulator.
  Tensor& grad(std::uint32_t id);
  const Tensor* grad_if_any(std::uint32_t id) const;

  // Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule once in
  // reverse order. Returns the number of rules visited.
  std::size_t backward(Var loss);

  // Used by op implementations.
  Var push(Tensor value, std::span<const Var> inputs, BackwardFn fn);
  Var push(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
  }

private:
  struct Node {
    Tensor value;
    Tensor grad;
    Parameter* param = nullptr;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  bool record_;
};

// ---------------------------------------------------------------------------
// Core ops. Shapes are rank-2 unless stated; rank-1 inputs read as one row.

Var matmul(Graph& g, Var a, Var b);            // [m,k] x [k,n]
Var add(Graph& g, Var a, Var b);               // same shape, or b is [1,n] broadcast over rows
Var sub(Graph& g, Var a, Var b);               // same shape
Var mul(Graph& g, Var a, Var b);               // elementwise, same shape
Var scale(Graph& g, Var a, double s);
Var concat(Graph& g, const std::vector<Var>& parts, std::size_t axis);  // axis 0 rows, 1 cols
Var slice(Graph& g, Var a, std::size_t axis, std::size_t begin, std::size_t end);
Var transpose(Graph& g, Var a);
Var tanh(Graph& g, Var a);
Var sigmoid(Graph& g, Var a);
Var relu(Graph& g, Var a);
Var softmax(Graph& g, Var a);       // row-wise
Var log_softmax(Graph& g, Var a);   // row-wise
Var embed_lookup(Graph& g, Var table, std::span<const std::int32_t> ids);  // [V,E] -> [T,E]
Var mean_over_axis(Graph& g, Var a, std::size_t axis);  // keeps the reduced axis as size 1
Var sum(Graph& g, Var a);                                // -> [1,1]
Var layer_norm(Graph& g, Var a, Var gain, Var bias, double eps = 1e-5);  // row-wise
// Fused LSTM cell. gates = [i f g o] pre-activations [1,4H], c_prev [1,H].
// Returns [1,2H] holding h then c.
Var lstm_cell(Graph& g, Var gates, Var c_prev);

// Sum over rows of -log(max(softmax(logits)[target], 1e-12)); [1,1].
Var cross_entropy(Graph& g, Var logits, std::span<const std::int32_t> targets);
// Sum of binary cross-entropy with logits against a 0/1 target matrix; [1,1].
Var bce_with_logits(Graph& g, Var logits, const Tensor& targets);

inline constexpr double kProbClamp = 1e-12;

// Per-step view of a decoder output: logits, distribution, gold and argmax.
struct TokenPrediction {
  std::vector<double> logits;
  std::vector<double> p;
  std::int32_t target = -1;
  std::int32_t predicted = -1;
};

std::vector<TokenPrediction> predictions_from_logits(const Tensor& logits,
                                                     std::span<const std::int32_t> targets);
// Value-only categorical cross-entropy over prediction records (sum over steps).
double cross_entropy(std::span<const TokenPrediction> predictions,
                     std::span<const std::int32_t> targets);

// ---------------------------------------------------------------------------
// Optimization

struct AdamState {
  double lr = 4e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// One bias-corrected Adam update from the accumulated gradients. Throws
// NonFiniteGradient (without touching any parameter) if a gradient is NaN/inf.
void adam_step(AdamState& state, ParameterSet& params);

// Rescales all gradients so their global L2 norm is at most max_norm.
double clip_grad_norm(ParameterSet& params, double max_norm);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

// Compares reverse-mode gradients of build(g) (a scalar) against central
// differences (f(x+h) - f(x-h)) / 2h for every coordinate of every parameter.
// Relative error is |a-n| / max(1e-8, |a|+|n|).
GradCheckReport gradient_check(const std::function<Var(Graph&)>& build, ParameterSet& params,
                               double h = 1e-5);

struct DirectionalCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_draw = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t draws = 0;
};

// Same comparison along `draws` random unit directions u in parameter space:
// grad . u against (f(x+hu) - f(x-hu)) / 2h. Well conditioned even when many
// individual coordinates have vanishing gradients. An empty `only` perturbs
// every parameter, otherwise just the named one.
DirectionalCheckReport directional_gradient_check(const std::function<Var(Graph&)>& build, ParameterSet& params,
                                                  std::size_t draws, std::uint64_t seed, double h = 1e-5,
                                                  const std::string& only = {});

// Initializers
Tensor uniform_init(Shape s, double bound, Rng& rng);
Tensor normal_init(Shape s, double stddev, Rng& rng);

} // namespace dialprobe::tensor
