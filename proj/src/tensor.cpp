#include "dialprobe/tensor.hpp"

#include "dialprobe/errors.hpp"
#include "dialprobe/util.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace dialprobe::tensor {

// ---------------------------------------------------------------------------
// Shape / Tensor

Shape::Shape(std::initializer_list<std::size_t> dims) {
  if (dims.size() > 3) throw ShapeMismatch("rank > 3 is not supported");
  for (std::size_t d : dims) dims_[rank_++] = d;
}

std::size_t Shape::numel() const {
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
  return n;
}

bool Shape::operator==(const Shape& o) const {
  if (rank_ != o.rank_) return false;
  for (std::size_t i = 0; i < rank_; ++i)
    if (dims_[i] != o.dims_[i]) return false;
  return true;
}

std::string Shape::str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < rank_; ++i) {
    if (i) s += ",";
    s += std::to_string(dims_[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(s), data(std::move(values)) {
  if (data.size() != shape.numel())
    throw ShapeMismatch("data length " + std::to_string(data.size()) + " does not match shape " + shape.str());
}

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{1, n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
}

void Parameter::zero_grad() {
  if (grad.data.size() != value.data.size()) grad = Tensor(value.shape);
  std::fill(grad.data.begin(), grad.data.end(), 0.0);
}

Parameter& ParameterSet::add(std::string name, Tensor value) {
  for (const auto& p : params_)
    if (p->name == name) throw ShapeMismatch("duplicate parameter '" + name + "'");
  params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(value)));
  return *params_.back();
}

Parameter& ParameterSet::get(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return *p;
  throw ShapeMismatch("unknown parameter '" + name + "'");
}

const Parameter& ParameterSet::get(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return *p;
  throw ShapeMismatch("unknown parameter '" + name + "'");
}

std::size_t ParameterSet::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

// ---------------------------------------------------------------------------
// Graph

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::param(Parameter& p) {
  Node n;
  n.param = &p;
  n.requires_grad = record_;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tensor& Graph::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.param ? n.param->value : n.value;
}

Tensor& Graph::grad(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.param) {
    if (n.param->grad.size() != n.param->value.size()) n.param->zero_grad();
    return n.param->grad;
  }
  if (n.grad.data.empty() && !n.value.data.empty()) n.grad = Tensor(n.value.shape);
  return n.grad;
}

const Tensor* Graph::grad_if_any(std::uint32_t id) const {
  const Node& n = nodes_.at(id);
  if (n.param) return &n.param->grad;
  return n.grad.data.empty() ? nullptr : &n.grad;
}

Var Graph::push(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (Var v : inputs)
      if (nodes_[v.id].requires_grad) n.requires_grad = true;
    if (n.requires_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

std::size_t Graph::backward(Var loss) {
  if (value(loss).size() != 1) throw ShapeMismatch("backward needs a scalar loss, got " + value(loss).shape.str());
  if (!nodes_[loss.id].requires_grad) return 0;
  grad(loss.id).data[0] += 1.0;
  std::size_t visited = 0;
  for (std::uint32_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.data.empty()) continue;
    n.backward(*this, i);
    ++visited;
  }
  return visited;
}

// ---------------------------------------------------------------------------
// Ops

namespace {

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeMismatch(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
}

Shape mat(std::size_t r, std::size_t c) { return Shape{r, c}; }

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<RowMajor> rowmajor(Tensor& t, std::size_t r, std::size_t c) {
  return {t.data.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}
Eigen::Map<const RowMajor> crowmajor(const Tensor& t, std::size_t r, std::size_t c) {
  return {t.data.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}

// Elementwise op whose derivative is a function of the output value.
template <class F, class D>
Var elementwise(Graph& g, Var a, F f, D dfdy) {
  const Tensor& x = g.value(a);
  Tensor out(mat(x.rows(), x.cols()));
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = f(x.data[i]);
  return g.push(std::move(out), {a}, [a, dfdy](Graph& g, std::uint32_t self) {
    const Tensor& dy = *g.grad_if_any(self);
    const Tensor& y = g.value(Var{self});
    Tensor& dx = g.grad(a.id);
    for (std::size_t i = 0; i < dy.size(); ++i) dx.data[i] += dy.data[i] * dfdy(y.data[i]);
  });
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void softmax_row(const double* x, double* y, std::size_t n) {
  double mx = x[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) z += (y[j] = std::exp(x[j] - mx));
  for (std::size_t j = 0; j < n; ++j) y[j] /= z;
}

} // namespace

Var matmul(Graph& g, Var a, Var b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  if (B.rows() != k) mismatch("matmul", A.shape, B.shape);
  Tensor C(mat(m, n));
  rowmajor(C, m, n).noalias() = crowmajor(A, m, k) * crowmajor(B, k, n);
  return g.push(std::move(C), {a, b}, [a, b, m, k, n](Graph& g, std::uint32_t self) {
    const Tensor& dC = *g.grad_if_any(self);
    const Tensor& A = g.value(a);
    const Tensor& B = g.value(b);
    if (g.requires_grad(a)) rowmajor(g.grad(a.id), m, k).noalias() += crowmajor(dC, m, n) * crowmajor(B, k, n).transpose();
    if (g.requires_grad(b)) rowmajor(g.grad(b.id), k, n).noalias() += crowmajor(A, m, k).transpose() * crowmajor(dC, m, n);
  });
}

Var add(Graph& g, Var a, Var b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  const std::size_t m = A.rows(), n = A.cols();
  const bool broadcast = B.rows() == 1 && m != 1;
  if (B.cols() != n || (!broadcast && B.rows() != m)) mismatch("add", A.shape, B.shape);
  Tensor C(mat(m, n));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      C.data[i * n + j] = A.data[i * n + j] + B.data[broadcast ? j : i * n + j];
  return g.push(std::move(C), {a, b}, [a, b, m, n, broadcast](Graph& g, std::uint32_t self) {
    const Tensor& dC = *g.grad_if_any(self);
    if (g.requires_grad(a)) {
      Tensor& dA = g.grad(a.id);
      for (std::size_t i = 0; i < dC.size(); ++i) dA.data[i] += dC.data[i];
    }
    if (g.requires_grad(b)) {
      Tensor& dB = g.grad(b.id);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dB.data[broadcast ? j : i * n + j] += dC.data[i * n + j];
    }
  });
}

Var sub(Graph& g, Var a, Var b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) mismatch("sub", A.shape, B.shape);
  Tensor C(mat(A.rows(), A.cols()));
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] = A.data[i] - B.data[i];
  return g.push(std::move(C), {a, b}, [a, b](Graph& g, std::uint32_t self) {
    const Tensor& dC = *g.grad_if_any(self);
    if (g.requires_grad(a)) {
      Tensor& dA = g.grad(a.id);
      for (std::size_t i = 0; i < dC.size(); ++i) dA.data[i] += dC.data[i];
    }
    if (g.requires_grad(b)) {
      Tensor& dB = g.grad(b.id);
      for (std::size_t i = 0; i < dC.size(); ++i) dB.data[i] -= dC.data[i];
    }
  });
}

Var mul(Graph& g, Var a, Var b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) mismatch("mul", A.shape, B.shape);
  Tensor C(mat(A.rows(), A.cols()));
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] = A.data[i] * B.data[i];
  return g.push(std::move(C), {a, b}, [a, b](Graph& g, std::uint32_t self) {
    const Tensor& dC = *g.grad_if_any(self);
    const Tensor& A = g.value(a);
    const Tensor& B = g.value(b);
    if (g.requires_grad(a)) {
      Tensor& dA = g.grad(a.id);
      for (std::size_t i = 0; i < dC.size(); ++i) dA.data[i] += dC.data[i] * B.data[i];
    }
    if (g.requires_grad(b)) {
      Tensor& dB = g.grad(b.id);
      for (std::size_t i = 0; i < dC.size(); ++i) dB.data[i] += dC.data[i] * A.data[i];
    }
  });
}

Var scale(Graph& g, Var a, double s) {
  const Tensor& A = g.value(a);
  Tensor C(mat(A.rows(), A.cols()));
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] = A.data[i] * s;
  return g.push(std::move(C), {a}, [a, s](Graph& g, std::uint32_t self) {
    const Tensor& dC = *g.grad_if_any(self);
    Tensor& dA = g.grad(a.id);
    for (std::size_t i = 0; i < dC.size(); ++i) dA.data[i] += dC.data[i] * s;
  });
}

Var concat(Graph& g, const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeMismatch("concat: no inputs");
  if (axis > 1) throw ShapeMismatch("concat: axis must be 0 or 1");
  const Tensor& first = g.value(parts[0]);
  std::size_t rows = 0, cols = 0;
  for (Var v : parts) {
    const Tensor& P = g.value(v);
    if (axis == 0) {
      if (P.cols() != first.cols()) mismatch("concat", first.shape, P.shape);
      rows += P.rows();
      cols = P.cols();
    } else {
      if (P.rows() != first.rows()) mismatch("concat", first.shape, P.shape);
      cols += P.cols();
      rows = P.rows();
    }
  }
  Tensor C(mat(rows, cols));
  std::size_t offset = 0;
  for (Var v : parts) {
    const Tensor& P = g.value(v);
    const std::size_t pr = P.rows(), pc = P.cols();
    if (axis == 0) {
      std::copy(P.data.begin(), P.data.end(), C.data.begin() + static_cast<std::ptrdiff_t>(offset * cols));
      offset += pr;
    } else {
      for (std::size_t i = 0; i < pr; ++i)
        std::copy_n(&P.data[i * pc], pc, &C.data[i * cols + offset]);
      offset += pc;
    }
  }
  return g.push(std::move(C), std::span<const Var>(parts), [parts, axis, cols](Graph& g, std::uint32_t self) {
    const Tensor& dC = *g.grad_if_any(self);
    std::size_t offset = 0;
    for (Var v : parts) {
      const Tensor& P = g.value(v);
      const std::size_t pr = P.rows(), pc = P.cols();
      if (g.requires_grad(v)) {
        Tensor& dP = g.grad(v.id);
        for (std::size_t i = 0; i < pr; ++i)
          for (std::size_t j = 0; j < pc; ++j)
            dP.data[i * pc + j] += axis == 0 ? dC.data[(offset + i) * cols + j] : dC.data[i * cols + offset + j];
      }
      offset += axis == 0 ? pr : pc;
    }
  });
}

Var slice(Graph& g, Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Tensor& A = g.value(a);
  const std::size_t m = A.rows(), n = A.cols();
  if (axis > 1 || begin >= end || end > (axis == 0 ? m : n))
    throw ShapeMismatch("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                        ") on axis " + std::to_string(axis) + " of " + A.shape.str());
  const std::size_t r = axis == 0 ? end - begin : m;
  const std::size_t c = axis == 1 ? end - begin : n;
  Tensor C(mat(r, c));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      C.data[i * c + j] = axis == 0 ? A.data[(begin + i) * n + j] : A.data[i * n + begin + j];
  return g.push(std::move(C), {a}, [a, axis, begin, r, c, n](Graph& g, std::uint32_t self) {
    const Tensor& dC = *g.grad_if_any(self);
    Tensor& dA = g.grad(a.id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t idx = axis == 0 ? (begin + i) * n + j : i * n + begin + j;
        dA.data[idx] += dC.data[i * c + j];
      }
  });
}

Var transpose(Graph& g, Var a) {
  const Tensor& A = g.value(a);
  const std::size_t m = A.rows(), n = A.cols();
  Tensor C(mat(n, m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) C.data[j * m + i] = A.data[i * n + j];
  return g.push(std::move(C), {a}, [a, m, n](Graph& g, std::uint32_t self) {
    const Tensor& dC = *g.grad_if_any(self);
    Tensor& dA = g.grad(a.id);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dA.data[i * n + j] += dC.data[j * m + i];
  });
}

Var tanh(Graph& g, Var a) {
  return elementwise(
      g, a, [](double x) { return std::tanh(x); }, [](double y) { return 1.0 - y * y; });
}

Var sigmoid(Graph& g, Var a) {
  return elementwise(g, a, sigmoid_scalar, [](double y) { return y * (1.0 - y); });
}

Var relu(Graph& g, Var a) {
  return elementwise(
      g, a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double y) { return y > 0.0 ? 1.0 : 0.0; });
}

Var softmax(Graph& g, Var a) {
  const Tensor& A = g.value(a);
  const std::size_t m = A.rows(), n = A.cols();
  Tensor C(mat(m, n));
  for (std::size_t i = 0; i < m; ++i) softmax_row(&A.data[i * n], &C.data[i * n], n);
  return g.push(std::move(C), {a}, [a, m, n](Graph& g, std::uint32_t self) {
    const Tensor& dy = *g.grad_if_any(self);
    const Tensor& y = g.value(Var{self});
    Tensor& dx = g.grad(a.id);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += dy.data[i * n + j] * y.data[i * n + j];
      for (std::size_t j = 0; j < n; ++j) dx.data[i * n + j] += y.data[i * n + j] * (dy.data[i * n + j] - dot);
    }
  });
}

Var log_softmax(Graph& g, Var a) {
  const Tensor& A = g.value(a);
  const std::size_t m = A.rows(), n = A.cols();
  Tensor C(mat(m, n));
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = &A.data[i * n];
    double mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(x[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) C.data[i * n + j] = x[j] - lse;
  }
  return g.push(std::move(C), {a}, [a, m, n](Graph& g, std::uint32_t self) {
    const Tensor& dy = *g.grad_if_any(self);
    const Tensor& y = g.value(Var{self});
    Tensor& dx = g.grad(a.id);
    for (std::size_t i = 0; i < m; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) total += dy.data[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        dx.data[i * n + j] += dy.data[i * n + j] - std::exp(y.data[i * n + j]) * total;
    }
  });
}

Var embed_lookup(Graph& g, Var table, std::span<const std::int32_t> ids) {
  const Tensor& E = g.value(table);
  const std::size_t v = E.rows(), d = E.cols();
  if (ids.empty()) throw ShapeMismatch("embed_lookup: empty id sequence");
  Tensor C(mat(ids.size(), d));
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= v)
      throw ShapeMismatch("embed_lookup: id " + std::to_string(ids[t]) + " outside table " + E.shape.str());
    std::copy_n(&E.data[static_cast<std::size_t>(ids[t]) * d], d, &C.data[t * d]);
  }
  std::vector<std::int32_t> kept(ids.begin(), ids.end());
  return g.push(std::move(C), {table}, [table, kept = std::move(kept), d](Graph& g, std::uint32_t self) {
    const Tensor& dC = *g.grad_if_any(self);
    Tensor& dE = g.grad(table.id);
    for (std::size_t t = 0; t < kept.size(); ++t) {
      double* row = &dE.data[static_cast<std::size_t>(kept[t]) * d];
      for (std::size_t j = 0; j < d; ++j) row[j] += dC.data[t * d + j];
    }
  });
}

Var mean_over_axis(Graph& g, Var a, std::size_t axis) {
  const Tensor& A = g.value(a);
  const std::size_t m = A.rows(), n = A.cols();
  if (axis > 1) throw ShapeMismatch("mean_over_axis: axis must be 0 or 1");
  Tensor C(axis == 0 ? mat(1, n) : mat(m, 1));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) C.data[axis == 0 ? j : i] += A.data[i * n + j];
  const double inv = 1.0 / static_cast<double>(axis == 0 ? m : n);
  for (double& x : C.data) x *= inv;
  return g.push(std::move(C), {a}, [a, axis, m, n, inv](Graph& g, std::uint32_t self) {
    const Tensor& dC = *g.grad_if_any(self);
    Tensor& dA = g.grad(a.id);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dA.data[i * n + j] += dC.data[axis == 0 ? j : i] * inv;
  });
}

Var sum(Graph& g, Var a) {
  const Tensor& A = g.value(a);
  double total = 0.0;
  for (double x : A.data) total += x;
  return g.push(Tensor(mat(1, 1), {total}), {a}, [a](Graph& g, std::uint32_t self) {
    const double d = g.grad_if_any(self)->data[0];
    Tensor& dA = g.grad(a.id);
    for (double& x : dA.data) x += d;
  });
}

Var layer_norm(Graph& g, Var a, Var gain, Var bias, double eps) {
  const Tensor& A = g.value(a);
  const Tensor& G = g.value(gain);
  const Tensor& B = g.value(bias);
  const std::size_t m = A.rows(), n = A.cols();
  if (G.size() != n || B.size() != n) mismatch("layer_norm", A.shape, G.shape);
  Tensor C(mat(m, n));
  std::vector<double> xhat(m * n), inv(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = &A.data[i * n];
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(n);
    inv[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (x[j] - mu) * inv[i];
      C.data[i * n + j] = xhat[i * n + j] * G.data[j] + B.data[j];
    }
  }
  return g.push(std::move(C), {a, gain, bias},
                [a, gain, bias, m, n, xhat = std::move(xhat), inv = std::move(inv)](Graph& g, std::uint32_t self) {
    const Tensor& dy = *g.grad_if_any(self);
    const Tensor& G = g.value(gain);
    if (g.requires_grad(gain)) {
      Tensor& dG = g.grad(gain.id);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dG.data[j] += dy.data[i * n + j] * xhat[i * n + j];
    }
    if (g.requires_grad(bias)) {
      Tensor& dB = g.grad(bias.id);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dB.data[j] += dy.data[i * n + j];
    }
    if (g.requires_grad(a)) {
      Tensor& dA = g.grad(a.id);
      const double nn = static_cast<double>(n);
      for (std::size_t i = 0; i < m; ++i) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double dxh = dy.data[i * n + j] * G.data[j];
          s1 += dxh;
          s2 += dxh * xhat[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) {
          const double dxh = dy.data[i * n + j] * G.data[j];
          dA.data[i * n + j] += inv[i] / nn * (nn * dxh - s1 - xhat[i * n + j] * s2);
        }
      }
    }
  });
}

Var lstm_cell(Graph& g, Var gates, Var c_prev) {
  const Tensor& Z = g.value(gates);
  const Tensor& Cp = g.value(c_prev);
  const std::size_t r = Z.rows(), h = Cp.cols();
  if (Z.cols() != 4 * h || Cp.rows() != r) mismatch("lstm_cell", Z.shape, Cp.shape);
  Tensor out(mat(r, 2 * h));
  for (std::size_t k = 0; k < r; ++k) {
    const double* z = &Z.data[k * 4 * h];
    for (std::size_t j = 0; j < h; ++j) {
      const double i = sigmoid_scalar(z[j]);
      const double f = sigmoid_scalar(z[h + j]);
      const double gg = std::tanh(z[2 * h + j]);
      const double o = sigmoid_scalar(z[3 * h + j]);
      const double c = f * Cp.data[k * h + j] + i * gg;
      out.data[k * 2 * h + j] = o * std::tanh(c);
      out.data[k * 2 * h + h + j] = c;
    }
  }
  return g.push(std::move(out), {gates, c_prev}, [gates, c_prev, r, h](Graph& g, std::uint32_t self) {
    const Tensor& dOut = *g.grad_if_any(self);
    const Tensor& Z = g.value(gates);
    const Tensor& Cp = g.value(c_prev);
    const Tensor& Out = g.value(Var{self});
    Tensor* dZ = g.requires_grad(gates) ? &g.grad(gates.id) : nullptr;
    Tensor* dCp = g.requires_grad(c_prev) ? &g.grad(c_prev.id) : nullptr;
    for (std::size_t k = 0; k < r; ++k) {
      const double* z = &Z.data[k * 4 * h];
      for (std::size_t j = 0; j < h; ++j) {
        const double i = sigmoid_scalar(z[j]);
        const double f = sigmoid_scalar(z[h + j]);
        const double gg = std::tanh(z[2 * h + j]);
        const double o = sigmoid_scalar(z[3 * h + j]);
        const double c = Out.data[k * 2 * h + h + j];
        const double tc = std::tanh(c);
        const double dh = dOut.data[k * 2 * h + j];
        const double dc = dOut.data[k * 2 * h + h + j] + dh * o * (1.0 - tc * tc);
        if (dZ) {
          double* dz = &dZ->data[k * 4 * h];
          dz[j] += dc * gg * i * (1.0 - i);
          dz[h + j] += dc * Cp.data[k * h + j] * f * (1.0 - f);
          dz[2 * h + j] += dc * i * (1.0 - gg * gg);
          dz[3 * h + j] += dh * tc * o * (1.0 - o);
        }
        if (dCp) dCp->data[k * h + j] += dc * f;
      }
    }
  });
}

Var cross_entropy(Graph& g, Var logits, std::span<const std::int32_t> targets) {
  const Tensor& L = g.value(logits);
  const std::size_t m = L.rows(), n = L.cols();
  if (targets.size() != m)
    throw ShapeMismatch("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " + L.shape.str());
  std::vector<double> p(m * n);
  std::vector<char> clamped(m, 0);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= n)
      throw ShapeMismatch("cross_entropy: target " + std::to_string(targets[i]) + " outside " + L.shape.str());
    softmax_row(&L.data[i * n], &p[i * n], n);
    const double pt = p[i * n + static_cast<std::size_t>(targets[i])];
    if (pt < kProbClamp) clamped[i] = 1;
    loss -= std::log(std::max(pt, kProbClamp));
  }
  std::vector<std::int32_t> tg(targets.begin(), targets.end());
  return g.push(Tensor(mat(1, 1), {loss}), {logits},
                [logits, m, n, p = std::move(p), clamped = std::move(clamped), tg = std::move(tg)](Graph& g,
                                                                                                   std::uint32_t self) {
    const double d = g.grad_if_any(self)->data[0];
    Tensor& dL = g.grad(logits.id);
    for (std::size_t i = 0; i < m; ++i) {
      if (clamped[i]) continue;  // the clamp is flat, so no gradient flows
      for (std::size_t j = 0; j < n; ++j) dL.data[i * n + j] += d * p[i * n + j];
      dL.data[i * n + static_cast<std::size_t>(tg[i])] -= d;
    }
  });
}

Var bce_with_logits(Graph& g, Var logits, const Tensor& targets) {
  const Tensor& Z = g.value(logits);
  if (Z.size() != targets.size()) mismatch("bce_with_logits", Z.shape, targets.shape);
  double loss = 0.0;
  for (std::size_t i = 0; i < Z.size(); ++i) {
    const double z = Z.data[i], y = targets.data[i];
    loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  return g.push(Tensor(mat(1, 1), {loss}), {logits}, [logits, y = targets.data](Graph& g, std::uint32_t self) {
    const double d = g.grad_if_any(self)->data[0];
    const Tensor& Z = g.value(logits);
    Tensor& dZ = g.grad(logits.id);
    for (std::size_t i = 0; i < Z.size(); ++i) dZ.data[i] += d * (sigmoid_scalar(Z.data[i]) - y[i]);
  });
}

std::vector<TokenPrediction> predictions_from_logits(const Tensor& logits,
                                                     std::span<const std::int32_t> targets) {
  const std::size_t m = logits.rows(), n = logits.cols();
  if (!targets.empty() && targets.size() != m)
    throw ShapeMismatch("predictions_from_logits: target count does not match " + logits.shape.str());
  std::vector<TokenPrediction> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    TokenPrediction& tp = out[i];
    tp.logits.assign(logits.data.begin() + static_cast<std::ptrdiff_t>(i * n),
                     logits.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    tp.p.resize(n);
    softmax_row(tp.logits.data(), tp.p.data(), n);
    tp.predicted = static_cast<std::int32_t>(std::max_element(tp.p.begin(), tp.p.end()) - tp.p.begin());
    if (!targets.empty()) tp.target = targets[i];
  }
  return out;
}

double cross_entropy(std::span<const TokenPrediction> predictions, std::span<const std::int32_t> targets) {
  if (predictions.size() != targets.size())
    throw ShapeMismatch("cross_entropy: " + std::to_string(predictions.size()) + " predictions vs " +
                        std::to_string(targets.size()) + " targets");
  double loss = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto& p = predictions[t].p;
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= p.size())
      throw ShapeMismatch("cross_entropy: target outside distribution");
    loss -= std::log(std::clamp(p[static_cast<std::size_t>(targets[t])], kProbClamp, 1.0));
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Optimization

void adam_step(AdamState& st, ParameterSet& params) {
  for (std::size_t k = 0; k < params.size(); ++k)
    if (!params[k].grad.all_finite())
      throw NonFiniteGradient("non-finite gradient in parameter '" + params[k].name + "'");
  if (st.m.size() != params.size()) {
    st.m.clear();
    st.v.clear();
    for (std::size_t k = 0; k < params.size(); ++k) {
      st.m.emplace_back(params[k].value.shape);
      st.v.emplace_back(params[k].value.shape);
    }
  }
  ++st.t;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = params[k];
    auto& m = st.m[k].data;
    auto& v = st.v[k].data;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double gi = p.grad.data[i];
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * gi;
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * gi * gi;
      p.value.data[i] -= st.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + st.eps);
    }
  }
}

double clip_grad_norm(ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k)
    for (double x : params[k].grad.data) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && std::isfinite(norm)) {
    const double s = max_norm / norm;
    for (std::size_t k = 0; k < params.size(); ++k)
      for (double& x : params[k].grad.data) x *= s;
  }
  return norm;
}

GradCheckReport gradient_check(const std::function<Var(Graph&)>& build, ParameterSet& params, double h) {
  params.zero_grad();
  {
    Graph g(true);
    g.backward(build(g));
  }
  std::vector<Tensor> analytic;
  for (std::size_t k = 0; k < params.size(); ++k) analytic.push_back(params[k].grad);

  auto eval = [&] {
    Graph g(false);
    return g.value(build(g)).item();
  };
  GradCheckReport rep;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = params[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value.data[i];
      p.value.data[i] = saved + h;
      const double fp = eval();
      p.value.data[i] = saved - h;
      const double fm = eval();
      p.value.data[i] = saved;
      const double num = (fp - fm) / (2.0 * h);
      const double an = analytic[k].data[i];
      const double rel = std::abs(an - num) / std::max(1e-8, std::abs(an) + std::abs(num));
      ++rep.checked;
      if (rel > rep.max_rel_error || rep.checked == 1) {
        rep.max_rel_error = std::max(rep.max_rel_error, rel);
        rep.worst_param = p.name;
        rep.worst_index = i;
        rep.analytic = an;
        rep.numeric = num;
      }
    }
  }
  return rep;
}

DirectionalCheckReport directional_gradient_check(const std::function<Var(Graph&)>& build, ParameterSet& params,
                                                  std::size_t draws, std::uint64_t seed, double h,
                                                  const std::string& only) {
  params.zero_grad();
  {
    Graph g(true);
    g.backward(build(g));
  }
  std::vector<std::size_t> chosen;
  for (std::size_t k = 0; k < params.size(); ++k)
    if (only.empty() || params[k].name == only) chosen.push_back(k);
  if (chosen.empty()) throw ShapeMismatch("no parameter named '" + only + "'");

  auto eval = [&] {
    Graph g(false);
    return g.value(build(g)).item();
  };
  Rng rng(seed);
  DirectionalCheckReport rep;
  for (std::size_t d = 0; d < draws; ++d) {
    std::vector<std::vector<double>> dir;
    double norm = 0.0;
    for (std::size_t k : chosen) {
      dir.emplace_back(params[k].value.size());
      for (double& x : dir.back()) {
        x = rng.normal();
        norm += x * x;
      }
    }
    norm = std::sqrt(norm);
    double an = 0.0;
    for (std::size_t j = 0; j < chosen.size(); ++j) {
      const Parameter& p = params[chosen[j]];
      for (std::size_t i = 0; i < dir[j].size(); ++i) {
        dir[j][i] /= norm;
        an += p.grad.data[i] * dir[j][i];
      }
    }
    std::vector<std::vector<double>> saved;
    for (std::size_t k : chosen) saved.push_back(params[k].value.data);
    auto shift = [&](double step) {
      for (std::size_t j = 0; j < chosen.size(); ++j) {
        auto& v = params[chosen[j]].value.data;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = saved[j][i] + step * dir[j][i];
      }
    };
    shift(h);
    const double fp = eval();
    shift(-h);
    const double fm = eval();
    for (std::size_t j = 0; j < chosen.size(); ++j) params[chosen[j]].value.data = saved[j];
    const double num = (fp - fm) / (2.0 * h);
    const double rel = std::abs(an - num) / std::max(1e-8, std::abs(an) + std::abs(num));
    ++rep.draws;
    if (rel > rep.max_rel_error || rep.draws == 1) {
      rep.max_rel_error = std::max(rep.max_rel_error, rel);
      rep.worst_draw = d;
      rep.analytic = an;
      rep.numeric = num;
    }
  }
  return rep;
}

Tensor uniform_init(Shape s, double bound, Rng& rng) {
  Tensor t(s);
  for (double& x : t.data) x = rng.uniform(-bound, bound);
  return t;
}

Tensor normal_init(Shape s, double stddev, Rng& rng) {
  Tensor t(s);
  for (double& x : t.data) x = stddev * rng.normal();
  return t;
}

} // namespace dialprobe::tensor
