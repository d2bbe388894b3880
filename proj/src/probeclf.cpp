#include "dialprobe/probeclf.hpp"

#include "dialprobe/errors.hpp"
#include "dialprobe/parallel.hpp"
#include "dialprobe/util.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <tuple>

namespace dialprobe::probeclf {

std::string_view to_string(ProbeKind k) { return k == ProbeKind::Linear ? "linear" : "mlp"; }

ProbeKind parse_probe_kind(std::string_view name) {
  if (name == "linear") return ProbeKind::Linear;
  if (name == "mlp") return ProbeKind::Mlp;
  throw UsageError("unknown probe '" + std::string(name) + "' (expected linear or mlp)");
}

Standardizer Standardizer::fit(const Matrix& x) {
  Standardizer s;
  if (x.empty()) return s;
  const std::size_t d = x[0].size();
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 1.0);
  for (const auto& r : x)
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
  for (double& m : s.mean) m /= static_cast<double>(x.size());
  std::vector<double> var(d, 0.0);
  for (const auto& r : x)
    for (std::size_t j = 0; j < d; ++j) var[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(x.size()));
    s.scale[j] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

std::vector<double> Standardizer::apply(const std::vector<double>& row) const {
  if (mean.empty()) return row;
  if (row.size() != mean.size())
    throw ShapeMismatch("row width " + std::to_string(row.size()) + " vs " + std::to_string(mean.size()));
  std::vector<double> out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - mean[j]) / scale[j];
  return out;
}

// ---------------------------------------------------------------------------
// L-BFGS

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

} // namespace

LbfgsReport minimize_lbfgs(const Objective& f, std::vector<double>& x, const LbfgsOptions& opt) {
  constexpr double c1 = 1e-4;
  const std::size_t n = x.size();
  std::vector<double> g(n), g_new(n), x_new(n), d(n);
  double fx = f(x, g);
  LbfgsReport rep;
  rep.trace.push_back(fx);
  std::deque<std::vector<double>> S, Y;
  std::deque<double> rho;

  while (rep.iterations < opt.max_iter && inf_norm(g) > opt.tol) {
    // Two-loop recursion for d = -H g.
    d = g;
    std::vector<double> alpha(S.size());
    for (std::size_t i = S.size(); i-- > 0;) {
      alpha[i] = rho[i] * dot(S[i], d);
      for (std::size_t j = 0; j < n; ++j) d[j] -= alpha[i] * Y[i][j];
    }
    const double gamma = S.empty() ? 1.0 / std::max(1.0, std::sqrt(dot(g, g))) : dot(S.back(), Y.back()) / dot(Y.back(), Y.back());
    for (double& v : d) v *= gamma;
    for (std::size_t i = 0; i < S.size(); ++i) {
      const double beta = rho[i] * dot(Y[i], d);
      for (std::size_t j = 0; j < n; ++j) d[j] += (alpha[i] - beta) * S[i][j];
    }
    for (double& v : d) v = -v;
    double slope = dot(g, d);
    if (!(slope < 0.0)) {
      S.clear();
      Y.clear();
      rho.clear();
      const double scale = 1.0 / std::max(1.0, std::sqrt(dot(g, g)));
      for (std::size_t j = 0; j < n; ++j) d[j] = -scale * g[j];
      slope = dot(g, d);
    }

    double step = 1.0;
    double f_new = 0.0;
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      for (std::size_t j = 0; j < n; ++j) x_new[j] = x[j] + step * d[j];
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= fx + c1 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    std::vector<double> s(n), y(n);
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = x_new[j] - x[j];
      y[j] = g_new[j] - g[j];
    }
    const double sy = dot(s, y);
    if (sy > 1e-12) {
      S.push_back(std::move(s));
      Y.push_back(std::move(y));
      rho.push_back(1.0 / sy);
      if (S.size() > opt.history) {
        S.pop_front();
        Y.pop_front();
        rho.pop_front();
      }
    }
    x.swap(x_new);
    g.swap(g_new);
    fx = f_new;
    rep.trace.push_back(fx);
    ++rep.iterations;
  }
  rep.loss = fx;
  rep.grad_inf_norm = inf_norm(g);
  rep.converged = rep.grad_inf_norm <= opt.tol;
  return rep;
}

// ---------------------------------------------------------------------------
// Linear objectives

double multinomial_objective(const Matrix& x, const std::vector<std::size_t>& y, std::size_t k,
                             const std::vector<double>& w, double C, std::vector<double>* grad) {
  const std::size_t n = x.size();
  const std::size_t d = n == 0 ? 0 : x[0].size();
  const std::size_t stride = d + 1;
  if (w.size() != k * stride) throw ShapeMismatch("weight vector has the wrong size");
  if (grad) grad->assign(w.size(), 0.0);
  double loss = 0.0;
  std::vector<double> z(k);
  for (std::size_t i = 0; i < n; ++i) {
    double zmax = -INFINITY;
    for (std::size_t c = 0; c < k; ++c) {
      const double* wc = &w[c * stride];
      double s = wc[d];
      for (std::size_t j = 0; j < d; ++j) s += wc[j] * x[i][j];
      z[c] = s;
      zmax = std::max(zmax, s);
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) sum += std::exp(z[c] - zmax);
    const double lse = zmax + std::log(sum);
    loss += lse - z[y[i]];
    if (grad) {
      for (std::size_t c = 0; c < k; ++c) {
        const double coef = std::exp(z[c] - lse) - (c == y[i] ? 1.0 : 0.0);
        double* gc = &(*grad)[c * stride];
        for (std::size_t j = 0; j < d; ++j) gc[j] += coef * x[i][j];
        gc[d] += coef;
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(std::max<std::size_t>(1, n));
  const double reg = inv_n / C;
  double penalty = 0.0;
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < d; ++j) penalty += w[c * stride + j] * w[c * stride + j];
  if (grad) {
    for (double& v : *grad) v *= inv_n;
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t j = 0; j < d; ++j) (*grad)[c * stride + j] += reg * w[c * stride + j];
  }
  return loss * inv_n + 0.5 * reg * penalty;
}

namespace {

double binary_objective(const Matrix& x, const std::vector<char>& t, const std::vector<double>& w, double C,
                        std::vector<double>& grad) {
  const std::size_t n = x.size(), d = x[0].size();
  grad.assign(d + 1, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = w[d];
    for (std::size_t j = 0; j < d; ++j) z += w[j] * x[i][j];
    // log(1 + e^z) - t z, computed stably
    loss += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - (t[i] ? z : 0.0);
    const double p = 1.0 / (1.0 + std::exp(-z));
    const double coef = p - (t[i] ? 1.0 : 0.0);
    for (std::size_t j = 0; j < d; ++j) grad[j] += coef * x[i][j];
    grad[d] += coef;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  const double reg = inv_n / C;
  double penalty = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    penalty += w[j] * w[j];
    grad[j] = grad[j] * inv_n + reg * w[j];
  }
  grad[d] *= inv_n;
  return loss * inv_n + 0.5 * reg * penalty;
}

Matrix standardized(const FittedProbe& p, const Matrix& x) {
  if (!p.standardize) return x;
  Matrix out;
  out.reserve(x.size());
  for (const auto& r : x) out.push_back(p.standardizer.apply(r));
  return out;
}

void fit_linear(FittedProbe& p, const Matrix& x, const std::vector<LabelIndices>& y, const LinearOptions& opt) {
  const std::size_t d = x[0].size();
  if (p.label_kind != LabelKind::MultiLabel) {
    const std::size_t k = p.classes.size();
    std::vector<std::size_t> compact(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
      compact[i] = static_cast<std::size_t>(std::lower_bound(p.classes.begin(), p.classes.end(), y[i][0]) -
                                            p.classes.begin());
    std::vector<double> w(k * (d + 1), 0.0);
    auto rep = minimize_lbfgs(
        [&](const std::vector<double>& v, std::vector<double>& g) {
          return multinomial_objective(x, compact, k, v, opt.C, &g);
        },
        w, opt.lbfgs);
    p.reports.push_back(rep);
    p.weights.assign(k, std::vector<double>(d + 1));
    for (std::size_t c = 0; c < k; ++c)
      std::copy(w.begin() + static_cast<std::ptrdiff_t>(c * (d + 1)),
                w.begin() + static_cast<std::ptrdiff_t>((c + 1) * (d + 1)), p.weights[c].begin());
    return;
  }
  p.weights.assign(p.n_classes, std::vector<double>(d + 1, 0.0));
  p.head_constant.assign(p.n_classes, -1);
  std::vector<char> t(x.size());
  for (std::size_t c = 0; c < p.n_classes; ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      t[i] = std::binary_search(y[i].begin(), y[i].end(), c) ? 1 : 0;
      pos += static_cast<std::size_t>(t[i]);
    }
    if (pos == 0 || pos == y.size()) {
      p.head_constant[c] = pos == 0 ? 0 : 1;
      continue;
    }
    auto rep = minimize_lbfgs(
        [&](const std::vector<double>& v, std::vector<double>& g) { return binary_objective(x, t, v, opt.C, g); },
        p.weights[c], opt.lbfgs);
    p.reports.push_back(rep);
  }
}

// ---------------------------------------------------------------------------
// MLP

struct MlpPass {
  std::vector<double> h;    // [B x H] post-ReLU
  std::vector<double> out;  // [B x O] probabilities
};

void mlp_forward(const FittedProbe& p, const Matrix& x, const std::vector<std::size_t>& rows, MlpPass& pass) {
  const std::size_t B = rows.size(), D = p.width, H = p.hidden, O = p.outputs;
  pass.h.assign(B * H, 0.0);
  pass.out.assign(B * O, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    const auto& xi = x[rows[b]];
    double* hb = &pass.h[b * H];
    for (std::size_t k = 0; k < H; ++k) hb[k] = p.b1[k];
    for (std::size_t j = 0; j < D; ++j) {
      const double v = xi[j];
      const double* w = &p.w1[j * H];
      for (std::size_t k = 0; k < H; ++k) hb[k] += v * w[k];
    }
    for (std::size_t k = 0; k < H; ++k) hb[k] = std::max(0.0, hb[k]);
    double* ob = &pass.out[b * O];
    for (std::size_t o = 0; o < O; ++o) ob[o] = p.b2[o];
    for (std::size_t k = 0; k < H; ++k) {
      const double v = hb[k];
      if (v == 0.0) continue;
      const double* w = &p.w2[k * O];
      for (std::size_t o = 0; o < O; ++o) ob[o] += v * w[o];
    }
    if (p.label_kind == LabelKind::MultiLabel) {
      for (std::size_t o = 0; o < O; ++o) ob[o] = 1.0 / (1.0 + std::exp(-ob[o]));
    } else {
      const double m = *std::max_element(ob, ob + O);
      double s = 0.0;
      for (std::size_t o = 0; o < O; ++o) s += (ob[o] = std::exp(ob[o] - m));
      for (std::size_t o = 0; o < O; ++o) ob[o] /= s;
    }
  }
}

void fit_mlp(FittedProbe& p, const Matrix& x, const std::vector<LabelIndices>& y, const MlpOptions& opt) {
  const std::size_t n = x.size();
  const std::size_t D = x[0].size(), H = opt.hidden;
  const std::size_t O = p.label_kind == LabelKind::MultiLabel ? p.n_classes : p.classes.size();
  p.width = D;
  p.hidden = H;
  p.outputs = O;
  Rng rng(sub_seed(opt.seed, "mlp-probe"));
  auto init = [&](std::vector<double>& w, std::size_t fan_in, std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    w.resize(fan_in * fan_out);
    for (double& v : w) v = rng.uniform(-bound, bound);
  };
  init(p.w1, D, H);
  init(p.b1, 1, H);
  init(p.w2, H, O);
  init(p.b2, 1, O);

  // Targets as dense rows.
  std::vector<double> target(n * O, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (p.label_kind == LabelKind::MultiLabel) {
      for (std::size_t c : y[i]) target[i * O + c] = 1.0;
    } else {
      const auto col = std::lower_bound(p.classes.begin(), p.classes.end(), y[i][0]) - p.classes.begin();
      target[i * O + static_cast<std::size_t>(col)] = 1.0;
    }
  }

  std::vector<std::vector<double>*> params = {&p.w1, &p.b1, &p.w2, &p.b2};
  std::vector<std::vector<double>> m(4), v(4), g(4);
  for (std::size_t k = 0; k < 4; ++k) {
    m[k].assign(params[k]->size(), 0.0);
    v[k].assign(params[k]->size(), 0.0);
  }
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::int64_t t = 0;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  const std::size_t batch = std::max<std::size_t>(1, std::min(opt.batch_size, n));
  double best = INFINITY;
  std::size_t stale = 0;
  MlpPass pass;
  for (std::size_t epoch = 0; epoch < opt.max_epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch)));
      const std::size_t B = rows.size();
      mlp_forward(p, x, rows, pass);
      for (std::size_t k = 0; k < 4; ++k) g[k].assign(params[k]->size(), 0.0);
      std::vector<double> dh(B * H, 0.0);
      double loss = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* tb = &target[rows[b] * O];
        const double* ob = &pass.out[b * O];
        for (std::size_t o = 0; o < O; ++o) {
          const double pr = std::clamp(ob[o], 1e-12, 1.0 - 1e-12);
          if (p.label_kind == LabelKind::MultiLabel) loss -= tb[o] * std::log(pr) + (1.0 - tb[o]) * std::log(1.0 - pr);
          else if (tb[o] > 0.0) loss -= std::log(pr);
          const double delta = (ob[o] - tb[o]) / static_cast<double>(B);
          g[3][o] += delta;
          for (std::size_t k = 0; k < H; ++k) {
            g[2][k * O + o] += pass.h[b * H + k] * delta;
            dh[b * H + k] += p.w2[k * O + o] * delta;
          }
        }
        for (std::size_t k = 0; k < H; ++k) {
          if (pass.h[b * H + k] <= 0.0) continue;
          const double dk = dh[b * H + k];
          g[1][k] += dk;
          for (std::size_t j = 0; j < D; ++j) g[0][j * H + k] += x[rows[b]][j] * dk;
        }
      }
      double sq = 0.0;
      for (double w : p.w1) sq += w * w;
      for (double w : p.w2) sq += w * w;
      loss += 0.5 * opt.alpha * sq;
      const double reg = opt.alpha / static_cast<double>(B);
      for (std::size_t i = 0; i < p.w1.size(); ++i) g[0][i] += reg * p.w1[i];
      for (std::size_t i = 0; i < p.w2.size(); ++i) g[2][i] += reg * p.w2[i];
      epoch_loss += loss;
      ++t;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
      for (std::size_t k = 0; k < 4; ++k) {
        auto& w = *params[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
          m[k][i] = b1 * m[k][i] + (1 - b1) * g[k][i];
          v[k][i] = b2 * v[k][i] + (1 - b2) * g[k][i] * g[k][i];
          w[i] -= opt.lr * (m[k][i] / c1) / (std::sqrt(v[k][i] / c2) + eps);
        }
      }
    }
    epoch_loss /= static_cast<double>(n);
    p.epochs_run = epoch + 1;
    if (epoch_loss > best - opt.tol) {
      if (++stale >= opt.patience) break;
    } else {
      stale = 0;
    }
    best = std::min(best, epoch_loss);
  }
}

} // namespace

FittedProbe fit(ProbeKind kind, const Matrix& x, const std::vector<LabelIndices>& y, LabelKind label_kind,
                std::size_t n_classes, const FitOptions& options) {
  if (x.size() != y.size())
    throw ShapeMismatch(std::to_string(x.size()) + " rows vs " + std::to_string(y.size()) + " labels");
  FittedProbe p;
  p.kind = kind;
  p.label_kind = label_kind;
  p.n_classes = n_classes;
  p.standardize = options.standardize;
  for (const auto& r : x)
    if (!x.empty() && r.size() != x[0].size()) throw ShapeMismatch("ragged embedding rows");
  for (const auto& l : y) {
    if (label_kind != LabelKind::MultiLabel && l.size() != 1)
      throw ShapeMismatch("single-label rows need exactly one class");
    for (std::size_t c : l)
      if (c >= n_classes) throw ShapeMismatch("class " + std::to_string(c) + " outside label space");
  }

  if (label_kind != LabelKind::MultiLabel) {
    std::set<std::size_t> seen;
    for (const auto& l : y) seen.insert(l[0]);
    p.classes.assign(seen.begin(), seen.end());
    if (p.classes.size() < 2) {
      p.degenerate = true;
      p.constant_class = p.classes.empty() ? 0 : p.classes[0];
      return p;
    }
  } else if (x.empty()) {
    p.degenerate = true;
    p.head_constant.assign(n_classes, 0);
    return p;
  }

  if (p.standardize) p.standardizer = Standardizer::fit(x);
  const Matrix xs = standardized(p, x);
  if (kind == ProbeKind::Linear) fit_linear(p, xs, y, options.linear);
  else fit_mlp(p, xs, y, options.mlp);
  return p;
}

std::vector<LabelIndices> predict(const FittedProbe& p, const Matrix& x) {
  std::vector<LabelIndices> out(x.size());
  if (p.degenerate) {
    for (auto& o : out)
      if (p.label_kind != LabelKind::MultiLabel) o = {p.constant_class};
    return out;
  }
  const Matrix xs = standardized(p, x);
  if (p.kind == ProbeKind::Mlp) {
    std::vector<std::size_t> rows(xs.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    MlpPass pass;
    mlp_forward(p, xs, rows, pass);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double* ob = &pass.out[i * p.outputs];
      if (p.label_kind == LabelKind::MultiLabel) {
        for (std::size_t o = 0; o < p.outputs; ++o)
          if (ob[o] > 0.5) out[i].push_back(o);
      } else {
        out[i] = {p.classes[static_cast<std::size_t>(std::max_element(ob, ob + p.outputs) - ob)]};
      }
    }
    return out;
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto& r = xs[i];
    const std::size_t d = r.size();
    auto score = [&](const std::vector<double>& w) {
      double s = w[d];
      for (std::size_t j = 0; j < d; ++j) s += w[j] * r[j];
      return s;
    };
    if (p.label_kind == LabelKind::MultiLabel) {
      for (std::size_t c = 0; c < p.n_classes; ++c) {
        const bool on = p.head_constant[c] >= 0 ? p.head_constant[c] == 1 : score(p.weights[c]) > 0.0;
        if (on) out[i].push_back(c);
      }
    } else {
      std::size_t best = 0;
      double best_score = -INFINITY;
      for (std::size_t c = 0; c < p.classes.size(); ++c) {
        const double s = score(p.weights[c]);
        if (s > best_score) {
          best_score = s;
          best = c;
        }
      }
      out[i] = {p.classes[best]};
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring

double F1Counts::f1() const {
  const long long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

F1Counts micro_counts(const std::vector<LabelIndices>& predictions, const std::vector<LabelIndices>& golds) {
  if (predictions.size() != golds.size())
    throw ShapeMismatch(std::to_string(predictions.size()) + " predictions vs " + std::to_string(golds.size()) +
                        " golds");
  F1Counts c;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const std::set<std::size_t> p(predictions[i].begin(), predictions[i].end());
    const std::set<std::size_t> g(golds[i].begin(), golds[i].end());
    for (std::size_t x : p) (g.count(x) ? c.tp : c.fp) += 1;
    for (std::size_t x : g)
      if (!p.count(x)) ++c.fn;
  }
  return c;
}

double micro_f1(const std::vector<LabelIndices>& predictions, const std::vector<LabelIndices>& golds, LabelKind) {
  return micro_counts(predictions, golds).f1();
}

ProbeResult fit_and_score(const probes::ProbeDataset& ds, ProbeKind kind, const FitOptions& options) {
  const auto probe = fit(kind, ds.train_x, ds.train_y, ds.kind, ds.space.size(), options);
  ProbeResult r;
  r.task = std::string(probes::to_string(ds.task));
  r.n_train = ds.train_x.size();
  r.n_eval = ds.eval_x.size();
  r.degenerate = probe.degenerate;
  r.f1 = micro_f1(predict(probe, ds.eval_x), ds.eval_y, ds.kind);
  return r;
}

void sort_results(std::vector<ProbeResult>& results) {
  std::sort(results.begin(), results.end(), [](const ProbeResult& a, const ProbeResult& b) {
    return std::tie(a.task, a.model, a.seed, a.checkpoint) < std::tie(b.task, b.model, b.seed, b.checkpoint);
  });
}

std::vector<ProbeResult> evaluate(const corpus::Corpus& corpus, const std::vector<models::Checkpoint>& checkpoints,
                                  const std::vector<probes::Task>& tasks, ProbeKind kind,
                                  const EvalOptions& options) {
  for (const auto& ck : checkpoints)
    if (ck.vocab_digest != corpus.vocab.digest())
      throw VocabMismatch("checkpoint " + ck.tag_string() + " of " + std::string(models::to_string(ck.config.kind)) +
                          " was trained on another vocabulary");
  for (auto t : tasks)
    if (!probes::applicable(t, corpus.style))
      throw NotApplicable(std::string(probes::to_string(t)) + " does not apply to this corpus style");

  struct Embedded {
    probes::EmbeddingSet train, valid;
  };
  std::vector<Embedded> emb(checkpoints.size());
  parallel_for(checkpoints.size(), options.workers, [&](std::size_t i) {
    auto model = models::restore(checkpoints[i]);
    emb[i].valid = probes::embed_split(corpus, *model, corpus::Split::Valid, options.probe.max_context);
    if (emb[i].valid.rows.empty()) throw EmptyEvaluationSplit("validation split has no examples");
    emb[i].train = probes::embed_split(corpus, *model, corpus::Split::Train, options.probe.max_context);
  });

  const probes::LabelBuilder builder(corpus, options.probe);
  std::vector<ProbeResult> results(checkpoints.size() * tasks.size());
  parallel_for(results.size(), options.workers, [&](std::size_t job) {
    const std::size_t ci = job / tasks.size(), ti = job % tasks.size();
    const auto ds = probes::build_probe_dataset(builder, tasks[ti], emb[ci].train, emb[ci].valid);
    ProbeResult r = fit_and_score(ds, kind, options.fit);
    r.model = std::string(models::to_string(checkpoints[ci].config.kind));
    r.seed = checkpoints[ci].seed;
    r.checkpoint = checkpoints[ci].tag_string();
    results[job] = std::move(r);
  });
  sort_results(results);
  return results;
}

std::string report_csv(const std::vector<ProbeResult>& results) {
  std::string out = "model,seed,checkpoint,task,f1,n_train,n_eval\n";
  for (const auto& r : results)
    out += r.model + "," + std::to_string(r.seed) + "," + r.checkpoint + "," + r.task + "," + format_double(r.f1) +
           "," + std::to_string(r.n_train) + "," + std::to_string(r.n_eval) + "\n";
  return out;
}

std::vector<ProbeResult> parse_report_csv(std::string_view text) {
  std::vector<ProbeResult> out;
  const auto lines = split(text, '\n');
  if (lines.empty() || trim(lines[0]) != "model,seed,checkpoint,task,f1,n_train,n_eval")
    throw SchemaError("probe report header must be model,seed,checkpoint,task,f1,n_train,n_eval");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string line = trim(lines[i]);
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 7) throw SchemaError("probe report line " + std::to_string(i + 1) + " needs 7 fields");
    ProbeResult r;
    r.model = f[0];
    r.seed = static_cast<std::uint64_t>(parse_int(f[1]));
    r.checkpoint = f[2];
    r.task = f[3];
    r.f1 = parse_double(f[4]);
    r.n_train = static_cast<std::size_t>(parse_int(f[5]));
    r.n_eval = static_cast<std::size_t>(parse_int(f[6]));
    out.push_back(std::move(r));
  }
  return out;
}

} // namespace dialprobe::probeclf
