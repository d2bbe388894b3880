#include <doctest.h>

#include "dialprobe/errors.hpp"
#include "dialprobe/probeclf.hpp"

#include <cmath>

using namespace dialprobe;
using namespace dialprobe::probeclf;

namespace {

// Two Gaussian blobs at +/- offset along every axis.
void blobs(Rng& rng, std::size_t n, std::size_t d, double offset, Matrix& x, std::vector<LabelIndices>& y) {
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % 2;
    std::vector<double> row(d);
    for (auto& v : row) v = rng.normal() + (c ? offset : -offset);
    x.push_back(row);
    y.push_back({c});
  }
}

} // namespace

TEST_CASE("micro f1 hand examples") {
  // a=0 b=1 c=2 d=3
  CHECK(std::abs(micro_f1({{0}, {2, 3}}, {{0, 1}, {2}}, LabelKind::MultiLabel) - 4.0 / 6.0) < 1e-12);
  auto counts = micro_counts({{0}, {2, 3}}, {{0, 1}, {2}});
  CHECK(counts.tp == 2);
  CHECK(counts.fp == 1);
  CHECK(counts.fn == 1);
  CHECK(micro_f1({{1}, {2}}, {{1}, {2}}, LabelKind::MultiClass) == 1.0);
  CHECK(std::abs(micro_f1({{1}, {2}, {2}}, {{1}, {2}, {3}}, LabelKind::MultiClass) - 2.0 / 3.0) < 1e-12);
  CHECK(micro_f1({{}}, {{}}, LabelKind::MultiLabel) == 0.0);
  CHECK_THROWS_AS(micro_f1({{1}}, {}, LabelKind::MultiClass), ShapeMismatch);
}

TEST_CASE("single-label micro f1 equals accuracy") {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.index(30), k = 2 + rng.index(5);
    std::vector<LabelIndices> p, g;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      p.push_back({rng.index(k)});
      g.push_back({rng.index(k)});
      hits += p.back() == g.back();
    }
    CHECK(micro_f1(p, g, LabelKind::MultiClass) == static_cast<double>(hits) / static_cast<double>(n));
    // Order of examples does not matter.
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    std::vector<LabelIndices> p2, g2;
    for (std::size_t i : perm) {
      p2.push_back(p[i]);
      g2.push_back(g[i]);
    }
    CHECK(micro_f1(p2, g2, LabelKind::MultiClass) == micro_f1(p, g, LabelKind::MultiClass));
  }
}

TEST_CASE("lbfgs on a quadratic") {
  std::vector<double> x = {3.0, -4.0};
  auto rep = minimize_lbfgs(
      [](const std::vector<double>& v, std::vector<double>& g) {
        g = {2.0 * (v[0] - 1.0), 20.0 * (v[1] + 2.0)};
        return (v[0] - 1.0) * (v[0] - 1.0) + 10.0 * (v[1] + 2.0) * (v[1] + 2.0);
      },
      x);
  CHECK(rep.converged);
  CHECK(std::abs(x[0] - 1.0) < 1e-4);
  CHECK(std::abs(x[1] + 2.0) < 1e-4);
}

TEST_CASE("linear probe separates blobs") {
  Rng rng(1);
  Matrix xtr, xev;
  std::vector<LabelIndices> ytr, yev;
  blobs(rng, 400, 6, 3.0, xtr, ytr);
  blobs(rng, 400, 6, 3.0, xev, yev);
  for (ProbeKind k : {ProbeKind::Linear, ProbeKind::Mlp}) {
    auto p = fit(k, xtr, ytr, LabelKind::MultiClass, 2);
    CHECK(micro_f1(predict(p, xev), yev, LabelKind::MultiClass) >= 0.99);
  }
  SUBCASE("objective trace and stopping rule") {
    auto p = fit(ProbeKind::Linear, xtr, ytr, LabelKind::MultiClass, 2);
    REQUIRE(p.reports.size() == 1);
    const auto& r = p.reports[0];
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i] <= r.trace[i - 1]);
    CHECK((r.grad_inf_norm <= 1e-4 || r.iterations == 250));
  }
  SUBCASE("scaling the embeddings leaves predictions unchanged") {
    Matrix big = xtr, big_ev = xev;
    for (auto& r : big)
      for (auto& v : r) v *= 37.5;
    for (auto& r : big_ev)
      for (auto& v : r) v *= 37.5;
    auto a = fit(ProbeKind::Linear, xtr, ytr, LabelKind::MultiClass, 2);
    auto b = fit(ProbeKind::Linear, big, ytr, LabelKind::MultiClass, 2);
    CHECK(predict(a, xev) == predict(b, big_ev));
  }
}

TEST_CASE("objective is convex: fits from different starts agree") {
  Rng rng(12);
  Matrix x;
  std::vector<std::size_t> y;
  for (int i = 0; i < 300; ++i) {
    std::vector<double> r(5);
    for (auto& v : r) v = rng.normal();
    x.push_back(r);
    y.push_back((r[0] + 0.5 * rng.normal() > 0 ? 1 : 0) + (r[1] > 0.8 ? 1 : 0));
  }
  auto f = [&](const std::vector<double>& w, std::vector<double>& g) { return multinomial_objective(x, y, 3, w, 1.0, &g); };
  std::vector<double> w0(18, 0.0), w1(18);
  for (auto& v : w1) v = rng.uniform(-3.0, 3.0);
  auto r0 = minimize_lbfgs(f, w0);
  auto r1 = minimize_lbfgs(f, w1);
  CHECK(r0.converged);
  CHECK(r1.converged);
  CHECK(std::abs(r0.loss - r1.loss) < 1e-6);
}

TEST_CASE("shuffled labels score near the majority rate") {
  Rng rng(44);
  auto draw = [&](std::size_t n, Matrix& x, std::vector<LabelIndices>& y) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> r(8);
      for (auto& v : r) v = rng.normal();
      x.push_back(r);
      const double u = rng.uniform();
      y.push_back({u < 0.6 ? 0u : (u < 0.9 ? 1u : 2u)});
    }
  };
  Matrix xtr, xev;
  std::vector<LabelIndices> ytr, yev;
  draw(2000, xtr, ytr);
  draw(2000, xev, yev);
  double majority = 0.0;
  for (const auto& l : yev) majority += l[0] == 0;
  majority /= static_cast<double>(yev.size());
  auto p = fit(ProbeKind::Linear, xtr, ytr, LabelKind::MultiClass, 3);
  CHECK(std::abs(micro_f1(predict(p, xev), yev, LabelKind::MultiClass) - majority) <= 0.05);
}

TEST_CASE("degenerate and multi-label fits") {
  Matrix x = {{1.0, 2.0}, {2.0, 1.0}, {0.5, 0.5}};
  auto one = fit(ProbeKind::Linear, x, {{2}, {2}, {2}}, LabelKind::MultiClass, 4);
  CHECK(one.degenerate);
  CHECK(micro_f1(predict(one, x), {{2}, {2}, {2}}, LabelKind::MultiClass) == 1.0);

  Rng rng(9);
  Matrix xtr, xev;
  std::vector<LabelIndices> ytr, yev;
  auto draw = [&](std::size_t n, Matrix& xs, std::vector<LabelIndices>& ys) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> r(4);
      for (auto& v : r) v = rng.normal();
      LabelIndices l;
      if (r[0] > 0) l.push_back(0);
      if (r[1] > 0) l.push_back(1);
      xs.push_back(r);
      ys.push_back(l);
    }
  };
  draw(500, xtr, ytr);
  draw(500, xev, yev);
  // Label 2 never occurs: its head must stay silent.
  for (ProbeKind k : {ProbeKind::Linear, ProbeKind::Mlp}) {
    auto p = fit(k, xtr, ytr, LabelKind::MultiLabel, 3);
    auto pred = predict(p, xev);
    for (const auto& s : pred) CHECK(std::find(s.begin(), s.end(), 2u) == s.end());
    CHECK(micro_f1(pred, yev, LabelKind::MultiLabel) > 0.9);
  }
  CHECK_THROWS_AS(fit(ProbeKind::Linear, x, {{0}, {1}}, LabelKind::MultiClass, 2), ShapeMismatch);
  CHECK_THROWS_AS(fit(ProbeKind::Linear, x, {{0}, {1}, {5}}, LabelKind::MultiClass, 2), ShapeMismatch);
}

TEST_CASE("report csv round trips fixture values") {
  std::vector<ProbeResult> rs = {{"seq2seq_attn", 1, "untrained", "RecentTopic", 0.1897, 120, 30},
                                 {"seq2seq_attn", 1, "best", "RecentTopic", 0.8991, 120, 30}};
  const std::string csv = report_csv(rs);
  CHECK(csv == "model,seed,checkpoint,task,f1,n_train,n_eval\n"
               "seq2seq_attn,1,untrained,RecentTopic,0.1897,120,30\n"
               "seq2seq_attn,1,best,RecentTopic,0.8991,120,30\n");
  auto back = parse_report_csv(csv);
  REQUIRE(back.size() == 2);
  CHECK(back[0].f1 == 0.1897);
  CHECK(back[1].f1 == 0.8991);
  CHECK(report_csv(back) == csv);
  CHECK_THROWS_AS(parse_report_csv("model,f1\n"), SchemaError);
}

TEST_CASE("evaluate covers every checkpoint and task deterministically") {
  corpus::SynthConfig sc;
  sc.n_dialogues = 40;
  auto c = corpus::synthesize_corpus(2, sc).corpus;
  auto cfg = models::preset(models::Kind::Seq2SeqAttn, "tiny", c.vocab.size());
  std::vector<models::Checkpoint> cks;
  for (auto tag : {models::Tag::Untrained, models::Tag::LastEpoch, models::Tag::BestMetric}) {
    auto m = models::make_model(cfg, 3 + cks.size());
    cks.push_back(models::snapshot(*m, tag, cks.size(), 3, c.vocab.digest()));
  }
  const auto tasks = probes::tasks_for(c.style);
  EvalOptions opt;
  opt.workers = 2;
  auto a = evaluate(c, cks, tasks, ProbeKind::Linear, opt);
  CHECK(a.size() == 48);
  opt.workers = 1;
  auto b = evaluate(c, cks, tasks, ProbeKind::Linear, opt);
  CHECK(report_csv(a) == report_csv(b));
  for (const auto& r : a) {
    CHECK(r.f1 >= 0.0);
    CHECK(r.f1 <= 1.0);
  }
  for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i - 1].task <= a[i].task);
}
