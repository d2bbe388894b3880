#include <doctest.h>

#include "dialprobe/errors.hpp"
#include "dialprobe/textmetrics.hpp"
#include "dialprobe/util.hpp"

#include <cmath>

using namespace dialprobe;
using namespace dialprobe::textmetrics;

namespace {

Sentence s(const std::string& text) {
  Sentence out;
  for (auto& w : split(text, ' '))
    if (!w.empty()) out.push_back(w);
  return out;
}

} // namespace

TEST_CASE("bleu2 hand examples") {
  CHECK(bleu2({s("the cat sat on the mat")}, {s("the cat sat on the mat")}).value == doctest::Approx(1.0));

  auto zero = bleu2({s("the the the")}, {s("the cat")});
  CHECK(zero.match1 == 1);
  CHECK(zero.total1 == 3);
  CHECK(zero.match2 == 0);
  CHECK(zero.value == 0.0);

  auto bp = bleu2({s("a b c")}, {s("a b c d e f")});
  CHECK(std::abs(bp.value - std::exp(-1.0)) < 1e-6);
  CHECK(std::abs(bp.value - 0.3679) < 1e-4);
}

TEST_CASE("bleu2 pools counts across the corpus") {
  // p1 = 5/6, p2 = 2/4, r = c = 6
  auto sc = bleu2({s("a b c"), s("x y z")}, {s("a b c"), s("x q z")});
  CHECK(sc.match1 == 5);
  CHECK(sc.match2 == 2);
  CHECK(std::abs(sc.value - std::sqrt(5.0 / 6.0 * 0.5)) < 1e-12);
}

TEST_CASE("rouge hand examples") {
  CHECK(rouge_f1({s("a b c")}, {s("a b c")}).value == doctest::Approx(1.0));
  CHECK(std::abs(rouge_f1({s("a b c")}, {s("b c d")}).value - 2.0 / 3.0) < 1e-6);
  CHECK(rouge_f1({s("a b")}, {s("c d")}).value == 0.0);
}

TEST_CASE("meteor hand examples") {
  auto same = meteor_exact({s("one two three four five six")}, {s("one two three four five six")});
  CHECK(std::abs(same.value - (1.0 - 0.5 / 216.0)) < 1e-6);
  CHECK(std::abs(same.value - 0.9977) < 1e-4);

  CHECK(meteor_exact({s("a b")}, {s("c d")}).value == 0.0);

  auto al = meteor_align(s("a b"), s("b a"));
  CHECK(al.matches == 2);
  CHECK(al.chunks == 2);
  CHECK(std::abs(meteor_exact({s("a b")}, {s("b a")}).value - 0.5) < 1e-6);
}

TEST_CASE("meteor minimizes chunks among maximal alignments") {
  // Greedy matching would pair the first "a" with ref position 0 and split
  // the run; the best alignment keeps "a b c" contiguous.
  auto al = meteor_align(s("a b c"), s("a x a b c"));
  CHECK(al.matches == 3);
  CHECK(al.chunks == 1);
  auto al2 = meteor_align(s("the cat the dog"), s("the dog the cat"));
  CHECK(al2.matches == 4);
  CHECK(al2.chunks == 2);
}

TEST_CASE("metrics are case insensitive and bounded") {
  Rng rng(21);
  const std::vector<std::string> words = {"alpha", "Beta", "gamma", "DELTA", "eps", "Zeta"};
  auto random_sentence = [&] {
    Sentence out;
    const std::size_t n = 1 + rng.index(8);
    for (std::size_t i = 0; i < n; ++i) out.push_back(words[rng.index(words.size())]);
    return out;
  };
  auto upper = [](Sentence x) {
    for (auto& w : x)
      for (char& ch : w) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return x;
  };
  for (int i = 0; i < 100; ++i) {
    Sentence c = random_sentence(), r = random_sentence();
    for (Metric m : {Metric::Bleu2, Metric::RougeF1, Metric::Meteor}) {
      const double base = score(m, {c}, {r}).value;
      CHECK(base >= 0.0);
      CHECK(base <= 1.0);
      CHECK(score(m, {upper(c)}, {r}).value == base);
      CHECK(score(m, {c}, {upper(r)}).value == base);
    }
  }
}

TEST_CASE("brevity penalty never rewards truncation") {
  const Sentence ref = s("a b c d e f g h");
  double last = 2.0;
  for (std::size_t len = 8; len >= 2; --len) {
    Sentence cand(ref.begin(), ref.begin() + static_cast<std::ptrdiff_t>(len));
    const double v = bleu2({cand}, {ref}).value;
    CHECK(v <= last);
    last = v;
  }
}

TEST_CASE("empty and misaligned inputs") {
  CHECK_THROWS_AS(bleu2({}, {}), EmptyCandidateSet);
  CHECK_THROWS_AS(rouge_f1({}, {}), EmptyCandidateSet);
  CHECK_THROWS_AS(meteor_exact({}, {}), EmptyCandidateSet);
  CHECK_THROWS_AS(bleu2({s("a")}, {}), ShapeMismatch);
  CHECK(bleu2({Sentence{}}, {s("a b")}).value == 0.0);
  CHECK(meteor_exact({Sentence{}}, {s("a b")}).value == 0.0);
}

TEST_CASE("metric csv") {
  std::string csv = metric_csv({{"seq2seq", 1, 3, Metric::Bleu2, 0.25}});
  CHECK(csv == "model,seed,epoch,metric,value\nseq2seq,1,3,bleu2,0.25\n");
  CHECK(parse_metric("rouge_f1") == Metric::RougeF1);
  CHECK_THROWS_AS(parse_metric("bert"), UsageError);
}
