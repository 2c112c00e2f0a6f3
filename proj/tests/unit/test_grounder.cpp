#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "eivlg/error.hpp"
#include "eivlg/grounder.hpp"
#include "eivlg/rng.hpp"

namespace eivlg {
namespace {

Vector RandomVec(std::size_t n, CounterRng& rng, double limit = 3.0) {
  Vector v(n);
  for (double& x : v) x = rng.Symmetric(limit);
  return v;
}

Interval RandomGt(std::size_t m, CounterRng& rng) {
  const long s = 1 + static_cast<long>(rng.Below(m));
  const long e = s + static_cast<long>(rng.Below(m - static_cast<std::size_t>(s) + 1));
  return Interval::Frames(s, e);
}

TEST(HeadForward, ZeroParamsGiveZeroLogits) {
  const auto p = GrounderParams::Zeros(5, 4);
  CounterRng rng(1, 600);
  Matrix z(7, 4);
  for (double& x : z.values()) x = rng.Symmetric(1.0);
  const auto out = HeadForward(z, RandomVec(5, rng), p);
  for (const Vector* v : {&out.start, &out.end, &out.highlight}) {
    ASSERT_EQ(v->size(), 7u);
    for (double x : *v) EXPECT_EQ(x, 0.0);
  }
  for (double x : out.offsets.values()) EXPECT_EQ(x, 0.0);
}

TEST(HeadForward, SingleFrameAndShapeErrors) {
  const auto p = GrounderParams::Init(5, 4, 2);
  const auto out = HeadForward(Matrix(1, 4, 0.5), Vector(5, 0.1), p);
  EXPECT_EQ(out.start.size(), 1u);
  EXPECT_EQ(out.offsets.rows(), 1u);
  EXPECT_THROW(HeadForward(Matrix(3, 3), Vector(5, 0.1), p), DataError);
  EXPECT_THROW(HeadForward(Matrix(3, 4), Vector(4, 0.1), p), DataError);
}

TEST(SpanLoss, Oracles) {
  EXPECT_NEAR(SpanLoss(Vector(4, 0.0), Vector(4, 0.0), Interval::Frames(2, 3)).loss, 2 * std::log(4.0),
              1e-14);
  Vector s(5, -20), e(5, -20);
  s[1] = 20;
  e[3] = 20;
  EXPECT_LT(SpanLoss(s, e, Interval::Frames(2, 4)).loss, 1e-6);
  EXPECT_NEAR(SpanLoss(Vector{1, 0, 0}, Vector{0, 0, 1}, Interval::Frames(1, 3)).loss, 1.10288942786410,
              1e-13);
  EXPECT_THROW(SpanLoss(Vector{1, 0}, Vector{1, 0}, Interval::Frames(1, 3)), DataError);
  EXPECT_THROW(SpanLoss(Vector{1, 0}, Vector{1, 0}, Interval::Frames(0, 1)), DataError);
}

TEST(QghLoss, Oracles) {
  EXPECT_NEAR(QghLoss(Vector(6, 0.0), Interval::Frames(2, 4)).loss, std::log(2.0), 1e-15);
  EXPECT_LT(QghLoss(Vector{-40, 40, 40, -40}, Interval::Frames(2, 3)).loss, 1e-8);
  EXPECT_NEAR(QghLoss(Vector{1, -1}, Interval::Frames(1, 1)).loss, 0.313261687518223, 1e-14);
}

TEST(HighlightLabels, ExtensionWidensGt) {
  EXPECT_EQ(HighlightLabels(6, Interval::Frames(3, 4)), (std::vector<double>{0, 0, 1, 1, 0, 0}));
  EXPECT_EQ(HighlightLabels(8, Interval::Frames(4, 5), 0.5), (std::vector<double>{0, 0, 1, 1, 1, 1, 0, 0}));
}

TEST(FocalLoss, Oracles) {
  // One positive frame at p = 0.5: α(1−p)^γ ln 2.
  EXPECT_NEAR(FocalLoss(Vector{0.0}, Interval::Frames(1, 1), 0.25, 2.0).loss, 0.0433216987849966, 1e-15);
  EXPECT_LT(FocalLoss(Vector{40, 40}, Interval::Frames(1, 2), 0.25, 2.0).loss, 1e-15);
  EXPECT_THROW(FocalLoss(Vector{0.0}, Interval::Frames(1, 1), 0.0, 2.0), DataError);
  EXPECT_THROW(FocalLoss(Vector{0.0}, Interval::Frames(1, 1), 0.5, -1.0), DataError);
}

TEST(FocalLoss, HalfBceIdentityProperty) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    CounterRng rng(seed, 601);
    const std::size_t m = 1 + rng.Below(40);
    const Vector logits = RandomVec(m, rng, 12.0);
    const Interval gt = RandomGt(m, rng);
    const auto focal = FocalLoss(logits, gt, 0.5, 0.0);
    const auto bce = QghLoss(logits, gt);
    EXPECT_NEAR(focal.loss, 0.5 * bce.loss, 1e-12);
    for (std::size_t j = 0; j < m; ++j) EXPECT_NEAR(focal.grad[j], 0.5 * bce.grad[j], 1e-12);
  }
}

TEST(DiouLoss, Oracles) {
  EXPECT_EQ(DiouLoss(Interval::Seconds(0, 10), Interval::Seconds(0, 10)).loss, 0.0);
  EXPECT_NEAR(DiouLoss(Interval::Seconds(0, 10), Interval::Seconds(10, 20)).loss, 1.25, 1e-15);
  EXPECT_NEAR(DiouLoss(Interval::Seconds(0, 10), Interval::Seconds(5, 15)).loss, 7.0 / 9.0, 1e-15);
  const auto point = DiouLoss(Interval::Seconds(3, 3), Interval::Seconds(3, 3));
  EXPECT_EQ(point.loss, 0.0);
  EXPECT_EQ(point.grad_start, 0.0);
  EXPECT_EQ(point.grad_end, 0.0);
  EXPECT_THROW(DiouLoss(Interval::Seconds(2, 1), Interval::Seconds(0, 1)), DataError);
}

TEST(DiouLoss, BoundsProperty) {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    CounterRng rng(seed, 602);
    const double a = rng.Symmetric(50), b = rng.Symmetric(50);
    const Interval p = Interval::Seconds(a, a + 0.01 + rng.Uniform() * 30);
    const Interval g = Interval::Seconds(b, b + 0.01 + rng.Uniform() * 30);
    const double loss = DiouLoss(p, g).loss;
    EXPECT_GE(loss, 1.0 - IntervalIou(p, g) - 1e-15);
    EXPECT_LT(loss, 2.0);
    EXPECT_NEAR(DiouLoss(p, p).loss, 0.0, 1e-15);
  }
}

TEST(Decode, PeakedBoundaries) {
  const auto p = DecodePredictions(Vector{5, -5}, Vector{-5, 5}, 3, 1.0);
  ASSERT_FALSE(p.candidates.empty());
  EXPECT_EQ(p.candidates[0].interval, Interval::Seconds(0, 2));
  EXPECT_EQ(DecodePredictions(Vector{1, 2, 3}, Vector{3, 2, 1}, 1, 1.0).candidates.size(), 1u);
  EXPECT_THROW(DecodePredictions(Vector{1}, Vector{1}, 0, 1.0), UsageError);
}

TEST(Decode, NoValidPairFallsBackToFullVideo) {
  DecodeOptions opt;
  opt.top_boundaries = 1;
  const auto p = DecodePredictions(Vector{0, 0, 9}, Vector{9, 0, 0}, 5, 0.5, opt);
  ASSERT_EQ(p.candidates.size(), 1u);
  EXPECT_EQ(p.candidates[0].interval, Interval::Seconds(0, 6));
}

TEST(Nms, FiveCandidateOracle) {
  // [0,10] and [0,9] overlap at IoU 0.9: the lower-scored one is dropped.
  const std::vector<Candidate> sorted{{Interval::Seconds(0, 10), 0.9},
                                      {Interval::Seconds(0, 9), 0.8},
                                      {Interval::Seconds(20, 30), 0.7},
                                      {Interval::Seconds(5, 15), 0.6},
                                      {Interval::Seconds(21, 30), 0.5}};
  const auto kept = SuppressOverlaps(sorted, 5, 0.7);
  ASSERT_EQ(kept.size(), 3u);
  EXPECT_EQ(kept[0].interval, Interval::Seconds(0, 10));
  EXPECT_EQ(kept[1].interval, Interval::Seconds(20, 30));
  EXPECT_EQ(kept[2].interval, Interval::Seconds(5, 15));
  EXPECT_EQ(SuppressOverlaps(sorted, 2, 0.7).size(), 2u);
}

// Exhaustive reference: all pairs s ≤ e among the top boundaries, sorted,
// then greedy suppression written out longhand.
std::vector<Candidate> BruteForceDecode(const Vector& s, const Vector& e, std::size_t k, double fps,
                                        std::size_t top, double nms) {
  auto top_of = [&](const Vector& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return v[a] != v[b] ? v[a] > v[b] : a < b;
    });
    idx.resize(std::min(top, idx.size()));
    return idx;
  };
  const Vector ps = Softmax(s), pe = Softmax(e);
  std::vector<Candidate> all;
  for (std::size_t i : top_of(s)) {
    for (std::size_t j : top_of(e)) {
      if (i <= j) all.push_back({Interval::Seconds(i / fps, (j + 1) / fps), ps[i] * pe[j]});
    }
  }
  std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.interval.start != b.interval.start) return a.interval.start < b.interval.start;
    return a.interval.end < b.interval.end;
  });
  std::vector<Candidate> kept;
  for (const auto& c : all) {
    bool keep = kept.size() < k;
    for (const auto& o : kept) {
      const double inter = std::max(0.0, std::min(o.interval.end, c.interval.end) -
                                             std::max(o.interval.start, c.interval.start));
      const double uni = std::max(o.interval.end, c.interval.end) - std::min(o.interval.start, c.interval.start);
      if (inter / uni >= nms) keep = false;
    }
    if (keep) kept.push_back(c);
  }
  return kept;
}

TEST(Decode, MatchesBruteForceProperty) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    CounterRng rng(seed, 603);
    const std::size_t m = 1 + rng.Below(30);
    const Vector s = RandomVec(m, rng), e = RandomVec(m, rng);
    const std::size_t k = 1 + rng.Below(6);
    DecodeOptions opt;
    opt.top_boundaries = 1 + rng.Below(8);
    const auto got = DecodePredictions(s, e, k, 0.5, opt);
    const auto want = BruteForceDecode(s, e, k, 0.5, opt.top_boundaries, opt.nms_iou);
    if (want.empty()) {
      ASSERT_EQ(got.candidates.size(), 1u);
      continue;
    }
    ASSERT_EQ(got.candidates.size(), want.size()) << "seed " << seed;
    for (std::size_t i = 0; i < want.size(); ++i) {
      EXPECT_EQ(got.candidates[i].interval, want[i].interval);
      EXPECT_EQ(got.candidates[i].score, want[i].score);
    }
    for (std::size_t i = 0; i < got.candidates.size(); ++i) {
      EXPECT_LE(got.candidates[i].interval.start, got.candidates[i].interval.end);
      if (i > 0) {
        EXPECT_GE(got.candidates[i - 1].score, got.candidates[i].score);
      }
    }
  }
}

TEST(DecodeAnchor, CandidatesClippedAndSorted) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CounterRng rng(seed, 604);
    const std::size_t m = 1 + rng.Below(25);
    const Vector h = RandomVec(m, rng);
    Matrix offsets(m, 2);
    for (double& x : offsets.values()) x = rng.Symmetric(10.0);
    const auto p = DecodeAnchorPredictions(h, offsets, 5, 0.5);
    ASSERT_FALSE(p.candidates.empty());
    EXPECT_LE(p.candidates.size(), 5u);
    for (std::size_t i = 0; i < p.candidates.size(); ++i) {
      const auto& c = p.candidates[i];
      EXPECT_GE(c.interval.start, 0.0);
      EXPECT_LE(c.interval.end, static_cast<double>(m) / 0.5);
      EXPECT_LE(c.interval.start, c.interval.end);
      if (i > 0) {
        EXPECT_GE(p.candidates[i - 1].score, c.score);
      }
    }
  }
}

TEST(LossSuite, NamesRoundTrip) {
  for (LossSuite s : {LossSuite::kSpanQgh, LossSuite::kFocalDiou}) {
    EXPECT_EQ(ParseLossSuite(LossSuiteName(s)), s);
  }
  EXPECT_THROW(ParseLossSuite("hinge"), UsageError);
}

}  // namespace
}  // namespace eivlg
