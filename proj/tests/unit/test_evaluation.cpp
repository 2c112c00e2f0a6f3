#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "../support/metric_oracle.hpp"
#include "eivlg/error.hpp"
#include "eivlg/evaluation.hpp"
#include "eivlg/synth.hpp"

namespace eivlg {
namespace {

PredictionSet Single(const std::string& id, Interval iv) { return {id, {{iv, 1.0}}}; }

TEST(RecallAt, Examples) {
  const Interval gt = Interval::Seconds(0, 10);
  EXPECT_EQ(RecallAt(Single("q", gt), gt, 1, 0.5), 1);
  // IoU exactly 0.5 counts.
  EXPECT_EQ(RecallAt(Single("q", Interval::Seconds(0, 5)), gt, 1, 0.5), 1);
  PredictionSet five{"q", {}};
  for (int i = 0; i < 5; ++i) {
    const Interval iv = i == 3 ? Interval::Seconds(0, 6) : Interval::Seconds(50 + i, 51 + i);
    five.candidates.push_back({iv, 1.0 - 0.1 * i});
  }
  EXPECT_EQ(RecallAt(five, gt, 1, 0.5), 0);
  EXPECT_EQ(RecallAt(five, gt, 5, 0.5), 1);
  EXPECT_THROW(RecallAt(PredictionSet{"q", {}}, gt, 1, 0.5), DataError);
  EXPECT_THROW(RecallAt(five, gt, 0, 0.5), UsageError);
  EXPECT_THROW(RecallAt(five, gt, 1, 0.0), UsageError);
}

TEST(RecallAt, MonotoneInKAntitoneInThresholdProperty) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto set = testing::MakeRandomEvalSet(seed);
    for (std::size_t i = 0; i < set.preds.size(); ++i) {
      for (std::size_t k = 1; k < 8; ++k) {
        for (double t : {0.1, 0.3, 0.5, 0.7}) {
          const int r = RecallAt(set.preds[i], set.targets[i].gt, k, t);
          EXPECT_LE(r, RecallAt(set.preds[i], set.targets[i].gt, k + 1, t));
          EXPECT_GE(r, RecallAt(set.preds[i], set.targets[i].gt, k, t + 0.2));
        }
      }
    }
  }
}

TEST(Evaluate, AllCorrectAndAllDisjoint) {
  std::vector<PredictionSet> hit, miss;
  std::vector<EvalTarget> targets;
  for (int i = 0; i < 5; ++i) {
    const std::string id = "q" + std::to_string(i);
    const Interval gt = Interval::Seconds(10.0 * i, 10.0 * i + 5);
    targets.push_back({id, gt, 100});
    hit.push_back(Single(id, gt));
    miss.push_back(Single(id, Interval::Seconds(90, 99)));
  }
  const auto r = Evaluate(hit, targets);
  EXPECT_EQ(r.r1_03, 1.0);
  EXPECT_EQ(r.r5_03, 1.0);
  EXPECT_EQ(r.r1_05, 1.0);
  EXPECT_EQ(r.r5_05, 1.0);
  EXPECT_EQ(r.n_samples, 5);
  EXPECT_NEAR(r.gt_coverage, 0.05, 1e-15);
  const auto z = Evaluate(miss, targets);
  EXPECT_EQ(z.r1_03 + z.r5_03 + z.r1_05 + z.r5_05, 0.0);
}

TEST(Evaluate, MisalignedIdsRejected) {
  std::vector<PredictionSet> preds{Single("a", Interval::Seconds(0, 1))};
  std::vector<EvalTarget> targets{{"b", Interval::Seconds(0, 1), 10}};
  EXPECT_THROW(Evaluate(preds, targets), DataError);
  targets.push_back({"c", Interval::Seconds(0, 1), 10});
  EXPECT_THROW(Evaluate(preds, targets), DataError);
}

TEST(Evaluate, MatchesBruteForceOracleOn200Sets) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto set = testing::MakeRandomEvalSet(seed);
    const auto report = Evaluate(set.preds, set.targets);
    EXPECT_EQ(testing::OracleMismatches(set, report), 0) << "seed " << seed;
    EXPECT_NO_THROW(report.Validate());
  }
}

TEST(Evaluate, PerSampleBestRank) {
  PredictionSet p{"q", {{Interval::Seconds(50, 60), 0.9}, {Interval::Seconds(0, 8), 0.8},
                        {Interval::Seconds(0, 10), 0.7}}};
  std::vector<PredictionSet> preds{p};
  std::vector<EvalTarget> targets{{"q", Interval::Seconds(0, 10), 100}};
  const auto r = Evaluate(preds, targets);
  ASSERT_EQ(r.per_sample.size(), 1u);
  EXPECT_EQ(r.per_sample[0].best_rank, 3);
  EXPECT_EQ(r.per_sample[0].best_iou, 1.0);
}

TEST(MetricReport, InvariantViolationsRejected) {
  MetricReport r;
  r.r1_03 = 0.5;
  r.r5_03 = 0.4;
  EXPECT_THROW(r.Validate(), DataError);
  MetricReport s;
  s.r1_05 = 0.5;
  s.r5_05 = 0.5;
  EXPECT_THROW(s.Validate(), DataError);
}

TEST(TextOnly, WindowExamples) {
  const auto v100 = VideoMeta::Make("v", 100, 1);
  // N = 10, i* = 5 → j* = 50, window [35, 65].
  EXPECT_EQ(TextOnlyWindow(5, 10, v100, 30), Interval::Frames(35, 65));
  // N = 20, i* = 1 → j* = 5, start clamped.
  EXPECT_EQ(TextOnlyWindow(1, 20, v100, 30), Interval::Frames(1, 20));
  EXPECT_THROW(TextOnlyWindow(0, 10, v100, 30), DataError);
  EXPECT_THROW(TextOnlyWindow(1, 10, v100, 0), UsageError);
}

TEST(TextOnly, WindowWidthProperty) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    CounterRng rng(seed, 700);
    const auto video = VideoMeta::Make("v", 20.0 + rng.Below(600), 0.5 + 0.5 * rng.Below(4));
    const std::size_t n = 1 + rng.Below(static_cast<std::uint64_t>(video.frame_count));
    const std::size_t i = 1 + rng.Below(n);
    const double span = 1.0 + rng.Below(60);
    const Interval w = TextOnlyWindow(i, n, video, span);
    const long m_span = std::lround(span * video.fps);
    const bool clamped = w.start == 1 || w.end == video.frame_count;
    EXPECT_GE(w.start, 1);
    EXPECT_LE(w.end, video.frame_count);
    if (!clamped) {
      EXPECT_LE(std::abs((w.end - w.start) - m_span), 1);
    }
  }
}

TEST(TextOnly, ArgmaxTieBreaksToLowestIndex) {
  Matrix captions(3, 2);
  captions(1, 0) = 1.0;
  captions(2, 0) = 1.0;
  const auto video = VideoMeta::Make("v", 30, 1);
  EXPECT_EQ(TextOnlyPredict(captions, Vector{1, 0}, video, 10), TextOnlyWindow(2, 3, video, 10));
}

TEST(TextOnly, OracleAndAdversarialEmbeddings) {
  SynthConfig cfg;
  cfg.n_videos = 60;
  const auto data = Generate(cfg);
  const auto oracle = TextOnlyEvaluate(
      data, [](const GroundingSample& s) { return OracleEmbeddings(s); }, 30.0);
  EXPECT_EQ(oracle.r1_03, 1.0);
  const auto adversarial = TextOnlyEvaluate(
      data, [](const GroundingSample& s) { return AdversarialEmbeddings(s); }, 30.0);
  EXPECT_EQ(adversarial.r1_03, 0.0);
  EXPECT_EQ(oracle.r1_03, oracle.r5_03);
}

}  // namespace
}  // namespace eivlg
