#include <gtest/gtest.h>

#include <vector>

#include "eivlg/core.hpp"
#include "eivlg/error.hpp"
#include "eivlg/rng.hpp"

namespace eivlg {
namespace {

Interval RandomInterval(CounterRng& rng) {
  const double a = rng.Symmetric(100.0);
  return Interval::Seconds(a, a + 0.01 + rng.Uniform() * 50.0);
}

TEST(Iou, Examples) {
  EXPECT_EQ(IntervalIou(Interval::Seconds(0, 10), Interval::Seconds(0, 10)), 1.0);
  EXPECT_NEAR(IntervalIou(Interval::Seconds(0, 10), Interval::Seconds(5, 15)), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(IntervalIou(Interval::Seconds(0, 5), Interval::Seconds(6, 10)), 0.0);
  EXPECT_EQ(IntervalIou(Interval::Seconds(3, 3), Interval::Seconds(3, 3)), 1.0);
  EXPECT_THROW(IntervalIou(Interval::Seconds(0, 1), Interval::Frames(1, 2)), DataError);
}

TEST(Iou, SymmetryShiftScaleProperty) {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    CounterRng rng(seed, 300);
    const Interval a = RandomInterval(rng), b = RandomInterval(rng);
    const double iou = IntervalIou(a, b);
    EXPECT_GE(iou, 0.0);
    EXPECT_LE(iou, 1.0);
    EXPECT_EQ(iou, IntervalIou(b, a));
    EXPECT_EQ(IntervalIou(a, a), 1.0);
    const double shift = rng.Symmetric(20.0), scale = 0.1 + rng.Uniform() * 5.0;
    const Interval as = Interval::Seconds(a.start * scale + shift, a.end * scale + shift);
    const Interval bs = Interval::Seconds(b.start * scale + shift, b.end * scale + shift);
    EXPECT_NEAR(IntervalIou(as, bs), iou, 1e-9);
  }
}

TEST(FrameConversion, Examples) {
  EXPECT_EQ(FramesToSeconds(Interval::Frames(1, 30), 30), Interval::Seconds(0.0, 1.0));
  EXPECT_EQ(FramesToSeconds(Interval::Frames(31, 60), 30), Interval::Seconds(1.0, 2.0));
  EXPECT_EQ(FramesToSeconds(Interval::Frames(1, 1), 1), Interval::Seconds(0.0, 1.0));
  EXPECT_THROW(FramesToSeconds(Interval::Frames(1, 1), 0), DataError);
  EXPECT_EQ(SecondsToFrames(Interval::Seconds(40, 70), 0.5, 150), Interval::Frames(21, 35));
  EXPECT_EQ(SecondsToFrames(Interval::Seconds(0, 0), 1, 10), Interval::Frames(1, 1));
  EXPECT_EQ(SecondsToFrames(Interval::Seconds(5, 500), 1, 10), Interval::Frames(6, 10));
}

TEST(FrameConversion, RoundTripWithinOneFrameProperty) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    CounterRng rng(seed, 301);
    const double fps = 0.25 + rng.Uniform() * 30.0;
    const long m = 1 + static_cast<long>(rng.Below(400));
    const long s = 1 + static_cast<long>(rng.Below(static_cast<std::uint64_t>(m)));
    const long e = s + static_cast<long>(rng.Below(static_cast<std::uint64_t>(m - s + 1)));
    const Interval frames = Interval::Frames(s, e);
    const Interval back = SecondsToFrames(FramesToSeconds(frames, fps), fps, m);
    EXPECT_LE(std::abs(back.start - frames.start), 1.0);
    EXPECT_LE(std::abs(back.end - frames.end), 1.0);
  }
}

TEST(VideoMeta, FrameCountAndValidation) {
  const auto v = VideoMeta::Make("v", 300.0, 0.5);
  EXPECT_EQ(v.frame_count, 150);
  VideoMeta bad = v;
  bad.frame_count = 149;
  EXPECT_THROW(bad.Validate(), DataError);
  EXPECT_THROW(VideoMeta::Make("v", -1.0, 1.0).Validate(), DataError);
}

GroundingSample SampleWithCoverage(double duration, double start, double end) {
  GroundingSample s;
  s.video = VideoMeta::Make("v", duration, 1.0);
  s.gt = Interval::Seconds(start, end);
  return s;
}

TEST(GtCoverage, Examples) {
  std::vector<GroundingSample> one{SampleWithCoverage(100, 10, 12.3)};
  EXPECT_NEAR(GtCoverage(one), 0.023, 1e-12);
  std::vector<GroundingSample> full{SampleWithCoverage(50, 0, 50)};
  EXPECT_EQ(GtCoverage(full), 1.0);
  std::vector<GroundingSample> two{SampleWithCoverage(100, 0, 20), SampleWithCoverage(100, 0, 30)};
  EXPECT_NEAR(GtCoverage(two), 0.25, 1e-15);
  std::vector<GroundingSample> repeated(7, SampleWithCoverage(100, 10, 12.3));
  EXPECT_NEAR(GtCoverage(repeated), GtCoverage(one), 1e-15);
  EXPECT_THROW(GtCoverage(std::vector<GroundingSample>{}), DataError);
}

TEST(CaptionTrack, Validation) {
  CaptionTrack t;
  t.video_id = "v";
  t.interval_s = 10;
  t.entries = {{1, 0.0, "a"}, {2, 10.0, "b"}};
  EXPECT_NO_THROW(t.Validate());
  auto unsorted = t;
  unsorted.entries[1].time_s = 0.0;
  EXPECT_THROW(unsorted.Validate(), DataError);
  auto irregular = t;
  irregular.entries.push_back({3, 25.0, "c"});
  EXPECT_THROW(irregular.Validate(), DataError);
  const auto tiny = VideoMeta::Make("v", 1.0, 1.0);
  EXPECT_THROW(t.Validate(&tiny), DataError);
}

TEST(PredictionSet, Validation) {
  PredictionSet p{"q", {{Interval::Seconds(0, 1), 0.9}, {Interval::Seconds(1, 2), 0.5}}};
  EXPECT_NO_THROW(p.Validate());
  std::swap(p.candidates[0], p.candidates[1]);
  EXPECT_THROW(p.Validate(), DataError);
  EXPECT_THROW((PredictionSet{"q", {}}).Validate(), DataError);
}

}  // namespace
}  // namespace eivlg
