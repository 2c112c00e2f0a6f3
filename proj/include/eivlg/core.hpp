#pragma once

// Domain types shared by every module, plus interval arithmetic.
//
// Frame indices are 1-based; frame i spans [(i-1)/fps, i/fps) seconds.

#include <span>
#include <string>
#include <vector>

#include "eivlg/numerics.hpp"

namespace eivlg {

enum class TimeUnit { kSeconds, kFrames };

struct Interval {
  double start = 0.0;
  double end = 0.0;
  TimeUnit unit = TimeUnit::kSeconds;

  static Interval Seconds(double start, double end);
  static Interval Frames(long start, long end);

  double length() const { return end - start; }
  bool operator==(const Interval&) const = default;
};

struct VideoMeta {
  std::string video_id;
  double duration_s = 0.0;
  double fps = 0.0;
  long frame_count = 0;

  /// Builds metadata with frame_count = round(duration_s * fps).
  static VideoMeta Make(std::string video_id, double duration_s, double fps);
  void Validate() const;
};

struct CaptionEntry {
  int index = 0;  // 1..N
  double time_s = 0.0;
  std::string text;
};

struct CaptionTrack {
  std::string video_id;
  std::vector<CaptionEntry> entries;
  double interval_s = 0.0;

  std::size_t size() const { return entries.size(); }
  /// Checks ordering, indexing and grid spacing; `video` bounds N <= M.
  void Validate(const VideoMeta* video = nullptr) const;
};

struct GroundingSample {
  VideoMeta video;
  CaptionTrack captions;
  std::string query_id;
  std::string query;
  Interval gt;  // seconds
  Matrix video_features;  // M x D_v

  void Validate() const;
};

struct Candidate {
  Interval interval;
  double score = 0.0;
};

struct PredictionSet {
  std::string query_id;
  std::vector<Candidate> candidates;  // score descending

  void Validate() const;
};

/// |a ∩ b| / |a ∪ b|. Identical zero-length points give 1, disjoint points 0.
double IntervalIou(const Interval& a, const Interval& b);

Interval FramesToSeconds(const Interval& frames, double fps);

/// Smallest frame span covering `seconds`, clamped to [1, frame_count].
/// Always at least one frame long.
Interval SecondsToFrames(const Interval& seconds, double fps, long frame_count);

/// Mean of gt length / video duration.
double GtCoverage(std::span<const GroundingSample> samples);

}  // namespace eivlg
