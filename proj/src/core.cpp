#include "eivlg/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "eivlg/error.hpp"

namespace eivlg {
namespace {

void RequireValid(const Interval& iv, const char* what) {
  if (!std::isfinite(iv.start) || !std::isfinite(iv.end) || iv.start > iv.end) {
    throw DataError(std::string(what) + ": invalid interval [" +
                    std::to_string(iv.start) + ", " + std::to_string(iv.end) + "]");
  }
}

}  // namespace

Interval Interval::Seconds(double start, double end) {
  Interval iv{start, end, TimeUnit::kSeconds};
  RequireValid(iv, "Interval::Seconds");
  return iv;
}

Interval Interval::Frames(long start, long end) {
  Interval iv{static_cast<double>(start), static_cast<double>(end), TimeUnit::kFrames};
  RequireValid(iv, "Interval::Frames");
  return iv;
}

VideoMeta VideoMeta::Make(std::string video_id, double duration_s, double fps) {
  VideoMeta meta;
  meta.video_id = std::move(video_id);
  meta.duration_s = duration_s;
  meta.fps = fps;
  meta.frame_count = std::lround(duration_s * fps);
  meta.Validate();
  return meta;
}

void VideoMeta::Validate() const {
  if (!(duration_s > 0.0) || !std::isfinite(duration_s))
    throw DataError("video " + video_id + ": duration must be positive");
  if (!(fps > 0.0) || !std::isfinite(fps))
    throw DataError("video " + video_id + ": fps must be positive");
  if (frame_count < 1 || frame_count != std::lround(duration_s * fps))
    throw DataError("video " + video_id + ": frame count " +
                    std::to_string(frame_count) + " != round(duration * fps)");
}

void CaptionTrack::Validate(const VideoMeta* video) const {
  if (entries.empty()) throw DataError("caption track " + video_id + " is empty");
  if (!(interval_s > 0.0)) throw DataError("caption track " + video_id + ": interval must be positive");
  if (video != nullptr && static_cast<long>(entries.size()) > video->frame_count)
    throw DataError("caption track " + video_id + ": more captions than frames");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].index != static_cast<int>(i) + 1)
      throw DataError("caption track " + video_id + ": indices must run 1..N");
    if (i == 0) continue;
    const double gap = entries[i].time_s - entries[i - 1].time_s;
    if (!(gap > 0.0))
      throw DataError("caption track " + video_id + ": timestamps not strictly increasing");
    if (std::abs(gap - interval_s) > 1e-6)
      throw DataError("caption track " + video_id + ": irregular caption spacing");
  }
}

void GroundingSample::Validate() const {
  video.Validate();
  captions.Validate(&video);
  if (gt.unit != TimeUnit::kSeconds) throw DataError(query_id + ": gt must be in seconds");
  if (gt.start < 0.0 || gt.end > video.duration_s || gt.start > gt.end)
    throw DataError(query_id + ": gt outside [0, duration]");
  if (static_cast<long>(video_features.rows()) != video.frame_count)
    throw DataError(query_id + ": feature rows differ from frame count");
}

void PredictionSet::Validate() const {
  if (candidates.empty()) throw DataError(query_id + ": no candidates");
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    RequireValid(candidates[i].interval, query_id.c_str());
    if (i > 0 && candidates[i].score > candidates[i - 1].score)
      throw DataError(query_id + ": candidate scores not sorted descending");
  }
}

double IntervalIou(const Interval& a, const Interval& b) {
  if (a.unit != b.unit) throw DataError("iou: unit mismatch");
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = std::max(a.end, b.end) - std::min(a.start, b.start);
  if (uni <= 0.0) return (a.start == b.start) ? 1.0 : 0.0;
  return inter / uni;
}

Interval FramesToSeconds(const Interval& frames, double fps) {
  if (frames.unit != TimeUnit::kFrames) throw DataError("frames_to_seconds: not a frame interval");
  if (!(fps > 0.0)) throw DataError("frames_to_seconds: fps must be positive");
  return Interval{(frames.start - 1.0) / fps, frames.end / fps, TimeUnit::kSeconds};
}

Interval SecondsToFrames(const Interval& seconds, double fps, long frame_count) {
  if (seconds.unit != TimeUnit::kSeconds) throw DataError("seconds_to_frames: not a seconds interval");
  if (!(fps > 0.0)) throw DataError("seconds_to_frames: fps must be positive");
  // Tolerate float noise at frame edges.
  constexpr double kSlack = 1e-9;
  long s = static_cast<long>(std::floor(seconds.start * fps + kSlack)) + 1;
  long e = static_cast<long>(std::ceil(seconds.end * fps - kSlack));
  s = std::clamp(s, 1L, frame_count);
  e = std::clamp(e, s, frame_count);
  return Interval{static_cast<double>(s), static_cast<double>(e), TimeUnit::kFrames};
}

double GtCoverage(std::span<const GroundingSample> samples) {
  if (samples.empty()) throw DataError("gt_coverage: empty sample list");
  double sum = 0.0;
  for (const auto& s : samples) sum += s.gt.length() / s.video.duration_s;
  return sum / static_cast<double>(samples.size());
}

}  // namespace eivlg
