#include "eivlg/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "eivlg/error.hpp"

namespace eivlg {

EvalTarget TargetOf(const GroundingSample& sample) {
  return {sample.query_id, sample.gt, sample.video.duration_s};
}

void MetricReport::Validate() const {
  if (r5_03 < r1_03 || r5_05 < r1_05) throw DataError("metric report: R5 below R1");
  if (r1_03 < r1_05 || r5_03 < r5_05) throw DataError("metric report: recall at 0.5 exceeds 0.3");
  for (double x : {r1_03, r5_03, r1_05, r5_05, gt_coverage})
    if (!(x >= 0.0 && x <= 1.0)) throw DataError("metric report: value outside [0, 1]");
  if (n_samples < 0) throw DataError("metric report: negative sample count");
}

int RecallAt(const PredictionSet& preds, const Interval& gt, std::size_t k, double threshold) {
  if (preds.candidates.empty()) throw DataError("recall_at: empty prediction set " + preds.query_id);
  if (k < 1) throw UsageError("recall_at: k must be >= 1");
  if (!(threshold > 0.0 && threshold <= 1.0)) throw UsageError("recall_at: threshold outside (0, 1]");
  const std::size_t n = std::min(k, preds.candidates.size());
  for (std::size_t i = 0; i < n; ++i)
    if (IntervalIou(preds.candidates[i].interval, gt) >= threshold) return 1;
  return 0;
}

namespace {

void RequireAligned(std::span<const PredictionSet> preds, std::span<const EvalTarget> targets) {
  if (preds.empty()) throw DataError("evaluate: no predictions");
  if (preds.size() != targets.size())
    throw DataError("evaluate: " + std::to_string(preds.size()) + " prediction sets for " +
                    std::to_string(targets.size()) + " targets");
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i].query_id != targets[i].query_id)
      throw DataError("evaluate: query id mismatch at position " + std::to_string(i) + " ('" +
                      preds[i].query_id + "' vs '" + targets[i].query_id + "')");
}

}  // namespace

std::vector<std::vector<double>> RecallGrid(std::span<const PredictionSet> preds,
                                            std::span<const EvalTarget> targets,
                                            std::span<const std::size_t> ks,
                                            std::span<const double> thresholds) {
  RequireAligned(preds, targets);
  std::vector<std::vector<double>> cells(ks.size(), std::vector<double>(thresholds.size(), 0.0));
  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
      long hits = 0;
      for (std::size_t i = 0; i < preds.size(); ++i)
        hits += RecallAt(preds[i], targets[i].gt, ks[ki], thresholds[ti]);
      cells[ki][ti] = static_cast<double>(hits) / static_cast<double>(preds.size());
    }
  }
  return cells;
}

MetricReport Evaluate(std::span<const PredictionSet> preds, std::span<const EvalTarget> targets) {
  constexpr std::size_t kKs[] = {1, 5};
  constexpr double kThresholds[] = {0.3, 0.5};
  const auto cells = RecallGrid(preds, targets, kKs, kThresholds);
  MetricReport r;
  r.r1_03 = cells[0][0];
  r.r1_05 = cells[0][1];
  r.r5_03 = cells[1][0];
  r.r5_05 = cells[1][1];
  r.n_samples = static_cast<long>(preds.size());
  double coverage = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& t = targets[i];
    coverage += t.gt.length() / t.duration_s;
    SampleResult s{t.query_id, 0, -1.0};
    const std::size_t n = std::min<std::size_t>(5, preds[i].candidates.size());
    for (std::size_t c = 0; c < n; ++c) {
      const double iou = IntervalIou(preds[i].candidates[c].interval, t.gt);
      if (iou > s.best_iou) {
        s.best_iou = iou;
        s.best_rank = static_cast<int>(c) + 1;
      }
    }
    r.per_sample.push_back(std::move(s));
  }
  r.gt_coverage = coverage / static_cast<double>(preds.size());
  return r;
}

Interval TextOnlyWindow(std::size_t caption_index, std::size_t n_captions, const VideoMeta& video,
                        double span_s) {
  if (!(span_s > 0.0)) throw UsageError("text-only: span must be positive");
  if (n_captions == 0 || caption_index < 1 || caption_index > n_captions)
    throw DataError("text-only: caption index out of range");
  const long m = video.frame_count;
  const double ratio = static_cast<double>(caption_index) / static_cast<double>(n_captions);
  long j = static_cast<long>(std::floor(ratio * static_cast<double>(m) + 0.5));
  j = std::clamp(j, 1L, m);
  const double half = static_cast<double>(std::lround(span_s * video.fps)) / 2.0;
  long s = static_cast<long>(std::floor(static_cast<double>(j) - half));
  long e = static_cast<long>(std::ceil(static_cast<double>(j) + half));
  s = std::clamp(s, 1L, m);
  e = std::clamp(e, s, m);
  return Interval{static_cast<double>(s), static_cast<double>(e), TimeUnit::kFrames};
}

Interval TextOnlyPredict(const Matrix& captions, std::span<const double> query,
                         const VideoMeta& video, double span_s) {
  if (captions.rows() == 0) throw DataError("text-only: no captions");
  const Vector scores = MatVec(captions, query);
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return TextOnlyWindow(best + 1, captions.rows(), video, span_s);
}

MetricReport TextOnlyEvaluate(std::span<const GroundingSample> dataset,
                              const EmbeddingSource& embed, double span_s) {
  std::vector<PredictionSet> preds;
  std::vector<EvalTarget> targets;
  preds.reserve(dataset.size());
  for (const auto& s : dataset) {
    const EncodedEnvironment env = embed(s);
    const Interval frames = TextOnlyPredict(env.captions, env.query, s.video, span_s);
    preds.push_back({s.query_id, {{FramesToSeconds(frames, s.video.fps), 1.0}}});
    targets.push_back(TargetOf(s));
  }
  return Evaluate(preds, targets);
}

MetricReport TextOnlyEvaluate(std::span<const GroundingSample> dataset,
                              const TextEncoderParams& params, double span_s) {
  return TextOnlyEvaluate(
      dataset, [&](const GroundingSample& s) { return EncodeEnvironment(s, params); }, span_s);
}

}  // namespace eivlg
