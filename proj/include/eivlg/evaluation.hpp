#pragma once

// Rk@IoU metrics, dataset statistics and the text-only grounding protocol.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eivlg/core.hpp"
#include "eivlg/encoder.hpp"

namespace eivlg {

struct EvalTarget {
  std::string query_id;
  Interval gt;  // seconds
  double duration_s = 0.0;
};

EvalTarget TargetOf(const GroundingSample& sample);

struct SampleResult {
  std::string query_id;
  int best_rank = 0;      // 1-based rank of the best-IoU candidate among the top 5
  double best_iou = 0.0;
};

struct MetricReport {
  double r1_03 = 0.0;
  double r5_03 = 0.0;
  double r1_05 = 0.0;
  double r5_05 = 0.0;
  long n_samples = 0;
  double gt_coverage = 0.0;
  std::vector<SampleResult> per_sample;

  /// r5 ≥ r1 at each threshold and recall at 0.3 ≥ recall at 0.5.
  void Validate() const;
};

/// 1 iff one of the top-k candidates has IoU ≥ threshold with gt.
int RecallAt(const PredictionSet& preds, const Interval& gt, std::size_t k, double threshold);

/// cells[ki][ti] = mean over samples of RecallAt(k = ks[ki], threshold = thresholds[ti]).
/// Predictions and targets are aligned by position; ids must match.
std::vector<std::vector<double>> RecallGrid(std::span<const PredictionSet> preds,
                                            std::span<const EvalTarget> targets,
                                            std::span<const std::size_t> ks,
                                            std::span<const double> thresholds);

MetricReport Evaluate(std::span<const PredictionSet> preds, std::span<const EvalTarget> targets);

/// Text-only prediction: the caption with the largest dot product against the
/// query (lowest index on ties) is mapped to frame j* = ⌊i*·M/N + ½⌋ and a
/// window of round(span_s·fps) frames is centred on it, clamped to [1, M].
Interval TextOnlyPredict(const Matrix& captions, std::span<const double> query,
                         const VideoMeta& video, double span_s = 30.0);

/// Window from a given 1-based caption index (shared by the Monte-Carlo chance
/// simulator).
Interval TextOnlyWindow(std::size_t caption_index, std::size_t n_captions, const VideoMeta& video,
                        double span_s);

using EmbeddingSource = std::function<EncodedEnvironment(const GroundingSample&)>;

/// Single candidate per sample, so R5 cells equal R1 cells.
MetricReport TextOnlyEvaluate(std::span<const GroundingSample> dataset,
                              const EmbeddingSource& embed, double span_s = 30.0);
MetricReport TextOnlyEvaluate(std::span<const GroundingSample> dataset,
                              const TextEncoderParams& params, double span_s = 30.0);

}  // namespace eivlg
