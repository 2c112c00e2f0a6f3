#pragma once

// Temporal localisation head over fused features Z (M x D_v), its two loss
// suites (span + QGH, focal + DIoU) and decoding into ranked candidates.
//
// Every head sees H = Z ⊙ q row-wise, where q = z_q · query_proj.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "eivlg/core.hpp"
#include "eivlg/numerics.hpp"

namespace eivlg {

enum class LossSuite { kSpanQgh, kFocalDiou };

std::string_view LossSuiteName(LossSuite s);
LossSuite ParseLossSuite(std::string_view name);

struct GrounderParams {
  std::size_t d_t = 0;
  std::size_t d_v = 0;
  Matrix query_proj;  // D_t x D_v
  Vector start_w;     // D_v
  double start_b = 0.0;
  Vector end_w;
  double end_b = 0.0;
  Vector highlight_w;
  double highlight_b = 0.0;
  Matrix regression_w;  // D_v x 2
  Vector regression_b;  // 2

  static GrounderParams Zeros(std::size_t d_t, std::size_t d_v);
  static GrounderParams Init(std::size_t d_t, std::size_t d_v, std::uint64_t seed);
  void Validate() const;

  std::vector<std::span<double>> Tensors();
  std::vector<std::span<const double>> Tensors() const;
};

struct HeadOutput {
  Vector start;      // M
  Vector end;        // M
  Vector highlight;  // M
  Matrix offsets;    // M x 2: distances from the frame centre to start / end
};

struct HeadCache {
  Vector query;      // q, D_v
  Matrix modulated;  // H = Z ⊙ q
  HeadOutput out;
};

HeadCache HeadForwardCached(const Matrix& fused, std::span<const double> query,
                            const GrounderParams& params);
HeadOutput HeadForward(const Matrix& fused, std::span<const double> query,
                       const GrounderParams& params);

/// Upstream gradients; empty members are treated as zero.
struct HeadOutputGrad {
  Vector start;
  Vector end;
  Vector highlight;
  Matrix offsets;
};

/// Accumulates parameter gradients, ∂L/∂Z and ∂L/∂z_q.
void HeadBackward(const HeadCache& cache, const Matrix& fused, std::span<const double> query,
                  const GrounderParams& params, const HeadOutputGrad& grad,
                  GrounderParams& g_params, Matrix& g_fused, Vector& g_query);

struct LogitLoss {
  double loss = 0.0;
  Vector grad;
};

struct SpanLossResult {
  double loss = 0.0;
  Vector grad_start;
  Vector grad_end;
};

/// CE(softmax(start), s) + CE(softmax(end), e) for a 1-based frame interval.
SpanLossResult SpanLoss(std::span<const double> start_logits, std::span<const double> end_logits,
                        const Interval& gt_frames);

/// Per-frame highlight labels: 1 on the GT frames, widened on each side by
/// extension_ratio · GT length.
std::vector<double> HighlightLabels(std::size_t n_frames, const Interval& gt_frames,
                                    double extension_ratio = 0.0);

/// Mean BCE of σ(highlight) against HighlightLabels.
LogitLoss QghLoss(std::span<const double> highlight_logits, const Interval& gt_frames,
                  double extension_ratio = 0.0);

/// Mean α-balanced binary focal loss over frames.
LogitLoss FocalLoss(std::span<const double> highlight_logits, const Interval& gt_frames,
                    double alpha, double gamma_f, double extension_ratio = 0.0);

struct DiouResult {
  double loss = 0.0;
  double grad_start = 0.0;
  double grad_end = 0.0;
};

/// 1 − IoU + d²/c² in one dimension (d: centre distance, c: enclosing length).
DiouResult DiouLoss(const Interval& pred, const Interval& gt);

struct DecodeOptions {
  std::size_t top_boundaries = 20;
  double nms_iou = 0.7;
};

/// Start/end pairs from the top boundary logits scored by p_start · p_end,
/// greedily suppressed at IoU ≥ nms_iou, returned in seconds.
PredictionSet DecodePredictions(std::span<const double> start_logits,
                                std::span<const double> end_logits, std::size_t k, double fps,
                                const DecodeOptions& options = {});

/// One candidate per frame, [centre − offset₀, centre + offset₁], scored by
/// σ(highlight), clipped to the video and suppressed like DecodePredictions.
PredictionSet DecodeAnchorPredictions(std::span<const double> highlight_logits,
                                      const Matrix& offsets, std::size_t k, double fps,
                                      const DecodeOptions& options = {});

/// Greedy NMS over candidates already sorted by descending score.
std::vector<Candidate> SuppressOverlaps(std::span<const Candidate> sorted, std::size_t k,
                                        double iou_threshold);

}  // namespace eivlg
