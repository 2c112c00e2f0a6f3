#include "eivlg/grounder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "eivlg/error.hpp"
#include "eivlg/kernels.hpp"
#include "eivlg/rng.hpp"

namespace eivlg {

std::string_view LossSuiteName(LossSuite s) {
  return s == LossSuite::kSpanQgh ? "span_qgh" : "focal_diou";
}

LossSuite ParseLossSuite(std::string_view name) {
  if (name == "span_qgh") return LossSuite::kSpanQgh;
  if (name == "focal_diou") return LossSuite::kFocalDiou;
  throw UsageError("unknown loss suite '" + std::string(name) + "'");
}

GrounderParams GrounderParams::Zeros(std::size_t d_t, std::size_t d_v) {
  if (d_t < 1 || d_v < 1) throw DataError("grounder: dimensions must be >= 1");
  GrounderParams p;
  p.d_t = d_t;
  p.d_v = d_v;
  p.query_proj = Matrix(d_t, d_v);
  p.start_w = Vector(d_v, 0.0);
  p.end_w = Vector(d_v, 0.0);
  p.highlight_w = Vector(d_v, 0.0);
  p.regression_w = Matrix(d_v, 2);
  p.regression_b = Vector(2, 0.0);
  return p;
}

GrounderParams GrounderParams::Init(std::size_t d_t, std::size_t d_v, std::uint64_t seed) {
  GrounderParams p = Zeros(d_t, d_v);
  CounterRng rng(seed, StreamId(Stream::kGrounderInit));
  const double q_limit = std::sqrt(6.0 / static_cast<double>(d_t + d_v));
  for (double& x : p.query_proj.values()) x = rng.Symmetric(q_limit);
  const double h_limit = 1.0 / std::sqrt(static_cast<double>(d_v));
  for (Vector* w : {&p.start_w, &p.end_w, &p.highlight_w})
    for (double& x : *w) x = rng.Symmetric(h_limit);
  for (double& x : p.regression_w.values()) x = rng.Symmetric(h_limit);
  return p;
}

void GrounderParams::Validate() const {
  RequireShape(query_proj, d_t, d_v, "grounder query_proj");
  RequireShape(regression_w, d_v, 2, "grounder regression_w");
  if (start_w.size() != d_v || end_w.size() != d_v || highlight_w.size() != d_v ||
      regression_b.size() != 2)
    throw DataError("grounder: head weight lengths inconsistent with D_v");
  for (auto t : Tensors())
    if (!AllFinite(t)) throw NumericError("grounder: non-finite parameter");
}

std::vector<std::span<double>> GrounderParams::Tensors() {
  return {query_proj.values(), start_w,      std::span<double>(&start_b, 1),
          end_w,               std::span<double>(&end_b, 1),
          highlight_w,         std::span<double>(&highlight_b, 1),
          regression_w.values(), regression_b};
}

std::vector<std::span<const double>> GrounderParams::Tensors() const {
  return {query_proj.values(), start_w,      std::span<const double>(&start_b, 1),
          end_w,               std::span<const double>(&end_b, 1),
          highlight_w,         std::span<const double>(&highlight_b, 1),
          regression_w.values(), regression_b};
}

HeadCache HeadForwardCached(const Matrix& fused, std::span<const double> query,
                            const GrounderParams& params) {
  if (fused.cols() != params.d_v || fused.rows() == 0)
    throw DataError("grounder forward: Z width != D_v");
  if (query.size() != params.d_t) throw DataError("grounder forward: z_q length != D_t");
  HeadCache c;
  c.query = VecMat(query, params.query_proj);
  const std::size_t m = fused.rows();
  c.modulated = Matrix(m, params.d_v);
  for (std::size_t j = 0; j < m; ++j) {
    kernels::Mul(fused.row(j).data(), c.query.data(), c.modulated.row(j).data(), params.d_v);
  }
  c.out.start = MatVec(c.modulated, params.start_w);
  c.out.end = MatVec(c.modulated, params.end_w);
  c.out.highlight = MatVec(c.modulated, params.highlight_w);
  c.out.offsets = MatMul(c.modulated, params.regression_w);
  for (std::size_t j = 0; j < m; ++j) {
    c.out.start[j] += params.start_b;
    c.out.end[j] += params.end_b;
    c.out.highlight[j] += params.highlight_b;
    c.out.offsets(j, 0) += params.regression_b[0];
    c.out.offsets(j, 1) += params.regression_b[1];
  }
  return c;
}

HeadOutput HeadForward(const Matrix& fused, std::span<const double> query,
                       const GrounderParams& params) {
  return HeadForwardCached(fused, query, params).out;
}

void HeadBackward(const HeadCache& cache, const Matrix& fused, std::span<const double> query,
                  const GrounderParams& params, const HeadOutputGrad& grad,
                  GrounderParams& g_params, Matrix& g_fused, Vector& g_query) {
  const std::size_t m = fused.rows();
  Matrix g_mod(m, params.d_v);
  auto head = [&](const Vector& g, const Vector& w, Vector& g_w, double& g_b) {
    if (g.empty()) return;
    if (g.size() != m) throw DataError("grounder backward: gradient length != M");
    Axpy(1.0, VecMat(g, cache.modulated), g_w);
    g_b += std::accumulate(g.begin(), g.end(), 0.0);
    for (std::size_t j = 0; j < m; ++j) Axpy(g[j], w, g_mod.row(j));
  };
  head(grad.start, params.start_w, g_params.start_w, g_params.start_b);
  head(grad.end, params.end_w, g_params.end_w, g_params.end_b);
  head(grad.highlight, params.highlight_w, g_params.highlight_w, g_params.highlight_b);
  if (!grad.offsets.empty()) {
    RequireShape(grad.offsets, m, 2, "grounder backward: offset gradient");
    AddInPlace(g_params.regression_w, MatMulTN(cache.modulated, grad.offsets));
    for (std::size_t j = 0; j < m; ++j) {
      g_params.regression_b[0] += grad.offsets(j, 0);
      g_params.regression_b[1] += grad.offsets(j, 1);
    }
    AddInPlace(g_mod, MatMulNT(grad.offsets, params.regression_w));
  }
  // H = Z ⊙ q
  Vector g_q(params.d_v, 0.0);
  Vector tmp(params.d_v);
  for (std::size_t j = 0; j < m; ++j) {
    kernels::Mul(g_mod.row(j).data(), cache.query.data(), tmp.data(), params.d_v);
    Axpy(1.0, tmp, g_fused.row(j));
    kernels::Mul(g_mod.row(j).data(), fused.row(j).data(), tmp.data(), params.d_v);
    Axpy(1.0, tmp, g_q);
  }
  AddOuter(g_params.query_proj, query, g_q);
  Axpy(1.0, MatVec(params.query_proj, g_q), g_query);
}

namespace {

struct FrameRange {
  std::size_t first;  // 0-based, inclusive
  std::size_t last;
};

FrameRange RequireFrames(const Interval& gt, std::size_t m, const char* what) {
  if (gt.unit != TimeUnit::kFrames) throw DataError(std::string(what) + ": gt must be in frames");
  if (gt.start < 1.0 || gt.end < gt.start || gt.end > static_cast<double>(m) ||
      gt.start != std::floor(gt.start) || gt.end != std::floor(gt.end))
    throw DataError(std::string(what) + ": gt frames outside [1, " + std::to_string(m) + "]");
  return {static_cast<std::size_t>(gt.start) - 1, static_cast<std::size_t>(gt.end) - 1};
}

// −log softmax(logits)[target] and its gradient softmax − onehot.
double CrossEntropy(std::span<const double> logits, std::size_t target, Vector& grad) {
  grad = Softmax(logits);
  grad[target] -= 1.0;
  return LogSumExp(logits) - logits[target];
}

}  // namespace

SpanLossResult SpanLoss(std::span<const double> start_logits, std::span<const double> end_logits,
                        const Interval& gt_frames) {
  if (start_logits.empty() || start_logits.size() != end_logits.size())
    throw DataError("span_loss: logit lengths differ or are empty");
  const auto r = RequireFrames(gt_frames, start_logits.size(), "span_loss");
  SpanLossResult out;
  out.loss = CrossEntropy(start_logits, r.first, out.grad_start) +
             CrossEntropy(end_logits, r.last, out.grad_end);
  return out;
}

std::vector<double> HighlightLabels(std::size_t n_frames, const Interval& gt_frames,
                                    double extension_ratio) {
  const auto r = RequireFrames(gt_frames, n_frames, "highlight_labels");
  if (extension_ratio < 0.0) throw DataError("highlight_labels: negative extension ratio");
  const auto ext = static_cast<std::size_t>(
      std::llround(extension_ratio * static_cast<double>(r.last - r.first + 1)));
  const std::size_t lo = r.first > ext ? r.first - ext : 0;
  const std::size_t hi = std::min(n_frames - 1, r.last + ext);
  std::vector<double> labels(n_frames, 0.0);
  for (std::size_t j = lo; j <= hi; ++j) labels[j] = 1.0;
  return labels;
}

LogitLoss QghLoss(std::span<const double> highlight_logits, const Interval& gt_frames,
                  double extension_ratio) {
  const auto labels = HighlightLabels(highlight_logits.size(), gt_frames, extension_ratio);
  const double n = static_cast<double>(highlight_logits.size());
  LogitLoss out;
  out.grad.resize(highlight_logits.size());
  for (std::size_t j = 0; j < highlight_logits.size(); ++j) {
    const double x = highlight_logits[j];
    const bool pos = labels[j] > 0.5;
    out.loss += pos ? Softplus(-x) : Softplus(x);
    out.grad[j] = (Sigmoid(x) - labels[j]) / n;
  }
  out.loss /= n;
  return out;
}

LogitLoss FocalLoss(std::span<const double> highlight_logits, const Interval& gt_frames,
                    double alpha, double gamma_f, double extension_ratio) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DataError("focal_loss: alpha must lie in (0, 1)");
  if (!(gamma_f >= 0.0) || !std::isfinite(gamma_f)) throw DataError("focal_loss: gamma must be >= 0");
  const auto labels = HighlightLabels(highlight_logits.size(), gt_frames, extension_ratio);
  const double n = static_cast<double>(highlight_logits.size());
  LogitLoss out;
  out.grad.resize(highlight_logits.size());
  for (std::size_t j = 0; j < highlight_logits.size(); ++j) {
    const double x = highlight_logits[j];
    const double p = Sigmoid(x);
    if (labels[j] > 0.5) {
      const double log_p = -Softplus(-x);
      const double w = std::pow(1.0 - p, gamma_f);
      out.loss += -alpha * w * log_p;
      out.grad[j] = alpha * w * (gamma_f * p * log_p - (1.0 - p)) / n;
    } else {
      const double log_q = -Softplus(x);
      const double w = std::pow(p, gamma_f);
      out.loss += -(1.0 - alpha) * w * log_q;
      out.grad[j] = (1.0 - alpha) * w * (p - gamma_f * (1.0 - p) * log_q) / n;
    }
  }
  out.loss /= n;
  return out;
}

DiouResult DiouLoss(const Interval& pred, const Interval& gt) {
  if (pred.unit != gt.unit) throw DataError("diou_loss: unit mismatch");
  if (pred.start > pred.end || gt.start > gt.end) throw DataError("diou_loss: reversed interval");
  const double a = pred.start, b = pred.end, c = gt.start, d = gt.end;
  const double enclose = std::max(b, d) - std::min(a, c);
  if (!(enclose > 0.0)) return {};

  const double lo = std::max(a, c), hi = std::min(b, d);
  const double inter = std::max(0.0, hi - lo);
  const double uni = (b - a) + (d - c) - inter;
  double iou = 0.0, diou_da = 0.0, diou_db = 0.0;
  if (uni > 0.0) {
    iou = inter / uni;
    if (inter > 0.0) {
      const double dinter_da = (a > c) ? -1.0 : 0.0;
      const double dinter_db = (b < d) ? 1.0 : 0.0;
      const double duni_da = -1.0 - dinter_da;
      const double duni_db = 1.0 - dinter_db;
      diou_da = (dinter_da * uni - inter * duni_da) / (uni * uni);
      diou_db = (dinter_db * uni - inter * duni_db) / (uni * uni);
    }
  }
  const double dist = 0.5 * (a + b) - 0.5 * (c + d);
  const double denc_da = (a < c) ? -1.0 : 0.0;
  const double denc_db = (b > d) ? 1.0 : 0.0;
  const double c2 = enclose * enclose;
  auto dterm = [&](double ddist, double denc) {
    return 2.0 * dist * ddist / c2 - 2.0 * dist * dist * denc / (c2 * enclose);
  };
  DiouResult r;
  r.loss = 1.0 - iou + dist * dist / c2;
  r.grad_start = -diou_da + dterm(0.5, denc_da);
  r.grad_end = -diou_db + dterm(0.5, denc_db);
  return r;
}

std::vector<Candidate> SuppressOverlaps(std::span<const Candidate> sorted, std::size_t k,
                                        double iou_threshold) {
  std::vector<Candidate> kept;
  for (const auto& c : sorted) {
    if (kept.size() >= k) break;
    const bool overlaps = std::any_of(kept.begin(), kept.end(), [&](const Candidate& o) {
      return IntervalIou(o.interval, c.interval) >= iou_threshold;
    });
    if (!overlaps) kept.push_back(c);
  }
  return kept;
}

namespace {

std::vector<std::size_t> TopIndices(std::span<const double> v, std::size_t k) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return v[a] > v[b] || (v[a] == v[b] && a < b);
                    });
  idx.resize(k);
  return idx;
}

void SortByScore(std::vector<Candidate>& cands) {
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.interval.start != b.interval.start) return a.interval.start < b.interval.start;
    return a.interval.end < b.interval.end;
  });
}

}  // namespace

PredictionSet DecodePredictions(std::span<const double> start_logits,
                                std::span<const double> end_logits, std::size_t k, double fps,
                                const DecodeOptions& options) {
  if (k < 1) throw UsageError("decode_predictions: k must be >= 1");
  if (start_logits.empty() || start_logits.size() != end_logits.size())
    throw DataError("decode_predictions: logit lengths differ or are empty");
  const Vector ps = Softmax(start_logits);
  const Vector pe = Softmax(end_logits);
  std::vector<Candidate> cands;
  for (std::size_t s : TopIndices(start_logits, options.top_boundaries)) {
    for (std::size_t e : TopIndices(end_logits, options.top_boundaries)) {
      if (s > e) continue;
      const Interval frames{static_cast<double>(s + 1), static_cast<double>(e + 1),
                            TimeUnit::kFrames};
      cands.push_back({FramesToSeconds(frames, fps), ps[s] * pe[e]});
    }
  }
  PredictionSet out;
  if (cands.empty()) {
    const Interval full{1.0, static_cast<double>(start_logits.size()), TimeUnit::kFrames};
    out.candidates.push_back({FramesToSeconds(full, fps), 0.0});
    return out;
  }
  SortByScore(cands);
  out.candidates = SuppressOverlaps(cands, k, options.nms_iou);
  return out;
}

PredictionSet DecodeAnchorPredictions(std::span<const double> highlight_logits,
                                      const Matrix& offsets, std::size_t k, double fps,
                                      const DecodeOptions& options) {
  if (k < 1) throw UsageError("decode_anchor_predictions: k must be >= 1");
  const std::size_t m = highlight_logits.size();
  if (m == 0) throw DataError("decode_anchor_predictions: no frames");
  RequireShape(offsets, m, 2, "decode_anchor_predictions: offsets");
  const double limit = static_cast<double>(m);
  std::vector<Candidate> cands;
  cands.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double centre = static_cast<double>(j) + 0.5;
    double s = std::clamp(centre - offsets(j, 0), 0.0, limit);
    double e = std::clamp(centre + offsets(j, 1), 0.0, limit);
    if (s > e) std::swap(s, e);
    cands.push_back({Interval{s / fps, e / fps, TimeUnit::kSeconds}, Sigmoid(highlight_logits[j])});
  }
  SortByScore(cands);
  PredictionSet out;
  out.candidates = SuppressOverlaps(cands, k, options.nms_iou);
  return out;
}

}  // namespace eivlg
