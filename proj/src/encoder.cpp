#include "eivlg/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <utility>

#include "eivlg/error.hpp"
#include "eivlg/log.hpp"
#include "eivlg/rng.hpp"

namespace eivlg {

TextEncoderParams TextEncoderParams::Init(std::size_t vocab_size, std::size_t dim,
                                          std::uint64_t seed, bool normalize) {
  TextEncoderParams p = Zeros(vocab_size, dim);
  p.normalize = normalize;
  p.seed = seed;
  CounterRng rng(seed, StreamId(Stream::kEncoderInit));
  for (double& x : p.token_table.values()) x = rng.Symmetric(1.0);
  const double limit = std::sqrt(6.0 / static_cast<double>(2 * dim));
  for (double& x : p.projection.values()) x = rng.Symmetric(limit);
  return p;
}

TextEncoderParams TextEncoderParams::Zeros(std::size_t vocab_size, std::size_t dim) {
  if (vocab_size < 2 || dim < 2)
    throw DataError("text encoder needs vocab_size >= 2 and dim >= 2");
  TextEncoderParams p;
  p.vocab_size = vocab_size;
  p.dim = dim;
  p.token_table = Matrix(vocab_size, dim);
  p.projection = Matrix(dim, dim);
  p.bias = Vector(dim, 0.0);
  return p;
}

void TextEncoderParams::Validate() const {
  if (vocab_size < 2 || dim < 2) throw DataError("text encoder: V and D_t must be >= 2");
  RequireShape(token_table, vocab_size, dim, "token_table");
  RequireShape(projection, dim, dim, "projection");
  if (bias.size() != dim) throw DataError("text encoder: bias length != D_t");
  for (auto t : Tensors())
    if (!AllFinite(t)) throw NumericError("text encoder: non-finite parameter");
}

std::vector<std::span<double>> TextEncoderParams::Tensors() {
  return {token_table.values(), projection.values(), bias};
}

std::vector<std::span<const double>> TextEncoderParams::Tensors() const {
  return {token_table.values(), projection.values(), bias};
}

std::uint64_t Fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<TokenId> Tokenize(std::string_view text, std::size_t vocab_size) {
  std::vector<TokenId> ids;
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    ids.push_back(static_cast<TokenId>(Fnv1a64(token) % vocab_size));
    token.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      token.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  if (ids.empty()) ids.push_back(0);
  return ids;
}

TextEncoding EncodeTextCached(std::string_view text, const TextEncoderParams& params) {
  TextEncoding enc;
  enc.tokens = Tokenize(text, params.vocab_size);
  enc.pooled.assign(params.dim, 0.0);
  const double w = 1.0 / static_cast<double>(enc.tokens.size());
  for (TokenId id : enc.tokens) Axpy(w, params.token_table.row(id), enc.pooled);
  enc.projected = VecMat(enc.pooled, params.projection);
  for (std::size_t i = 0; i < params.dim; ++i) enc.projected[i] += params.bias[i];
  enc.output = enc.projected;
  if (params.normalize) {
    enc.norm = std::sqrt(Dot(enc.projected, enc.projected));
    if (!(enc.norm > 0.0) || !std::isfinite(enc.norm))
      throw NumericError("encode_text: projected embedding has zero or non-finite norm");
    for (double& x : enc.output) x /= enc.norm;
  }
  return enc;
}

Vector EncodeText(std::string_view text, const TextEncoderParams& params) {
  return EncodeTextCached(text, params).output;
}

Matrix EncodeCaptions(const CaptionTrack& track, const TextEncoderParams& params) {
  Matrix out(track.entries.size(), params.dim);
  for (std::size_t i = 0; i < track.entries.size(); ++i) {
    const Vector row = EncodeText(track.entries[i].text, params);
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

void AccumulateEncoderGrad(const TextEncoding& enc, std::span<const double> grad_output,
                           const TextEncoderParams& params, TextEncoderParams& grads) {
  Vector g_proj(grad_output.begin(), grad_output.end());
  if (params.normalize) {
    const double along = Dot(enc.output, grad_output);
    for (std::size_t i = 0; i < g_proj.size(); ++i)
      g_proj[i] = (grad_output[i] - enc.output[i] * along) / enc.norm;
  }
  Axpy(1.0, g_proj, grads.bias);
  AddOuter(grads.projection, enc.pooled, g_proj);
  const Vector g_pooled = MatVec(params.projection, g_proj);
  const double w = 1.0 / static_cast<double>(enc.tokens.size());
  for (TokenId id : enc.tokens) Axpy(w, g_pooled, grads.token_table.row(id));
}

EncodedEnvironment EncodeEnvironment(const GroundingSample& sample,
                                     const TextEncoderParams& params) {
  return {sample.video.video_id, EncodeCaptions(sample.captions, params),
          EncodeText(sample.query, params)};
}

std::vector<long> SubsampleFrames(const VideoMeta& video, double interval_s) {
  if (!(interval_s > 0.0)) throw DataError("subsample_frames: interval must be positive");
  video.Validate();
  const auto count = std::max<long>(
      1, static_cast<long>(std::ceil(video.duration_s / interval_s - 1e-9)));
  std::vector<long> frames;
  frames.reserve(static_cast<std::size_t>(count));
  for (long k = 0; k < count; ++k) {
    const double t = static_cast<double>(k) * interval_s;
    const long frame = static_cast<long>(std::floor(t * video.fps + 1e-9)) + 1;
    frames.push_back(std::min(frame, video.frame_count));
  }
  return frames;
}

CaptionSpan MapGtToCaptionSpan(const Interval& gt, const CaptionTrack& track) {
  if (track.entries.empty()) throw DataError("map_gt_to_caption_span: empty caption track");
  if (gt.unit != TimeUnit::kSeconds) throw DataError("map_gt_to_caption_span: gt must be in seconds");
  const double slack = track.interval_s / 2.0;
  const int n = static_cast<int>(track.entries.size());
  int first = n + 1;
  int last = 0;
  for (int i = 0; i < n; ++i) {
    const double t = track.entries[static_cast<std::size_t>(i)].time_s;
    if (t >= gt.start - slack && first > n) first = i + 1;
    if (t <= gt.end + slack) last = i + 1;
  }
  if (first <= last) return {first, last};
  const double mid = 0.5 * (gt.start + gt.end);
  int nearest = 1;
  double best = std::abs(track.entries[0].time_s - mid);
  for (int i = 1; i < n; ++i) {
    const double d = std::abs(track.entries[static_cast<std::size_t>(i)].time_s - mid);
    if (d < best) {
      best = d;
      nearest = i + 1;
    }
  }
  return {nearest, nearest};
}

namespace {

void RequireSpan(const Matrix& captions, std::span<const double> query, CaptionSpan span) {
  if (captions.rows() == 0) throw DataError("contrastive loss: no captions");
  if (query.size() != captions.cols()) throw DataError("contrastive loss: query width != caption width");
  if (span.first < 1 || span.last < span.first || span.last > static_cast<int>(captions.rows()))
    throw DataError("contrastive loss: caption span [" + std::to_string(span.first) + ", " +
                    std::to_string(span.last) + "] outside [1, " +
                    std::to_string(captions.rows()) + "]");
}

ContrastiveLoss FromLogitGrad(const Matrix& captions, std::span<const double> query,
                              double loss, const Vector& g_logits) {
  ContrastiveLoss out;
  out.loss = loss;
  out.grad_captions = Matrix(captions.rows(), captions.cols());
  for (std::size_t i = 0; i < captions.rows(); ++i)
    Axpy(g_logits[i], query, out.grad_captions.row(i));
  out.grad_query = VecMat(g_logits, captions);
  return out;
}

}  // namespace

ContrastiveLoss MllLoss(const Matrix& captions, std::span<const double> query,
                        CaptionSpan span) {
  RequireSpan(captions, query, span);
  const Vector logits = MatVec(captions, query);
  const auto lo = static_cast<std::size_t>(span.first - 1);
  const auto hi = static_cast<std::size_t>(span.last);
  const std::span<const double> inside(logits.data() + lo, hi - lo);
  // Full span: ratio is exactly one.
  const double loss = (lo == 0 && hi == logits.size())
                          ? 0.0
                          : std::max(0.0, LogSumExp(logits) - LogSumExp(inside));
  Vector g = Softmax(logits);
  const Vector inside_p = Softmax(inside);
  for (std::size_t i = lo; i < hi; ++i) g[i] -= inside_p[i - lo];
  return FromLogitGrad(captions, query, loss, g);
}

ContrastiveLoss BceLoss(const Matrix& captions, std::span<const double> query,
                        CaptionSpan span) {
  RequireSpan(captions, query, span);
  const Vector logits = MatVec(captions, query);
  const double n = static_cast<double>(logits.size());
  double loss = 0.0;
  Vector g(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const bool positive = static_cast<int>(i) + 1 >= span.first && static_cast<int>(i) + 1 <= span.last;
    // −log σ(x) = softplus(−x); −log(1 − σ(x)) = softplus(x)
    loss += positive ? Softplus(-logits[i]) : Softplus(logits[i]);
    g[i] = (Sigmoid(logits[i]) - (positive ? 1.0 : 0.0)) / n;
  }
  return FromLogitGrad(captions, query, loss / n, g);
}

EncoderTrainResult TrainEncoder(std::span<const GroundingSample> dataset,
                                TextEncoderParams init, const EncoderTrainConfig& config) {
  if (dataset.empty()) throw DataError("train_encoder: empty dataset");
  if (config.epochs < 0) throw UsageError("train_encoder: epochs must be >= 0");
  init.Validate();

  // Resolve supervision once; unusable samples are skipped every epoch.
  std::vector<std::size_t> usable;
  std::vector<CaptionSpan> spans(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset[i];
    if (!(s.gt.length() > 0.0) || s.captions.entries.empty()) {
      spdlog::warn("train_encoder: skipping {} (degenerate ground truth)", s.query_id);
      continue;
    }
    spans[i] = MapGtToCaptionSpan(s.gt, s.captions);
    usable.push_back(i);
  }

  EncoderTrainResult result;
  result.params = std::move(init);
  result.skipped = static_cast<long>(dataset.size() - usable.size());
  if (usable.empty()) {
    if (config.epochs > 0) throw DataError("train_encoder: no usable samples");
    return result;
  }

  AdamWState opt;
  opt.config = config.adamw;
  TextEncoderParams grads = TextEncoderParams::Zeros(result.params.vocab_size, result.params.dim);
  auto& params = result.params;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order = usable;
    CounterRng rng(config.seed, StreamId(Stream::kEpochOrder), static_cast<std::uint64_t>(epoch));
    rng.Shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    for (std::size_t idx : order) {
      const auto& sample = dataset[idx];
      std::vector<TextEncoding> caption_enc;
      caption_enc.reserve(sample.captions.entries.size());
      Matrix captions(sample.captions.entries.size(), params.dim);
      for (std::size_t i = 0; i < sample.captions.entries.size(); ++i) {
        caption_enc.push_back(EncodeTextCached(sample.captions.entries[i].text, params));
        std::copy(caption_enc.back().output.begin(), caption_enc.back().output.end(),
                  captions.row(i).begin());
      }
      const TextEncoding query_enc = EncodeTextCached(sample.query, params);
      const ContrastiveLoss loss = config.loss == EncoderLoss::kMll
                                       ? MllLoss(captions, query_enc.output, spans[idx])
                                       : BceLoss(captions, query_enc.output, spans[idx]);
      if (!std::isfinite(loss.loss)) throw NumericError("train_encoder: non-finite loss");
      total += loss.loss;

      for (auto t : grads.Tensors()) std::fill(t.begin(), t.end(), 0.0);
      for (std::size_t i = 0; i < caption_enc.size(); ++i)
        AccumulateEncoderGrad(caption_enc[i], loss.grad_captions.row(i), params, grads);
      AccumulateEncoderGrad(query_enc, loss.grad_query, params, grads);

      auto p = params.Tensors();
      auto g = std::as_const(grads).Tensors();
      AdamWStep(p, g, opt);
      ++result.steps;
    }
    result.epoch_loss.push_back(total / static_cast<double>(order.size()));
    spdlog::info("train_encoder: epoch {} mean loss {:.6f}", epoch + 1, result.epoch_loss.back());
  }
  return result;
}

}  // namespace eivlg
