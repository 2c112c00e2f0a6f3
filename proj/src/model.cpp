#include "eivlg/model.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "eivlg/error.hpp"
#include "eivlg/log.hpp"
#include "eivlg/rng.hpp"

namespace eivlg {

void GroundingModel::Validate() const {
  encoder.Validate();
  infuser.Validate();
  grounder.Validate();
  if (encoder.dim != infuser.dims.d_t || grounder.d_t != infuser.dims.d_t ||
      grounder.d_v != infuser.dims.d_v)
    throw DataError("grounding model: encoder/infuser/grounder dimensions disagree");
}

VlgGrads VlgGrads::ZerosLike(const InfuserParams& infuser, const GrounderParams& grounder,
                             std::size_t n_captions) {
  return {InfuserParams::Zeros(infuser.dims), GrounderParams::Zeros(grounder.d_t, grounder.d_v),
          Matrix(n_captions, infuser.dims.d_t), Vector(infuser.dims.d_t, 0.0)};
}

AnchorInterval AnchorPrediction(std::span<const double> highlight, const Matrix& offsets) {
  const auto it = std::max_element(highlight.begin(), highlight.end());
  AnchorInterval a;
  a.anchor = static_cast<std::size_t>(it - highlight.begin());
  const double centre = static_cast<double>(a.anchor) + 0.5;
  double s = centre - offsets(a.anchor, 0);
  double e = centre + offsets(a.anchor, 1);
  if (s > e) {
    std::swap(s, e);
    a.swapped = true;
  }
  a.interval = Interval{s, e, TimeUnit::kFrames};
  return a;
}

double VlgLoss(const InfuserParams& infuser, const GrounderParams& grounder,
               FusionVariant variant, const LossOptions& options, const Matrix& raw_video,
               const Matrix& env, std::span<const double> query, const Interval& gt_frames,
               VlgGrads* grads) {
  const MlpCache mlp = VideoMlp(raw_video, infuser);
  const InfuseCache fused = InfuseCached(mlp.output, env, query, infuser, variant);
  const HeadCache head = HeadForwardCached(fused.output, query, grounder);
  const std::size_t m = raw_video.rows();

  double loss = 0.0;
  HeadOutputGrad g_head;
  if (options.suite == LossSuite::kSpanQgh) {
    const SpanLossResult span = SpanLoss(head.out.start, head.out.end, gt_frames);
    const LogitLoss qgh = QghLoss(head.out.highlight, gt_frames, options.qgh_extension);
    loss = span.loss + qgh.loss;
    g_head.start = span.grad_start;
    g_head.end = span.grad_end;
    g_head.highlight = qgh.grad;
  } else {
    const LogitLoss focal = FocalLoss(head.out.highlight, gt_frames, options.focal_alpha,
                                      options.focal_gamma, options.qgh_extension);
    const AnchorInterval anchor = AnchorPrediction(head.out.highlight, head.out.offsets);
    const Interval gt_cont{gt_frames.start - 1.0, gt_frames.end, TimeUnit::kFrames};
    const DiouResult diou = DiouLoss(anchor.interval, gt_cont);
    loss = focal.loss + diou.loss;
    g_head.highlight = focal.grad;
    g_head.offsets = Matrix(m, 2);
    // start = centre − offset₀, end = centre + offset₁ (before any swap)
    const double g_s = anchor.swapped ? diou.grad_end : diou.grad_start;
    const double g_e = anchor.swapped ? diou.grad_start : diou.grad_end;
    g_head.offsets(anchor.anchor, 0) = -g_s;
    g_head.offsets(anchor.anchor, 1) = g_e;
  }
  if (grads == nullptr) return loss;

  Matrix g_fused(m, infuser.dims.d_v);
  HeadBackward(head, fused.output, query, grounder, g_head, grads->grounder, g_fused,
               grads->query);
  Matrix g_video(m, infuser.dims.d_v);
  InfuseBackward(fused, mlp.output, env, query, infuser, g_fused, grads->infuser, g_video,
                 grads->env, grads->query);
  VideoMlpBackward(mlp, raw_video, g_video, infuser, grads->infuser);
  return loss;
}

namespace {

struct PreparedSample {
  std::size_t index = 0;
  Interval gt_frames;
  Matrix env;    // frozen encoder only
  Vector query;
};

template <typename Params>
void ZeroTensors(Params& p) {
  for (auto t : p.Tensors()) std::fill(t.begin(), t.end(), 0.0);
}

}  // namespace

GrounderTrainResult TrainGrounder(std::span<const GroundingSample> dataset, GroundingModel init,
                                  const GrounderTrainConfig& config) {
  if (dataset.empty()) throw DataError("train_grounder: empty dataset");
  if (config.epochs < 0) throw UsageError("train_grounder: epochs must be >= 0");
  init.variant = config.variant;
  init.suite = config.loss.suite;
  init.Validate();

  GrounderTrainResult result;
  result.model = std::move(init);
  auto& model = result.model;

  std::vector<PreparedSample> prepared;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset[i];
    if (!(s.gt.length() > 0.0)) {
      spdlog::warn("train_grounder: skipping {} (zero-length ground truth)", s.query_id);
      continue;
    }
    if (static_cast<long>(s.video_features.rows()) != s.video.frame_count) {
      throw DataError("train_grounder: " + s.query_id + " feature rows != frame count");
    }
    PreparedSample p;
    p.index = i;
    p.gt_frames = SecondsToFrames(s.gt, s.video.fps, s.video.frame_count);
    if (!config.train_encoder) {
      p.env = EncodeCaptions(s.captions, model.encoder);
      p.query = EncodeText(s.query, model.encoder);
    }
    prepared.push_back(std::move(p));
  }
  result.skipped = static_cast<long>(dataset.size() - prepared.size());
  if (prepared.empty()) {
    if (config.epochs > 0) throw DataError("train_grounder: no usable samples");
    return result;
  }

  AdamWState opt;
  opt.config = config.adamw;
  AdamWState encoder_opt;
  encoder_opt.config = config.adamw;
  VlgGrads grads = VlgGrads::ZerosLike(model.infuser, model.grounder, 1);
  TextEncoderParams encoder_grads =
      config.train_encoder ? TextEncoderParams::Zeros(model.encoder.vocab_size, model.encoder.dim)
                           : TextEncoderParams{};

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(prepared.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    CounterRng rng(config.seed, StreamId(Stream::kEpochOrder), static_cast<std::uint64_t>(epoch));
    rng.Shuffle(std::span<std::size_t>(order));

    double total = 0.0;
    for (std::size_t o : order) {
      const PreparedSample& p = prepared[o];
      const GroundingSample& s = dataset[p.index];
      ZeroTensors(grads.infuser);
      ZeroTensors(grads.grounder);

      std::vector<TextEncoding> caption_enc;
      TextEncoding query_enc;
      Matrix env_live;
      const Matrix* env = &p.env;
      const Vector* query = &p.query;
      if (config.train_encoder) {
        env_live = Matrix(s.captions.entries.size(), model.encoder.dim);
        for (std::size_t i = 0; i < s.captions.entries.size(); ++i) {
          caption_enc.push_back(EncodeTextCached(s.captions.entries[i].text, model.encoder));
          std::copy(caption_enc.back().output.begin(), caption_enc.back().output.end(),
                    env_live.row(i).begin());
        }
        query_enc = EncodeTextCached(s.query, model.encoder);
        env = &env_live;
        query = &query_enc.output;
      }
      grads.env = Matrix(env->rows(), env->cols());
      grads.query.assign(env->cols(), 0.0);

      const double loss = VlgLoss(model.infuser, model.grounder, model.variant, config.loss,
                                  s.video_features, *env, *query, p.gt_frames, &grads);
      if (!std::isfinite(loss)) throw NumericError("train_grounder: non-finite loss on " + s.query_id);
      total += loss;

      auto ip = model.infuser.Tensors();
      auto gp = model.grounder.Tensors();
      ip.insert(ip.end(), gp.begin(), gp.end());
      auto ig = std::as_const(grads.infuser).Tensors();
      auto gg = std::as_const(grads.grounder).Tensors();
      ig.insert(ig.end(), gg.begin(), gg.end());
      AdamWStep(ip, ig, opt);

      if (config.train_encoder) {
        ZeroTensors(encoder_grads);
        for (std::size_t i = 0; i < caption_enc.size(); ++i)
          AccumulateEncoderGrad(caption_enc[i], grads.env.row(i), model.encoder, encoder_grads);
        AccumulateEncoderGrad(query_enc, grads.query, model.encoder, encoder_grads);
        auto ep = model.encoder.Tensors();
        auto eg = std::as_const(encoder_grads).Tensors();
        AdamWStep(ep, eg, encoder_opt);
      }
      ++result.steps;
    }
    result.epoch_loss.push_back(total / static_cast<double>(order.size()));
    spdlog::info("train_grounder[{}]: epoch {} mean loss {:.6f}", FusionVariantName(model.variant),
                 epoch + 1, result.epoch_loss.back());
  }
  return result;
}

PredictionSet Predict(const GroundingModel& model, const GroundingSample& sample, std::size_t k) {
  const Matrix env = EncodeCaptions(sample.captions, model.encoder);
  const Vector query = EncodeText(sample.query, model.encoder);
  const MlpCache mlp = VideoMlp(sample.video_features, model.infuser);
  const Matrix fused = Infuse(mlp.output, env, query, model.infuser, model.variant);
  const HeadOutput head = HeadForward(fused, query, model.grounder);
  PredictionSet out = model.suite == LossSuite::kSpanQgh
                          ? DecodePredictions(head.start, head.end, k, sample.video.fps)
                          : DecodeAnchorPredictions(head.highlight, head.offsets, k,
                                                    sample.video.fps);
  out.query_id = sample.query_id;
  return out;
}

}  // namespace eivlg
