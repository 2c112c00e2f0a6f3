#pragma once

// The full grounding model: environment encoder, video MLP, infuser and
// localisation head, composed into one differentiable per-sample loss.

#include <cstdint>
#include <span>
#include <vector>

#include "eivlg/core.hpp"
#include "eivlg/encoder.hpp"
#include "eivlg/grounder.hpp"
#include "eivlg/infuser.hpp"

namespace eivlg {

struct GroundingModel {
  TextEncoderParams encoder;
  InfuserParams infuser;
  GrounderParams grounder;
  FusionVariant variant = FusionVariant::kConcat;
  LossSuite suite = LossSuite::kSpanQgh;

  void Validate() const;
};

struct LossOptions {
  LossSuite suite = LossSuite::kSpanQgh;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double qgh_extension = 0.0;
};

struct VlgGrads {
  InfuserParams infuser;
  GrounderParams grounder;
  Matrix env;    // ∂L/∂Z_e
  Vector query;  // ∂L/∂z_q

  static VlgGrads ZerosLike(const InfuserParams& infuser, const GrounderParams& grounder,
                            std::size_t n_captions);
};

/// Anchor frame and interval (continuous frame units, frame j spans [j-1, j])
/// fed to the DIoU term: argmax highlight, offsets taken at that frame.
struct AnchorInterval {
  std::size_t anchor = 0;  // 0-based
  Interval interval;
  bool swapped = false;
};
AnchorInterval AnchorPrediction(std::span<const double> highlight, const Matrix& offsets);

/// L_vlg for one sample: raw video features → MLP → infuser → head → loss
/// suite. When `grads` is non-null it receives accumulated gradients.
double VlgLoss(const InfuserParams& infuser, const GrounderParams& grounder,
               FusionVariant variant, const LossOptions& options, const Matrix& raw_video,
               const Matrix& env, std::span<const double> query, const Interval& gt_frames,
               VlgGrads* grads);

struct GrounderTrainConfig {
  int epochs = 20;
  AdamWConfig adamw;
  LossOptions loss;
  FusionVariant variant = FusionVariant::kConcat;
  bool train_encoder = false;
  std::uint64_t seed = 0;
};

struct GrounderTrainResult {
  GroundingModel model;
  std::vector<double> epoch_loss;
  long steps = 0;
  long skipped = 0;
};

/// Minimises L_vlg with AdamW, batch size 1, per-epoch order keyed on
/// (seed, epoch). The encoder is frozen unless config.train_encoder is set.
GrounderTrainResult TrainGrounder(std::span<const GroundingSample> dataset, GroundingModel init,
                                  const GrounderTrainConfig& config);

/// Ranked candidates for one sample (start/end decoding for span_qgh, anchor
/// decoding for focal_diou).
PredictionSet Predict(const GroundingModel& model, const GroundingSample& sample, std::size_t k);

}  // namespace eivlg
