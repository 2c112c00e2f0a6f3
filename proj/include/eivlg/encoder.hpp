#pragma once

// Environment encoder g(·;θ): hash-bucket token embeddings, mean pooling, an
// affine projection and (optionally) L2 normalisation. Captions and queries
// share the same parameters. Trained with the marginal log-likelihood loss
// over captions inside the ground-truth interval, or with per-caption BCE.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eivlg/core.hpp"
#include "eivlg/numerics.hpp"

namespace eivlg {

using TokenId = std::uint32_t;

struct TextEncoderParams {
  std::size_t vocab_size = 0;
  std::size_t dim = 0;
  Matrix token_table;  // V x D_t
  Matrix projection;   // D_t x D_t, applied as row-vector · projection
  Vector bias;         // D_t
  bool normalize = true;
  std::uint64_t seed = 0;  // seed the parameters were initialised from

  static TextEncoderParams Init(std::size_t vocab_size, std::size_t dim,
                                std::uint64_t seed, bool normalize = true);
  static TextEncoderParams Zeros(std::size_t vocab_size, std::size_t dim);
  void Validate() const;

  std::vector<std::span<double>> Tensors();
  std::vector<std::span<const double>> Tensors() const;
};

std::uint64_t Fnv1a64(std::string_view bytes);

/// Lowercases, splits on runs of non-alphanumeric ASCII and hashes each token
/// with FNV-1a-64 mod vocab_size. Text without tokens yields {0}.
std::vector<TokenId> Tokenize(std::string_view text, std::size_t vocab_size);

/// Intermediate values of one encoding, kept for the backward pass.
struct TextEncoding {
  std::vector<TokenId> tokens;
  Vector pooled;     // mean token embedding
  Vector projected;  // pooled · P + b
  double norm = 1.0;
  Vector output;
};

TextEncoding EncodeTextCached(std::string_view text, const TextEncoderParams& params);
Vector EncodeText(std::string_view text, const TextEncoderParams& params);
Matrix EncodeCaptions(const CaptionTrack& track, const TextEncoderParams& params);

/// Adds ∂L/∂θ given ∂L/∂output for one encoding.
void AccumulateEncoderGrad(const TextEncoding& enc, std::span<const double> grad_output,
                           const TextEncoderParams& params, TextEncoderParams& grads);

struct EncodedEnvironment {
  std::string video_id;
  Matrix captions;  // Z_e, N x D_t
  Vector query;     // z_q, D_t
};

EncodedEnvironment EncodeEnvironment(const GroundingSample& sample,
                                     const TextEncoderParams& params);

/// Grid of sampled frame indices (1-based) at t = 0, interval, 2·interval, ...
/// strictly inside the video; N = ⌈duration / interval⌉ (at least 1).
std::vector<long> SubsampleFrames(const VideoMeta& video, double interval_s);

/// 1-based inclusive caption range.
struct CaptionSpan {
  int first = 1;
  int last = 1;
  int size() const { return last - first + 1; }
  bool operator==(const CaptionSpan&) const = default;
};

/// Captions whose timestamps fall within half a caption interval of the GT;
/// falls back to the caption nearest the GT midpoint.
CaptionSpan MapGtToCaptionSpan(const Interval& gt, const CaptionTrack& track);

struct ContrastiveLoss {
  double loss = 0.0;
  Matrix grad_captions;  // ∂L/∂Z_e
  Vector grad_query;     // ∂L/∂z_q
};

/// −log Σ_{i∈span} exp(zᵢᵀz_q) / Σ_j exp(z_jᵀz_q), gradients for both sides.
ContrastiveLoss MllLoss(const Matrix& captions, std::span<const double> query,
                        CaptionSpan span);
/// Mean binary cross-entropy of σ(zᵢᵀz_q) against in-span labels.
ContrastiveLoss BceLoss(const Matrix& captions, std::span<const double> query,
                        CaptionSpan span);

enum class EncoderLoss { kMll, kBce };

struct EncoderTrainConfig {
  int epochs = 20;
  AdamWConfig adamw;
  EncoderLoss loss = EncoderLoss::kMll;
  std::uint64_t seed = 0;
};

struct EncoderTrainResult {
  TextEncoderParams params;
  std::vector<double> epoch_loss;  // mean pre-update loss per epoch
  long steps = 0;
  long skipped = 0;  // per epoch
};

/// Batch size 1; the per-epoch sample order is a shuffle keyed on (seed, epoch).
EncoderTrainResult TrainEncoder(std::span<const GroundingSample> dataset,
                                TextEncoderParams init, const EncoderTrainConfig& config);

}  // namespace eivlg
