#pragma once

// Environment infuser. Fuses the environment features Z_e (one row per
// caption) into the video features Z_v:
//
//   Concat:          Z = Z_v + [E + tanh(γ)·CA(z_q, Z_e)·P | Z_v] W
//   Add:             Z = Z_v + E
//   CrossAttention:  Z = Z_v + CA(Z_v Pᵀ, Z_e)·P   (one query per frame)
//   None:            Z = Z_v   (no environment cues)
//
// where E = resample(Z_e, M)·P and P = env_proj maps D_t to D_v. Raw video
// features pass through a two-layer ReLU MLP before fusion.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "eivlg/numerics.hpp"

namespace eivlg {

enum class FusionVariant { kConcat, kAdd, kCrossAttention, kNone };

std::string_view FusionVariantName(FusionVariant v);
FusionVariant ParseFusionVariant(std::string_view name);

struct InfuserDims {
  std::size_t d_t = 64;
  std::size_t d_v = 32;
  std::size_t d_a = 64;
};

struct InfuserParams {
  InfuserDims dims;
  Matrix fuse;        // W, 2·D_v x D_v
  double gamma = 0.0;
  Matrix ca_query;    // D_t x D_a
  Matrix ca_key;      // D_t x D_a
  Matrix ca_value;    // D_t x D_t
  Matrix env_proj;    // D_t x D_v
  Matrix mlp_w1;      // D_v x D_v
  Vector mlp_b1;
  Matrix mlp_w2;      // D_v x D_v
  Vector mlp_b2;

  static InfuserParams Zeros(const InfuserDims& dims);
  static InfuserParams Init(const InfuserDims& dims, std::uint64_t seed);
  void Validate() const;

  /// Every learnable tensor in checkpoint order.
  std::vector<std::span<double>> Tensors();
  std::vector<std::span<const double>> Tensors() const;
};

/// Caption index (0-based) feeding frame row j: min(N, ⌊j·N/M⌋ + 1) − 1.
std::vector<std::size_t> ResampleIndex(std::size_t n_captions, std::size_t n_frames);
Matrix ResampleEnv(const Matrix& env, std::size_t n_frames);

/// Scaled dot-product attention of each query row over the caption rows.
struct AttentionCache {
  Matrix queries;    // B x D_t (inputs)
  Matrix q_proj;     // B x D_a
  Matrix keys;       // N x D_a
  Matrix values;     // N x D_t
  Matrix weights;    // B x N
  Matrix output;     // B x D_t
};

AttentionCache Attend(const Matrix& queries, const Matrix& env, const InfuserParams& params);
/// Single-query attention; the output is a convex combination of value rows.
Vector CrossAttention(std::span<const double> query, const Matrix& env,
                      const InfuserParams& params);

/// Accumulates gradients of attention into `grads`, `g_queries`, `g_env`.
void AttendBackward(const AttentionCache& cache, const Matrix& env, const Matrix& g_output,
                    const InfuserParams& params, InfuserParams& grads, Matrix& g_queries,
                    Matrix& g_env);

struct MlpCache {
  Matrix hidden_pre;
  Matrix hidden;
  Matrix output;
};

MlpCache VideoMlp(const Matrix& raw, const InfuserParams& params);
/// Accumulates MLP parameter gradients; returns ∂L/∂raw.
Matrix VideoMlpBackward(const MlpCache& cache, const Matrix& raw, const Matrix& g_output,
                        const InfuserParams& params, InfuserParams& grads);

struct InfuseCache {
  FusionVariant variant = FusionVariant::kConcat;
  std::vector<std::size_t> rows;  // resample index
  Matrix resampled;               // R, M x D_t
  Matrix env;                     // E, M x D_v
  AttentionCache attention;
  Vector attention_env;           // CA(z_q, Z_e)·P, D_v
  double gate = 0.0;              // tanh(γ)
  Matrix concat;                  // [G | Z_v], M x 2·D_v
  Matrix frame_queries;           // Z_v Pᵀ (CrossAttention variant)
  Matrix output;                  // Z
};

InfuseCache InfuseCached(const Matrix& video, const Matrix& env, std::span<const double> query,
                         const InfuserParams& params, FusionVariant variant);
Matrix Infuse(const Matrix& video, const Matrix& env, std::span<const double> query,
              const InfuserParams& params, FusionVariant variant);

struct InfuseGrads {
  InfuserParams params;  // MLP entries stay zero
  Matrix video;          // ∂L/∂Z_v
  Matrix env;            // ∂L/∂Z_e
  Vector query;          // ∂L/∂z_q
};

/// Accumulating backward pass of Infuse given ∂L/∂Z.
void InfuseBackward(const InfuseCache& cache, const Matrix& video, const Matrix& env,
                    std::span<const double> query, const InfuserParams& params,
                    const Matrix& g_output, InfuserParams& g_params, Matrix& g_video,
                    Matrix& g_env, Vector& g_query);

InfuseGrads InfuseGradients(const Matrix& video, const Matrix& env,
                            std::span<const double> query, const InfuserParams& params,
                            FusionVariant variant, const Matrix& g_output);

}  // namespace eivlg
