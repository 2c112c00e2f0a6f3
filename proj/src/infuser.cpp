#include "eivlg/infuser.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "eivlg/error.hpp"
#include "eivlg/rng.hpp"

namespace eivlg {

std::string_view FusionVariantName(FusionVariant v) {
  switch (v) {
    case FusionVariant::kConcat: return "concat";
    case FusionVariant::kAdd: return "add";
    case FusionVariant::kCrossAttention: return "ca";
    case FusionVariant::kNone: return "none";
  }
  return "concat";
}

FusionVariant ParseFusionVariant(std::string_view name) {
  if (name == "concat") return FusionVariant::kConcat;
  if (name == "add") return FusionVariant::kAdd;
  if (name == "ca") return FusionVariant::kCrossAttention;
  if (name == "none") return FusionVariant::kNone;
  throw UsageError("unknown fusion variant '" + std::string(name) + "'");
}

InfuserParams InfuserParams::Zeros(const InfuserDims& dims) {
  if (dims.d_t < 1 || dims.d_v < 1 || dims.d_a < 1)
    throw DataError("infuser: dimensions must be >= 1");
  InfuserParams p;
  p.dims = dims;
  p.fuse = Matrix(2 * dims.d_v, dims.d_v);
  p.ca_query = Matrix(dims.d_t, dims.d_a);
  p.ca_key = Matrix(dims.d_t, dims.d_a);
  p.ca_value = Matrix(dims.d_t, dims.d_t);
  p.env_proj = Matrix(dims.d_t, dims.d_v);
  p.mlp_w1 = Matrix(dims.d_v, dims.d_v);
  p.mlp_b1 = Vector(dims.d_v, 0.0);
  p.mlp_w2 = Matrix(dims.d_v, dims.d_v);
  p.mlp_b2 = Vector(dims.d_v, 0.0);
  return p;
}

InfuserParams InfuserParams::Init(const InfuserDims& dims, std::uint64_t seed) {
  InfuserParams p = Zeros(dims);
  CounterRng rng(seed, StreamId(Stream::kInfuserInit));
  auto xavier = [&](Matrix& m) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (double& x : m.values()) x = rng.Symmetric(limit);
  };
  xavier(p.fuse);
  xavier(p.ca_query);
  xavier(p.ca_key);
  xavier(p.ca_value);
  xavier(p.env_proj);
  xavier(p.mlp_w1);
  xavier(p.mlp_w2);
  return p;
}

void InfuserParams::Validate() const {
  RequireShape(fuse, 2 * dims.d_v, dims.d_v, "infuser W");
  RequireShape(ca_query, dims.d_t, dims.d_a, "infuser ca_query_proj");
  RequireShape(ca_key, dims.d_t, dims.d_a, "infuser ca_key_proj");
  RequireShape(ca_value, dims.d_t, dims.d_t, "infuser ca_value_proj");
  RequireShape(env_proj, dims.d_t, dims.d_v, "infuser env_proj");
  RequireShape(mlp_w1, dims.d_v, dims.d_v, "infuser mlp_w1");
  RequireShape(mlp_w2, dims.d_v, dims.d_v, "infuser mlp_w2");
  if (mlp_b1.size() != dims.d_v || mlp_b2.size() != dims.d_v)
    throw DataError("infuser: MLP bias length != D_v");
  for (auto t : Tensors())
    if (!AllFinite(t)) throw NumericError("infuser: non-finite parameter");
}

std::vector<std::span<double>> InfuserParams::Tensors() {
  return {fuse.values(),     std::span<double>(&gamma, 1), ca_query.values(),
          ca_key.values(),   ca_value.values(),            env_proj.values(),
          mlp_w1.values(),   mlp_b1,                       mlp_w2.values(),
          mlp_b2};
}

std::vector<std::span<const double>> InfuserParams::Tensors() const {
  return {fuse.values(),     std::span<const double>(&gamma, 1), ca_query.values(),
          ca_key.values(),   ca_value.values(),                  env_proj.values(),
          mlp_w1.values(),   mlp_b1,                             mlp_w2.values(),
          mlp_b2};
}

std::vector<std::size_t> ResampleIndex(std::size_t n_captions, std::size_t n_frames) {
  std::vector<std::size_t> idx(n_frames);
  for (std::size_t j = 0; j < n_frames; ++j)
    idx[j] = std::min(n_captions - 1, (j * n_captions) / n_frames);
  return idx;
}

Matrix ResampleEnv(const Matrix& env, std::size_t n_frames) {
  if (env.rows() == 0 || n_frames == 0) throw DataError("resample_env: empty input");
  const auto idx = ResampleIndex(env.rows(), n_frames);
  Matrix out(n_frames, env.cols());
  for (std::size_t j = 0; j < n_frames; ++j) {
    const auto src = env.row(idx[j]);
    std::copy(src.begin(), src.end(), out.row(j).begin());
  }
  return out;
}

AttentionCache Attend(const Matrix& queries, const Matrix& env, const InfuserParams& params) {
  const auto& d = params.dims;
  if (queries.cols() != d.d_t || env.cols() != d.d_t || env.rows() == 0)
    throw DataError("cross_attention: input widths must equal D_t");
  AttentionCache c;
  c.queries = queries;
  c.q_proj = MatMul(queries, params.ca_query);
  c.keys = MatMul(env, params.ca_key);
  c.values = MatMul(env, params.ca_value);
  c.weights = MatMulNT(c.q_proj, c.keys);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d.d_a));
  for (std::size_t b = 0; b < c.weights.rows(); ++b) {
    auto row = c.weights.row(b);
    for (double& x : row) x *= scale;
    const Vector p = Softmax(row);
    std::copy(p.begin(), p.end(), row.begin());
  }
  c.output = MatMul(c.weights, c.values);
  return c;
}

Vector CrossAttention(std::span<const double> query, const Matrix& env,
                      const InfuserParams& params) {
  const Matrix q(1, query.size(), Vector(query.begin(), query.end()));
  const auto c = Attend(q, env, params);
  return Vector(c.output.row(0).begin(), c.output.row(0).end());
}

void AttendBackward(const AttentionCache& cache, const Matrix& env, const Matrix& g_output,
                    const InfuserParams& params, InfuserParams& grads, Matrix& g_queries,
                    Matrix& g_env) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.dims.d_a));
  // dL/dA = g_out Vᵀ; softmax Jacobian row by row.
  Matrix g_scores = MatMulNT(g_output, cache.values);
  for (std::size_t b = 0; b < g_scores.rows(); ++b) {
    auto gs = g_scores.row(b);
    const auto a = cache.weights.row(b);
    const double inner = Dot(gs, a);
    for (std::size_t n = 0; n < gs.size(); ++n) gs[n] = a[n] * (gs[n] - inner) * scale;
  }
  const Matrix g_values = MatMulTN(cache.weights, g_output);
  const Matrix g_qproj = MatMul(g_scores, cache.keys);
  const Matrix g_keys = MatMulTN(g_scores, cache.q_proj);

  AddInPlace(grads.ca_query, MatMulTN(cache.queries, g_qproj));
  AddInPlace(grads.ca_key, MatMulTN(env, g_keys));
  AddInPlace(grads.ca_value, MatMulTN(env, g_values));
  AddInPlace(g_queries, MatMulNT(g_qproj, params.ca_query));
  AddInPlace(g_env, MatMulNT(g_keys, params.ca_key));
  AddInPlace(g_env, MatMulNT(g_values, params.ca_value));
}

MlpCache VideoMlp(const Matrix& raw, const InfuserParams& params) {
  if (raw.cols() != params.dims.d_v) throw DataError("video_mlp: feature width != D_v");
  MlpCache c;
  c.hidden_pre = MatMul(raw, params.mlp_w1);
  c.hidden = c.hidden_pre;
  for (std::size_t r = 0; r < c.hidden.rows(); ++r) {
    auto row = c.hidden.row(r);
    auto pre = c.hidden_pre.row(r);
    for (std::size_t i = 0; i < row.size(); ++i) {
      pre[i] += params.mlp_b1[i];
      row[i] = std::max(0.0, pre[i]);
    }
  }
  c.output = MatMul(c.hidden, params.mlp_w2);
  for (std::size_t r = 0; r < c.output.rows(); ++r) Axpy(1.0, params.mlp_b2, c.output.row(r));
  return c;
}

Matrix VideoMlpBackward(const MlpCache& cache, const Matrix& raw, const Matrix& g_output,
                        const InfuserParams& params, InfuserParams& grads) {
  AddInPlace(grads.mlp_w2, MatMulTN(cache.hidden, g_output));
  for (std::size_t r = 0; r < g_output.rows(); ++r) Axpy(1.0, g_output.row(r), grads.mlp_b2);
  Matrix g_hidden = MatMulNT(g_output, params.mlp_w2);
  for (std::size_t r = 0; r < g_hidden.rows(); ++r) {
    auto g = g_hidden.row(r);
    const auto pre = cache.hidden_pre.row(r);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!(pre[i] > 0.0)) g[i] = 0.0;
    Axpy(1.0, g, grads.mlp_b1);
  }
  AddInPlace(grads.mlp_w1, MatMulTN(raw, g_hidden));
  return MatMulNT(g_hidden, params.mlp_w1);
}

InfuseCache InfuseCached(const Matrix& video, const Matrix& env, std::span<const double> query,
                         const InfuserParams& params, FusionVariant variant) {
  const auto& d = params.dims;
  if (video.cols() != d.d_v || video.rows() == 0) throw DataError("infuse: Z_v width != D_v");
  if (env.cols() != d.d_t || env.rows() == 0) throw DataError("infuse: Z_e width != D_t");
  if (query.size() != d.d_t) throw DataError("infuse: z_q length != D_t");
  const std::size_t m = video.rows();

  InfuseCache c;
  c.variant = variant;
  c.output = video;
  switch (variant) {
    case FusionVariant::kNone:
      break;
    case FusionVariant::kAdd: {
      c.rows = ResampleIndex(env.rows(), m);
      c.resampled = ResampleEnv(env, m);
      c.env = MatMul(c.resampled, params.env_proj);
      AddInPlace(c.output, c.env);
      break;
    }
    case FusionVariant::kConcat: {
      c.rows = ResampleIndex(env.rows(), m);
      c.resampled = ResampleEnv(env, m);
      c.env = MatMul(c.resampled, params.env_proj);
      c.attention = Attend(Matrix(1, d.d_t, Vector(query.begin(), query.end())), env, params);
      c.attention_env = VecMat(c.attention.output.row(0), params.env_proj);
      c.gate = TanhGate(params.gamma);
      c.concat = Matrix(m, 2 * d.d_v);
      for (std::size_t j = 0; j < m; ++j) {
        auto dst = c.concat.row(j);
        const auto e = c.env.row(j);
        const auto v = video.row(j);
        for (std::size_t k = 0; k < d.d_v; ++k) {
          dst[k] = e[k] + c.gate * c.attention_env[k];
          dst[d.d_v + k] = v[k];
        }
      }
      AddInPlace(c.output, MatMul(c.concat, params.fuse));
      break;
    }
    case FusionVariant::kCrossAttention: {
      c.frame_queries = MatMulNT(video, params.env_proj);
      c.attention = Attend(c.frame_queries, env, params);
      AddInPlace(c.output, MatMul(c.attention.output, params.env_proj));
      break;
    }
  }
  return c;
}

Matrix Infuse(const Matrix& video, const Matrix& env, std::span<const double> query,
              const InfuserParams& params, FusionVariant variant) {
  return InfuseCached(video, env, query, params, variant).output;
}

void InfuseBackward(const InfuseCache& cache, const Matrix& video, const Matrix& env,
                    std::span<const double> /*query*/, const InfuserParams& params,
                    const Matrix& g_output, InfuserParams& g_params, Matrix& g_video,
                    Matrix& g_env, Vector& g_query) {
  const auto& d = params.dims;
  RequireShape(g_output, video.rows(), d.d_v, "infuse backward: upstream gradient");
  const std::size_t m = video.rows();
  AddInPlace(g_video, g_output);

  auto scatter_resampled = [&](const Matrix& g_resampled) {
    for (std::size_t j = 0; j < m; ++j) Axpy(1.0, g_resampled.row(j), g_env.row(cache.rows[j]));
  };

  switch (cache.variant) {
    case FusionVariant::kNone:
      break;
    case FusionVariant::kAdd: {
      AddInPlace(g_params.env_proj, MatMulTN(cache.resampled, g_output));
      scatter_resampled(MatMulNT(g_output, params.env_proj));
      break;
    }
    case FusionVariant::kConcat: {
      AddInPlace(g_params.fuse, MatMulTN(cache.concat, g_output));
      const Matrix g_concat = MatMulNT(g_output, params.fuse);
      Matrix g_fused(m, d.d_v);
      Vector g_fused_sum(d.d_v, 0.0);
      for (std::size_t j = 0; j < m; ++j) {
        const auto gc = g_concat.row(j);
        auto gf = g_fused.row(j);
        auto gv = g_video.row(j);
        for (std::size_t k = 0; k < d.d_v; ++k) {
          gf[k] = gc[k];
          g_fused_sum[k] += gc[k];
          gv[k] += gc[d.d_v + k];
        }
      }
      // G = E + gate · broadcast(attention_env)
      AddInPlace(g_params.env_proj, MatMulTN(cache.resampled, g_fused));
      scatter_resampled(MatMulNT(g_fused, params.env_proj));
      const double g_gate = Dot(cache.attention_env, g_fused_sum);
      g_params.gamma += g_gate * (1.0 - cache.gate * cache.gate);
      Vector g_attention_env = g_fused_sum;
      for (double& x : g_attention_env) x *= cache.gate;
      AddOuter(g_params.env_proj, cache.attention.output.row(0), g_attention_env);
      const Vector g_attn_out = MatVec(params.env_proj, g_attention_env);
      Matrix g_q(1, d.d_t);
      AttendBackward(cache.attention, env, Matrix(1, d.d_t, g_attn_out), params, g_params, g_q,
                     g_env);
      Axpy(1.0, g_q.row(0), g_query);
      break;
    }
    case FusionVariant::kCrossAttention: {
      AddInPlace(g_params.env_proj, MatMulTN(cache.attention.output, g_output));
      const Matrix g_attn_out = MatMulNT(g_output, params.env_proj);
      Matrix g_frame_queries(m, d.d_t);
      AttendBackward(cache.attention, env, g_attn_out, params, g_params, g_frame_queries, g_env);
      // frame_queries = Z_v · Pᵀ
      AddInPlace(g_video, MatMul(g_frame_queries, params.env_proj));
      AddInPlace(g_params.env_proj, MatMulTN(g_frame_queries, video));
      break;
    }
  }
}

InfuseGrads InfuseGradients(const Matrix& video, const Matrix& env,
                            std::span<const double> query, const InfuserParams& params,
                            FusionVariant variant, const Matrix& g_output) {
  const auto cache = InfuseCached(video, env, query, params, variant);
  InfuseGrads g{InfuserParams::Zeros(params.dims), Matrix(video.rows(), video.cols()),
                Matrix(env.rows(), env.cols()), Vector(query.size(), 0.0)};
  InfuseBackward(cache, video, env, query, params, g_output, g.params, g.video, g.env, g.query);
  return g;
}

}  // namespace eivlg
