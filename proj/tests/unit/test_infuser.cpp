#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "eivlg/error.hpp"
#include "eivlg/infuser.hpp"
#include "eivlg/rng.hpp"

namespace eivlg {
namespace {

const InfuserDims kDims{6, 4, 5};
constexpr FusionVariant kVariants[] = {FusionVariant::kConcat, FusionVariant::kAdd,
                                       FusionVariant::kCrossAttention, FusionVariant::kNone};

Matrix Random(std::size_t r, std::size_t c, CounterRng& rng) {
  Matrix m(r, c);
  for (double& x : m.values()) x = rng.Symmetric(1.0);
  return m;
}

Vector RandomVec(std::size_t n, CounterRng& rng) {
  Vector v(n);
  for (double& x : v) x = rng.Symmetric(1.0);
  return v;
}

TEST(Resample, Examples) {
  EXPECT_EQ(ResampleIndex(5, 5), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(ResampleIndex(2, 4), (std::vector<std::size_t>{0, 0, 1, 1}));
  const auto idx = ResampleIndex(10, 100);
  EXPECT_EQ(idx[49] + 1, 5u);  // frame 50
  EXPECT_EQ(idx[50] + 1, 6u);  // frame 51
}

TEST(Resample, MonotoneAndCoversAllCaptionsProperty) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    CounterRng rng(seed, 500);
    const std::size_t n = 1 + rng.Below(30);
    const std::size_t m = n + rng.Below(200);
    const auto idx = ResampleIndex(n, m);
    ASSERT_EQ(idx.size(), m);
    EXPECT_EQ(idx.front(), 0u);
    EXPECT_EQ(idx.back(), n - 1);
    for (std::size_t j = 1; j < m; ++j) {
      EXPECT_LE(idx[j - 1], idx[j]);
      EXPECT_LE(idx[j] - idx[j - 1], 1u);
    }
  }
}

TEST(CrossAttention, SingleCaptionReturnsItsValue) {
  CounterRng rng(1, 501);
  const auto p = InfuserParams::Init(kDims, 2);
  const Matrix env = Random(1, kDims.d_t, rng);
  const Vector out = CrossAttention(RandomVec(kDims.d_t, rng), env, p);
  const Vector value = VecMat(env.row(0), p.ca_value);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], value[i], 1e-14);
}

TEST(CrossAttention, IdenticalRowsIgnoreQuery) {
  CounterRng rng(2, 502);
  const auto p = InfuserParams::Init(kDims, 3);
  const Vector row = RandomVec(kDims.d_t, rng);
  Matrix env(4, kDims.d_t);
  for (std::size_t r = 0; r < 4; ++r) std::copy(row.begin(), row.end(), env.row(r).begin());
  const Vector value = VecMat(row, p.ca_value);
  for (int t = 0; t < 5; ++t) {
    const Vector out = CrossAttention(RandomVec(kDims.d_t, rng), env, p);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], value[i], 1e-14);
  }
}

TEST(CrossAttention, OutputInConvexHullSeed11) {
  CounterRng rng(11, 503);
  const auto p = InfuserParams::Init(kDims, 11);
  const Matrix env = Random(7, kDims.d_t, rng);
  const Vector out = CrossAttention(RandomVec(kDims.d_t, rng), env, p);
  const Matrix values = MatMul(env, p.ca_value);
  for (std::size_t c = 0; c < values.cols(); ++c) {
    double lo = values(0, c), hi = values(0, c);
    for (std::size_t r = 1; r < values.rows(); ++r) {
      lo = std::min(lo, values(r, c));
      hi = std::max(hi, values(r, c));
    }
    EXPECT_GE(out[c], lo - 1e-12);
    EXPECT_LE(out[c], hi + 1e-12);
  }
}

TEST(CrossAttention, CaptionPermutationInvarianceProperty) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    CounterRng rng(seed, 504);
    const auto p = InfuserParams::Init(kDims, seed);
    const std::size_t n = 2 + rng.Below(8);
    const Matrix env = Random(n, kDims.d_t, rng);
    const Vector q = RandomVec(kDims.d_t, rng);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.Shuffle(std::span<std::size_t>(order));
    Matrix permuted(n, kDims.d_t);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(env.row(order[i]).begin(), env.row(order[i]).end(), permuted.row(i).begin());
    }
    const Vector a = CrossAttention(q, env, p), b = CrossAttention(q, permuted, p);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-13);
  }
}

TEST(Infuse, ZeroParametersAreResidualForEveryVariant) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CounterRng rng(seed, 505);
    const auto zeros = InfuserParams::Zeros(kDims);
    const Matrix video = Random(9, kDims.d_v, rng), env = Random(3, kDims.d_t, rng);
    const Vector q = RandomVec(kDims.d_t, rng);
    for (FusionVariant v : kVariants) EXPECT_EQ(Infuse(video, env, q, zeros, v), video);
  }
}

TEST(Infuse, ZeroFuseMatrixIsResidual) {
  CounterRng rng(3, 506);
  auto p = InfuserParams::Init(kDims, 3);
  p.gamma = 0.7;
  p.fuse.Fill(0.0);
  const Matrix video = Random(9, kDims.d_v, rng), env = Random(3, kDims.d_t, rng);
  EXPECT_EQ(Infuse(video, env, RandomVec(kDims.d_t, rng), p, FusionVariant::kConcat), video);
}

TEST(Infuse, ZeroGateRemovesQueryDependence) {
  CounterRng rng(4, 507);
  auto p = InfuserParams::Init(kDims, 4);
  p.gamma = 0.0;
  const Matrix video = Random(9, kDims.d_v, rng), env = Random(3, kDims.d_t, rng);
  const Matrix a = Infuse(video, env, RandomVec(kDims.d_t, rng), p, FusionVariant::kConcat);
  const Matrix b = Infuse(video, env, RandomVec(kDims.d_t, rng), p, FusionVariant::kConcat);
  EXPECT_EQ(a, b);
}

TEST(Infuse, AddWithZeroEnvironmentIsResidual) {
  CounterRng rng(5, 508);
  const auto p = InfuserParams::Init(kDims, 5);
  const Matrix video = Random(9, kDims.d_v, rng);
  EXPECT_EQ(Infuse(video, Matrix(3, kDims.d_t), RandomVec(kDims.d_t, rng), p, FusionVariant::kAdd), video);
}

TEST(Infuse, AddMatchesDefinition) {
  CounterRng rng(6, 509);
  const auto p = InfuserParams::Init(kDims, 6);
  const Matrix video = Random(8, kDims.d_v, rng), env = Random(4, kDims.d_t, rng);
  const Matrix z = Infuse(video, env, RandomVec(kDims.d_t, rng), p, FusionVariant::kAdd);
  const Matrix e = MatMul(ResampleEnv(env, 8), p.env_proj);
  for (std::size_t i = 0; i < z.size(); ++i) {
    EXPECT_NEAR(z.values()[i], video.values()[i] + e.values()[i], 1e-14);
  }
}

TEST(Infuse, ShapeMismatchThrows) {
  const auto p = InfuserParams::Init(kDims, 1);
  const Vector q(kDims.d_t, 0.1);
  EXPECT_THROW(Infuse(Matrix(4, kDims.d_v + 1), Matrix(2, kDims.d_t), q, p, FusionVariant::kConcat),
               DataError);
  EXPECT_THROW(Infuse(Matrix(4, kDims.d_v), Matrix(2, kDims.d_t + 1), q, p, FusionVariant::kAdd),
               DataError);
}

TEST(InfuseGradients, ZeroUpstreamGivesZeroGradients) {
  CounterRng rng(7, 510);
  const auto p = InfuserParams::Init(kDims, 7);
  const Matrix video = Random(6, kDims.d_v, rng), env = Random(3, kDims.d_t, rng);
  const Vector q = RandomVec(kDims.d_t, rng);
  for (FusionVariant v : kVariants) {
    const auto g = InfuseGradients(video, env, q, p, v, Matrix(6, kDims.d_v));
    for (auto t : g.params.Tensors()) {
      for (double x : t) EXPECT_EQ(x, 0.0);
    }
    EXPECT_EQ(g.params.gamma, 0.0);
    for (double x : g.video.values()) EXPECT_EQ(x, 0.0);
    for (double x : g.env.values()) EXPECT_EQ(x, 0.0);
    for (double x : g.query) EXPECT_EQ(x, 0.0);
  }
}

// Scalar loss ⟨U, Z(γ)⟩ as a function of γ alone.
TEST(InfuseGradients, GateDerivativeAtZeroMatchesFiniteDifference) {
  CounterRng rng(5, 511);
  auto p = InfuserParams::Init(kDims, 5);
  p.gamma = 0.0;
  const Matrix video = Random(6, kDims.d_v, rng), env = Random(3, kDims.d_t, rng);
  const Vector q = RandomVec(kDims.d_t, rng);
  const Matrix upstream = Random(6, kDims.d_v, rng);
  const ScalarFn f = [&](std::span<const double> x, Vector* grad) {
    InfuserParams local = p;
    local.gamma = x[0];
    const Matrix z = Infuse(video, env, q, local, FusionVariant::kConcat);
    if (grad) {
      const auto g = InfuseGradients(video, env, q, local, FusionVariant::kConcat, upstream);
      *grad = {g.params.gamma};
    }
    return Dot(z.values(), upstream.values());
  };
  const Vector x{0.0};
  EXPECT_LT(GradCheck(f, x, 1e-5).max_rel_error, 1e-7);
}

TEST(VideoMlp, RectifiedTwoLayer) {
  CounterRng rng(8, 512);
  const auto p = InfuserParams::Init(kDims, 8);
  const Matrix raw = Random(5, kDims.d_v, rng);
  const auto cache = VideoMlp(raw, p);
  for (double h : cache.hidden.values()) EXPECT_GE(h, 0.0);
  for (std::size_t r = 0; r < raw.rows(); ++r) {
    Vector h = VecMat(raw.row(r), p.mlp_w1);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::max(0.0, h[i] + p.mlp_b1[i]);
    Vector o = VecMat(h, p.mlp_w2);
    for (std::size_t i = 0; i < o.size(); ++i) EXPECT_NEAR(cache.output(r, i), o[i] + p.mlp_b2[i], 1e-14);
  }
}

TEST(FusionVariant, NamesRoundTrip) {
  for (FusionVariant v : kVariants) EXPECT_EQ(ParseFusionVariant(FusionVariantName(v)), v);
  EXPECT_THROW(ParseFusionVariant("sum"), UsageError);
}

}  // namespace
}  // namespace eivlg
