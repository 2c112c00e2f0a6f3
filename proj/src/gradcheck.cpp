#include "eivlg/gradcheck.hpp"

#include <algorithm>
#include <functional>

#include "eivlg/encoder.hpp"
#include "eivlg/error.hpp"
#include "eivlg/grounder.hpp"
#include "eivlg/infuser.hpp"
#include "eivlg/model.hpp"
#include "eivlg/rng.hpp"

namespace eivlg {
namespace {

constexpr std::size_t kCaptions = 5;
constexpr std::size_t kFrames = 12;
constexpr std::size_t kDt = 6;
constexpr std::size_t kDv = 4;
constexpr std::size_t kDa = 5;
constexpr std::size_t kVocab = 16;

using Spans = std::vector<std::span<double>>;

Vector Flatten(const Spans& spans) {
  Vector out;
  for (auto s : spans) out.insert(out.end(), s.begin(), s.end());
  return out;
}

void Scatter(std::span<const double> x, const Spans& spans) {
  std::size_t k = 0;
  for (auto s : spans)
    for (double& v : s) v = x[k++];
}

void Gather(const Spans& spans, Vector& out) {
  out.clear();
  for (auto s : spans) out.insert(out.end(), s.begin(), s.end());
}

// A check owns mutable state; `bind` lists the tensors that form x and
// `eval` computes f and, when asked, writes gradients into `grad_spans`.
struct Instance {
  std::string name;
  Spans vars;
  Spans grads;
  std::function<double(bool want_grad)> eval;
  std::function<void()> zero_grads;
};

GradCheckResult Check(Instance& inst, const GradSuiteOptions& o) {
  const Vector x0 = Flatten(inst.vars);
  ScalarFn f = [&](std::span<const double> x, Vector* grad) {
    Scatter(x, inst.vars);
    if (grad == nullptr) return inst.eval(false);
    inst.zero_grads();
    const double v = inst.eval(true);
    Gather(inst.grads, *grad);
    if (o.inject_fault && !grad->empty()) {
      const auto it = std::max_element(grad->begin(), grad->end(),
                                       [](double a, double b) { return std::abs(a) < std::abs(b); });
      *it = -*it;
    }
    return v;
  };
  const GradCheckResult r = GradCheck(f, x0, o.h, {}, o.tiny);
  Scatter(x0, inst.vars);
  return r;
}

void Randomize(std::span<double> t, CounterRng& rng, double limit) {
  for (double& v : t) v = rng.Symmetric(limit);
}

Matrix RandomMatrix(std::size_t r, std::size_t c, CounterRng& rng, double limit = 1.0) {
  Matrix m(r, c);
  Randomize(m.values(), rng, limit);
  return m;
}

Vector RandomVector(std::size_t n, CounterRng& rng, double limit = 1.0) {
  Vector v(n);
  Randomize(v, rng, limit);
  return v;
}

Interval RandomGtFrames(CounterRng& rng) {
  const long s = 1 + static_cast<long>(rng.Below(kFrames - 4));
  const long e = s + 1 + static_cast<long>(rng.Below(3));
  return Interval::Frames(s, e);
}

InfuserParams RandomInfuser(CounterRng& rng) {
  InfuserParams p = InfuserParams::Zeros({kDt, kDv, kDa});
  for (auto t : p.Tensors()) Randomize(t, rng, 1.5);
  // A nearly closed gate shrinks the attention gradients into roundoff.
  p.gamma = (rng.Uniform() < 0.5 ? -1.0 : 1.0) * (0.5 + 0.5 * rng.Uniform());
  return p;
}

GrounderParams RandomGrounder(CounterRng& rng) {
  GrounderParams p = GrounderParams::Zeros(kDt, kDv);
  for (auto t : p.Tensors()) Randomize(t, rng, 0.8);
  p.regression_b[0] += 2.0;  // keep predicted intervals well-formed
  p.regression_b[1] += 2.0;
  return p;
}

std::string RandomText(CounterRng& rng) {
  std::string text;
  const std::size_t n = 1 + rng.Below(4);
  for (std::size_t i = 0; i < n; ++i) text += "w" + std::to_string(rng.Below(40)) + " ";
  return text;
}

template <typename T>
void ZeroAll(T& p) {
  for (auto t : p.Tensors()) std::fill(t.begin(), t.end(), 0.0);
}

void Append(Spans& dst, const Spans& src) { dst.insert(dst.end(), src.begin(), src.end()); }

// ---- individual checks ----

void ContrastiveChecks(std::uint64_t seed, const GradSuiteOptions& o, GradSuiteReport& report) {
  CounterRng rng(seed, 100);
  for (EncoderLoss kind : {EncoderLoss::kMll, EncoderLoss::kBce}) {
    Matrix z = RandomMatrix(kCaptions, kDt, rng);
    Vector q = RandomVector(kDt, rng);
    const int first = 1 + static_cast<int>(rng.Below(kCaptions - 1));
    const CaptionSpan span{first, first + static_cast<int>(rng.Below(2))};
    Matrix gz(kCaptions, kDt);
    Vector gq(kDt);
    Instance inst;
    inst.name = kind == EncoderLoss::kMll ? "mll" : "bce";
    inst.vars = {z.values(), q};
    inst.grads = {gz.values(), gq};
    inst.zero_grads = [] {};
    inst.eval = [&](bool want) {
      ContrastiveLoss l = kind == EncoderLoss::kMll ? MllLoss(z, q, span) : BceLoss(z, q, span);
      if (want) {
        gz = l.grad_captions;
        gq = l.grad_query;
      }
      return l.loss;
    };
    report.entries.push_back({inst.name, seed, Check(inst, o)});
  }
}

void EncoderCheck(std::uint64_t seed, const GradSuiteOptions& o, GradSuiteReport& report) {
  CounterRng rng(seed, 101);
  TextEncoderParams p = TextEncoderParams::Init(kVocab, kDt, seed);
  Randomize(p.bias, rng, 0.5);
  TextEncoderParams g = TextEncoderParams::Zeros(kVocab, kDt);
  std::vector<std::string> captions;
  for (std::size_t i = 0; i < kCaptions; ++i) captions.push_back(RandomText(rng));
  const std::string query = RandomText(rng);
  const CaptionSpan span{2, 3};
  Instance inst;
  inst.name = "encoder_mll";
  inst.vars = p.Tensors();
  inst.grads = g.Tensors();
  inst.zero_grads = [&] { ZeroAll(g); };
  inst.eval = [&](bool want) {
    std::vector<TextEncoding> enc;
    Matrix z(kCaptions, kDt);
    for (std::size_t i = 0; i < kCaptions; ++i) {
      enc.push_back(EncodeTextCached(captions[i], p));
      std::copy(enc[i].output.begin(), enc[i].output.end(), z.row(i).begin());
    }
    const TextEncoding qe = EncodeTextCached(query, p);
    const ContrastiveLoss l = MllLoss(z, qe.output, span);
    if (want) {
      for (std::size_t i = 0; i < kCaptions; ++i)
        AccumulateEncoderGrad(enc[i], l.grad_captions.row(i), p, g);
      AccumulateEncoderGrad(qe, l.grad_query, p, g);
    }
    return l.loss;
  };
  report.entries.push_back({inst.name, seed, Check(inst, o)});
}

void HeadLossChecks(std::uint64_t seed, const GradSuiteOptions& o, GradSuiteReport& report) {
  CounterRng rng(seed, 102);
  const Interval gt = RandomGtFrames(rng);
  {
    Vector s = RandomVector(kFrames, rng, 2.0), e = RandomVector(kFrames, rng, 2.0);
    Vector gs(kFrames), ge(kFrames);
    Instance inst;
    inst.name = "span";
    inst.vars = {s, e};
    inst.grads = {gs, ge};
    inst.zero_grads = [] {};
    inst.eval = [&](bool want) {
      const SpanLossResult r = SpanLoss(s, e, gt);
      if (want) {
        gs = r.grad_start;
        ge = r.grad_end;
      }
      return r.loss;
    };
    report.entries.push_back({inst.name, seed, Check(inst, o)});
  }
  const double extension = 0.25 * static_cast<double>(rng.Below(3));
  for (int focal = 0; focal < 2; ++focal) {
    Vector x = RandomVector(kFrames, rng, 3.0);
    Vector gx(kFrames);
    Instance inst;
    inst.name = focal ? "focal" : "qgh";
    inst.vars = {x};
    inst.grads = {gx};
    inst.zero_grads = [] {};
    inst.eval = [&](bool want) {
      const LogitLoss l = focal ? FocalLoss(x, gt, 0.25, 2.0, extension) : QghLoss(x, gt, extension);
      if (want) gx = l.grad;
      return l.loss;
    };
    report.entries.push_back({inst.name, seed, Check(inst, o)});
  }
  {
    Vector pred(2);
    pred[0] = rng.Symmetric(5.0) + 5.0;
    pred[1] = pred[0] + 0.5 + 4.0 * rng.Uniform();
    const Interval gt_c{gt.start - 1.0, gt.end, TimeUnit::kFrames};
    Vector gp(2);
    Instance inst;
    inst.name = "diou";
    inst.vars = {pred};
    inst.grads = {gp};
    inst.zero_grads = [] {};
    inst.eval = [&](bool want) {
      const DiouResult d = DiouLoss(Interval{pred[0], pred[1], TimeUnit::kFrames}, gt_c);
      if (want) gp = {d.grad_start, d.grad_end};
      return d.loss;
    };
    report.entries.push_back({inst.name, seed, Check(inst, o)});
  }
}

void InfuserChecks(std::uint64_t seed, const GradSuiteOptions& o, GradSuiteReport& report) {
  CounterRng rng(seed, 103);
  for (FusionVariant v : {FusionVariant::kConcat, FusionVariant::kAdd, FusionVariant::kCrossAttention,
                          FusionVariant::kNone}) {
    InfuserParams p = RandomInfuser(rng);
    Matrix video = RandomMatrix(kFrames, kDv, rng);
    Matrix env = RandomMatrix(kCaptions, kDt, rng);
    Vector query = RandomVector(kDt, rng);
    const Matrix weight = RandomMatrix(kFrames, kDv, rng);
    InfuserParams gp = InfuserParams::Zeros(p.dims);
    Matrix gv(kFrames, kDv), ge(kCaptions, kDt);
    Vector gq(kDt);
    Instance inst;
    inst.name = "infuser_" + std::string(FusionVariantName(v));
    // MLP tensors are not part of Infuse; leave them out of x.
    Spans pt = p.Tensors(), gt = gp.Tensors();
    inst.vars.assign(pt.begin(), pt.begin() + 6);
    inst.grads.assign(gt.begin(), gt.begin() + 6);
    Append(inst.vars, {video.values(), env.values(), query});
    Append(inst.grads, {gv.values(), ge.values(), gq});
    inst.zero_grads = [&] {
      ZeroAll(gp);
      gv.Fill(0.0);
      ge.Fill(0.0);
      std::fill(gq.begin(), gq.end(), 0.0);
    };
    inst.eval = [&](bool want) {
      const InfuseCache c = InfuseCached(video, env, query, p, v);
      double f = 0.0;
      for (std::size_t i = 0; i < c.output.values().size(); ++i)
        f += c.output.values()[i] * weight.values()[i];
      if (want) InfuseBackward(c, video, env, query, p, weight, gp, gv, ge, gq);
      return f;
    };
    report.entries.push_back({inst.name, seed, Check(inst, o)});
  }
}

void EndToEndChecks(std::uint64_t seed, const GradSuiteOptions& o, GradSuiteReport& report) {
  CounterRng rng(seed, 104);
  for (LossSuite suite : {LossSuite::kSpanQgh, LossSuite::kFocalDiou}) {
    for (FusionVariant v : {FusionVariant::kConcat, FusionVariant::kAdd, FusionVariant::kCrossAttention}) {
      TextEncoderParams enc = TextEncoderParams::Init(kVocab, kDt, seed);
      Randomize(enc.bias, rng, 0.5);
      InfuserParams ip = RandomInfuser(rng);
      GrounderParams gp = RandomGrounder(rng);
      std::vector<std::string> captions;
      for (std::size_t i = 0; i < kCaptions; ++i) captions.push_back(RandomText(rng));
      const std::string query = RandomText(rng);
      const Matrix raw = RandomMatrix(kFrames, kDv, rng);
      const Interval gt = RandomGtFrames(rng);
      LossOptions options;
      options.suite = suite;

      TextEncoderParams g_enc = TextEncoderParams::Zeros(kVocab, kDt);
      VlgGrads grads = VlgGrads::ZerosLike(ip, gp, kCaptions);
      Instance inst;
      inst.name = "e2e_" + std::string(LossSuiteName(suite)) + "_" + std::string(FusionVariantName(v));
      inst.vars = enc.Tensors();
      Append(inst.vars, ip.Tensors());
      Append(inst.vars, gp.Tensors());
      inst.grads = g_enc.Tensors();
      Append(inst.grads, grads.infuser.Tensors());
      Append(inst.grads, grads.grounder.Tensors());
      inst.zero_grads = [&] {
        ZeroAll(g_enc);
        ZeroAll(grads.infuser);
        ZeroAll(grads.grounder);
        grads.env.Fill(0.0);
        std::fill(grads.query.begin(), grads.query.end(), 0.0);
      };
      inst.eval = [&](bool want) {
        std::vector<TextEncoding> ce;
        Matrix env(kCaptions, kDt);
        for (std::size_t i = 0; i < kCaptions; ++i) {
          ce.push_back(EncodeTextCached(captions[i], enc));
          std::copy(ce[i].output.begin(), ce[i].output.end(), env.row(i).begin());
        }
        const TextEncoding qe = EncodeTextCached(query, enc);
        const double f = VlgLoss(ip, gp, v, options, raw, env, qe.output, gt, want ? &grads : nullptr);
        if (want) {
          for (std::size_t i = 0; i < kCaptions; ++i)
            AccumulateEncoderGrad(ce[i], grads.env.row(i), enc, g_enc);
          AccumulateEncoderGrad(qe, grads.query, enc, g_enc);
        }
        return f;
      };
      report.entries.push_back({inst.name, seed, Check(inst, o)});
    }
  }
}

}  // namespace

GradSuiteReport RunGradSuite(const GradSuiteOptions& options) {
  if (options.seeds < 1) throw UsageError("gradcheck: need at least one seed");
  if (!(options.h > 0.0)) throw UsageError("gradcheck: h must be positive");
  GradSuiteReport report;
  for (int i = 0; i < options.seeds; ++i) {
    const std::uint64_t seed = options.base_seed + static_cast<std::uint64_t>(i);
    ContrastiveChecks(seed, options, report);
    EncoderCheck(seed, options, report);
    HeadLossChecks(seed, options, report);
    InfuserChecks(seed, options, report);
    EndToEndChecks(seed, options, report);
  }
  for (const auto& e : report.entries) {
    report.tiny += e.result.tiny;
    report.max_tiny_abs_error = std::max(report.max_tiny_abs_error, e.result.max_tiny_abs_error);
    if (e.result.max_rel_error >= report.max_rel_error) {
      report.max_rel_error = e.result.max_rel_error;
      report.worst = e.name + " (seed " + std::to_string(e.seed) + ")";
    }
  }
  return report;
}

}  // namespace eivlg
