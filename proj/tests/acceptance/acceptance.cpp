// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <fmt/format.h>

#include "../support/metric_oracle.hpp"
#include "cli.hpp"
#include "eivlg/encoder.hpp"
#include "eivlg/error.hpp"
#include "eivlg/evaluation.hpp"
#include "eivlg/gradcheck.hpp"
#include "eivlg/grounder.hpp"
#include "eivlg/io.hpp"
#include "eivlg/log.hpp"
#include "eivlg/model.hpp"
#include "eivlg/rng.hpp"
#include "eivlg/synth.hpp"

namespace eivlg {
namespace {

namespace fs = std::filesystem;

// Tolerances and budgets.
constexpr double kGradTol = 1e-4;
constexpr double kTinyAbsTol = 1e-9;
constexpr double kGradBudgetS = 120.0;
constexpr double kUniformMllTol = 1e-9;
constexpr double kFocalTol = 1e-12;
constexpr double kTextOnlyBudgetS = 10.0;
constexpr double kConcatFloor = 0.8;
constexpr double kChanceBand = 0.1;
constexpr double kTrainingBudgetS = 600.0;
constexpr double kAblationSlack = 0.02;

// Training protocol for the synthetic experiments: train on seed 42, score on
// an independent draw (seed 43) of the same generator.
constexpr std::uint64_t kTrainSeed = 42;
constexpr std::uint64_t kHeldOutSeed = 43;
constexpr int kEncoderEpochs = 20;
constexpr int kGrounderEpochs = 30;
constexpr double kLr = 1e-3;

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

int failures = 0;

void Report(int id, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
}

void Guarded(int id, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    Report(id, false, std::string("exception: ") + e.what());
  }
}

void Criterion1() {
  const auto t0 = Clock::now();
  GradSuiteOptions opt;
  opt.seeds = 10;
  const auto r = RunGradSuite(opt);
  const double elapsed = Seconds(t0);
  const bool pass = r.max_rel_error < kGradTol && r.max_tiny_abs_error < kTinyAbsTol &&
                    elapsed < kGradBudgetS;
  Report(1, pass,
         fmt::format("gradient suite, {} checks over {} seeds, max rel err {:.2e} ({}), tiny-gradient "
                     "abs err {:.2e} on {} coords, {:.1f} s",
                     r.entries.size(), opt.seeds, r.max_rel_error, r.worst, r.max_tiny_abs_error, r.tiny,
                     elapsed));
}

Matrix CaptionsWithDots(const std::vector<double>& dots) {
  Matrix m(dots.size(), 2);
  for (std::size_t i = 0; i < dots.size(); ++i) m(i, 0) = dots[i];
  return m;
}

void Criterion2() {
  const Vector e0{1.0, 0.0};
  double worst_uniform = 0, worst_full = 0, worst_focal = 0, worst_diou = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    CounterRng rng(seed, 0xACC2);
    const int n = 1 + static_cast<int>(rng.Below(50));
    const int first = 1 + static_cast<int>(rng.Below(n));
    const int last = first + static_cast<int>(rng.Below(n - first + 1));
    const double c = rng.Symmetric(10.0);
    const double uniform = MllLoss(CaptionsWithDots(std::vector<double>(n, c)), e0, {first, last}).loss;
    worst_uniform = std::max(worst_uniform,
                             std::abs(uniform + std::log(static_cast<double>(last - first + 1) / n)));
    std::vector<double> dots(n);
    for (double& d : dots) d = rng.Symmetric(20.0);
    worst_full = std::max(worst_full, std::abs(MllLoss(CaptionsWithDots(dots), e0, {1, n}).loss));

    const std::size_t m = 1 + rng.Below(60);
    Vector logits(m);
    for (double& x : logits) x = rng.Symmetric(15.0);
    const long s = 1 + static_cast<long>(rng.Below(m));
    const long e = s + static_cast<long>(rng.Below(m - static_cast<std::size_t>(s) + 1));
    const Interval gt = Interval::Frames(s, e);
    const auto focal = FocalLoss(logits, gt, 0.5, 0.0);
    const auto bce = QghLoss(logits, gt);
    worst_focal = std::max(worst_focal, std::abs(focal.loss - 0.5 * bce.loss));
    for (std::size_t j = 0; j < m; ++j)
      worst_focal = std::max(worst_focal, std::abs(focal.grad[j] - 0.5 * bce.grad[j]));

    const double a = rng.Symmetric(100.0);
    const Interval iv = Interval::Seconds(a, a + rng.Uniform() * 40.0);
    worst_diou = std::max(worst_diou, std::abs(DiouLoss(iv, iv).loss));
  }
  const bool pass = worst_uniform <= kUniformMllTol && worst_full == 0.0 && worst_focal <= kFocalTol &&
                    worst_diou == 0.0;
  Report(2, pass,
         fmt::format("loss identities over 1000 instances: |uniform MLL + log(|GT|/N)| {:.1e}, "
                     "full-span MLL {:.1e}, |focal - BCE/2| {:.1e}, diou(a,a) {:.1e}",
                     worst_uniform, worst_full, worst_focal, worst_diou));
}

void Criterion3() {
  int mismatched_sets = 0, cells = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto set = testing::MakeRandomEvalSet(seed);
    const int bad = testing::OracleMismatches(set, Evaluate(set.preds, set.targets));
    mismatched_sets += bad > 0 ? 1 : 0;
    cells += 4;
  }
  Report(3, mismatched_sets == 0,
         fmt::format("evaluate() vs brute-force oracle on 200 random prediction sets: {} of {} cells "
                     "identical",
                     cells - 4 * mismatched_sets, cells));
}

void Criterion4() {
  const auto t0 = Clock::now();
  const SynthConfig cfg;  // GT 30 s, captions every 10 s
  const auto data = Generate(cfg);
  const auto oracle = TextOnlyEvaluate(
      data, [](const GroundingSample& s) { return OracleEmbeddings(s); }, 30.0);
  const auto adversarial = TextOnlyEvaluate(
      data, [](const GroundingSample& s) { return AdversarialEmbeddings(s); }, 30.0);
  const double elapsed = Seconds(t0);
  const bool pass = oracle.r1_03 == 1.0 && adversarial.r1_03 == 0.0 && elapsed < kTextOnlyBudgetS;
  Report(4, pass,
         fmt::format("text-only protocol on {} videos: oracle R1@0.3 {:.3f}, adversarial R1@0.3 {:.3f}, "
                     "{:.2f} s",
                     data.size(), oracle.r1_03, adversarial.r1_03, elapsed));
}

struct VariantResult {
  double r1_05 = 0.0;
  double train_r1_05 = 0.0;
};

MetricReport Score(const GroundingModel& model, const std::vector<GroundingSample>& data) {
  std::vector<PredictionSet> preds;
  std::vector<EvalTarget> targets;
  for (const auto& s : data) {
    preds.push_back(Predict(model, s, 5));
    targets.push_back(TargetOf(s));
  }
  return Evaluate(preds, targets);
}

void Criteria5And6() {
  const auto t0 = Clock::now();
  SynthConfig train_cfg;
  train_cfg.seed = kTrainSeed;
  train_cfg.informative_video = false;
  SynthConfig held_cfg = train_cfg;
  held_cfg.seed = kHeldOutSeed;
  const auto train = Generate(train_cfg);
  const auto held = Generate(held_cfg);

  EncoderTrainConfig ec;
  ec.epochs = kEncoderEpochs;
  ec.adamw.lr = kLr;
  ec.seed = kTrainSeed;
  const auto encoder = TrainEncoder(train, TextEncoderParams::Init(4096, 64, kTrainSeed), ec).params;

  auto run = [&](FusionVariant v) {
    GroundingModel init;
    init.encoder = encoder;
    init.infuser = InfuserParams::Init({64, train_cfg.d_v, 64}, kTrainSeed);
    init.grounder = GrounderParams::Init(64, train_cfg.d_v, kTrainSeed);
    GrounderTrainConfig gc;
    gc.epochs = kGrounderEpochs;
    gc.adamw.lr = kLr;
    gc.variant = v;
    gc.train_encoder = true;
    gc.seed = kTrainSeed;
    const auto trained = TrainGrounder(train, init, gc);
    return VariantResult{Score(trained.model, held).r1_05, Score(trained.model, train).r1_05};
  };

  const VariantResult concat = run(FusionVariant::kConcat);
  const VariantResult none = run(FusionVariant::kNone);
  const double elapsed5 = Seconds(t0);
  ChanceOptions chance_opt;
  chance_opt.threshold = 0.5;
  const double chance = MonteCarloChance(held_cfg, chance_opt);
  const bool pass5 = concat.r1_05 >= kConcatFloor && std::abs(none.r1_05 - chance) <= kChanceBand &&
                     elapsed5 < kTrainingBudgetS;
  Report(5, pass5,
         fmt::format("held-out R1@0.5: concat {:.3f} (>= {}), no-environment {:.3f} vs chance {:.4f} "
                     "(band {}); training-set R1@0.5 concat {:.3f}, no-environment {:.3f}; {:.0f} s",
                     concat.r1_05, kConcatFloor, none.r1_05, chance, kChanceBand, concat.train_r1_05,
                     none.train_r1_05, elapsed5));

  const VariantResult add = run(FusionVariant::kAdd);
  const VariantResult ca = run(FusionVariant::kCrossAttention);
  const bool pass6 = concat.r1_05 >= add.r1_05 - kAblationSlack && concat.r1_05 >= ca.r1_05 - kAblationSlack;
  Report(6, pass6,
         fmt::format("held-out R1@0.5: concat {:.3f}, add {:.3f}, ca {:.3f} (slack {}); {:.0f} s total",
                     concat.r1_05, add.r1_05, ca.r1_05, kAblationSlack, Seconds(t0)));
}

struct Cli {
  int operator()(std::vector<std::string> args) const {
    args.insert(args.begin(), "eivlg");
    std::ostringstream out, err;
    return cli::Run(args, out, err);
  }
};

constexpr const char* kPipelineConfig =
    "seed = 5\n"
    "epochs = 2\n"
    "lr = 1e-3\n"
    "d_t = 16\n"
    "d_v = 8\n"
    "d_a = 8\n"
    "vocab_size = 512\n"
    "n_videos = 8\n"
    "duration_s = 120\n"
    "train_encoder_jointly = true\n";

fs::path ScratchDir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / fmt::format("eivlg_accept_{}_{}", name, ::getpid());
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void Criterion7() {
  const fs::path dir = ScratchDir("determinism");
  const Cli cli;
  io::WriteFileAtomic(dir / "run.cfg", kPipelineConfig);
  const std::string cfg = (dir / "run.cfg").string();
  std::vector<std::string> outputs;
  int failed_stages = 0;
  for (const std::string tag : {"a", "b"}) {
    const auto p = [&](const std::string& n) { return (dir / (n + tag)).string(); };
    const std::vector<std::vector<std::string>> stages = {
        {"synth", "--config", cfg, "--out", p("data")},
        {"train-encoder", "--data", p("data"), "--config", cfg, "--out-checkpoint", p("enc")},
        {"train-grounder", "--data", p("data"), "--config", cfg, "--encoder-checkpoint", p("enc"),
         "--out-checkpoint", p("gr")},
        {"predict", "--data", p("data"), "--checkpoints", p("gr") + ".encoder," + p("gr"),
         "--out-predictions", p("pred")},
        {"eval", "--data", p("data"), "--predictions", p("pred"), "--out-report", p("report")},
        {"eval", "--data", p("data"), "--checkpoints", p("gr") + ".encoder," + p("gr"), "--out-report",
         p("report_ckpt")},
        {"text-only-eval", "--data", p("data"), "--encoder-checkpoint", p("enc"), "--out-report",
         p("textonly")},
    };
    for (const auto& s : stages) failed_stages += cli(s) != 0 ? 1 : 0;
  }
  // `{}` marks where the run tag goes.
  const std::vector<std::string> files = {"data{}/manifest.json", "data{}/captions.jsonl",
                                          "data{}/features/vid00007.eivc", "enc{}", "gr{}", "gr{}.encoder",
                                          "pred{}", "report{}", "report_ckpt{}", "textonly{}"};
  int identical = 0;
  for (const auto& f : files) {
    try {
      identical += io::ReadFile(dir / fmt::format(fmt::runtime(f), "a")) ==
                           io::ReadFile(dir / fmt::format(fmt::runtime(f), "b"))
                       ? 1
                       : 0;
    } catch (const Error&) {
    }
  }
  fs::remove_all(dir);
  Report(7, failed_stages == 0 && identical == static_cast<int>(files.size()),
         fmt::format("CLI pipeline run twice: {} failed stages, {}/{} outputs byte-identical", failed_stages,
                     identical, files.size()));
}

void Criterion8() {
  const fs::path dir = ScratchDir("formats");
  const Cli cli;
  io::WriteFileAtomic(dir / "run.cfg", kPipelineConfig);
  const std::string cfg = (dir / "run.cfg").string();
  const auto p = [&](const std::string& n) { return (dir / n).string(); };
  int setup = 0;
  setup += cli({"synth", "--config", cfg, "--out", p("data")});
  setup += cli({"train-encoder", "--data", p("data"), "--config", cfg, "--out-checkpoint", p("enc")});
  setup += cli({"train-grounder", "--data", p("data"), "--config", cfg, "--encoder-checkpoint", p("enc"),
                "--out-checkpoint", p("gr")});
  setup += cli({"predict", "--data", p("data"), "--checkpoints", p("enc") + "," + p("gr"),
                "--out-predictions", p("pred")});
  setup += cli({"eval", "--data", p("data"), "--predictions", p("pred"), "--out-report", p("report")});

  // write → read → write.
  int round_trips = 0;
  const auto same = [&](const std::string& original, const std::string& rewritten) {
    round_trips += io::ReadFile(original) == io::ReadFile(rewritten) ? 1 : 0;
  };
  io::WriteMatrix(p("m2"), io::ReadMatrix(p("data/features/vid00000.eivc")));
  same(p("data/features/vid00000.eivc"), p("m2"));
  io::WriteEncoder(p("enc2"), io::ReadEncoder(p("enc")));
  same(p("enc"), p("enc2"));
  io::WriteGrounder(p("gr2"), io::ReadGrounder(p("gr")));
  same(p("gr"), p("gr2"));
  {
    std::vector<CaptionTrack> tracks;
    for (auto& [id, t] : io::ReadCaptions(p("data/captions.jsonl"))) tracks.push_back(t);
    io::WriteFileAtomic(p("captions2"), io::FormatCaptions(tracks));
    same(p("data/captions.jsonl"), p("captions2"));
  }
  io::WriteFileAtomic(p("manifest2"), io::FormatManifest(io::ParseManifest(io::ReadFile(p("data/manifest.json")))));
  same(p("data/manifest.json"), p("manifest2"));
  io::WritePredictions(p("pred2"), io::ReadPredictions(p("pred")));
  same(p("pred"), p("pred2"));
  io::WriteReport(p("report2"), io::ReadReport(p("report")));
  same(p("report"), p("report2"));

  // Corruptions must surface as data errors (exit class 2).
  const auto corrupt = [&](const std::string& path, std::size_t keep) {
    const std::string bytes = io::ReadFile(path);
    io::WriteFileAtomic(path, bytes.substr(0, keep));
    return bytes;
  };
  int rejected = 0, attempts = 0;
  const auto expect_exit2 = [&](const std::vector<std::string>& args) {
    ++attempts;
    rejected += cli(args) == 2 ? 1 : 0;
  };
  const std::vector<std::string> eval_ckpt = {"eval", "--data", p("data"), "--checkpoints",
                                              p("enc") + "," + p("gr"), "--out-report", p("r_bad")};
  {
    const auto saved = corrupt(p("data/features/vid00003.eivc"), 30);
    expect_exit2(eval_ckpt);
    io::WriteFileAtomic(p("data/features/vid00003.eivc"), saved);
  }
  {
    const auto saved = corrupt(p("enc"), 100);
    expect_exit2(eval_ckpt);
    io::WriteFileAtomic(p("enc"), saved);
  }
  {
    const auto saved = io::ReadFile(p("gr"));
    std::string bad = saved;
    bad[0] = 'X';
    io::WriteFileAtomic(p("gr"), bad);
    expect_exit2(eval_ckpt);
    io::WriteFileAtomic(p("gr"), saved);
  }
  {
    const auto saved = io::ReadFile(p("data/captions.jsonl"));
    io::WriteFileAtomic(p("data/captions.jsonl"), saved + "{\"video_id\": \"vid00000\"}\n");
    expect_exit2(eval_ckpt);
    io::WriteFileAtomic(p("data/captions.jsonl"), saved);
  }
  {
    const auto saved = corrupt(p("data/manifest.json"), 200);
    expect_exit2(eval_ckpt);
    io::WriteFileAtomic(p("data/manifest.json"), saved);
  }
  {
    const auto saved = corrupt(p("pred"), 50);
    expect_exit2({"eval", "--data", p("data"), "--predictions", p("pred"), "--out-report", p("r_bad")});
    io::WriteFileAtomic(p("pred"), saved);
  }
  {
    ++attempts;
    io::WriteFileAtomic(p("report_bad"), io::ReadFile(p("report")).substr(0, 40));
    try {
      io::ReadReport(p("report_bad"));
    } catch (const Error& e) {
      rejected += e.kind() == ErrorKind::kData ? 1 : 0;
    }
  }
  const bool no_partial = !fs::exists(p("r_bad"));
  const bool healthy = cli(eval_ckpt) == 0;
  fs::remove_all(dir);
  Report(8, setup == 0 && round_trips == 7 && rejected == attempts && no_partial && healthy,
         fmt::format("{}/7 formats byte-identical after write-read-write; {}/{} corrupted files rejected "
                     "with exit class 2; no partial output: {}",
                     round_trips, rejected, attempts, no_partial ? "yes" : "no"));
}

}  // namespace
}  // namespace eivlg

int main() {
  using namespace eivlg;
  InitLogging();
  Guarded(1, Criterion1);
  Guarded(2, Criterion2);
  Guarded(3, Criterion3);
  Guarded(4, Criterion4);
  Guarded(5, Criteria5And6);
  Guarded(7, Criterion7);
  Guarded(8, Criterion8);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
