#include "cli.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "eivlg/config.hpp"
#include "eivlg/error.hpp"
#include "eivlg/evaluation.hpp"
#include "eivlg/gradcheck.hpp"
#include "eivlg/io.hpp"
#include "eivlg/log.hpp"
#include "eivlg/model.hpp"
#include "eivlg/synth.hpp"

namespace eivlg::cli {
namespace {

namespace fs = std::filesystem;

constexpr double kGradTolerance = 1e-4;
constexpr double kTinyAbsTolerance = 1e-9;

RunConfig ConfigOrDefault(const std::string& path) {
  if (path.empty()) {
    RunConfig c;
    c.Validate();
    return c;
  }
  return LoadConfig(path);
}

void RequireFeatureWidth(const std::vector<GroundingSample>& data, std::size_t d_v) {
  for (const auto& s : data)
    if (s.video_features.cols() != d_v)
      throw DataError(fmt::format("{}: feature width {} but config d_v is {}", s.query_id,
                                  s.video_features.cols(), d_v));
}

struct Checkpoints {
  std::string encoder;
  std::string grounder;
};

Checkpoints SplitCheckpoints(const std::string& arg) {
  const auto comma = arg.find(',');
  if (comma == std::string::npos || comma == 0 || comma + 1 == arg.size())
    throw UsageError("--checkpoints expects ENCODER,GROUNDER");
  return {arg.substr(0, comma), arg.substr(comma + 1)};
}

GroundingModel LoadModel(const Checkpoints& c) {
  GroundingModel m = io::ReadGrounder(c.grounder);
  m.encoder = io::ReadEncoder(c.encoder);
  m.Validate();
  return m;
}

std::vector<PredictionSet> PredictAll(const GroundingModel& model,
                                      const std::vector<GroundingSample>& data, std::size_t k) {
  std::vector<PredictionSet> preds;
  preds.reserve(data.size());
  for (const auto& s : data) {
    if (s.video_features.cols() != model.infuser.dims.d_v)
      throw DataError(s.query_id + ": feature width does not match the grounder checkpoint");
    preds.push_back(Predict(model, s, k));
  }
  return preds;
}

std::vector<EvalTarget> Targets(const std::vector<GroundingSample>& data) {
  std::vector<EvalTarget> t;
  t.reserve(data.size());
  for (const auto& s : data) t.push_back(TargetOf(s));
  return t;
}

// Reorders predictions to dataset order; every query needs exactly one set.
std::vector<PredictionSet> AlignPredictions(std::vector<PredictionSet> preds,
                                            const std::vector<GroundingSample>& data) {
  std::map<std::string, PredictionSet> by_id;
  for (auto& p : preds) by_id.emplace(p.query_id, std::move(p));
  std::vector<PredictionSet> out;
  for (const auto& s : data) {
    auto it = by_id.find(s.query_id);
    if (it == by_id.end()) throw DataError("predictions: no entry for query " + s.query_id);
    out.push_back(std::move(it->second));
    by_id.erase(it);
  }
  if (!by_id.empty()) throw DataError("predictions: unknown query " + by_id.begin()->first);
  return out;
}

void PrintReport(std::ostream& out, const MetricReport& r) {
  out << fmt::format("n={} R1@0.3={:.4f} R5@0.3={:.4f} R1@0.5={:.4f} R5@0.5={:.4f} coverage={:.4f}\n",
                     r.n_samples, r.r1_03, r.r5_03, r.r1_05, r.r5_05, r.gt_coverage);
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  InitLogging();
  CLI::App app{"Environment-infused long-form video-language grounding", "eivlg"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_path, checkpoints, encoder_ckpt, predictions_path;
  std::optional<std::uint64_t> seed;
  int seeds = 10;
  bool inject_fault = false, oracle = false, adversarial = false;
  double span_s = 30.0;
  int top_k = 5;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset directory");
  synth->add_option("--config", config_path, "run configuration file");
  synth->add_option("--out", out_path, "output directory")->required();
  synth->add_option("--seed", seed, "override the configured seed");

  auto* train_enc = app.add_subcommand("train-encoder", "train the caption/query text encoder");
  train_enc->add_option("--data", data_path, "dataset directory or manifest")->required();
  train_enc->add_option("--config", config_path, "run configuration file");
  train_enc->add_option("--out-checkpoint", out_path, "encoder checkpoint to write")->required();

  auto* train_gr = app.add_subcommand("train-grounder", "train infuser and grounding head");
  train_gr->add_option("--data", data_path, "dataset directory or manifest")->required();
  train_gr->add_option("--config", config_path, "run configuration file");
  train_gr->add_option("--encoder-checkpoint", encoder_ckpt, "trained encoder")->required();
  train_gr->add_option("--out-checkpoint", out_path, "grounder checkpoint to write")->required();

  auto* predict = app.add_subcommand("predict", "write ranked candidates per query");
  predict->add_option("--data", data_path, "dataset directory or manifest")->required();
  predict->add_option("--checkpoints", checkpoints, "ENCODER,GROUNDER")->required();
  predict->add_option("--out-predictions", out_path, "predictions JSONL to write")->required();
  predict->add_option("--top-k", top_k, "candidates per query")->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "compute Rk@IoU for a model or a predictions file");
  eval->add_option("--data", data_path, "dataset directory or manifest")->required();
  auto* eval_ckpt = eval->add_option("--checkpoints", checkpoints, "ENCODER,GROUNDER");
  auto* eval_pred = eval->add_option("--predictions", predictions_path, "predictions JSONL");
  eval_ckpt->excludes(eval_pred);
  eval->add_option("--out-report", out_path, "report JSON to write")->required();

  auto* text_only = app.add_subcommand("text-only-eval", "caption-retrieval grounding baseline");
  text_only->add_option("--data", data_path, "dataset directory or manifest")->required();
  auto* to_ckpt = text_only->add_option("--encoder-checkpoint", encoder_ckpt, "trained encoder");
  auto* to_oracle = text_only->add_flag("--oracle-embeddings", oracle,
                                        "use ground-truth-derived embeddings instead of an encoder");
  auto* to_adv = text_only->add_flag("--adversarial-embeddings", adversarial,
                                     "use embeddings that point away from the ground truth");
  to_oracle->excludes(to_adv);
  to_ckpt->excludes(to_oracle)->excludes(to_adv);
  text_only->add_option("--span-s", span_s, "window length in seconds")->capture_default_str();
  text_only->add_option("--out-report", out_path, "report JSON to write")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
  gradcheck->add_option("--seeds", seeds, "number of random instances")->capture_default_str();
  gradcheck->add_flag("--inject-fault", inject_fault, "flip one analytic gradient sign");

  std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rest.begin(), rest.end());  // CLI11 consumes from the back
  try {
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e_out;
    const int code = app.exit(e, o, e_out);
    out << o.str();
    err << e_out.str();
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      RunConfig c = ConfigOrDefault(config_path);
      if (seed) c.seed = *seed;
      io::SaveDataset(out_path, Generate(c.Synth()));
    } else if (*train_enc) {
      const RunConfig c = ConfigOrDefault(config_path);
      const auto data = io::LoadDataset(data_path);
      const auto init = TextEncoderParams::Init(c.vocab_size, c.d_t, c.seed, c.normalize_embeddings);
      const EncoderTrainResult r = TrainEncoder(data, init, c.EncoderTraining());
      io::WriteEncoder(out_path, r.params);
      if (!r.epoch_loss.empty())
        out << fmt::format("epochs={} first_loss={:.6f} last_loss={:.6f}\n", r.epoch_loss.size(),
                           r.epoch_loss.front(), r.epoch_loss.back());
    } else if (*train_gr) {
      const RunConfig c = ConfigOrDefault(config_path);
      const auto data = io::LoadDataset(data_path);
      RequireFeatureWidth(data, c.d_v);
      GroundingModel m;
      m.encoder = io::ReadEncoder(encoder_ckpt);
      if (m.encoder.dim != c.d_t)
        throw DataError(fmt::format("encoder checkpoint has D_t={} but config d_t is {}",
                                    m.encoder.dim, c.d_t));
      m.infuser = InfuserParams::Init(c.Dims(), c.seed);
      m.grounder = GrounderParams::Init(c.d_t, c.d_v, c.seed);
      const GrounderTrainResult r = TrainGrounder(data, std::move(m), c.GrounderTraining());
      io::WriteGrounder(out_path, r.model);
      if (c.train_encoder_jointly) io::WriteEncoder(out_path + ".encoder", r.model.encoder);
      if (!r.epoch_loss.empty())
        out << fmt::format("epochs={} first_loss={:.6f} last_loss={:.6f}\n", r.epoch_loss.size(),
                           r.epoch_loss.front(), r.epoch_loss.back());
    } else if (*predict) {
      const auto model = LoadModel(SplitCheckpoints(checkpoints));
      const auto data = io::LoadDataset(data_path);
      io::WritePredictions(out_path, PredictAll(model, data, static_cast<std::size_t>(top_k)));
    } else if (*eval) {
      if (checkpoints.empty() && predictions_path.empty())
        throw UsageError("eval needs --checkpoints or --predictions");
      const auto data = io::LoadDataset(data_path);
      std::vector<PredictionSet> preds;
      if (!checkpoints.empty()) {
        preds = PredictAll(LoadModel(SplitCheckpoints(checkpoints)), data, 5);
      } else {
        preds = AlignPredictions(io::ReadPredictions(predictions_path), data);
      }
      MetricReport r = Evaluate(preds, Targets(data));
      r.gt_coverage = GtCoverage(data);
      io::WriteReport(out_path, r);
      PrintReport(out, r);
    } else if (*text_only) {
      if (encoder_ckpt.empty() && !oracle && !adversarial)
        throw UsageError("text-only-eval needs --encoder-checkpoint or an embedding flag");
      if (!(span_s > 0.0)) throw UsageError("--span-s must be positive");
      const auto data = io::LoadDataset(data_path);
      MetricReport r;
      if (oracle) {
        r = TextOnlyEvaluate(data, [](const GroundingSample& s) { return OracleEmbeddings(s); }, span_s);
      } else if (adversarial) {
        r = TextOnlyEvaluate(data, [](const GroundingSample& s) { return AdversarialEmbeddings(s); },
                             span_s);
      } else {
        r = TextOnlyEvaluate(data, io::ReadEncoder(encoder_ckpt), span_s);
      }
      io::WriteReport(out_path, r);
      PrintReport(out, r);
    } else if (*gradcheck) {
      if (seeds < 1) throw UsageError("--seeds must be >= 1");
      GradSuiteOptions o;
      o.seeds = seeds;
      o.inject_fault = inject_fault;
      const GradSuiteReport r = RunGradSuite(o);
      std::map<std::string, double> per_check;
      for (const auto& e : r.entries)
        per_check[e.name] = std::max(per_check[e.name], e.result.max_rel_error);
      for (const auto& [name, worst] : per_check) out << fmt::format("{:<24} {:.3e}\n", name, worst);
      out << fmt::format("checks={} max_rel_error={:.3e} worst={}\n", r.entries.size(),
                         r.max_rel_error, r.worst);
      out << fmt::format("tiny_coords={} max_tiny_abs_error={:.3e}\n", r.tiny, r.max_tiny_abs_error);
      if (!(r.max_tiny_abs_error < kTinyAbsTolerance))
        throw NumericError(fmt::format("gradient check failed: absolute error {:.3e} on a tiny gradient",
                                       r.max_tiny_abs_error));
      if (!(r.max_rel_error < kGradTolerance))
        throw NumericError(fmt::format("gradient check failed: {:.3e} >= {:.0e} in {}",
                                       r.max_rel_error, kGradTolerance, r.worst));
    }
  } catch (const Error& e) {
    err << "eivlg: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "eivlg: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kData);
  }
  return 0;
}

}  // namespace eivlg::cli
