#include "eivlg/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>

#include "eivlg/error.hpp"
#include "eivlg/io.hpp"

namespace eivlg {
namespace {

std::string_view Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void Bad(std::string_view key, std::string_view value, std::string_view why) {
  throw UsageError("config key '" + std::string(key) + "': " + std::string(why) + " (got '" +
                   std::string(value) + "')");
}

template <typename T>
T ParseNumber(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) Bad(key, value, "not a number");
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(out)) Bad(key, value, "not finite");
  return out;
}

bool ParseBool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "off" || value == "no") return false;
  Bad(key, value, "expected true or false");
}

using Setter = std::function<void(RunConfig&, std::string_view key, std::string_view value)>;

template <typename T>
Setter Number(T RunConfig::*field) {
  return [field](RunConfig& c, std::string_view k, std::string_view v) {
    c.*field = ParseNumber<T>(k, v);
  };
}

Setter Flag(bool RunConfig::*field) {
  return [field](RunConfig& c, std::string_view k, std::string_view v) { c.*field = ParseBool(k, v); };
}

const std::map<std::string, Setter, std::less<>>& Setters() {
  static const std::map<std::string, Setter, std::less<>> setters = {
      {"seed", Number(&RunConfig::seed)},
      {"epochs", Number(&RunConfig::epochs)},
      {"lr", Number(&RunConfig::lr)},
      {"weight_decay", Number(&RunConfig::weight_decay)},
      {"beta1", Number(&RunConfig::beta1)},
      {"beta2", Number(&RunConfig::beta2)},
      {"eps", Number(&RunConfig::eps)},
      {"loss",
       [](RunConfig& c, std::string_view k, std::string_view v) {
         if (v == "mll") c.loss = EncoderLoss::kMll;
         else if (v == "bce") c.loss = EncoderLoss::kBce;
         else Bad(k, v, "expected mll or bce");
       }},
      {"suite",
       [](RunConfig& c, std::string_view k, std::string_view v) {
         try {
           c.suite = ParseLossSuite(v);
         } catch (const UsageError&) {
           Bad(k, v, "expected span_qgh or focal_diou");
         }
       }},
      {"variant",
       [](RunConfig& c, std::string_view k, std::string_view v) {
         try {
           c.variant = ParseFusionVariant(v);
         } catch (const UsageError&) {
           Bad(k, v, "expected concat, add, ca or none");
         }
       }},
      {"d_t", Number(&RunConfig::d_t)},
      {"d_v", Number(&RunConfig::d_v)},
      {"d_a", Number(&RunConfig::d_a)},
      {"vocab_size", Number(&RunConfig::vocab_size)},
      {"normalize_embeddings", Flag(&RunConfig::normalize_embeddings)},
      {"caption_interval_s", Number(&RunConfig::caption_interval_s)},
      {"span_s", Number(&RunConfig::span_s)},
      {"focal_alpha", Number(&RunConfig::focal_alpha)},
      {"focal_gamma", Number(&RunConfig::focal_gamma)},
      {"qgh_extension", Number(&RunConfig::qgh_extension)},
      {"train_encoder_jointly", Flag(&RunConfig::train_encoder_jointly)},
      {"top_k", Number(&RunConfig::top_k)},
      {"n_videos", Number(&RunConfig::n_videos)},
      {"duration_s", Number(&RunConfig::duration_s)},
      {"fps", Number(&RunConfig::fps)},
      {"n_environments", Number(&RunConfig::n_environments)},
      {"gt_span_s", Number(&RunConfig::gt_span_s)},
      {"informative_captions", Flag(&RunConfig::informative_captions)},
      {"informative_video", Flag(&RunConfig::informative_video)},
  };
  return setters;
}

void Require(bool ok, const char* key, const char* why) {
  if (!ok) throw UsageError(std::string("config key '") + key + "': " + why);
}

}  // namespace

void RunConfig::Validate() const {
  Require(epochs >= 0, "epochs", "must be >= 0");
  Require(lr > 0.0, "lr", "must be positive");
  Require(weight_decay >= 0.0, "weight_decay", "must be >= 0");
  Require(beta1 >= 0.0 && beta1 < 1.0, "beta1", "must lie in [0, 1)");
  Require(beta2 >= 0.0 && beta2 < 1.0, "beta2", "must lie in [0, 1)");
  Require(eps > 0.0, "eps", "must be positive");
  Require(d_t >= 1, "d_t", "must be >= 1");
  Require(d_v >= 1, "d_v", "must be >= 1");
  Require(d_a >= 1, "d_a", "must be >= 1");
  Require(vocab_size >= 1, "vocab_size", "must be >= 1");
  Require(caption_interval_s > 0.0, "caption_interval_s", "must be positive");
  Require(span_s > 0.0, "span_s", "must be positive");
  Require(focal_alpha > 0.0 && focal_alpha < 1.0, "focal_alpha", "must lie in (0, 1)");
  Require(focal_gamma >= 0.0, "focal_gamma", "must be >= 0");
  Require(qgh_extension >= 0.0, "qgh_extension", "must be >= 0");
  Require(top_k >= 1, "top_k", "must be >= 1");
  Require(n_videos >= 0, "n_videos", "must be >= 0");
  Require(duration_s > 0.0, "duration_s", "must be positive");
  Require(fps > 0.0, "fps", "must be positive");
  Require(n_environments >= 2, "n_environments", "must be >= 2");
  Require(gt_span_s > 0.0 && gt_span_s <= duration_s, "gt_span_s", "must lie in (0, duration_s]");
}

AdamWConfig RunConfig::Adamw() const {
  AdamWConfig a;
  a.lr = lr;
  a.beta1 = beta1;
  a.beta2 = beta2;
  a.eps = eps;
  a.weight_decay = weight_decay;
  return a;
}

SynthConfig RunConfig::Synth() const {
  SynthConfig s;
  s.seed = seed;
  s.n_videos = n_videos;
  s.duration_s = duration_s;
  s.fps = fps;
  s.caption_interval_s = caption_interval_s;
  s.n_environments = n_environments;
  s.gt_span_s = gt_span_s;
  s.d_v = d_v;
  s.informative_captions = informative_captions;
  s.informative_video = informative_video;
  return s;
}

EncoderTrainConfig RunConfig::EncoderTraining() const {
  EncoderTrainConfig e;
  e.epochs = epochs;
  e.adamw = Adamw();
  e.loss = loss;
  e.seed = seed;
  return e;
}

GrounderTrainConfig RunConfig::GrounderTraining() const {
  GrounderTrainConfig g;
  g.epochs = epochs;
  g.adamw = Adamw();
  g.loss.suite = suite;
  g.loss.focal_alpha = focal_alpha;
  g.loss.focal_gamma = focal_gamma;
  g.loss.qgh_extension = qgh_extension;
  g.variant = variant;
  g.train_encoder = train_encoder_jointly;
  g.seed = seed;
  return g;
}

RunConfig ParseConfig(std::string_view text) {
  RunConfig c;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string_view key = Trim(line.substr(0, eq));
    const std::string_view value = Trim(line.substr(eq + 1));
    const auto it = Setters().find(key);
    if (it == Setters().end()) throw UsageError("config key '" + std::string(key) + "': unknown key");
    it->second(c, key, value);
  }
  c.Validate();
  return c;
}

RunConfig LoadConfig(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::ReadFile(path);
  } catch (const DataError& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return ParseConfig(text);
}

}  // namespace eivlg
