#pragma once

// Run configuration: a flat text file of `key = value` lines with `#`
// comments. Absent keys keep their defaults; unknown keys and unparsable or
// out-of-range values raise UsageError naming the key.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "eivlg/encoder.hpp"
#include "eivlg/grounder.hpp"
#include "eivlg/infuser.hpp"
#include "eivlg/model.hpp"
#include "eivlg/synth.hpp"

namespace eivlg {

struct RunConfig {
  std::uint64_t seed = 42;
  int epochs = 20;
  double lr = 1e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  EncoderLoss loss = EncoderLoss::kMll;
  LossSuite suite = LossSuite::kSpanQgh;
  FusionVariant variant = FusionVariant::kConcat;
  std::size_t d_t = 64;
  std::size_t d_v = 32;
  std::size_t d_a = 64;
  std::size_t vocab_size = 4096;
  bool normalize_embeddings = true;
  double caption_interval_s = 10.0;
  double span_s = 30.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double qgh_extension = 0.0;
  bool train_encoder_jointly = false;
  int top_k = 5;
  // synthetic data
  int n_videos = 200;
  double duration_s = 300.0;
  double fps = 0.5;
  int n_environments = 8;
  double gt_span_s = 30.0;
  bool informative_captions = true;
  bool informative_video = false;

  void Validate() const;

  AdamWConfig Adamw() const;
  SynthConfig Synth() const;
  EncoderTrainConfig EncoderTraining() const;
  GrounderTrainConfig GrounderTraining() const;
  InfuserDims Dims() const { return {d_t, d_v, d_a}; }
};

RunConfig ParseConfig(std::string_view text);
RunConfig LoadConfig(const std::filesystem::path& path);

}  // namespace eivlg
