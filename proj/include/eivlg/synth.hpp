#pragma once

// Seeded synthetic grounding benchmark. Each video is a sequence of
// environment segments (kitchen, garage, ...); the query names the
// environment of the ground-truth segment, which occurs exactly once per
// video. Captions describe the environment at each caption time and mark
// whether the camera wearer is entering, inside or leaving it. Video features
// are environment-independent noise unless informative_video is set, so the
// localisation signal can be confined to the captions.
//
// All placement decisions use integer milliseconds and CounterRng streams
// keyed on (seed, video index), so datasets are bit-reproducible anywhere.

#include <cstdint>
#include <string>
#include <vector>

#include "eivlg/core.hpp"
#include "eivlg/encoder.hpp"

namespace eivlg {

struct SynthConfig {
  std::uint64_t seed = 42;
  int n_videos = 200;
  double duration_s = 300.0;
  double fps = 0.5;
  double caption_interval_s = 10.0;
  int n_environments = 8;
  double gt_span_s = 30.0;
  std::size_t d_v = 32;
  bool informative_captions = true;
  bool informative_video = false;

  void Validate() const;
};

struct EnvironmentVocab {
  std::string room;
  std::vector<std::string> objects;
};

/// Vocabulary of environment e (stable across seeds).
EnvironmentVocab Environment(int e);

std::vector<GroundingSample> Generate(const SynthConfig& config);

/// Upper-bound embeddings: captions whose time lies inside the GT get the
/// query vector e₀; every other caption gets e₁ (orthogonal to e₀).
EncodedEnvironment OracleEmbeddings(const GroundingSample& sample, std::size_t dim = 64);

/// The caption farthest from the GT midpoint gets the query vector, all
/// others are orthogonal to it.
EncodedEnvironment AdversarialEmbeddings(const GroundingSample& sample, std::size_t dim = 64);

enum class ChanceMode {
  kRandomSpan,  // GT-length window placed uniformly on the caption grid
  kTextOnly,    // text-only window around a uniformly random caption
};

struct ChanceOptions {
  ChanceMode mode = ChanceMode::kRandomSpan;
  int trials = 10000;
  double threshold = 0.5;
  double span_s = 30.0;  // text-only window
  std::uint64_t seed = 0;
};

/// Monte-Carlo estimate of R1@threshold for a predictor with no information
/// about the GT location, under the generator's GT placement distribution.
double MonteCarloChance(const SynthConfig& config, const ChanceOptions& options);

}  // namespace eivlg
