#pragma once

// On-disk formats. Binary files are little-endian with float32 payloads;
// JSON is UTF-8. Every writer goes through a temp file plus rename, so a
// failed write never leaves partial output behind. Readers throw DataError
// on any schema violation.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "eivlg/core.hpp"
#include "eivlg/encoder.hpp"
#include "eivlg/evaluation.hpp"
#include "eivlg/model.hpp"

namespace eivlg::io {

namespace fs = std::filesystem;

std::string ReadFile(const fs::path& path);
void WriteFileAtomic(const fs::path& path, std::string_view bytes);

// "EIVC" u32 version, u32 rows, u32 cols, rows*cols f32 row-major.
std::string EncodeMatrix(const Matrix& m);
Matrix DecodeMatrix(std::string_view bytes);
void WriteMatrix(const fs::path& path, const Matrix& m);
Matrix ReadMatrix(const fs::path& path);

// "EIVT" u32 version, u32 V, u32 D_t, token table, projection, bias (f32),
// then u64 seed, u32 flags (bit 0: normalize), u32 reserved.
std::string EncodeEncoder(const TextEncoderParams& params);
TextEncoderParams DecodeEncoder(std::string_view bytes);
void WriteEncoder(const fs::path& path, const TextEncoderParams& params);
TextEncoderParams ReadEncoder(const fs::path& path);

// "EIVG" u32 version, u32 D_t, D_v, D_a, variant, suite, then the infuser
// tensors followed by the grounder tensors (f32).
std::string EncodeGrounder(const GroundingModel& model);
/// Fills everything but model.encoder.
GroundingModel DecodeGrounder(std::string_view bytes);
void WriteGrounder(const fs::path& path, const GroundingModel& model);
GroundingModel ReadGrounder(const fs::path& path);

/// One JSON object per line: {"video_id", "time_s", "text"}. Tracks are
/// keyed by video id; within a video timestamps must increase in file order.
/// A single-caption track has interval_s = 0 until the dataset loader fills
/// it from the video duration.
std::map<std::string, CaptionTrack> ParseCaptions(std::string_view text);
std::map<std::string, CaptionTrack> ReadCaptions(const fs::path& path);
std::string FormatCaptions(const std::vector<CaptionTrack>& tracks);

struct ManifestSample {
  std::string video_id;
  std::string query_id;
  std::string query;
  double gt_start_s = 0.0;
  double gt_end_s = 0.0;
};

struct Manifest {
  int version = 1;
  std::string caption_file = "captions.jsonl";
  std::string feature_dir = "features";
  std::vector<VideoMeta> videos;
  std::vector<ManifestSample> samples;

  /// Unique ids and every sample's video present.
  void Validate() const;
};

Manifest ParseManifest(std::string_view text);
std::string FormatManifest(const Manifest& manifest);

/// Writes manifest.json, captions.jsonl and features/<video_id>.eivc.
void SaveDataset(const fs::path& dir, const std::vector<GroundingSample>& samples);
/// Loads and cross-validates a dataset directory (or a manifest file path).
std::vector<GroundingSample> LoadDataset(const fs::path& path);

std::string FormatPredictions(const std::vector<PredictionSet>& preds);
std::vector<PredictionSet> ParsePredictions(std::string_view text);
void WritePredictions(const fs::path& path, const std::vector<PredictionSet>& preds);
std::vector<PredictionSet> ReadPredictions(const fs::path& path);

std::string FormatReport(const MetricReport& report);
MetricReport ParseReport(std::string_view text);
void WriteReport(const fs::path& path, const MetricReport& report);
MetricReport ReadReport(const fs::path& path);

}  // namespace eivlg::io
