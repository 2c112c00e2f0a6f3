#include "eivlg/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "eivlg/error.hpp"

namespace eivlg::io {
namespace {

using Json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "little-endian hosts only");

constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void Magic(const char* m) { out_.append(m, 4); }
  void U32(std::uint32_t v) { Raw(&v, sizeof v); }
  void U64(std::uint64_t v) { Raw(&v, sizeof v); }
  void F32(double v) {
    const auto f = static_cast<float>(v);
    if (!std::isfinite(f)) throw NumericError("refusing to write a non-finite value");
    Raw(&f, sizeof f);
  }
  void Floats(std::span<const double> values) {
    for (double v : values) F32(v);
  }
  std::string Take() { return std::move(out_); }

 private:
  void Raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view bytes, const char* what) : bytes_(bytes), what_(what) {}

  void Magic(const char* m) {
    if (bytes_.size() < 4 || std::memcmp(bytes_.data(), m, 4) != 0)
      throw DataError(std::string(what_) + ": bad magic");
    pos_ = 4;
  }
  void Version() {
    const std::uint32_t v = U32();
    if (v != kVersion) throw DataError(std::string(what_) + ": unsupported version " + std::to_string(v));
  }
  std::uint32_t U32() {
    std::uint32_t v;
    Raw(&v, sizeof v);
    return v;
  }
  std::uint64_t U64() {
    std::uint64_t v;
    Raw(&v, sizeof v);
    return v;
  }
  void Floats(std::span<double> out) {
    Need(out.size() * sizeof(float));
    for (double& x : out) {
      float f;
      std::memcpy(&f, bytes_.data() + pos_, sizeof f);
      pos_ += sizeof f;
      if (!std::isfinite(f)) throw DataError(std::string(what_) + ": non-finite value");
      x = f;
    }
  }
  void Need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError(std::string(what_) + ": truncated");
  }
  void End() const {
    if (pos_ != bytes_.size()) throw DataError(std::string(what_) + ": trailing bytes");
  }

 private:
  void Raw(void* p, std::size_t n) {
    Need(n);
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::string_view bytes_;
  const char* what_;
  std::size_t pos_ = 0;
};

std::uint32_t Dim(std::size_t n, const char* what) {
  if (n > std::numeric_limits<std::uint32_t>::max()) throw DataError(std::string(what) + ": too large");
  return static_cast<std::uint32_t>(n);
}

// Guard against absurd headers before allocating.
void CheckPayload(std::uint64_t floats, const char* what) {
  if (floats > (std::uint64_t{1} << 31)) throw DataError(std::string(what) + ": implausible size");
}

Json Parse(std::string_view text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw DataError(what + ": " + e.what());
  }
}

template <typename T>
T Field(const Json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw DataError(where + ": missing \"" + key + "\"");
  const Json& v = obj.at(key);
  if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw DataError(where + ": \"" + key + "\" must be a string");
  } else if constexpr (std::is_same_v<T, double>) {
    if (!v.is_number()) throw DataError(where + ": \"" + key + "\" must be a number");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw DataError(where + ": \"" + key + "\" must be an integer");
  }
  return v.get<T>();
}

std::vector<std::string_view> Lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

bool Blank(std::string_view line) {
  return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

}  // namespace

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw DataError("error reading " + path.string());
  return ss.str();
}

void WriteFileAtomic(const fs::path& path, std::string_view bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw DataError("error writing " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw DataError("cannot rename onto " + path.string());
  }
}

// ---- matrices ----

std::string EncodeMatrix(const Matrix& m) {
  Writer w;
  w.Magic("EIVC");
  w.U32(kVersion);
  w.U32(Dim(m.rows(), "matrix"));
  w.U32(Dim(m.cols(), "matrix"));
  w.Floats(m.values());
  return w.Take();
}

Matrix DecodeMatrix(std::string_view bytes) {
  Reader r(bytes, "matrix");
  r.Magic("EIVC");
  r.Version();
  const std::uint32_t rows = r.U32();
  const std::uint32_t cols = r.U32();
  CheckPayload(std::uint64_t{rows} * cols, "matrix");
  r.Need(std::size_t{rows} * cols * sizeof(float));
  Matrix m(rows, cols);
  r.Floats(m.values());
  r.End();
  return m;
}

void WriteMatrix(const fs::path& path, const Matrix& m) { WriteFileAtomic(path, EncodeMatrix(m)); }
Matrix ReadMatrix(const fs::path& path) {
  try {
    return DecodeMatrix(ReadFile(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---- checkpoints ----

std::string EncodeEncoder(const TextEncoderParams& params) {
  params.Validate();
  Writer w;
  w.Magic("EIVT");
  w.U32(kVersion);
  w.U32(Dim(params.vocab_size, "encoder"));
  w.U32(Dim(params.dim, "encoder"));
  for (auto t : params.Tensors()) w.Floats(t);
  w.U64(params.seed);
  w.U32(params.normalize ? 1u : 0u);
  w.U32(0);
  return w.Take();
}

TextEncoderParams DecodeEncoder(std::string_view bytes) {
  Reader r(bytes, "encoder checkpoint");
  r.Magic("EIVT");
  r.Version();
  const std::uint32_t v = r.U32();
  const std::uint32_t d = r.U32();
  if (v == 0 || d == 0) throw DataError("encoder checkpoint: zero dimension");
  CheckPayload(std::uint64_t{v} * d + std::uint64_t{d} * d + d, "encoder checkpoint");
  r.Need((std::size_t{v} * d + std::size_t{d} * d + d) * sizeof(float));
  TextEncoderParams p = TextEncoderParams::Zeros(v, d);
  for (auto t : p.Tensors()) r.Floats(t);
  p.seed = r.U64();
  const std::uint32_t flags = r.U32();
  if (flags > 1u) throw DataError("encoder checkpoint: unknown flags");
  p.normalize = (flags & 1u) != 0;
  if (r.U32() != 0) throw DataError("encoder checkpoint: reserved field set");
  r.End();
  return p;
}

void WriteEncoder(const fs::path& path, const TextEncoderParams& params) {
  WriteFileAtomic(path, EncodeEncoder(params));
}
TextEncoderParams ReadEncoder(const fs::path& path) {
  try {
    return DecodeEncoder(ReadFile(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string EncodeGrounder(const GroundingModel& model) {
  model.infuser.Validate();
  model.grounder.Validate();
  const InfuserDims& d = model.infuser.dims;
  Writer w;
  w.Magic("EIVG");
  w.U32(kVersion);
  w.U32(Dim(d.d_t, "grounder"));
  w.U32(Dim(d.d_v, "grounder"));
  w.U32(Dim(d.d_a, "grounder"));
  w.U32(static_cast<std::uint32_t>(model.variant));
  w.U32(static_cast<std::uint32_t>(model.suite));
  for (auto t : model.infuser.Tensors()) w.Floats(t);
  for (auto t : model.grounder.Tensors()) w.Floats(t);
  return w.Take();
}

GroundingModel DecodeGrounder(std::string_view bytes) {
  Reader r(bytes, "grounder checkpoint");
  r.Magic("EIVG");
  r.Version();
  InfuserDims d;
  d.d_t = r.U32();
  d.d_v = r.U32();
  d.d_a = r.U32();
  if (d.d_t == 0 || d.d_v == 0 || d.d_a == 0) throw DataError("grounder checkpoint: zero dimension");
  if (d.d_t > 65536 || d.d_v > 65536 || d.d_a > 65536)
    throw DataError("grounder checkpoint: implausible dimension");
  const std::uint32_t variant = r.U32();
  const std::uint32_t suite = r.U32();
  if (variant > static_cast<std::uint32_t>(FusionVariant::kNone))
    throw DataError("grounder checkpoint: unknown variant");
  if (suite > static_cast<std::uint32_t>(LossSuite::kFocalDiou))
    throw DataError("grounder checkpoint: unknown loss suite");
  GroundingModel m;
  m.variant = static_cast<FusionVariant>(variant);
  m.suite = static_cast<LossSuite>(suite);
  m.infuser = InfuserParams::Zeros(d);
  m.grounder = GrounderParams::Zeros(d.d_t, d.d_v);
  std::size_t total = 0;
  for (auto t : m.infuser.Tensors()) total += t.size();
  for (auto t : m.grounder.Tensors()) total += t.size();
  r.Need(total * sizeof(float));
  for (auto t : m.infuser.Tensors()) r.Floats(t);
  for (auto t : m.grounder.Tensors()) r.Floats(t);
  r.End();
  return m;
}

void WriteGrounder(const fs::path& path, const GroundingModel& model) {
  WriteFileAtomic(path, EncodeGrounder(model));
}
GroundingModel ReadGrounder(const fs::path& path) {
  try {
    return DecodeGrounder(ReadFile(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---- captions ----

std::map<std::string, CaptionTrack> ParseCaptions(std::string_view text) {
  std::map<std::string, CaptionTrack> tracks;
  const auto lines = Lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (Blank(lines[n])) continue;
    const std::string where = "captions line " + std::to_string(n + 1);
    const Json obj = Parse(lines[n], where);
    if (!obj.is_object()) throw DataError(where + ": not a JSON object");
    auto id = Field<std::string>(obj, "video_id", where);
    const double t = Field<double>(obj, "time_s", where);
    auto caption = Field<std::string>(obj, "text", where);
    if (id.empty()) throw DataError(where + ": empty video_id");
    if (!std::isfinite(t) || t < 0.0) throw DataError(where + ": time_s must be finite and >= 0");
    CaptionTrack& track = tracks[id];
    track.video_id = id;
    if (!track.entries.empty() && !(t > track.entries.back().time_s))
      throw DataError(where + ": timestamps for " + id + " not strictly increasing");
    track.entries.push_back({static_cast<int>(track.entries.size()) + 1, t, std::move(caption)});
  }
  for (auto& [id, track] : tracks) {
    if (track.entries.size() >= 2) {
      track.interval_s = track.entries[1].time_s - track.entries[0].time_s;
      track.Validate();
    }
  }
  return tracks;
}

std::map<std::string, CaptionTrack> ReadCaptions(const fs::path& path) {
  return ParseCaptions(ReadFile(path));
}

std::string FormatCaptions(const std::vector<CaptionTrack>& tracks) {
  std::string out;
  for (const auto& track : tracks) {
    for (const auto& e : track.entries) {
      Json obj;
      obj["video_id"] = track.video_id;
      obj["time_s"] = e.time_s;
      obj["text"] = e.text;
      out += obj.dump();
      out += '\n';
    }
  }
  return out;
}

// ---- manifest / dataset ----

void Manifest::Validate() const {
  if (version != 1) throw DataError("manifest: unsupported version " + std::to_string(version));
  if (caption_file.empty() || feature_dir.empty())
    throw DataError("manifest: caption_file and feature_dir are required");
  std::set<std::string> vids;
  for (const auto& v : videos) {
    v.Validate();
    if (v.video_id.empty() || v.video_id.find_first_of("/\\") != std::string::npos ||
        v.video_id == "." || v.video_id == "..")
      throw DataError("manifest: invalid video_id \"" + v.video_id + "\"");
    if (!vids.insert(v.video_id).second) throw DataError("manifest: duplicate video " + v.video_id);
  }
  std::set<std::string> qids;
  for (const auto& s : samples) {
    if (!vids.count(s.video_id))
      throw DataError("manifest: sample " + s.query_id + " refers to unknown video " + s.video_id);
    if (s.query_id.empty()) throw DataError("manifest: empty query_id");
    if (!qids.insert(s.query_id).second) throw DataError("manifest: duplicate query " + s.query_id);
  }
}

Manifest ParseManifest(std::string_view text) {
  const Json j = Parse(text, "manifest");
  if (!j.is_object()) throw DataError("manifest: not a JSON object");
  Manifest m;
  m.version = Field<int>(j, "version", "manifest");
  m.caption_file = Field<std::string>(j, "caption_file", "manifest");
  m.feature_dir = Field<std::string>(j, "feature_dir", "manifest");
  if (!j.contains("videos") || !j["videos"].is_array()) throw DataError("manifest: videos must be an array");
  if (!j.contains("samples") || !j["samples"].is_array()) throw DataError("manifest: samples must be an array");
  for (std::size_t i = 0; i < j["videos"].size(); ++i) {
    const Json& v = j["videos"][i];
    const std::string where = "manifest videos[" + std::to_string(i) + "]";
    VideoMeta meta;
    meta.video_id = Field<std::string>(v, "video_id", where);
    meta.duration_s = Field<double>(v, "duration_s", where);
    meta.fps = Field<double>(v, "fps", where);
    meta.frame_count = Field<long>(v, "frame_count", where);
    m.videos.push_back(std::move(meta));
  }
  for (std::size_t i = 0; i < j["samples"].size(); ++i) {
    const Json& s = j["samples"][i];
    const std::string where = "manifest samples[" + std::to_string(i) + "]";
    ManifestSample ms;
    ms.video_id = Field<std::string>(s, "video_id", where);
    ms.query_id = Field<std::string>(s, "query_id", where);
    ms.query = Field<std::string>(s, "query", where);
    ms.gt_start_s = Field<double>(s, "gt_start_s", where);
    ms.gt_end_s = Field<double>(s, "gt_end_s", where);
    m.samples.push_back(std::move(ms));
  }
  m.Validate();
  return m;
}

std::string FormatManifest(const Manifest& m) {
  Json j;
  j["version"] = m.version;
  j["caption_file"] = m.caption_file;
  j["feature_dir"] = m.feature_dir;
  j["videos"] = Json::array();
  for (const auto& v : m.videos)
    j["videos"].push_back(
        {{"video_id", v.video_id}, {"duration_s", v.duration_s}, {"fps", v.fps}, {"frame_count", v.frame_count}});
  j["samples"] = Json::array();
  for (const auto& s : m.samples)
    j["samples"].push_back({{"video_id", s.video_id},
                            {"query_id", s.query_id},
                            {"query", s.query},
                            {"gt_start_s", s.gt_start_s},
                            {"gt_end_s", s.gt_end_s}});
  return j.dump(2) + "\n";
}

void SaveDataset(const fs::path& dir, const std::vector<GroundingSample>& samples) {
  for (const auto& s : samples) s.Validate();
  Manifest m;
  std::vector<CaptionTrack> tracks;
  std::set<std::string> seen;
  for (const auto& s : samples) {
    if (seen.insert(s.video.video_id).second) {
      m.videos.push_back(s.video);
      tracks.push_back(s.captions);
    }
    m.samples.push_back({s.video.video_id, s.query_id, s.query, s.gt.start, s.gt.end});
  }
  m.Validate();
  std::error_code ec;
  fs::create_directories(dir / m.feature_dir, ec);
  if (ec) throw DataError("cannot create " + (dir / m.feature_dir).string());
  seen.clear();
  for (const auto& s : samples)
    if (seen.insert(s.video.video_id).second)
      WriteMatrix(dir / m.feature_dir / (s.video.video_id + ".eivc"), s.video_features);
  WriteFileAtomic(dir / m.caption_file, FormatCaptions(tracks));
  WriteFileAtomic(dir / "manifest.json", FormatManifest(m));
  spdlog::info("wrote {} samples over {} videos to {}", samples.size(), m.videos.size(), dir.string());
}

std::vector<GroundingSample> LoadDataset(const fs::path& path) {
  const fs::path manifest_path = fs::is_directory(path) ? path / "manifest.json" : path;
  const fs::path root = manifest_path.parent_path();
  const Manifest m = ParseManifest(ReadFile(manifest_path));
  auto tracks = ReadCaptions(root / m.caption_file);

  std::map<std::string, std::pair<VideoMeta, Matrix>> videos;
  for (const auto& v : m.videos) {
    auto it = tracks.find(v.video_id);
    if (it == tracks.end()) throw DataError("dataset: video " + v.video_id + " has no captions");
    CaptionTrack& track = it->second;
    if (track.entries.size() == 1) track.interval_s = v.duration_s;
    track.Validate(&v);
    if (track.entries.back().time_s >= v.duration_s)
      throw DataError("dataset: caption beyond the end of " + v.video_id);
    Matrix features = ReadMatrix(root / m.feature_dir / (v.video_id + ".eivc"));
    if (static_cast<long>(features.rows()) != v.frame_count)
      throw DataError("dataset: features for " + v.video_id + " have " +
                      std::to_string(features.rows()) + " rows, expected " +
                      std::to_string(v.frame_count));
    videos.emplace(v.video_id, std::make_pair(v, std::move(features)));
  }
  for (const auto& [id, track] : tracks)
    if (!videos.count(id)) throw DataError("dataset: captions for unknown video " + id);

  std::size_t d_v = 0;
  std::vector<GroundingSample> out;
  out.reserve(m.samples.size());
  for (const auto& ms : m.samples) {
    const auto& [meta, features] = videos.at(ms.video_id);
    if (d_v == 0) d_v = features.cols();
    if (features.cols() != d_v) throw DataError("dataset: inconsistent feature width for " + ms.video_id);
    GroundingSample s;
    s.video = meta;
    s.captions = tracks.at(ms.video_id);
    s.query_id = ms.query_id;
    s.query = ms.query;
    s.gt = Interval{ms.gt_start_s, ms.gt_end_s, TimeUnit::kSeconds};
    s.video_features = features;
    s.Validate();
    out.push_back(std::move(s));
  }
  return out;
}

// ---- predictions ----

std::string FormatPredictions(const std::vector<PredictionSet>& preds) {
  std::string out;
  for (const auto& p : preds) {
    Json obj;
    obj["query_id"] = p.query_id;
    obj["candidates"] = Json::array();
    for (const auto& c : p.candidates)
      obj["candidates"].push_back(
          {{"start_s", c.interval.start}, {"end_s", c.interval.end}, {"score", c.score}});
    out += obj.dump();
    out += '\n';
  }
  return out;
}

std::vector<PredictionSet> ParsePredictions(std::string_view text) {
  std::vector<PredictionSet> out;
  std::set<std::string> ids;
  const auto lines = Lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (Blank(lines[n])) continue;
    const std::string where = "predictions line " + std::to_string(n + 1);
    const Json obj = Parse(lines[n], where);
    PredictionSet p;
    p.query_id = Field<std::string>(obj, "query_id", where);
    if (!obj.contains("candidates") || !obj["candidates"].is_array())
      throw DataError(where + ": candidates must be an array");
    for (const Json& c : obj["candidates"]) {
      Candidate cand;
      cand.interval = Interval{Field<double>(c, "start_s", where), Field<double>(c, "end_s", where),
                               TimeUnit::kSeconds};
      cand.score = Field<double>(c, "score", where);
      p.candidates.push_back(cand);
    }
    try {
      p.Validate();
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    if (!ids.insert(p.query_id).second) throw DataError(where + ": duplicate query " + p.query_id);
    out.push_back(std::move(p));
  }
  return out;
}

void WritePredictions(const fs::path& path, const std::vector<PredictionSet>& preds) {
  WriteFileAtomic(path, FormatPredictions(preds));
}
std::vector<PredictionSet> ReadPredictions(const fs::path& path) {
  return ParsePredictions(ReadFile(path));
}

// ---- reports ----

std::string FormatReport(const MetricReport& r) {
  Json j;
  j["r1_iou03"] = r.r1_03;
  j["r5_iou03"] = r.r5_03;
  j["r1_iou05"] = r.r1_05;
  j["r5_iou05"] = r.r5_05;
  j["n_samples"] = r.n_samples;
  j["gt_coverage"] = r.gt_coverage;
  j["per_sample"] = Json::array();
  for (const auto& s : r.per_sample)
    j["per_sample"].push_back(
        {{"query_id", s.query_id}, {"best_rank", s.best_rank}, {"best_iou", s.best_iou}});
  return j.dump(2) + "\n";
}

MetricReport ParseReport(std::string_view text) {
  const Json j = Parse(text, "report");
  if (!j.is_object()) throw DataError("report: not a JSON object");
  MetricReport r;
  r.r1_03 = Field<double>(j, "r1_iou03", "report");
  r.r5_03 = Field<double>(j, "r5_iou03", "report");
  r.r1_05 = Field<double>(j, "r1_iou05", "report");
  r.r5_05 = Field<double>(j, "r5_iou05", "report");
  r.n_samples = Field<long>(j, "n_samples", "report");
  r.gt_coverage = Field<double>(j, "gt_coverage", "report");
  if (!j.contains("per_sample") || !j["per_sample"].is_array())
    throw DataError("report: per_sample must be an array");
  for (const Json& s : j["per_sample"])
    r.per_sample.push_back({Field<std::string>(s, "query_id", "report per_sample"),
                            Field<int>(s, "best_rank", "report per_sample"),
                            Field<double>(s, "best_iou", "report per_sample")});
  r.Validate();
  return r;
}

void WriteReport(const fs::path& path, const MetricReport& report) {
  report.Validate();
  WriteFileAtomic(path, FormatReport(report));
}
MetricReport ReadReport(const fs::path& path) { return ParseReport(ReadFile(path)); }

}  // namespace eivlg::io
