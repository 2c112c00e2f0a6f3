#include "eivlg/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "eivlg/error.hpp"
#include "eivlg/evaluation.hpp"
#include "eivlg/rng.hpp"

namespace eivlg {
namespace {

struct RoomSpec {
  const char* room;
  std::array<const char*, 4> objects;
};

constexpr RoomSpec kRooms[] = {
    {"kitchen", {"stove", "sink", "fridge", "kettle"}},
    {"bathroom", {"mirror", "towel", "bathtub", "toothbrush"}},
    {"bedroom", {"pillow", "wardrobe", "blanket", "nightstand"}},
    {"garage", {"toolbox", "bicycle", "car", "ladder"}},
    {"garden", {"shovel", "flowerbed", "hose", "fence"}},
    {"office", {"laptop", "printer", "desk", "whiteboard"}},
    {"laundry", {"washer", "dryer", "basket", "detergent"}},
    {"hallway", {"coatrack", "doormat", "umbrella", "shoerack"}},
    {"basement", {"boiler", "shelves", "boxes", "freezer"}},
    {"attic", {"suitcase", "rafters", "trunk", "insulation"}},
    {"workshop", {"drill", "sawhorse", "workbench", "clamps"}},
    {"balcony", {"railing", "planter", "chair", "clothesline"}},
    {"pantry", {"jars", "cereal", "flour", "spices"}},
    {"library", {"bookshelf", "armchair", "lamp", "globe"}},
    {"gym", {"treadmill", "dumbbells", "yogamat", "bench"}},
    {"diningroom", {"table", "plates", "candles", "cupboard"}},
};

constexpr const char* kMarkers[] = {
    "entering",
    "inside",
    "leaving",
    "passing through",
};

enum Marker { kEntering = 0, kInside = 1, kLeaving = 2, kPassing = 3 };

struct Segment {
  std::int64_t start_ms;
  std::int64_t end_ms;
  int env;
};

std::int64_t ToMs(double seconds) { return std::llround(seconds * 1000.0); }

std::string Id(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%05d", prefix, i);
  return buf;
}

// Environments distinct from `gt_env`, and from `prev` when possible.
int PickEnvironment(CounterRng& rng, int n_env, int gt_env, int prev) {
  std::vector<int> choices;
  for (int e = 0; e < n_env; ++e)
    if (e != gt_env && e != prev) choices.push_back(e);
  if (choices.empty())
    for (int e = 0; e < n_env; ++e)
      if (e != gt_env) choices.push_back(e);
  return choices[rng.Below(choices.size())];
}

// Fills [from, to) with segments of 2-5 caption cells.
void FillSegments(CounterRng& rng, std::int64_t from, std::int64_t to, std::int64_t cell_ms,
                  int n_env, int gt_env, std::vector<Segment>& out) {
  std::int64_t cursor = from;
  int prev = out.empty() ? -1 : out.back().env;
  while (cursor < to) {
    const std::int64_t len = cell_ms * static_cast<std::int64_t>(2 + rng.Below(4));
    const std::int64_t end = std::min(to, cursor + len);
    const int env = PickEnvironment(rng, n_env, gt_env, prev);
    out.push_back({cursor, end, env});
    prev = env;
    cursor = end;
  }
}

std::size_t GtSlotCount(const SynthConfig& c) {
  const std::int64_t duration = ToMs(c.duration_s);
  const std::int64_t span = ToMs(c.gt_span_s);
  const std::int64_t cell = ToMs(c.caption_interval_s);
  return static_cast<std::size_t>((duration - span) / cell + 1);
}

struct ObjectPair {
  std::size_t a;
  std::size_t b;
};

ObjectPair PickObjects(CounterRng& rng, std::size_t n) {
  const std::size_t a = rng.Below(n);
  std::size_t b = rng.Below(n - 1);
  if (b >= a) ++b;
  return {a, b};
}

std::string CaptionText(Marker marker, const EnvironmentVocab& vocab, ObjectPair objs) {
  return std::string(kMarkers[marker]) + " the " + vocab.room + " with the " +
         vocab.objects[objs.a] + " and the " + vocab.objects[objs.b];
}

}  // namespace

void SynthConfig::Validate() const {
  if (n_videos < 0) throw UsageError("synth: n_videos must be >= 0");
  if (!(duration_s > 0.0) || !(fps > 0.0) || !(caption_interval_s > 0.0) || !(gt_span_s > 0.0))
    throw UsageError("synth: durations, fps and intervals must be positive");
  if (n_environments < 2) throw UsageError("synth: n_environments must be >= 2");
  if (d_v < 1) throw UsageError("synth: d_v must be >= 1");
  if (gt_span_s > duration_s) throw UsageError("synth: gt_span_s exceeds duration_s");
  if (ToMs(caption_interval_s) < 1 || ToMs(gt_span_s) < 1)
    throw UsageError("synth: intervals below one millisecond");
  const auto captions = static_cast<long>(std::ceil(duration_s / caption_interval_s - 1e-9));
  if (captions > std::lround(duration_s * fps))
    throw UsageError("synth: more captions than frames (raise fps or caption_interval_s)");
}

EnvironmentVocab Environment(int e) {
  constexpr int kNamed = static_cast<int>(std::size(kRooms));
  if (e < kNamed) {
    const auto& r = kRooms[e];
    return {r.room, {r.objects.begin(), r.objects.end()}};
  }
  const std::string base = std::to_string(e);
  return {"room" + base, {"item" + base + "a", "item" + base + "b", "item" + base + "c",
                          "item" + base + "d"}};
}

std::vector<GroundingSample> Generate(const SynthConfig& config) {
  config.Validate();
  const std::int64_t duration_ms = ToMs(config.duration_s);
  const std::int64_t cell_ms = ToMs(config.caption_interval_s);
  const std::int64_t span_ms = ToMs(config.gt_span_s);
  const std::size_t slots = GtSlotCount(config);

  std::vector<EnvironmentVocab> vocab;
  for (int e = 0; e < config.n_environments; ++e) vocab.push_back(Environment(e));

  std::vector<GroundingSample> out;
  out.reserve(static_cast<std::size_t>(config.n_videos));
  for (int v = 0; v < config.n_videos; ++v) {
    const auto vid = static_cast<std::uint64_t>(v);
    CounterRng layout(config.seed, StreamId(Stream::kSynthVideo), vid);
    CounterRng text(config.seed, StreamId(Stream::kSynthCaptions), vid);
    CounterRng query_rng(config.seed, StreamId(Stream::kSynthQuery), vid);
    CounterRng noise(config.seed, StreamId(Stream::kSynthFeatures), vid);

    GroundingSample s;
    s.video = VideoMeta::Make(Id("vid", v), config.duration_s, config.fps);
    s.query_id = Id("q", v);

    const int gt_env = static_cast<int>(layout.Below(static_cast<std::uint64_t>(config.n_environments)));
    const std::int64_t gt_start = static_cast<std::int64_t>(layout.Below(slots)) * cell_ms;
    const std::int64_t gt_end = gt_start + span_ms;
    std::vector<Segment> segments;
    FillSegments(layout, 0, gt_start, cell_ms, config.n_environments, gt_env, segments);
    segments.push_back({gt_start, gt_end, gt_env});
    FillSegments(layout, gt_end, duration_ms, cell_ms, config.n_environments, gt_env, segments);
    s.gt = Interval{static_cast<double>(gt_start) / 1000.0, static_cast<double>(gt_end) / 1000.0,
                    TimeUnit::kSeconds};

    auto segment_at = [&](std::int64_t t_ms) -> std::size_t {
      for (std::size_t i = 0; i < segments.size(); ++i)
        if (t_ms >= segments[i].start_ms && t_ms < segments[i].end_ms) return i;
      return segments.size() - 1;
    };

    // Captions on the fixed grid.
    const auto n_captions = static_cast<std::size_t>((duration_ms + cell_ms - 1) / cell_ms);
    std::vector<std::size_t> caption_segment(n_captions);
    for (std::size_t k = 0; k < n_captions; ++k)
      caption_segment[k] = segment_at(static_cast<std::int64_t>(k) * cell_ms);
    // The same objects stay in view for a whole visit.
    std::vector<ObjectPair> segment_objects;
    for (const auto& seg : segments)
      segment_objects.push_back(
          PickObjects(text, vocab[static_cast<std::size_t>(seg.env)].objects.size()));
    s.captions.video_id = s.video.video_id;
    s.captions.interval_s = config.caption_interval_s;
    for (std::size_t k = 0; k < n_captions; ++k) {
      int env;
      Marker marker;
      ObjectPair objs;
      if (config.informative_captions) {
        const std::size_t seg = caption_segment[k];
        env = segments[seg].env;
        const bool first = k == 0 || caption_segment[k - 1] != seg;
        const bool last = k + 1 == n_captions || caption_segment[k + 1] != seg;
        marker = first && last ? kPassing : first ? kEntering : last ? kLeaving : kInside;
        objs = segment_objects[seg];
      } else {
        env = static_cast<int>(text.Below(static_cast<std::uint64_t>(config.n_environments)));
        marker = static_cast<Marker>(text.Below(4));
        objs = PickObjects(text, vocab[static_cast<std::size_t>(env)].objects.size());
      }
      s.captions.entries.push_back({static_cast<int>(k) + 1,
                                    static_cast<double>(static_cast<std::int64_t>(k) * cell_ms) / 1000.0,
                                    CaptionText(marker, vocab[static_cast<std::size_t>(env)], objs)});
    }

    const auto& gv = vocab[static_cast<std::size_t>(gt_env)];
    s.query = "when was i in the " + gv.room + " near the " +
              gv.objects[query_rng.Below(gv.objects.size())];

    // Features: per-frame noise, plus a per-environment prototype when the
    // video is informative.
    const auto m = static_cast<std::size_t>(s.video.frame_count);
    s.video_features = Matrix(m, config.d_v);
    for (std::size_t j = 0; j < m; ++j) {
      auto row = s.video_features.row(j);
      for (double& x : row) x = 0.5 * noise.IrwinHall4();
      if (config.informative_video) {
        const auto t_ms = static_cast<std::int64_t>(
            std::llround(static_cast<double>(j) * 1000.0 / config.fps));
        const int env = segments[segment_at(t_ms)].env;
        CounterRng proto(config.seed, StreamId(Stream::kSynthFeatures),
                         0x8000000000000000ULL + static_cast<std::uint64_t>(env));
        for (double& x : row) x += proto.IrwinHall4();
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

std::vector<std::size_t> InsideCaptions(const GroundingSample& sample) {
  std::vector<std::size_t> inside;
  for (std::size_t i = 0; i < sample.captions.entries.size(); ++i) {
    const double t = sample.captions.entries[i].time_s;
    if (t >= sample.gt.start && t < sample.gt.end) inside.push_back(i);
  }
  if (inside.empty()) {
    const CaptionSpan near = MapGtToCaptionSpan(sample.gt, sample.captions);
    inside.push_back(static_cast<std::size_t>(near.first - 1));
  }
  return inside;
}

EncodedEnvironment Basis(const GroundingSample& sample, std::size_t dim) {
  if (dim < 2) throw UsageError("oracle embeddings need dim >= 2");
  EncodedEnvironment env;
  env.video_id = sample.video.video_id;
  env.captions = Matrix(sample.captions.entries.size(), dim);
  for (std::size_t i = 0; i < env.captions.rows(); ++i) env.captions(i, 1) = 1.0;
  env.query = Vector(dim, 0.0);
  env.query[0] = 1.0;
  return env;
}

}  // namespace

EncodedEnvironment OracleEmbeddings(const GroundingSample& sample, std::size_t dim) {
  EncodedEnvironment env = Basis(sample, dim);
  for (std::size_t i : InsideCaptions(sample)) {
    env.captions(i, 0) = 1.0;
    env.captions(i, 1) = 0.0;
  }
  return env;
}

EncodedEnvironment AdversarialEmbeddings(const GroundingSample& sample, std::size_t dim) {
  EncodedEnvironment env = Basis(sample, dim);
  const double mid = 0.5 * (sample.gt.start + sample.gt.end);
  std::size_t far = 0;
  for (std::size_t i = 1; i < sample.captions.entries.size(); ++i)
    if (std::abs(sample.captions.entries[i].time_s - mid) >
        std::abs(sample.captions.entries[far].time_s - mid))
      far = i;
  env.captions(far, 0) = 1.0;
  env.captions(far, 1) = 0.0;
  return env;
}

double MonteCarloChance(const SynthConfig& config, const ChanceOptions& options) {
  config.Validate();
  if (options.trials < 1) throw UsageError("chance: trials must be >= 1");
  const VideoMeta video = VideoMeta::Make("chance", config.duration_s, config.fps);
  const std::size_t slots = GtSlotCount(config);
  const std::int64_t cell_ms = ToMs(config.caption_interval_s);
  const std::int64_t span_ms = ToMs(config.gt_span_s);
  const auto n_captions =
      static_cast<std::size_t>((ToMs(config.duration_s) + cell_ms - 1) / cell_ms);

  CounterRng rng(options.seed, StreamId(Stream::kChance));
  long hits = 0;
  for (int t = 0; t < options.trials; ++t) {
    const std::int64_t gt_start = static_cast<std::int64_t>(rng.Below(slots)) * cell_ms;
    const Interval gt{static_cast<double>(gt_start) / 1000.0,
                      static_cast<double>(gt_start + span_ms) / 1000.0, TimeUnit::kSeconds};
    Interval pred;
    if (options.mode == ChanceMode::kRandomSpan) {
      const std::int64_t p = static_cast<std::int64_t>(rng.Below(slots)) * cell_ms;
      pred = Interval{static_cast<double>(p) / 1000.0, static_cast<double>(p + span_ms) / 1000.0,
                      TimeUnit::kSeconds};
    } else {
      const std::size_t caption = 1 + rng.Below(n_captions);
      pred = FramesToSeconds(TextOnlyWindow(caption, n_captions, video, options.span_s), video.fps);
    }
    if (IntervalIou(pred, gt) >= options.threshold) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(options.trials);
}

}  // namespace eivlg
