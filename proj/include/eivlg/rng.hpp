#pragma once

// Counter-based random numbers: every draw is a pure function of
// (seed, stream, substream, counter), so independent streams can be split by
// video index or purpose without sharing state. The integer output is
// bit-identical on every platform; the real-valued helpers below use only
// exact scaling by powers of two plus one multiply.

#include <cstdint>
#include <span>

namespace eivlg {

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0)
      : seed_(seed), stream_(stream), substream_(substream) {}

  /// SplitMix64 finalizer.
  static constexpr std::uint64_t Mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Output number `counter` of this stream.
  std::uint64_t At(std::uint64_t counter) const {
    constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
    std::uint64_t x = Mix(seed_ + kGolden * (stream_ + 1));
    x = Mix(x + kGolden * (substream_ + 1));
    return Mix(x + kGolden * (counter + 1));
  }

  std::uint64_t Next() { return At(counter_++); }

  /// Uniform integer in [0, n), n > 0. Lemire's multiply-shift with rejection.
  std::uint64_t Below(std::uint64_t n) {
    while (true) {
      __extension__ using u128 = unsigned __int128;
      const u128 product = static_cast<u128>(Next()) * static_cast<u128>(n);
      const auto low = static_cast<std::uint64_t>(product);
      if (low >= n || low >= (0 - n) % n) return static_cast<std::uint64_t>(product >> 64);
    }
  }

  /// Uniform in [0, 1) with 53 random bits.
  double Uniform() { return static_cast<double>(Next() >> 11) * 0x1.0p-53; }

  /// Uniform in [-limit, limit).
  double Symmetric(double limit) { return (2.0 * Uniform() - 1.0) * limit; }

  /// Bell-shaped noise: Irwin-Hall sum of four 16-bit uniforms, zero mean,
  /// standard deviation ≈ 1.155. Exactly representable in float32.
  double IrwinHall4() {
    std::int64_t sum = 0;
    for (int i = 0; i < 4; ++i) sum += static_cast<std::int64_t>(Next() >> 48);
    const std::int64_t centered = sum - 2 * 65535;
    return static_cast<double>(centered) * 0x1.0p-15;
  }

  /// Fisher-Yates shuffle of `order`.
  template <typename T>
  void Shuffle(std::span<T> order) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(Below(i));
      std::swap(order[i - 1], order[j]);
    }
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t substream_;
  std::uint64_t counter_ = 0;
};

/// Named stream identifiers so unrelated consumers never collide.
enum class Stream : std::uint64_t {
  kEncoderInit = 1,
  kInfuserInit = 2,
  kGrounderInit = 3,
  kEpochOrder = 4,
  kSynthVideo = 16,
  kSynthFeatures = 17,
  kSynthCaptions = 18,
  kSynthQuery = 19,
  kChance = 32,
};

inline std::uint64_t StreamId(Stream s) { return static_cast<std::uint64_t>(s); }

}  // namespace eivlg
