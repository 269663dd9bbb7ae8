#ifndef QQLINEUP_RNG_HPP
#define QQLINEUP_RNG_HPP

#include <cstdint>
#include <limits>
#include <string>
#include <string_view>

namespace qqlineup {

namespace detail {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace detail

/// Immutable descriptor of a random stream. Every draw sequence is a pure
/// function of (seed, label, counter), so two streams with the same
/// descriptor agree bit for bit regardless of where or when they are used.
struct RngStream {
  std::uint64_t seed = 0;
  std::string label;

  /// Derived stream, e.g. `stream.child("panel-07")`.
  [[nodiscard]] RngStream child(std::string_view suffix) const {
    std::string l = label;
    l += '/';
    l += suffix;
    return RngStream{seed, std::move(l)};
  }

  [[nodiscard]] std::uint64_t key() const noexcept {
    return detail::mix64(seed ^ detail::mix64(detail::fnv1a64(label) + detail::kGoldenGamma));
  }

  friend bool operator==(const RngStream&, const RngStream&) = default;
};

/// Counter-based 64-bit generator over an RngStream (SplitMix64 output
/// function applied to key + counter * gamma). Satisfies
/// UniformRandomBitGenerator.
class Generator {
 public:
  using result_type = std::uint64_t;

  explicit Generator(const RngStream& stream) noexcept : key_(stream.key()) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGoldenGamma);
  }

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform01() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer on [lo, hi] (inclusive), unbiased via rejection.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) noexcept {
    const std::uint64_t span = hi - lo;
    if (span == max()) return (*this)();
    const std::uint64_t bound = span + 1;
    const std::uint64_t limit = max() - max() % bound;
    std::uint64_t r;
    do {
      r = (*this)();
    } while (r >= limit);
    return lo + r % bound;
  }

  [[nodiscard]] std::uint64_t draws() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Derive a 64-bit seed from a parent seed and a label; used where an API
/// takes a plain seed rather than a stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) noexcept {
  return RngStream{seed, std::string(label)}.key();
}

}  // namespace qqlineup

#endif  // QQLINEUP_RNG_HPP
