#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace tiltline {

/// Seeded random stream owned by a single chain or worker.
///
/// The full state (engine plus the cached second normal of the polar
/// method) is serializable, so a restored stream continues bit-for-bit.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0x5eedULL);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();

  std::string serialize() const;
  static RandomStream deserialize(std::string_view text);

  friend bool operator==(const RandomStream& a, const RandomStream& b) {
    return a.engine_ == b.engine_ && a.has_spare_ == b.has_spare_ &&
           (!a.has_spare_ || a.spare_ == b.spare_);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Per-chain seed derived from (base seed, chain index, config hash).
std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t chain_index,
                          std::uint64_t config_hash);

}  // namespace tiltline
