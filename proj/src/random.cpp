#include "tiltline/random.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "tiltline/errors.hpp"

namespace tiltline {

RandomStream::RandomStream(std::uint64_t seed) : engine_(seed) {}

double RandomStream::uniform() {
  // 53 random mantissa bits, shifted off zero by half an ulp.
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * factor;
  has_spare_ = true;
  return u * factor;
}

std::string RandomStream::serialize() const {
  std::ostringstream out;
  out << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
  std::uint64_t bits;
  std::memcpy(&bits, &spare_, sizeof bits);
  out << bits;
  return out.str();
}

RandomStream RandomStream::deserialize(std::string_view text) {
  RandomStream stream;
  std::istringstream in{std::string(text)};
  int spare_flag = -1;
  std::uint64_t bits = 0;
  in >> stream.engine_ >> spare_flag >> bits;
  if (!in || (spare_flag != 0 && spare_flag != 1)) {
    throw DecodeError("random stream state is malformed");
  }
  stream.has_spare_ = spare_flag == 1;
  std::memcpy(&stream.spare_, &bits, sizeof bits);
  return stream;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t chain_index,
                          std::uint64_t config_hash) {
  return mix64(mix64(mix64(base_seed) ^ chain_index) ^ config_hash);
}

}  // namespace tiltline
