#include <bit>
#include <cstring>
#include <string>

#include "tiltline/errors.hpp"
#include "tiltline/sampler.hpp"

namespace tiltline {

namespace {

constexpr char kMagic[4] = {'T', 'L', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) u8(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) u8(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void path(const Path& p) {
    u64(p.size());
    for (double v : p) f64(v);
  }
  void optional_path(const std::optional<Path>& p) {
    u8(p ? 1 : 0);
    if (p) path(*p);
  }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw DecodeError("checkpoint blob is truncated");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= std::uint32_t(u8()) << (8 * b);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= std::uint64_t(u8()) << (8 * b);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::uint64_t count(std::size_t item_bytes) {
    const std::uint64_t n = u64();
    if (item_bytes > 0 && n > (in_.size() - pos_) / item_bytes) {
      throw DecodeError("checkpoint blob is truncated");
    }
    return n;
  }
  Path path() {
    Path p(count(8));
    for (double& v : p) v = f64();
    return p;
  }
  std::optional<Path> optional_path() {
    const std::uint8_t flag = u8();
    if (flag > 1) throw DecodeError("checkpoint blob is corrupt");
    if (!flag) return std::nullopt;
    return path();
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string checkpoint(const ChainState& state, std::uint64_t config_hash) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u64(config_hash);
  const TimeGrid& g = state.ensemble.grid;
  w.f64(g.left());
  w.f64(g.right());
  w.u64(g.steps());
  w.optional_path(state.ensemble.floor);
  w.optional_path(state.ensemble.ceiling);
  w.u64(state.ensemble.lines.size());
  for (const auto& line : state.ensemble.lines) w.path(line);
  const std::string rng = state.rng.serialize();
  w.u64(rng.size());
  w.bytes(rng.data(), rng.size());
  w.u64(state.sweeps_done);
  w.u8(state.adapting ? 1 : 0);
  w.u64(state.stats.size());
  for (const auto& s : state.stats) {
    w.u64(s.proposals);
    w.u64(s.acceptances);
    w.u64(s.halvings);
    w.u64(s.site_updates);
    w.u64(s.endpoint_proposals);
    w.u64(s.endpoint_acceptances);
  }
  w.path(state.endpoint_scale);
  w.u64(state.endpoint_adapt_steps.size());
  for (auto v : state.endpoint_adapt_steps) w.u64(v);
  const std::uint64_t sum = fnv1a64(w.str());
  w.u64(sum);
  return std::move(w.str());
}

ChainState restore(std::string_view blob, std::uint64_t expected_config_hash) {
  if (blob.size() < 16 + 8) throw DecodeError("checkpoint blob is truncated");
  const std::string_view body = blob.substr(0, blob.size() - 8);
  Reader tail(blob.substr(blob.size() - 8));
  Reader r(body);
  if (std::memcmp(r.take(4).data(), kMagic, 4) != 0) {
    throw DecodeError("not a checkpoint blob (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw DecodeError("unsupported checkpoint version " + std::to_string(version));
  }
  if (fnv1a64(body) != tail.u64()) throw DecodeError("checkpoint checksum mismatch");
  if (r.u64() != expected_config_hash) {
    throw DecodeError("checkpoint was written under a different configuration");
  }
  const double left = r.f64();
  const double right = r.f64();
  const std::uint64_t steps = r.u64();
  TimeGrid grid = [&] {
    try {
      return TimeGrid(left, right, steps);
    } catch (const DomainError&) {
      throw DecodeError("checkpoint grid is invalid");
    }
  }();
  auto floor = r.optional_path();
  auto ceiling = r.optional_path();
  const std::uint64_t n = r.count(8);
  std::vector<Path> lines(n);
  for (auto& line : lines) {
    line = r.path();
    if (line.size() != grid.size()) throw DecodeError("checkpoint line length mismatch");
  }
  const std::uint64_t rng_len = r.count(1);
  RandomStream rng = RandomStream::deserialize(r.take(rng_len));
  ChainState state{Ensemble{grid, std::move(lines), std::move(floor), std::move(ceiling)},
                   std::move(rng), 0, {}, {}, {}, true};
  state.sweeps_done = r.u64();
  const std::uint8_t adapting = r.u8();
  if (adapting > 1) throw DecodeError("checkpoint blob is corrupt");
  state.adapting = adapting == 1;
  state.stats.resize(r.count(48));
  for (auto& s : state.stats) {
    s.proposals = r.u64();
    s.acceptances = r.u64();
    s.halvings = r.u64();
    s.site_updates = r.u64();
    s.endpoint_proposals = r.u64();
    s.endpoint_acceptances = r.u64();
  }
  state.endpoint_scale = r.path();
  state.endpoint_adapt_steps.resize(r.count(8));
  for (auto& v : state.endpoint_adapt_steps) v = r.u64();
  if (r.position() != body.size()) throw DecodeError("checkpoint blob has trailing bytes");
  return state;
}

}  // namespace tiltline
