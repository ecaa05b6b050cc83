#include "spoc/noise.hpp"

#include <cmath>
#include <random>

#include "spoc/errors.hpp"

namespace spoc {
namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
constexpr std::uint32_t kLaneShift = 28;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

Philox4x32::Counter Philox4x32::block(Counter ctr, Key key) noexcept {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

PhiloxEngine::PhiloxEngine(std::uint64_t seed, std::uint64_t stream, std::uint32_t step,
                           std::uint32_t lane) noexcept
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      ctr_{lane << kLaneShift, step, static_cast<std::uint32_t>(stream),
           static_cast<std::uint32_t>(stream >> 32)} {}

PhiloxEngine::result_type PhiloxEngine::operator()() noexcept {
  if (used_ == 4) {
    buffer_ = Philox4x32::block(ctr_, key_);
    ++ctr_[0];
    used_ = 0;
  }
  return buffer_[used_++];
}

std::uint64_t stream_id(Stream purpose, std::uint32_t major, std::uint32_t minor) {
  if (major >= (1u << 24)) throw Error("stream_id: major index exceeds 24 bits");
  return (static_cast<std::uint64_t>(purpose) << 56) | (static_cast<std::uint64_t>(major) << 32) | minor;
}

void standard_normals(std::uint64_t seed, std::uint64_t stream, std::uint32_t step, Lane lane,
                      std::span<double> out) {
  PhiloxEngine engine(seed, stream, step, static_cast<std::uint32_t>(lane));
  std::normal_distribution<double> normal;
  for (double& v : out) v = normal(engine);
}

double uniform01(std::uint64_t seed, std::uint64_t stream, std::uint32_t step) {
  PhiloxEngine engine(seed, stream, step, static_cast<std::uint32_t>(Lane::Aux));
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(engine);
  // generate_canonical may round up to exactly 1; callers rely on [0, 1).
  return u < 1.0 ? u : std::nextafter(1.0, 0.0);
}

NoisePath sample_path(std::uint64_t seed, std::uint64_t stream, std::size_t n_steps, std::size_t n_w,
                      std::size_t d, double dt, std::size_t first_step) {
  if (n_steps == 0 || n_w == 0 || d == 0) throw ConfigError("noise path needs positive dimensions");
  if (!(dt > 0.0)) throw ConfigError("time step must be positive", "dt");
  NoisePath path;
  path.n_steps = n_steps;
  path.n_w = n_w;
  path.d = d;
  path.dt = dt;
  path.seed = seed;
  path.dw.resize(n_steps * n_w);
  path.db.resize(n_steps * d);
  const double scale = std::sqrt(dt);
  for (std::size_t k = 0; k < n_steps; ++k) {
    const auto step = static_cast<std::uint32_t>(first_step + k);
    std::span<double> w(path.dw.data() + k * n_w, n_w);
    std::span<double> b(path.db.data() + k * d, d);
    standard_normals(seed, stream, step, Lane::W, w);
    standard_normals(seed, stream, step, Lane::B, b);
    for (double& v : w) v *= scale;
    for (double& v : b) v *= scale;
  }
  return path;
}

void add_cylindrical(const ModelSpec& spec, std::span<const double> x, std::span<const double> dw_row,
                     std::span<double> out, std::span<double> scratch) {
  if (dw_row.size() != spec.n_w()) throw ShapeError("apply_cylindrical: dW row has wrong length");
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < spec.n_w(); ++i) {
    const NoiseChannel& ch = spec.sigma[i];
    const double* __restrict e = ch.direction.data();
    double* __restrict o = out.data();
    if (ch.amplitude.constant) {
      const double c = *ch.amplitude.constant * dw_row[i];
      if (c == 0.0) continue;
      for (std::size_t r = 0; r < n; ++r) o[r] += c * e[r];
    } else {
      ch.amplitude.eval(x, {}, scratch);
      const double w = dw_row[i];
      const double* __restrict a = scratch.data();
      for (std::size_t r = 0; r < n; ++r) o[r] += a[r] * e[r] * w;
    }
  }
}

Field apply_cylindrical(const ModelSpec& spec, const Field& x, std::span<const double> dw_row,
                        const FemOperators& ops) {
  if (x.size() != ops.dofs()) throw ShapeError("apply_cylindrical: field does not match mesh");
  Field out(x.size());
  std::vector<double> scratch(x.size());
  add_cylindrical(spec, x.values(), dw_row, out.values(), scratch);
  return out;
}

}  // namespace spoc
