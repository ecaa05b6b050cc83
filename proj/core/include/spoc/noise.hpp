#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "spoc/fem.hpp"
#include "spoc/field.hpp"
#include "spoc/model.hpp"

namespace spoc {

/// Philox4x32-10 counter-based block cipher (Salmon et al., SC'11).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key) noexcept;
};

/// Uniform random bit generator over one Philox stream. Every (seed, stream,
/// step, lane) tuple names an independent, effectively infinite sequence, so
/// any worker can regenerate any block without shared state.
class PhiloxEngine {
 public:
  using result_type = std::uint32_t;

  PhiloxEngine(std::uint64_t seed, std::uint64_t stream, std::uint32_t step, std::uint32_t lane = 0) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }
  result_type operator()() noexcept;

 private:
  Philox4x32::Key key_;
  Philox4x32::Counter ctr_;
  Philox4x32::Counter buffer_{};
  unsigned used_ = 4;
};

/// What a random stream is used for; the purpose occupies the top byte of the
/// stream id so streams of different purposes never collide.
enum class Stream : std::uint8_t {
  Truth = 1,
  Particle = 2,
  Rollout = 3,
  Selection = 4,
  Branching = 5,
  CostEstimate = 6,
  Initial = 7,
  Test = 8,
};

/// purpose (8 bits) | major (24 bits) | minor (32 bits)
std::uint64_t stream_id(Stream purpose, std::uint32_t major = 0, std::uint32_t minor = 0);

/// Lane within a step: the W and B rows of one step come from separate lanes
/// so that changing N_W never changes the B increments and vice versa.
enum class Lane : std::uint32_t { W = 0, B = 1, Y = 2, Aux = 3 };

/// Standard normals for (seed, stream, step, lane). Prefix-stable: the first k
/// values do not depend on how many are requested.
void standard_normals(std::uint64_t seed, std::uint64_t stream, std::uint32_t step, Lane lane,
                      std::span<double> out);
/// A single U(0,1) draw for (seed, stream, step).
double uniform01(std::uint64_t seed, std::uint64_t stream, std::uint32_t step);

/// Brownian increments of the truncated cylindrical process W and of B, row k
/// holding the increments over [t_k, t_k+1).
struct NoisePath {
  std::size_t n_steps = 0;
  std::size_t n_w = 0;
  std::size_t d = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> dw;  // n_steps x n_w, row-major
  std::vector<double> db;  // n_steps x d, row-major

  std::span<const double> dw_row(std::size_t k) const { return {dw.data() + k * n_w, n_w}; }
  std::span<const double> db_row(std::size_t k) const { return {db.data() + k * d, d}; }
  std::span<double> db_row(std::size_t k) { return {db.data() + k * d, d}; }
};

/// Fills rows [first_step, first_step + n_steps) of a path; row r uses time
/// index first_step + r so a sub-path matches the tail of a longer path.
NoisePath sample_path(std::uint64_t seed, std::uint64_t stream, std::size_t n_steps, std::size_t n_w,
                      std::size_t d, double dt, std::size_t first_step = 0);

/// sum_i sigma^i(x) e_i dW^i as a nodal field.
Field apply_cylindrical(const ModelSpec& spec, const Field& x, std::span<const double> dw_row,
                        const FemOperators& ops);
/// Accumulating form used by the steppers: out += sum_i sigma^i(x) e_i dW^i.
void add_cylindrical(const ModelSpec& spec, std::span<const double> x, std::span<const double> dw_row,
                     std::span<double> out, std::span<double> scratch);

}  // namespace spoc
