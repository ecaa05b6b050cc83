#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "spoc/fem.hpp"
#include "spoc/field.hpp"
#include "spoc/model.hpp"

namespace spoc {

/// Weighted particle approximation of the conditional law of the state.
///
/// Raw weights are stored as logarithms; they are products of exponential
/// factors and would under- or overflow over long intervals otherwise.
struct ParticleCloud {
  std::vector<Field> positions;
  std::vector<double> log_weights;  // log M
  std::vector<double> normalized;   // M-bar, sums to one
  std::size_t interval_start = 0;   // time index of the last branching

  std::size_t size() const noexcept { return positions.size(); }
  /// Raw weights rescaled by exp(-max log weight); proportional to M.
  std::vector<double> raw_weights() const;
  void set_raw_weights(std::span<const double> raw);
  double effective_sample_size() const;
};

/// S particles from `sampler(index)`, raw weights 1 and normalized 1/S.
ParticleCloud init_cloud(std::size_t S, const std::function<Field(std::size_t)>& sampler);
/// S draws from the model's initial law using the Initial stream of `seed`.
ParticleCloud init_cloud(std::size_t S, const ModelSpec& spec, std::uint64_t seed);

struct PropagateOptions {
  std::uint64_t seed = 0;
  std::size_t step = 0;   // time index t_k the particles leave
  unsigned threads = 1;
};

/// Moves every particle with the observation-driven dynamics under its own dW
/// substream and multiplies its raw weight by
/// exp(h(x_k, u_k) . dY_k - |h(x_k, u_k)|^2 dt / 2).
void propagate_and_weight(ParticleCloud& cloud, const Field& u, std::span<const double> dy_row,
                          const ModelSpec& spec, const FemOperators& ops, const PropagateOptions& options);

/// M-bar = M / sum M.
void normalize(ParticleCloud& cloud);

/// Offspring numbers with floor/ceil marginals around S*M-bar and sum S:
/// integer parts first, the remainder placed by systematic sampling on the
/// fractional parts with offset `u` in [0, 1).
std::vector<std::size_t> offspring_counts(std::span<const double> normalized, std::size_t S, double u);

/// Multinomial resampling counts, used only as a variance baseline in tests.
std::vector<std::size_t> multinomial_counts(std::span<const double> normalized, std::size_t S,
                                            std::uint64_t seed, std::uint64_t stream, std::uint32_t step);

/// Replaces the cloud by its offspring (children inherit the parent position,
/// in parent order) and resets the weights to 1/S.
void branch(ParticleCloud& cloud, std::span<const std::size_t> counts, std::size_t step);
/// Draws the offset from the Branching stream of (seed, step) and branches.
std::vector<std::size_t> branch(ParticleCloud& cloud, std::uint64_t seed, std::size_t step);

/// sum_s M-bar^s phi(x^s).
double posterior_expectation(const ParticleCloud& cloud, const std::function<double(const Field&)>& phi);
Field posterior_mean(const ParticleCloud& cloud);

/// Index drawn with probability M-bar (inverse-CDF on a single uniform).
std::size_t sample_index(std::span<const double> normalized, double u);

}  // namespace spoc
