#include "spoc/filter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "spoc/errors.hpp"
#include "spoc/forward.hpp"
#include "spoc/noise.hpp"
#include "spoc/parallel.hpp"

namespace spoc {

std::vector<double> ParticleCloud::raw_weights() const {
  if (log_weights.empty()) return {};
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  std::vector<double> out(log_weights.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(log_weights[i] - top);
  return out;
}

void ParticleCloud::set_raw_weights(std::span<const double> raw) {
  if (raw.size() != positions.size()) throw ShapeError("set_raw_weights: wrong number of weights");
  log_weights.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!(raw[i] > 0.0)) throw Error("set_raw_weights: weights must be strictly positive");
    log_weights[i] = std::log(raw[i]);
  }
}

double ParticleCloud::effective_sample_size() const {
  double s = 0.0;
  for (double w : normalized) s += w * w;
  return s > 0.0 ? 1.0 / s : 0.0;
}

ParticleCloud init_cloud(std::size_t S, const std::function<Field(std::size_t)>& sampler) {
  if (S == 0) throw ConfigError("population size must be positive", "S");
  ParticleCloud cloud;
  cloud.positions.reserve(S);
  for (std::size_t s = 0; s < S; ++s) cloud.positions.push_back(sampler(s));
  cloud.log_weights.assign(S, 0.0);
  cloud.normalized.assign(S, 1.0 / static_cast<double>(S));
  return cloud;
}

ParticleCloud init_cloud(std::size_t S, const ModelSpec& spec, std::uint64_t seed) {
  return init_cloud(S, [&](std::size_t s) {
    if (spec.initial.is_deterministic()) return spec.initial.mean;
    std::vector<double> xi(spec.initial.modes.size());
    standard_normals(seed, stream_id(Stream::Initial, 1, static_cast<std::uint32_t>(s)), 0, Lane::Aux, xi);
    return spec.initial.sample(xi);
  });
}

void propagate_and_weight(ParticleCloud& cloud, const Field& u, std::span<const double> dy_row,
                          const ModelSpec& spec, const FemOperators& ops, const PropagateOptions& options) {
  const std::size_t d = spec.d();
  if (dy_row.size() != d) throw ShapeError("propagate_and_weight: dY row has wrong length");
  const double dt = ops.dt();
  const double scale = std::sqrt(dt);
  const auto step = static_cast<std::uint32_t>(options.step);

  parallel_for(cloud.size(), options.threads, [&](std::size_t s) {
    StepWorkspace ws(ops.dofs(), d);
    std::vector<double> dw(spec.n_w());
    standard_normals(options.seed, stream_id(Stream::Particle, 0, static_cast<std::uint32_t>(s)), step, Lane::W, dw);
    for (double& v : dw) v *= scale;

    const Field& x = cloud.positions[s];
    spec.h->observe(x, u, ws.h);
    double log_factor = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      ws.coeff[j] = dy_row[j] - dt * ws.h[j];
      log_factor += ws.h[j] * dy_row[j] - 0.5 * ws.h[j] * ws.h[j] * dt;
    }
    const std::vector<double> coeff = ws.coeff;
    Field next(ops.dofs());
    advance(spec, ops, x, u, dw, coeff, next, ws);
    check_finite(next, "particle", options.step + 1, s);
    cloud.positions[s] = std::move(next);
    cloud.log_weights[s] += log_factor;
  });
}

void normalize(ParticleCloud& cloud) {
  if (cloud.log_weights.empty()) throw Error("normalize: empty cloud");
  const std::vector<double> raw = cloud.raw_weights();
  const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
  if (!(total > 0.0) || !std::isfinite(total)) throw Error("normalize: weights do not sum to a positive number");
  cloud.normalized.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) cloud.normalized[i] = raw[i] / total;
}

std::vector<std::size_t> offspring_counts(std::span<const double> normalized, std::size_t S, double u) {
  if (!(u >= 0.0 && u < 1.0)) throw Error("offspring_counts: offset must lie in [0, 1)");
  const std::size_t n = normalized.size();
  const double total = std::accumulate(normalized.begin(), normalized.end(), 0.0);
  std::vector<std::size_t> counts(n);
  std::vector<double> frac(n);
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < n; ++s) {
    double a = static_cast<double>(S) * normalized[s] / total;
    // Expected counts that are integers up to round-off must not be split.
    const double nearest = std::round(a);
    if (std::abs(a - nearest) <= 1e-9 * std::max(1.0, a)) a = nearest;
    const double whole = std::floor(a);
    counts[s] = static_cast<std::size_t>(whole);
    frac[s] = a - whole;
    assigned += counts[s];
  }
  if (assigned > S) throw Error("offspring_counts: integer parts exceed the population");
  const std::size_t remainder = S - assigned;
  if (remainder == 0) return counts;

  // Systematic placement: particle s gets one extra child for each point
  // u, u+1, u+2, ... falling in (C_{s-1}, C_s]; its marginal is then exactly
  // floor/ceil with P(ceil) = frac[s].
  double cum = 0.0;
  long long prev = 0;
  std::size_t placed = 0;
  std::size_t last_positive = n;
  for (std::size_t s = 0; s < n; ++s) {
    if (frac[s] > 0.0) last_positive = s;
  }
  for (std::size_t s = 0; s < n; ++s) {
    cum += frac[s];
    const double c = s == last_positive ? static_cast<double>(remainder) : cum;
    const long long now = static_cast<long long>(std::ceil(c - u));
    const long long extra = std::max(0LL, now - prev);
    counts[s] += static_cast<std::size_t>(extra);
    placed += static_cast<std::size_t>(extra);
    prev = std::max(prev, now);
    if (s == last_positive) break;
  }
  if (placed != remainder) throw Error("offspring_counts: remainder placement lost offspring");
  return counts;
}

std::vector<std::size_t> multinomial_counts(std::span<const double> normalized, std::size_t S,
                                            std::uint64_t seed, std::uint64_t stream, std::uint32_t step) {
  PhiloxEngine engine(seed, stream, step, static_cast<std::uint32_t>(Lane::Aux));
  std::discrete_distribution<std::size_t> pick(normalized.begin(), normalized.end());
  std::vector<std::size_t> counts(normalized.size(), 0);
  for (std::size_t i = 0; i < S; ++i) ++counts[pick(engine)];
  return counts;
}

void branch(ParticleCloud& cloud, std::span<const std::size_t> counts, std::size_t step) {
  const std::size_t S = cloud.size();
  if (counts.size() != S) throw ShapeError("branch: one count per particle required");
  if (std::accumulate(counts.begin(), counts.end(), std::size_t{0}) != S) {
    throw Error("branch: offspring counts must sum to the population size");
  }
  std::vector<Field> next;
  next.reserve(S);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t c = 0; c < counts[s]; ++c) next.push_back(cloud.positions[s]);
  }
  cloud.positions = std::move(next);
  cloud.log_weights.assign(S, 0.0);
  cloud.normalized.assign(S, 1.0 / static_cast<double>(S));
  cloud.interval_start = step;
}

std::vector<std::size_t> branch(ParticleCloud& cloud, std::uint64_t seed, std::size_t step) {
  const double u = uniform01(seed, stream_id(Stream::Branching), static_cast<std::uint32_t>(step));
  auto counts = offspring_counts(cloud.normalized, cloud.size(), u);
  branch(cloud, counts, step);
  return counts;
}

double posterior_expectation(const ParticleCloud& cloud, const std::function<double(const Field&)>& phi) {
  double s = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) s += cloud.normalized[i] * phi(cloud.positions[i]);
  return s;
}

Field posterior_mean(const ParticleCloud& cloud) {
  if (cloud.positions.empty()) throw Error("posterior_mean: empty cloud");
  Field mean(cloud.positions.front().size());
  for (std::size_t i = 0; i < cloud.size(); ++i) mean.axpy(cloud.normalized[i], cloud.positions[i]);
  return mean;
}

std::size_t sample_index(std::span<const double> normalized, double u) {
  if (normalized.empty()) throw Error("sample_index: no weights");
  const double total = std::accumulate(normalized.begin(), normalized.end(), 0.0);
  const double target = u * total;
  double cum = 0.0;
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    cum += normalized[i];
    if (target < cum) return i;
  }
  return normalized.size() - 1;
}

}  // namespace spoc
