#pragma once

// Iterative latent trajectory planning.
//
// Two diagonal Gaussians are refined jointly: f_vid over generator latents
// and f_val over value-evaluator latents. Each iteration samples M video
// latents, decodes them, samples N value latents per decode, scores every
// pair by SNR = mean/(std + eps) of its value vector, scores each video by
// the max SNR over its N pairs, refits f_vid from the top-K1 videos and
// f_val from the top-K2 pairs pooled over all M*N, then applies
// multiplicative std decay, exponential smoothing against the previous
// distribution and a std floor. A final draw from the refined
// distributions is decoded into the returned action chunk.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "wav/core/error.hpp"
#include "wav/core/gaussian.hpp"
#include "wav/core/parallel.hpp"
#include "wav/core/rng.hpp"
#include "wav/valuation/value.hpp"

namespace wav {

template <class G>
concept LatentGenerator = requires(const G& g, const Vector& z, const typename G::output_type& out, int n) {
  { g.latent_dim() } -> std::convertible_to<Eigen::Index>;
  { g.decode(z) } -> std::convertible_to<typename G::output_type>;
  { g.action_chunk(out, n) } -> std::convertible_to<Matrix>;
};

template <class E, class Output>
concept ValueEvaluatorFor = requires(const E& e, const Output& out, const typename E::features_type& f,
                                     const Vector& z) {
  { e.latent_dim() } -> std::convertible_to<Eigen::Index>;
  { e.features(out) } -> std::convertible_to<typename E::features_type>;
  { e.evaluate(f, z) } -> std::convertible_to<ValueSample>;
};

enum class FinalDraw { kBestFallback, kSample };

struct PlannerConfig {
  int K = 3;
  int M = 16;
  int N = 8;
  int K1 = 4;
  int K2 = 16;
  double alpha = 0.8;
  double beta = 0.8;
  double eps = 1e-6;
  double sigma_min = 1e-3;
  double sigma_decay = 0.95;
  int chunk_len = 6;
  int d_vid = 8;
  int d_val = 8;
  FinalDraw final_draw = FinalDraw::kBestFallback;
  bool warm_start = false;
  int workers = 1;

  void validate() const {
    require(K >= 0, "planner.K must be >= 0");
    require(M >= 1, "planner.M must be >= 1");
    require(N >= 1, "planner.N must be >= 1");
    require(K1 >= 1 && K1 <= M, "planner.K1 must satisfy 1 <= K1 <= planner.M");
    require(K2 >= 1 && static_cast<long long>(K2) <= static_cast<long long>(M) * N,
            "planner.K2 must satisfy 1 <= K2 <= planner.M * planner.N");
    require(alpha >= 0.0 && alpha <= 1.0, "planner.alpha must lie in [0,1]");
    require(beta >= 0.0 && beta <= 1.0, "planner.beta must lie in [0,1]");
    require(eps >= 0.0, "planner.eps must be >= 0");
    require(sigma_min > 0.0, "planner.sigma_min must be > 0");
    require(sigma_decay > 0.0 && sigma_decay <= 1.0, "planner.sigma_decay must lie in (0,1]");
    require(chunk_len >= 1, "planner.chunk_len must be >= 1");
    require(d_vid >= 1 && d_val >= 1, "planner.d_vid and planner.d_val must be >= 1");
    require(workers >= 1, "planner.workers must be >= 1");
  }
};

struct PlannerState {
  DiagonalGaussian f_vid;
  DiagonalGaussian f_val;
  int k = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  std::optional<std::pair<Vector, Vector>> best_latents;  // (z_vid, z_val)

  static PlannerState initial(const PlannerConfig& cfg) {
    return {DiagonalGaussian::standard(cfg.d_vid), DiagonalGaussian::standard(cfg.d_val)};
  }
};

struct ElitePair {
  int video = 0;
  int value = 0;
  friend bool operator==(const ElitePair&, const ElitePair&) = default;
};

struct IterationRecord {
  int k = 0;
  double mean_elite_phi = 0.0;
  double best_phi = 0.0;  // running best after this iteration
  double mean_sigma_vid = 0.0;
  double mean_sigma_val = 0.0;
  double wall_ms = 0.0;
  std::vector<Vector> z_vid;              // M sampled video latents
  std::vector<std::vector<Vector>> z_val; // M x N sampled value latents
  std::vector<double> phi;                // M video scores
  std::vector<std::vector<double>> snr;   // M x N pair scores
  std::vector<int> elite_vid;
  std::vector<ElitePair> elite_val;
  DiagonalGaussian f_vid;  // distributions after the update
  DiagonalGaussian f_val;
  int excluded = 0;        // non-finite pair scores left out of selection
};

template <class Output>
struct PlanResult {
  Matrix action_chunk;
  Output chosen;
  Vector z_vid;
  Vector z_val;
  double chosen_score = 0.0;
  bool used_best_fallback = false;
  std::vector<IterationRecord> history;
  PlannerState final_state;
  double iterate_ms = 0.0;
  double final_ms = 0.0;
  double total_ms = 0.0;
};

/// Indices of the K largest scores, largest first; ties go to the lower index.
inline std::vector<int> select_elites(std::span<const double> scores, int K) {
  require(K >= 1, "select_elites: K must be positive");
  require(static_cast<std::size_t>(K) <= scores.size(), "select_elites: K exceeds the number of scores");
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  idx.resize(static_cast<std::size_t>(K));
  return idx;
}

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

inline DiagonalGaussian update_distribution(const std::vector<Vector>& elites, const DiagonalGaussian& previous,
                                            double weight_mean, double weight_std, const PlannerConfig& cfg) {
  DiagonalGaussian fitted = gaussian_fit(elites);
  if (cfg.sigma_decay != 1.0) fitted.std *= cfg.sigma_decay;
  return floor_std(gaussian_blend(fitted, previous, weight_mean, weight_std), cfg.sigma_min);
}

}  // namespace detail

template <LatentGenerator G, ValueEvaluatorFor<typename G::output_type> E>
void check_dimensions(const G& generator, const E& evaluator, const PlannerConfig& cfg) {
  require(generator.latent_dim() == cfg.d_vid,
          "planner: generator latent dimension " + std::to_string(generator.latent_dim()) +
              " != planner.d_vid " + std::to_string(cfg.d_vid));
  require(evaluator.latent_dim() <= cfg.d_val,
          "planner: value latent dimension planner.d_val " + std::to_string(cfg.d_val) +
              " is shorter than the evaluator needs (" + std::to_string(evaluator.latent_dim()) + ")");
}

/// One refinement step. Stream labels: "iter=k/vid=m" for video latents and
/// "iter=k/vid=m/val=n" for value latents, k counted from 1.
template <LatentGenerator G, ValueEvaluatorFor<typename G::output_type> E>
std::pair<PlannerState, IterationRecord> iterate(const PlannerState& state, const G& generator, const E& evaluator,
                                                 const PlannerConfig& cfg, const SeededStream& stream) {
  const auto started = std::chrono::steady_clock::now();
  const int k = state.k + 1;
  const auto M = static_cast<std::size_t>(cfg.M);
  const auto N = static_cast<std::size_t>(cfg.N);
  const SeededStream iter_stream = stream.derive(indexed("iter", k));

  IterationRecord rec;
  rec.k = k;
  rec.z_vid.resize(M);
  rec.z_val.assign(M, std::vector<Vector>(N));
  rec.snr.assign(M, std::vector<double>(N));
  rec.phi.assign(M, -std::numeric_limits<double>::infinity());

  parallel_for(M, static_cast<std::size_t>(cfg.workers), [&](std::size_t m) {
    const SeededStream vid_stream = iter_stream.derive(indexed("vid", static_cast<long long>(m)));
    rec.z_vid[m] = gaussian_sample_one(state.f_vid, vid_stream);
    const auto decoded = generator.decode(rec.z_vid[m]);
    const auto features = evaluator.features(decoded);
    for (std::size_t n = 0; n < N; ++n) {
      rec.z_val[m][n] = gaussian_sample_one(state.f_val, vid_stream.derive(indexed("val", static_cast<long long>(n))));
      rec.snr[m][n] = snr(evaluator.evaluate(features, rec.z_val[m][n]), cfg.eps);
    }
  });

  // Scores: phi(m) = max_n SNR(m,n) over finite entries.
  std::vector<int> finite_videos;
  std::vector<ElitePair> finite_pairs;
  std::vector<double> pair_scores;
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t n = 0; n < N; ++n) {
      const double s = rec.snr[m][n];
      if (!std::isfinite(s)) {
        ++rec.excluded;
        continue;
      }
      finite_pairs.push_back({static_cast<int>(m), static_cast<int>(n)});
      pair_scores.push_back(s);
      rec.phi[m] = std::max(rec.phi[m], s);
    }
    if (std::isfinite(rec.phi[m])) finite_videos.push_back(static_cast<int>(m));
  }
  if (finite_pairs.empty()) {
    throw NumericError("planner: every value score in iteration " + std::to_string(k) +
                       " is non-finite (first offending sample: video 0, value 0)");
  }
  if (rec.excluded > 0) {
    std::cerr << "warning: planner iteration " << k << " excluded " << rec.excluded
              << " non-finite value score(s) from elite selection\n";
  }

  std::vector<double> video_scores;
  video_scores.reserve(finite_videos.size());
  for (int m : finite_videos) video_scores.push_back(rec.phi[static_cast<std::size_t>(m)]);
  const int k1 = std::min<int>(cfg.K1, static_cast<int>(finite_videos.size()));
  const int k2 = std::min<int>(cfg.K2, static_cast<int>(finite_pairs.size()));
  for (int i : select_elites(video_scores, k1)) rec.elite_vid.push_back(finite_videos[static_cast<std::size_t>(i)]);
  for (int i : select_elites(pair_scores, k2)) rec.elite_val.push_back(finite_pairs[static_cast<std::size_t>(i)]);

  // Refit in sample order.
  std::vector<int> vid_order = rec.elite_vid;
  std::sort(vid_order.begin(), vid_order.end());
  std::vector<Vector> vid_elites;
  double phi_sum = 0.0;
  for (int m : vid_order) {
    vid_elites.push_back(rec.z_vid[static_cast<std::size_t>(m)]);
    phi_sum += rec.phi[static_cast<std::size_t>(m)];
  }
  std::vector<ElitePair> val_order = rec.elite_val;
  std::sort(val_order.begin(), val_order.end(),
            [](const ElitePair& a, const ElitePair& b) { return std::tie(a.video, a.value) < std::tie(b.video, b.value); });
  std::vector<Vector> val_elites;
  for (const auto& p : val_order) {
    val_elites.push_back(rec.z_val[static_cast<std::size_t>(p.video)][static_cast<std::size_t>(p.value)]);
  }

  PlannerState next = state;
  next.k = k;
  next.f_vid = detail::update_distribution(vid_elites, state.f_vid, cfg.alpha, cfg.beta, cfg);
  next.f_val = detail::update_distribution(val_elites, state.f_val, cfg.alpha, cfg.beta, cfg);

  // Running best: the top video of this iteration with its best value latent.
  const int top = rec.elite_vid.front();
  const auto& row = rec.snr[static_cast<std::size_t>(top)];
  if (rec.phi[static_cast<std::size_t>(top)] > next.best_score) {
    std::size_t best_n = 0;
    for (std::size_t n = 1; n < N; ++n) {
      if (std::isfinite(row[n]) && (!std::isfinite(row[best_n]) || row[n] > row[best_n])) best_n = n;
    }
    next.best_score = rec.phi[static_cast<std::size_t>(top)];
    next.best_latents = std::make_pair(rec.z_vid[static_cast<std::size_t>(top)],
                                       rec.z_val[static_cast<std::size_t>(top)][best_n]);
  }

  rec.mean_elite_phi = phi_sum / static_cast<double>(rec.elite_vid.size());
  rec.best_phi = next.best_score;
  rec.mean_sigma_vid = next.f_vid.std.mean();
  rec.mean_sigma_val = next.f_val.std.mean();
  rec.f_vid = next.f_vid;
  rec.f_val = next.f_val;
  rec.wall_ms = detail::elapsed_ms(started);
  return {std::move(next), std::move(rec)};
}

/// Draws (z_vid*, z_val*) from the refined distributions (stream labels
/// "final/vid", "final/val"), decodes and scores them. Under
/// FinalDraw::kBestFallback a draw scoring below the running best is
/// replaced by the best latents seen during refinement.
template <LatentGenerator G, ValueEvaluatorFor<typename G::output_type> E>
PlanResult<typename G::output_type> final_decode(const PlannerState& state, const G& generator, const E& evaluator,
                                                 const PlannerConfig& cfg, const SeededStream& stream) {
  const SeededStream final_stream = stream.derive("final");
  PlanResult<typename G::output_type> result{};
  result.z_vid = gaussian_sample_one(state.f_vid, final_stream.derive("vid"));
  result.z_val = gaussian_sample_one(state.f_val, final_stream.derive("val"));
  auto decoded = generator.decode(result.z_vid);
  double score = snr(evaluator.evaluate(evaluator.features(decoded), result.z_val), cfg.eps);

  const bool draw_is_worse = !std::isfinite(score) || score < state.best_score;
  if (cfg.final_draw == FinalDraw::kBestFallback && state.best_latents && draw_is_worse) {
    result.z_vid = state.best_latents->first;
    result.z_val = state.best_latents->second;
    decoded = generator.decode(result.z_vid);
    score = state.best_score;
    result.used_best_fallback = true;
  }
  if (!std::isfinite(score)) {
    throw NumericError("planner: final draw produced a non-finite score (sample 0 of stream " +
                       final_stream.path_string() + ")");
  }
  result.chosen_score = score;
  result.action_chunk = generator.action_chunk(decoded, cfg.chunk_len);
  result.chosen = std::move(decoded);
  result.final_state = state;
  return result;
}

/// K refinement iterations followed by the final decode. `initial` seeds
/// the distributions (warm start); the default is standard Gaussians.
template <LatentGenerator G, ValueEvaluatorFor<typename G::output_type> E>
PlanResult<typename G::output_type> plan(const G& generator, const E& evaluator, const PlannerConfig& cfg,
                                         const SeededStream& stream,
                                         const std::optional<PlannerState>& initial = std::nullopt) {
  cfg.validate();
  check_dimensions(generator, evaluator, cfg);
  const auto started = std::chrono::steady_clock::now();
  PlannerState state = PlannerState::initial(cfg);
  if (initial) {
    require(initial->f_vid.dim() == cfg.d_vid && initial->f_val.dim() == cfg.d_val,
            "plan: warm-start distributions do not match planner dimensions");
    state.f_vid = floor_std(initial->f_vid, cfg.sigma_min);
    state.f_val = floor_std(initial->f_val, cfg.sigma_min);
  }
  std::vector<IterationRecord> history;
  history.reserve(static_cast<std::size_t>(cfg.K));
  for (int i = 0; i < cfg.K; ++i) {
    auto [next, rec] = iterate(state, generator, evaluator, cfg, stream);
    state = std::move(next);
    history.push_back(std::move(rec));
  }
  const double iterate_ms = detail::elapsed_ms(started);
  const auto final_started = std::chrono::steady_clock::now();
  auto result = final_decode(state, generator, evaluator, cfg, stream);
  result.final_ms = detail::elapsed_ms(final_started);
  result.iterate_ms = iterate_ms;
  result.history = std::move(history);
  result.total_ms = detail::elapsed_ms(started);
  return result;
}

}  // namespace wav
