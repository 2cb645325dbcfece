#pragma once

// Dense per-step reward with nine terms:
//   c1 image MSE reward    exp(-0.01 * MSE(I_t, I_T))
//   c2 image SSIM reward   exp(SSIM(I_t, I_T) - 1)
//   c3, c4                 the same two terms for the second ("top") view
//   c5 state proximity     exp(-||s_t - s_T||)
//   c6 state velocity      sum_j |s_t - s_{t-1}|
//   c7 state acceleration  sum_j |s_t - 2 s_{t-1} + s_{t-2}|
//   c8 action velocity     sum_j |a_t - a_{t-1}|
//   c9 action acceleration sum_j |a_t - 2 a_{t-1} + a_{t-2}|
//
// A single rendered view serves both views, so c3 == c1 and c4 == c2.
// The positive terms keep their two-arm multiplicity (c1, c2, c5 count
// twice; c3, c4 once) so that eight 1/16-weighted components sum to 0.5 at
// a perfect goal match. Penalty terms are counted once.

#include <array>
#include <cmath>

#include <Eigen/Core>

#include "wav/core/error.hpp"
#include "wav/valuation/ssim.hpp"
#include "wav/worldgen/trajectory.hpp"

namespace wav {

struct RewardWeights {
  double w_img_mse = 1.0 / 16.0;
  double w_img_ssim = 1.0 / 16.0;
  double w_state_prox = 1.0 / 16.0;
  double w_vel = -1.0 / 16.0;
  double w_acc = -1.0 / 16.0;
  double w_act_vel = -0.1 / 16.0;
  double w_act_acc = -0.1 / 16.0;
  // Shaping outside the nine-term table: a constant per-step time penalty
  // and a penalty per step spent inside an obstacle.
  double w_time = -0.41;
  double w_collision = -1.0;

  friend bool operator==(const RewardWeights&, const RewardWeights&) = default;
};

inline constexpr std::array<int, 9> kRewardMultiplicity = {2, 2, 1, 1, 2, 1, 1, 1, 1};

struct RewardBreakdown {
  std::array<double, 9> terms{};     // c1..c9
  std::array<double, 9> weighted{};  // multiplicity * weight * c_i
  double total = 0.0;
};

inline std::array<double, 9> effective_weights(const RewardWeights& w) {
  const std::array<double, 9> base = {w.w_img_mse, w.w_img_ssim, w.w_img_mse,   w.w_img_ssim, w.w_state_prox,
                                      w.w_vel,     w.w_acc,      w.w_act_vel,  w.w_act_acc};
  std::array<double, 9> out{};
  for (std::size_t i = 0; i < 9; ++i) out[i] = kRewardMultiplicity[i] * base[i];
  return out;
}

struct RewardInputs {
  const Frame& frame_t;
  const Frame& frame_goal;
  const Vector& s_t;
  const Vector& s_goal;
  const Vector& s_prev;
  const Vector& s_prev2;
  const Vector& a_t;
  const Vector& a_prev;
  const Vector& a_prev2;
};

inline RewardBreakdown dense_reward(const RewardInputs& in, const RewardWeights& weights) {
  const auto n_s = in.s_t.size();
  const auto n_a = in.a_t.size();
  require(in.s_goal.size() == n_s && in.s_prev.size() == n_s && in.s_prev2.size() == n_s,
          "dense_reward: state dimension mismatch");
  require(in.a_prev.size() == n_a && in.a_prev2.size() == n_a, "dense_reward: action dimension mismatch");

  RewardBreakdown r;
  const double image_mse = mse(in.frame_t, in.frame_goal);
  const double image_ssim = ssim(in.frame_t, in.frame_goal);
  r.terms[0] = std::exp(-0.01 * image_mse);
  r.terms[1] = std::exp(image_ssim - 1.0);
  r.terms[2] = r.terms[0];
  r.terms[3] = r.terms[1];
  r.terms[4] = std::exp(-(in.s_t - in.s_goal).norm());
  r.terms[5] = (in.s_t - in.s_prev).cwiseAbs().sum();
  r.terms[6] = (in.s_t - 2.0 * in.s_prev + in.s_prev2).cwiseAbs().sum();
  r.terms[7] = (in.a_t - in.a_prev).cwiseAbs().sum();
  r.terms[8] = (in.a_t - 2.0 * in.a_prev + in.a_prev2).cwiseAbs().sum();

  const auto w = effective_weights(weights);
  for (std::size_t i = 0; i < 9; ++i) {
    r.weighted[i] = w[i] * r.terms[i];
    r.total += r.weighted[i];
  }
  return r;
}

}  // namespace wav
