#ifndef INK_LOSSES_HPP
#define INK_LOSSES_HPP

#include <cmath>

#include "ink/tensor.hpp"

namespace ink {

// Training objective: weighted Dice + Focal.
struct LossConfig {
  double gamma = 2.0;
  double dice_weight = 0.5;
  double focal_weight = 0.5;
  double smooth_eps = 1.0;

  void validate() const {
    if (gamma < 0) throw UsageError("LossConfig: gamma must be non-negative");
    if (dice_weight < 0 || dice_weight > 1 || focal_weight < 0 || focal_weight > 1)
      throw UsageError("LossConfig: weights must lie in [0,1]");
    if (std::abs(dice_weight + focal_weight - 1.0) > 1e-9)
      throw UsageError("LossConfig: dice_weight + focal_weight must equal 1");
    if (smooth_eps <= 0) throw UsageError("LossConfig: smooth_eps must be positive");
  }
};

namespace detail {

template <typename S>
void check_binary_target(const Tensor4<S>& pred, const Tensor4<S>& target,
                         const char* where) {
  require_same_shape(pred, target, where);
  if (!((target.data() == S(0)) || (target.data() == S(1))).all())
    throw UsageError(std::string(where) + ": target must be binary {0,1}");
}

}  // namespace detail

inline constexpr double kLogClamp = 1e-12;

/// Soft Dice loss: 1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps).
template <typename S>
S dice_loss(const Tensor4<S>& pred, const Tensor4<S>& target, S smooth_eps) {
  detail::check_binary_target(pred, target, "dice_loss");
  S inter = (pred.data() * target.data()).sum();
  S total = pred.data().sum() + target.data().sum();
  return S(1) - (S(2) * inter + smooth_eps) / (total + smooth_eps);
}

template <typename S>
Tensor4<S> dice_loss_backward(const Tensor4<S>& pred, const Tensor4<S>& target,
                              S smooth_eps, S upstream) {
  detail::check_binary_target(pred, target, "dice_loss_backward");
  S a = S(2) * (pred.data() * target.data()).sum() + smooth_eps;
  S b = pred.data().sum() + target.data().sum() + smooth_eps;
  Tensor4<S> g(pred.shape());
  // d/dp_i of (1 - a/b) with da/dp_i = 2*t_i and db/dp_i = 1
  g.data() = upstream * (a - S(2) * target.data() * b) / (b * b);
  return g;
}

/// Mean over pixels of -(1 - p_t)^gamma * log(p_t) with
/// p_t = pred where target is 1 and (1 - pred) where target is 0.
/// The log argument is clamped at 1e-12.
template <typename S>
S focal_loss(const Tensor4<S>& pred, const Tensor4<S>& target, S gamma) {
  detail::check_binary_target(pred, target, "focal_loss");
  if (gamma < 0) throw UsageError("focal_loss: gamma must be non-negative");
  S sum = 0;
  for (Index i = 0; i < pred.size(); ++i) {
    S pt = target.data()[i] == S(1) ? pred.data()[i] : S(1) - pred.data()[i];
    pt = std::max(pt, S(kLogClamp));
    sum += -std::pow(S(1) - pt, gamma) * std::log(pt);
  }
  return sum / S(pred.size());
}

template <typename S>
Tensor4<S> focal_loss_backward(const Tensor4<S>& pred, const Tensor4<S>& target,
                               S gamma, S upstream) {
  detail::check_binary_target(pred, target, "focal_loss_backward");
  Tensor4<S> g(pred.shape());
  const S inv_n = S(1) / S(pred.size());
  for (Index i = 0; i < pred.size(); ++i) {
    bool positive = target.data()[i] == S(1);
    S pt = positive ? pred.data()[i] : S(1) - pred.data()[i];
    if (pt <= S(kLogClamp)) {
      g.data()[i] = 0;  // clamped region, constant loss
      continue;
    }
    S one_m = S(1) - pt;
    S dloss_dpt = -std::pow(one_m, gamma) / pt;
    if (gamma > 0) dloss_dpt += gamma * std::pow(one_m, gamma - S(1)) * std::log(pt);
    g.data()[i] = upstream * inv_n * (positive ? dloss_dpt : -dloss_dpt);
  }
  return g;
}

template <typename S>
S combined_loss(const Tensor4<S>& pred, const Tensor4<S>& target,
                const LossConfig& cfg) {
  cfg.validate();
  return S(cfg.dice_weight) * dice_loss(pred, target, S(cfg.smooth_eps)) +
         S(cfg.focal_weight) * focal_loss(pred, target, S(cfg.gamma));
}

}  // namespace ink

#endif  // INK_LOSSES_HPP
