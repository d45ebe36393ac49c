#pragma once

#include "mfos/engine.hpp"

namespace mfos::loss {

struct LossConfig {
  double background_error = 1.0;  // constant regression error E for off-shape pixels
  double conf_clamp = 5.0;        // raw confidence clamp bound

  void validate() const {
    if (!(background_error > 0)) fail(ErrorKind::InvalidArgument, "background_error must be > 0");
    if (!(conf_clamp > 0)) fail(ErrorKind::InvalidArgument, "conf_clamp must be > 0");
  }
};

// Per-pixel confidence from the raw head channel: tau = exp(clamp(raw)).
inline double conf_activation(double raw, double conf_clamp = 5.0) {
  return std::exp(std::clamp(raw, -conf_clamp, conf_clamp));
}

// Per-pixel regression map [V,H,W]: Euclidean coordinate error where the
// target mask is set, the constant E elsewhere. target/mask are non-grad
// constants.
template <typename T>
engine::Tensor<T> regr_loss(const engine::Tensor<T>& pred_coords,
                            const engine::Tensor<T>& target_coords,
                            const engine::Tensor<T>& target_mask, const LossConfig& cfg) {
  cfg.validate();
  engine::require_shape(pred_coords.shape() == target_coords.shape(),
                        "regr_loss: pred/target shape mismatch");
  engine::require_shape(pred_coords.numel() == target_mask.numel() * 3,
                        "regr_loss: mask shape mismatch");
  engine::Tensor<T> err = engine::euclid_norm_lastdim(engine::sub(pred_coords, target_coords));
  engine::Tensor<T> masked = engine::mul(err, target_mask);
  // E * (1 - mask); mask is constant so this carries no gradient
  engine::Tensor<T> bg =
      engine::add_scalar(engine::scale(target_mask, T(-cfg.background_error)), T(cfg.background_error));
  return engine::add(masked, bg);
}

// Mean over pixels and views of tau_i * L_i - log tau_i with
// tau = exp(clamp(raw)), so log tau is the clamped raw value.
template <typename T>
engine::Tensor<T> final_loss(const engine::Tensor<T>& pred_coords,
                             const engine::Tensor<T>& conf_raw,
                             const engine::Tensor<T>& target_coords,
                             const engine::Tensor<T>& target_mask, const LossConfig& cfg) {
  engine::Tensor<T> l = regr_loss(pred_coords, target_coords, target_mask, cfg);
  engine::require_shape(conf_raw.shape() == l.shape(), "final_loss: confidence shape mismatch");
  engine::Tensor<T> log_tau = engine::clamp_t(conf_raw, T(-cfg.conf_clamp), T(cfg.conf_clamp));
  engine::Tensor<T> tau = engine::exp_t(log_tau);
  return engine::mean_all(engine::sub(engine::mul(tau, l), log_tau));
}

}  // namespace mfos::loss
