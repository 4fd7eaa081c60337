// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "nasc/autodiff.hpp"

namespace nasc {

/// SGD with heavy-ball momentum and L2 weight decay folded into the gradient:
///   v ← μ·v + (g + λ·p),  p ← p − η·v
/// Parameters that received no gradient since the last zero_grad are left
/// untouched, velocity included.
class MomentumSgd {
 public:
  MomentumSgd(std::vector<ad::NodeRef> params, double momentum, double weight_decay);
  void step(double lr);
  void zero_grad();
  const std::vector<ad::NodeRef>& params() const { return params_; }

 private:
  std::vector<ad::NodeRef> params_;
  std::vector<ad::Tensor> velocity_;
  double momentum_;
  double weight_decay_;
};

/// Adam (β1 0.9, β2 0.999) with weight decay applied directly to the
/// parameters, outside the normalized step. Parameters without a gradient
/// are skipped.
class Adam {
 public:
  Adam(std::vector<ad::NodeRef> params, double lr, double weight_decay, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);
  void step();
  void zero_grad();
  std::size_t steps() const { return t_; }

 private:
  std::vector<ad::NodeRef> params_;
  std::vector<ad::Tensor> m_;
  std::vector<ad::Tensor> v_;
  double lr_, weight_decay_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

/// Rescales the gradients of `params` so their joint L2 norm is at most
/// `max_norm`; returns the norm before rescaling. max_norm <= 0 disables.
double clip_grad_norm(const std::vector<ad::NodeRef>& params, double max_norm);

/// η(t) = η_min + ½(η0 − η_min)(1 + cos(π t / T)), clamped to t ∈ [0, T].
double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps, double min_lr = 0.0);

/// Linear ramp from `start_lr` to `base_lr` over the warm-up steps, cosine
/// decay to zero afterwards.
double warmup_cosine_lr(double start_lr, double base_lr, std::size_t step, std::size_t warmup_steps,
                        std::size_t total_steps);

}  // namespace nasc
