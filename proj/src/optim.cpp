// SPDX-License-Identifier: Apache-2.0
#include "nasc/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nasc {

MomentumSgd::MomentumSgd(std::vector<ad::NodeRef> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.push_back(ad::Tensor::zeros_like(p->value()));
}

void MomentumSgd::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i]->has_grad()) continue;
    ad::Tensor& w = params_[i]->mutable_value();
    const ad::Tensor& g = params_[i]->grad();
    ad::Tensor& v = velocity_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = momentum_ * v[j] + (g[j] + weight_decay_ * w[j]);
      w[j] -= lr * v[j];
    }
  }
}

void MomentumSgd::zero_grad() {
  for (const auto& p : params_) p->zero_grad();
}

Adam::Adam(std::vector<ad::NodeRef> params, double lr, double weight_decay, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.push_back(ad::Tensor::zeros_like(p->value()));
    v_.push_back(ad::Tensor::zeros_like(p->value()));
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i]->has_grad()) continue;
    ad::Tensor& w = params_[i]->mutable_value();
    const ad::Tensor& g = params_[i]->grad();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j];
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * gj;
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * gj * gj;
      w[j] -= lr_ * ((m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + eps_) + weight_decay_ * w[j]);
    }
  }
}

void Adam::zero_grad() {
  for (const auto& p : params_) p->zero_grad();
}

double clip_grad_norm(const std::vector<ad::NodeRef>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p->has_grad()) continue;
    for (double g : p->grad().data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& p : params) p->scale_grad(factor);
  }
  return norm;
}

double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps, double min_lr) {
  if (total_steps == 0) return base_lr;
  const double t = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
  return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * t));
}

double warmup_cosine_lr(double start_lr, double base_lr, std::size_t step, std::size_t warmup_steps,
                        std::size_t total_steps) {
  if (step < warmup_steps) {
    return start_lr + (base_lr - start_lr) * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  return cosine_lr(base_lr, step - warmup_steps, total_steps > warmup_steps ? total_steps - warmup_steps : 0);
}

}  // namespace nasc
