#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "wakeforge/autodiff.hpp"

namespace wakeforge {

// Linear warmup to max_lr, then cosine annealing down to floor_lr.
struct LrSchedule {
  double max_lr = 4e-4;
  long warmup_steps = 0;
  long total_steps = 1;
  double floor_lr = 0.0;

  void validate() const {
    if (warmup_steps < 0 || total_steps <= 0)
      throw std::invalid_argument("LrSchedule: negative step counts");
    if (warmup_steps >= total_steps)
      throw std::invalid_argument("LrSchedule: warmup_steps must be below total_steps");
  }
};

inline double lr_at(long step, const LrSchedule& s) {
  s.validate();
  if (step <= s.warmup_steps)
    return s.warmup_steps == 0 ? s.max_lr
                               : s.max_lr * static_cast<double>(step) /
                                     static_cast<double>(s.warmup_steps);
  if (step > s.total_steps) return s.floor_lr;
  const double t = static_cast<double>(step - s.warmup_steps) /
                   static_cast<double>(s.total_steps - s.warmup_steps);
  return s.floor_lr + 0.5 * (s.max_lr - s.floor_lr) * (1.0 + std::cos(M_PI * t));
}

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

/// AdamW over a fixed set of parameter tensors. Moments live per parameter;
/// step() consumes the gradients currently accumulated on the parameters.
template <class Scalar>
class AdamW {
 public:
  AdamW(std::vector<ad::Tensor<Scalar>> params, AdamWOptions opts = {})
      : params_(std::move(params)), opts_(opts) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      m_.push_back(ad::Mat<Scalar>::Zero(p.rows(), p.cols()));
      v_.push_back(ad::Mat<Scalar>::Zero(p.rows(), p.cols()));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step(double lr) {
    ++step_count_;
    const Scalar b1 = Scalar(opts_.beta1);
    const Scalar b2 = Scalar(opts_.beta2);
    const Scalar corr1 = Scalar(1) - std::pow(b1, Scalar(step_count_));
    const Scalar corr2 = Scalar(1) - std::pow(b2, Scalar(step_count_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (!params_[i].has_grad()) continue;
      const ad::Mat<Scalar>& g = params_[i].grad();
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
      v_[i] = (b2 * v_[i].array() + (Scalar(1) - b2) * g.array().square()).matrix();
      auto m_hat = m_[i].array() / corr1;
      auto v_hat = v_[i].array() / corr2;
      params_[i].value_mut().array() -=
          Scalar(lr) * (m_hat / (v_hat.sqrt() + Scalar(opts_.eps)) +
                        Scalar(opts_.weight_decay) * params_[i].value_mut().array());
    }
  }

  long step_count() const { return step_count_; }
  const std::vector<ad::Mat<Scalar>>& first_moments() const { return m_; }
  const std::vector<ad::Mat<Scalar>>& second_moments() const { return v_; }
  const AdamWOptions& options() const { return opts_; }

  /// Restore serialized moments and step count (shapes must match).
  void set_state(std::vector<ad::Mat<Scalar>> m, std::vector<ad::Mat<Scalar>> v, long step) {
    if (m.size() != params_.size() || v.size() != params_.size())
      throw std::invalid_argument("AdamW: state has the wrong parameter count");
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (m[i].rows() != params_[i].rows() || m[i].cols() != params_[i].cols() ||
          v[i].rows() != params_[i].rows() || v[i].cols() != params_[i].cols())
        throw std::invalid_argument("AdamW: moment shape mismatch at parameter " +
                                    std::to_string(i));
    m_ = std::move(m);
    v_ = std::move(v);
    step_count_ = step;
  }

 private:
  std::vector<ad::Tensor<Scalar>> params_;
  AdamWOptions opts_;
  std::vector<ad::Mat<Scalar>> m_, v_;
  long step_count_ = 0;
};

}  // namespace wakeforge
