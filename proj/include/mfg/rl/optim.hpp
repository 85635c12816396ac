#pragma once

// Adam with global gradient-norm clipping, the replay buffer and the
// exploration schedule used by DQN.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "mfg/core.hpp"
#include "mfg/random.hpp"

namespace mfg::rl {

/// Rescales grad in place so its Euclidean norm is at most max_norm and
/// returns the norm before clipping. max_norm <= 0 disables clipping.
template <class Derived>
double clip_global_norm(Eigen::MatrixBase<Derived>& grad, double max_norm) {
  const double norm = static_cast<double>(grad.norm());
  if (max_norm > 0.0 && norm > max_norm) grad *= static_cast<typename Derived::Scalar>(max_norm / norm);
  return norm;
}

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 40.0;  // <= 0 disables
};

template <class Scalar>
class Adam {
 public:
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Adam() = default;
  Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(Vec::Zero(static_cast<Eigen::Index>(n))), v_(m_) {}

  /// Clips grad, then takes one step on params. Returns the unclipped norm.
  double step(Vec& params, Vec& grad) {
    const double norm = clip_global_norm(grad, cfg_.clip_norm);
    ++t_;
    const auto b1 = static_cast<Scalar>(cfg_.beta1), b2 = static_cast<Scalar>(cfg_.beta2);
    m_ = b1 * m_ + (Scalar(1) - b1) * grad;
    v_ = b2 * v_ + (Scalar(1) - b2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const auto lr = static_cast<Scalar>(cfg_.learning_rate / c1);
    const auto eps = static_cast<Scalar>(cfg_.epsilon);
    const auto s2 = static_cast<Scalar>(1.0 / std::sqrt(c2));
    params.array() -= lr * m_.array() / (v_.array().sqrt() * s2 + eps);
    return norm;
  }

  std::uint64_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  Vec m_, v_;
  std::uint64_t t_ = 0;
};

/// One stored step; states are kept as model codes and observed on demand.
struct ReplayItem {
  std::uint64_t state = 0;
  std::uint32_t time = 0;
  std::uint32_t action = 0;
  double reward = 0.0;
  std::uint64_t next_state = 0;
  bool terminal = false;
};

/// Fixed-capacity FIFO ring with uniform sampling with replacement.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ArgumentError("ReplayBuffer: capacity must be positive");
    items_.reserve(capacity);
  }

  void push(const ReplayItem& item) {
    if (items_.size() < capacity_) {
      items_.push_back(item);
    } else {
      items_[head_] = item;
      head_ = (head_ + 1) % capacity_;
    }
    ++pushed_;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t pushed() const { return pushed_; }

  /// Items in insertion order, oldest first.
  const ReplayItem& at(std::size_t i) const { return items_[(head_ + i) % items_.size()]; }

  std::size_t sample_slot(Rng& rng) const {
    if (items_.empty()) throw ArgumentError("ReplayBuffer: empty");
    return uniform_index(rng, items_.size());
  }
  const ReplayItem& slot(std::size_t i) const { return items_[i]; }

 private:
  std::size_t capacity_;
  std::vector<ReplayItem> items_;
  std::size_t head_ = 0;
  std::uint64_t pushed_ = 0;
};

/// Linear decay from start to end over the first `fraction` of total steps.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.02;
  double fraction = 0.8;
  std::uint64_t total_steps = 1;

  double operator()(std::uint64_t step) const {
    const double span = fraction * static_cast<double>(total_steps);
    if (static_cast<double>(step) >= span) return end;
    return start + (end - start) * (static_cast<double>(step) / span);
  }
};

}  // namespace mfg::rl
