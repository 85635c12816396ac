#pragma once

// Dueling action-value network: a shared ReLU layer feeding separate ReLU
// value and advantage layers, combined as V + A - mean(A). All parameters
// live in one flat vector so optimizers, target copies and checkpoints can
// treat the network as a single array.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>

#include "mfg/core.hpp"
#include "mfg/random.hpp"

namespace mfg::rl {

template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct NetworkShape {
  std::size_t inputs = 0;
  std::size_t hidden = 256;
  std::size_t actions = 0;

  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

template <class Scalar>
class DuelingNetwork {
 public:
  using Mat = Matrix<Scalar>;
  using Vec = Vector<Scalar>;
  using MatMap = Eigen::Map<Mat>;
  using ConstMatMap = Eigen::Map<const Mat>;

  // Activations kept from a forward pass for backpropagation.
  struct Cache {
    Mat input, shared, value_hidden, advantage_hidden;
  };

  DuelingNetwork() = default;

  explicit DuelingNetwork(NetworkShape shape) : shape_(shape) {
    if (shape.inputs == 0 || shape.hidden == 0 || shape.actions == 0)
      throw DimensionError("DuelingNetwork: empty layer");
    const std::size_t I = shape.inputs, H = shape.hidden, A = shape.actions;
    std::size_t off = 0;
    auto take = [&off](std::size_t n) {
      const std::size_t o = off;
      off += n;
      return o;
    };
    w1_ = take(H * I);
    b1_ = take(H);
    wv_ = take(H * H);
    bv_ = take(H);
    wa_ = take(H * H);
    ba_ = take(H);
    wvo_ = take(H);
    bvo_ = take(1);
    wao_ = take(A * H);
    bao_ = take(A);
    params_ = Vec::Zero(static_cast<Eigen::Index>(off));
  }

  /// Weights and biases of each layer drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  void initialize(Rng& rng) {
    const std::size_t I = shape_.inputs, H = shape_.hidden, A = shape_.actions;
    auto fill = [&](std::size_t off, std::size_t n, std::size_t fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (std::size_t i = 0; i < n; ++i)
        params_[static_cast<Eigen::Index>(off + i)] = static_cast<Scalar>((2.0 * uniform01(rng) - 1.0) * bound);
    };
    fill(w1_, H * I + H, I);
    fill(wv_, H * H + H, H);
    fill(wa_, H * H + H, H);
    fill(wvo_, H + 1, H);
    fill(wao_, A * H + A, H);
  }

  const NetworkShape& shape() const { return shape_; }
  Vec& parameters() { return params_; }
  const Vec& parameters() const { return params_; }
  std::size_t num_parameters() const { return static_cast<std::size_t>(params_.size()); }

  /// Q values, one column per observation column.
  Mat forward(const Mat& x) const {
    Cache c;
    return forward(x, c);
  }

  Mat forward(const Mat& x, Cache& c) const {
    if (static_cast<std::size_t>(x.rows()) != shape_.inputs) throw DimensionError("DuelingNetwork: input size");
    c.input = x;
    c.shared = ((W1() * x).colwise() + B1()).cwiseMax(Scalar(0));
    c.value_hidden = ((Wv() * c.shared).colwise() + Bv()).cwiseMax(Scalar(0));
    c.advantage_hidden = ((Wa() * c.shared).colwise() + Ba()).cwiseMax(Scalar(0));
    Mat adv = (Wao() * c.advantage_hidden).colwise() + Bao();
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> value = (Wvo() * c.value_hidden).array() + params_[bvo_];
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> mean = adv.colwise().mean();
    return (adv.rowwise() + (value - mean));
  }

  /// Gradient of sum_ij dq(i,j) * Q(i,j) with respect to the flat parameters.
  Vec backward(const Cache& c, const Mat& dq) const {
    const auto A = static_cast<Eigen::Index>(shape_.actions);
    Vec grad = Vec::Zero(params_.size());
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> dv = dq.colwise().sum();
    Mat dadv = dq.rowwise() - dv / static_cast<Scalar>(A);

    map(grad, wao_, shape_.actions, shape_.hidden).noalias() = dadv * c.advantage_hidden.transpose();
    vec(grad, bao_, shape_.actions) = dadv.rowwise().sum();
    map(grad, wvo_, 1, shape_.hidden).noalias() = dv * c.value_hidden.transpose();
    grad[static_cast<Eigen::Index>(bvo_)] = dv.sum();

    Mat dha = (Wao().transpose() * dadv).cwiseProduct(positive(c.advantage_hidden));
    Mat dhv = (Wvo().transpose() * dv).cwiseProduct(positive(c.value_hidden));
    map(grad, wa_, shape_.hidden, shape_.hidden).noalias() = dha * c.shared.transpose();
    vec(grad, ba_, shape_.hidden) = dha.rowwise().sum();
    map(grad, wv_, shape_.hidden, shape_.hidden).noalias() = dhv * c.shared.transpose();
    vec(grad, bv_, shape_.hidden) = dhv.rowwise().sum();

    Mat dh1 = (Wa().transpose() * dha + Wv().transpose() * dhv).cwiseProduct(positive(c.shared));
    map(grad, w1_, shape_.hidden, shape_.inputs).noalias() = dh1 * c.input.transpose();
    vec(grad, b1_, shape_.hidden) = dh1.rowwise().sum();
    return grad;
  }

  /// Raw advantage-head bias; shifting it uniformly leaves Q unchanged.
  auto advantage_bias() { return vec(params_, bao_, shape_.actions); }

 private:
  static MatMap map(Vec& v, std::size_t off, std::size_t rows, std::size_t cols) {
    return MatMap(v.data() + off, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }
  static Eigen::Map<Vec> vec(Vec& v, std::size_t off, std::size_t n) {
    return Eigen::Map<Vec>(v.data() + off, static_cast<Eigen::Index>(n));
  }
  ConstMatMap cmap(std::size_t off, std::size_t rows, std::size_t cols) const {
    return ConstMatMap(params_.data() + off, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }
  Eigen::Map<const Vec> cvec(std::size_t off, std::size_t n) const {
    return Eigen::Map<const Vec>(params_.data() + off, static_cast<Eigen::Index>(n));
  }
  static Mat positive(const Mat& h) { return (h.array() > Scalar(0)).template cast<Scalar>(); }

  ConstMatMap W1() const { return cmap(w1_, shape_.hidden, shape_.inputs); }
  Eigen::Map<const Vec> B1() const { return cvec(b1_, shape_.hidden); }
  ConstMatMap Wv() const { return cmap(wv_, shape_.hidden, shape_.hidden); }
  Eigen::Map<const Vec> Bv() const { return cvec(bv_, shape_.hidden); }
  ConstMatMap Wa() const { return cmap(wa_, shape_.hidden, shape_.hidden); }
  Eigen::Map<const Vec> Ba() const { return cvec(ba_, shape_.hidden); }
  ConstMatMap Wvo() const { return cmap(wvo_, 1, shape_.hidden); }
  ConstMatMap Wao() const { return cmap(wao_, shape_.actions, shape_.hidden); }
  Eigen::Map<const Vec> Bao() const { return cvec(bao_, shape_.actions); }

  NetworkShape shape_;
  Vec params_;
  std::size_t w1_ = 0, b1_ = 0, wv_ = 0, bv_ = 0, wa_ = 0, ba_ = 0, wvo_ = 0, bvo_ = 0, wao_ = 0, bao_ = 0;
};

}  // namespace mfg::rl
