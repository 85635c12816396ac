#pragma once

// Simplex-valued tensors (distributions, mean fields, Markov policies) and
// the total-variation based metrics used to compare them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mfg {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rows of every simplex tensor must sum to one within this tolerance.
inline constexpr double kSimplexTolerance = 1e-9;

namespace detail {

// Checks a row against the simplex tolerance and rescales it to sum exactly
// (up to rounding) to one.
inline void normalize_row(std::span<double> row, const char* what) {
  if (row.empty()) throw DimensionError(std::string(what) + ": empty row");
  double sum = 0.0;
  for (double& x : row) {
    if (!std::isfinite(x)) throw ArgumentError(std::string(what) + ": non-finite entry");
    if (x < 0.0) {
      if (x < -kSimplexTolerance) throw ArgumentError(std::string(what) + ": negative entry");
      x = 0.0;
    }
    sum += x;
  }
  if (std::abs(sum - 1.0) > kSimplexTolerance)
    throw ArgumentError(std::string(what) + ": row sums to " + std::to_string(sum));
  // Rows that already sum to one up to a few ulps are left bit-identical.
  if (std::abs(sum - 1.0) > 4.0 * std::numeric_limits<double>::epsilon())
    for (double& x : row) x /= sum;
}

inline void rescale_row(std::span<double> row, const char* what) {
  double sum = 0.0;
  for (double& x : row) {
    if (!std::isfinite(x) || x < 0.0)
      throw ArgumentError(std::string(what) + ": weights must be finite and nonnegative");
    sum += x;
  }
  if (!(sum > 0.0)) throw ArgumentError(std::string(what) + ": weights sum to zero");
  for (double& x : row) x /= sum;
}

}  // namespace detail

/// A probability mass function over a finite set of categories.
class ProbVec {
 public:
  ProbVec() = default;

  /// Validates `entries` (nonnegative, sum 1 within kSimplexTolerance) and
  /// removes the residual rounding error.
  explicit ProbVec(std::vector<double> entries) : entries_(std::move(entries)) {
    detail::normalize_row(entries_, "ProbVec");
  }

  /// Rescales arbitrary nonnegative weights into a distribution.
  static ProbVec normalized(std::vector<double> weights) {
    detail::rescale_row(weights, "ProbVec::normalized");
    ProbVec p;
    p.entries_ = std::move(weights);
    return p;
  }

  static ProbVec dirac(std::size_t n, std::size_t index) {
    if (index >= n) throw DimensionError("ProbVec::dirac: index out of range");
    std::vector<double> e(n, 0.0);
    e[index] = 1.0;
    return ProbVec(std::move(e));
  }

  static ProbVec uniform(std::size_t n) {
    if (n == 0) throw DimensionError("ProbVec::uniform: empty support");
    return ProbVec(std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  std::size_t size() const { return entries_.size(); }
  double operator[](std::size_t i) const { return entries_[i]; }
  std::span<const double> entries() const { return entries_; }
  const std::vector<double>& vector() const { return entries_; }

  friend bool operator==(const ProbVec&, const ProbVec&) = default;

 private:
  std::vector<double> entries_;
};

/// Time-indexed state distributions mu_0, ..., mu_{T-1}.
class MeanField {
 public:
  MeanField() = default;

  MeanField(std::size_t horizon, std::size_t num_states, std::vector<double> flat)
      : horizon_(horizon), num_states_(num_states), data_(std::move(flat)) {
    if (horizon_ == 0 || num_states_ == 0) throw DimensionError("MeanField: empty shape");
    if (data_.size() != horizon_ * num_states_) throw DimensionError("MeanField: data size mismatch");
    for (std::size_t t = 0; t < horizon_; ++t)
      detail::normalize_row(std::span<double>(data_).subspan(t * num_states_, num_states_), "MeanField");
  }

  explicit MeanField(const std::vector<ProbVec>& rows) {
    if (rows.empty()) throw DimensionError("MeanField: no rows");
    horizon_ = rows.size();
    num_states_ = rows.front().size();
    data_.reserve(horizon_ * num_states_);
    for (const auto& r : rows) {
      if (r.size() != num_states_) throw DimensionError("MeanField: ragged rows");
      data_.insert(data_.end(), r.entries().begin(), r.entries().end());
    }
  }

  std::size_t horizon() const { return horizon_; }
  std::size_t num_states() const { return num_states_; }
  std::span<const double> row(std::size_t t) const {
    return std::span<const double>(data_).subspan(t * num_states_, num_states_);
  }
  double operator()(std::size_t t, std::size_t s) const { return data_[t * num_states_ + s]; }
  std::span<const double> flat() const { return data_; }

  bool same_shape(const MeanField& o) const {
    return horizon_ == o.horizon_ && num_states_ == o.num_states_;
  }

  friend bool operator==(const MeanField&, const MeanField&) = default;

 private:
  std::size_t horizon_ = 0;
  std::size_t num_states_ = 0;
  std::vector<double> data_;
};

/// Markov policy pi_t(a|s), stored densely as [t][s][a]. A strictly positive
/// instance doubles as the regularization prior q.
class Policy {
 public:
  Policy() = default;

  Policy(std::size_t horizon, std::size_t num_states, std::size_t num_actions, std::vector<double> flat)
      : horizon_(horizon), num_states_(num_states), num_actions_(num_actions), data_(std::move(flat)) {
    if (horizon_ == 0 || num_states_ == 0 || num_actions_ == 0) throw DimensionError("Policy: empty shape");
    if (data_.size() != horizon_ * num_states_ * num_actions_) throw DimensionError("Policy: data size mismatch");
    for (std::size_t i = 0; i < horizon_ * num_states_; ++i)
      detail::normalize_row(std::span<double>(data_).subspan(i * num_actions_, num_actions_), "Policy");
  }

  static Policy uniform(std::size_t horizon, std::size_t num_states, std::size_t num_actions) {
    return Policy(horizon, num_states, num_actions,
                  std::vector<double>(horizon * num_states * num_actions, 1.0 / static_cast<double>(num_actions)));
  }

  /// Every (t, s) row puts all mass on `action`.
  static Policy constant_action(std::size_t horizon, std::size_t num_states, std::size_t num_actions,
                                std::size_t action) {
    if (action >= num_actions) throw DimensionError("Policy::constant_action: action out of range");
    std::vector<double> flat(horizon * num_states * num_actions, 0.0);
    for (std::size_t i = 0; i < horizon * num_states; ++i) flat[i * num_actions + action] = 1.0;
    return Policy(horizon, num_states, num_actions, std::move(flat));
  }

  std::size_t horizon() const { return horizon_; }
  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }

  std::span<const double> row(std::size_t t, std::size_t s) const {
    return std::span<const double>(data_).subspan((t * num_states_ + s) * num_actions_, num_actions_);
  }
  double operator()(std::size_t t, std::size_t s, std::size_t a) const {
    return data_[(t * num_states_ + s) * num_actions_ + a];
  }
  std::span<const double> flat() const { return data_; }

  bool same_shape(const Policy& o) const {
    return horizon_ == o.horizon_ && num_states_ == o.num_states_ && num_actions_ == o.num_actions_;
  }

  bool strictly_positive() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return x > 0.0; });
  }
  double min_entry() const { return *std::min_element(data_.begin(), data_.end()); }
  double max_entry() const { return *std::max_element(data_.begin(), data_.end()); }

  friend bool operator==(const Policy&, const Policy&) = default;

 private:
  std::size_t horizon_ = 0;
  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  std::vector<double> data_;
};

/// Regularization temperature eta > 0.
class Temperature {
 public:
  explicit Temperature(double eta) : eta_(eta) {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ArgumentError("Temperature must be positive and finite");
  }
  double value() const { return eta_; }

 private:
  double eta_;
};

inline void require_prior(const Policy& prior) {
  if (!prior.strictly_positive()) throw ArgumentError("prior policy must be strictly positive");
}

/// d_TV(p, q) = 1/2 sum_x |p(x) - q(x)|.
inline double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("tv_distance: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
  return std::min(1.0, 0.5 * sum);
}

inline double tv_distance(const ProbVec& p, const ProbVec& q) { return tv_distance(p.entries(), q.entries()); }

/// Max over (t, s) of the total variation between action rows.
inline double policy_distance(const Policy& a, const Policy& b) {
  if (!a.same_shape(b)) throw DimensionError("policy_distance: shape mismatch");
  double d = 0.0;
  for (std::size_t t = 0; t < a.horizon(); ++t)
    for (std::size_t s = 0; s < a.num_states(); ++s) d = std::max(d, tv_distance(a.row(t, s), b.row(t, s)));
  return d;
}

/// Max over t of the total variation between state distributions.
inline double meanfield_distance(const MeanField& a, const MeanField& b) {
  if (!a.same_shape(b)) throw DimensionError("meanfield_distance: shape mismatch");
  double d = 0.0;
  for (std::size_t t = 0; t < a.horizon(); ++t) d = std::max(d, tv_distance(a.row(t), b.row(t)));
  return d;
}

namespace detail {

inline std::vector<double> convex_rows(std::span<const double> a, std::span<const double> b, double lambda,
                                       std::size_t row_len) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ArgumentError("mix: lambda must lie in [0, 1]");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = lambda * a[i] + (1.0 - lambda) * b[i];
  for (std::size_t off = 0; off < out.size(); off += row_len) {
    auto row = std::span<double>(out).subspan(off, row_len);
    double sum = std::accumulate(row.begin(), row.end(), 0.0);
    for (double& x : row) x /= sum;
  }
  return out;
}

}  // namespace detail

/// Convex combination lambda * a + (1 - lambda) * b, rowwise renormalized.
inline Policy mix(const Policy& a, const Policy& b, double lambda) {
  if (!a.same_shape(b)) throw DimensionError("mix: shape mismatch");
  return Policy(a.horizon(), a.num_states(), a.num_actions(),
                detail::convex_rows(a.flat(), b.flat(), lambda, a.num_actions()));
}

inline MeanField mix(const MeanField& a, const MeanField& b, double lambda) {
  if (!a.same_shape(b)) throw DimensionError("mix: shape mismatch");
  return MeanField(a.horizon(), a.num_states(), detail::convex_rows(a.flat(), b.flat(), lambda, a.num_states()));
}

inline ProbVec mix(const ProbVec& a, const ProbVec& b, double lambda) {
  if (a.size() != b.size()) throw DimensionError("mix: length mismatch");
  return ProbVec(detail::convex_rows(a.entries(), b.entries(), lambda, a.size()));
}

}  // namespace mfg
