#pragma once

#include "iontrap/common.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace iontrap {

/// Cascade of first-order low-pass sections driven by a zero-order-hold DAC,
/// discretized exactly at the sample period.
class FilterCascade {
 public:
  FilterCascade() = default;
  FilterCascade(std::vector<double> cutoffs_hz, double sample_period);

  const std::vector<double>& cutoffs() const { return cutoffs_; }
  double sample_period() const { return sample_period_; }
  bool empty() const { return cutoffs_.empty(); }
  std::size_t order() const { return cutoffs_.size(); }

  /// Sum of the section time constants.
  double total_time_constant() const;

  const Eigen::MatrixXd& transition() const { return phi_; }
  const Eigen::VectorXd& input_gain() const { return gamma_; }

  /// Filters one channel. The cascade starts in steady state at input[0].
  std::vector<double> apply(std::span<const double> input) const;

  /// Input sequence whose filtered output equals `target` sample for sample.
  /// The inverse runs one sample ahead of the plant; the last target sample
  /// is held. Exact when target[0] == target[1].
  std::vector<double> invert(std::span<const double> target) const;

 private:
  std::vector<double> cutoffs_;
  double sample_period_ = 0.0;
  Eigen::MatrixXd phi_;
  Eigen::VectorXd gamma_;
};

}  // namespace iontrap
