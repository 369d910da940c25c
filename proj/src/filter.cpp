#include "iontrap/filter.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <sstream>

namespace iontrap {

FilterCascade::FilterCascade(std::vector<double> cutoffs_hz, double sample_period)
    : cutoffs_(std::move(cutoffs_hz)), sample_period_(sample_period) {
  require(std::isfinite(sample_period) && sample_period > 0.0, "filter sample period must be positive");
  const auto n = static_cast<Eigen::Index>(cutoffs_.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double fc = cutoffs_[static_cast<std::size_t>(i)];
    require(std::isfinite(fc) && fc > 0.0, "filter cutoffs must be positive and finite");
    const double tau = 1.0 / (kTwoPi * fc);
    if (!(tau > 0.5 * sample_period)) {
      std::ostringstream msg;
      msg << "filter section at " << fc << " Hz is too fast for the sample period " << sample_period
          << " s";
      fail(ErrorCode::InvalidArgument, msg.str());
    }
    a(i, i) = -1.0 / tau;
    if (i > 0) a(i, i - 1) = 1.0 / tau;
  }
  phi_ = (a * sample_period).exp();
  // Unit DC gain per section: the steady state for a constant input u is u in every stage.
  gamma_ = Eigen::VectorXd::Ones(n) - phi_ * Eigen::VectorXd::Ones(n);
}

double FilterCascade::total_time_constant() const {
  double t = 0.0;
  for (double fc : cutoffs_) t += 1.0 / (kTwoPi * fc);
  return t;
}

std::vector<double> FilterCascade::apply(std::span<const double> input) const {
  std::vector<double> out(input.begin(), input.end());
  if (empty() || input.empty()) return out;
  const auto n = static_cast<Eigen::Index>(order());
  Eigen::VectorXd x = Eigen::VectorXd::Constant(n, input[0]);
  for (std::size_t k = 0; k < input.size(); ++k) {
    out[k] = x[n - 1];
    x = phi_ * x + gamma_ * input[k];
  }
  return out;
}

std::vector<double> FilterCascade::invert(std::span<const double> target) const {
  std::vector<double> u(target.begin(), target.end());
  if (empty() || target.empty()) return u;
  const auto n = static_cast<Eigen::Index>(order());
  const Eigen::RowVectorXd c_phi = phi_.row(n - 1);
  const double c_gamma = gamma_[n - 1];
  Eigen::VectorXd x = Eigen::VectorXd::Constant(n, target[0]);
  for (std::size_t k = 0; k < target.size(); ++k) {
    const double next = target[std::min(k + 1, target.size() - 1)];
    u[k] = (next - c_phi.dot(x)) / c_gamma;
    x = phi_ * x + gamma_ * u[k];
  }
  return u;
}

}  // namespace iontrap
