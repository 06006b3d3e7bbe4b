#ifndef DISCONT_TRANSFORMS_HPP
#define DISCONT_TRANSFORMS_HPP

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace discont {

// Compositional transforms between the open simplex and real space.
// Inputs are compositions on an arbitrary unit (fractions or percentages);
// ratios are scale free, inverses return fractions summing to one.

enum class TransformKind { alr, clr };

struct TransformedPanel {
  TransformKind kind = TransformKind::alr;
  Eigen::MatrixXd values;              // T x (K-1) for alr, T x K for clr
  int reference = -1;                  // alr only, 0-based category index
  Eigen::VectorXd gmean;               // clr only, geometric mean per period
  std::vector<std::string> periods;
  Eigen::VectorXd sample_sizes;
  int redesign_period = -1;            // 0-based index of first new-design period
};

inline void check_open_simplex(const Eigen::VectorXd& y, int period = -1) {
  for (int k = 0; k < y.size(); ++k) {
    if (!(y[k] > 0.0)) {
      std::string msg = "proportion for category " + std::to_string(k + 1) +
                        " is not strictly positive";
      if (period >= 0) msg += " at period index " + std::to_string(period + 1);
      throw std::invalid_argument(msg);
    }
  }
}

// x_k = ln(y_k / y_ref), reference category excluded from the output.
inline Eigen::VectorXd alr_forward(const Eigen::VectorXd& y, int reference,
                                   int period = -1) {
  const int K = static_cast<int>(y.size());
  if (reference < 0 || reference >= K)
    throw std::invalid_argument("alr reference category out of range");
  check_open_simplex(y, period);
  Eigen::VectorXd x(K - 1);
  const double lref = std::log(y[reference]);
  int j = 0;
  for (int k = 0; k < K; ++k) {
    if (k == reference) continue;
    x[j++] = std::log(y[k]) - lref;
  }
  return x;
}

// Inverse of alr_forward; output is a composition on the unit simplex with
// the reference category reinserted. Max-subtraction keeps exp() finite.
inline Eigen::VectorXd alr_inverse(const Eigen::VectorXd& x, int reference) {
  const int K = static_cast<int>(x.size()) + 1;
  if (reference < 0 || reference >= K)
    throw std::invalid_argument("alr reference category out of range");
  for (int k = 0; k < x.size(); ++k)
    if (!std::isfinite(x[k]))
      throw std::invalid_argument("non-finite logratio input");
  // work with the full log-coordinate vector (reference has log value 0)
  Eigen::VectorXd logv(K);
  int j = 0;
  for (int k = 0; k < K; ++k) logv[k] = (k == reference) ? 0.0 : x[j++];
  const double m = logv.maxCoeff();
  Eigen::VectorXd e = (logv.array() - m).exp();
  return e / e.sum();
}

// z_k = ln(y_k / g(y)) with g the geometric mean; rows sum to zero.
inline Eigen::VectorXd clr_forward(const Eigen::VectorXd& y, int period = -1) {
  check_open_simplex(y, period);
  Eigen::VectorXd logv = y.array().log();
  return logv.array() - logv.mean();
}

// Softmax; shift invariant, output sums to one.
inline Eigen::VectorXd clr_inverse(const Eigen::VectorXd& z) {
  for (int k = 0; k < z.size(); ++k)
    if (!std::isfinite(z[k]))
      throw std::invalid_argument("non-finite central logratio input");
  const double m = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - m).exp();
  return e / e.sum();
}

inline double geometric_mean(const Eigen::VectorXd& y) {
  check_open_simplex(y);
  return std::exp(y.array().log().mean());
}

}  // namespace discont

#endif
