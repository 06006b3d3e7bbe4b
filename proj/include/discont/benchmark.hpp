#ifndef DISCONT_BENCHMARK_HPP
#define DISCONT_BENCHMARK_HPP

#include <Eigen/Dense>
#include <stdexcept>

namespace discont {

// Linear restrictions tying the stacked group compositions together at one
// period. The variable order is (total, domain 1, ..., domain H), each a
// K-vector. The first K-1 rows make the total the share-weighted sum of the
// domains; the last H+1 rows pin every group to the unit sum.
inline Eigen::MatrixXd build_restrictions(int K, int H,
                                          const Eigen::VectorXd& shares) {
  if (K < 2 || H < 1) throw std::invalid_argument("need K >= 2 and H >= 1");
  if (shares.size() != H) throw std::invalid_argument("share vector must have H entries");
  if (std::abs(shares.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("domain shares must sum to 1");

  const int n = (H + 1) * K;
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(K - 1 + H + 1, n);
  for (int k = 0; k < K - 1; ++k) {
    R(k, k) = 1.0;
    for (int h = 0; h < H; ++h) R(k, (h + 1) * K + k) = -shares[h];
  }
  for (int g = 0; g <= H; ++g)
    R.row(K - 1 + g).segment(g * K, K).setOnes();
  return R;
}

inline Eigen::VectorXd restriction_targets(int K, int H, double unit) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(K - 1 + H + 1);
  c.tail(H + 1).setConstant(unit);
  return c;
}

struct BenchmarkResult {
  Eigen::VectorXd adjusted;  // y* satisfying R y* = c
  Eigen::MatrixXd cov;       // V* = V - V R'(R V R')^{-1} R V
  double condition = 0.0;    // of R V R'
  bool ill_conditioned = false;
};

// Minimum-variance update of y under the restrictions R y = c: the GLS
// projection y* = y + V R'(R V R')^{-1} (c - R y).
inline BenchmarkResult benchmark_lagrange(const Eigen::VectorXd& y,
                                          const Eigen::MatrixXd& V,
                                          const Eigen::MatrixXd& R,
                                          const Eigen::VectorXd& c) {
  const int n = static_cast<int>(y.size());
  const int r = static_cast<int>(R.rows());
  if (V.rows() != n || V.cols() != n || R.cols() != n || c.size() != r)
    throw std::invalid_argument("benchmarking dimensions do not agree");

  const Eigen::MatrixXd VRt = V * R.transpose();
  Eigen::MatrixXd S = R * VRt;
  S = 0.5 * (S + S.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  const double emax = es.eigenvalues().maxCoeff();
  const double emin = es.eigenvalues().minCoeff();
  if (!(emax > 0.0) || emin <= emax * 1e-14)
    throw std::runtime_error(
        "restriction system is singular; drop redundant restrictions or add "
        "uncertainty to the inputs");

  BenchmarkResult out;
  out.condition = emax / emin;
  out.ill_conditioned = out.condition > 1e10;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
  out.adjusted = y + VRt * ldlt.solve(c - R * y);
  out.cov = V - VRt * ldlt.solve(VRt.transpose());
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

}  // namespace discont

#endif
