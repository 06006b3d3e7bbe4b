#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "discont/panel.hpp"
#include "discont/transforms.hpp"

using namespace discont;

namespace {

Eigen::VectorXd random_simplex(std::mt19937_64& rng, int K) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Eigen::VectorXd y(K);
  for (int k = 0; k < K; ++k) y[k] = u(rng);
  return y / y.sum();
}

}  // namespace

TEST_CASE("alr forward basics") {
  Eigen::VectorXd uniform(4);
  uniform << 0.25, 0.25, 0.25, 0.25;
  Eigen::VectorXd x = alr_forward(uniform, 3);
  CHECK(x.cwiseAbs().maxCoeff() < 1e-15);

  Eigen::VectorXd y(3);
  y << 0.5, 0.3, 0.2;
  x = alr_forward(y, 2);
  CHECK(x[0] == Catch::Approx(std::log(2.5)).epsilon(1e-9));
  CHECK(x[1] == Catch::Approx(std::log(1.5)).epsilon(1e-9));

  Eigen::VectorXd with_zero(3);
  with_zero << 0.5, 0.5, 0.0;
  CHECK_THROWS_WITH(alr_forward(with_zero, 2, 4),
                    Catch::Matchers::ContainsSubstring("category 3") &&
                        Catch::Matchers::ContainsSubstring("period index 5"));
}

TEST_CASE("alr inverse basics") {
  Eigen::VectorXd zeros = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd y = alr_inverse(zeros, 3);
  for (int k = 0; k < 4; ++k) CHECK(y[k] == Catch::Approx(0.25));

  Eigen::VectorXd x(2);
  x << std::log(2.5), std::log(1.5);
  y = alr_inverse(x, 2);
  CHECK(y[0] == Catch::Approx(0.5).epsilon(1e-12));
  CHECK(y[1] == Catch::Approx(0.3).epsilon(1e-12));
  CHECK(y[2] == Catch::Approx(0.2).epsilon(1e-12));

  // overflow-prone input is stabilized
  Eigen::VectorXd big(3);
  big << 700.0, 0.0, -5.0;
  y = alr_inverse(big, 3);
  CHECK(std::isfinite(y.sum()));
  CHECK(y[0] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("clr forward basics") {
  Eigen::VectorXd uniform(5);
  uniform.setConstant(0.2);
  CHECK(clr_forward(uniform).cwiseAbs().maxCoeff() < 1e-15);

  Eigen::VectorXd y(3);
  y << 0.5, 0.25, 0.25;
  Eigen::VectorXd z = clr_forward(y);
  CHECK(z[0] == Catch::Approx(0.462098).margin(1e-6));
  CHECK(z[1] == Catch::Approx(-0.231049).margin(1e-6));
  CHECK(z[2] == Catch::Approx(-0.231049).margin(1e-6));
  CHECK(std::abs(z.sum()) < 1e-12);

  // permutation equivariance
  Eigen::VectorXd yp(3);
  yp << 0.25, 0.5, 0.25;
  Eigen::VectorXd zp = clr_forward(yp);
  CHECK(zp[1] == Catch::Approx(z[0]));
  CHECK(zp[0] == Catch::Approx(z[1]));
}

TEST_CASE("clr inverse basics") {
  Eigen::VectorXd zeros = Eigen::VectorXd::Zero(4);
  Eigen::VectorXd y = clr_inverse(zeros);
  for (int k = 0; k < 4; ++k) CHECK(y[k] == Catch::Approx(0.25));

  Eigen::VectorXd z(3);
  z << 0.3, -0.1, -0.2;
  Eigen::VectorXd a = clr_inverse(z);
  Eigen::VectorXd b = clr_inverse((z.array() + 17.0).matrix());
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("round trips on random open-simplex points") {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 1000; ++rep) {
    const int K = 3 + static_cast<int>(rep % 4);
    Eigen::VectorXd y = random_simplex(rng, K);
    const int ref = rep % K;
    Eigen::VectorXd back = alr_inverse(alr_forward(y, ref), ref);
    CHECK((back - y).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(back.sum() - 1.0) < 1e-14);

    Eigen::VectorXd z = clr_forward(y);
    CHECK(std::abs(z.sum()) < 1e-12);
    Eigen::VectorXd back2 = clr_inverse(z);
    CHECK((back2 - y).cwiseAbs().maxCoeff() < 1e-12);
    for (int k = 0; k < K; ++k) {
      CHECK(back2[k] > 0.0);
      CHECK(back2[k] < 1.0);
    }
  }
}

TEST_CASE("panel transforms carry metadata") {
  CompositionalPanel panel;
  panel.periods = {"1997", "1998", "1999", "2000"};
  panel.proportions.resize(4, 3);
  panel.proportions << 50, 30, 20, 52, 29, 19, 48, 31, 21, 49, 30, 21;
  panel.sample_sizes = Eigen::VectorXd::Constant(4, 4500.0);
  panel.redesign_period = 2;
  panel.unit_total = 100.0;

  auto alr = alr_panel(panel, 2);
  CHECK(alr.values.rows() == 4);
  CHECK(alr.values.cols() == 2);
  CHECK(alr.redesign_period == 2);
  CHECK(alr.values(0, 0) == Catch::Approx(std::log(50.0 / 20.0)));

  auto clr = clr_panel(panel);
  CHECK(clr.values.cols() == 3);
  for (int t = 0; t < 4; ++t) CHECK(std::abs(clr.values.row(t).sum()) < 1e-10);
  CHECK(clr.gmean[0] == Catch::Approx(geometric_mean(panel.fraction_row(0))));
}

TEST_CASE("panel validation") {
  CompositionalPanel panel;
  panel.periods = {"a", "b", "c"};
  panel.proportions.resize(3, 2);
  panel.proportions << 60, 40, 61, 39, 59, 41;
  panel.sample_sizes = Eigen::VectorXd::Constant(3, 100.0);
  panel.redesign_period = 1;
  CHECK_NOTHROW(panel.validate());

  auto bad = panel;
  bad.proportions(1, 0) = 70;  // row no longer sums to unit total
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = panel;
  bad.redesign_period = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = panel;
  bad.sample_sizes[2] = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
