#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include <Eigen/Dense>

#include "dosetime/bspline.hpp"

using dosetime::BSplineBasis;
using dosetime::clamped_uniform_basis;
using dosetime::open_uniform_basis;

namespace {

double binom(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

// Bernstein polynomial oracle: a clamped cubic basis with no interior knots
// is exactly the Bernstein basis on [0, 1].
double bernstein(int i, int n, double x) {
    return binom(n, i) * std::pow(x, i) * std::pow(1.0 - x, n - i);
}

}  // namespace

TEST_CASE("clamped cubic basis without interior knots equals the Bernstein basis") {
    const auto b = clamped_uniform_basis(0.0, 1.0, 3, 4);
    REQUIRE(b.size() == 4);
    for (int g = 0; g <= 50; ++g) {
        const double x = g / 50.0;
        for (int i = 0; i < 4; ++i)
            CHECK(b.eval(i, x) == doctest::Approx(bernstein(i, 3, x)).epsilon(1e-12));
    }
}

TEST_CASE("clamped basis: partition of unity, support, endpoint interpolation") {
    const auto b = clamped_uniform_basis(0.0, 60.0, 3, 6);
    REQUIRE(b.size() == 6);
    for (int g = 0; g <= 100; ++g) {
        const double x = 60.0 * g / 100.0;
        double sum = 0.0;
        for (int i = 0; i < 6; ++i) {
            const double v = b.eval(i, x);
            CHECK(v >= -1e-14);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(b.eval(0, 0.0) == doctest::Approx(1.0));
    CHECK(b.eval(5, 60.0) == doctest::Approx(1.0));
    CHECK(b.eval(5, 0.0) == doctest::Approx(0.0));
}

TEST_CASE("open uniform cubic basis vanishes at the endpoints") {
    const auto b = open_uniform_basis(0.0, 1.0, 3, 4);
    REQUIRE(b.size() == 4);
    REQUIRE(b.knots.size() == 8);
    for (size_t i = 0; i + 1 < b.knots.size(); ++i)
        CHECK(b.knots[i + 1] - b.knots[i] == doctest::Approx(1.0 / 7.0));
    for (int i = 0; i < 4; ++i) {
        CHECK(std::fabs(b.eval(i, 0.0)) < 1e-12);
        CHECK(std::fabs(b.eval(i, 1.0)) < 1e-12);
    }
}

TEST_CASE("property basis {1, a, open B-splines} is well-conditioned") {
    // The six property-map basis functions must be linearly independent on
    // [0, 1]; check the Gram matrix on a grid is far from singular.
    const auto b = open_uniform_basis(0.0, 1.0, 3, 4);
    const int n = 101;
    Eigen::MatrixXd G(n, 6);
    for (int g = 0; g < n; ++g) {
        const double x = g / 100.0;
        G(g, 0) = 1.0;
        G(g, 1) = x;
        for (int i = 0; i < 4; ++i) G(g, 2 + i) = b.eval(i, x);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(G);
    const double cond = svd.singularValues()(0) / svd.singularValues()(5);
    CHECK(cond < 1e4);
}
