#include "dosetime/bspline.hpp"

namespace dosetime {

namespace {

double coxdeboor(const std::vector<double>& u, int i, int p, double x) {
    if (p == 0) {
        const bool last_span = u[i + 1] == u.back() && x == u.back();
        return (u[i] <= x && (x < u[i + 1] || last_span)) ? 1.0 : 0.0;
    }
    double left = 0.0, right = 0.0;
    const double dl = u[i + p] - u[i];
    if (dl > 0.0) left = (x - u[i]) / dl * coxdeboor(u, i, p - 1, x);
    const double dr = u[i + p + 1] - u[i + 1];
    if (dr > 0.0) right = (u[i + p + 1] - x) / dr * coxdeboor(u, i + 1, p - 1, x);
    return left + right;
}

}  // namespace

double BSplineBasis::eval(int i, double x) const { return coxdeboor(knots, i, degree, x); }

std::vector<double> BSplineBasis::eval_all(double x) const {
    std::vector<double> out(static_cast<size_t>(size()));
    for (int i = 0; i < size(); ++i) out[static_cast<size_t>(i)] = eval(i, x);
    return out;
}

BSplineBasis clamped_uniform_basis(double lo, double hi, int degree, int n_basis) {
    BSplineBasis b;
    b.degree = degree;
    const int interior = n_basis - degree - 1;
    for (int k = 0; k <= degree; ++k) b.knots.push_back(lo);
    for (int k = 1; k <= interior; ++k)
        b.knots.push_back(lo + (hi - lo) * k / (interior + 1));
    for (int k = 0; k <= degree; ++k) b.knots.push_back(hi);
    return b;
}

BSplineBasis open_uniform_basis(double lo, double hi, int degree, int n_basis) {
    BSplineBasis b;
    b.degree = degree;
    const int n_knots = n_basis + degree + 1;
    for (int k = 0; k < n_knots; ++k)
        b.knots.push_back(lo + (hi - lo) * k / (n_knots - 1));
    return b;
}

}  // namespace dosetime
