#pragma once

#include <vector>

namespace dosetime {

// B-spline basis over an explicit knot vector, evaluated by the Cox-de Boor
// recursion. Sizes here are tiny (4-6 functions), so the plain recursive
// form is used instead of a span-optimised evaluator.
struct BSplineBasis {
    std::vector<double> knots;
    int degree = 3;

    int size() const { return static_cast<int>(knots.size()) - degree - 1; }
    double eval(int i, double x) const;
    std::vector<double> eval_all(double x) const;
};

// Clamped knot vector (endpoint multiplicity degree+1) with uniform interior
// knots; yields n_basis functions forming a partition of unity on [lo, hi].
BSplineBasis clamped_uniform_basis(double lo, double hi, int degree, int n_basis);

// Open uniform knot vector (no repeated knots, spacing (hi-lo)/(n_knots-1));
// the n_basis functions vanish at both interval endpoints.
BSplineBasis open_uniform_basis(double lo, double hi, int degree, int n_basis);

}  // namespace dosetime
