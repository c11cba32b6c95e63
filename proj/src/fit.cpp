#include "dosetime/fit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include <Eigen/Dense>

#include "dosetime/dataset.hpp"
#include "dosetime/hash.hpp"
#include "dosetime/lbfgs.hpp"
#include "dosetime/parallel.hpp"
#include "dosetime/rng.hpp"
#include "json.hpp"

namespace dosetime::fit {

using nlohmann::json;
using semantic::Composition;
using semantic::Extent;
using semantic::RenderedCurve;

const PropertyBasis& property_basis() {
    static const PropertyBasis basis{open_uniform_basis(0.0, 1.0, 3, 4)};
    return basis;
}

namespace {

// The optimizer works in coordinates preconditioned by the Cholesky factor
// of the basis Gram matrix; the raw basis is visibly ill-conditioned (its
// Hessian condition number is the Gram condition squared) and L-BFGS crawls
// in it. Stored coefficients stay in the documented basis.
struct BasisPrecond {
    double L[kBasisSize][kBasisSize] = {};  // lower Cholesky of the Gram

    BasisPrecond() {
        double G[kBasisSize][kBasisSize] = {};
        const int n = 501;
        for (int g = 0; g < n; ++g) {
            const double a = static_cast<double>(g) / (n - 1);
            const double w = (g == 0 || g == n - 1) ? 0.5 : 1.0;
            const auto b = property_basis().eval(a);
            for (int i = 0; i < kBasisSize; ++i)
                for (int j = 0; j < kBasisSize; ++j) G[i][j] += w * b[static_cast<size_t>(i)] * b[static_cast<size_t>(j)] / (n - 1);
        }
        for (int i = 0; i < kBasisSize; ++i) G[i][i] += 1e-10;
        for (int i = 0; i < kBasisSize; ++i)
            for (int j = 0; j <= i; ++j) {
                double s = G[i][j];
                for (int k = 0; k < j; ++k) s -= L[i][k] * L[j][k];
                L[i][j] = i == j ? std::sqrt(s) : s / L[j][j];
            }
    }

    // y = L^T c
    void to_y(const double* c, double* y) const {
        for (int i = 0; i < kBasisSize; ++i) {
            double s = 0.0;
            for (int j = i; j < kBasisSize; ++j) s += L[j][i] * c[j];
            y[i] = s;
        }
    }
    // c = L^-T y (back substitution on the upper-triangular L^T)
    void to_c(const double* y, double* c) const {
        for (int i = kBasisSize - 1; i >= 0; --i) {
            double s = y[i];
            for (int j = i + 1; j < kBasisSize; ++j) s -= L[j][i] * c[j];
            c[i] = s / L[i][i];
        }
    }
    // grad_y = L^-1 grad_c (forward substitution)
    void grad_to_y(const double* gc, double* gy) const {
        for (int i = 0; i < kBasisSize; ++i) {
            double s = gc[i];
            for (int j = 0; j < i; ++j) s -= L[i][j] * gy[j];
            gy[i] = s / L[i][i];
        }
    }
};

const BasisPrecond& precond() {
    static const BasisPrecond p;
    return p;
}

}  // namespace

std::array<double, kBasisSize> PropertyBasis::eval(double a) const {
    std::array<double, kBasisSize> out;
    out[0] = 1.0;
    out[1] = a;
    for (int i = 0; i < 4; ++i) out[static_cast<size_t>(2 + i)] = spline.eval(i, a);
    return out;
}

int BranchSpec::idx_dend() const {
    const int k = n_motifs();
    if (k < 2 || semantic::terminal_starts_at_extremum(comp)) return -1;
    return 2 * k;
}

BranchSpec make_branch_spec(const Composition& comp) {
    std::string why;
    if (!semantic::composition_valid(comp, &why))
        throw std::invalid_argument("invalid composition: " + why);
    BranchSpec spec;
    spec.comp = comp;
    const auto names = semantic::property_names(comp);
    if (static_cast<int>(names.size()) > kMaxProps)
        throw std::invalid_argument("composition too long for fitting");
    for (const auto& name : names) {
        PropertyMap map;
        map.name = name;
        if (name == "value at t0")
            map.warp = Warp::Identity;
        else if (name.rfind("t of transition", 0) == 0)
            map.warp = Warp::TimeIncrement;
        else if (name.rfind("value at transition", 0) == 0)
            map.warp = Warp::ValueIncrement;
        else if (name == "derivative at t0" || name == "derivative at last transition")
            map.warp = Warp::SignedMagnitude;
        else if (name == "asymptote")
            map.warp = Warp::SideOffset;
        else
            map.warp = Warp::Positive;
        spec.props.push_back(std::move(map));
    }
    return spec;
}

namespace {

template <typename S>
S eval_prop(const PropertyMap& map, const S& raw, const S& prev, int mono) {
    S val;
    if (map.mode == MapMode::Pinned) {
        val = S(map.pinned_value);
    } else if (map.mode == MapMode::Direct) {
        val = raw;
    } else {
        switch (map.warp) {
            case Warp::Identity: val = raw; break;
            case Warp::TimeIncrement: val = prev + S(kTimeFloor) + softplus(raw); break;
            case Warp::ValueIncrement:
            case Warp::SideOffset:
                val = prev + S(static_cast<double>(mono)) * (S(kValueFloor) + softplus(raw));
                break;
            case Warp::SignedMagnitude:
                val = S(static_cast<double>(mono)) * (S(kDerivFloor) + softplus(raw));
                break;
            case Warp::Positive: val = softplus(raw); break;
        }
    }
    if (map.clamped) {
        if (val < S(map.clamp_lo)) val = S(map.clamp_lo);
        if (val > S(map.clamp_hi)) val = S(map.clamp_hi);
    }
    return val;
}

}  // namespace

template <typename S>
AssembledRep<S> assemble_rep(const BranchSpec& spec, const S* raws) {
    const int k = spec.n_motifs();
    AssembledRep<S> rep;
    S v_prev = eval_prop(spec.props[0], raws[0], S(0.0), +1);
    rep.values[0] = v_prev;
    S t_prev = S(0.0);
    for (int j = 0; j + 1 < k; ++j) {
        const int idx = spec.idx_time(j);
        t_prev = eval_prop(spec.props[static_cast<size_t>(idx)], raws[idx], t_prev, +1);
        rep.times[static_cast<size_t>(j)] = t_prev;
    }
    for (int j = 0; j + 1 < k; ++j) {
        const int idx = spec.idx_value(j);
        const int m = spec.comp.motifs[static_cast<size_t>(j)].mono;
        v_prev = eval_prop(spec.props[static_cast<size_t>(idx)], raws[idx], v_prev, m);
        rep.values[static_cast<size_t>(j + 1)] = v_prev;
    }
    rep.d0 = eval_prop(spec.props[static_cast<size_t>(spec.idx_d0())], raws[spec.idx_d0()], S(0.0),
                       spec.comp.motifs.front().mono);
    const int idend = spec.idx_dend();
    if (idend >= 0)
        rep.dend = eval_prop(spec.props[static_cast<size_t>(idend)], raws[idend], S(0.0),
                             spec.comp.motifs.back().mono);
    else if (k == 1)
        rep.dend = rep.d0;
    else
        rep.dend = S(0.0);  // terminal motif starts at an extremum
    const int iterm = spec.idx_terminal();
    const auto& last = spec.comp.motifs.back();
    if (last.extent == Extent::Asymptote)
        rep.terminal = eval_prop(spec.props[static_cast<size_t>(iterm)], raws[iterm],
                                 rep.values[static_cast<size_t>(k - 1)], last.mono);
    else
        rep.terminal = eval_prop(spec.props[static_cast<size_t>(iterm)], raws[iterm], S(0.0), +1);
    return rep;
}

template <typename S>
std::array<S, kMaxProps> property_values(const BranchSpec& spec, const S* raws) {
    const auto rep = assemble_rep(spec, raws);
    const int k = spec.n_motifs();
    std::array<S, kMaxProps> out{};
    out[0] = rep.values[0];
    for (int j = 0; j + 1 < k; ++j)
        out[static_cast<size_t>(spec.idx_time(j))] = rep.times[static_cast<size_t>(j)];
    for (int j = 0; j + 1 < k; ++j)
        out[static_cast<size_t>(spec.idx_value(j))] = rep.values[static_cast<size_t>(j + 1)];
    out[static_cast<size_t>(spec.idx_d0())] = rep.d0;
    if (spec.idx_dend() >= 0) out[static_cast<size_t>(spec.idx_dend())] = rep.dend;
    out[static_cast<size_t>(spec.idx_terminal())] = rep.terminal;
    return out;
}

template AssembledRep<double> assemble_rep<double>(const BranchSpec&, const double*);
template AssembledRep<Dual<kMaxProps>> assemble_rep<Dual<kMaxProps>>(const BranchSpec&,
                                                                     const Dual<kMaxProps>*);
template std::array<double, kMaxProps> property_values<double>(const BranchSpec&, const double*);
template std::array<Dual<kMaxProps>, kMaxProps> property_values<Dual<kMaxProps>>(
    const BranchSpec&, const Dual<kMaxProps>*);

double raw_at(const PropertyMap& map, const std::array<double, kBasisSize>& basis) {
    double r = 0.0;
    for (int i = 0; i < kBasisSize; ++i)
        r += map.coeffs[static_cast<size_t>(i)] * basis[static_cast<size_t>(i)];
    return r;
}

semantic::SemanticRepresentation rep_at_dose(const BranchSpec& spec, double a) {
    const auto basis = property_basis().eval(a);
    std::array<double, kMaxProps> raws{};
    for (int p = 0; p < spec.n_props(); ++p)
        raws[static_cast<size_t>(p)] = raw_at(spec.props[static_cast<size_t>(p)], basis);
    const auto rep = assemble_rep<double>(spec, raws.data());
    semantic::SemanticRepresentation out;
    out.composition = spec.comp;
    out.t0 = 0.0;
    const int k = spec.n_motifs();
    for (int j = 0; j + 1 < k; ++j) out.transition_times.push_back(rep.times[static_cast<size_t>(j)]);
    for (int j = 0; j < k; ++j) out.values.push_back(rep.values[static_cast<size_t>(j)]);
    out.deriv_start = rep.d0;
    out.deriv_end = rep.dend;
    out.terminal = rep.terminal;
    return out;
}

RenderedCurve<double> curve_at_dose(const BranchSpec& spec, double a) {
    const auto basis = property_basis().eval(a);
    std::array<double, kMaxProps> raws{};
    for (int p = 0; p < spec.n_props(); ++p)
        raws[static_cast<size_t>(p)] = raw_at(spec.props[static_cast<size_t>(p)], basis);
    const auto rep = assemble_rep<double>(spec, raws.data());
    return semantic::render_curve<double>(spec.comp, 0.0, rep.times.data(), rep.values.data(),
                                          rep.d0, rep.dend, rep.terminal);
}

// ---------------------------------------------------------------------------
// BranchObjective

BranchObjective::BranchObjective(const BranchSpec& spec, const std::vector<FitPoint>& pts,
                                 Interval interval, double rough_weight, double term_weight,
                                 int rough_grid)
    : spec_(spec), rough_weight_(rough_weight), term_weight_(term_weight) {
    std::map<double, DoseGroup> by_dose;
    for (const auto& pt : pts) {
        if (!interval.contains(pt.dose)) continue;
        auto& g = by_dose[pt.dose];
        g.dose = pt.dose;
        (pt.train ? g.train_pts : g.val_pts).emplace_back(pt.time, pt.tau);
    }
    for (auto& [dose, g] : by_dose) {
        g.basis = property_basis().eval(dose);
        n_train_ += static_cast<int>(g.train_pts.size());
        groups_.push_back(std::move(g));
    }
    for (int i = 0; i < rough_grid; ++i) {
        const double a = interval.lo + (interval.hi - interval.lo) * (i + 0.5) / rough_grid;
        grid_basis_.push_back(property_basis().eval(a));
    }
    for (int p = 0; p < spec_.n_props(); ++p)
        if (!spec_.props[static_cast<size_t>(p)].frozen) free_props_.push_back(p);
    n_free_ = static_cast<int>(free_props_.size());
}

std::vector<std::array<double, kBasisSize>> BranchObjective::materialize(
    const std::vector<double>& x) const {
    std::vector<std::array<double, kBasisSize>> coeffs(static_cast<size_t>(n_free_));
    for (int f = 0; f < n_free_; ++f)
        precond().to_c(&x[static_cast<size_t>(6 * f)], coeffs[static_cast<size_t>(f)].data());
    return coeffs;
}

template <typename S>
void BranchObjective::raws_at(const std::array<double, kBasisSize>& basis,
                              const std::vector<std::array<double, kBasisSize>>& coeffs,
                              S* raws) const {
    for (int p = 0; p < spec_.n_props(); ++p)
        raws[p] = S(raw_at(spec_.props[static_cast<size_t>(p)], basis));
    for (int f = 0; f < n_free_; ++f) {
        const int p = free_props_[static_cast<size_t>(f)];
        double r = 0.0;
        for (int i = 0; i < kBasisSize; ++i)
            r += coeffs[static_cast<size_t>(f)][static_cast<size_t>(i)] * basis[static_cast<size_t>(i)];
        if constexpr (std::is_same_v<S, Dual<kMaxProps>>) {
            raws[p] = Dual<kMaxProps>::seed(r, p);
        } else {
            raws[p] = r;
        }
    }
}

std::vector<double> BranchObjective::pack(const BranchSpec& spec) const {
    std::vector<double> x(static_cast<size_t>(dim()), 0.0);
    for (int f = 0; f < n_free_; ++f) {
        const int p = free_props_[static_cast<size_t>(f)];
        precond().to_y(spec.props[static_cast<size_t>(p)].coeffs.data(),
                       &x[static_cast<size_t>(6 * f)]);
    }
    return x;
}

void BranchObjective::unpack(const std::vector<double>& x, BranchSpec& spec) const {
    for (int f = 0; f < n_free_; ++f) {
        const int p = free_props_[static_cast<size_t>(f)];
        precond().to_c(&x[static_cast<size_t>(6 * f)],
                       spec.props[static_cast<size_t>(p)].coeffs.data());
    }
}

double BranchObjective::eval(const std::vector<double>& x, std::vector<double>& grad) const {
    using D = Dual<kMaxProps>;
    const int P = spec_.n_props();
    grad.assign(static_cast<size_t>(dim()), 0.0);
    double total = 0.0;
    const auto coeffs = materialize(x);

    std::array<D, kMaxProps> raws;
    for (const auto& g : groups_) {
        if (g.train_pts.empty()) continue;
        raws_at(g.basis, coeffs, raws.data());
        const auto rep = assemble_rep<D>(spec_, raws.data());
        const auto curve = semantic::render_curve<D>(spec_.comp, 0.0, rep.times.data(),
                                                     rep.values.data(), rep.d0, rep.dend,
                                                     rep.terminal);
        D acc(0.0);
        for (const auto& [t, tau] : g.train_pts) {
            D r = curve.eval(t) - D(tau);
            acc += r * r;
        }
        total += acc.v;
        for (int f = 0; f < n_free_; ++f) {
            const int p = free_props_[static_cast<size_t>(f)];
            const double gp = acc.d[static_cast<size_t>(p)];
            if (gp == 0.0) continue;
            for (int i = 0; i < kBasisSize; ++i)
                grad[static_cast<size_t>(6 * f + i)] += gp * g.basis[static_cast<size_t>(i)];
        }
    }
    const double inv_n = n_train_ > 0 ? 1.0 / n_train_ : 0.0;
    total *= inv_n;
    for (auto& v : grad) v *= inv_n;

    // Penalties over the dose grid: curvature roughness of every property
    // value curve (weight 0.05) plus the tuned squared derivative at the
    // last transition.
    const int G = static_cast<int>(grid_basis_.size());
    if (G >= 3 && (rough_weight_ > 0.0 || term_weight_ > 0.0)) {
        std::vector<std::array<D, kMaxProps>> vals(static_cast<size_t>(G));
        for (int gi = 0; gi < G; ++gi) {
            raws_at(grid_basis_[static_cast<size_t>(gi)], coeffs, raws.data());
            vals[static_cast<size_t>(gi)] = property_values<D>(spec_, raws.data());
        }
        std::vector<std::array<double, kMaxProps>> dpen(static_cast<size_t>(G));
        for (auto& row : dpen) row.fill(0.0);

        const double rough_norm = 1.0 / (P * (G - 2));
        double rough_val = 0.0;
        for (int p = 0; p < P; ++p) {
            for (int gi = 1; gi + 1 < G; ++gi) {
                const double s = vals[static_cast<size_t>(gi - 1)][static_cast<size_t>(p)].v -
                                 2.0 * vals[static_cast<size_t>(gi)][static_cast<size_t>(p)].v +
                                 vals[static_cast<size_t>(gi + 1)][static_cast<size_t>(p)].v;
                rough_val += s * s * rough_norm;
                const double w = 2.0 * s * rough_norm * rough_weight_;
                for (int off = -1; off <= 1; ++off) {
                    const double coef = off == 0 ? -2.0 : 1.0;
                    const auto& vd = vals[static_cast<size_t>(gi + off)][static_cast<size_t>(p)].d;
                    auto& slot = dpen[static_cast<size_t>(gi + off)];
                    for (int q = 0; q < P; ++q)
                        slot[static_cast<size_t>(q)] += w * coef * vd[static_cast<size_t>(q)];
                }
            }
        }

        const int pd = spec_.idx_dend() >= 0
                           ? spec_.idx_dend()
                           : (spec_.n_motifs() == 1 ? spec_.idx_d0() : -1);
        double term_val = 0.0;
        if (pd >= 0 && term_weight_ > 0.0) {
            const double tnorm = 1.0 / G;
            for (int gi = 0; gi < G; ++gi) {
                const auto& dv = vals[static_cast<size_t>(gi)][static_cast<size_t>(pd)];
                term_val += dv.v * dv.v * tnorm;
                const double w = 2.0 * dv.v * tnorm * term_weight_;
                auto& slot = dpen[static_cast<size_t>(gi)];
                for (int q = 0; q < P; ++q)
                    slot[static_cast<size_t>(q)] += w * dv.d[static_cast<size_t>(q)];
            }
        }
        total += rough_weight_ * rough_val + term_weight_ * term_val;

        for (int gi = 0; gi < G; ++gi) {
            const auto& basis = grid_basis_[static_cast<size_t>(gi)];
            for (int f = 0; f < n_free_; ++f) {
                const int p = free_props_[static_cast<size_t>(f)];
                const double gp = dpen[static_cast<size_t>(gi)][static_cast<size_t>(p)];
                if (gp == 0.0) continue;
                for (int i = 0; i < kBasisSize; ++i)
                    grad[static_cast<size_t>(6 * f + i)] += gp * basis[static_cast<size_t>(i)];
            }
        }
    }

    // Accumulated in coefficient space; convert each block to the
    // preconditioned coordinates the optimizer sees.
    for (int f = 0; f < n_free_; ++f) {
        double gy[kBasisSize];
        precond().grad_to_y(&grad[static_cast<size_t>(6 * f)], gy);
        for (int i = 0; i < kBasisSize; ++i) grad[static_cast<size_t>(6 * f + i)] = gy[i];
    }
    return total;
}

namespace {

// Value-only objective at explicit coefficients (no duals), shared by the
// Levenberg-Marquardt accept/reject step.
double objective_value(const BranchSpec& spec, const std::vector<int>& free_props,
                       const std::vector<std::array<double, kBasisSize>>& coeffs,
                       const auto& groups, const auto& grid_basis, int n_train,
                       double rough_weight, double term_weight) {
    const int P = spec.n_props();
    std::array<double, kMaxProps> raws;
    auto fill_raws = [&](const std::array<double, kBasisSize>& basis) {
        for (int p = 0; p < P; ++p) raws[static_cast<size_t>(p)] = raw_at(spec.props[static_cast<size_t>(p)], basis);
        for (size_t f = 0; f < free_props.size(); ++f) {
            double r = 0.0;
            for (int i = 0; i < kBasisSize; ++i) r += coeffs[f][static_cast<size_t>(i)] * basis[static_cast<size_t>(i)];
            raws[static_cast<size_t>(free_props[f])] = r;
        }
    };
    double total = 0.0;
    for (const auto& g : groups) {
        if (g.train_pts.empty()) continue;
        fill_raws(g.basis);
        const auto rep = assemble_rep<double>(spec, raws.data());
        const auto curve = semantic::render_curve<double>(spec.comp, 0.0, rep.times.data(),
                                                          rep.values.data(), rep.d0, rep.dend,
                                                          rep.terminal);
        for (const auto& [t, tau] : g.train_pts) {
            const double r = curve.eval(t) - tau;
            total += r * r;
        }
    }
    total /= std::max(1, n_train);

    const int G = static_cast<int>(grid_basis.size());
    if (G >= 3) {
        std::vector<std::array<double, kMaxProps>> vals(static_cast<size_t>(G));
        for (int gi = 0; gi < G; ++gi) {
            fill_raws(grid_basis[static_cast<size_t>(gi)]);
            vals[static_cast<size_t>(gi)] = property_values<double>(spec, raws.data());
        }
        const double rough_norm = 1.0 / (P * (G - 2));
        double rough_val = 0.0;
        for (int p = 0; p < P; ++p)
            for (int gi = 1; gi + 1 < G; ++gi) {
                const double s = vals[static_cast<size_t>(gi - 1)][static_cast<size_t>(p)] -
                                 2.0 * vals[static_cast<size_t>(gi)][static_cast<size_t>(p)] +
                                 vals[static_cast<size_t>(gi + 1)][static_cast<size_t>(p)];
                rough_val += s * s * rough_norm;
            }
        const int pd = spec.idx_dend() >= 0 ? spec.idx_dend()
                                            : (spec.n_motifs() == 1 ? spec.idx_d0() : -1);
        double term_val = 0.0;
        if (pd >= 0 && term_weight > 0.0)
            for (int gi = 0; gi < G; ++gi) {
                const double v = vals[static_cast<size_t>(gi)][static_cast<size_t>(pd)];
                term_val += v * v / G;
            }
        total += rough_weight * rough_val + term_weight * term_val;
    }
    return total;
}

}  // namespace

BranchObjective::LmResult BranchObjective::lm_minimize(std::vector<double> x0, int max_iter,
                                                       double damping0) const {
    using D10 = Dual<kMaxProps>;
    using Eigen::MatrixXd;
    using Eigen::VectorXd;
    const int D = dim();
    const int P = spec_.n_props();
    LmResult res;
    if (D == 0) {
        res.x = std::move(x0);
        res.f = objective_value(spec_, free_props_, {}, groups_, grid_basis_, n_train_,
                                rough_weight_, term_weight_);
        return res;
    }

    auto coeffs = materialize(x0);
    double f = objective_value(spec_, free_props_, coeffs, groups_, grid_basis_, n_train_,
                               rough_weight_, term_weight_);
    if (!std::isfinite(f)) {
        res.x = std::move(x0);
        res.f = f;
        res.diverged = true;
        return res;
    }

    double lambda = damping0;
    int slow = 0;
    std::array<D10, kMaxProps> raws;
    VectorXd row(D);

    for (int iter = 0; iter < max_iter; ++iter) {
        MatrixXd JtJ = MatrixXd::Zero(D, D);
        VectorXd Jtr = VectorXd::Zero(D);

        const double wdata = 1.0 / std::max(1, n_train_);
        for (const auto& g : groups_) {
            if (g.train_pts.empty()) continue;
            for (int p = 0; p < P; ++p)
                raws[static_cast<size_t>(p)] = D10(raw_at(spec_.props[static_cast<size_t>(p)], g.basis));
            for (int f2 = 0; f2 < n_free_; ++f2) {
                const int p = free_props_[static_cast<size_t>(f2)];
                double r = 0.0;
                for (int i = 0; i < kBasisSize; ++i)
                    r += coeffs[static_cast<size_t>(f2)][static_cast<size_t>(i)] * g.basis[static_cast<size_t>(i)];
                raws[static_cast<size_t>(p)] = D10::seed(r, p);
            }
            const auto rep = assemble_rep<D10>(spec_, raws.data());
            const auto curve = semantic::render_curve<D10>(spec_.comp, 0.0, rep.times.data(),
                                                           rep.values.data(), rep.d0, rep.dend,
                                                           rep.terminal);
            for (const auto& [t, tau] : g.train_pts) {
                const D10 r = curve.eval(t) - D10(tau);
                for (int f2 = 0; f2 < n_free_; ++f2) {
                    const double gp = r.d[static_cast<size_t>(free_props_[static_cast<size_t>(f2)])];
                    for (int i = 0; i < kBasisSize; ++i)
                        row(6 * f2 + i) = gp * g.basis[static_cast<size_t>(i)];
                }
                JtJ.selfadjointView<Eigen::Lower>().rankUpdate(row, wdata);
                Jtr += wdata * r.v * row;
            }
        }

        const int G = static_cast<int>(grid_basis_.size());
        if (G >= 3) {
            std::vector<std::array<D10, kMaxProps>> vals(static_cast<size_t>(G));
            for (int gi = 0; gi < G; ++gi) {
                const auto& basis = grid_basis_[static_cast<size_t>(gi)];
                for (int p = 0; p < P; ++p)
                    raws[static_cast<size_t>(p)] = D10(raw_at(spec_.props[static_cast<size_t>(p)], basis));
                for (int f2 = 0; f2 < n_free_; ++f2) {
                    const int p = free_props_[static_cast<size_t>(f2)];
                    double r = 0.0;
                    for (int i = 0; i < kBasisSize; ++i)
                        r += coeffs[static_cast<size_t>(f2)][static_cast<size_t>(i)] * basis[static_cast<size_t>(i)];
                    raws[static_cast<size_t>(p)] = D10::seed(r, p);
                }
                vals[static_cast<size_t>(gi)] = property_values<D10>(spec_, raws.data());
            }
            const double rough_norm = 1.0 / (P * (G - 2));
            if (rough_weight_ > 0.0) {
                for (int p = 0; p < P; ++p)
                    for (int gi = 1; gi + 1 < G; ++gi) {
                        double rv = 0.0;
                        row.setZero();
                        for (int off = -1; off <= 1; ++off) {
                            const double coef = off == 0 ? -2.0 : 1.0;
                            const auto& v = vals[static_cast<size_t>(gi + off)][static_cast<size_t>(p)];
                            const auto& basis = grid_basis_[static_cast<size_t>(gi + off)];
                            rv += coef * v.v;
                            for (int f2 = 0; f2 < n_free_; ++f2) {
                                const double gp =
                                    v.d[static_cast<size_t>(free_props_[static_cast<size_t>(f2)])];
                                if (gp == 0.0) continue;
                                for (int i = 0; i < kBasisSize; ++i)
                                    row(6 * f2 + i) += coef * gp * basis[static_cast<size_t>(i)];
                            }
                        }
                        const double w = rough_weight_ * rough_norm;
                        JtJ.selfadjointView<Eigen::Lower>().rankUpdate(row, w);
                        Jtr += w * rv * row;
                    }
            }
            const int pd = spec_.idx_dend() >= 0
                               ? spec_.idx_dend()
                               : (spec_.n_motifs() == 1 ? spec_.idx_d0() : -1);
            if (pd >= 0 && term_weight_ > 0.0) {
                for (int gi = 0; gi < G; ++gi) {
                    const auto& v = vals[static_cast<size_t>(gi)][static_cast<size_t>(pd)];
                    const auto& basis = grid_basis_[static_cast<size_t>(gi)];
                    row.setZero();
                    for (int f2 = 0; f2 < n_free_; ++f2) {
                        const double gp = v.d[static_cast<size_t>(free_props_[static_cast<size_t>(f2)])];
                        if (gp == 0.0) continue;
                        for (int i = 0; i < kBasisSize; ++i)
                            row(6 * f2 + i) = gp * basis[static_cast<size_t>(i)];
                    }
                    const double w = term_weight_ / G;
                    JtJ.selfadjointView<Eigen::Lower>().rankUpdate(row, w);
                    Jtr += w * v.v * row;
                }
            }
        }

        JtJ.triangularView<Eigen::StrictlyUpper>() = JtJ.transpose();
        if (Jtr.lpNorm<Eigen::Infinity>() < 1e-14) break;

        bool accepted = false;
        for (int bump = 0; bump < 25; ++bump) {
            MatrixXd A = JtJ;
            for (int i = 0; i < D; ++i) A(i, i) += lambda * std::max(JtJ(i, i), 1e-12);
            const VectorXd delta = A.ldlt().solve(-Jtr);
            auto trial = coeffs;
            for (int f2 = 0; f2 < n_free_; ++f2)
                for (int i = 0; i < kBasisSize; ++i)
                    trial[static_cast<size_t>(f2)][static_cast<size_t>(i)] += delta(6 * f2 + i);
            const double f_new = objective_value(spec_, free_props_, trial, groups_, grid_basis_,
                                                 n_train_, rough_weight_, term_weight_);
            if (std::isfinite(f_new) && f_new < f) {
                slow = (f - f_new) <= 1e-12 * std::max(f, 1e-15) ? slow + 1 : 0;
                coeffs = std::move(trial);
                f = f_new;
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                break;
            }
            lambda *= 2.5;
        }
        res.iterations = iter + 1;
        if (!accepted || slow >= 2) break;
    }

    res.x.assign(static_cast<size_t>(D), 0.0);
    for (int f2 = 0; f2 < n_free_; ++f2)
        precond().to_y(coeffs[static_cast<size_t>(f2)].data(), &res.x[static_cast<size_t>(6 * f2)]);
    res.f = f;
    return res;
}

double BranchObjective::mse(const std::vector<double>& x, bool train_points) const {
    std::array<double, kMaxProps> raws;
    double sse = 0.0;
    int n = 0;
    const auto coeffs = materialize(x);
    for (const auto& g : groups_) {
        const auto& pts = train_points ? g.train_pts : g.val_pts;
        if (pts.empty()) continue;
        raws_at(g.basis, coeffs, raws.data());
        const auto rep = assemble_rep<double>(spec_, raws.data());
        const auto curve = semantic::render_curve<double>(spec_.comp, 0.0, rep.times.data(),
                                                          rep.values.data(), rep.d0, rep.dend,
                                                          rep.terminal);
        for (const auto& [t, tau] : pts) {
            const double r = curve.eval(t) - tau;
            sse += r * r;
            ++n;
        }
    }
    return n > 0 ? sse / n : std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// Deterministic initialisation: the least-squares line through (t, tau) bent
// into the composition's shape; transition times equally spaced on [0, 0.8],
// values from local bin means.

namespace {

void init_spec_coeffs(BranchSpec& spec, const std::vector<FitPoint>& pts, Interval interval) {
    const int k = spec.n_motifs();
    double st = 0.0, stt = 0.0, sy = 0.0, sty = 0.0, syy = 0.0;
    int n = 0;
    for (const auto& pt : pts) {
        if (!interval.contains(pt.dose) || !pt.train) continue;
        st += pt.time;
        stt += pt.time * pt.time;
        sy += pt.tau;
        sty += pt.time * pt.tau;
        syy += pt.tau * pt.tau;
        ++n;
    }
    const double denom = n > 0 ? n * stt - st * st : 0.0;
    const double beta = std::fabs(denom) > 1e-12 ? (n * sty - st * sy) / denom : 0.0;
    const double alpha = n > 0 ? (sy - beta * st) / n : 0.0;
    const double mean = n > 0 ? sy / n : 0.0;
    const double sd = n > 0 ? std::sqrt(std::max(1e-12, syy / n - mean * mean)) : 1.0;
    const double s_y = std::max(1e-3, sd);

    std::vector<double> T(static_cast<size_t>(k), 0.0);
    for (int j = 1; j < k; ++j) T[static_cast<size_t>(j)] = 0.8 * j / k;
    std::vector<double> bmean(static_cast<size_t>(k), 0.0);
    for (int j = 0; j < k; ++j) {
        double acc = 0.0;
        int cnt = 0;
        const double w = 0.4 / k;
        for (const auto& pt : pts) {
            if (!interval.contains(pt.dose) || !pt.train) continue;
            if (std::fabs(pt.time - T[static_cast<size_t>(j)]) <= w) {
                acc += pt.tau;
                ++cnt;
            }
        }
        bmean[static_cast<size_t>(j)] =
            cnt > 0 ? acc / cnt : alpha + beta * T[static_cast<size_t>(j)];
    }

    auto set_const = [](PropertyMap& map, double raw) {
        map.coeffs.fill(0.0);
        map.coeffs[0] = raw;
    };

    if (spec.props[0].mode == MapMode::Warped) set_const(spec.props[0], bmean[0]);
    double v_prev = spec.props[0].mode == MapMode::Pinned ? spec.props[0].pinned_value : bmean[0];
    for (int j = 0; j + 1 < k; ++j) {
        set_const(spec.props[static_cast<size_t>(spec.idx_time(j))],
                  softplus_inv(std::max(0.8 / k - kTimeFloor, 1e-4)));
        const int m = spec.comp.motifs[static_cast<size_t>(j)].mono;
        const double incr = std::max(m * (bmean[static_cast<size_t>(j + 1)] - v_prev), 0.05 * s_y);
        set_const(spec.props[static_cast<size_t>(spec.idx_value(j))], softplus_inv(incr));
        v_prev += m * (kValueFloor + incr);
    }
    set_const(spec.props[static_cast<size_t>(spec.idx_d0())],
              softplus_inv(std::max(std::fabs(beta), 0.5 * s_y)));
    if (spec.idx_dend() >= 0)
        set_const(spec.props[static_cast<size_t>(spec.idx_dend())], softplus_inv(0.1 * s_y));

    const auto& last = spec.comp.motifs.back();
    if (last.extent == Extent::Asymptote) {
        double acc = 0.0;
        int cnt = 0;
        for (const auto& pt : pts) {
            if (!interval.contains(pt.dose) || !pt.train) continue;
            if (pt.time >= 0.8) {
                acc += pt.tau;
                ++cnt;
            }
        }
        const double tail = cnt > 0 ? acc / cnt : alpha + beta;
        const double off = std::max(last.mono * (tail - v_prev), 0.05 * s_y);
        set_const(spec.props[static_cast<size_t>(spec.idx_terminal())], softplus_inv(off));
    } else {
        set_const(spec.props[static_cast<size_t>(spec.idx_terminal())], softplus_inv(0.1 * s_y));
    }
}

}  // namespace

FittedBranch fit_branch(const std::vector<FitPoint>& pts, Interval interval,
                        const Composition& comp, const FitConfig& cfg,
                        const std::vector<std::pair<std::string, double>>& pinned) {
    FittedBranch out;
    out.interval = interval;

    int n_inside = 0;
    for (const auto& pt : pts) n_inside += interval.contains(pt.dose) ? 1 : 0;
    if (n_inside < cfg.min_points) {
        out.diagnostic = "only " + std::to_string(n_inside) + " surrogate points in branch";
        return out;
    }

    BranchSpec spec = make_branch_spec(comp);
    for (const auto& [name, value] : pinned) {
        bool found = false;
        for (auto& map : spec.props)
            if (map.name == name) {
                map.mode = MapMode::Pinned;
                map.pinned_value = value;
                map.frozen = true;
                found = true;
            }
        if (!found)
            throw std::invalid_argument("pinned property '" + name + "' not in composition");
    }
    init_spec_coeffs(spec, pts, interval);

    struct Trial {
        BranchSpec spec;
        double train = 0.0, val = std::numeric_limits<double>::infinity();
        double lr = 0.0, wterm = 0.0;
        bool ok = false;
        std::string note;
    };
    std::vector<Trial> trials(static_cast<size_t>(cfg.trials));

    parallel_for(cfg.trials, [&](size_t t) {
        Rng rng(derive_seed(cfg.seed, "fit_trial", t));
        Trial& tr = trials[t];
        tr.lr = rng.log_uniform(cfg.lr_lo, cfg.lr_hi);
        tr.wterm = rng.log_uniform(cfg.term_weight_lo, cfg.term_weight_hi);
        BranchObjective obj(spec, pts, interval, cfg.rough_weight, tr.wterm, cfg.rough_grid);
        std::vector<double> solution;
        bool diverged = false;
        double final_f = 0.0;
        if (cfg.solver == "lbfgs") {
            LbfgsOptions lopt;
            lopt.max_iter = cfg.max_iter;
            lopt.initial_step = tr.lr;
            const auto res = lbfgs_minimize(
                [&obj](const std::vector<double>& x, std::vector<double>& g) {
                    return obj.eval(x, g);
                },
                obj.pack(spec), lopt);
            solution = res.x;
            diverged = res.diverged;
            final_f = res.f;
        } else {
            // The tuned step scale sets the initial damping: large steps
            // start nearly Gauss-Newton, small ones heavily damped.
            const auto res = obj.lm_minimize(obj.pack(spec), cfg.max_iter, 1e-3 / tr.lr);
            solution = res.x;
            diverged = res.diverged;
            final_f = res.f;
        }
        if (diverged || !std::isfinite(final_f)) {
            tr.note = "optimizer diverged";
            return;
        }
        tr.spec = spec;
        obj.unpack(solution, tr.spec);

        // Validity spot-check over the branch's dose grid.
        for (int g = 0; g < cfg.validity_grid; ++g) {
            const double a =
                interval.lo + (interval.hi - interval.lo) * (g + 0.5) / cfg.validity_grid;
            const auto rep = rep_at_dose(tr.spec, a);
            const auto viol = semantic::validate_semantics(rep, 0.0, 10.0);
            if (!viol.empty()) {
                tr.note = "invalid at dose " + std::to_string(a) + ": " + viol[0].code;
                return;
            }
        }
        tr.train = obj.mse(solution, true);
        const double val = obj.mse(solution, false);
        tr.val = std::isfinite(val) ? val : tr.train;
        tr.ok = std::isfinite(tr.train);
    });

    int winner = -1;
    for (int t = 0; t < cfg.trials; ++t) {
        if (!trials[static_cast<size_t>(t)].ok) continue;
        if (winner < 0 ||
            trials[static_cast<size_t>(t)].val < trials[static_cast<size_t>(winner)].val)
            winner = t;
    }
    if (winner < 0) {
        out.diagnostic = "all trials failed";
        for (const auto& tr : trials)
            if (!tr.note.empty()) out.diagnostic += "; " + tr.note;
        return out;
    }
    const Trial& best = trials[static_cast<size_t>(winner)];
    out.spec = best.spec;
    out.train_loss = best.train;
    out.val_loss = best.val;
    out.learning_rate = best.lr;
    out.term_weight = best.wterm;
    out.trial = winner;
    out.feasible = true;
    return out;
}

// ---------------------------------------------------------------------------
// Composition-map search.

int SemanticModel::total_motifs() const {
    int n = 0;
    for (const auto& b : branches) n += b.spec.n_motifs();
    return n;
}

const FittedBranch& SemanticModel::branch_for(double a) const {
    for (const auto& b : branches)
        if (b.interval.contains(a)) return b;
    return a <= branches.front().interval.lo ? branches.front() : branches.back();
}

namespace {

double dose_quantile(std::vector<double> doses, double q) {
    std::sort(doses.begin(), doses.end());
    const double pos = q * static_cast<double>(doses.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, doses.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return doses[lo] * (1.0 - frac) + doses[hi] * frac;
}

struct CandidateConfig {
    std::vector<FittedBranch> branches;
    double val_sse = 0.0;
    int val_count = 0;
    int total_motifs = 0;
    bool feasible = false;

    double val_loss() const {
        return val_count > 0 ? val_sse / val_count : std::numeric_limits<double>::infinity();
    }
};

}  // namespace

SemanticModel fit_composition_map(const surrogate::SurrogateSet& surrogates,
                                  const std::vector<Composition>& library, const FitConfig& cfg,
                                  int max_branches,
                                  const std::vector<std::pair<std::string, double>>& pinned) {
    if (library.empty()) throw std::invalid_argument("empty composition library");
    if (surrogates.points.empty()) throw std::invalid_argument("empty surrogate set");
    {
        std::set<double> distinct;
        for (const auto& p : surrogates.points) distinct.insert(p.dose);
        if (distinct.size() < 2)
            throw std::invalid_argument("surrogates must span at least 2 distinct doses");
    }

    std::vector<int64_t> ids;
    for (const auto& p : surrogates.points) ids.push_back(p.patient_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    const auto sp =
        data::split_ids(ids, cfg.split_fraction, derive_seed(cfg.seed, "surrogate_split"));

    std::vector<FitPoint> pts;
    std::vector<double> doses;
    pts.reserve(surrogates.points.size());
    for (const auto& p : surrogates.points) {
        pts.push_back({p.dose, p.time, p.tau_tilde, sp.in_train(p.patient_id)});
        doses.push_back(p.dose);
    }

    const Interval full{0.0, 1.0};
    const int L = static_cast<int>(library.size());

    // Stage 1: every library composition on the full dose range.
    std::vector<FittedBranch> stage1(static_cast<size_t>(L));
    parallel_for(L, [&](size_t c) {
        FitConfig ccfg = cfg;
        ccfg.seed = derive_seed(cfg.seed, "candidate", c);
        stage1[c] = fit_branch(pts, full, library[c], ccfg, pinned);
    });

    std::vector<int> rank;
    for (int c = 0; c < L; ++c)
        if (stage1[static_cast<size_t>(c)].feasible) rank.push_back(c);
    if (rank.empty()) {
        std::string diag = "no feasible composition candidate:";
        for (int c = 0; c < L; ++c)
            diag += "\n  " + library[static_cast<size_t>(c)].label() + ": " +
                    stage1[static_cast<size_t>(c)].diagnostic;
        throw std::runtime_error(diag);
    }
    std::stable_sort(rank.begin(), rank.end(), [&](int a, int b) {
        return stage1[static_cast<size_t>(a)].val_loss < stage1[static_cast<size_t>(b)].val_loss;
    });

    int n_val_total = 0;
    for (const auto& pt : pts) n_val_total += pt.train ? 0 : 1;

    std::vector<CandidateConfig> configs;
    {
        CandidateConfig single;
        single.branches = {stage1[static_cast<size_t>(rank[0])]};
        single.val_count = n_val_total;
        single.val_sse = single.branches[0].val_loss * n_val_total;
        single.total_motifs = single.branches[0].spec.n_motifs();
        single.feasible = true;
        configs.push_back(std::move(single));
    }

    const std::vector<double> quantiles{dose_quantile(doses, 1.0 / 3.0),
                                        dose_quantile(doses, 1.0 / 2.0),
                                        dose_quantile(doses, 2.0 / 3.0)};
    const int top_k = std::min<int>(cfg.top_k, static_cast<int>(rank.size()));

    auto fit_interval_best = [&](Interval iv, uint64_t salt) -> FittedBranch {
        std::vector<FittedBranch> fits(static_cast<size_t>(top_k));
        parallel_for(top_k, [&](size_t k) {
            FitConfig ccfg = cfg;
            ccfg.seed = derive_seed(cfg.seed, "refit", salt * 64 + k);
            fits[k] = fit_branch(pts, iv, library[static_cast<size_t>(rank[static_cast<size_t>(k)])],
                                 ccfg, pinned);
        });
        int best = -1;
        for (int k = 0; k < top_k; ++k) {
            if (!fits[static_cast<size_t>(k)].feasible) continue;
            if (best < 0 ||
                fits[static_cast<size_t>(k)].val_loss < fits[static_cast<size_t>(best)].val_loss)
                best = k;
        }
        if (best < 0) {
            FittedBranch none;
            none.interval = iv;
            none.diagnostic = "no feasible composition on sub-interval";
            return none;
        }
        return fits[static_cast<size_t>(best)];
    };

    double best_fewer = configs[0].val_loss();
    for (int nb = 2; nb <= std::min(max_branches, 3); ++nb) {
        std::vector<std::vector<double>> combos;
        if (nb == 2) {
            for (double q : quantiles) combos.push_back({q});
        } else {
            combos = {{quantiles[0], quantiles[1]},
                      {quantiles[0], quantiles[2]},
                      {quantiles[1], quantiles[2]}};
        }
        double best_this = std::numeric_limits<double>::infinity();
        uint64_t salt = static_cast<uint64_t>(nb) * 1000;
        for (const auto& cuts : combos) {
            ++salt;
            bool increasing = true;
            for (size_t i = 1; i < cuts.size(); ++i)
                if (cuts[i] <= cuts[i - 1]) increasing = false;
            if (!increasing) continue;

            CandidateConfig config;
            config.feasible = true;
            std::vector<Interval> ivs;
            double lo = 0.0;
            for (double c : cuts) {
                ivs.push_back({lo, c});
                lo = c;
            }
            ivs.push_back({lo, 1.0});
            for (size_t i = 0; i < ivs.size(); ++i) {
                auto br = fit_interval_best(ivs[i], salt * 8 + i);
                if (!br.feasible) {
                    config.feasible = false;
                    break;
                }
                int n_val = 0;
                for (const auto& pt : pts)
                    if (!pt.train && ivs[i].contains(pt.dose)) ++n_val;
                config.val_sse += br.val_loss * n_val;
                config.val_count += n_val;
                config.total_motifs += br.spec.n_motifs();
                config.branches.push_back(std::move(br));
            }
            if (!config.feasible || config.val_count == 0) continue;
            if (config.val_loss() <= (1.0 - cfg.improve_frac) * best_fewer) {
                best_this = std::min(best_this, config.val_loss());
                configs.push_back(std::move(config));
            }
        }
        if (std::isfinite(best_this)) best_fewer = std::min(best_fewer, best_this);
    }

    double best_val = std::numeric_limits<double>::infinity();
    for (const auto& c : configs) best_val = std::min(best_val, c.val_loss());
    int chosen = -1;
    for (int i = 0; i < static_cast<int>(configs.size()); ++i) {
        const auto& c = configs[static_cast<size_t>(i)];
        if (c.val_loss() > best_val * (1.0 + cfg.improve_frac)) continue;
        if (chosen < 0) {
            chosen = i;
            continue;
        }
        const auto& cur = configs[static_cast<size_t>(chosen)];
        const auto key = [](const CandidateConfig& x) {
            return std::make_tuple(x.total_motifs, static_cast<int>(x.branches.size()));
        };
        if (key(c) < key(cur)) chosen = i;
    }

    SemanticModel model;
    model.branches = configs[static_cast<size_t>(chosen)].branches;
    model.val_loss = configs[static_cast<size_t>(chosen)].val_loss();
    for (int c : rank)
        model.candidate_val_losses.emplace_back(library[static_cast<size_t>(c)].label(),
                                                stage1[static_cast<size_t>(c)].val_loss);
    std::string cfg_str = "rough=" + std::to_string(cfg.rough_weight) +
                          ";trials=" + std::to_string(cfg.trials) +
                          ";seed=" + std::to_string(cfg.seed) +
                          ";max_branches=" + std::to_string(max_branches);
    for (const auto& c : library) cfg_str += ";" + c.label();
    for (const auto& [name, v] : pinned) cfg_str += ";pin:" + name + "=" + std::to_string(v);
    model.config_hash = fnv1a(cfg_str);
    return model;
}

double predict_tau(const SemanticModel& model, double a, double t) {
    if (a < 0.0 || a > 1.0) throw std::out_of_range("dose outside [0, 1]");
    if (a == 0.0) return 0.0;
    return predict_curve(model, a).eval(t);
}

RenderedCurve<double> predict_curve(const SemanticModel& model, double a) {
    if (model.branches.empty()) throw std::logic_error("model has no branches");
    return curve_at_dose(model.branch_for(a).spec, a);
}

std::vector<PropertyCurveTable> export_property_curves(const SemanticModel& model, int n_grid) {
    std::vector<PropertyCurveTable> tables;
    for (int b = 0; b < model.n_branches(); ++b) {
        const auto& br = model.branches[static_cast<size_t>(b)];
        PropertyCurveTable tab;
        tab.branch = b;
        tab.interval = br.interval;
        tab.composition = br.spec.comp.label();
        for (const auto& p : br.spec.props) tab.names.push_back(p.name);
        for (int g = 0; g < n_grid; ++g) {
            const double a =
                br.interval.lo + (br.interval.hi - br.interval.lo) * g / std::max(1, n_grid - 1);
            tab.doses.push_back(a);
            const auto basis = property_basis().eval(a);
            std::array<double, kMaxProps> raws{};
            for (int p = 0; p < br.spec.n_props(); ++p)
                raws[static_cast<size_t>(p)] = raw_at(br.spec.props[static_cast<size_t>(p)], basis);
            const auto vals = property_values<double>(br.spec, raws.data());
            std::vector<double> row;
            for (int p = 0; p < br.spec.n_props(); ++p)
                row.push_back(vals[static_cast<size_t>(p)]);
            tab.values.push_back(std::move(row));
        }
        tables.push_back(std::move(tab));
    }
    return tables;
}

void save_property_curves(const std::vector<PropertyCurveTable>& tables, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "branch,composition,property,dose,value\n";
    char buf[192];
    for (const auto& tab : tables)
        for (size_t g = 0; g < tab.doses.size(); ++g)
            for (size_t p = 0; p < tab.names.size(); ++p) {
                std::snprintf(buf, sizeof(buf), "%d,\"%s\",\"%s\",%.17g,%.17g\n", tab.branch,
                              tab.composition.c_str(), tab.names[p].c_str(), tab.doses[g],
                              tab.values[g][p]);
                out << buf;
            }
}

// ---------------------------------------------------------------------------
// Serialization.

namespace {

json prop_to_json(const PropertyMap& p) {
    return json{{"name", p.name},
                {"warp", static_cast<int>(p.warp)},
                {"mode", static_cast<int>(p.mode)},
                {"coeffs", p.coeffs},
                {"pinned_value", p.pinned_value},
                {"clamped", p.clamped},
                {"clamp_lo", p.clamp_lo},
                {"clamp_hi", p.clamp_hi},
                {"frozen", p.frozen}};
}

PropertyMap prop_from_json(const json& j) {
    PropertyMap p;
    p.name = j.at("name").get<std::string>();
    p.warp = static_cast<Warp>(j.at("warp").get<int>());
    p.mode = static_cast<MapMode>(j.at("mode").get<int>());
    const auto c = j.at("coeffs").get<std::vector<double>>();
    std::copy(c.begin(), c.end(), p.coeffs.begin());
    p.pinned_value = j.at("pinned_value").get<double>();
    p.clamped = j.at("clamped").get<bool>();
    p.clamp_lo = j.at("clamp_lo").get<double>();
    p.clamp_hi = j.at("clamp_hi").get<double>();
    p.frozen = j.at("frozen").get<bool>();
    return p;
}

}  // namespace

std::string model_to_json(const SemanticModel& model) {
    json branches = json::array();
    for (const auto& b : model.branches) {
        json props = json::array();
        for (const auto& p : b.spec.props) props.push_back(prop_to_json(p));
        branches.push_back(json{{"lo", b.interval.lo},
                                {"hi", b.interval.hi},
                                {"composition", b.spec.comp.label()},
                                {"props", props},
                                {"train_loss", b.train_loss},
                                {"val_loss", b.val_loss},
                                {"learning_rate", b.learning_rate},
                                {"term_weight", b.term_weight},
                                {"trial", b.trial}});
    }
    json candidates = json::array();
    for (const auto& [label, val] : model.candidate_val_losses)
        candidates.push_back(json{{"composition", label}, {"val_loss", val}});
    json j{{"branches", branches},
           {"val_loss", model.val_loss},
           {"config_hash", model.config_hash},
           {"provenance", model.provenance},
           {"candidates", candidates}};
    return j.dump(2);
}

SemanticModel model_from_json(const std::string& text) {
    const json j = json::parse(text);
    SemanticModel model;
    for (const auto& bj : j.at("branches")) {
        FittedBranch b;
        b.interval = {bj.at("lo").get<double>(), bj.at("hi").get<double>()};
        b.spec.comp = semantic::composition_from_label(bj.at("composition").get<std::string>());
        for (const auto& pj : bj.at("props")) b.spec.props.push_back(prop_from_json(pj));
        b.train_loss = bj.at("train_loss").get<double>();
        b.val_loss = bj.at("val_loss").get<double>();
        b.learning_rate = bj.at("learning_rate").get<double>();
        b.term_weight = bj.at("term_weight").get<double>();
        b.trial = bj.at("trial").get<int>();
        b.feasible = true;
        model.branches.push_back(std::move(b));
    }
    model.val_loss = j.at("val_loss").get<double>();
    model.config_hash = j.at("config_hash").get<uint64_t>();
    model.provenance = j.at("provenance").get<std::vector<std::string>>();
    if (j.contains("candidates"))
        for (const auto& cj : j.at("candidates"))
            model.candidate_val_losses.emplace_back(cj.at("composition").get<std::string>(),
                                                    cj.at("val_loss").get<double>());
    return model;
}

void save_model(const SemanticModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << model_to_json(model) << "\n";
}

SemanticModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return model_from_json(text);
}

}  // namespace dosetime::fit
