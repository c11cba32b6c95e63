#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <stdexcept>

#include "dosetime/dual.hpp"
#include "dosetime/motif.hpp"

namespace dosetime::semantic {

constexpr int kMaxMotifs = 8;

// ---------------------------------------------------------------------------
// Piecewise rendering of a semantic representation.
//
// Bounded motifs become cubic Hermite segments pinned to the transition
// values; the terminal motif becomes an exponential approach (h) or a
// quadratic-plus-linear extension (u). Endpoint derivatives are the only
// free quantities. For a cubic on [ts, te] with secant slope D, monotonicity
// sign m and convexity sign c hold on the whole segment iff the endpoint
// first derivatives have sign m and the endpoint second derivatives have
// sign c, which reduces to two affine inequalities in (d_s, d_e):
//
//   c * (3D - 2 d_s - d_e) >= 0     (second derivative at the start)
//   c * (d_s + 2 d_e - 3D) >= 0     (second derivative at the end)
//
// Derivatives at extremum transitions are structurally 0 and derivatives at
// inflections are shared between neighbours, so assigning them is a chain
// problem. A backward interval pass computes, per segment, the window of
// entering derivatives from which the rest of the chain stays feasible; the
// forward pass then clamps each target derivative (0 at extrema, the
// end-second-derivative-zero value at inflections, the stored boundary
// derivative at the last transition) into its exact feasible window. When a
// representation admits a sign-correct cubic chain at all, this produces
// one; otherwise the curve is flagged infeasible (validation reports it).
// ---------------------------------------------------------------------------

template <typename S>
struct Window {
    S lo, hi;
    // Degenerate windows (a single admissible derivative) round to lo and hi
    // a few ulps apart; only a genuine gap counts as empty.
    bool empty() const {
        const double l = value_of(lo), h = value_of(hi);
        return l > h + 1e-9 * std::max({1.0, std::fabs(l), std::fabs(h)});
    }
};

template <typename S>
S clamp_to(const S& x, const Window<S>& w) {
    if (value_of(w.lo) > value_of(w.hi)) return (w.lo + w.hi) * S(0.5);
    if (x < w.lo) return w.lo;
    if (x > w.hi) return w.hi;
    return x;
}

template <typename S>
struct BoundedSeg {
    S t_s, t_e;
    S v_s, d_s;
    S c2, c3;  // p(s) = v_s + d_s s + c2 s^2 + c3 s^3
};

template <typename S>
struct RenderedCurve {
    int k = 1;
    double t0 = 0.0;
    std::array<BoundedSeg<S>, kMaxMotifs - 1> segs{};
    Extent term_extent = Extent::Asymptote;
    int term_mono = +1, term_conv = -1;
    S term_t{}, term_v{}, term_d{};
    S asymptote{}, lambda{};        // h terminal
    S growth{}, freeze_s{}, freeze_v{};  // u terminal
    bool feasible = true;

    S eval(double t) const {
        for (int j = 0; j + 1 < k; ++j) {
            const auto& sg = segs[static_cast<size_t>(j)];
            if (t <= value_of(sg.t_e)) {
                S s = S(t) - sg.t_s;
                if (value_of(s) < 0.0) s = S(0.0);
                return sg.v_s + s * (sg.d_s + s * (sg.c2 + s * sg.c3));
            }
        }
        S s = S(t) - term_t;
        if (value_of(s) < 0.0) s = S(0.0);
        if (term_extent == Extent::Asymptote)
            return asymptote + (term_v - asymptote) * exp(-lambda * s);
        if (value_of(s) >= value_of(freeze_s)) return freeze_v;
        return term_v + term_d * s + S(0.5 * term_conv) * growth * s * s;
    }
};

namespace detail {

template <typename S>
Window<S> sign_window(int m) {
    const double inf = std::numeric_limits<double>::infinity();
    if (m > 0) return {S(0.0), S(inf)};
    return {S(-inf), S(0.0)};
}

// Entering-derivative window for a segment with secant slope D, signs
// (m, c), and end-derivative requirement N.
template <typename S>
Window<S> entering_window(const S& D, int m, int c, const Window<S>& N) {
    const Window<S> M = sign_window<S>(m);
    const S three_d = S(3.0) * D;
    Window<S> E;
    if (c > 0) {
        E.lo = three_d - S(2.0) * N.hi;
        if (E.lo < M.lo) E.lo = M.lo;
        E.hi = (three_d - N.lo) * S(0.5);
        if (D < E.hi) E.hi = D;
        if (M.hi < E.hi) E.hi = M.hi;
    } else {
        E.lo = (three_d - N.hi) * S(0.5);
        if (D > E.lo) E.lo = D;
        if (M.lo > E.lo) E.lo = M.lo;
        E.hi = three_d - S(2.0) * N.lo;
        if (M.hi < E.hi) E.hi = M.hi;
    }
    return E;
}

// End-derivative window given the entering derivative.
template <typename S>
Window<S> end_window(const S& D, const S& ds, int m, int c) {
    const Window<S> M = sign_window<S>(m);
    const S three_d = S(3.0) * D;
    Window<S> W;
    if (c > 0) {
        W.lo = (three_d - ds) * S(0.5);
        W.hi = three_d - S(2.0) * ds;
    } else {
        W.lo = three_d - S(2.0) * ds;
        W.hi = (three_d - ds) * S(0.5);
    }
    if (W.lo < M.lo) W.lo = M.lo;
    if (M.hi < W.hi) W.hi = M.hi;
    return W;
}

}  // namespace detail

// True when the composition's last transition is an extremum, which pins the
// terminal derivative to zero (only reachable with u terminals).
inline bool terminal_starts_at_extremum(const Composition& comp) {
    const int k = comp.size();
    if (k < 2) return false;
    return comp.motifs[static_cast<size_t>(k - 2)].mono != comp.motifs[static_cast<size_t>(k - 1)].mono;
}

template <typename S>
RenderedCurve<S> render_curve(const Composition& comp, double t0, const S* times, const S* values,
                              const S& deriv_start, const S& deriv_end, const S& terminal) {
    const int k = comp.size();
    if (k > kMaxMotifs) throw std::invalid_argument("composition too long to render");
    RenderedCurve<S> curve;
    curve.k = k;
    curve.t0 = t0;
    const Motif& term = comp.motifs[static_cast<size_t>(k - 1)];
    curve.term_extent = term.extent;
    curve.term_mono = term.mono;
    curve.term_conv = term.conv;

    std::array<S, kMaxMotifs> T;
    T[0] = S(t0);
    for (int j = 1; j < k; ++j) T[static_cast<size_t>(j)] = times[j - 1];

    std::array<S, kMaxMotifs - 1> delta;
    for (int j = 0; j + 1 < k; ++j) {
        const S h = T[static_cast<size_t>(j + 1)] - T[static_cast<size_t>(j)];
        delta[static_cast<size_t>(j)] = (values[j + 1] - values[j]) / h;
        if (comp.motifs[static_cast<size_t>(j)].mono * value_of(delta[static_cast<size_t>(j)]) <= 0.0)
            curve.feasible = false;
    }

    const bool term_at_extremum = terminal_starts_at_extremum(comp);

    // Backward pass: entering windows.
    std::array<Window<S>, kMaxMotifs - 1> E;
    std::array<Window<S>, kMaxMotifs - 1> N;
    for (int j = k - 2; j >= 0; --j) {
        const Motif& mo = comp.motifs[static_cast<size_t>(j)];
        const bool last = j == k - 2;
        const bool ext_end = last ? term_at_extremum
                                  : transition_is_extremum(mo, comp.motifs[static_cast<size_t>(j + 1)]);
        if (ext_end)
            N[static_cast<size_t>(j)] = {S(0.0), S(0.0)};
        else if (last)
            N[static_cast<size_t>(j)] = detail::sign_window<S>(term.mono);
        else
            N[static_cast<size_t>(j)] = E[static_cast<size_t>(j + 1)];
        E[static_cast<size_t>(j)] = detail::entering_window(delta[static_cast<size_t>(j)], mo.mono,
                                                            mo.conv, N[static_cast<size_t>(j)]);
        if (E[static_cast<size_t>(j)].empty()) curve.feasible = false;
    }

    // Forward pass: clamp targets into their exact windows.
    S ds = deriv_start;
    if (k >= 2) {
        if (!E[0].empty()) ds = clamp_to(ds, E[0]);
        for (int j = 0; j + 1 < k; ++j) {
            const Motif& mo = comp.motifs[static_cast<size_t>(j)];
            const bool last = j == k - 2;
            const bool ext_end = last ? term_at_extremum
                                      : transition_is_extremum(mo, comp.motifs[static_cast<size_t>(j + 1)]);
            Window<S> D = detail::end_window(delta[static_cast<size_t>(j)], ds, mo.mono, mo.conv);
            const Window<S>& req = N[static_cast<size_t>(j)];
            if (req.lo > D.lo) D.lo = req.lo;
            if (req.hi < D.hi) D.hi = req.hi;

            S target;
            if (ext_end)
                target = S(0.0);
            else if (last)
                target = deriv_end;
            else
                target = (S(3.0) * delta[static_cast<size_t>(j)] - ds) * S(0.5);

            S de;
            if (!D.empty()) {
                de = clamp_to(target, D);
            } else {
                curve.feasible = false;
                const bool finite = std::isfinite(value_of(D.lo)) && std::isfinite(value_of(D.hi));
                de = finite ? (D.lo + D.hi) * S(0.5) : target;
            }

            BoundedSeg<S>& sg = curve.segs[static_cast<size_t>(j)];
            sg.t_s = T[static_cast<size_t>(j)];
            sg.t_e = T[static_cast<size_t>(j + 1)];
            sg.v_s = values[j];
            sg.d_s = ds;
            const S h = sg.t_e - sg.t_s;
            const S D3 = S(3.0) * delta[static_cast<size_t>(j)];
            sg.c2 = (D3 - S(2.0) * ds - de) / h;
            sg.c3 = (ds + de - S(2.0) * delta[static_cast<size_t>(j)]) / (h * h);
            ds = de;
        }
    }

    curve.term_t = T[static_cast<size_t>(k - 1)];
    curve.term_v = values[k - 1];
    curve.term_d = k == 1 ? deriv_start : ds;

    if (term.extent == Extent::Asymptote) {
        curve.asymptote = terminal;
        const S gap = fabs(terminal - curve.term_v);
        if (value_of(gap) <= 0.0) {
            if (std::fabs(value_of(curve.term_d)) > 0.0)
                throw std::invalid_argument(
                    "asymptote equals the last transition value with nonzero derivative");
            curve.lambda = S(0.0);
        } else {
            curve.lambda = fabs(curve.term_d) / gap;
        }
        if (term.mono * value_of(terminal - curve.term_v) < 0.0) curve.feasible = false;
    } else if (term.extent == Extent::Unbounded) {
        curve.growth = terminal;
        const double inf = std::numeric_limits<double>::infinity();
        if (term.mono * term.conv < 0 && value_of(terminal) > 0.0) {
            curve.freeze_s = fabs(curve.term_d) / terminal;
            const S s = curve.freeze_s;
            curve.freeze_v = curve.term_v + curve.term_d * s + S(0.5 * term.conv) * terminal * s * s;
        } else {
            curve.freeze_s = S(inf);
            curve.freeze_v = S(0.0);
        }
        if (value_of(terminal) < 0.0) curve.feasible = false;
    }
    return curve;
}

}  // namespace dosetime::semantic
