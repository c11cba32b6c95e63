#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <vector>

namespace dosetime {

// Limited-memory BFGS with a strong-Wolfe line search. Deterministic: no
// randomness, fixed iteration order, so identical inputs give identical
// minimizers.
struct LbfgsOptions {
    int max_iter = 500;
    int history = 8;
    double c1 = 1e-4;
    double c2 = 0.9;
    double initial_step = 1.0;  // first-iteration trial step scale
    double tol_rel = 1e-9;      // relative decrease over tol_window iterations
    int tol_window = 5;
    double grad_tol = 1e-12;
};

struct LbfgsResult {
    std::vector<double> x;
    double f = 0.0;
    int iterations = 0;
    bool diverged = false;  // non-finite objective or gradient encountered
};

using ObjectiveFn = std::function<double(const std::vector<double>&, std::vector<double>&)>;

inline LbfgsResult lbfgs_minimize(const ObjectiveFn& fn, std::vector<double> x0,
                                  const LbfgsOptions& opt = {}) {
    const size_t n = x0.size();
    LbfgsResult res;
    std::vector<double> g(n), x = std::move(x0);
    double f = fn(x, g);
    if (!std::isfinite(f)) {
        res.x = x;
        res.f = f;
        res.diverged = true;
        return res;
    }

    std::deque<std::vector<double>> s_hist, y_hist;
    std::deque<double> rho_hist;
    std::vector<double> dir(n), x_new(n), g_new(n);
    std::deque<double> f_window{f};

    auto dot = [n](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
        return s;
    };

    for (int iter = 0; iter < opt.max_iter; ++iter) {
        double gmax = 0.0;
        for (double v : g) gmax = std::max(gmax, std::fabs(v));
        if (gmax < opt.grad_tol) break;

        // Two-loop recursion.
        for (size_t i = 0; i < n; ++i) dir[i] = -g[i];
        std::vector<double> alpha(s_hist.size());
        for (size_t h = s_hist.size(); h-- > 0;) {
            alpha[h] = rho_hist[h] * dot(s_hist[h], dir);
            for (size_t i = 0; i < n; ++i) dir[i] -= alpha[h] * y_hist[h][i];
        }
        if (!s_hist.empty()) {
            const double gamma =
                dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
            for (size_t i = 0; i < n; ++i) dir[i] *= gamma;
        }
        for (size_t h = 0; h < s_hist.size(); ++h) {
            const double beta = rho_hist[h] * dot(y_hist[h], dir);
            for (size_t i = 0; i < n; ++i) dir[i] += (alpha[h] - beta) * s_hist[h][i];
        }

        double dg = dot(dir, g);
        if (dg >= 0.0) {  // not a descent direction; restart from steepest descent
            for (size_t i = 0; i < n; ++i) dir[i] = -g[i];
            dg = -dot(g, g);
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        // Strong-Wolfe line search with bisection zoom.
        double step = iter == 0 ? opt.initial_step / std::max(1.0, gmax) : 1.0;
        double f_new = f;
        bool accepted = false;
        double lo = 0.0, hi = -1.0;  // hi < 0 means no upper bracket yet
        double f_lo = f;
        for (int ls = 0; ls < 40; ++ls) {
            for (size_t i = 0; i < n; ++i) x_new[i] = x[i] + step * dir[i];
            f_new = fn(x_new, g_new);
            const bool finite = std::isfinite(f_new);
            const double dg_new = finite ? dot(dir, g_new) : 0.0;
            if (!finite || f_new > f + opt.c1 * step * dg || (hi > 0.0 && f_new >= f_lo)) {
                hi = step;  // too far
            } else if (std::fabs(dg_new) <= -opt.c2 * dg) {
                accepted = true;  // Wolfe satisfied
                break;
            } else if (dg_new >= 0.0) {
                hi = step;  // overshot the minimum along the ray
            } else {
                lo = step;  // still descending
                f_lo = f_new;
            }
            step = hi > 0.0 ? 0.5 * (lo + hi) : step * 2.0;
            if (step < 1e-18) break;
        }
        if (!accepted) {
            // take the best sufficient-decrease point if any
            for (size_t i = 0; i < n; ++i) x_new[i] = x[i] + (lo > 0.0 ? lo : step) * dir[i];
            f_new = fn(x_new, g_new);
            if (!std::isfinite(f_new) || f_new >= f) break;  // no progress
        }

        std::vector<double> s(n), y(n);
        for (size_t i = 0; i < n; ++i) {
            s[i] = x_new[i] - x[i];
            y[i] = g_new[i] - g[i];
        }
        const double sy = dot(s, y);
        if (sy > 1e-14) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > opt.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        x.swap(x_new);
        g.swap(g_new);
        f = f_new;
        res.iterations = iter + 1;
        if (!std::isfinite(f)) {
            res.diverged = true;
            break;
        }

        f_window.push_back(f);
        if (static_cast<int>(f_window.size()) > opt.tol_window + 1) f_window.pop_front();
        if (static_cast<int>(f_window.size()) == opt.tol_window + 1) {
            const double drop = f_window.front() - f_window.back();
            if (drop < opt.tol_rel * std::max(std::fabs(f_window.back()), 1e-12)) break;
        }
    }
    res.x = std::move(x);
    res.f = f;
    return res;
}

}  // namespace dosetime
