#pragma once

#include <array>
#include <cmath>

namespace dosetime {

// Forward-mode dual number carrying N partial derivatives. The semantic
// fit works in a small per-dose parameter space (<= 10 raw properties), so
// forward mode over that space costs about one extra vector op per scalar op.
template <int N>
struct Dual {
    double v = 0.0;
    std::array<double, N> d{};

    Dual() = default;
    Dual(double value) : v(value) {}  // NOLINT: implicit by design
    static Dual seed(double value, int slot) {
        Dual x(value);
        x.d[static_cast<size_t>(slot)] = 1.0;
        return x;
    }

    Dual operator-() const {
        Dual r(-v);
        for (int i = 0; i < N; ++i) r.d[i] = -d[i];
        return r;
    }
    Dual& operator+=(const Dual& o) {
        v += o.v;
        for (int i = 0; i < N; ++i) d[i] += o.d[i];
        return *this;
    }
    Dual& operator-=(const Dual& o) {
        v -= o.v;
        for (int i = 0; i < N; ++i) d[i] -= o.d[i];
        return *this;
    }
    Dual& operator*=(const Dual& o) {
        for (int i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
        v *= o.v;
        return *this;
    }
    Dual& operator/=(const Dual& o) {
        const double inv = 1.0 / o.v;
        for (int i = 0; i < N; ++i) d[i] = (d[i] - v * inv * o.d[i]) * inv;
        v *= inv;
        return *this;
    }

    friend Dual operator+(Dual a, const Dual& b) { return a += b; }
    friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
    friend Dual operator*(Dual a, const Dual& b) { return a *= b; }
    friend Dual operator/(Dual a, const Dual& b) { return a /= b; }

    friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
    friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
    friend bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
    friend bool operator>=(const Dual& a, const Dual& b) { return a.v >= b.v; }
};

template <int N>
Dual<N> exp(const Dual<N>& x) {
    Dual<N> r(std::exp(x.v));
    for (int i = 0; i < N; ++i) r.d[i] = r.v * x.d[i];
    return r;
}

template <int N>
Dual<N> log(const Dual<N>& x) {
    Dual<N> r(std::log(x.v));
    const double inv = 1.0 / x.v;
    for (int i = 0; i < N; ++i) r.d[i] = inv * x.d[i];
    return r;
}

template <int N>
Dual<N> fabs(const Dual<N>& x) {
    return x.v < 0.0 ? -x : x;
}

template <int N>
Dual<N> tanh(const Dual<N>& x) {
    Dual<N> r(std::tanh(x.v));
    const double sech2 = 1.0 - r.v * r.v;
    for (int i = 0; i < N; ++i) r.d[i] = sech2 * x.d[i];
    return r;
}

// softplus(x) = log(1 + e^x), numerically stable in both tails.
template <int N>
Dual<N> softplus(const Dual<N>& x) {
    const double s = x.v > 30.0 ? x.v : std::log1p(std::exp(std::min(x.v, 30.0)));
    const double sig = 1.0 / (1.0 + std::exp(-x.v));
    Dual<N> r(s);
    for (int i = 0; i < N; ++i) r.d[i] = sig * x.d[i];
    return r;
}

inline double softplus(double x) {
    return x > 30.0 ? x : std::log1p(std::exp(std::min(x, 30.0)));
}

// Inverse of softplus for deterministic initialisation.
inline double softplus_inv(double y) {
    if (y > 30.0) return y;
    return std::log(std::expm1(std::max(y, 1e-300)));
}

template <int N>
double value_of(const Dual<N>& x) {
    return x.v;
}
inline double value_of(double x) { return x; }

using std::exp;
using std::fabs;
using std::log;
using std::tanh;

}  // namespace dosetime
