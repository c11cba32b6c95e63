#include "dosetime/ihdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dosetime/bspline.hpp"
#include "dosetime/parallel.hpp"

namespace dosetime::synth {

double ihdp_t_max(double a) {
    const IhdpTauParams p;
    return p.t_max_slope * (a - p.t_max_ref) + p.t_max_offset;
}

double ihdp_tau_max(double a) {
    const double tm = ihdp_t_max(a);
    return 10.0 + 60.0 * (tm / 30.0) * std::pow(1.0 - tm / 30.0, 3);
}

double ground_truth_tau_ihdp(double a, double t) {
    const IhdpTauParams p;
    const double tm = ihdp_t_max(a);
    if (tm >= 30.0) {
        // Logistic rise towards the 3a plateau, midpoint at t = 11.5 / sqrt(a/4).
        const double z = std::sqrt(a / 4.0) * t - 11.5;
        return 3.0 * a / (1.0 + std::exp(-z)) - (a / 2.0) / (1.0 + std::exp(5.0));
    }
    const double tmax = ihdp_tau_max(a);
    auto phi = [&](double x) {
        const double d = x - tm;
        return std::exp(-d * d / (2.0 * p.s * p.s));
    };
    if (t <= tm) return (phi(t) - phi(0.0)) / (phi(tm) - phi(0.0)) * tmax;
    return p.h + phi(t) * (tmax - p.h) / phi(tm);
}

CovariateMoments builtin_ihdp_moments() {
    const int d = 25;
    CovariateMoments m;
    m.mean.resize(static_cast<size_t>(d));
    for (int j = 6; j < d; ++j) m.binary_columns.push_back(j);

    Rng rng(derive_seed(0x1d4f5u, "builtin_moments"));
    // Continuous columns: standardized scores; binary columns: means act as
    // prevalence against the 0.5 threshold.
    for (int j = 0; j < 6; ++j) m.mean[static_cast<size_t>(j)] = rng.uniform(-0.5, 0.5);
    for (int j = 6; j < d; ++j) m.mean[static_cast<size_t>(j)] = rng.uniform(0.2, 0.8);

    // Correlation from a random Gram matrix, then scaled: sd 1 for
    // continuous columns and 0.5 for binary ones.
    std::vector<std::vector<double>> g(static_cast<size_t>(d),
                                       std::vector<double>(static_cast<size_t>(d), 0.0));
    std::vector<std::vector<double>> A = g;
    for (auto& row : A)
        for (auto& v : row) v = rng.normal();
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            double s = 0.0;
            for (int k = 0; k < d; ++k)
                s += A[static_cast<size_t>(i)][static_cast<size_t>(k)] *
                     A[static_cast<size_t>(j)][static_cast<size_t>(k)];
            g[static_cast<size_t>(i)][static_cast<size_t>(j)] = s / d + (i == j ? 1.0 : 0.0);
        }
    m.covariance.assign(static_cast<size_t>(d), std::vector<double>(static_cast<size_t>(d), 0.0));
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            const double si = i < 6 ? 1.0 : 0.5;
            const double sj = j < 6 ? 1.0 : 0.5;
            const double denom = std::sqrt(g[static_cast<size_t>(i)][static_cast<size_t>(i)] *
                                           g[static_cast<size_t>(j)][static_cast<size_t>(j)]);
            m.covariance[static_cast<size_t>(i)][static_cast<size_t>(j)] =
                si * sj * g[static_cast<size_t>(i)][static_cast<size_t>(j)] / denom;
        }
    return m;
}

namespace {

struct IhdpWeights {
    std::vector<std::vector<double>> W;  // 6 x d spline coefficients weights
    std::vector<double> u1, u2;          // heterogeneity projections
};

IhdpWeights ihdp_weights(uint64_t seed, int d) {
    IhdpWeights w;
    Rng rng(derive_seed(seed, "ihdp_weights"));
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    w.W.assign(6, std::vector<double>(static_cast<size_t>(d)));
    for (auto& row : w.W)
        for (auto& v : row) v = rng.normal() * scale;
    w.u1.resize(static_cast<size_t>(d));
    w.u2.resize(static_cast<size_t>(d));
    for (auto& v : w.u1) v = rng.normal() * scale;
    for (auto& v : w.u2) v = rng.normal() * scale;
    return w;
}

std::vector<double> measurement_times_ihdp(Rng& rng, int n_t, double t_max, Sampling sampling) {
    std::vector<double> t(static_cast<size_t>(n_t));
    if (sampling == Sampling::Regular) {
        if (n_t == 1) {
            t[0] = 0.5 * t_max;
        } else {
            for (int j = 0; j < n_t; ++j) t[static_cast<size_t>(j)] = t_max * j / (n_t - 1);
        }
    } else {
        for (auto& v : t) v = rng.uniform(0.0, t_max);
        std::sort(t.begin(), t.end());
        for (size_t j = 1; j < t.size(); ++j)
            if (t[j] <= t[j - 1]) t[j] = std::nextafter(t[j - 1], 2.0 * t_max);
    }
    return t;
}

}  // namespace

std::pair<data::LongitudinalDataset, GroundTruthSurface> generate_ihdp_dataset(const IhdpConfig& cfg) {
    if (!(cfg.n > cfg.n_0 && cfg.n_0 >= 0)) throw std::invalid_argument("need n > n_0 >= 0");
    if (cfg.n_t < 1) throw std::invalid_argument("need n_t >= 1");

    const CovariateMoments moments =
        cfg.moments_path.empty() ? builtin_ihdp_moments() : load_moments(cfg.moments_path);
    const MomentsSampler sampler(moments);
    const int d = sampler.dim();

    data::LongitudinalDataset ds;
    for (int j = 0; j < d; ++j) ds.covariate_names.push_back("x" + std::to_string(j + 1));
    ds.a_min = cfg.a_min;
    ds.a_max = cfg.a_max;
    ds.t_max = cfg.t_max;

    // Baseline trajectory: degree-3 B-spline with 6 basis functions on
    // [0, t_max]; per-patient coefficients are fixed random weights times the
    // covariates.
    const BSplineBasis spline = clamped_uniform_basis(0.0, cfg.t_max, 3, 6);
    const IhdpWeights wts = ihdp_weights(cfg.seed, d);
    const auto& W = wts.W;
    const auto& u1 = wts.u1;
    const auto& u2 = wts.u2;

    std::vector<int> order(static_cast<size_t>(cfg.n));
    for (int i = 0; i < cfg.n; ++i) order[static_cast<size_t>(i)] = i;
    Rng assign_rng(derive_seed(cfg.seed, "ihdp_assign"));
    assign_rng.shuffle(order);
    std::vector<bool> untreated(static_cast<size_t>(cfg.n), false);
    for (int k = 0; k < cfg.n_0; ++k) untreated[static_cast<size_t>(order[static_cast<size_t>(k)])] = true;

    ds.patients.resize(static_cast<size_t>(cfg.n));
    std::vector<std::vector<double>> baseline(static_cast<size_t>(cfg.n));
    std::vector<double> psi1(static_cast<size_t>(cfg.n)), psi2(static_cast<size_t>(cfg.n));

    parallel_for(cfg.n, [&](size_t i) {
        Rng rng(derive_seed(cfg.seed, "ihdp_patient", i));
        data::PatientRecord& p = ds.patients[i];
        p.id = static_cast<int64_t>(i);
        p.covariates = sampler.draw(rng);
        const double dose = rng.uniform(cfg.a_min, cfg.a_max);
        p.treated = !untreated[i];
        p.dose = p.treated ? dose : 0.0;
        const auto times = measurement_times_ihdp(rng, cfg.n_t, cfg.t_max, cfg.sampling);
        std::vector<double> coeff(6, 0.0);
        for (int b = 0; b < 6; ++b)
            for (int j = 0; j < d; ++j)
                coeff[static_cast<size_t>(b)] +=
                    W[static_cast<size_t>(b)][static_cast<size_t>(j)] * p.covariates[static_cast<size_t>(j)];
        baseline[i].resize(times.size());
        p.measurements.resize(times.size());
        for (size_t j = 0; j < times.size(); ++j) {
            double v = 0.0;
            for (int b = 0; b < 6; ++b) v += coeff[static_cast<size_t>(b)] * spline.eval(b, times[j]);
            baseline[i][j] = v;
            p.measurements[j] = {times[j], 0.0};
        }
        double s1 = 0.0, s2 = 0.0;
        for (int j = 0; j < d; ++j) {
            s1 += u1[static_cast<size_t>(j)] * p.covariates[static_cast<size_t>(j)];
            s2 += u2[static_cast<size_t>(j)] * p.covariates[static_cast<size_t>(j)];
        }
        psi1[i] = std::tanh(s1);
        psi2[i] = std::tanh(s2);
    });

    // Centering the heterogeneity term: h(a, x) = g1(a) psi1~ + g2(a) psi2~
    // with sample-centered psi~, so the population mean is zero at every dose.
    double m1 = 0.0, m2 = 0.0;
    for (int i = 0; i < cfg.n; ++i) {
        m1 += psi1[static_cast<size_t>(i)];
        m2 += psi2[static_cast<size_t>(i)];
    }
    m1 /= cfg.n;
    m2 /= cfg.n;
    const double hscale = 5.0;
    auto h_term = [&](double a, size_t i) {
        const double g1 = 0.5 * hscale * (a / cfg.a_max);
        const double g2 = 0.3 * hscale * std::sin(M_PI * a / cfg.a_max);
        return g1 * (psi1[i] - m1) + g2 * (psi2[i] - m2);
    };

    // Outcome pipeline: shift baselines so the dataset minimum is 0, scale the
    // maximum to 1, add noise at that common scale, scale back, then add the
    // range-matched effect and divide everything by the dataset maximum.
    double bmin = std::numeric_limits<double>::infinity(), bmax = -bmin;
    for (const auto& traj : baseline)
        for (double v : traj) {
            bmin = std::min(bmin, v);
            bmax = std::max(bmax, v);
        }
    const double brange = bmax - bmin;
    if (!(brange > 0.0)) throw std::runtime_error("degenerate baseline range");

    parallel_for(cfg.n, [&](size_t i) {
        Rng rng(derive_seed(cfg.seed, "ihdp_noise", i));
        for (size_t j = 0; j < baseline[i].size(); ++j) {
            const double unit = (baseline[i][j] - bmin) / brange;
            baseline[i][j] = (unit + cfg.noise_sd * rng.normal()) * brange + bmin;
        }
    });

    double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
    for (int i = 0; i < cfg.n; ++i) {
        const auto& p = ds.patients[static_cast<size_t>(i)];
        if (!p.treated) continue;
        for (const auto& mmt : p.measurements) {
            const double v = ground_truth_tau_ihdp(p.dose, mmt.time) + h_term(p.dose, static_cast<size_t>(i));
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
        }
    }
    const bool has_treated = cfg.n_0 < cfg.n;
    const double c = has_treated && vmax > vmin ? brange / (vmax - vmin) : 1.0;

    double ymax = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < cfg.n; ++i) {
        auto& p = ds.patients[static_cast<size_t>(i)];
        for (size_t j = 0; j < p.measurements.size(); ++j) {
            double y = baseline[static_cast<size_t>(i)][j];
            if (p.treated)
                y += c * (ground_truth_tau_ihdp(p.dose, p.measurements[j].time) +
                          h_term(p.dose, static_cast<size_t>(i)));
            p.measurements[j].outcome = y;
            ymax = std::max(ymax, y);
        }
    }
    if (!(std::fabs(ymax) > 0.0)) throw std::runtime_error("degenerate outcome maximum");
    for (auto& p : ds.patients)
        for (auto& mmt : p.measurements) mmt.outcome /= ymax;

    data::validate(ds);

    GroundTruthSurface surface;
    surface.provenance = "analytic";
    surface.population = cfg.n;
    surface.a_min = cfg.a_min;
    surface.a_max = cfg.a_max;
    surface.t_max = cfg.t_max;
    const double factor = c / ymax;
    surface.evaluator = [factor](double a, double t) {
        if (a == 0.0) return 0.0;
        return factor * ground_truth_tau_ihdp(a, t);
    };
    return {std::move(ds), std::move(surface)};
}

std::vector<double> ihdp_h_values(const IhdpConfig& cfg, const data::LongitudinalDataset& ds,
                                  double a) {
    const int d = ds.covariate_dim();
    const IhdpWeights wts = ihdp_weights(cfg.seed, d);
    const int n = ds.n_patients();
    std::vector<double> psi1(static_cast<size_t>(n)), psi2(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double s1 = 0.0, s2 = 0.0;
        for (int j = 0; j < d; ++j) {
            s1 += wts.u1[static_cast<size_t>(j)] * ds.patients[static_cast<size_t>(i)].covariates[static_cast<size_t>(j)];
            s2 += wts.u2[static_cast<size_t>(j)] * ds.patients[static_cast<size_t>(i)].covariates[static_cast<size_t>(j)];
        }
        psi1[static_cast<size_t>(i)] = std::tanh(s1);
        psi2[static_cast<size_t>(i)] = std::tanh(s2);
    }
    double m1 = 0.0, m2 = 0.0;
    for (int i = 0; i < n; ++i) {
        m1 += psi1[static_cast<size_t>(i)];
        m2 += psi2[static_cast<size_t>(i)];
    }
    m1 /= n;
    m2 /= n;
    const double hscale = 5.0;
    const double g1 = 0.5 * hscale * (a / cfg.a_max);
    const double g2 = 0.3 * hscale * std::sin(M_PI * a / cfg.a_max);
    std::vector<double> h(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        h[static_cast<size_t>(i)] =
            g1 * (psi1[static_cast<size_t>(i)] - m1) + g2 * (psi2[static_cast<size_t>(i)] - m2);
    return h;
}

}  // namespace dosetime::synth
