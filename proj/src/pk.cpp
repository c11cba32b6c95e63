#include "dosetime/pk.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "dosetime/parallel.hpp"
#include "json.hpp"

#include <Eigen/Dense>

namespace dosetime::synth {

using nlohmann::json;

void pk_rhs(const PKParameters& p, const double y[6], double dy[6]) {
    const double depot = y[0], t1 = y[1], t2 = y[2], t3 = y[3], cent = y[4], peri = y[5];
    dy[0] = -p.KTR * depot;
    dy[1] = p.KTR * depot - p.KTR * t1;
    dy[2] = p.KTR * t1 - p.KTR * t2;
    dy[3] = p.KTR * t2 - p.KTR * t3;
    dy[4] = p.KTR * t3 - (p.CL + p.Q) / p.V1 * cent + p.Q / p.V2 * peri;
    dy[5] = p.Q / p.V1 * cent - p.Q / p.V2 * peri;
}

namespace {

// Dormand-Prince 5(4) coefficients.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                 e4 = 125.0 / 192 - 393.0 / 640, e5 = -2187.0 / 6784 + 92097.0 / 339200,
                 e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;

}  // namespace

void integrate_rk45(const PKParameters& p, std::array<double, 6>& y, double t0, double t1,
                    const OdeOptions& opt) {
    if (t1 <= t0) return;
    double t = t0;
    double h = std::min(opt.h_init, t1 - t0);
    double k1[6], k2[6], k3[6], k4[6], k5[6], k6[6], k7[6], ytmp[6], ynew[6];
    pk_rhs(p, y.data(), k1);  // FSAL
    while (t < t1) {
        h = std::min(h, t1 - t);
        for (int i = 0; i < 6; ++i) ytmp[i] = y[i] + h * a21 * k1[i];
        pk_rhs(p, ytmp, k2);
        for (int i = 0; i < 6; ++i) ytmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
        pk_rhs(p, ytmp, k3);
        for (int i = 0; i < 6; ++i) ytmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        pk_rhs(p, ytmp, k4);
        for (int i = 0; i < 6; ++i)
            ytmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        pk_rhs(p, ytmp, k5);
        for (int i = 0; i < 6; ++i)
            ytmp[i] =
                y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        pk_rhs(p, ytmp, k6);
        for (int i = 0; i < 6; ++i)
            ynew[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
        pk_rhs(p, ynew, k7);

        double err = 0.0;
        for (int i = 0; i < 6; ++i) {
            const double ei =
                h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
            const double sc = opt.atol + opt.rtol * std::max(std::fabs(y[i]), std::fabs(ynew[i]));
            err = std::max(err, std::fabs(ei) / sc);
        }
        if (err <= 1.0) {
            t += h;
            for (int i = 0; i < 6; ++i) y[i] = ynew[i];
            for (int i = 0; i < 6; ++i) k1[i] = k7[i];
        }
        const double factor =
            err > 0.0 ? std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0) : 5.0;
        h *= factor;
        if (h < opt.h_min && t < t1)
            throw std::runtime_error("ode step-size underflow at t = " + std::to_string(t));
    }
}

std::vector<double> solve_pk_ode(const PKParameters& p, const PKState& initial,
                                 const std::vector<double>& times, const OdeOptions& opt) {
    for (size_t i = 0; i + 1 < times.size(); ++i)
        if (times[i + 1] < times[i]) throw std::invalid_argument("times must be non-decreasing");
    if (!times.empty() && times[0] < 0.0) throw std::invalid_argument("times must start at >= 0");
    auto y = initial.to_array();
    std::vector<double> out;
    out.reserve(times.size());
    double t = 0.0;
    const double scale = 1000.0 / p.V1;
    for (double tq : times) {
        integrate_rk45(p, y, t, tq, opt);
        t = std::max(t, tq);
        out.push_back(y[4] * scale);
    }
    return out;
}

std::vector<double> solve_pk_ode_rk4(const PKParameters& p, const PKState& initial,
                                     const std::vector<double>& times, double step) {
    auto y = initial.to_array();
    std::vector<double> out;
    out.reserve(times.size());
    double t = 0.0;
    const double scale = 1000.0 / p.V1;
    double k1[6], k2[6], k3[6], k4[6], ytmp[6];
    for (double tq : times) {
        while (t < tq) {
            const double h = std::min(step, tq - t);
            pk_rhs(p, y.data(), k1);
            for (int i = 0; i < 6; ++i) ytmp[i] = y[i] + 0.5 * h * k1[i];
            pk_rhs(p, ytmp, k2);
            for (int i = 0; i < 6; ++i) ytmp[i] = y[i] + 0.5 * h * k2[i];
            pk_rhs(p, ytmp, k3);
            for (int i = 0; i < 6; ++i) ytmp[i] = y[i] + h * k3[i];
            pk_rhs(p, ytmp, k4);
            for (int i = 0; i < 6; ++i)
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            t += h;
        }
        out.push_back(y[4] * scale);
    }
    return out;
}

const std::vector<std::string>& pk_covariate_names() {
    static const std::vector<std::string> names = {"weight", "age",  "hematocrit", "y0",
                                                   "sex",    "cyp",  "form",       "creatinine"};
    return names;
}

PKParameters pk_effective_params(const PKParameters& base, const std::vector<double>& cov) {
    if (cov.size() != 8) throw std::invalid_argument("pk covariates must have dimension 8");
    PKParameters p = base;
    p.CL = base.CL * (1.0 + 0.4 * cov[5]) * std::sqrt(35.0 / cov[2]);
    p.V1 = base.V1 * std::pow(cov[0] / 70.0, 0.75);
    return p;
}

PKState pk_initial_state(const PKParameters& eff, double dose, double y0) {
    PKState s;
    s.depot = dose;
    s.cent = y0 * eff.V1 / 1000.0;
    s.peri = eff.V2 / eff.V1 * s.cent;
    return s;
}

namespace {

std::vector<double> random_pk_covariates(Rng& rng) {
    std::vector<double> x(8);
    x[0] = rng.uniform(45.0, 110.0);   // weight
    x[1] = rng.uniform(18.0, 75.0);    // age
    x[2] = rng.uniform(25.0, 50.0);    // hematocrit
    x[3] = rng.uniform(0.5, 3.0);      // baseline concentration y0
    x[4] = rng.uniform() < 0.5 ? 1.0 : 0.0;  // sex
    x[5] = rng.uniform() < 0.2 ? 1.0 : 0.0;  // cyp expressor
    x[6] = rng.uniform() < 0.5 ? 1.0 : 0.0;  // formulation
    x[7] = rng.uniform(40.0, 130.0);   // creatinine
    return x;
}

std::vector<double> measurement_times(Rng& rng, int n_t, double t_max, Sampling sampling) {
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
        for (size_t j = 1; j < t.size(); ++j)  // ties have measure zero; nudge if they happen
            if (t[j] <= t[j - 1]) t[j] = std::nextafter(t[j - 1], t_max * 2.0);
    }
    return t;
}

UnitResponses unit_responses_impl(const std::vector<PKParameters>& params,
                                  const std::vector<double>& grid, const OdeOptions& opt,
                                  bool parallel) {
    UnitResponses r;
    r.grid = grid;
    const size_t n = params.size(), g = grid.size();
    r.values.assign(n * g, 0.0);
    r.derivs.assign(n * g, 0.0);
    auto body = [&](size_t i) {
        const PKParameters& p = params[i];
        std::array<double, 6> y{1.0, 0.0, 0.0, 0.0, 0.0, 0.0};  // unit depot
        const double scale = 1000.0 / p.V1;
        double t = 0.0;
        double dy[6];
        for (size_t j = 0; j < g; ++j) {
            integrate_rk45(p, y, t, grid[j], opt);
            t = std::max(t, grid[j]);
            r.values[i * g + j] = y[4] * scale;
            pk_rhs(p, y.data(), dy);
            r.derivs[i * g + j] = dy[4] * scale;
        }
    };
    if (parallel)
        parallel_for(static_cast<std::ptrdiff_t>(n), body);
    else
        serial_for(static_cast<std::ptrdiff_t>(n), body);
    return r;
}

}  // namespace

UnitResponses pk_unit_responses(const std::vector<PKParameters>& params,
                                const std::vector<double>& grid, const OdeOptions& opt) {
    return unit_responses_impl(params, grid, opt, true);
}

UnitResponses pk_unit_responses_ref(const std::vector<PKParameters>& params,
                                    const std::vector<double>& grid, const OdeOptions& opt) {
    return unit_responses_impl(params, grid, opt, false);
}

CovariateMoments load_moments(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open moments file " + path);
    json j;
    in >> j;
    CovariateMoments m;
    m.mean = j.at("mean").get<std::vector<double>>();
    m.covariance = j.at("covariance").get<std::vector<std::vector<double>>>();
    m.binary_columns = j.value("binary_columns", std::vector<int>{});
    return m;
}

void save_moments(const CovariateMoments& m, const std::string& path) {
    json j{{"mean", m.mean}, {"covariance", m.covariance}, {"binary_columns", m.binary_columns}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write moments file " + path);
    out << j.dump(2) << "\n";
}

MomentsSampler::MomentsSampler(const CovariateMoments& m) {
    const int d = static_cast<int>(m.mean.size());
    Eigen::MatrixXd cov(d, d);
    for (int i = 0; i < d; ++i) {
        if (static_cast<int>(m.covariance[static_cast<size_t>(i)].size()) != d)
            throw std::runtime_error("covariance matrix is not square");
        for (int j = 0; j < d; ++j)
            cov(i, j) = m.covariance[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("non-PSD covariance in moments file");
    Eigen::MatrixXd L = llt.matrixL();
    mean_ = m.mean;
    chol_.assign(static_cast<size_t>(d), std::vector<double>(static_cast<size_t>(d), 0.0));
    for (int i = 0; i < d; ++i)
        for (int j = 0; j <= i; ++j) chol_[static_cast<size_t>(i)][static_cast<size_t>(j)] = L(i, j);
    binary_ = m.binary_columns;
}

std::vector<double> MomentsSampler::draw(Rng& rng) const {
    const size_t d = mean_.size();
    std::vector<double> z(d), x(d);
    for (auto& v : z) v = rng.normal();
    for (size_t i = 0; i < d; ++i) {
        double s = mean_[i];
        for (size_t j = 0; j <= i; ++j) s += chol_[i][j] * z[j];
        x[i] = s;
    }
    for (int b : binary_) x[static_cast<size_t>(b)] = x[static_cast<size_t>(b)] > 0.5 ? 1.0 : 0.0;
    return x;
}

std::pair<data::LongitudinalDataset, GroundTruthSurface> generate_pk_dataset(const PKConfig& cfg) {
    if (!(cfg.n > cfg.n_0 && cfg.n_0 >= 0)) throw std::invalid_argument("need n > n_0 >= 0");
    if (cfg.n_t < 1) throw std::invalid_argument("need n_t >= 1");
    if (!(cfg.a_max > cfg.a_min && cfg.a_min > 0.0 && cfg.t_max > 0.0))
        throw std::invalid_argument("invalid pk dose/time ranges");

    const PKParameters base;
    data::LongitudinalDataset ds;
    ds.covariate_names = pk_covariate_names();
    ds.a_min = cfg.a_min;
    ds.a_max = cfg.a_max;
    ds.t_max = cfg.t_max;

    std::unique_ptr<MomentsSampler> sampler;
    if (cfg.covariate_mode == CovariateMode::MomentsFile)
        sampler = std::make_unique<MomentsSampler>(load_moments(cfg.moments_path));

    // Treatment assignment: shuffle patient indices, first n_0 stay untreated.
    std::vector<int> order(static_cast<size_t>(cfg.n));
    for (int i = 0; i < cfg.n; ++i) order[static_cast<size_t>(i)] = i;
    Rng assign_rng(derive_seed(cfg.seed, "pk_assign"));
    assign_rng.shuffle(order);
    std::vector<bool> untreated(static_cast<size_t>(cfg.n), false);
    for (int k = 0; k < cfg.n_0; ++k) untreated[static_cast<size_t>(order[static_cast<size_t>(k)])] = true;

    ds.patients.resize(static_cast<size_t>(cfg.n));
    std::vector<PKParameters> eff(static_cast<size_t>(cfg.n));
    const OdeOptions opt;

    auto simulate_patient = [&](size_t i) {
        Rng rng(derive_seed(cfg.seed, "pk_patient", i));
        data::PatientRecord& p = ds.patients[i];
        p.id = static_cast<int64_t>(i);
        p.covariates = sampler ? sampler->draw(rng) : random_pk_covariates(rng);
        const double dose = rng.uniform(cfg.a_min, cfg.a_max);
        p.treated = !untreated[i];
        p.dose = p.treated ? dose : 0.0;
        eff[i] = pk_effective_params(base, p.covariates);
        const auto times = measurement_times(rng, cfg.n_t, cfg.t_max, cfg.sampling);
        const auto traj = solve_pk_ode(eff[i], pk_initial_state(eff[i], p.dose, p.covariates[3]),
                                       times, opt);
        p.measurements.resize(times.size());
        for (size_t j = 0; j < times.size(); ++j)
            p.measurements[j] = {times[j], traj[j] + cfg.noise_sd * rng.normal()};
    };
    parallel_for(cfg.n, simulate_patient);
    data::validate(ds);

    // Ground truth: the system is linear in its initial state and the dose
    // enters only through DEPOT(0), so the counterfactual difference per
    // patient is dose * (unit-depot response). The Monte-Carlo average over
    // the population is cached on a fine grid and Hermite-interpolated.
    const double t_hi = 1.25 * cfg.t_max;
    const int n_grid = 2049;
    std::vector<double> grid(static_cast<size_t>(n_grid));
    for (int j = 0; j < n_grid; ++j) grid[static_cast<size_t>(j)] = t_hi * j / (n_grid - 1);
    const UnitResponses resp = pk_unit_responses(eff, grid, opt);

    auto mean_curve = std::make_shared<std::vector<double>>(static_cast<size_t>(n_grid), 0.0);
    auto mean_deriv = std::make_shared<std::vector<double>>(static_cast<size_t>(n_grid), 0.0);
    for (int i = 0; i < cfg.n; ++i)  // serial reduction in patient order
        for (int j = 0; j < n_grid; ++j) {
            (*mean_curve)[static_cast<size_t>(j)] +=
                resp.values[static_cast<size_t>(i) * static_cast<size_t>(n_grid) + static_cast<size_t>(j)];
            (*mean_deriv)[static_cast<size_t>(j)] +=
                resp.derivs[static_cast<size_t>(i) * static_cast<size_t>(n_grid) + static_cast<size_t>(j)];
        }
    for (auto& v : *mean_curve) v /= cfg.n;
    for (auto& v : *mean_deriv) v /= cfg.n;

    GroundTruthSurface surface;
    surface.provenance = "monte_carlo";
    surface.population = cfg.n;
    surface.a_min = cfg.a_min;
    surface.a_max = cfg.a_max;
    surface.t_max = cfg.t_max;
    const double dt = grid[1] - grid[0];
    surface.evaluator = [mean_curve, mean_deriv, t_hi, dt](double a, double t) {
        if (a == 0.0) return 0.0;
        if (t < 0.0 || t > t_hi) throw std::out_of_range("pk truth queried outside [0, 1.25*t_max]");
        const auto& v = *mean_curve;
        const auto& d = *mean_deriv;
        size_t j = std::min(static_cast<size_t>(t / dt), v.size() - 2);
        const double s = (t - dt * static_cast<double>(j)) / dt;
        const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
        const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
        const double g = h00 * v[j] + h10 * dt * d[j] + h01 * v[j + 1] + h11 * dt * d[j + 1];
        return a * g;
    };
    return {std::move(ds), std::move(surface)};
}

}  // namespace dosetime::synth
