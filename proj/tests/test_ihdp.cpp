#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dosetime/ihdp.hpp"
#include "dosetime/surrogate.hpp"

using namespace dosetime;
using namespace dosetime::synth;

TEST_CASE("closed-form surface matches hand-computed anchor values") {
    CHECK(ihdp_t_max(6.0) == doctest::Approx(5.0));
    // tau_max(6) = 10 + 60*(5/30)*(1 - 5/30)^3 = 10 + 10*(125/216)
    CHECK(ihdp_tau_max(6.0) == doctest::Approx(10.0 + 1250.0 / 216.0).epsilon(1e-12));
    CHECK(ihdp_tau_max(6.0) == doctest::Approx(15.787).epsilon(1e-4));

    // a = 2: t_max = 25/(-2.6)*(-4) + 5 ~ 43.46 >= 30, so the logistic branch.
    CHECK(ihdp_t_max(2.0) == doctest::Approx(25.0 / 2.6 * 4.0 + 5.0));
    CHECK(ihdp_t_max(2.0) >= 30.0);
    const double z0 = std::sqrt(2.0 / 4.0) * 45.0 - 11.5;
    const double expect = 6.0 / (1.0 + std::exp(-z0)) - 1.0 / (1.0 + std::exp(5.0));
    CHECK(ground_truth_tau_ihdp(2.0, 45.0) == doctest::Approx(expect).epsilon(1e-12));

    // Logistic branch saturates towards 3a (minus the small offset).
    CHECK(ground_truth_tau_ihdp(2.0, 1000.0) ==
          doctest::Approx(6.0 - 1.0 / (1.0 + std::exp(5.0))).epsilon(1e-9));
}

TEST_CASE("bump branch is zero at t = 0 and continuous at its peak") {
    for (double a : {4.0, 5.0, 6.0}) CHECK(ground_truth_tau_ihdp(a, 0.0) == doctest::Approx(0.0));
    const double tm = ihdp_t_max(6.0);
    const double left = ground_truth_tau_ihdp(6.0, tm - 1e-9);
    const double right = ground_truth_tau_ihdp(6.0, tm + 1e-9);
    CHECK(std::fabs(left - ihdp_tau_max(6.0)) < 1e-7);
    CHECK(std::fabs(right - ihdp_tau_max(6.0)) < 1e-7);
    CHECK(std::fabs(left - right) < 1e-7);
}

TEST_CASE("surface is continuous along time everywhere in dose") {
    // Fine-grid jump check along t; each jump must stay within 10x the local
    // scale estimated from its neighbours.
    for (double a = 2.0; a <= 6.0; a += 0.23) {
        const int n = 2000;
        std::vector<double> v(n);
        for (int i = 0; i < n; ++i) v[static_cast<size_t>(i)] = ground_truth_tau_ihdp(a, 75.0 * i / (n - 1));
        for (int i = 2; i + 1 < n; ++i) {
            const double jump = std::fabs(v[static_cast<size_t>(i + 1)] - v[static_cast<size_t>(i)]);
            const double local = std::max({std::fabs(v[static_cast<size_t>(i)] - v[static_cast<size_t>(i - 1)]),
                                           std::fabs(v[static_cast<size_t>(i - 1)] - v[static_cast<size_t>(i - 2)]),
                                           1e-6});
            CHECK(jump <= 10.0 * local);
        }
    }
}

TEST_CASE("generated ihdp dataset") {
    IhdpConfig cfg;
    cfg.n = 240;
    cfg.n_0 = 200;
    cfg.n_t = 5;
    cfg.seed = 17;
    const auto [ds, truth] = generate_ihdp_dataset(cfg);
    CHECK(ds.n_patients() == 240);
    CHECK(ds.n_treated() == 40);
    CHECK(ds.covariate_dim() == 25);
    CHECK(truth.provenance == "analytic");

    SUBCASE("doses uniform in [2, 6], times in [0, 60]") {
        for (const auto& p : ds.patients) {
            if (p.treated) {
                CHECK(p.dose >= 2.0);
                CHECK(p.dose <= 6.0);
            }
            CHECK(p.measurements.back().time <= 60.0);
        }
    }

    SUBCASE("binary covariate columns are 0/1") {
        for (const auto& p : ds.patients)
            for (int b = 6; b < 25; ++b) {
                const double v = p.covariates[static_cast<size_t>(b)];
                CHECK((v == 0.0 || v == 1.0));
            }
    }

    SUBCASE("heterogeneity term is exactly sample-centered at every dose") {
        for (double a : {2.0, 3.7, 6.0}) {
            const auto h = ihdp_h_values(cfg, ds, a);
            double mean = 0.0;
            for (double v : h) mean += v;
            mean /= static_cast<double>(h.size());
            CHECK(std::fabs(mean) < 1e-10);
        }
    }

    SUBCASE("reported truth equals the closed form times one shared factor") {
        const double ref = truth(4.0, 10.0) / ground_truth_tau_ihdp(4.0, 10.0);
        CHECK(ref > 0.0);
        for (double a : {2.5, 3.0, 4.5, 6.0})
            for (double t : {1.0, 8.0, 30.0, 60.0, 75.0}) {
                const double f = truth(a, t) / ground_truth_tau_ihdp(a, t);
                CHECK(f == doctest::Approx(ref).epsilon(1e-12));
            }
        CHECK(truth(0.0, 10.0) == 0.0);
    }

    SUBCASE("bit-identical regeneration, seed changes data") {
        const auto [ds2, truth2] = generate_ihdp_dataset(cfg);
        CHECK(surrogate::dataset_content_hash(ds) == surrogate::dataset_content_hash(ds2));
        IhdpConfig other = cfg;
        other.seed = 18;
        const auto [ds3, truth3] = generate_ihdp_dataset(other);
        CHECK(surrogate::dataset_content_hash(ds) != surrogate::dataset_content_hash(ds3));
    }
}

TEST_CASE("paper-scale treated count: n_0=1000, n=1200 -> 200 treated") {
    IhdpConfig cfg;
    cfg.n = 1200;
    cfg.n_0 = 1000;
    cfg.n_t = 20;
    cfg.seed = 0;
    const auto [ds, truth] = generate_ihdp_dataset(cfg);
    CHECK(ds.n_treated() == 200);
    CHECK(ds.n_measurements() == 24000);
}

TEST_CASE("moments-file errors") {
    IhdpConfig cfg;
    cfg.n = 10;
    cfg.n_0 = 5;
    cfg.n_t = 2;
    cfg.moments_path = "/tmp/dosetime_ihdp_bad_moments.json";
    CovariateMoments bad;
    bad.mean = {0.0, 0.0};
    bad.covariance = {{1.0, 5.0}, {5.0, 1.0}};  // not PSD
    save_moments(bad, cfg.moments_path);
    CHECK_THROWS_AS(generate_ihdp_dataset(cfg), std::runtime_error);
}
