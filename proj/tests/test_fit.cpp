#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dosetime/fit.hpp"
#include "dosetime/rng.hpp"

using namespace dosetime;
using namespace dosetime::fit;
using semantic::Composition;
using semantic::composition_from_label;

namespace {

// Exact saturating-rise truth: tau(a, t) = A(a) * (1 - exp(-2t)) with
// A(a) = 0.6 + 0.4a, representable by a (+-h) branch with dose-linear maps.
double saturating_truth(double a, double t) {
    return (0.6 + 0.4 * a) * (1.0 - std::exp(-2.0 * t));
}

std::vector<FitPoint> saturating_points(int n_patients, int n_times, uint64_t seed,
                                        double noise = 0.0) {
    Rng rng(seed);
    std::vector<FitPoint> pts;
    for (int i = 0; i < n_patients; ++i) {
        const double a = rng.uniform(0.05, 1.0);
        const bool train = i % 10 < 7;
        for (int j = 0; j < n_times; ++j) {
            const double t = rng.uniform(0.0, 1.0);
            pts.push_back({a, t, saturating_truth(a, t) + noise * rng.normal(), train});
        }
    }
    return pts;
}

surrogate::SurrogateSet two_regime_surrogates(int n_patients, int n_times, uint64_t seed) {
    Rng rng(seed);
    surrogate::SurrogateSet set;
    for (int i = 0; i < n_patients; ++i) {
        const double a = 0.02 + 0.96 * (i + 0.5) / n_patients;
        for (int j = 0; j < n_times; ++j) {
            const double t = rng.uniform(0.0, 1.0);
            double tau;
            if (a < 0.5) {
                tau = 0.8 * a * (1.0 - std::exp(-4.0 * t));  // saturating
            } else {
                // peaked: rises to a maximum near t = 0.3, decays to a plateau
                const double peak = 0.5 + a;
                const double g = std::exp(-(t - 0.3) * (t - 0.3) / 0.045);
                const double g0 = std::exp(-0.3 * 0.3 / 0.045);
                tau = t <= 0.3 ? peak * (g - g0) / (1.0 - g0)
                               : 0.3 * peak + (peak - 0.3 * peak) * g;
            }
            set.points.push_back({a, t, tau + 0.005 * rng.normal(), i, j});
        }
    }
    return set;
}

}  // namespace

TEST_CASE("objective gradients match central finite differences") {
    const auto pts = saturating_points(30, 8, 99, 0.02);
    for (const char* label : {"+-h", "++b,+-h", "++b,+-b,--b,-+h"}) {
        const auto spec = make_branch_spec(composition_from_label(label));
        BranchObjective obj(spec, pts, {0.0, 1.0}, 0.05, 0.01, 21);

        // Random coefficient points near a plausible init.
        Rng rng(4242);
        std::vector<double> base = obj.pack(spec);
        for (int point = 0; point < 20; ++point) {
            std::vector<double> x = base;
            for (auto& v : x) v += rng.normal() * 0.4;
            std::vector<double> grad;
            obj.eval(x, grad);

            std::vector<double> fd(x.size());
            const double h = 1e-5;
            std::vector<double> dummy;
            for (size_t i = 0; i < x.size(); ++i) {
                auto xp = x, xm = x;
                xp[i] += h;
                xm[i] -= h;
                fd[i] = (obj.eval(xp, dummy) - obj.eval(xm, dummy)) / (2.0 * h);
            }
            double num = 0.0, den = 0.0;
            for (size_t i = 0; i < x.size(); ++i) {
                num += (grad[i] - fd[i]) * (grad[i] - fd[i]);
                den += fd[i] * fd[i];
            }
            CHECK(std::sqrt(num) <= 1e-4 * std::max(1e-8, std::sqrt(den)));
        }
    }
}

TEST_CASE("self-consistency: constant-in-dose truth is recovered near-exactly") {
    Rng rng(7);
    std::vector<FitPoint> pts;
    for (int i = 0; i < 60; ++i) {
        const double a = rng.uniform(0.05, 1.0);
        const bool train = i % 10 < 7;
        for (int j = 0; j < 12; ++j) {
            const double t = rng.uniform(0.0, 1.0);
            pts.push_back({a, t, 1.0 - std::exp(-2.0 * t), train});
        }
    }
    FitConfig cfg;
    cfg.seed = 21;
    cfg.trials = 5;
    const auto fitted = fit_branch(pts, {0.0, 1.0}, composition_from_label("+-h"), cfg);
    REQUIRE(fitted.feasible);
    CHECK(fitted.train_loss < 1e-6);
    CHECK(fitted.val_loss < 1e-6);

    // Recovered asymptote map within 1e-3 of the generating value.
    for (double a : {0.1, 0.3, 0.55, 0.8, 1.0}) {
        const auto rep = rep_at_dose(fitted.spec, a);
        CHECK(std::fabs(rep.terminal - 1.0) < 1e-3);
    }

    SUBCASE("same seed and config give bit-identical coefficients") {
        const auto again = fit_branch(pts, {0.0, 1.0}, composition_from_label("+-h"), cfg);
        REQUIRE(again.feasible);
        CHECK(again.trial == fitted.trial);
        for (int p = 0; p < fitted.spec.n_props(); ++p)
            for (int i = 0; i < kBasisSize; ++i)
                CHECK(again.spec.props[static_cast<size_t>(p)].coeffs[static_cast<size_t>(i)] ==
                      fitted.spec.props[static_cast<size_t>(p)].coeffs[static_cast<size_t>(i)]);
    }

    SUBCASE("duplicating every point leaves the fit essentially unchanged") {
        auto doubled = pts;
        doubled.insert(doubled.end(), pts.begin(), pts.end());
        const auto refit = fit_branch(doubled, {0.0, 1.0}, composition_from_label("+-h"), cfg);
        REQUIRE(refit.feasible);
        for (double a : {0.2, 0.5, 0.9})
            for (double t : {0.1, 0.5, 1.0}) {
                const double x = curve_at_dose(fitted.spec, a).eval(t);
                const double y = curve_at_dose(refit.spec, a).eval(t);
                CHECK(std::fabs(x - y) < 1e-5);
            }
    }
}

TEST_CASE("null target fits to a near-zero surface") {
    Rng rng(3);
    std::vector<FitPoint> pts;
    for (int i = 0; i < 40; ++i) {
        const double a = rng.uniform(0.05, 1.0);
        for (int j = 0; j < 10; ++j)
            pts.push_back({a, rng.uniform(0.0, 1.0), 0.0, i % 10 < 7});
    }
    FitConfig cfg;
    cfg.seed = 5;
    cfg.trials = 3;
    const auto fitted = fit_branch(pts, {0.0, 1.0}, composition_from_label("+-h"), cfg);
    REQUIRE(fitted.feasible);
    for (double a : {0.1, 0.5, 1.0}) {
        const auto curve = curve_at_dose(fitted.spec, a);
        for (double t : {0.0, 0.2, 0.6, 1.0}) CHECK(std::fabs(curve.eval(t)) < 1e-3);
    }
}

TEST_CASE("too few points in the interval rejects the candidate") {
    const auto pts = saturating_points(2, 5, 1);  // 10 points < 20
    FitConfig cfg;
    const auto fitted = fit_branch(pts, {0.0, 1.0}, composition_from_label("+-h"), cfg);
    CHECK(!fitted.feasible);
    CHECK(fitted.diagnostic.find("surrogate points") != std::string::npos);
}

TEST_CASE("composition map selects the generating composition with one branch") {
    surrogate::SurrogateSet set;
    Rng rng(13);
    for (int i = 0; i < 50; ++i) {
        const double a = rng.uniform(0.05, 1.0);
        for (int j = 0; j < 10; ++j) {
            const double t = rng.uniform(0.0, 1.0);
            set.points.push_back({a, t, saturating_truth(a, t) + 0.002 * rng.normal(), i, j});
        }
    }
    const auto library = semantic::enumerate_compositions(2, semantic::Terminal::Asymptote);
    FitConfig cfg;
    cfg.seed = 31;
    cfg.trials = 3;
    cfg.max_iter = 200;
    const auto model = fit_composition_map(set, library, cfg, 3);
    CHECK(model.n_branches() == 1);
    CHECK(model.branches[0].spec.comp.label() == "+-h");

    SUBCASE("selected validation loss is at most every single-branch candidate's") {
        for (const auto& [label, val] : model.candidate_val_losses)
            CHECK(model.val_loss <= val + 1e-12);
    }

    SUBCASE("prediction contracts") {
        for (double t : {0.0, 0.5, 1.0, 2.0}) CHECK(predict_tau(model, 0.0, t) == 0.0);
        CHECK_THROWS_AS(predict_tau(model, 1.5, 0.5), std::out_of_range);
        CHECK_THROWS_AS(predict_tau(model, -0.1, 0.5), std::out_of_range);
        for (double a : {0.2, 0.6, 1.0}) {
            const auto rep = rep_at_dose(model.branch_for(a).spec, a);
            CHECK(std::fabs(predict_tau(model, a, 10.0) - rep.terminal) < 1e-3);
        }
        // Out-domain predictions stay within the span of the semantic values.
        for (double a : {0.2, 0.6, 1.0}) {
            const auto rep = rep_at_dose(model.branch_for(a).spec, a);
            double lo = rep.terminal, hi = rep.terminal;
            for (double v : rep.values) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            for (double t : {1.0, 1.1, 1.25}) {
                const double p = predict_tau(model, a, t);
                CHECK(p >= lo - 1e-9);
                CHECK(p <= hi + 1e-9);
            }
        }
    }

    SUBCASE("library of size 1 is a forced choice") {
        const std::vector<Composition> single{composition_from_label("-+h")};
        const auto forced = fit_composition_map(set, single, cfg, 2);
        CHECK(forced.n_branches() == 1);
        CHECK(forced.branches[0].spec.comp.label() == "-+h");
    }

    SUBCASE("model json round trip preserves predictions") {
        save_model(model, "/tmp/dosetime_model.json");
        const auto back = load_model("/tmp/dosetime_model.json");
        for (double a : {0.1, 0.5, 0.9})
            for (double t : {0.0, 0.4, 1.2})
                CHECK(predict_tau(back, a, t) == predict_tau(model, a, t));
    }
}

TEST_CASE("two-regime surrogates produce a branched composition map") {
    const auto set = two_regime_surrogates(120, 12, 17);
    const auto library = semantic::enumerate_compositions(4, semantic::Terminal::Asymptote);
    FitConfig cfg;
    cfg.seed = 11;
    cfg.trials = 3;
    cfg.max_iter = 250;
    const auto model = fit_composition_map(set, library, cfg, 3);
    CHECK(model.n_branches() >= 2);
    const double cut = model.branches[0].interval.hi;
    CHECK(cut >= 0.33);
    CHECK(cut <= 0.67);
}

TEST_CASE("exported property curves reproduce predictions by manual assembly") {
    const auto pts = saturating_points(40, 10, 23);
    FitConfig cfg;
    cfg.seed = 2;
    cfg.trials = 2;
    const auto fitted = fit_branch(pts, {0.0, 1.0}, composition_from_label("++b,+-h"), cfg);
    REQUIRE(fitted.feasible);
    SemanticModel model;
    model.branches = {fitted};

    const auto tables = export_property_curves(model, 11);
    REQUIRE(tables.size() == 1);
    const auto& tab = tables[0];
    CHECK(tab.doses.front() == doctest::Approx(0.0));
    CHECK(tab.doses.back() == doctest::Approx(1.0));
    REQUIRE(tab.names.size() == 6);

    for (size_t g = 1; g < tab.doses.size(); ++g) {
        const double a = tab.doses[g];
        semantic::SemanticRepresentation rep;
        rep.composition = fitted.spec.comp;
        rep.t0 = 0.0;
        rep.values = {tab.values[g][0], tab.values[g][2]};  // v0, value at transition 1
        rep.transition_times = {tab.values[g][1]};
        rep.deriv_start = tab.values[g][3];
        rep.deriv_end = tab.values[g][4];
        rep.terminal = tab.values[g][5];
        for (double t : {0.0, 0.3, 0.8, 1.2}) {
            const double manual = semantic::reconstruct_trajectory(rep, {t})[0];
            CHECK(std::fabs(manual - predict_tau(model, a, t)) < 1e-9);
        }
    }

    SUBCASE("constant property map exports a constant column") {
        // The time-increment raw is constant in dose at init; after fitting it
        // may vary, so pin it and re-export.
        SemanticModel pinned = model;
        pinned.branches[0].spec.props[5].mode = MapMode::Pinned;
        pinned.branches[0].spec.props[5].pinned_value = 0.9;
        const auto t2 = export_property_curves(pinned, 7);
        for (const auto& row : t2[0].values) CHECK(row[5] == 0.9);
    }
}
