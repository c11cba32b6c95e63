#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dosetime/rng.hpp"
#include "dosetime/semantic.hpp"

using namespace dosetime;
using namespace dosetime::semantic;

namespace {

SemanticRepresentation canonical_saturating_rise() {
    SemanticRepresentation rep;
    rep.composition = composition_from_label("+-h");
    rep.t0 = 0.0;
    rep.values = {0.0};
    rep.deriv_start = 1.0;
    rep.deriv_end = 1.0;
    rep.terminal = 1.0;  // asymptote
    return rep;
}

// Structure-respecting random representation: positive time increments,
// motif-signed value increments, signed boundary derivatives, terminal on
// the correct side. Mirrors the warps the fitting module uses.
SemanticRepresentation random_rep(const Composition& comp, Rng& rng) {
    const int k = comp.size();
    SemanticRepresentation rep;
    rep.composition = comp;
    rep.t0 = 0.0;
    double t = 0.0;
    for (int j = 1; j < k; ++j) {
        t += rng.uniform(0.05, 0.8 / std::max(1, k - 1));
        rep.transition_times.push_back(t);
    }
    double v = rng.uniform(-0.5, 0.5);
    rep.values.push_back(v);
    for (int j = 0; j + 1 < k; ++j) {
        v += comp.motifs[static_cast<size_t>(j)].mono * rng.uniform(0.1, 1.0);
        rep.values.push_back(v);
    }
    rep.deriv_start = comp.motifs.front().mono * rng.uniform(0.1, 3.0);
    rep.deriv_end = comp.motifs.back().mono * rng.uniform(0.1, 3.0);
    if (comp.motifs.back().extent == Extent::Asymptote)
        rep.terminal = rep.values.back() + comp.motifs.back().mono * rng.uniform(0.1, 1.0);
    else
        rep.terminal = rng.uniform(0.0, 2.0);
    return rep;
}

}  // namespace

TEST_CASE("canonical saturating rise validates cleanly") {
    const auto rep = canonical_saturating_rise();
    const auto violations = validate_semantics(rep, 0.0, 1.25);
    CHECK(violations.empty());
}

TEST_CASE("ordering violation is reported") {
    SemanticRepresentation rep;
    rep.composition = composition_from_label("++b,+-b,--b,-+h");
    rep.t0 = 0.0;
    rep.transition_times = {0.3, 0.2, 0.5};  // out of order
    rep.values = {0.0, 0.5, 1.0, 0.6};
    rep.deriv_start = 0.5;
    rep.deriv_end = -0.5;
    rep.terminal = 0.2;
    bool found = false;
    for (const auto& v : validate_semantics(rep, 0.0, 1.25))
        if (v.code == "ordering") found = true;
    CHECK(found);
}

TEST_CASE("asymptote on the wrong side is reported") {
    auto rep = canonical_saturating_rise();
    rep.terminal = -0.5;  // below value at t0 for a rising motif
    bool found = false;
    for (const auto& v : validate_semantics(rep, 0.0, 1.25))
        if (v.code == "asymptote side") found = true;
    CHECK(found);
}

TEST_CASE("single-motif terminal reconstruction has the closed form 1 - exp(-t)") {
    const auto rep = canonical_saturating_rise();  // A=1, v0=0, d0=1 -> lambda=1
    const std::vector<double> times{0.0, 0.25, 0.5, 1.0, 2.0, 50.0};
    const auto traj = reconstruct_trajectory(rep, times);
    for (size_t i = 0; i < times.size(); ++i)
        CHECK(traj[i] == doctest::Approx(1.0 - std::exp(-times[i])).epsilon(1e-12));
    CHECK(traj.back() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("derivative is continuous at an inflection transition") {
    SemanticRepresentation rep;
    rep.composition = composition_from_label("++b,+-h");
    rep.t0 = 0.0;
    rep.transition_times = {0.4};
    rep.values = {0.0, 0.5};
    rep.deriv_start = 0.2;
    rep.deriv_end = 2.0;
    rep.terminal = 1.0;
    REQUIRE(validate_semantics(rep, 0.0, 1.25).empty());
    const double h = 1e-6;
    const auto f = [&](double t) { return reconstruct_trajectory(rep, {t})[0]; };
    const double t1 = 0.4;
    const double left = (f(t1) - f(t1 - h)) / h;
    const double right = (f(t1 + h) - f(t1)) / h;
    CHECK(std::fabs(left - right) < 1e-5 * std::max(1.0, std::fabs(left)));
}

TEST_CASE("reconstruction interpolates stored transition values to 1e-10") {
    Rng rng(77);
    for (const auto& comp : enumerate_compositions(4, Terminal::Asymptote)) {
        for (int trial = 0; trial < 5; ++trial) {
            const auto rep = random_rep(comp, rng);
            if (!validate_semantics(rep, 0.0, 1.25).empty()) continue;
            std::vector<double> times{rep.t0};
            times.insert(times.end(), rep.transition_times.begin(), rep.transition_times.end());
            const auto traj = reconstruct_trajectory(rep, times);
            for (size_t j = 0; j < rep.values.size(); ++j)
                CHECK(std::fabs(traj[j] - rep.values[j]) < 1e-10);
        }
    }
}

TEST_CASE("saturating rise is monotone on a sampled grid") {
    const auto rep = canonical_saturating_rise();
    std::vector<double> grid;
    for (int i = 0; i <= 2000; ++i) grid.push_back(1.25 * i / 2000.0);
    const auto traj = reconstruct_trajectory(rep, grid);
    for (size_t i = 1; i < traj.size(); ++i) CHECK(traj[i] >= traj[i - 1] - 1e-12);
}

TEST_CASE("sign soundness: reconstructed curves realize their motif signs") {
    // Every enumerated composition (h-terminal library plus u coverage),
    // random valid representations, 1e4-point grid, 1e-9 tolerance band.
    auto lib = enumerate_compositions(4, Terminal::Asymptote);
    const auto lib_u = enumerate_compositions(3, Terminal::Unbounded);
    lib.insert(lib.end(), lib_u.begin(), lib_u.end());

    Rng rng(2024);
    int checked = 0, skipped = 0;
    const int n_grid = 10000;
    const double horizon = 1.25;
    for (const auto& comp : lib) {
        for (int trial = 0; trial < 8; ++trial) {
            const auto rep = random_rep(comp, rng);
            if (!validate_semantics(rep, 0.0, horizon).empty()) {
                ++skipped;
                continue;
            }
            ++checked;
            std::vector<double> grid(n_grid);
            for (int i = 0; i < n_grid; ++i) grid[static_cast<size_t>(i)] = horizon * i / (n_grid - 1);
            const auto f = reconstruct_trajectory(rep, grid);

            std::vector<double> bounds{rep.t0};
            bounds.insert(bounds.end(), rep.transition_times.begin(), rep.transition_times.end());
            bounds.push_back(horizon);
            const double cell = horizon / (n_grid - 1);
            for (int seg = 0; seg < comp.size(); ++seg) {
                const int m = comp.motifs[static_cast<size_t>(seg)].mono;
                const int c = comp.motifs[static_cast<size_t>(seg)].conv;
                const int lo = static_cast<int>(std::ceil(bounds[static_cast<size_t>(seg)] / cell)) + 1;
                const int hi = static_cast<int>(std::floor(bounds[static_cast<size_t>(seg + 1)] / cell)) - 1;
                for (int i = lo; i + 1 <= hi; ++i) {
                    const double d1 = f[static_cast<size_t>(i + 1)] - f[static_cast<size_t>(i)];
                    if (std::fabs(d1) > 1e-9) CHECK(m * d1 > 0.0);
                }
                for (int i = lo; i + 1 < hi; ++i) {
                    const double d2 = f[static_cast<size_t>(i + 1)] - 2.0 * f[static_cast<size_t>(i)] +
                                      f[static_cast<size_t>(i - 1)];
                    if (std::fabs(d2) > 1e-9) CHECK(c * d2 > 0.0);
                }
            }
        }
    }
    CHECK(checked > 40);  // the generator must produce plenty of valid cases
}

TEST_CASE("rejects the undefined terminal form") {
    auto rep = canonical_saturating_rise();
    rep.terminal = rep.values.back();  // asymptote equals last value, derivative nonzero
    CHECK_THROWS_AS(reconstruct_trajectory(rep, {0.1}), std::invalid_argument);
}

TEST_CASE("semantic distance") {
    Rng rng(9);
    const auto comp = composition_from_label("++b,+-h");
    const auto a = random_rep(comp, rng);
    CHECK(semantic_distance(a, a) == 0.0);

    SUBCASE("asymptote shift is a single-coordinate change") {
        auto b = a;
        const double delta = 0.25;
        b.terminal += delta;
        const double scale = std::max({1e-12, std::fabs(a.terminal), std::fabs(b.terminal)});
        CHECK(semantic_distance(a, b) == doctest::Approx(delta / scale));
    }

    SUBCASE("symmetry on random pairs") {
        for (int i = 0; i < 20; ++i) {
            const auto x = random_rep(comp, rng);
            const auto y = random_rep(comp, rng);
            CHECK(semantic_distance(x, y) == doctest::Approx(semantic_distance(y, x)));
        }
    }

    SUBCASE("composition mismatch is an error") {
        const auto other = random_rep(composition_from_label("+-h"), rng);
        CHECK_THROWS_AS(semantic_distance(a, other), std::invalid_argument);
    }
}

TEST_CASE("json round trip") {
    Rng rng(5);
    const auto rep = random_rep(composition_from_label("++b,+-b,--b,-+h"), rng);
    const auto back = semantic_from_json(semantic_to_json(rep));
    CHECK(back.composition == rep.composition);
    CHECK(back.transition_times == rep.transition_times);
    CHECK(back.values == rep.values);
    CHECK(back.deriv_start == rep.deriv_start);
    CHECK(back.terminal == rep.terminal);
}

TEST_CASE("property names follow the composition structure") {
    const auto names = property_names(composition_from_label("++b,+-b,--b,-+h"));
    REQUIRE(names.size() == 10);
    CHECK(names[0] == "value at t0");
    CHECK(names[1] == "t of transition 1");
    CHECK(names[6] == "value at transition 3");
    CHECK(names[7] == "derivative at t0");
    CHECK(names[8] == "derivative at last transition");
    CHECK(names[9] == "asymptote");

    const auto single = property_names(composition_from_label("+-h"));
    REQUIRE(single.size() == 3);
    CHECK(single[1] == "derivative at t0");
    CHECK(single[2] == "asymptote");
}
