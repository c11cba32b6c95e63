#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "dosetime/dataset.hpp"
#include "dosetime/pk.hpp"

using namespace dosetime;
using namespace dosetime::data;

namespace {

LongitudinalDataset tiny_dataset(int n_patients) {
    LongitudinalDataset ds;
    ds.covariate_names = {"x1", "x2"};
    ds.a_min = 3.0;
    ds.a_max = 10.0;
    ds.t_max = 24.0;
    for (int i = 0; i < n_patients; ++i) {
        PatientRecord p;
        p.id = i;
        p.covariates = {static_cast<double>(i), 1.0};
        p.dose = i % 2 == 0 ? 0.0 : 3.0 + (i % 7);
        p.treated = p.dose > 0.0;
        p.measurements = {{0.0, 1.0}, {1.0, 2.0}, {5.5, 0.5}};
        ds.patients.push_back(std::move(p));
    }
    return ds;
}

}  // namespace

TEST_CASE("empty dataset is rejected") {
    LongitudinalDataset ds;
    ds.covariate_names = {"x1"};
    CHECK_THROWS_WITH_AS(validate(ds), "no patients", DatasetError);
}

TEST_CASE("minimal valid dataset: one untreated patient, two measurements") {
    LongitudinalDataset ds;
    ds.covariate_names = {};
    ds.a_min = 1.0;
    ds.a_max = 2.0;
    ds.t_max = 1.0;
    PatientRecord p;
    p.id = 0;
    p.dose = 0.0;
    p.measurements = {{0.0, 0.3}, {1.0, 0.4}};
    ds.patients.push_back(p);
    CHECK_NOTHROW(validate(ds));
    CHECK(ds.n_patients() == 1);
    CHECK(ds.patients[0].n_measurements() == 2);

    save_dataset(ds, "/tmp/dosetime_min", FileFormat::Csv);
    const auto back = load_dataset("/tmp/dosetime_min", FileFormat::Csv);
    CHECK(back.n_patients() == 1);
    CHECK(back.patients[0].measurements[1].outcome == 0.4);
}

TEST_CASE("record invariants are enforced with the patient named") {
    auto ds = tiny_dataset(3);
    ds.patients[1].measurements = {{2.0, 1.0}, {1.0, 1.0}};
    CHECK_THROWS_AS(validate(ds), DatasetError);
    try {
        validate(ds);
    } catch (const DatasetError& e) {
        CHECK(std::string(e.what()).find("patient 1") != std::string::npos);
    }

    auto ds2 = tiny_dataset(3);
    ds2.patients[1].dose = 11.0;  // outside [3, 10]
    CHECK_THROWS_AS(validate(ds2), DatasetError);
}

TEST_CASE("round-trip through csv and json preserves a generated dataset") {
    synth::PKConfig cfg;
    cfg.n = 24;
    cfg.n_0 = 16;
    cfg.n_t = 4;
    cfg.seed = 7;
    const auto [ds, truth] = synth::generate_pk_dataset(cfg);

    for (auto format : {FileFormat::Csv, FileFormat::Json}) {
        save_dataset(ds, "/tmp/dosetime_rt", format);
        const auto back = load_dataset("/tmp/dosetime_rt", format);
        REQUIRE(back.n_patients() == ds.n_patients());
        CHECK(back.covariate_names == ds.covariate_names);
        CHECK(back.a_min == ds.a_min);
        CHECK(back.t_max == ds.t_max);
        CHECK(back.normalized == ds.normalized);
        for (int i = 0; i < ds.n_patients(); ++i) {
            const auto& a = ds.patients[static_cast<size_t>(i)];
            const auto& b = back.patients[static_cast<size_t>(i)];
            CHECK(a.id == b.id);
            CHECK(a.dose == b.dose);  // bit-exact via %.17g
            REQUIRE(a.covariates.size() == b.covariates.size());
            for (size_t j = 0; j < a.covariates.size(); ++j) CHECK(a.covariates[j] == b.covariates[j]);
            REQUIRE(a.measurements.size() == b.measurements.size());
            for (size_t j = 0; j < a.measurements.size(); ++j) {
                CHECK(a.measurements[j].time == b.measurements[j].time);
                CHECK(a.measurements[j].outcome == b.measurements[j].outcome);
            }
        }
    }
}

TEST_CASE("normalize maps dose and time ranges onto [0, 1]") {
    auto ds = tiny_dataset(4);
    ds.patients[1].dose = 3.0;   // a_min
    ds.patients[3].dose = 10.0;  // a_max
    const auto [norm, np] = normalize(ds);
    CHECK(norm.patients[1].dose == doctest::Approx(0.0));
    CHECK(norm.patients[3].dose == doctest::Approx(1.0));
    CHECK(norm.patients[0].dose == 0.0);  // untreated stays 0
    CHECK(norm.normalized);

    // Times on [0, 60]: 30 -> 0.5.
    NormalizationParams ihdp{2.0, 6.0, 60.0};
    CHECK(ihdp.norm_time(30.0) == doctest::Approx(0.5));

    SUBCASE("denormalize inverts to 1e-12 relative") {
        for (double a : {3.0, 4.7, 8.2, 10.0})
            CHECK(np.denorm_dose(np.norm_dose(a)) == doctest::Approx(a).epsilon(1e-12));
        for (double t : {0.0, 1.3, 12.0, 24.0})
            CHECK(np.denorm_time(np.norm_time(t)) == doctest::Approx(t).epsilon(1e-12));
    }

    SUBCASE("double normalization and degenerate ranges are errors") {
        CHECK_THROWS_AS(normalize(norm), DatasetError);
        auto bad = tiny_dataset(2);
        bad.a_max = bad.a_min;
        CHECK_THROWS_AS(normalize(bad), DatasetError);
        auto bad2 = tiny_dataset(2);
        bad2.t_max = 0.0;
        CHECK_THROWS_AS(normalize(bad2), DatasetError);
    }
}

TEST_CASE("split is an exact, deterministic patient-level partition") {
    const auto ds = tiny_dataset(10);
    const auto sp = split(ds, 0.7, 42);
    CHECK(sp.train_ids.size() == 7);
    CHECK(sp.validation_ids.size() == 3);

    const auto sp2 = split(ds, 0.7, 42);
    CHECK(sp.train_ids == sp2.train_ids);
    CHECK(sp.validation_ids == sp2.validation_ids);

    CHECK_THROWS_AS(split(tiny_dataset(1), 0.7, 1), DatasetError);
    CHECK_THROWS_AS(split(ds, 1.0, 1), DatasetError);

    SUBCASE("disjointness and coverage over 1000 patients") {
        const auto big = tiny_dataset(1000);
        for (uint64_t seed : {1u, 2u, 3u}) {
            const auto s = split(big, 0.7, seed);
            std::set<int64_t> train(s.train_ids.begin(), s.train_ids.end());
            std::set<int64_t> val(s.validation_ids.begin(), s.validation_ids.end());
            CHECK(train.size() + val.size() == 1000);
            for (int64_t id : val) CHECK(train.count(id) == 0);
            std::set<int64_t> all = train;
            all.insert(val.begin(), val.end());
            CHECK(all.size() == 1000);
            CHECK(*all.begin() == 0);
            CHECK(*all.rbegin() == 999);
        }
    }
}

TEST_CASE("split is a function of ids, not of patient order") {
    auto ds = tiny_dataset(10);
    const auto sp = split(ds, 0.7, 5);
    std::reverse(ds.patients.begin(), ds.patients.end());
    const auto sp2 = split(ds, 0.7, 5);
    CHECK(sp.train_ids == sp2.train_ids);
}
