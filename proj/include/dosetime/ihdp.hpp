#pragma once

#include <cstdint>
#include <string>

#include "dosetime/dataset.hpp"
#include "dosetime/pk.hpp"
#include "dosetime/truth.hpp"

namespace dosetime::synth {

// Closed-form effect surface parameters. The trajectory peaks at
// t_max(a) = 25/(-2.6) * (a - 6) + 5 with height tau_max and decays towards
// the level h; doses with t_max(a) >= 30 switch to a logistic rise instead.
struct IhdpTauParams {
    double s = 7.0;       // bump width
    double h = 10.0;      // decay level
    double t_max_slope = 25.0 / (-2.6);
    double t_max_ref = 6.0;
    double t_max_offset = 5.0;
};

double ihdp_t_max(double a);
double ihdp_tau_max(double a);

// Effect trajectory in original units, a in [2, 6], t >= 0.
double ground_truth_tau_ihdp(double a, double t);

struct IhdpConfig {
    int n = 1200;
    int n_0 = 1000;
    int n_t = 20;
    Sampling sampling = Sampling::Irregular;
    std::string moments_path;  // empty -> builtin synthetic moments
    uint64_t seed = 0;
    double noise_sd = 0.01;
    double a_min = 2.0, a_max = 6.0;
    double t_max = 60.0;
};

// Synthetic stand-in for covariate moments estimated from study data:
// 25 columns, indices 6..24 binary. Deterministic.
CovariateMoments builtin_ihdp_moments();

// The returned surface evaluates the closed form above times the final
// rescaling constant of the outcome pipeline, so
// surface(a, t) / ground_truth_tau_ihdp(a, t) is the same for every (a, t).
std::pair<data::LongitudinalDataset, GroundTruthSurface> generate_ihdp_dataset(const IhdpConfig& cfg);

// Replays the generator's static heterogeneity term h(a, x) for each patient
// of a generated dataset. Sample-centered by construction: the mean over
// patients is zero at every dose.
std::vector<double> ihdp_h_values(const IhdpConfig& cfg, const data::LongitudinalDataset& ds,
                                  double a);

}  // namespace dosetime::synth
