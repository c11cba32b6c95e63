#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dosetime/dataset.hpp"
#include "dosetime/rng.hpp"
#include "dosetime/truth.hpp"

namespace dosetime::synth {

// Two-compartment model with a transit absorption chain:
// DEPOT -> TRANS1 -> TRANS2 -> TRANS3 -> CENT <-> PERI, elimination from CENT.
struct PKParameters {
    double CL = 80.247;  // clearance
    double V1 = 486.0;   // central volume
    double Q = 79.0;     // inter-compartment clearance
    double V2 = 271.0;   // peripheral volume
    double KTR = 3.34;   // transit rate
};

struct PKState {
    double depot = 0.0;
    double trans1 = 0.0, trans2 = 0.0, trans3 = 0.0;
    double cent = 0.0;
    double peri = 0.0;

    std::array<double, 6> to_array() const { return {depot, trans1, trans2, trans3, cent, peri}; }
};

void pk_rhs(const PKParameters& p, const double y[6], double dy[6]);

struct OdeOptions {
    double rtol = 1e-9;
    double atol = 1e-9;
    double h_init = 1e-3;
    double h_min = 1e-13;
};

// Adaptive Dormand-Prince RK45; advances y in place from t0 to t1.
// Throws on step-size underflow, reporting the failure time.
void integrate_rk45(const PKParameters& p, std::array<double, 6>& y, double t0, double t1,
                    const OdeOptions& opt = {});

// CENT trajectory at the requested times, rescaled by 1000 / V1.
// Times must be non-decreasing with times[0] >= 0.
std::vector<double> solve_pk_ode(const PKParameters& p, const PKState& initial,
                                 const std::vector<double>& times, const OdeOptions& opt = {});

// Fixed-step RK4 reference implementation (test oracle; also the serial
// reference for the batched kernel below).
std::vector<double> solve_pk_ode_rk4(const PKParameters& p, const PKState& initial,
                                     const std::vector<double>& times, double step);

enum class Sampling { Regular, Irregular };
enum class CovariateMode { Random, MomentsFile };

struct PKConfig {
    int n = 1200;
    int n_0 = 1000;
    int n_t = 20;
    Sampling sampling = Sampling::Irregular;
    CovariateMode covariate_mode = CovariateMode::Random;
    std::string moments_path;  // used when covariate_mode == MomentsFile
    uint64_t seed = 0;
    double noise_sd = 0.01;
    double a_min = 3.0, a_max = 10.0;
    double t_max = 24.0;
};

// Covariate schema (d=8): weight, age, hematocrit, y0, sex, cyp, form,
// creatinine. CL is modulated by cyp and hematocrit, V1 by weight:
//   CL_i = CL * (1 + 0.4*cyp) * sqrt(35 / hematocrit)
//   V1_i = V1 * (weight / 70)^0.75
// y0 is the baseline central concentration: CENT(0) = y0 * V1_i / 1000.
PKParameters pk_effective_params(const PKParameters& base, const std::vector<double>& covariates);
PKState pk_initial_state(const PKParameters& effective, double dose, double y0);

const std::vector<std::string>& pk_covariate_names();

// Batched unit-depot responses used by the Monte-Carlo truth surface:
// row i holds patient i's scaled CENT response to a unit depot at the grid
// times (value and time-derivative). OpenMP over patients; *_ref is the
// plain serial loop kept for testing.
struct UnitResponses {
    std::vector<double> grid;    // shared time grid
    std::vector<double> values;  // n_patients x grid.size()
    std::vector<double> derivs;
};
UnitResponses pk_unit_responses(const std::vector<PKParameters>& params,
                                const std::vector<double>& grid, const OdeOptions& opt = {});
UnitResponses pk_unit_responses_ref(const std::vector<PKParameters>& params,
                                    const std::vector<double>& grid, const OdeOptions& opt = {});

std::pair<data::LongitudinalDataset, GroundTruthSurface> generate_pk_dataset(const PKConfig& cfg);

struct CovariateMoments {
    std::vector<double> mean;
    std::vector<std::vector<double>> covariance;
    std::vector<int> binary_columns;
};
CovariateMoments load_moments(const std::string& path);
void save_moments(const CovariateMoments& m, const std::string& path);

// Draws one covariate vector from the moments (binary columns thresholded
// at 0.5). Throws on a non-PSD covariance.
class MomentsSampler {
public:
    explicit MomentsSampler(const CovariateMoments& m);
    std::vector<double> draw(Rng& rng) const;
    int dim() const { return static_cast<int>(mean_.size()); }

private:
    std::vector<double> mean_;
    std::vector<std::vector<double>> chol_;  // lower triangular
    std::vector<int> binary_;
};

}  // namespace dosetime::synth
