#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dosetime/dataset.hpp"
#include "dosetime/gbt.hpp"

namespace dosetime::baseline {

struct TuningBudget {
    int trials = 10;
    uint64_t seed = 0;
    double split_fraction = 0.7;
};

// Standardization statistics learned on the training split (inputs only).
struct Standardizer {
    std::vector<double> mean, sd;
    void apply(std::vector<double>& row) const {
        for (size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean[j]) / sd[j];
    }
};

struct NnPatient {
    int64_t id = 0;
    std::vector<double> x_std;
    std::vector<double> poly;  // polynomial coefficients in time, lowest order first
};

struct NnModel {
    std::vector<NnPatient> patients;
};

enum class BaselineKind { TreeEnsemble, NearestNeighbor };

// Untreated-trajectory model \hat{phi}_0(x, t). Trained on dose-0 patients
// only; prediction is defined for any t but warns outside [0, 1.25].
struct BaselineModel {
    BaselineKind kind = BaselineKind::TreeEnsemble;
    std::vector<std::string> covariate_names;
    Standardizer std_stats;  // over (covariates..., time)
    GbtModel gbt;
    NnModel nn;
    double validation_loss = 0.0;
    int winning_trial = -1;

    double predict(std::span<const double> covariates, double t) const;
    // Accepts covariates in any column order; `names` maps them onto the
    // model's training order.
    double predict_named(const std::vector<std::string>& names, std::span<const double> covariates,
                         double t) const;
};

// Random-search tuned gradient-boosted trees on inputs (x, t):
// shrinkage log-uniform [1e-4, 1], depth uniform [3, 10], trees in
// {50,100,150,200}, row/feature subsampling in {0.5,...,1.0}. Winner by
// (validation MSE, trial index). The OpenMP version runs trials in
// parallel; the _ref version is the serial reference kept for testing.
BaselineModel fit_tree_ensemble(const data::LongitudinalDataset& ds, const TuningBudget& budget);
BaselineModel fit_tree_ensemble_ref(const data::LongitudinalDataset& ds, const TuningBudget& budget);

// 1-nearest-neighbour matcher: nearest untreated training patient in
// standardized covariate space (ties -> smallest id), interpolated by a
// degree-3 polynomial fit of that patient's trajectory.
BaselineModel fit_nearest_neighbor(const data::LongitudinalDataset& ds, const TuningBudget& budget);

void save_baseline(const BaselineModel& m, const std::string& path);
BaselineModel load_baseline(const std::string& path);

}  // namespace dosetime::baseline
