#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dosetime/baseline.hpp"
#include "dosetime/dataset.hpp"

namespace dosetime::surrogate {

// One pseudo-effect at an observed treated (dose, time) pair:
// tau_tilde = observed outcome - baseline prediction.
struct SurrogatePoint {
    double dose = 0.0;  // normalized, > 0
    double time = 0.0;  // normalized, in [0, 1]
    double tau_tilde = 0.0;
    int64_t patient_id = 0;
    int measurement_index = 0;
};

struct SurrogateSet {
    std::vector<SurrogatePoint> points;
    std::string dataset_hash;
    std::string baseline_hash;
};

using BaselineFn = std::function<double(std::span<const double>, double)>;

// Builds one point per treated measurement; untreated patients contribute
// nothing. Requires a normalized dataset.
SurrogateSet build_surrogates(const data::LongitudinalDataset& ds, const BaselineFn& baseline,
                              const std::string& baseline_hash = "oracle");
SurrogateSet build_surrogates(const data::LongitudinalDataset& ds,
                              const baseline::BaselineModel& model);

struct SurrogateDiagnostics {
    std::array<int, 10> dose_hist{};
    std::array<int, 10> time_hist{};
    double mean = 0.0, sd = 0.0;
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
    double outlier_fraction = 0.0;  // |tau_tilde| > 5 * IQR
};

SurrogateDiagnostics surrogate_diagnostics(const SurrogateSet& set);

void save_surrogates(const SurrogateSet& set, const std::string& path);
SurrogateSet load_surrogates(const std::string& path);

std::string dataset_content_hash(const data::LongitudinalDataset& ds);

}  // namespace dosetime::surrogate
