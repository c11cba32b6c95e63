#pragma once

#include <functional>
#include <string>
#include <vector>

namespace dosetime::synth {

// Ground-truth effect surface in original (unnormalized) units:
// evaluator(a, t) with evaluator(0, t) == 0 for all t.
struct GroundTruthSurface {
    std::function<double(double a, double t)> evaluator;
    std::string provenance;  // "analytic" or "monte_carlo"
    int population = 0;      // patients averaged over, for monte_carlo
    double a_min = 0.0, a_max = 1.0;
    double t_max = 1.0;

    double operator()(double a, double t) const { return evaluator(a, t); }
};

struct TruthGrid {
    std::vector<double> doses;   // n_a equally spaced in [a_min, a_max]
    std::vector<double> times;   // n_t equally spaced in [0, t_hi]
    std::vector<double> values;  // row-major: values[i_t * n_a + i_a]

    double at(int i_t, int i_a) const {
        return values[static_cast<size_t>(i_t) * doses.size() + static_cast<size_t>(i_a)];
    }
};

TruthGrid emit_truth_grid(const GroundTruthSurface& surface, int n_a, int n_t, double t_hi);

void save_truth_grid(const TruthGrid& grid, const std::string& path);
TruthGrid load_truth_grid(const std::string& path);

}  // namespace dosetime::synth
