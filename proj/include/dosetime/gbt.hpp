#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dosetime/rng.hpp"

namespace dosetime::baseline {

struct TreeNode {
    int feature = -1;          // -1 marks a leaf
    double threshold = 0.0;    // x[feature] <= threshold goes left
    int left = -1, right = -1;
    double value = 0.0;        // leaf value, shrinkage already applied
};

struct Tree {
    std::vector<TreeNode> nodes;
    double predict(const double* x) const;
};

struct GbtHyper {
    double learning_rate = 0.1;
    int max_depth = 6;
    int n_trees = 100;
    double subsample = 1.0;
    double colsample = 1.0;
};

// Least-squares gradient boosting with exact greedy splits over presorted
// feature columns. Inputs are standardized by the caller.
struct GbtModel {
    double base_score = 0.0;
    std::vector<Tree> trees;
    GbtHyper hyper;
    std::vector<double> train_curve;  // train MSE after each boosting round

    double predict(const double* x) const;
};

// X is row-major n x p. row_weight-free, residual-fitting loop; trees use
// min_samples_leaf = 5 and skip zero-gain splits.
GbtModel fit_gbt(const std::vector<double>& X, const std::vector<double>& y, int n, int p,
                 const GbtHyper& hyper, Rng& rng);

double gbt_mse(const GbtModel& m, const std::vector<double>& X, const std::vector<double>& y,
               int n, int p);

}  // namespace dosetime::baseline
