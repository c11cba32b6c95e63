#include "dosetime/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dosetime::baseline {

double Tree::predict(const double* x) const {
    int i = 0;
    while (nodes[static_cast<size_t>(i)].feature >= 0) {
        const TreeNode& nd = nodes[static_cast<size_t>(i)];
        i = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<size_t>(i)].value;
}

double GbtModel::predict(const double* x) const {
    double s = base_score;
    for (const auto& t : trees) s += t.predict(x);
    return s;
}

namespace {

constexpr int kMinLeaf = 5;

struct SplitChoice {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
};

// One boosted tree, depth-wise growth. sorted[f] holds all row indices
// ordered by feature f; rows outside the tree's subsample carry node -1.
Tree build_tree(const std::vector<double>& X, const std::vector<double>& resid, int n, int p,
                const std::vector<std::vector<int>>& sorted, const std::vector<int>& features,
                std::vector<int>& node_of_row, int max_depth, double shrinkage) {
    Tree tree;
    tree.nodes.push_back({});
    std::vector<int> open{0};            // node ids open at the current depth
    std::vector<double> node_sum(1, 0.0);
    std::vector<int> node_cnt(1, 0);

    for (int i = 0; i < n; ++i) {
        if (node_of_row[static_cast<size_t>(i)] == 0) {
            node_sum[0] += resid[static_cast<size_t>(i)];
            node_cnt[0] += 1;
        }
    }

    for (int depth = 0; depth < max_depth && !open.empty(); ++depth) {
        std::vector<SplitChoice> best(tree.nodes.size());
        // Scan each candidate feature once; per-node running sums give the
        // exact gain at every boundary between distinct values.
        std::vector<double> run_sum(tree.nodes.size(), 0.0);
        std::vector<int> run_cnt(tree.nodes.size(), 0);
        std::vector<double> prev_val(tree.nodes.size(), 0.0);
        std::vector<char> is_open(tree.nodes.size(), 0);
        for (int id : open) is_open[static_cast<size_t>(id)] = 1;

        for (int f : features) {
            std::fill(run_sum.begin(), run_sum.end(), 0.0);
            std::fill(run_cnt.begin(), run_cnt.end(), 0);
            for (const int row : sorted[static_cast<size_t>(f)]) {
                const int nd = node_of_row[static_cast<size_t>(row)];
                if (nd < 0 || !is_open[static_cast<size_t>(nd)]) continue;
                const double x = X[static_cast<size_t>(row) * static_cast<size_t>(p) + static_cast<size_t>(f)];
                const int cl = run_cnt[static_cast<size_t>(nd)];
                if (cl > 0 && x > prev_val[static_cast<size_t>(nd)]) {
                    const int cr = node_cnt[static_cast<size_t>(nd)] - cl;
                    if (cl >= kMinLeaf && cr >= kMinLeaf) {
                        const double sl = run_sum[static_cast<size_t>(nd)];
                        const double st = node_sum[static_cast<size_t>(nd)];
                        const double gain = sl * sl / cl + (st - sl) * (st - sl) / cr -
                                            st * st / node_cnt[static_cast<size_t>(nd)];
                        if (gain > best[static_cast<size_t>(nd)].gain + 1e-12) {
                            best[static_cast<size_t>(nd)] = {
                                gain, f, 0.5 * (prev_val[static_cast<size_t>(nd)] + x)};
                        }
                    }
                }
                run_sum[static_cast<size_t>(nd)] += resid[static_cast<size_t>(row)];
                run_cnt[static_cast<size_t>(nd)] += 1;
                prev_val[static_cast<size_t>(nd)] = x;
            }
        }

        // Materialize the accepted splits and re-route rows.
        std::vector<int> next_open;
        std::vector<int> child_base(tree.nodes.size(), -1);
        for (int id : open) {
            const SplitChoice& c = best[static_cast<size_t>(id)];
            if (c.feature < 0) continue;
            child_base[static_cast<size_t>(id)] = static_cast<int>(tree.nodes.size());
            tree.nodes[static_cast<size_t>(id)].feature = c.feature;
            tree.nodes[static_cast<size_t>(id)].threshold = c.threshold;
            tree.nodes[static_cast<size_t>(id)].left = static_cast<int>(tree.nodes.size());
            tree.nodes[static_cast<size_t>(id)].right = static_cast<int>(tree.nodes.size()) + 1;
            tree.nodes.push_back({});
            tree.nodes.push_back({});
            next_open.push_back(tree.nodes[static_cast<size_t>(id)].left);
            next_open.push_back(tree.nodes[static_cast<size_t>(id)].right);
        }
        if (next_open.empty()) break;

        node_sum.assign(tree.nodes.size(), 0.0);
        node_cnt.assign(tree.nodes.size(), 0);
        for (int row = 0; row < n; ++row) {
            int nd = node_of_row[static_cast<size_t>(row)];
            if (nd < 0 || child_base[static_cast<size_t>(nd)] < 0) continue;
            const TreeNode& split = tree.nodes[static_cast<size_t>(nd)];
            const double x =
                X[static_cast<size_t>(row) * static_cast<size_t>(p) + static_cast<size_t>(split.feature)];
            nd = x <= split.threshold ? split.left : split.right;
            node_of_row[static_cast<size_t>(row)] = nd;
            node_sum[static_cast<size_t>(nd)] += resid[static_cast<size_t>(row)];
            node_cnt[static_cast<size_t>(nd)] += 1;
        }
        open = std::move(next_open);
    }

    for (size_t i = 0; i < tree.nodes.size(); ++i) {
        TreeNode& nd = tree.nodes[i];
        if (nd.feature >= 0) continue;
        nd.value = 0.0;
    }
    // Leaf values: shrinkage * mean residual, computed in one pass.
    std::vector<double> leaf_sum(tree.nodes.size(), 0.0);
    std::vector<int> leaf_cnt(tree.nodes.size(), 0);
    for (int row = 0; row < n; ++row) {
        const int nd = node_of_row[static_cast<size_t>(row)];
        if (nd < 0) continue;
        leaf_sum[static_cast<size_t>(nd)] += resid[static_cast<size_t>(row)];
        leaf_cnt[static_cast<size_t>(nd)] += 1;
    }
    for (size_t i = 0; i < tree.nodes.size(); ++i)
        if (tree.nodes[i].feature < 0 && leaf_cnt[i] > 0)
            tree.nodes[i].value = shrinkage * leaf_sum[i] / leaf_cnt[i];
    return tree;
}

}  // namespace

GbtModel fit_gbt(const std::vector<double>& X, const std::vector<double>& y, int n, int p,
                 const GbtHyper& hyper, Rng& rng) {
    GbtModel model;
    model.hyper = hyper;
    model.base_score = std::accumulate(y.begin(), y.end(), 0.0) / std::max(1, n);

    std::vector<std::vector<int>> sorted(static_cast<size_t>(p));
    for (int f = 0; f < p; ++f) {
        auto& idx = sorted[static_cast<size_t>(f)];
        idx.resize(static_cast<size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
            return X[static_cast<size_t>(a) * static_cast<size_t>(p) + static_cast<size_t>(f)] <
                   X[static_cast<size_t>(b) * static_cast<size_t>(p) + static_cast<size_t>(f)];
        });
    }

    std::vector<double> resid(y.size());
    std::vector<double> pred(static_cast<size_t>(n), model.base_score);
    std::vector<int> node_of_row(static_cast<size_t>(n));
    std::vector<int> all_rows(static_cast<size_t>(n));
    std::iota(all_rows.begin(), all_rows.end(), 0);
    std::vector<int> all_feats(static_cast<size_t>(p));
    std::iota(all_feats.begin(), all_feats.end(), 0);

    const int n_sub =
        std::min(n, std::max(kMinLeaf * 2, static_cast<int>(std::llround(hyper.subsample * n))));
    const int p_sub = std::max(1, static_cast<int>(std::llround(hyper.colsample * p)));

    for (int round = 0; round < hyper.n_trees; ++round) {
        for (int i = 0; i < n; ++i) resid[static_cast<size_t>(i)] = y[static_cast<size_t>(i)] - pred[static_cast<size_t>(i)];

        std::vector<int> rows = all_rows;
        if (n_sub < n) {
            rng.shuffle(rows);
            rows.resize(static_cast<size_t>(n_sub));
        }
        std::vector<int> feats = all_feats;
        if (p_sub < p) {
            rng.shuffle(feats);
            feats.resize(static_cast<size_t>(p_sub));
            std::sort(feats.begin(), feats.end());
        }

        std::fill(node_of_row.begin(), node_of_row.end(), -1);
        for (int r : rows) node_of_row[static_cast<size_t>(r)] = 0;

        Tree tree = build_tree(X, resid, n, p, sorted, feats, node_of_row, hyper.max_depth,
                               hyper.learning_rate);

        double sse = 0.0;
        for (int i = 0; i < n; ++i) {
            pred[static_cast<size_t>(i)] +=
                tree.predict(&X[static_cast<size_t>(i) * static_cast<size_t>(p)]);
            const double e = y[static_cast<size_t>(i)] - pred[static_cast<size_t>(i)];
            sse += e * e;
        }
        model.train_curve.push_back(sse / std::max(1, n));
        model.trees.push_back(std::move(tree));
    }
    return model;
}

double gbt_mse(const GbtModel& m, const std::vector<double>& X, const std::vector<double>& y,
               int n, int p) {
    double sse = 0.0;
    for (int i = 0; i < n; ++i) {
        const double e = y[static_cast<size_t>(i)] -
                         m.predict(&X[static_cast<size_t>(i) * static_cast<size_t>(p)]);
        sse += e * e;
    }
    return sse / std::max(1, n);
}

}  // namespace dosetime::baseline
