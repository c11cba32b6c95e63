#include "dosetime/baseline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "dosetime/parallel.hpp"
#include "json.hpp"

namespace dosetime::baseline {

using nlohmann::json;

namespace {

void warn_extrapolation(double t) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true))
        std::cerr << "warning: baseline prediction at t = " << t
                  << " outside [0, 1.25]; extrapolating\n";
}

// Long-format design matrix (covariates..., time) -> outcome for the
// untreated subset, split at patient level.
struct DesignRows {
    std::vector<double> X;  // row-major
    std::vector<double> y;
    int n = 0, p = 0;
};

DesignRows collect_rows(const data::LongitudinalDataset& ds, const std::vector<int>& patient_idx) {
    DesignRows r;
    r.p = ds.covariate_dim() + 1;
    for (int i : patient_idx) {
        const auto& pat = ds.patients[static_cast<size_t>(i)];
        if (pat.dose != 0.0)
            throw std::logic_error("baseline fitting received a treated patient");
        for (const auto& m : pat.measurements) {
            r.X.insert(r.X.end(), pat.covariates.begin(), pat.covariates.end());
            r.X.push_back(m.time);
            r.y.push_back(m.outcome);
            ++r.n;
        }
    }
    return r;
}

Standardizer fit_standardizer(const std::vector<double>& X, int n, int p) {
    Standardizer s;
    s.mean.assign(static_cast<size_t>(p), 0.0);
    s.sd.assign(static_cast<size_t>(p), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j)
            s.mean[static_cast<size_t>(j)] += X[static_cast<size_t>(i) * static_cast<size_t>(p) + static_cast<size_t>(j)];
    for (auto& v : s.mean) v /= std::max(1, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) {
            const double d =
                X[static_cast<size_t>(i) * static_cast<size_t>(p) + static_cast<size_t>(j)] - s.mean[static_cast<size_t>(j)];
            s.sd[static_cast<size_t>(j)] += d * d;
        }
    for (auto& v : s.sd) {
        v = std::sqrt(v / std::max(1, n));
        if (!(v > 0.0)) v = 1.0;
    }
    return s;
}

void standardize_rows(std::vector<double>& X, int n, int p, const Standardizer& s) {
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) {
            auto& v = X[static_cast<size_t>(i) * static_cast<size_t>(p) + static_cast<size_t>(j)];
            v = (v - s.mean[static_cast<size_t>(j)]) / s.sd[static_cast<size_t>(j)];
        }
}

std::pair<std::vector<int>, std::vector<int>> split_patients(const data::LongitudinalDataset& ds,
                                                             const std::vector<int>& untreated,
                                                             double fraction, uint64_t seed) {
    std::vector<int64_t> ids;
    for (int i : untreated) ids.push_back(ds.patients[static_cast<size_t>(i)].id);
    const auto sp = data::split_ids(ids, fraction, seed);
    std::vector<int> train, val;
    for (int i : untreated) {
        if (sp.in_train(ds.patients[static_cast<size_t>(i)].id))
            train.push_back(i);
        else
            val.push_back(i);
    }
    return {train, val};
}

BaselineModel fit_tree_ensemble_impl(const data::LongitudinalDataset& ds,
                                     const TuningBudget& budget, bool parallel) {
    const auto untreated = ds.untreated_indices();
    if (untreated.size() < 2) throw std::invalid_argument("need at least 2 untreated patients");
    if (budget.trials < 1) throw std::invalid_argument("tuning budget needs trials >= 1");

    const auto [train_idx, val_idx] =
        split_patients(ds, untreated, budget.split_fraction, derive_seed(budget.seed, "gbt_split"));
    DesignRows train = collect_rows(ds, train_idx);
    DesignRows val = collect_rows(ds, val_idx);
    const Standardizer stats = fit_standardizer(train.X, train.n, train.p);
    standardize_rows(train.X, train.n, train.p, stats);
    standardize_rows(val.X, val.n, val.p, stats);

    struct TrialResult {
        GbtModel model;
        double val_loss = std::numeric_limits<double>::infinity();
    };
    std::vector<TrialResult> results(static_cast<size_t>(budget.trials));
    auto run_trial = [&](size_t trial) {
        Rng rng(derive_seed(budget.seed, "gbt_trial", trial));
        GbtHyper h;
        h.learning_rate = rng.log_uniform(1e-4, 1.0);
        h.max_depth = rng.uniform_int(3, 10);
        h.n_trees = 50 * rng.uniform_int(1, 4);
        h.subsample = 0.5 + 0.1 * rng.uniform_int(0, 5);
        h.colsample = 0.5 + 0.1 * rng.uniform_int(0, 5);
        Rng fit_rng(derive_seed(budget.seed, "gbt_fit", trial));
        results[trial].model = fit_gbt(train.X, train.y, train.n, train.p, h, fit_rng);
        results[trial].val_loss = gbt_mse(results[trial].model, val.X, val.y, val.n, val.p);
    };
    if (parallel)
        parallel_for(budget.trials, run_trial);
    else
        serial_for(budget.trials, run_trial);

    int winner = 0;
    for (int t = 1; t < budget.trials; ++t)
        if (results[static_cast<size_t>(t)].val_loss < results[static_cast<size_t>(winner)].val_loss)
            winner = t;

    BaselineModel m;
    m.kind = BaselineKind::TreeEnsemble;
    m.covariate_names = ds.covariate_names;
    m.std_stats = stats;
    m.gbt = std::move(results[static_cast<size_t>(winner)].model);
    m.validation_loss = results[static_cast<size_t>(winner)].val_loss;
    m.winning_trial = winner;
    return m;
}

std::vector<double> fit_poly(const std::vector<data::Measurement>& ms, int degree) {
    const int n = static_cast<int>(ms.size());
    const int k = degree + 1;
    Eigen::MatrixXd A(n, k);
    Eigen::VectorXd b(n);
    for (int i = 0; i < n; ++i) {
        double pw = 1.0;
        for (int j = 0; j < k; ++j) {
            A(i, j) = pw;
            pw *= ms[static_cast<size_t>(i)].time;
        }
        b(i) = ms[static_cast<size_t>(i)].outcome;
    }
    Eigen::VectorXd c = (A.transpose() * A).ldlt().solve(A.transpose() * b);
    return {c.data(), c.data() + k};
}

double eval_poly(const std::vector<double>& c, double t) {
    double v = 0.0;
    for (size_t j = c.size(); j-- > 0;) v = v * t + c[j];
    return v;
}

}  // namespace

BaselineModel fit_tree_ensemble(const data::LongitudinalDataset& ds, const TuningBudget& budget) {
    return fit_tree_ensemble_impl(ds, budget, true);
}

BaselineModel fit_tree_ensemble_ref(const data::LongitudinalDataset& ds, const TuningBudget& budget) {
    return fit_tree_ensemble_impl(ds, budget, false);
}

BaselineModel fit_nearest_neighbor(const data::LongitudinalDataset& ds, const TuningBudget& budget) {
    const auto untreated = ds.untreated_indices();
    if (untreated.empty()) throw std::invalid_argument("need at least 1 untreated patient");

    std::vector<int> train_idx = untreated, val_idx;
    if (untreated.size() >= 2) {
        auto sp = split_patients(ds, untreated, budget.split_fraction,
                                 derive_seed(budget.seed, "nn_split"));
        train_idx = sp.first;
        val_idx = sp.second;
    }

    // Standardize covariates over training patients (one row per patient).
    const int d = ds.covariate_dim();
    std::vector<double> X;
    for (int i : train_idx)
        X.insert(X.end(), ds.patients[static_cast<size_t>(i)].covariates.begin(),
                 ds.patients[static_cast<size_t>(i)].covariates.end());
    Standardizer stats = fit_standardizer(X, static_cast<int>(train_idx.size()), d);
    stats.mean.push_back(0.0);  // time column unused by the matcher
    stats.sd.push_back(1.0);

    BaselineModel m;
    m.kind = BaselineKind::NearestNeighbor;
    m.covariate_names = ds.covariate_names;
    m.std_stats = stats;
    for (int i : train_idx) {
        const auto& pat = ds.patients[static_cast<size_t>(i)];
        NnPatient np;
        np.id = pat.id;
        np.x_std = pat.covariates;
        for (int j = 0; j < d; ++j)
            np.x_std[static_cast<size_t>(j)] =
                (np.x_std[static_cast<size_t>(j)] - stats.mean[static_cast<size_t>(j)]) /
                stats.sd[static_cast<size_t>(j)];
        int degree = 3;
        if (pat.n_measurements() < 4) {
            degree = pat.n_measurements() - 1;
            std::cerr << "warning: patient " << pat.id << " has " << pat.n_measurements()
                      << " measurements; falling back to degree " << degree << "\n";
        }
        np.poly = fit_poly(pat.measurements, degree);
        m.nn.patients.push_back(std::move(np));
    }

    double sse = 0.0;
    int cnt = 0;
    for (int i : val_idx) {
        const auto& pat = ds.patients[static_cast<size_t>(i)];
        for (const auto& mm : pat.measurements) {
            const double e = mm.outcome - m.predict(pat.covariates, mm.time);
            sse += e * e;
            ++cnt;
        }
    }
    m.validation_loss = cnt > 0 ? sse / cnt : 0.0;
    return m;
}

double BaselineModel::predict(std::span<const double> covariates, double t) const {
    if (covariates.size() != covariate_names.size())
        throw std::invalid_argument("covariate dimension mismatch");
    if (t < 0.0 || t > 1.25) warn_extrapolation(t);
    if (kind == BaselineKind::TreeEnsemble) {
        std::vector<double> row(covariates.begin(), covariates.end());
        row.push_back(t);
        std_stats.apply(row);
        return gbt.predict(row.data());
    }
    std::vector<double> x(covariates.begin(), covariates.end());
    for (size_t j = 0; j < x.size(); ++j)
        x[j] = (x[j] - std_stats.mean[j]) / std_stats.sd[j];
    const NnPatient* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& np : nn.patients) {
        double dist = 0.0;
        for (size_t j = 0; j < x.size(); ++j) {
            const double dd = x[j] - np.x_std[j];
            dist += dd * dd;
        }
        if (dist < best_d || (dist == best_d && best != nullptr && np.id < best->id)) {
            best_d = dist;
            best = &np;
        }
    }
    return eval_poly(best->poly, t);
}

double BaselineModel::predict_named(const std::vector<std::string>& names,
                                    std::span<const double> covariates, double t) const {
    if (names.size() != covariate_names.size())
        throw std::invalid_argument("covariate dimension mismatch");
    std::vector<double> reordered(covariate_names.size());
    for (size_t j = 0; j < covariate_names.size(); ++j) {
        const auto it = std::find(names.begin(), names.end(), covariate_names[j]);
        if (it == names.end())
            throw std::invalid_argument("missing covariate " + covariate_names[j]);
        reordered[j] = covariates[static_cast<size_t>(it - names.begin())];
    }
    return predict(reordered, t);
}

void save_baseline(const BaselineModel& m, const std::string& path) {
    json j;
    j["kind"] = m.kind == BaselineKind::TreeEnsemble ? "tree_ensemble" : "nearest_neighbor";
    j["covariate_names"] = m.covariate_names;
    j["mean"] = m.std_stats.mean;
    j["sd"] = m.std_stats.sd;
    j["validation_loss"] = m.validation_loss;
    j["winning_trial"] = m.winning_trial;
    if (m.kind == BaselineKind::TreeEnsemble) {
        j["base_score"] = m.gbt.base_score;
        j["hyper"] = {{"learning_rate", m.gbt.hyper.learning_rate},
                      {"max_depth", m.gbt.hyper.max_depth},
                      {"n_trees", m.gbt.hyper.n_trees},
                      {"subsample", m.gbt.hyper.subsample},
                      {"colsample", m.gbt.hyper.colsample}};
        json trees = json::array();
        for (const auto& t : m.gbt.trees) {
            json nodes = json::array();
            for (const auto& nd : t.nodes)
                nodes.push_back({nd.feature, nd.threshold, nd.left, nd.right, nd.value});
            trees.push_back(std::move(nodes));
        }
        j["trees"] = std::move(trees);
    } else {
        json pats = json::array();
        for (const auto& np : m.nn.patients)
            pats.push_back({{"id", np.id}, {"x_std", np.x_std}, {"poly", np.poly}});
        j["patients"] = std::move(pats);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

BaselineModel load_baseline(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    in >> j;
    BaselineModel m;
    m.kind = j.at("kind") == "tree_ensemble" ? BaselineKind::TreeEnsemble
                                             : BaselineKind::NearestNeighbor;
    m.covariate_names = j.at("covariate_names").get<std::vector<std::string>>();
    m.std_stats.mean = j.at("mean").get<std::vector<double>>();
    m.std_stats.sd = j.at("sd").get<std::vector<double>>();
    m.validation_loss = j.at("validation_loss").get<double>();
    m.winning_trial = j.at("winning_trial").get<int>();
    if (m.kind == BaselineKind::TreeEnsemble) {
        m.gbt.base_score = j.at("base_score").get<double>();
        const auto& h = j.at("hyper");
        m.gbt.hyper = {h.at("learning_rate").get<double>(), h.at("max_depth").get<int>(),
                       h.at("n_trees").get<int>(), h.at("subsample").get<double>(),
                       h.at("colsample").get<double>()};
        for (const auto& tj : j.at("trees")) {
            Tree t;
            for (const auto& nj : tj)
                t.nodes.push_back({nj[0].get<int>(), nj[1].get<double>(), nj[2].get<int>(),
                                   nj[3].get<int>(), nj[4].get<double>()});
            m.gbt.trees.push_back(std::move(t));
        }
    } else {
        for (const auto& pj : j.at("patients")) {
            NnPatient np;
            np.id = pj.at("id").get<int64_t>();
            np.x_std = pj.at("x_std").get<std::vector<double>>();
            np.poly = pj.at("poly").get<std::vector<double>>();
            m.nn.patients.push_back(std::move(np));
        }
    }
    return m;
}

}  // namespace dosetime::baseline
