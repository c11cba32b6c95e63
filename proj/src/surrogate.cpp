#include "dosetime/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "dosetime/hash.hpp"
#include "dosetime/parallel.hpp"

namespace dosetime::surrogate {

std::string dataset_content_hash(const data::LongitudinalDataset& ds) {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](double v) {
        uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        for (int k = 0; k < 8; ++k) {
            h ^= (bits >> (8 * k)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& p : ds.patients) {
        mix(static_cast<double>(p.id));
        mix(p.dose);
        for (double x : p.covariates) mix(x);
        for (const auto& m : p.measurements) {
            mix(m.time);
            mix(m.outcome);
        }
    }
    return hash_hex(h);
}

SurrogateSet build_surrogates(const data::LongitudinalDataset& ds, const BaselineFn& baseline,
                              const std::string& baseline_hash) {
    if (!ds.normalized) throw std::invalid_argument("build_surrogates needs a normalized dataset");
    const auto treated = ds.treated_indices();
    SurrogateSet set;
    set.dataset_hash = dataset_content_hash(ds);
    set.baseline_hash = baseline_hash;

    std::vector<std::vector<SurrogatePoint>> per_patient(treated.size());
    parallel_for(static_cast<std::ptrdiff_t>(treated.size()), [&](size_t k) {
        const auto& p = ds.patients[static_cast<size_t>(treated[k])];
        auto& out = per_patient[k];
        out.reserve(p.measurements.size());
        for (size_t j = 0; j < p.measurements.size(); ++j) {
            const auto& m = p.measurements[j];
            SurrogatePoint sp;
            sp.dose = p.dose;
            sp.time = m.time;
            sp.tau_tilde = m.outcome - baseline(p.covariates, m.time);
            sp.patient_id = p.id;
            sp.measurement_index = static_cast<int>(j);
            out.push_back(sp);
        }
    });
    for (auto& v : per_patient)  // assembly in patient order
        set.points.insert(set.points.end(), v.begin(), v.end());
    return set;
}

SurrogateSet build_surrogates(const data::LongitudinalDataset& ds,
                              const baseline::BaselineModel& model) {
    auto fn = [&model](std::span<const double> x, double t) { return model.predict(x, t); };
    uint64_t h = fnv1a(std::to_string(model.validation_loss));
    return build_surrogates(ds, fn, hash_hex(h));
}

namespace {

double quantile_sorted(const std::vector<double>& v, double q) {
    if (v.empty()) return 0.0;
    const double pos = q * static_cast<double>(v.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace

SurrogateDiagnostics surrogate_diagnostics(const SurrogateSet& set) {
    if (set.points.empty()) throw std::invalid_argument("empty surrogate set");
    SurrogateDiagnostics d;
    std::vector<double> taus;
    taus.reserve(set.points.size());
    double dose_min = set.points[0].dose, dose_max = dose_min;
    double t_min = set.points[0].time, t_max = t_min;
    for (const auto& p : set.points) {
        taus.push_back(p.tau_tilde);
        dose_min = std::min(dose_min, p.dose);
        dose_max = std::max(dose_max, p.dose);
        t_min = std::min(t_min, p.time);
        t_max = std::max(t_max, p.time);
    }
    auto bin = [](double v, double lo, double hi) {
        if (!(hi > lo)) return 0;
        return std::min(9, static_cast<int>((v - lo) / (hi - lo) * 10.0));
    };
    for (const auto& p : set.points) {
        d.dose_hist[static_cast<size_t>(bin(p.dose, dose_min, dose_max))] += 1;
        d.time_hist[static_cast<size_t>(bin(p.time, t_min, t_max))] += 1;
    }
    double s = 0.0, ss = 0.0;
    for (double v : taus) {
        s += v;
        ss += v * v;
    }
    d.mean = s / static_cast<double>(taus.size());
    d.sd = std::sqrt(std::max(0.0, ss / static_cast<double>(taus.size()) - d.mean * d.mean));
    std::sort(taus.begin(), taus.end());
    d.min = taus.front();
    d.max = taus.back();
    d.q1 = quantile_sorted(taus, 0.25);
    d.median = quantile_sorted(taus, 0.5);
    d.q3 = quantile_sorted(taus, 0.75);
    const double iqr = d.q3 - d.q1;
    int n_out = 0;
    for (double v : taus)
        if (std::fabs(v) > 5.0 * iqr) ++n_out;
    d.outlier_fraction = iqr > 0.0 ? static_cast<double>(n_out) / static_cast<double>(taus.size()) : 0.0;
    return d;
}

void save_surrogates(const SurrogateSet& set, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "patient_id,dose,time,tau_tilde\n";
    char buf[128];
    for (const auto& p : set.points) {
        std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g\n",
                      static_cast<long long>(p.patient_id), p.dose, p.time, p.tau_tilde);
        out << buf;
    }
}

SurrogateSet load_surrogates(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    std::getline(in, line);
    SurrogateSet set;
    int64_t last_id = -1;
    int midx = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        long long id;
        double dose, time, tau;
        if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf", &id, &dose, &time, &tau) != 4)
            throw std::runtime_error(path + ": bad surrogate row");
        midx = id == last_id ? midx + 1 : 0;
        last_id = id;
        set.points.push_back({dose, time, tau, id, midx});
    }
    return set;
}

}  // namespace dosetime::surrogate
