#include "dosetime/truth.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace dosetime::synth {

TruthGrid emit_truth_grid(const GroundTruthSurface& surface, int n_a, int n_t, double t_hi) {
    if (n_a < 2 || n_t < 2) throw std::invalid_argument("truth grid needs n_a, n_t >= 2");
    TruthGrid g;
    g.doses.resize(static_cast<size_t>(n_a));
    g.times.resize(static_cast<size_t>(n_t));
    for (int j = 0; j < n_a; ++j)
        g.doses[static_cast<size_t>(j)] =
            surface.a_min + (surface.a_max - surface.a_min) * j / (n_a - 1);
    for (int i = 0; i < n_t; ++i) g.times[static_cast<size_t>(i)] = t_hi * i / (n_t - 1);
    g.values.resize(static_cast<size_t>(n_a) * static_cast<size_t>(n_t));
    for (int i = 0; i < n_t; ++i)
        for (int j = 0; j < n_a; ++j)
            g.values[static_cast<size_t>(i) * static_cast<size_t>(n_a) + static_cast<size_t>(j)] =
                surface.evaluator(g.doses[static_cast<size_t>(j)], g.times[static_cast<size_t>(i)]);
    return g;
}

void save_truth_grid(const TruthGrid& grid, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "a,t,tau\n";
    char buf[96];
    for (size_t i = 0; i < grid.times.size(); ++i)
        for (size_t j = 0; j < grid.doses.size(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", grid.doses[j], grid.times[i],
                          grid.values[i * grid.doses.size() + j]);
            out << buf;
        }
}

TruthGrid load_truth_grid(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    std::getline(in, line);  // header
    TruthGrid g;
    std::vector<double> a, t, v;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        double ai, ti, vi;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &ai, &ti, &vi) != 3)
            throw std::runtime_error(path + ": bad truth grid row");
        a.push_back(ai);
        t.push_back(ti);
        v.push_back(vi);
    }
    // Recover the rectangular structure: doses cycle fastest.
    for (double x : a) {
        if (!g.doses.empty() && x == g.doses.front()) break;
        g.doses.push_back(x);
    }
    const size_t n_a = g.doses.size();
    for (size_t i = 0; i < t.size(); i += n_a) g.times.push_back(t[i]);
    g.values = std::move(v);
    if (g.values.size() != g.doses.size() * g.times.size())
        throw std::runtime_error(path + ": truth grid is not rectangular");
    return g;
}

}  // namespace dosetime::synth
