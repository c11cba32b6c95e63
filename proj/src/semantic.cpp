#include "dosetime/semantic.hpp"

#include <cmath>

#include "json.hpp"

namespace dosetime::semantic {

using nlohmann::json;

std::vector<Violation> validate_semantics(const SemanticRepresentation& rep, double t0,
                                          double horizon) {
    std::vector<Violation> v;
    std::string why;
    if (!composition_valid(rep.composition, &why)) {
        v.push_back({"composition", why});
        return v;
    }
    const int k = rep.n_motifs();
    if (static_cast<int>(rep.transition_times.size()) != k - 1 ||
        static_cast<int>(rep.values.size()) != k) {
        v.push_back({"shape", "expected " + std::to_string(k - 1) + " transition times and " +
                                  std::to_string(k) + " values"});
        return v;
    }
    if (rep.t0 != t0)
        v.push_back({"ordering", "representation t0 differs from requested start"});
    double prev = t0;
    for (double t : rep.transition_times) {
        if (!(t > prev)) {
            v.push_back({"ordering", "transition times not strictly increasing"});
            break;
        }
        prev = t;
    }
    if (!rep.transition_times.empty() && rep.transition_times.back() >= horizon)
        v.push_back({"horizon", "last transition beyond the horizon"});

    for (int j = 0; j + 1 < k; ++j) {
        const int m = rep.composition.motifs[static_cast<size_t>(j)].mono;
        const double dv = rep.values[static_cast<size_t>(j + 1)] - rep.values[static_cast<size_t>(j)];
        if (!(m * dv > 0.0)) {
            v.push_back({"value sign", "values across motif " + std::to_string(j + 1) +
                                           " do not follow its monotonicity"});
        }
    }

    const Motif& first = rep.composition.motifs.front();
    const Motif& last = rep.composition.motifs.back();
    if (first.mono * rep.deriv_start < 0.0)
        v.push_back({"derivative sign", "derivative at t0 opposes the first motif"});
    if (k >= 2 && !terminal_starts_at_extremum(rep.composition) &&
        last.mono * rep.deriv_end < 0.0)
        v.push_back({"derivative sign", "derivative at the last transition opposes the last motif"});

    if (last.extent == Extent::Asymptote) {
        const double gap = rep.terminal - rep.values.back();
        if (!(last.mono * gap > 0.0))
            v.push_back({"asymptote side", "asymptote not on the motif's side of the last value"});
    } else if (last.extent == Extent::Unbounded) {
        if (rep.terminal < 0.0) v.push_back({"growth sign", "growth coefficient must be >= 0"});
    }

    if (v.empty()) {
        const auto curve = render_curve<double>(
            rep.composition, rep.t0, rep.transition_times.data(), rep.values.data(),
            rep.deriv_start, rep.deriv_end, rep.terminal);
        if (!curve.feasible)
            v.push_back({"cubic infeasible",
                         "no sign-correct cubic chain realizes these values and derivatives"});
    }
    return v;
}

RenderedCurve<double> render(const SemanticRepresentation& rep) {
    return render_curve<double>(rep.composition, rep.t0, rep.transition_times.data(),
                                rep.values.data(), rep.deriv_start, rep.deriv_end, rep.terminal);
}

std::vector<double> reconstruct_trajectory(const SemanticRepresentation& rep,
                                           const std::vector<double>& times) {
    const auto curve = render(rep);
    std::vector<double> out;
    out.reserve(times.size());
    for (double t : times) out.push_back(curve.eval(t));
    return out;
}

double semantic_distance(const SemanticRepresentation& a, const SemanticRepresentation& b) {
    if (!(a.composition == b.composition))
        throw std::invalid_argument("semantic_distance requires identical compositions");
    double dist = 0.0;
    auto acc = [&dist](double x, double y) {
        const double scale = std::max({1e-12, std::fabs(x), std::fabs(y)});
        dist = std::max(dist, std::fabs(x - y) / scale);
    };
    acc(a.t0, b.t0);
    for (size_t j = 0; j < a.transition_times.size(); ++j)
        acc(a.transition_times[j], b.transition_times[j]);
    for (size_t j = 0; j < a.values.size(); ++j) acc(a.values[j], b.values[j]);
    acc(a.deriv_start, b.deriv_start);
    acc(a.deriv_end, b.deriv_end);
    acc(a.terminal, b.terminal);
    return dist;
}

std::string semantic_to_json(const SemanticRepresentation& rep) {
    json j;
    std::vector<std::string> labels;
    for (const auto& m : rep.composition.motifs) labels.push_back(motif_label(m));
    j["composition"] = labels;
    std::vector<double> times{rep.t0};
    times.insert(times.end(), rep.transition_times.begin(), rep.transition_times.end());
    j["times"] = times;
    j["values"] = rep.values;
    j["derivatives"] = {rep.deriv_start, rep.deriv_end};
    j["terminal"] = rep.terminal;
    return j.dump(2);
}

SemanticRepresentation semantic_from_json(const std::string& text) {
    const json j = json::parse(text);
    SemanticRepresentation rep;
    for (const auto& s : j.at("composition"))
        rep.composition.motifs.push_back(motif_from_label(s.get<std::string>()));
    const auto times = j.at("times").get<std::vector<double>>();
    rep.t0 = times.at(0);
    rep.transition_times.assign(times.begin() + 1, times.end());
    rep.values = j.at("values").get<std::vector<double>>();
    const auto derivs = j.at("derivatives").get<std::vector<double>>();
    rep.deriv_start = derivs.at(0);
    rep.deriv_end = derivs.at(1);
    rep.terminal = j.at("terminal").get<double>();
    return rep;
}

std::vector<std::string> property_names(const Composition& comp) {
    const int k = comp.size();
    std::vector<std::string> names;
    names.push_back("value at t0");
    for (int j = 1; j < k; ++j) names.push_back("t of transition " + std::to_string(j));
    for (int j = 1; j < k; ++j) names.push_back("value at transition " + std::to_string(j));
    names.push_back("derivative at t0");
    if (k >= 2 && !terminal_starts_at_extremum(comp))
        names.push_back("derivative at last transition");
    names.push_back(comp.motifs.back().extent == Extent::Asymptote ? "asymptote" : "growth");
    return names;
}

}  // namespace dosetime::semantic
