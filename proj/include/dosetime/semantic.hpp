#pragma once

#include <string>
#include <vector>

#include "dosetime/curve.hpp"
#include "dosetime/motif.hpp"

namespace dosetime::semantic {

// Quantitative description of one trajectory: where the transitions sit,
// the values there, boundary derivatives, and the terminal parameter
// (asymptote level for h, growth coefficient for u).
struct SemanticRepresentation {
    Composition composition;
    double t0 = 0.0;
    std::vector<double> transition_times;  // k-1 internal transitions, increasing
    std::vector<double> values;            // k values: at t0 and at each transition
    double deriv_start = 0.0;              // first derivative at t0
    double deriv_end = 0.0;                // first derivative at the last transition
    double terminal = 0.0;

    int n_motifs() const { return composition.size(); }
};

struct Violation {
    std::string code;
    std::string detail;
};

// Checks every representation invariant and returns the full violation
// list (empty means valid). Codes: "composition", "shape", "ordering",
// "horizon", "value sign", "derivative sign", "asymptote side", "growth
// sign", "cubic infeasible".
std::vector<Violation> validate_semantics(const SemanticRepresentation& rep, double t0,
                                          double horizon);

RenderedCurve<double> render(const SemanticRepresentation& rep);

// Evaluates the continuously differentiable piecewise curve at the given
// times (each >= t0). Throws when the terminal form is undefined
// (asymptote equal to the last value with a nonzero derivative).
std::vector<double> reconstruct_trajectory(const SemanticRepresentation& rep,
                                           const std::vector<double>& times);

// Max over shared properties of |a - b| / max(1e-12, |a|, |b|).
// Requires identical compositions.
double semantic_distance(const SemanticRepresentation& a, const SemanticRepresentation& b);

std::string semantic_to_json(const SemanticRepresentation& rep);
SemanticRepresentation semantic_from_json(const std::string& text);

// Property naming shared by the fit and edit modules.
std::vector<std::string> property_names(const Composition& comp);

}  // namespace dosetime::semantic
