#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dosetime/bspline.hpp"
#include "dosetime/curve.hpp"
#include "dosetime/dual.hpp"
#include "dosetime/motif.hpp"
#include "dosetime/semantic.hpp"
#include "dosetime/surrogate.hpp"

namespace dosetime::fit {

constexpr int kMaxProps = 10;   // raw properties of a 4-motif composition
constexpr int kBasisSize = 6;
constexpr double kTimeFloor = 1e-3;   // minimum transition-time increment
constexpr double kValueFloor = 1e-6;  // minimum value/asymptote increment
constexpr double kDerivFloor = 1e-6;  // minimum boundary-derivative magnitude

// Dose basis on [0, 1]: constant, linear, and four cubic B-splines on the
// open uniform knot vector {0, 1/7, ..., 1}.
struct PropertyBasis {
    BSplineBasis spline;
    std::array<double, kBasisSize> eval(double a) const;
};
const PropertyBasis& property_basis();

// How a raw basis expansion maps to the property value. Warped is the
// fitted parameterization (structural constraints hold for any raw value);
// edits may switch a map to a direct expansion or a pinned constant.
enum class Warp : uint8_t {
    Identity,        // value at t0
    TimeIncrement,   // previous time + floor + softplus(raw)
    ValueIncrement,  // previous value + mono * (floor + softplus(raw))
    SignedMagnitude, // mono * (floor + softplus(raw))
    SideOffset,      // last value + mono * (floor + softplus(raw))
    Positive,        // softplus(raw)
};

enum class MapMode : uint8_t { Warped, Direct, Pinned };

struct PropertyMap {
    std::string name;
    Warp warp = Warp::Identity;
    MapMode mode = MapMode::Warped;
    std::array<double, kBasisSize> coeffs{};
    double pinned_value = 0.0;
    bool clamped = false;
    double clamp_lo = 0.0, clamp_hi = 0.0;
    bool frozen = false;  // excluded from optimization (fit-time pin)
};

struct BranchSpec {
    semantic::Composition comp;
    std::vector<PropertyMap> props;

    int n_motifs() const { return comp.size(); }
    int n_props() const { return static_cast<int>(props.size()); }
    int idx_v0() const { return 0; }
    int idx_time(int j) const { return 1 + j; }                     // j in [0, k-2]
    int idx_value(int j) const { return n_motifs() + j; }           // j in [0, k-2]
    int idx_d0() const { return 2 * n_motifs() - 1; }
    int idx_dend() const;  // -1 when the property does not exist
    int idx_terminal() const { return n_props() - 1; }
};

// Builds the property list (names, warps) for a composition.
BranchSpec make_branch_spec(const semantic::Composition& comp);

// Property values at one dose, generic over double / Dual. raws must hold
// n_props entries (the per-property basis expansions at that dose).
template <typename S>
struct AssembledRep {
    std::array<S, semantic::kMaxMotifs - 1> times{};
    std::array<S, semantic::kMaxMotifs> values{};
    S d0{}, dend{}, terminal{};
};

template <typename S>
AssembledRep<S> assemble_rep(const BranchSpec& spec, const S* raws);

// Absolute property values (the interpretable curves): same chain as
// assemble_rep, reported per property.
template <typename S>
std::array<S, kMaxProps> property_values(const BranchSpec& spec, const S* raws);

double raw_at(const PropertyMap& map, const std::array<double, kBasisSize>& basis);
semantic::SemanticRepresentation rep_at_dose(const BranchSpec& spec, double a);
semantic::RenderedCurve<double> curve_at_dose(const BranchSpec& spec, double a);

struct FitConfig {
    double rough_weight = 0.05;       // property-curve curvature penalty
    double term_weight_lo = 1e-9;     // tuned terminal-derivative penalty range
    double term_weight_hi = 0.1;
    double lr_lo = 1e-4, lr_hi = 1.0;  // tuned step-scale range
    int trials = 5;                    // tuning trials per branch fit
    int max_iter = 500;
    std::string solver = "lm";         // "lm" or "lbfgs"
    uint64_t seed = 0;
    int min_points = 20;       // minimum surrogate points per branch
    int top_k = 3;             // compositions refit per sub-interval
    double improve_frac = 0.01;  // relative improvement required to split
    int rough_grid = 21;       // dose grid for the penalties
    int validity_grid = 50;    // dose grid for the validity spot-check
    double split_fraction = 0.7;
};

struct FitPoint {
    double dose = 0.0, time = 0.0, tau = 0.0;
    bool train = true;
};

struct Interval {
    double lo = 0.0, hi = 1.0;
    bool contains(double a) const { return a > lo && a <= hi; }
};

// The penalized least-squares objective for one (interval, composition)
// candidate; exposed so gradient checks can run against finite differences.
class BranchObjective {
public:
    BranchObjective(const BranchSpec& spec, const std::vector<FitPoint>& pts, Interval interval,
                    double rough_weight, double term_weight, int rough_grid);

    int dim() const { return 6 * n_free_; }
    // Objective value and gradient at packed coefficients (train points only).
    double eval(const std::vector<double>& x, std::vector<double>& grad) const;
    double mse(const std::vector<double>& x, bool train_points) const;

    // Levenberg-Marquardt on the same objective written as least squares
    // (data residuals plus penalty residuals). Converges in tens of
    // iterations where the quasi-Newton route needs thousands.
    struct LmResult {
        std::vector<double> x;
        double f = 0.0;
        int iterations = 0;
        bool diverged = false;
    };
    LmResult lm_minimize(std::vector<double> x0, int max_iter, double damping0) const;

    std::vector<double> pack(const BranchSpec& spec) const;
    void unpack(const std::vector<double>& x, BranchSpec& spec) const;
    const BranchSpec& spec() const { return spec_; }

private:
    struct DoseGroup {
        double dose;
        std::array<double, kBasisSize> basis;
        std::vector<std::pair<double, double>> train_pts;  // (time, tau)
        std::vector<std::pair<double, double>> val_pts;
    };
    BranchSpec spec_;
    std::vector<DoseGroup> groups_;
    std::vector<std::array<double, kBasisSize>> grid_basis_;
    std::vector<int> free_props_;  // property indices being optimized
    int n_free_ = 0;
    int n_train_ = 0;
    double rough_weight_, term_weight_;

    // The packed vector lives in Gram-preconditioned coordinates; these
    // convert to per-property coefficients in the documented basis.
    std::vector<std::array<double, kBasisSize>> materialize(const std::vector<double>& x) const;
    template <typename S>
    void raws_at(const std::array<double, kBasisSize>& basis,
                 const std::vector<std::array<double, kBasisSize>>& coeffs, S* raws) const;
};

struct FittedBranch {
    Interval interval;
    BranchSpec spec;
    double train_loss = 0.0;  // train MSE of the winning trial
    double val_loss = 0.0;    // validation MSE of the winning trial
    double learning_rate = 0.0;
    double term_weight = 0.0;
    int trial = -1;
    bool feasible = false;
    std::string diagnostic;
};

// Penalized least-squares fit of one composition on one dose interval with
// (learning rate, terminal penalty) tuning. Deterministic in cfg.seed.
FittedBranch fit_branch(const std::vector<FitPoint>& pts, Interval interval,
                        const semantic::Composition& comp, const FitConfig& cfg,
                        const std::vector<std::pair<std::string, double>>& pinned = {});

struct SemanticModel {
    std::vector<FittedBranch> branches;  // sorted by dose interval
    double val_loss = 0.0;
    uint64_t config_hash = 0;
    std::vector<std::string> provenance;
    // Full-range validation loss of every library composition evaluated
    // during the search (selection diagnostics).
    std::vector<std::pair<std::string, double>> candidate_val_losses;

    int n_branches() const { return static_cast<int>(branches.size()); }
    int total_motifs() const;
    const FittedBranch& branch_for(double a) const;
};

// Composition-map search: rank all library compositions on the full range,
// then try quantile cut points with the top-K refits per sub-interval,
// accepting extra branches only for a >= 1% validation improvement. Among
// configurations within 1% of the best, prefers fewer total motifs, then
// fewer branches.
SemanticModel fit_composition_map(const surrogate::SurrogateSet& surrogates,
                                  const std::vector<semantic::Composition>& library,
                                  const FitConfig& cfg, int max_branches,
                                  const std::vector<std::pair<std::string, double>>& pinned = {});

double predict_tau(const SemanticModel& model, double a, double t);
semantic::RenderedCurve<double> predict_curve(const SemanticModel& model, double a);

struct PropertyCurveTable {
    int branch = 0;
    Interval interval;
    std::string composition;
    std::vector<std::string> names;
    std::vector<double> doses;
    std::vector<std::vector<double>> values;  // values[g][p]
};
std::vector<PropertyCurveTable> export_property_curves(const SemanticModel& model, int n_grid);
void save_property_curves(const std::vector<PropertyCurveTable>& tables, const std::string& path);

void save_model(const SemanticModel& model, const std::string& path);
SemanticModel load_model(const std::string& path);
std::string model_to_json(const SemanticModel& model);
SemanticModel model_from_json(const std::string& text);

}  // namespace dosetime::fit
