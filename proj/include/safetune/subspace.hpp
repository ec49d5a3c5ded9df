#pragma once

#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "safetune/knobspace.hpp"

namespace safetune {

class GpModel;

enum class RegionKind { Hypercube, Line };

const char* to_string(RegionKind kind);

/// Trust region over the normalized configuration space.
/// A hypercube is the L2 ball {x : |x - center| <= radius} clipped to [0,1]^m.
/// A line is {center + a * direction} clipped to [0,1]^m; it keeps the last radius so the
/// hypercube can resume with it.
struct Subspace {
    RegionKind kind = RegionKind::Hypercube;
    Point center;
    double radius = 0.05;
    Eigen::VectorXd direction;

    static Subspace hypercube(Point center, double radius);
    static Subspace line(Point offset, Eigen::VectorXd direction, double radius);

    /// Membership test. `line_tolerance` absorbs grid snapping for discrete knobs.
    bool contains(const Point& x, double line_tolerance = 1e-9) const;
};

struct SubspaceParams {
    double r0 = 0.05;
    double r_min = 0.01;
    double r_max = 0.5;
    int eta_succ = 3;
    int eta_fail = 3;
    int switch_fail_threshold = 5;
    double improvement_threshold = 0.01;
};

struct AdaptState {
    int succ_counter = 0;
    int fail_counter = 0;
    double last_best_value = -std::numeric_limits<double>::infinity();
    /// Best value when the current region was entered; drives the direction oracle.
    double region_start_best = -std::numeric_limits<double>::infinity();
};

/// Success iff new_value > last_best_value (strict).
AdaptState record_outcome(AdaptState state, double new_value);

bool switching_rule(const AdaptState& state, bool has_unevaluated_safe, const SubspaceParams& params);

/// Relative improvement of the best value since the current region was entered.
double recent_improvement(const AdaptState& state);

using DirectionOracle = std::function<Eigen::VectorXd(double recent_improvement)>;

/// One round of radius adaptation and hypercube/line alternation. Counters in `state` are
/// reset when the radius changes or the region switches.
Subspace adapt(const Subspace& current, AdaptState& state, const Point& theta_best, bool has_unevaluated_safe,
               const SubspaceParams& params, const DirectionOracle& next_direction);

/// Random unit vector when improvement is below threshold, otherwise an axis direction of a
/// knob drawn uniformly from the top-5 of `importance`.
Eigen::VectorXd generate_direction(const std::vector<std::size_t>& importance, double recent_improvement,
                                   double improvement_threshold, std::mt19937_64& rng);

/// Knob indices ordered by ascending ARD lengthscale (most important first). Stable on ties.
std::vector<std::size_t> knob_importance(const GpModel& model);
std::vector<std::size_t> knob_importance(const Eigen::VectorXd& lengthscales);

} // namespace safetune
