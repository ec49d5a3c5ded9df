#pragma once

#include <optional>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "safetune/featurize.hpp"
#include "safetune/knobspace.hpp"
#include "safetune/rules.hpp"
#include "safetune/subspace.hpp"
#include "safetune/surrogate.hpp"

namespace safetune {

struct CandidateSet {
    std::vector<Point> points;
    std::vector<bool> evaluated;

    std::size_t size() const { return points.size(); }
};

/// Low-discrepancy candidates inside the subspace, snapped to the knob grid and deduplicated.
/// Hypercube: density*m points in the ball (Sobol with a seeded random shift) plus the center.
/// Line: `density` evenly spaced points along the clipped segment plus the offset itself.
CandidateSet discretize(const Subspace& subspace, int density, const KnobSpace& space, std::mt19937_64& rng);

/// Shifted Sobol points over the whole of [0,1]^m, snapped and deduplicated.
CandidateSet global_candidates(int count, const KnobSpace& space, std::mt19937_64& rng);

/// Flags candidates that coincide (within 1e-9) with an already-evaluated point.
void mark_evaluated(CandidateSet& candidates, const std::vector<Point>& evaluated);

/// Tolerance for line membership after snapping discrete knobs.
double snapping_tolerance(const KnobSpace& space);

/// Keeps points whose lower bound mean - beta*std is strictly above tau; `fallback` is always kept.
std::vector<bool> black_filter(const Eigen::VectorXd& mean, const Eigen::VectorXd& std, double beta, double tau,
                               std::optional<std::size_t> fallback);

struct WhiteFilterResult {
    std::vector<bool> keep;
    /// Rules (indices into RuleSet::rules) that reject the black-box top choice.
    std::vector<std::size_t> conflicts;
};

/// Removes points whose knob value lies outside a rule's allowed interval. The rule at `ignored`
/// does not filter. Conflicts are reported against `black_top`.
WhiteFilterResult white_filter(const std::vector<Point>& points, const RuleSet& rules, const KnobSpace& space,
                               const EnvMetrics& metrics, std::optional<std::size_t> black_top,
                               std::optional<std::size_t> ignored);

/// True when the normalized point satisfies the rule's interval (after denormalization).
bool rule_allows(const WhiteBoxRule& rule, const Point& point, const KnobSpace& space, const EnvMetrics& metrics);

/// A safe point is on the boundary when one of its k nearest candidates is unsafe, when it has no
/// neighbours at all, or (hypercubes) when the ball surface is closer than its k-th neighbour.
std::vector<bool> flag_boundary(const std::vector<Point>& points, const std::vector<bool>& safe,
                                const Subspace& subspace, int k);

struct SafetyOptions {
    double beta = 2.0;
    double tau = 0.0;
    bool use_black = true;
    bool use_white = true;
    /// kNN size for boundary detection; 0 means 2m.
    int boundary_k = 0;
};

struct SafetySet {
    CandidateSet candidates;
    Eigen::VectorXd mean;
    Eigen::VectorXd std;
    std::vector<bool> black_safe;
    std::vector<bool> safe;
    std::vector<bool> boundary;
    std::optional<std::size_t> fallback;
    /// UCB argmax over black-safe, unevaluated candidates.
    std::optional<std::size_t> black_top;
    std::vector<std::size_t> conflicts;
    std::optional<std::size_t> ignored_rule;

    std::vector<std::size_t> safe_indices() const;
    std::vector<std::size_t> boundary_indices() const;
    bool has_unevaluated_safe() const;
};

/// Black filter, then white filter (honouring at most one ignored rule), then boundary flags.
/// `fallback` is located in (or appended to) the candidates and survives every filter.
SafetySet assess(CandidateSet candidates, const Subspace& subspace, const GpModel& model, const Context& context,
                 const SafetyOptions& options, const RuleSet* rules, const KnobSpace& space, const EnvMetrics& metrics,
                 const std::optional<Point>& fallback);

/// Full pipeline: discretize the subspace, mark evaluated points, then assess.
SafetySet build_safety_set(const Subspace& subspace, int density, const GpModel& model, const Context& context,
                           const SafetyOptions& options, const RuleSet* rules, const KnobSpace& space,
                           const EnvMetrics& metrics, const std::vector<Point>& evaluated,
                           const std::optional<Point>& fallback, std::mt19937_64& rng);

/// Index of the maximum of `score` over `indices`; ties go to the lexicographically smallest point.
std::optional<std::size_t> argmax_lex(const std::vector<std::size_t>& indices, const Eigen::VectorXd& score,
                                      const std::vector<Point>& points);

} // namespace safetune
