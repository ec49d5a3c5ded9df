#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "safetune/knobspace.hpp"

namespace safetune {

/// Named host/DBMS metrics that rule bounds may reference
/// (total_memory_mb, vcpus, myisam_index_mb, joins_without_index_per_day, ...).
using EnvMetrics = std::map<std::string, double>;

/// Arithmetic over numbers and metric names: + - * /, parentheses, unary minus,
/// min(a, b), max(a, b) and the constant `inf`.
class Expression {
public:
    Expression() = default;
    static Expression parse(const std::string& text);

    double eval(const EnvMetrics& metrics) const;
    const std::string& text() const { return text_; }

    struct Node;

private:
    std::string text_;
    std::shared_ptr<const Node> root_;
};

/// Interval constraint on one knob, with conflict bookkeeping for relaxation.
struct WhiteBoxRule {
    std::string id;
    std::string knob;
    Expression lower;
    Expression upper;
    int ignore_threshold = 3;
    int relax_threshold = 3;
    double relax_factor = 1.5;

    int conflict_counter = 0;
    int conflict_safe_counter = 0;
    /// Cumulative widening applied around the interval midpoint.
    double widen = 1.0;

    /// Allowed interval in knob units: the raw bounds clipped to the knob's range, then widened.
    /// Enumerated knobs use level indices.
    std::pair<double, double> allowed_interval(const KnobSpace& space, const EnvMetrics& metrics) const;
};

struct RuleSet {
    std::vector<WhiteBoxRule> rules;
    /// Rule ignored for the next recommendation, if any. At most one.
    std::optional<std::size_t> ignored;

    static RuleSet from_json_text(const std::string& text);
    static RuleSet load(const std::string& path);
    std::string to_json_text() const;

    /// Throws InvalidInput when a rule references an unknown knob or has bad thresholds.
    void validate(const KnobSpace& space) const;
    bool empty() const { return rules.empty(); }
    /// Drops rules whose knob is not part of `space`.
    RuleSet restricted_to(const KnobSpace& space) const;
};

/// Outcome of applying a controversial (rule-ignored) configuration.
struct RelaxationFeedback {
    std::size_t rule = 0;
    bool safe = false;
};

/// Conflict accounting: bumps the conflict counter of every conflicting rule and marks at most one
/// rule (lowest id among those at threshold) ignored for the next recommendation. Feedback from an
/// evaluated controversial configuration bumps the conflict-safe counter and, at its threshold,
/// widens the rule by relax_factor and resets both counters.
void apply_relaxation(RuleSet& rules, const std::vector<std::size_t>& conflicting,
                      const std::optional<RelaxationFeedback>& feedback);

/// Representative MySQL-style rules over the bundled knob catalog.
std::string default_rules_json();

} // namespace safetune
