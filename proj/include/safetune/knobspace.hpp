#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "safetune/errors.hpp"

namespace safetune {

/// A point in the normalized configuration space [0,1]^m.
using Point = Eigen::VectorXd;

enum class KnobKind { Continuous, Integer, Enumerated };

const char* to_string(KnobKind kind);
KnobKind knob_kind_from_string(const std::string& s);

/// A user-facing knob value: numeric for continuous/integer knobs, a level name for enumerated ones.
using KnobValue = std::variant<double, std::string>;

struct KnobDef {
    std::string name;
    KnobKind kind = KnobKind::Continuous;
    double lower = 0.0;
    double upper = 1.0;
    std::vector<std::string> levels;
    KnobValue default_value = 0.0;
};

/// One value per knob, in knob-definition order. Enumerated knobs hold their level index.
struct Configuration {
    std::vector<double> values;

    bool operator==(const Configuration&) const = default;
};

/// The configuration space. Immutable after construction.
class KnobSpace {
public:
    KnobSpace() = default;
    explicit KnobSpace(std::vector<KnobDef> knobs);

    static KnobSpace from_json_text(const std::string& text);
    static KnobSpace load(const std::string& path);
    std::string to_json_text() const;

    std::size_t size() const { return knobs_.size(); }
    const std::vector<KnobDef>& knobs() const { return knobs_; }
    const KnobDef& knob(std::size_t i) const { return knobs_.at(i); }

    /// Index of a knob by name; throws InvalidInput when unknown.
    std::size_t index_of(const std::string& name) const;

    Configuration default_config() const;

    /// Builds a configuration from a name -> value map. Every knob must be present.
    Configuration make_config(const std::map<std::string, KnobValue>& values) const;

    /// Numeric value for one knob, converting level names to indices.
    double numeric_value(std::size_t knob, const KnobValue& v) const;
    KnobValue display_value(std::size_t knob, double numeric) const;

    void validate(const Configuration& config) const;

    Point normalize(const Configuration& config) const;
    Configuration denormalize(const Point& point) const;

    /// Snaps a normalized point onto the representable grid (integer and level rounding).
    Point snap(const Point& point) const;

    /// True when the knob has a discrete grid (integer or enumerated).
    bool is_discrete(std::size_t knob) const;
    /// Spacing of the knob's grid in normalized units; 0 for continuous knobs.
    double grid_step(std::size_t knob) const;

private:
    std::vector<KnobDef> knobs_;
    std::map<std::string, std::size_t> by_name_;
};

} // namespace safetune
