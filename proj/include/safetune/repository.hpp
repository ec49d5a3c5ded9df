#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "safetune/featurize.hpp"
#include "safetune/knobspace.hpp"

namespace safetune {

/// One tuning interval: the context seen, the configuration applied and what it achieved.
/// `performance` is in objective units (always maximized). Failures carry the environment's
/// sentinel value and are never safe.
struct Observation {
    int iteration = 0;
    Context context;
    Configuration config;
    Point point;
    double performance = 0.0;
    double tau = 0.0;
    bool safe = false;
    bool failure = false;
};

/// Line-delimited JSON, one observation per line:
///   {"iteration":..,"context":[..],"knobs":{name:value,..},"performance":..,"tau":..,"safe":..,"failure":..}
/// A line of the form {"runspec": {...}} is accepted (and skipped) anywhere in the file.
std::string observation_to_json_line(const Observation& obs, const KnobSpace& space);
Observation observation_from_json_line(const std::string& line, const KnobSpace& space);

void write_repository(std::ostream& out, const std::vector<Observation>& repo, const KnobSpace& space);
std::vector<Observation> read_repository(std::istream& in, const KnobSpace& space);
std::vector<Observation> load_repository(const std::string& path, const KnobSpace& space);

} // namespace safetune
