#include "safetune/knobspace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace safetune {

using nlohmann::json;

namespace {

constexpr double kCoordTolerance = 1e-9;

double round_half_up(double x) { return std::floor(x + 0.5); }

void check_def(const KnobDef& k) {
    if (k.name.empty()) {
        throw InvalidInput("knob with empty name");
    }
    if (k.kind == KnobKind::Enumerated) {
        if (k.levels.empty()) {
            throw InvalidInput("enumerated knob '" + k.name + "' has no levels");
        }
        std::set<std::string> seen(k.levels.begin(), k.levels.end());
        if (seen.size() != k.levels.size()) {
            throw InvalidInput("enumerated knob '" + k.name + "' has duplicate levels");
        }
        const auto* s = std::get_if<std::string>(&k.default_value);
        if (s == nullptr || !seen.contains(*s)) {
            throw InvalidInput("default of knob '" + k.name + "' is not one of its levels");
        }
        return;
    }
    if (!(k.lower < k.upper)) {
        throw InvalidInput("knob '" + k.name + "' requires lower < upper");
    }
    const auto* d = std::get_if<double>(&k.default_value);
    if (d == nullptr || *d < k.lower || *d > k.upper) {
        throw InvalidInput("default of knob '" + k.name + "' lies outside its bounds");
    }
    if (k.kind == KnobKind::Integer &&
        (std::floor(k.lower) != k.lower || std::floor(k.upper) != k.upper || std::floor(*d) != *d)) {
        throw InvalidInput("integer knob '" + k.name + "' has non-integral bounds or default");
    }
}

} // namespace

const char* to_string(KnobKind kind) {
    switch (kind) {
    case KnobKind::Continuous: return "continuous";
    case KnobKind::Integer: return "integer";
    case KnobKind::Enumerated: return "enum";
    }
    return "?";
}

KnobKind knob_kind_from_string(const std::string& s) {
    if (s == "continuous" || s == "real") return KnobKind::Continuous;
    if (s == "integer" || s == "int") return KnobKind::Integer;
    if (s == "enum" || s == "enumerated") return KnobKind::Enumerated;
    throw InvalidInput("unknown knob kind '" + s + "'");
}

KnobSpace::KnobSpace(std::vector<KnobDef> knobs) : knobs_(std::move(knobs)) {
    if (knobs_.empty()) {
        throw InvalidInput("knob space must contain at least one knob");
    }
    for (std::size_t i = 0; i < knobs_.size(); ++i) {
        check_def(knobs_[i]);
        if (!by_name_.emplace(knobs_[i].name, i).second) {
            throw InvalidInput("duplicate knob name '" + knobs_[i].name + "'");
        }
    }
}

KnobSpace KnobSpace::from_json_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("knob file is not valid JSON: ") + e.what());
    }
    const json& list = doc.is_array() ? doc : doc.at("knobs");
    std::vector<KnobDef> knobs;
    try {
        for (const auto& rec : list) {
            KnobDef k;
            k.name = rec.at("name").get<std::string>();
            k.kind = knob_kind_from_string(rec.at("kind").get<std::string>());
            if (k.kind == KnobKind::Enumerated) {
                k.levels = rec.at("levels").get<std::vector<std::string>>();
                k.default_value = rec.contains("default") ? rec.at("default").get<std::string>() : k.levels.front();
            } else {
                k.lower = rec.at("lower").get<double>();
                k.upper = rec.at("upper").get<double>();
                k.default_value = rec.contains("default") ? rec.at("default").get<double>() : k.lower;
            }
            for (const auto& [key, _] : rec.items()) {
                static const std::set<std::string> allowed{"name", "kind", "lower", "upper", "levels", "default"};
                if (!allowed.contains(key)) {
                    throw InvalidInput("knob '" + k.name + "' has unknown field '" + key + "'");
                }
            }
            knobs.push_back(std::move(k));
        }
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("malformed knob record: ") + e.what());
    }
    return KnobSpace(std::move(knobs));
}

KnobSpace KnobSpace::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw InvalidInput("cannot open knob file '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string KnobSpace::to_json_text() const {
    json list = json::array();
    for (const auto& k : knobs_) {
        json rec{{"name", k.name}, {"kind", to_string(k.kind)}};
        if (k.kind == KnobKind::Enumerated) {
            rec["levels"] = k.levels;
            rec["default"] = std::get<std::string>(k.default_value);
        } else {
            rec["lower"] = k.lower;
            rec["upper"] = k.upper;
            rec["default"] = std::get<double>(k.default_value);
        }
        list.push_back(std::move(rec));
    }
    return json{{"knobs", list}}.dump(2);
}

std::size_t KnobSpace::index_of(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) {
        throw InvalidInput("unknown knob '" + name + "'");
    }
    return it->second;
}

double KnobSpace::numeric_value(std::size_t i, const KnobValue& v) const {
    const KnobDef& k = knobs_.at(i);
    if (k.kind == KnobKind::Enumerated) {
        const auto* s = std::get_if<std::string>(&v);
        if (s == nullptr) {
            // A numeric level index is accepted as well.
            return std::get<double>(v);
        }
        auto it = std::find(k.levels.begin(), k.levels.end(), *s);
        if (it == k.levels.end()) {
            throw InvalidInput("'" + *s + "' is not a level of knob '" + k.name + "'");
        }
        return static_cast<double>(it - k.levels.begin());
    }
    if (const auto* d = std::get_if<double>(&v)) {
        return *d;
    }
    throw InvalidInput("knob '" + k.name + "' expects a numeric value");
}

KnobValue KnobSpace::display_value(std::size_t i, double numeric) const {
    const KnobDef& k = knobs_.at(i);
    if (k.kind == KnobKind::Enumerated) {
        return k.levels.at(static_cast<std::size_t>(numeric));
    }
    return numeric;
}

Configuration KnobSpace::default_config() const {
    Configuration c;
    c.values.reserve(knobs_.size());
    for (std::size_t i = 0; i < knobs_.size(); ++i) {
        c.values.push_back(numeric_value(i, knobs_[i].default_value));
    }
    return c;
}

Configuration KnobSpace::make_config(const std::map<std::string, KnobValue>& values) const {
    Configuration c;
    c.values.assign(knobs_.size(), 0.0);
    std::vector<bool> seen(knobs_.size(), false);
    for (const auto& [name, v] : values) {
        std::size_t i = index_of(name);
        c.values[i] = numeric_value(i, v);
        seen[i] = true;
    }
    for (std::size_t i = 0; i < knobs_.size(); ++i) {
        if (!seen[i]) {
            throw InvalidInput("configuration is missing knob '" + knobs_[i].name + "'");
        }
    }
    validate(c);
    return c;
}

void KnobSpace::validate(const Configuration& config) const {
    if (config.values.size() != knobs_.size()) {
        throw InvalidInput("configuration has " + std::to_string(config.values.size()) + " values, space has " +
                           std::to_string(knobs_.size()) + " knobs");
    }
    for (std::size_t i = 0; i < knobs_.size(); ++i) {
        const KnobDef& k = knobs_[i];
        double v = config.values[i];
        if (!std::isfinite(v)) {
            throw InvalidInput("knob '" + k.name + "' has a non-finite value");
        }
        if (k.kind == KnobKind::Enumerated) {
            if (std::floor(v) != v || v < 0 || v >= static_cast<double>(k.levels.size())) {
                throw InvalidInput("knob '" + k.name + "' has an invalid level index");
            }
            continue;
        }
        if (v < k.lower || v > k.upper) {
            throw InvalidInput("knob '" + k.name + "' value " + std::to_string(v) + " is out of range");
        }
        if (k.kind == KnobKind::Integer && std::floor(v) != v) {
            throw InvalidInput("integer knob '" + k.name + "' holds a non-integral value");
        }
    }
}

Point KnobSpace::normalize(const Configuration& config) const {
    validate(config);
    Point p(static_cast<Eigen::Index>(knobs_.size()));
    for (std::size_t i = 0; i < knobs_.size(); ++i) {
        const KnobDef& k = knobs_[i];
        double v = config.values[i];
        double x;
        if (k.kind == KnobKind::Enumerated) {
            x = k.levels.size() == 1 ? 0.5 : v / static_cast<double>(k.levels.size() - 1);
        } else {
            x = (v - k.lower) / (k.upper - k.lower);
        }
        p[static_cast<Eigen::Index>(i)] = x;
    }
    return p;
}

Configuration KnobSpace::denormalize(const Point& point) const {
    if (static_cast<std::size_t>(point.size()) != knobs_.size()) {
        throw InvalidInput("point has dimension " + std::to_string(point.size()) + ", space has " +
                           std::to_string(knobs_.size()) + " knobs");
    }
    Configuration c;
    c.values.resize(knobs_.size());
    for (std::size_t i = 0; i < knobs_.size(); ++i) {
        const KnobDef& k = knobs_[i];
        double x = point[static_cast<Eigen::Index>(i)];
        if (!(x >= -kCoordTolerance && x <= 1.0 + kCoordTolerance)) {
            throw InvalidInput("normalized coordinate outside [0,1] for knob '" + k.name + "'");
        }
        x = std::clamp(x, 0.0, 1.0);
        switch (k.kind) {
        case KnobKind::Continuous:
            c.values[i] = std::clamp(k.lower + x * (k.upper - k.lower), k.lower, k.upper);
            break;
        case KnobKind::Integer:
            c.values[i] = std::clamp(round_half_up(k.lower + x * (k.upper - k.lower)), k.lower, k.upper);
            break;
        case KnobKind::Enumerated: {
            double top = static_cast<double>(k.levels.size() - 1);
            c.values[i] = std::clamp(round_half_up(x * top), 0.0, top);
            break;
        }
        }
    }
    return c;
}

Point KnobSpace::snap(const Point& point) const { return normalize(denormalize(point)); }

bool KnobSpace::is_discrete(std::size_t i) const { return knobs_.at(i).kind != KnobKind::Continuous; }

double KnobSpace::grid_step(std::size_t i) const {
    const KnobDef& k = knobs_.at(i);
    switch (k.kind) {
    case KnobKind::Continuous: return 0.0;
    case KnobKind::Integer: return 1.0 / (k.upper - k.lower);
    case KnobKind::Enumerated: return k.levels.size() == 1 ? 0.0 : 1.0 / static_cast<double>(k.levels.size() - 1);
    }
    return 0.0;
}

} // namespace safetune
