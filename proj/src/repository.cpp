#include "safetune/repository.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace safetune {

using nlohmann::json;

std::string observation_to_json_line(const Observation& obs, const KnobSpace& space) {
    json knobs = json::object();
    for (std::size_t i = 0; i < space.size(); ++i) {
        KnobValue v = space.display_value(i, obs.config.values[i]);
        if (const auto* s = std::get_if<std::string>(&v)) {
            knobs[space.knob(i).name] = *s;
        } else {
            knobs[space.knob(i).name] = std::get<double>(v);
        }
    }
    std::vector<double> ctx(obs.context.data(), obs.context.data() + obs.context.size());
    json rec{{"iteration", obs.iteration}, {"context", ctx},         {"knobs", knobs},
             {"performance", obs.performance}, {"tau", obs.tau}, {"safe", obs.safe},
             {"failure", obs.failure}};
    return rec.dump();
}

Observation observation_from_json_line(const std::string& line, const KnobSpace& space) {
    try {
        json rec = json::parse(line);
        Observation obs;
        obs.iteration = rec.at("iteration").get<int>();
        auto ctx = rec.at("context").get<std::vector<double>>();
        obs.context = Eigen::Map<const Eigen::VectorXd>(ctx.data(), static_cast<Eigen::Index>(ctx.size()));
        std::map<std::string, KnobValue> values;
        for (const auto& [name, v] : rec.at("knobs").items()) {
            if (v.is_string()) {
                values[name] = v.get<std::string>();
            } else {
                values[name] = v.get<double>();
            }
        }
        obs.config = space.make_config(values);
        obs.point = space.normalize(obs.config);
        obs.performance = rec.at("performance").get<double>();
        obs.tau = rec.value("tau", 0.0);
        obs.safe = rec.at("safe").get<bool>();
        obs.failure = rec.at("failure").get<bool>();
        if (obs.failure && obs.safe) {
            throw InvalidInput("observation marked both safe and failed");
        }
        return obs;
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("malformed observation record: ") + e.what());
    }
}

void write_repository(std::ostream& out, const std::vector<Observation>& repo, const KnobSpace& space) {
    for (const auto& obs : repo) {
        out << observation_to_json_line(obs, space) << '\n';
    }
}

std::vector<Observation> read_repository(std::istream& in, const KnobSpace& space) {
    std::vector<Observation> repo;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.find("\"runspec\"") != std::string::npos) {
            continue;
        }
        repo.push_back(observation_from_json_line(line, space));
        if (repo.size() > 1 && repo.back().iteration <= repo[repo.size() - 2].iteration) {
            throw InvalidInput("repository iterations must strictly increase");
        }
    }
    return repo;
}

std::vector<Observation> load_repository(const std::string& path, const KnobSpace& space) {
    std::ifstream in(path);
    if (!in) {
        throw InvalidInput("cannot open repository '" + path + "'");
    }
    return read_repository(in, space);
}

} // namespace safetune
