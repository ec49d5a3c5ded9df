#include "safetune/simenv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "safetune/sobol.hpp"

namespace safetune {

using nlohmann::json;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Eigen::VectorXd to_vector(const json& j, Eigen::Index expected, const char* what) {
    auto v = j.get<std::vector<double>>();
    if (static_cast<Eigen::Index>(v.size()) != expected) {
        throw InvalidInput(std::string(what) + " has " + std::to_string(v.size()) + " entries, expected " +
                           std::to_string(expected));
    }
    return Eigen::Map<Eigen::VectorXd>(v.data(), expected);
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.contains(key)) {
            throw InvalidInput(where + ": unknown field '" + key + "'");
        }
    }
}

} // namespace

EnvSpec EnvSpec::from_json_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("environment file is not valid JSON: ") + e.what());
    }
    try {
        check_keys(doc,
                   {"knobs", "base", "trend", "context_ref", "basins", "noise_std", "failure", "cliff", "metrics", "seed"},
                   "environment");
        EnvSpec spec;
        spec.space = KnobSpace::from_json_text(json{{"knobs", doc.at("knobs")}}.dump());
        const auto m = static_cast<Eigen::Index>(spec.space.size());
        spec.base = doc.value("base", 0.0);
        if (doc.contains("trend")) {
            spec.trend = to_vector(doc.at("trend"), kContextDim, "trend");
        }
        if (doc.contains("context_ref")) {
            spec.context_ref = to_vector(doc.at("context_ref"), kContextDim, "context_ref");
        }
        for (const auto& b : doc.value("basins", json::array())) {
            check_keys(b, {"center", "width", "amplitude", "drift"}, "basin");
            Basin basin;
            basin.center = to_vector(b.at("center"), m, "basin center");
            basin.width = b.at("width").get<double>();
            basin.amplitude = b.at("amplitude").get<double>();
            if (!(basin.width > 0.0)) {
                throw InvalidInput("basin width must be positive");
            }
            basin.drift = Eigen::MatrixXd::Zero(m, kContextDim);
            if (b.contains("drift")) {
                const auto& rows = b.at("drift");
                if (static_cast<Eigen::Index>(rows.size()) != m) {
                    throw InvalidInput("basin drift must have one row per knob");
                }
                for (Eigen::Index i = 0; i < m; ++i) {
                    basin.drift.row(i) = to_vector(rows.at(static_cast<std::size_t>(i)), kContextDim, "drift row");
                }
            }
            spec.basins.push_back(std::move(basin));
        }
        spec.noise_std = doc.value("noise_std", 0.0);
        if (spec.noise_std < 0.0) {
            throw InvalidInput("noise_std must be nonnegative");
        }
        if (doc.contains("failure")) {
            const auto& f = doc.at("failure");
            check_keys(f, {"knobs", "cap", "performance"}, "failure");
            spec.failure_knobs = f.value("knobs", std::vector<std::string>{});
            spec.failure_cap = f.value("cap", 2.4);
            spec.failure_performance = f.value("performance", 0.0);
        }
        if (doc.contains("cliff")) {
            const auto& c = doc.at("cliff");
            check_keys(c, {"knob", "at", "drop"}, "cliff");
            spec.cliff = Cliff{c.at("knob").get<std::string>(), c.at("at").get<double>(), c.at("drop").get<double>()};
        }
        if (doc.contains("metrics")) {
            spec.metrics = doc.at("metrics").get<EnvMetrics>();
        } else {
            spec.metrics = default_env_metrics();
        }
        spec.seed = doc.value("seed", std::uint64_t{1});
        return spec;
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("malformed environment file: ") + e.what());
    }
}

EnvSpec EnvSpec::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw InvalidInput("cannot open environment file '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string EnvSpec::to_json_text() const {
    json doc;
    doc["knobs"] = json::parse(space.to_json_text()).at("knobs");
    doc["base"] = base;
    doc["trend"] = to_std(trend);
    doc["context_ref"] = to_std(context_ref);
    json list = json::array();
    for (const auto& b : basins) {
        json drift = json::array();
        for (Eigen::Index i = 0; i < b.drift.rows(); ++i) {
            drift.push_back(to_std(b.drift.row(i).transpose()));
        }
        list.push_back({{"center", to_std(b.center)}, {"width", b.width}, {"amplitude", b.amplitude}, {"drift", drift}});
    }
    doc["basins"] = list;
    doc["noise_std"] = noise_std;
    doc["failure"] = {{"knobs", failure_knobs}, {"cap", failure_cap}, {"performance", failure_performance}};
    if (cliff) {
        doc["cliff"] = {{"knob", cliff->knob}, {"at", cliff->at}, {"drop", cliff->drop}};
    }
    doc["metrics"] = metrics;
    doc["seed"] = seed;
    return doc.dump(2);
}

SyntheticEnv::SyntheticEnv(EnvSpec spec) : spec_(std::move(spec)) {
    for (const auto& name : spec_.failure_knobs) {
        failure_idx_.push_back(spec_.space.index_of(name));
    }
    if (spec_.cliff) {
        cliff_idx_ = spec_.space.index_of(spec_.cliff->knob);
    }
    default_point_ = spec_.space.normalize(spec_.space.default_config());
    if (is_failure(default_point_)) {
        throw InvalidInput("the default configuration lies in the failure region");
    }
}

bool SyntheticEnv::is_failure(const Point& x) const {
    if (failure_idx_.empty()) {
        return false;
    }
    double sum = 0.0;
    for (std::size_t i : failure_idx_) {
        sum += x[static_cast<Eigen::Index>(i)];
    }
    return sum > spec_.failure_cap;
}

Point SyntheticEnv::basin_center(const Basin& b, const Context& c) const {
    return b.center + b.drift * (c - spec_.context_ref);
}

double SyntheticEnv::latent(const Point& x, const Context& c) const {
    if (x.size() != static_cast<Eigen::Index>(spec_.space.size()) || c.size() != kContextDim) {
        throw InvalidInput("latent: dimension mismatch");
    }
    double f = spec_.base + spec_.trend.dot(c);
    for (const auto& b : spec_.basins) {
        const double d2 = (x - basin_center(b, c)).squaredNorm();
        f += b.amplitude * std::exp(-d2 / (2.0 * b.width * b.width));
    }
    if (cliff_idx_ && x[static_cast<Eigen::Index>(*cliff_idx_)] > spec_.cliff->at) {
        f -= spec_.cliff->drop;
    }
    return f;
}

Eigen::VectorXd SyntheticEnv::gradient(const Point& x, const Context& c) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
    for (const auto& b : spec_.basins) {
        const Eigen::VectorXd diff = x - basin_center(b, c);
        const double w2 = b.width * b.width;
        g -= b.amplitude * std::exp(-diff.squaredNorm() / (2.0 * w2)) / w2 * diff;
    }
    return g;
}

EnvOutcome SyntheticEnv::evaluate(const Configuration& config, const Context& c, std::int64_t t) const {
    const Point x = spec_.space.normalize(config);
    if (is_failure(x)) {
        return {true, spec_.failure_performance};
    }
    double y = latent(x, c);
    if (spec_.noise_std > 0.0) {
        std::mt19937_64 rng(splitmix(spec_.seed ^ splitmix(static_cast<std::uint64_t>(t))));
        std::normal_distribution<double> noise(0.0, spec_.noise_std);
        y += noise(rng);
    }
    return {false, y};
}

double SyntheticEnv::default_performance(const Context& c) const { return latent(default_point_, c); }

SyntheticEnv::Optimum SyntheticEnv::optimum(const Context& c) const {
    const auto m = static_cast<int>(spec_.space.size());
    std::vector<Point> starts;
    for (const auto& b : spec_.basins) {
        starts.push_back(basin_center(b, c).cwiseMax(0.0).cwiseMin(1.0));
    }
    starts.push_back(default_point_);
    SobolSequence sobol(std::min(m, 64));
    for (int i = 0; i < 64 && m <= 64; ++i) {
        starts.push_back(sobol.next());
    }

    Optimum best{default_point_, latent(default_point_, c)};
    for (Point x : starts) {
        if (is_failure(x)) {
            continue;
        }
        double fx = latent(x, c);
        double eta = 0.05;
        for (int it = 0; it < 400 && eta > 1e-10; ++it) {
            Eigen::VectorXd g = gradient(x, c);
            const double gn = g.norm();
            if (gn < 1e-12) {
                break;
            }
            Point cand = (x + eta * g / gn).cwiseMax(0.0).cwiseMin(1.0);
            double fc = is_failure(cand) ? -std::numeric_limits<double>::infinity() : latent(cand, c);
            if (fc > fx) {
                x = cand;
                fx = fc;
                eta *= 1.5;
            } else {
                eta *= 0.5;
            }
        }
        if (fx > best.value) {
            best = {x, fx};
        }
    }
    return best;
}

double SyntheticEnv::check_headroom(const std::vector<Context>& contexts) const {
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& c : contexts) {
        const double h = optimum(c).value - default_performance(c);
        if (!(h > 0.0)) {
            throw InvalidInput("environment has no headroom over the default for some context");
        }
        worst = std::min(worst, h);
    }
    return worst;
}

std::vector<KnobDef> knob_catalog() {
    auto integer = [](std::string name, double lo, double hi) {
        return KnobDef{std::move(name), KnobKind::Integer, lo, hi, {}, lo};
    };
    auto continuous = [](std::string name, double lo, double hi) {
        return KnobDef{std::move(name), KnobKind::Continuous, lo, hi, {}, lo};
    };
    auto enumerated = [](std::string name, std::vector<std::string> levels) {
        std::string first = levels.front();
        return KnobDef{std::move(name), KnobKind::Enumerated, 0.0, 0.0, std::move(levels), first};
    };
    std::vector<KnobDef> k{
        integer("innodb_buffer_pool_size", 128, 16384), // MB
        integer("key_buffer_size", 8, 4096),            // MB
        integer("join_buffer_size", 1, 1024),           // MB
        integer("innodb_thread_concurrency", 0, 64),
        integer("innodb_io_capacity", 100, 20000),
        integer("table_open_cache", 1, 10000),
        integer("sort_buffer_size", 32, 16384),   // KB
        integer("read_buffer_size", 8, 8192),     // KB
        integer("read_rnd_buffer_size", 8, 8192), // KB
        integer("tmp_table_size", 1, 1024),       // MB
        integer("max_heap_table_size", 1, 1024),  // MB
        integer("innodb_read_io_threads", 1, 64),
        integer("innodb_write_io_threads", 1, 64),
        integer("innodb_log_buffer_size", 1, 256), // MB
        enumerated("innodb_flush_log_at_trx_commit", {"0", "1", "2"}),
        enumerated("innodb_adaptive_hash_index", {"OFF", "ON"}),
        integer("innodb_io_capacity_max", 200, 40000),
        integer("innodb_lru_scan_depth", 100, 10000),
        integer("innodb_purge_threads", 1, 32),
        integer("innodb_spin_wait_delay", 0, 100),
        integer("innodb_sync_spin_loops", 0, 200),
        continuous("innodb_max_dirty_pages_pct", 0, 99),
        integer("innodb_old_blocks_pct", 5, 95),
        integer("innodb_old_blocks_time", 0, 5000),
        integer("innodb_change_buffer_max_size", 0, 50),
        integer("innodb_concurrency_tickets", 1, 50000),
        continuous("innodb_adaptive_flushing_lwm", 0, 70),
        enumerated("innodb_random_read_ahead", {"OFF", "ON"}),
        integer("innodb_read_ahead_threshold", 0, 64),
        integer("thread_cache_size", 0, 1000),
        integer("table_definition_cache", 400, 20000),
        integer("max_connections", 10, 10000),
        integer("binlog_cache_size", 4, 4096),  // KB
        integer("query_prealloc_size", 8, 1024), // KB
        integer("eq_range_index_dive_limit", 0, 1000),
        enumerated("optimizer_prune_level", {"0", "1"}),
        integer("innodb_stats_persistent_sample_pages", 1, 256),
        enumerated("innodb_flush_neighbors", {"0", "1", "2"}),
        integer("innodb_sync_array_size", 1, 1024),
        integer("optimizer_search_depth", 0, 62),
    };
    return k;
}

EnvMetrics default_env_metrics() {
    return {{"total_memory_mb", 16384.0}, {"vcpus", 16.0}, {"myisam_index_mb", 64.0},
            {"joins_without_index_per_day", 5000.0}};
}

EnvSpec generate_env(const GenEnvOptions& options) {
    const auto catalog = knob_catalog();
    if (options.knobs < 1 || options.knobs > static_cast<int>(catalog.size())) {
        throw InvalidInput("gen env: --knobs must be in [1, " + std::to_string(catalog.size()) + "]");
    }
    const int m = options.knobs;
    std::vector<KnobDef> defs(catalog.begin(), catalog.begin() + m);
    {
        // Defaults sit at a quarter of every range.
        KnobSpace probe(defs);
        Configuration c = probe.denormalize(Point::Constant(m, 0.25));
        for (int i = 0; i < m; ++i) {
            const auto k = static_cast<std::size_t>(i);
            defs[k].default_value = probe.display_value(k, c.values[k]);
        }
    }

    EnvSpec spec;
    spec.space = KnobSpace(defs);
    spec.seed = options.seed;
    spec.metrics = default_env_metrics();
    const int memory = std::min(m, 3);
    for (int i = 0; i < memory; ++i) {
        spec.failure_knobs.push_back(defs[static_cast<std::size_t>(i)].name);
    }
    spec.failure_cap = memory == 3 ? 2.4 : 0.8 * memory;
    spec.failure_performance = 0.0;

    std::mt19937_64 rng(splitmix(options.seed));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);
    const double scale = std::sqrt(static_cast<double>(m) / 5.0);

    spec.base = 200.0;
    spec.context_ref = Eigen::VectorXd::Constant(kContextDim, 0.4);
    spec.trend.resize(kContextDim);
    for (int j = 0; j < kContextDim; ++j) {
        spec.trend[j] = -40.0 + 80.0 * u(rng);
    }

    auto drift = [&](double sd) {
        Eigen::MatrixXd d(m, kContextDim);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < kContextDim; ++j) {
                d(i, j) = sd * n01(rng);
            }
        }
        return d;
    };

    Basin main;
    main.center.resize(m);
    for (int i = 0; i < m; ++i) {
        main.center[i] = 0.45 + 0.15 * u(rng);
    }
    main.width = 0.35 * scale;
    main.amplitude = 400.0 + 200.0 * u(rng);
    main.drift = drift(0.08);
    spec.basins.push_back(std::move(main));

    const int side = 1 + static_cast<int>(u(rng) * 3.0); // 1..3
    for (int s = 0; s < side; ++s) {
        Basin b;
        b.center.resize(m);
        for (int i = 0; i < m; ++i) {
            b.center[i] = u(rng);
        }
        b.width = 0.12 * scale;
        b.amplitude = 80.0 + 80.0 * u(rng);
        b.drift = drift(0.04);
        spec.basins.push_back(std::move(b));
    }

    // Noise at 1% of the dynamic range seen over a space-filling scan.
    SyntheticEnv probe(spec);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    SobolSequence sobol(std::min(m, 64));
    for (int i = 0; i < 2048; ++i) {
        const double v = probe.latent(sobol.next(), spec.context_ref);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    hi = std::max(hi, probe.optimum(spec.context_ref).value);
    spec.noise_std = 0.01 * (hi - lo);

    SyntheticEnv checked(spec);
    std::vector<Context> contexts{spec.context_ref};
    for (int i = 0; i < 16; ++i) {
        Context c(kContextDim);
        for (int j = 0; j < kContextDim; ++j) {
            c[j] = std::clamp(0.4 + 0.6 * (u(rng) - 0.5), 0.0, 1.0);
        }
        contexts.push_back(c);
    }
    checked.check_headroom(contexts);
    return spec;
}

} // namespace safetune
