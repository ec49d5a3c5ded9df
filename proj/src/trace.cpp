#include "safetune/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "safetune/knobspace.hpp"

namespace safetune {

using nlohmann::json;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::mt19937_64 step_rng(std::uint64_t seed, int t, std::uint64_t salt) {
    return std::mt19937_64(splitmix(splitmix(seed) ^ splitmix(static_cast<std::uint64_t>(t) * 0x100000001b3ULL + salt)));
}

// Largest-remainder apportionment of n items by weight.
std::vector<int> apportion(const std::vector<double>& w, int n) {
    std::vector<int> count(w.size(), 0);
    std::vector<std::pair<double, std::size_t>> rem;
    int used = 0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        const double exact = w[k] * n;
        count[k] = static_cast<int>(std::floor(exact));
        used += count[k];
        rem.emplace_back(exact - count[k], k);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; used < n && i < rem.size(); ++i, ++used) {
        ++count[rem[i].second];
    }
    return count;
}

} // namespace

const char* to_string(TraceMode mode) {
    switch (mode) {
    case TraceMode::Sine:
        return "sine";
    case TraceMode::Alternating:
        return "alternating";
    case TraceMode::Replay:
        return "replay";
    }
    return "?";
}

TraceMode trace_mode_from_string(const std::string& s) {
    if (s == "sine") {
        return TraceMode::Sine;
    }
    if (s == "alternating") {
        return TraceMode::Alternating;
    }
    if (s == "replay") {
        return TraceMode::Replay;
    }
    throw InvalidInput("unknown trace mode '" + s + "'");
}

const std::vector<QueryTemplate>& oltp_templates() {
    static const std::vector<QueryTemplate> t{
        {"new_order",
         "SELECT i_price, i_name, i_data FROM item WHERE i_id = ?; UPDATE stock SET s_quantity = ? WHERE s_i_id = ? AND s_w_id = ?",
         12, 100, 1},
        {"payment", "UPDATE warehouse SET w_ytd = w_ytd + ? WHERE w_id = ?; SELECT c_balance FROM customer WHERE c_w_id = ? AND c_last = ?",
         30, 60, 1},
        {"order_status", "SELECT o_id, o_carrier_id, o_entry_d FROM orders WHERE o_w_id = ? AND o_d_id = ? AND o_c_id = ? ORDER BY o_id DESC",
         60, 40, 1},
        {"delivery", "SELECT no_o_id FROM new_order WHERE no_d_id = ? AND no_w_id = ? ORDER BY no_o_id ASC LIMIT 1; DELETE FROM new_order WHERE no_o_id = ?",
         200, 25, 1},
        {"stock_level", "SELECT COUNT(DISTINCT s_i_id) FROM order_line JOIN stock ON s_i_id = ol_i_id WHERE ol_w_id = ? AND s_quantity < ?",
         4000, 10, 0},
    };
    return t;
}

const std::vector<QueryTemplate>& analytic_templates() {
    static const std::vector<QueryTemplate> t{
        {"movie_keyword",
         "SELECT MIN(t.title) FROM keyword k JOIN movie_keyword mk ON k.id = mk.keyword_id JOIN title t ON t.id = mk.movie_id WHERE k.keyword LIKE ?",
         4.0e6, 5, 0},
        {"cast_info", "SELECT MIN(n.name) FROM cast_info ci JOIN name n ON n.id = ci.person_id JOIN role_type rt ON rt.id = ci.role_id WHERE rt.role = ?",
         2.5e7, 12, 1},
        {"company", "SELECT MIN(cn.name) FROM company_name cn JOIN movie_companies mc ON mc.company_id = cn.id GROUP BY cn.country_code",
         3.0e6, 30, 0},
        {"info_join", "SELECT MIN(mi.info) FROM movie_info mi JOIN info_type it ON it.id = mi.info_type_id JOIN title t ON t.id = mi.movie_id WHERE t.production_year > ?",
         1.5e7, 20, 1},
        {"link_chain", "SELECT MIN(lt.link) FROM movie_link ml JOIN link_type lt ON lt.id = ml.link_type_id JOIN title t1 ON t1.id = ml.movie_id JOIN title t2 ON t2.id = ml.linked_movie_id",
         8.0e6, 8, 0},
    };
    return t;
}

WorkloadTrace WorkloadTrace::generate(const TraceOptions& options) {
    if (options.mode == TraceMode::Replay) {
        throw InvalidInput("replay traces are built from events");
    }
    if (options.iterations < 1 || options.queries_per_window < 1 || !(options.window_seconds > 0.0) ||
        options.period < 1 || options.phase_length < 1 || options.std < 0.0) {
        throw InvalidInput("invalid trace options");
    }
    WorkloadTrace tr;
    tr.options_ = options;
    tr.iterations_ = options.iterations;
    return tr;
}

WorkloadTrace WorkloadTrace::replay(const std::vector<TraceEvent>& events, double window_seconds) {
    if (events.empty()) {
        throw InvalidInput("trace has no events");
    }
    if (!(window_seconds > 0.0)) {
        throw InvalidInput("window length must be positive");
    }
    WorkloadTrace tr;
    tr.options_.mode = TraceMode::Replay;
    tr.options_.window_seconds = window_seconds;
    // Windows are aligned to multiples of the window length.
    const double t0 = std::floor(events.front().ts / window_seconds) * window_seconds;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        if (i > 0 && e.ts < events[i - 1].ts) {
            throw InvalidInput("trace timestamps must be non-decreasing");
        }
        const auto w = static_cast<std::size_t>(std::floor((e.ts - t0) / window_seconds));
        if (tr.replayed_.size() <= w) {
            tr.replayed_.resize(w + 1);
        }
        tr.replayed_[w].queries.push_back({e.sql, e.ts});
        tr.replayed_[w].stats.push_back(e.stats);
    }
    tr.iterations_ = static_cast<int>(tr.replayed_.size());
    tr.options_.iterations = tr.iterations_;
    return tr;
}

std::vector<double> WorkloadTrace::weights(int t) const {
    if (options_.mode == TraceMode::Replay) {
        throw InvalidInput("replay traces have no template weights");
    }
    const auto& set = (options_.mode == TraceMode::Alternating && (t / options_.phase_length) % 2 == 1)
                          ? analytic_templates()
                          : oltp_templates();
    const std::size_t k = set.size();
    auto rng = step_rng(options_.seed, t, 1);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> w(k);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double phase = 2.0 * std::numbers::pi * (static_cast<double>(t) / options_.period + static_cast<double>(i) / k);
        const double mean = 0.5 + 0.5 * std::sin(phase);
        const double noise = n01(rng); // drawn even when std is 0 so the stream layout is fixed
        w[i] = std::clamp(mean + options_.std * noise, 0.0, 1.0);
        sum += w[i];
    }
    if (sum <= 0.0) {
        std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(k));
    } else {
        for (double& x : w) {
            x /= sum;
        }
    }
    return w;
}

TraceWindow WorkloadTrace::step(int t) const {
    if (t < 0 || t >= iterations_) {
        throw InvalidInput("trace step out of range");
    }
    if (options_.mode == TraceMode::Replay) {
        return replayed_[static_cast<std::size_t>(t)];
    }
    const bool analytic = options_.mode == TraceMode::Alternating && (t / options_.phase_length) % 2 == 1;
    const auto& set = analytic ? analytic_templates() : oltp_templates();
    const std::vector<double> w = weights(t);
    const double wave = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / options_.period);
    const int n = std::max(1, static_cast<int>(std::lround(options_.queries_per_window * (1.0 + 0.25 * wave))));
    const std::vector<int> count = apportion(w, n);

    auto rng = step_rng(options_.seed, t, 2);
    std::normal_distribution<double> n01(0.0, 1.0);
    const double growth = 1.0 + options_.data_growth * t;
    TraceWindow win;
    const double start = t * options_.window_seconds;
    int q = 0;
    for (std::size_t k = 0; k < set.size(); ++k) {
        for (int i = 0; i < count[k]; ++i, ++q) {
            const double ts = start + options_.window_seconds * (q + 0.5) / n;
            win.queries.push_back({set[k].sql, ts});
            OptimizerStats s;
            s.rows_examined_est = set[k].rows * growth * std::exp(0.1 * n01(rng));
            s.filter_pct = set[k].filter_pct;
            s.index_used = set[k].index_used;
            win.stats.push_back(s);
        }
    }
    return win;
}

std::vector<Context> WorkloadTrace::contexts(const FeaturizeConfig& config) const {
    std::vector<Context> out;
    out.reserve(static_cast<std::size_t>(iterations_));
    for (int t = 0; t < iterations_; ++t) {
        TraceWindow w = step(t);
        if (w.queries.empty()) {
            if (out.empty()) {
                throw InvalidInput("the first trace window is idle");
            }
            out.push_back(out.back());
            continue;
        }
        out.push_back(featurize_window(w.queries, w.stats, options_.window_seconds, config));
    }
    return out;
}

std::vector<TraceEvent> WorkloadTrace::events() const {
    std::vector<TraceEvent> ev;
    for (int t = 0; t < iterations_; ++t) {
        TraceWindow w = step(t);
        for (std::size_t i = 0; i < w.queries.size(); ++i) {
            ev.push_back({w.queries[i].arrival_time, w.queries[i].text, w.stats[i]});
        }
    }
    return ev;
}

void write_trace_events(std::ostream& out, const std::vector<TraceEvent>& events) {
    for (const auto& e : events) {
        json rec{{"ts", e.ts},
                 {"sql", e.sql},
                 {"rows_examined_est", e.stats.rows_examined_est},
                 {"filter_pct", e.stats.filter_pct},
                 {"index_used", e.stats.index_used}};
        out << rec.dump() << '\n';
    }
}

std::vector<TraceEvent> read_trace_events(std::istream& in) {
    std::vector<TraceEvent> ev;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            json rec = json::parse(line);
            if (rec.contains("runspec") || rec.contains("trace")) {
                continue; // provenance header
            }
            TraceEvent e;
            e.ts = rec.at("ts").get<double>();
            e.sql = rec.at("sql").get<std::string>();
            e.stats.rows_examined_est = rec.value("rows_examined_est", 0.0);
            e.stats.filter_pct = rec.value("filter_pct", 100.0);
            e.stats.index_used = rec.value("index_used", 0);
            if (e.sql.empty() || e.stats.rows_examined_est < 0.0 || e.stats.filter_pct < 0.0 ||
                e.stats.filter_pct > 100.0 || (e.stats.index_used != 0 && e.stats.index_used != 1)) {
                throw InvalidInput("out-of-range field");
            }
            ev.push_back(std::move(e));
        } catch (const std::exception& e) {
            throw InvalidInput("trace line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return ev;
}

std::vector<TraceEvent> load_trace_events(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw InvalidInput("cannot open trace file '" + path + "'");
    }
    return read_trace_events(in);
}

} // namespace safetune
