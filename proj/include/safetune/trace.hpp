#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "safetune/featurize.hpp"

namespace safetune {

/// One line of a trace file: {"ts":..,"sql":..,"rows_examined_est":..,"filter_pct":..,"index_used":..}
struct TraceEvent {
    double ts = 0.0;
    std::string sql;
    OptimizerStats stats;
};

enum class TraceMode { Sine, Alternating, Replay };

const char* to_string(TraceMode mode);
TraceMode trace_mode_from_string(const std::string& s);

struct TraceOptions {
    TraceMode mode = TraceMode::Sine;
    /// Standard deviation of the per-iteration transaction weights.
    double std = 0.1;
    int iterations = 400;
    std::uint64_t seed = 1;
    double window_seconds = 10.0;
    int queries_per_window = 40;
    /// Period (iterations) of the sine weight means and the arrival-rate wave.
    int period = 100;
    /// Alternating mode switches template set every `phase_length` iterations.
    int phase_length = 100;
    /// Relative growth of row estimates per iteration (underlying data drift).
    double data_growth = 0.002;
};

struct QueryTemplate {
    std::string name;
    std::string sql;
    double rows = 1.0;
    double filter_pct = 100.0;
    int index_used = 1;
};

/// Five TPC-C style transactions.
const std::vector<QueryTemplate>& oltp_templates();
/// Five join-heavy analytical queries.
const std::vector<QueryTemplate>& analytic_templates();

struct TraceWindow {
    std::vector<QueryEvent> queries;
    std::vector<OptimizerStats> stats;
};

/// Per-iteration query windows, either synthesized or replayed from recorded events.
class WorkloadTrace {
public:
    static WorkloadTrace generate(const TraceOptions& options);
    static WorkloadTrace replay(const std::vector<TraceEvent>& events, double window_seconds);

    int iterations() const { return iterations_; }
    double window_seconds() const { return options_.window_seconds; }
    const TraceOptions& options() const { return options_; }

    /// Queries and stats of iteration t. Pure in (seed, t) for synthetic modes.
    TraceWindow step(int t) const;

    /// Template weights of iteration t for synthetic modes (sum to 1).
    std::vector<double> weights(int t) const;

    /// Contexts for every iteration. An idle window reuses the previous context; an idle first
    /// window is an error.
    std::vector<Context> contexts(const FeaturizeConfig& config = {}) const;

    /// Flattens the trace into timestamped events (the trace file format).
    std::vector<TraceEvent> events() const;

private:
    TraceOptions options_;
    int iterations_ = 0;
    std::vector<TraceWindow> replayed_;
};

void write_trace_events(std::ostream& out, const std::vector<TraceEvent>& events);
std::vector<TraceEvent> read_trace_events(std::istream& in);
std::vector<TraceEvent> load_trace_events(const std::string& path);

} // namespace safetune
