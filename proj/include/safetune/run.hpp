#pragma once

#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "safetune/simenv.hpp"
#include "safetune/trace.hpp"
#include "safetune/tuner.hpp"

namespace safetune {

/// Which context blocks the tuner is allowed to see.
struct ContextMask {
    bool workload = true; // embedding + arrival rate
    bool data = true;     // optimizer statistics

    Context apply(const Context& c) const;
};

/// Known ablation switches.
const std::vector<std::string>& ablation_names();

/// Applies ablations to the tuner configuration and context mask. Rejects unknown names and
/// combining no-safe with the partial safety ablations.
void apply_ablations(const std::set<std::string>& ablations, TunerConfig& config, ContextMask& mask);

/// Fully resolved run description. Everything except `out_dir` is embedded in the artifacts.
struct RunSpec {
    std::string env_path;
    /// Recorded trace; when empty a trace is generated from `trace`.
    std::string trace_path;
    TraceOptions trace;
    int iterations = 400;
    std::uint64_t seed = 0;
    std::set<std::string> ablations;
    /// Rules file; empty uses the bundled defaults restricted to the space, "none" disables rules.
    std::string rules_path;
    TunerConfig tuner;
    std::string out_dir;
    std::string resume_path;

    std::string to_json_text() const;
};

struct EpisodeResult {
    MetricsReport metrics;
    std::vector<Observation> repository;
    int relearn_count = 0;
};

/// Runs `iterations` tuning steps against `env` over `contexts[0..iterations]` (index 0 bootstraps).
EpisodeResult run_episode(const SyntheticEnv& env, const std::vector<Context>& contexts, const RuleSet& rules,
                          const TunerConfig& config, const ContextMask& mask, int iterations,
                          const std::vector<Observation>* resume = nullptr);

/// CSV with a leading "# runspec=" comment, then the header
///   t,performance,tau,safe,failure,cluster_id,subspace_kind,radius,selection,relearned
void write_metrics_csv(std::ostream& out, const MetricsReport& report, const std::string& runspec_json);
std::string summary_json(const MetricsReport& report, const std::string& runspec_json, int relearn_count);

/// Loads inputs, runs the episode and writes metrics.csv, summary.json and observations.jsonl into
/// out_dir (when set).
EpisodeResult run(const RunSpec& spec);

/// Re-summarizes a stored repository; the first record is the bootstrap and is excluded.
MetricsReport report_repository(const std::vector<Observation>& repo);

} // namespace safetune
