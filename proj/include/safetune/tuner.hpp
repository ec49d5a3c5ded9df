#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "safetune/featurize.hpp"
#include "safetune/knobspace.hpp"
#include "safetune/registry.hpp"
#include "safetune/repository.hpp"
#include "safetune/rules.hpp"
#include "safetune/safety.hpp"
#include "safetune/subspace.hpp"

namespace safetune {

struct TunerConfig {
    double beta = 2.0;
    double epsilon = 0.1;
    double mi_threshold = 0.5;
    std::size_t cluster_cap = 300;
    int hypercube_density = 20;
    int line_density = 50;
    /// Candidate count when the search is not restricted to a subspace.
    int global_candidates = 512;
    SubspaceParams subspace;
    /// New observations between re-cluster checks.
    int recluster_every = 25;
    /// Updates of a cluster between hyperparameter searches; other updates only refactor.
    int hyperfit_every = 25;
    std::uint64_t seed = 1;
    bool enable_relaxation = true;

    // Ablations.
    bool use_black = true;
    bool use_white = true;
    bool use_subspace = true;
    /// false = vanilla contextual BO: global UCB with no filters and no fallback.
    bool use_safe = true;
    bool use_clustering = true;

    /// Throws InvalidInput on out-of-range values.
    void validate() const;
};

enum class SelectionKind { Ucb, Boundary, Exploit, Controversial };

const char* to_string(SelectionKind kind);

/// What `step` decided and why.
struct Recommendation {
    Configuration config;
    Point point;
    int cluster = 0;
    SelectionKind kind = SelectionKind::Ucb;
    std::string region = "hypercube";
    double radius = 0.0;
    double lower_bound = 0.0;
    double mean = 0.0;
    double std = 0.0;
    std::size_t safe_count = 0;
    std::vector<std::size_t> conflicts;
    std::optional<std::size_t> controversial_rule;
};

struct IterationRecord {
    int t = 0;
    double performance = 0.0;
    double tau = 0.0;
    bool safe = false;
    bool failure = false;
    int cluster = 0;
    /// "hypercube", "line" or "global" (no subspace restriction).
    std::string region = "hypercube";
    double radius = 0.0;
    SelectionKind kind = SelectionKind::Ucb;
    bool relearned = false;
    std::vector<std::string> conflict_rules;
    std::string controversial_rule;
};

struct MetricsReport {
    int iterations = 0;
    int unsafe = 0;
    int failures = 0;
    double cumulative_performance = 0.0;
    double cumulative_improvement = 0.0;
    double unsafe_rate = 0.0;
    std::vector<IterationRecord> series;
};

/// Sums a series into the headline metrics.
MetricsReport summarize(std::vector<IterationRecord> series);

/// Online loop: select model, adapt subspace, build the safety set, pick a candidate; then
/// record the outcome, relax rules, refit and re-cluster on cadence.
class Tuner {
public:
    Tuner(KnobSpace space, TunerConfig config, RuleSet rules = {}, EnvMetrics metrics = {});

    /// Seeds the repository with the default configuration observed at `default_perf`.
    void bootstrap(const Configuration& default_config, double default_perf, const Context& context0, double tau0);

    /// Continues from a stored repository (its first record acts as the bootstrap).
    void resume(std::vector<Observation> repo);

    bool bootstrapped() const { return !repo_.empty(); }

    /// Recommends the next configuration for `context` under threshold `tau`.
    Recommendation step(const Context& context, double tau);

    /// Records the outcome of the last recommendation. `failure` overrides `performance` with
    /// `failure_performance`.
    void update(const Context& context, double tau, double performance, bool failure, double failure_performance = 0.0);

    MetricsReport metrics() const { return summarize(series_); }

    const std::vector<Observation>& repository() const { return repo_; }
    const ModelRegistry& registry() const { return registry_; }
    const RuleSet& rules() const { return rules_; }
    const KnobSpace& space() const { return space_; }
    const TunerConfig& config() const { return config_; }
    Point theta_best(int cluster) const { return registry_.theta_best(cluster, repo_); }

private:
    Recommendation step_vanilla(const Context& context, double tau, int cluster);
    Eigen::VectorXd direction(const GpModel& model, double improvement);

    KnobSpace space_;
    TunerConfig config_;
    RuleSet rules_;
    EnvMetrics metrics_;
    ModelRegistry registry_;
    std::vector<Observation> repo_;
    std::vector<IterationRecord> series_;
    std::optional<Recommendation> pending_;
    std::mt19937_64 rng_;
    Point default_point_;
    int since_recluster_ = 0;
    bool relearned_in_step_ = false;
};

} // namespace safetune
