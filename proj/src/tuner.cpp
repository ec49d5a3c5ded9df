#include "safetune/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace safetune {

void TunerConfig::validate() const {
    if (!(beta >= 0.0)) {
        throw InvalidInput("beta must be nonnegative");
    }
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
        throw InvalidInput("epsilon must lie in [0, 1]");
    }
    if (!(mi_threshold >= 0.0 && mi_threshold <= 1.0)) {
        throw InvalidInput("mi_threshold must lie in [0, 1]");
    }
    if (cluster_cap < 1 || hypercube_density < 2 || line_density < 2 || global_candidates < 1) {
        throw InvalidInput("cluster cap and discretization densities must be positive");
    }
    if (recluster_every < 1 || hyperfit_every < 1) {
        throw InvalidInput("cadences must be at least 1");
    }
    const auto& s = subspace;
    if (!(s.r_min > 0.0 && s.r_min <= s.r0 && s.r0 <= s.r_max)) {
        throw InvalidInput("subspace radii must satisfy 0 < r_min <= r0 <= r_max");
    }
}

const char* to_string(SelectionKind kind) {
    switch (kind) {
    case SelectionKind::Ucb:
        return "ucb";
    case SelectionKind::Boundary:
        return "boundary";
    case SelectionKind::Exploit:
        return "exploit";
    case SelectionKind::Controversial:
        return "controversial";
    }
    return "?";
}

MetricsReport summarize(std::vector<IterationRecord> series) {
    MetricsReport r;
    r.iterations = static_cast<int>(series.size());
    for (const auto& it : series) {
        r.unsafe += it.safe ? 0 : 1;
        r.failures += it.failure ? 1 : 0;
        r.cumulative_performance += it.performance;
        r.cumulative_improvement += it.performance - it.tau;
    }
    r.unsafe_rate = r.iterations > 0 ? static_cast<double>(r.unsafe) / r.iterations : 0.0;
    r.series = std::move(series);
    return r;
}

namespace {

RegistryOptions registry_options(const TunerConfig& c) {
    RegistryOptions o;
    o.mi_threshold = c.mi_threshold;
    o.cluster_cap = c.cluster_cap;
    o.clustering = c.use_clustering;
    o.subspace = c.subspace;
    return o;
}

std::vector<Point> evaluated_points(const std::vector<Observation>& repo) {
    std::vector<Point> pts;
    pts.reserve(repo.size());
    for (const auto& o : repo) {
        pts.push_back(o.point);
    }
    return pts;
}

} // namespace

Tuner::Tuner(KnobSpace space, TunerConfig config, RuleSet rules, EnvMetrics metrics)
    : space_(std::move(space)), config_(config), rules_(std::move(rules)), metrics_(std::move(metrics)),
      rng_(config.seed) {
    config_.validate();
    rules_.validate(space_);
    default_point_ = space_.normalize(space_.default_config());
    registry_ = ModelRegistry(registry_options(config_), default_point_);
}

void Tuner::bootstrap(const Configuration& default_config, double default_perf, const Context& context0, double tau0) {
    if (!repo_.empty()) {
        throw std::logic_error("tuner already bootstrapped");
    }
    Observation o;
    o.iteration = 0;
    o.context = context0;
    o.config = default_config;
    o.point = space_.normalize(default_config);
    o.performance = default_perf;
    o.tau = tau0;
    o.safe = default_perf >= tau0;
    o.failure = false;
    default_point_ = o.point;
    registry_ = ModelRegistry(registry_options(config_), default_point_);
    repo_.push_back(std::move(o));
}

void Tuner::resume(std::vector<Observation> repo) {
    if (repo.empty()) {
        throw InvalidInput("cannot resume from an empty repository");
    }
    if (!repo_.empty()) {
        throw std::logic_error("tuner already bootstrapped");
    }
    repo_ = std::move(repo);
    default_point_ = repo_.front().point;
    registry_ = ModelRegistry(registry_options(config_), default_point_);
    registry_.relearn(repo_);
    for (std::size_t i = 1; i < repo_.size(); ++i) {
        const auto& o = repo_[i];
        IterationRecord r;
        r.t = o.iteration;
        r.performance = o.performance;
        r.tau = o.tau;
        r.safe = o.safe;
        r.failure = o.failure;
        r.cluster = registry_.assignment()[i];
        r.region = "replayed";
        series_.push_back(std::move(r));
    }
}

Eigen::VectorXd Tuner::direction(const GpModel& model, double improvement) {
    return generate_direction(knob_importance(model), improvement, config_.subspace.improvement_threshold, rng_);
}

Recommendation Tuner::step_vanilla(const Context& context, double /*tau*/, int cluster) {
    const GpModel& model = *registry_.cluster(cluster).model;
    CandidateSet cands = global_candidates(config_.global_candidates, space_, rng_);
    mark_evaluated(cands, evaluated_points(repo_));
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(cands.size()), static_cast<Eigen::Index>(space_.size()));
    for (std::size_t i = 0; i < cands.size(); ++i) {
        rows.row(static_cast<Eigen::Index>(i)) = cands.points[i].transpose();
    }
    Eigen::VectorXd mean, sd;
    model.posterior_batch(rows, context, mean, sd);
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        if (!cands.evaluated[i]) {
            open.push_back(i);
        }
    }
    if (open.empty()) {
        for (std::size_t i = 0; i < cands.size(); ++i) {
            open.push_back(i);
        }
    }
    const Eigen::VectorXd ucb = mean + config_.beta * sd;
    const std::size_t pick = *argmax_lex(open, ucb, cands.points);

    Recommendation rec;
    rec.point = cands.points[pick];
    rec.config = space_.denormalize(rec.point);
    rec.cluster = cluster;
    rec.kind = SelectionKind::Ucb;
    rec.region = "global";
    rec.mean = mean[static_cast<Eigen::Index>(pick)];
    rec.std = sd[static_cast<Eigen::Index>(pick)];
    rec.lower_bound = rec.mean - config_.beta * rec.std;
    rec.safe_count = cands.size();
    return rec;
}

Recommendation Tuner::step(const Context& context, double tau) {
    if (repo_.empty()) {
        throw std::logic_error("step called before bootstrap");
    }
    if (pending_) {
        throw std::logic_error("step called twice without update");
    }
    relearned_in_step_ = false;
    if (registry_.empty()) {
        registry_.maybe_recluster(repo_);
        relearned_in_step_ = true;
    }
    const int n = registry_.select_model(context);
    // One draw per step keeps the random stream aligned across branches.
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);

    if (!config_.use_safe) {
        pending_ = step_vanilla(context, tau, n);
        return *pending_;
    }

    ClusterState& cs = registry_.cluster(n);
    const GpModel& model = *cs.model;
    const Point best = registry_.theta_best(n, repo_);

    CandidateSet cands;
    if (config_.use_subspace) {
        cs.subspace = adapt(cs.subspace, cs.adapt, best, cs.had_unevaluated_safe, config_.subspace,
                            [&](double improvement) { return direction(model, improvement); });
        const int density = cs.subspace.kind == RegionKind::Line ? config_.line_density : config_.hypercube_density;
        cands = discretize(cs.subspace, density, space_, rng_);
    } else {
        cands = global_candidates(config_.global_candidates, space_, rng_);
    }
    mark_evaluated(cands, evaluated_points(repo_));

    SafetyOptions opts;
    opts.beta = config_.beta;
    opts.tau = tau;
    opts.use_black = config_.use_black;
    opts.use_white = config_.use_white;
    // The pending ignored rule is resolved below, so filtering always runs with every rule active.
    RuleSet active = rules_;
    active.ignored.reset();
    // Without a subspace there is no region surface, only unsafe neighbours mark the boundary.
    const Subspace geometry = config_.use_subspace ? cs.subspace : Subspace::hypercube(best, 1e9);
    SafetySet ss = assess(std::move(cands), geometry, model, context, opts, config_.use_white ? &active : nullptr, space_,
                          metrics_, best);
    cs.had_unevaluated_safe = ss.has_unevaluated_safe();

    const auto& pts = ss.candidates.points;
    std::optional<std::size_t> pick;
    SelectionKind kind = SelectionKind::Ucb;
    std::optional<std::size_t> controversial;

    if (config_.enable_relaxation && config_.use_white && rules_.ignored && ss.black_top && ss.conflicts.size() == 1 &&
        ss.conflicts.front() == *rules_.ignored) {
        pick = ss.black_top;
        kind = SelectionKind::Controversial;
        controversial = rules_.ignored;
    } else {
        if (u < config_.epsilon) {
            std::vector<std::size_t> open, all;
            for (std::size_t i : ss.boundary_indices()) {
                all.push_back(i);
                if (!ss.candidates.evaluated[i]) {
                    open.push_back(i);
                }
            }
            pick = argmax_lex(open.empty() ? all : open, ss.std, pts);
            kind = SelectionKind::Boundary;
        }
        if (!pick) {
            std::vector<std::size_t> open;
            for (std::size_t i : ss.safe_indices()) {
                if (!ss.candidates.evaluated[i]) {
                    open.push_back(i);
                }
            }
            const Eigen::VectorXd ucb = ss.mean + config_.beta * ss.std;
            pick = argmax_lex(open, ucb, pts);
            kind = SelectionKind::Ucb;
        }
        if (!pick) {
            pick = ss.fallback;
            kind = SelectionKind::Exploit;
        }
    }

    Recommendation rec;
    const std::size_t i = *pick;
    const auto ei = static_cast<Eigen::Index>(i);
    rec.point = pts[i];
    rec.config = space_.denormalize(rec.point);
    rec.cluster = n;
    rec.kind = kind;
    rec.region = config_.use_subspace ? to_string(cs.subspace.kind) : "global";
    rec.radius = config_.use_subspace ? cs.subspace.radius : 0.0;
    rec.mean = ss.mean[ei];
    rec.std = ss.std[ei];
    rec.lower_bound = rec.mean - config_.beta * rec.std;
    rec.safe_count = ss.safe_indices().size();
    rec.conflicts = ss.conflicts;
    rec.controversial_rule = controversial;
    pending_ = rec;
    return rec;
}

void Tuner::update(const Context& context, double tau, double performance, bool failure, double failure_performance) {
    if (!pending_) {
        throw std::logic_error("update called without a pending recommendation");
    }
    const Recommendation rec = std::move(*pending_);
    pending_.reset();

    Observation o;
    o.iteration = repo_.back().iteration + 1;
    o.context = context;
    o.config = rec.config;
    o.point = rec.point;
    o.failure = failure;
    o.performance = failure ? failure_performance : performance;
    o.tau = tau;
    o.safe = !failure && performance >= tau;
    repo_.push_back(o);
    const std::size_t idx = repo_.size() - 1;
    registry_.assign(idx, rec.cluster);

    ClusterState& cs = registry_.cluster(rec.cluster);
    cs.adapt = record_outcome(cs.adapt, o.safe ? o.performance - tau : -std::numeric_limits<double>::infinity());

    if (config_.enable_relaxation && config_.use_white && config_.use_safe) {
        std::optional<RelaxationFeedback> feedback;
        std::vector<std::size_t> conflicts = rec.conflicts;
        if (rec.controversial_rule) {
            feedback = RelaxationFeedback{*rec.controversial_rule, o.safe};
            rules_.ignored.reset();
            std::erase(conflicts, *rec.controversial_rule);
        }
        apply_relaxation(rules_, conflicts, feedback);
    }

    const bool optimize = cs.updates_since_hyperfit + 1 >= config_.hyperfit_every;
    registry_.refit(rec.cluster, repo_, optimize);

    IterationRecord r;
    r.t = o.iteration;
    r.performance = o.performance;
    r.tau = tau;
    r.safe = o.safe;
    r.failure = o.failure;
    r.cluster = rec.cluster;
    r.region = rec.region;
    r.radius = rec.radius;
    r.kind = rec.kind;
    for (std::size_t c : rec.conflicts) {
        r.conflict_rules.push_back(rules_.rules[c].id);
    }
    if (rec.controversial_rule) {
        r.controversial_rule = rules_.rules[*rec.controversial_rule].id;
    }

    r.relearned = relearned_in_step_;
    if (++since_recluster_ >= config_.recluster_every) {
        since_recluster_ = 0;
        if (registry_.maybe_recluster(repo_)) {
            r.relearned = true;
        }
    }
    series_.push_back(std::move(r));
}

} // namespace safetune
