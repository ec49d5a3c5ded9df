#include "safetune/run.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace safetune {

using nlohmann::json;

Context ContextMask::apply(const Context& c) const {
    Context out = c;
    if (!workload) {
        out.head(kDataDimBegin).setZero();
    }
    if (!data) {
        out.tail(kContextDim - kDataDimBegin).setZero();
    }
    return out;
}

const std::vector<std::string>& ablation_names() {
    static const std::vector<std::string> names{"no-black",      "no-white",        "no-subspace", "no-safe",
                                                "no-clustering", "no-workload-ctx", "no-data-ctx"};
    return names;
}

void apply_ablations(const std::set<std::string>& ablations, TunerConfig& config, ContextMask& mask) {
    for (const auto& a : ablations) {
        if (std::find(ablation_names().begin(), ablation_names().end(), a) == ablation_names().end()) {
            throw InvalidInput("unknown ablation '" + a + "'");
        }
    }
    if (ablations.contains("no-safe") &&
        (ablations.contains("no-black") || ablations.contains("no-white") || ablations.contains("no-subspace"))) {
        throw InvalidInput("no-safe already removes black, white and subspace; do not combine them");
    }
    config.use_black = !ablations.contains("no-black");
    config.use_white = !ablations.contains("no-white");
    config.use_subspace = !ablations.contains("no-subspace");
    config.use_safe = !ablations.contains("no-safe");
    config.use_clustering = !ablations.contains("no-clustering");
    mask.workload = !ablations.contains("no-workload-ctx");
    mask.data = !ablations.contains("no-data-ctx");
}

std::string RunSpec::to_json_text() const {
    json tuner_json{{"beta", tuner.beta},
                    {"epsilon", tuner.epsilon},
                    {"mi_threshold", tuner.mi_threshold},
                    {"cluster_cap", tuner.cluster_cap},
                    {"hypercube_density", tuner.hypercube_density},
                    {"line_density", tuner.line_density},
                    {"recluster_every", tuner.recluster_every},
                    {"hyperfit_every", tuner.hyperfit_every},
                    {"enable_relaxation", tuner.enable_relaxation},
                    {"r0", tuner.subspace.r0},
                    {"r_min", tuner.subspace.r_min},
                    {"r_max", tuner.subspace.r_max}};
    json trace_json{{"mode", to_string(trace.mode)},
                    {"std", trace.std},
                    {"seed", trace.seed},
                    {"window_seconds", trace.window_seconds},
                    {"queries_per_window", trace.queries_per_window},
                    {"period", trace.period},
                    {"phase_length", trace.phase_length}};
    json doc{{"env", env_path},
             {"trace_file", trace_path},
             {"trace", trace_json},
             {"iterations", iterations},
             {"seed", seed},
             {"ablations", std::vector<std::string>(ablations.begin(), ablations.end())},
             {"rules", rules_path.empty() ? "default" : rules_path},
             {"resume", resume_path},
             {"tuner", tuner_json}};
    return doc.dump();
}

EpisodeResult run_episode(const SyntheticEnv& env, const std::vector<Context>& contexts, const RuleSet& rules,
                          const TunerConfig& config, const ContextMask& mask, int iterations,
                          const std::vector<Observation>* resume) {
    if (iterations < 1) {
        throw InvalidInput("iterations must be at least 1");
    }
    if (static_cast<int>(contexts.size()) < iterations + 1) {
        throw InvalidInput("trace is shorter than iterations + 1 windows");
    }
    Tuner tuner(env.space(), config, rules, env.metrics());
    int start = 1;
    if (resume != nullptr && !resume->empty()) {
        tuner.resume(*resume);
        start = resume->back().iteration + 1;
    } else {
        const double tau0 = env.default_performance(contexts[0]);
        tuner.bootstrap(env.space().default_config(), tau0, mask.apply(contexts[0]), tau0);
    }
    for (int t = start; t <= iterations; ++t) {
        const Context& c = contexts[static_cast<std::size_t>(t)];
        const Context seen = mask.apply(c);
        const double tau = env.default_performance(c);
        Recommendation rec = tuner.step(seen, tau);
        EnvOutcome out = env.evaluate(rec.config, c, t);
        tuner.update(seen, tau, out.performance, out.failure, env.spec().failure_performance);
    }
    EpisodeResult r;
    r.metrics = tuner.metrics();
    r.repository = tuner.repository();
    r.relearn_count = tuner.registry().relearn_count();
    return r;
}

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

} // namespace

void write_metrics_csv(std::ostream& out, const MetricsReport& report, const std::string& runspec_json) {
    out << "# runspec=" << runspec_json << '\n';
    out << "t,performance,tau,safe,failure,cluster_id,subspace_kind,radius,selection,relearned\n";
    for (const auto& r : report.series) {
        out << r.t << ',' << num(r.performance) << ',' << num(r.tau) << ',' << (r.safe ? 1 : 0) << ','
            << (r.failure ? 1 : 0) << ',' << r.cluster << ',' << r.region << ',' << num(r.radius) << ','
            << to_string(r.kind) << ',' << (r.relearned ? 1 : 0) << '\n';
    }
}

std::string summary_json(const MetricsReport& report, const std::string& runspec_json, int relearn_count) {
    json doc{{"runspec", json::parse(runspec_json)},
             {"iterations", report.iterations},
             {"cumulative_performance", report.cumulative_performance},
             {"cumulative_improvement", report.cumulative_improvement},
             {"unsafe", report.unsafe},
             {"failures", report.failures},
             {"unsafe_rate", report.unsafe_rate},
             {"relearn_count", relearn_count}};
    return doc.dump(2);
}

EpisodeResult run(const RunSpec& spec) {
    SyntheticEnv env(EnvSpec::load(spec.env_path));

    TunerConfig config = spec.tuner;
    config.seed = spec.seed;
    ContextMask mask;
    apply_ablations(spec.ablations, config, mask);

    WorkloadTrace trace = spec.trace_path.empty()
                              ? [&] {
                                    TraceOptions o = spec.trace;
                                    o.iterations = spec.iterations + 1;
                                    return WorkloadTrace::generate(o);
                                }()
                              : WorkloadTrace::replay(load_trace_events(spec.trace_path), spec.trace.window_seconds);
    const std::vector<Context> contexts = trace.contexts();

    RuleSet rules;
    if (spec.rules_path.empty()) {
        rules = RuleSet::from_json_text(default_rules_json()).restricted_to(env.space());
    } else if (spec.rules_path != "none") {
        rules = RuleSet::load(spec.rules_path);
    }

    std::vector<Observation> prior;
    if (!spec.resume_path.empty()) {
        prior = load_repository(spec.resume_path, env.space());
    }
    EpisodeResult result =
        run_episode(env, contexts, rules, config, mask, spec.iterations, prior.empty() ? nullptr : &prior);

    if (!spec.out_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(spec.out_dir);
        const std::string rs = spec.to_json_text();
        {
            std::ofstream out(fs::path(spec.out_dir) / "metrics.csv");
            write_metrics_csv(out, result.metrics, rs);
        }
        {
            std::ofstream out(fs::path(spec.out_dir) / "summary.json");
            out << summary_json(result.metrics, rs, result.relearn_count) << '\n';
        }
        {
            std::ofstream out(fs::path(spec.out_dir) / "observations.jsonl");
            out << json{{"runspec", json::parse(rs)}}.dump() << '\n';
            write_repository(out, result.repository, env.space());
        }
        for (const char* name : {"metrics.csv", "summary.json", "observations.jsonl"}) {
            if (!fs::exists(fs::path(spec.out_dir) / name)) {
                throw InvalidInput(std::string("failed to write ") + name);
            }
        }
    }
    return result;
}

MetricsReport report_repository(const std::vector<Observation>& repo) {
    std::vector<IterationRecord> series;
    for (std::size_t i = 1; i < repo.size(); ++i) {
        IterationRecord r;
        r.t = repo[i].iteration;
        r.performance = repo[i].performance;
        r.tau = repo[i].tau;
        r.safe = repo[i].safe;
        r.failure = repo[i].failure;
        r.region = "replayed";
        series.push_back(std::move(r));
    }
    return summarize(std::move(series));
}

} // namespace safetune
