// safetune: run tuning episodes against a synthetic environment, generate inputs, re-summarize.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "safetune/repository.hpp"
#include "safetune/run.hpp"
#include "safetune/simenv.hpp"
#include "safetune/trace.hpp"

using namespace safetune;

namespace {

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) {
        throw InvalidInput("cannot write '" + path + "'");
    }
    out << text;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Safe contextual Bayesian-optimization knob tuner"};
    app.require_subcommand(1);

    // run
    RunSpec spec;
    std::string trace_mode = "sine";
    std::vector<std::string> ablate;
    bool no_relaxation = false;
    auto* run_cmd = app.add_subcommand("run", "Run one tuning episode");
    run_cmd->add_option("--env", spec.env_path, "Environment file")->required()->check(CLI::ExistingFile);
    auto* trace_opt = run_cmd->add_option("--trace", spec.trace_path, "Recorded trace file (JSONL)")->check(CLI::ExistingFile);
    run_cmd->add_option("--trace-mode", trace_mode, "Generated trace mode")
        ->check(CLI::IsMember({"sine", "alternating"}))
        ->excludes(trace_opt);
    run_cmd->add_option("--std", spec.trace.std, "Std of generated transaction weights")->check(CLI::NonNegativeNumber);
    run_cmd->add_option("--window", spec.trace.window_seconds, "Seconds per tuning interval")->check(CLI::PositiveNumber);
    run_cmd->add_option("--iterations", spec.iterations, "Tuning iterations")->check(CLI::PositiveNumber);
    run_cmd->add_option("--seed", spec.seed, "Random seed")->required();
    run_cmd->add_option("--out", spec.out_dir, "Output directory");
    run_cmd->add_option("--ablate", ablate, "Ablation switch (repeatable)")->check(CLI::IsMember(ablation_names()));
    run_cmd->add_option("--rules", spec.rules_path, "Rules file, or 'none'");
    run_cmd->add_option("--beta", spec.tuner.beta, "Confidence multiplier")->check(CLI::NonNegativeNumber);
    run_cmd->add_option("--epsilon", spec.tuner.epsilon, "Boundary exploration probability")->check(CLI::Range(0.0, 1.0));
    run_cmd->add_option("--mi-threshold", spec.tuner.mi_threshold, "Re-cluster NMI threshold")->check(CLI::Range(0.0, 1.0));
    run_cmd->add_option("--cluster-cap", spec.tuner.cluster_cap, "Training cap per cluster")->check(CLI::PositiveNumber);
    run_cmd->add_flag("--no-relaxation", no_relaxation, "Never ignore or relax white-box rules");
    run_cmd->add_option("--resume", spec.resume_path, "Continue from an observations file")->check(CLI::ExistingFile);

    // gen
    auto* gen_cmd = app.add_subcommand("gen", "Generate environments and traces");
    gen_cmd->require_subcommand(1);
    GenEnvOptions env_opts;
    std::string env_out;
    auto* gen_env = gen_cmd->add_subcommand("env", "Generate a synthetic environment");
    gen_env->add_option("--knobs", env_opts.knobs, "Number of knobs (1-40)")->check(CLI::Range(1, 40));
    gen_env->add_option("--seed", env_opts.seed, "Random seed")->required();
    gen_env->add_option("--out", env_out, "Output file")->required();

    TraceOptions trace_opts;
    std::string trace_gen_mode = "sine";
    std::string trace_out;
    auto* gen_trace = gen_cmd->add_subcommand("trace", "Generate a workload trace");
    gen_trace->add_option("--mode", trace_gen_mode, "sine or alternating")->check(CLI::IsMember({"sine", "alternating"}));
    gen_trace->add_option("--std", trace_opts.std, "Std of transaction weights")->check(CLI::NonNegativeNumber);
    gen_trace->add_option("--iterations", trace_opts.iterations, "Windows to generate")->check(CLI::PositiveNumber);
    gen_trace->add_option("--window", trace_opts.window_seconds, "Seconds per window")->check(CLI::PositiveNumber);
    gen_trace->add_option("--seed", trace_opts.seed, "Random seed")->required();
    gen_trace->add_option("--out", trace_out, "Output file")->required();

    // report
    std::string repo_path, report_env, report_space;
    auto* report_cmd = app.add_subcommand("report", "Summarize an observation repository");
    report_cmd->add_option("--repo", repo_path, "observations.jsonl")->required()->check(CLI::ExistingFile);
    auto* renv = report_cmd->add_option("--env", report_env, "Environment file (for the knob space)")->check(CLI::ExistingFile);
    report_cmd->add_option("--space", report_space, "Knob space file")->check(CLI::ExistingFile)->excludes(renv);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            spec.trace.mode = trace_mode_from_string(trace_mode);
            spec.trace.seed = spec.seed;
            spec.ablations = {ablate.begin(), ablate.end()};
            spec.tuner.enable_relaxation = !no_relaxation;
            EpisodeResult r = run(spec);
            std::cout << "iterations=" << r.metrics.iterations << " unsafe=" << r.metrics.unsafe
                      << " failures=" << r.metrics.failures << " cumulative_performance=" << r.metrics.cumulative_performance
                      << " cumulative_improvement=" << r.metrics.cumulative_improvement << '\n';
        } else if (*gen_env) {
            EnvSpec es = generate_env(env_opts);
            write_file(env_out, es.to_json_text() + "\n");
        } else if (*gen_trace) {
            trace_opts.mode = trace_mode_from_string(trace_gen_mode);
            WorkloadTrace tr = WorkloadTrace::generate(trace_opts);
            std::ofstream out(trace_out);
            if (!out) {
                throw InvalidInput("cannot write '" + trace_out + "'");
            }
            nlohmann::json header{{"trace",
                                   {{"mode", trace_gen_mode},
                                    {"std", trace_opts.std},
                                    {"iterations", trace_opts.iterations},
                                    {"window_seconds", trace_opts.window_seconds},
                                    {"seed", trace_opts.seed}}}};
            out << header.dump() << '\n';
            write_trace_events(out, tr.events());
        } else if (*report_cmd) {
            if (report_env.empty() && report_space.empty()) {
                throw InvalidInput("report needs --env or --space");
            }
            KnobSpace space = report_env.empty() ? KnobSpace::load(report_space) : EnvSpec::load(report_env).space;
            MetricsReport m = report_repository(load_repository(repo_path, space));
            nlohmann::json doc{{"iterations", m.iterations},
                               {"cumulative_performance", m.cumulative_performance},
                               {"cumulative_improvement", m.cumulative_improvement},
                               {"unsafe", m.unsafe},
                               {"failures", m.failures},
                               {"unsafe_rate", m.unsafe_rate}};
            std::cout << doc.dump(2) << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
