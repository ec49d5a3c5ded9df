// Python bindings for the tuner core. Configurations cross the boundary as dicts of knob name to
// value (numbers, or level names for enumerated knobs); points and contexts as numpy arrays.

#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "safetune/run.hpp"
#include "safetune/simenv.hpp"
#include "safetune/surrogate.hpp"
#include "safetune/trace.hpp"
#include "safetune/tuner.hpp"

namespace py = pybind11;
using namespace safetune;

namespace {

py::dict config_to_dict(const KnobSpace& space, const Configuration& c) {
    py::dict d;
    for (std::size_t i = 0; i < space.size(); ++i) {
        KnobValue v = space.display_value(i, c.values[i]);
        if (std::holds_alternative<std::string>(v)) {
            d[py::str(space.knob(i).name)] = std::get<std::string>(v);
        } else {
            d[py::str(space.knob(i).name)] = std::get<double>(v);
        }
    }
    return d;
}

Configuration config_from_dict(const KnobSpace& space, const std::map<std::string, KnobValue>& values) {
    return space.make_config(values);
}

py::dict metrics_to_dict(const MetricsReport& m) {
    py::dict d;
    d["iterations"] = m.iterations;
    d["unsafe"] = m.unsafe;
    d["failures"] = m.failures;
    d["cumulative_performance"] = m.cumulative_performance;
    d["cumulative_improvement"] = m.cumulative_improvement;
    d["unsafe_rate"] = m.unsafe_rate;
    py::list series;
    for (const auto& r : m.series) {
        py::dict row;
        row["t"] = r.t;
        row["performance"] = r.performance;
        row["tau"] = r.tau;
        row["safe"] = r.safe;
        row["failure"] = r.failure;
        row["cluster"] = r.cluster;
        row["region"] = r.region;
        row["radius"] = r.radius;
        row["selection"] = to_string(r.kind);
        row["relearned"] = r.relearned;
        row["conflict_rules"] = r.conflict_rules;
        row["controversial_rule"] = r.controversial_rule;
        series.append(row);
    }
    d["series"] = series;
    return d;
}

TraceOptions trace_options(const std::string& mode, double std, int iterations, std::uint64_t seed) {
    TraceOptions o;
    o.mode = trace_mode_from_string(mode);
    o.std = std;
    o.iterations = iterations;
    o.seed = seed;
    return o;
}

} // namespace

PYBIND11_MODULE(_safetune, m) {
    m.doc() = "Safe contextual Bayesian-optimization knob tuner";
    m.attr("CONTEXT_DIM") = kContextDim;
    m.attr("EMBEDDING_DIM") = kEmbeddingDim;

    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    py::class_<KnobSpace>(m, "KnobSpace")
        .def_static("from_json", &KnobSpace::from_json_text, py::arg("text"))
        .def_static("load", &KnobSpace::load, py::arg("path"))
        .def("to_json", &KnobSpace::to_json_text)
        .def("__len__", &KnobSpace::size)
        .def_property_readonly("names",
                               [](const KnobSpace& s) {
                                   std::vector<std::string> out;
                                   for (const auto& k : s.knobs()) out.push_back(k.name);
                                   return out;
                               })
        .def("default_config", [](const KnobSpace& s) { return config_to_dict(s, s.default_config()); })
        .def(
            "normalize",
            [](const KnobSpace& s, const std::map<std::string, KnobValue>& c) {
                return s.normalize(config_from_dict(s, c));
            },
            py::arg("config"))
        .def(
            "denormalize", [](const KnobSpace& s, const Point& p) { return config_to_dict(s, s.denormalize(p)); },
            py::arg("point"));

    m.def("tokenize_sql", [](const std::string& text) { return tokenize_sql(text); }, py::arg("text"));
    m.def(
        "embed_query", [](const std::string& text, std::uint64_t seed) { return embed_query(text, seed); },
        py::arg("text"), py::arg("seed") = FeaturizeConfig{}.seed);

    py::class_<GpModel>(m, "GpModel")
        .def_static(
            "fit",
            [](const Eigen::MatrixXd& points, const Eigen::MatrixXd& contexts, const Eigen::VectorXd& targets) {
                return GpModel::fit(TrainingSet{points, contexts, targets});
            },
            py::arg("points"), py::arg("contexts"), py::arg("targets"))
        .def(
            "posterior",
            [](const GpModel& g, const Point& x, const Context& c) {
                PosteriorEstimate p = g.posterior(x, c);
                return py::make_tuple(p.mean, p.std);
            },
            py::arg("point"), py::arg("context"))
        .def_property_readonly("lengthscales", [](const GpModel& g) { return g.params().lengthscales; })
        .def_property_readonly("matern_variance", [](const GpModel& g) { return g.params().matern_variance; })
        .def_property_readonly("linear_variance", [](const GpModel& g) { return g.params().linear_variance; })
        .def_property_readonly("noise_variance", [](const GpModel& g) { return g.params().noise_variance; })
        .def_property_readonly("jitter", &GpModel::jitter)
        .def_property_readonly("log_marginal_likelihood", &GpModel::log_marginal_likelihood);

    py::class_<SyntheticEnv>(m, "SyntheticEnv")
        .def_static(
            "from_json", [](const std::string& text) { return SyntheticEnv(EnvSpec::from_json_text(text)); },
            py::arg("text"))
        .def_static(
            "generate", [](int knobs, std::uint64_t seed) { return SyntheticEnv(generate_env({knobs, seed})); },
            py::arg("knobs") = 5, py::arg("seed") = 1)
        .def("to_json", [](const SyntheticEnv& e) { return e.spec().to_json_text(); })
        .def_property_readonly("space", &SyntheticEnv::space)
        .def_property_readonly("metrics", &SyntheticEnv::metrics)
        .def(
            "evaluate",
            [](const SyntheticEnv& e, const std::map<std::string, KnobValue>& config, const Context& c, std::int64_t t) {
                EnvOutcome o = e.evaluate(config_from_dict(e.space(), config), c, t);
                return py::make_tuple(o.performance, o.failure);
            },
            py::arg("config"), py::arg("context"), py::arg("t"))
        .def("latent", &SyntheticEnv::latent, py::arg("point"), py::arg("context"))
        .def("default_performance", &SyntheticEnv::default_performance, py::arg("context"))
        .def(
            "optimum",
            [](const SyntheticEnv& e, const Context& c) {
                SyntheticEnv::Optimum o = e.optimum(c);
                return py::make_tuple(o.point, o.value);
            },
            py::arg("context"));

    m.def(
        "generate_contexts",
        [](const std::string& mode, double std, int iterations, std::uint64_t seed) {
            std::vector<Context> cs = WorkloadTrace::generate(trace_options(mode, std, iterations, seed)).contexts();
            Eigen::MatrixXd out(static_cast<Eigen::Index>(cs.size()), kContextDim);
            for (std::size_t i = 0; i < cs.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = cs[i].transpose();
            return out;
        },
        py::arg("mode") = "sine", py::arg("std") = 0.1, py::arg("iterations") = 400, py::arg("seed") = 1);

    m.def("default_rules_json", &default_rules_json);

    py::class_<TunerConfig>(m, "TunerConfig")
        .def(py::init<>())
        .def_readwrite("beta", &TunerConfig::beta)
        .def_readwrite("epsilon", &TunerConfig::epsilon)
        .def_readwrite("mi_threshold", &TunerConfig::mi_threshold)
        .def_readwrite("cluster_cap", &TunerConfig::cluster_cap)
        .def_readwrite("seed", &TunerConfig::seed)
        .def_readwrite("enable_relaxation", &TunerConfig::enable_relaxation)
        .def_readwrite("use_black", &TunerConfig::use_black)
        .def_readwrite("use_white", &TunerConfig::use_white)
        .def_readwrite("use_subspace", &TunerConfig::use_subspace)
        .def_readwrite("use_safe", &TunerConfig::use_safe)
        .def_readwrite("use_clustering", &TunerConfig::use_clustering)
        .def(
            "apply_ablations",
            [](TunerConfig& c, const std::set<std::string>& names) {
                ContextMask mask;
                apply_ablations(names, c, mask);
            },
            py::arg("names"));

    py::class_<Tuner>(m, "Tuner")
        .def(py::init([](const KnobSpace& space, const TunerConfig& config, const std::string& rules_json,
                         const EnvMetrics& metrics) {
                 RuleSet rules;
                 if (!rules_json.empty()) rules = RuleSet::from_json_text(rules_json).restricted_to(space);
                 return Tuner(space, config, rules, metrics);
             }),
             py::arg("space"), py::arg("config") = TunerConfig{}, py::arg("rules_json") = "",
             py::arg("metrics") = EnvMetrics{})
        .def(
            "bootstrap",
            [](Tuner& t, double default_perf, const Context& c, double tau) {
                t.bootstrap(t.space().default_config(), default_perf, c, tau);
            },
            py::arg("default_performance"), py::arg("context"), py::arg("tau"))
        .def(
            "step",
            [](Tuner& t, const Context& c, double tau) {
                Recommendation r = t.step(c, tau);
                py::dict d;
                d["config"] = config_to_dict(t.space(), r.config);
                d["point"] = r.point;
                d["cluster"] = r.cluster;
                d["selection"] = to_string(r.kind);
                d["region"] = r.region;
                d["radius"] = r.radius;
                d["mean"] = r.mean;
                d["std"] = r.std;
                d["lower_bound"] = r.lower_bound;
                d["safe_count"] = r.safe_count;
                return d;
            },
            py::arg("context"), py::arg("tau"))
        .def("update", &Tuner::update, py::arg("context"), py::arg("tau"), py::arg("performance"), py::arg("failure"),
             py::arg("failure_performance") = 0.0)
        .def("metrics", [](const Tuner& t) { return metrics_to_dict(t.metrics()); })
        .def_property_readonly("observations", [](const Tuner& t) { return t.repository().size(); });

    m.def(
        "run_episode",
        [](const SyntheticEnv& env, const Eigen::MatrixXd& contexts, const TunerConfig& config, int iterations,
           bool use_default_rules) {
            std::vector<Context> cs;
            for (Eigen::Index i = 0; i < contexts.rows(); ++i) cs.push_back(contexts.row(i).transpose());
            RuleSet rules;
            if (use_default_rules) rules = RuleSet::from_json_text(default_rules_json()).restricted_to(env.space());
            EpisodeResult r = run_episode(env, cs, rules, config, ContextMask{}, iterations);
            std::ostringstream csv;
            write_metrics_csv(csv, r.metrics, "{}");
            py::dict d = metrics_to_dict(r.metrics);
            d["relearn_count"] = r.relearn_count;
            d["csv"] = csv.str();
            return d;
        },
        py::arg("env"), py::arg("contexts"), py::arg("config") = TunerConfig{}, py::arg("iterations") = 400,
        py::arg("use_default_rules") = true);
}
