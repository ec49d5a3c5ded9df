#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "safetune/featurize.hpp"
#include "safetune/knobspace.hpp"
#include "safetune/rules.hpp"

namespace safetune {

/// Radial performance basin whose center moves linearly with the context:
///   center(c) = center + drift * (c - context_ref)
struct Basin {
    Point center;
    double width = 0.3;
    double amplitude = 100.0;
    Eigen::MatrixXd drift; // m x kContextDim
};

/// Abrupt drop once a knob passes a threshold. Breaks the smoothness the surrogate assumes.
struct Cliff {
    std::string knob;
    double at = 0.8; // normalized
    double drop = 100.0;
};

struct EnvOutcome {
    bool failure = false;
    double performance = 0.0;
};

/// Environment definition file contents.
struct EnvSpec {
    KnobSpace space;
    double base = 100.0;
    Eigen::VectorXd trend = Eigen::VectorXd::Zero(kContextDim);
    Eigen::VectorXd context_ref = Eigen::VectorXd::Zero(kContextDim);
    std::vector<Basin> basins;
    double noise_std = 0.0;
    /// Failure when the normalized coordinates of these knobs sum above `failure_cap`.
    std::vector<std::string> failure_knobs;
    double failure_cap = 2.4;
    double failure_performance = 0.0;
    std::optional<Cliff> cliff;
    EnvMetrics metrics;
    std::uint64_t seed = 1;

    static EnvSpec from_json_text(const std::string& text);
    static EnvSpec load(const std::string& path);
    std::string to_json_text() const;
};

/// Synthetic contextual performance function
///   f(x, c) = base + trend.c + sum_j A_j exp(-|x - center_j(c)|^2 / (2 w_j^2)) - cliff
/// with a memory-sum failure predicate and seeded Gaussian observation noise.
class SyntheticEnv {
public:
    explicit SyntheticEnv(EnvSpec spec);

    const EnvSpec& spec() const { return spec_; }
    const KnobSpace& space() const { return spec_.space; }
    const EnvMetrics& metrics() const { return spec_.metrics; }

    bool is_failure(const Point& x) const;
    /// Noise-free latent value; defined on failures too.
    double latent(const Point& x, const Context& c) const;
    /// Failure check, then latent value plus noise. Pure in (config, context, t).
    EnvOutcome evaluate(const Configuration& config, const Context& c, std::int64_t t) const;
    /// Noise-free performance of the default configuration; the safety threshold.
    double default_performance(const Context& c) const;

    struct Optimum {
        Point point;
        double value = 0.0;
    };
    /// Best non-failing point found by multi-start projected gradient ascent.
    Optimum optimum(const Context& c) const;

    /// Throws InvalidInput unless every context has positive headroom f* - tau and a
    /// non-failing default. Returns the smallest headroom seen.
    double check_headroom(const std::vector<Context>& contexts) const;

private:
    Point basin_center(const Basin& b, const Context& c) const;
    Eigen::VectorXd gradient(const Point& x, const Context& c) const;

    EnvSpec spec_;
    std::vector<std::size_t> failure_idx_;
    std::optional<std::size_t> cliff_idx_;
    Point default_point_;
};

/// A 40-knob MySQL-like catalog. The first three knobs are memory-like.
std::vector<KnobDef> knob_catalog();

struct GenEnvOptions {
    int knobs = 5;
    std::uint64_t seed = 1;
};

/// Random environment over the first `knobs` catalog entries with default at 25% of every range,
/// a broad main basin, narrower side basins and 1% noise.
EnvSpec generate_env(const GenEnvOptions& options);

/// Machine-level metrics consumed by white-box rules.
EnvMetrics default_env_metrics();

} // namespace safetune
