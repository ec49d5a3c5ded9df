#include "safetune/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "safetune/surrogate.hpp"

namespace safetune {

const char* to_string(RegionKind kind) { return kind == RegionKind::Hypercube ? "hypercube" : "line"; }

Subspace Subspace::hypercube(Point center, double radius) {
    Subspace s;
    s.kind = RegionKind::Hypercube;
    s.center = std::move(center);
    s.radius = radius;
    return s;
}

Subspace Subspace::line(Point offset, Eigen::VectorXd direction, double radius) {
    const double n = direction.norm();
    if (!(n > 0.0) || direction.size() != offset.size()) {
        throw InvalidInput("line direction must be non-zero and match the space dimension");
    }
    Subspace s;
    s.kind = RegionKind::Line;
    s.center = std::move(offset);
    s.direction = direction / n;
    s.radius = radius;
    return s;
}

bool Subspace::contains(const Point& x, double line_tolerance) const {
    if (x.size() != center.size()) {
        return false;
    }
    if ((x.array() < 0.0).any() || (x.array() > 1.0).any()) {
        return false;
    }
    const Eigen::VectorXd d = x - center;
    if (kind == RegionKind::Hypercube) {
        return d.norm() <= radius + 1e-12;
    }
    const Eigen::VectorXd off_line = d - d.dot(direction) * direction;
    return off_line.norm() <= line_tolerance;
}

AdaptState record_outcome(AdaptState state, double new_value) {
    if (new_value > state.last_best_value) {
        state.succ_counter += 1;
        state.fail_counter = 0;
        state.last_best_value = new_value;
    } else {
        state.fail_counter += 1;
        state.succ_counter = 0;
    }
    return state;
}

bool switching_rule(const AdaptState& state, bool has_unevaluated_safe, const SubspaceParams& params) {
    return !has_unevaluated_safe || state.fail_counter >= params.switch_fail_threshold;
}

double recent_improvement(const AdaptState& state) {
    if (!std::isfinite(state.region_start_best) || !std::isfinite(state.last_best_value)) {
        return 0.0;
    }
    const double base = std::max(std::abs(state.region_start_best), 1e-12);
    return (state.last_best_value - state.region_start_best) / base;
}

Subspace adapt(const Subspace& current, AdaptState& state, const Point& theta_best, bool has_unevaluated_safe,
               const SubspaceParams& params, const DirectionOracle& next_direction) {
    Subspace next = current;
    next.center = theta_best;
    if (current.kind == RegionKind::Hypercube) {
        if (state.succ_counter > params.eta_succ) {
            next.radius = std::min(params.r_max, 2.0 * next.radius);
            state.succ_counter = 0;
            state.fail_counter = 0;
        }
        if (state.fail_counter > params.eta_fail) {
            next.radius = std::max(params.r_min, next.radius / 2.0);
            state.fail_counter = 0;
            state.succ_counter = 0;
        }
        if (switching_rule(state, has_unevaluated_safe, params)) {
            next = Subspace::line(theta_best, next_direction(recent_improvement(state)), next.radius);
            state.succ_counter = 0;
            state.fail_counter = 0;
            state.region_start_best = state.last_best_value;
        }
        return next;
    }
    if (switching_rule(state, has_unevaluated_safe, params)) {
        next = Subspace::hypercube(theta_best, current.radius);
        state.succ_counter = 0;
        state.fail_counter = 0;
        state.region_start_best = state.last_best_value;
    }
    return next;
}

Eigen::VectorXd generate_direction(const std::vector<std::size_t>& importance, double recent_improvement,
                                   double improvement_threshold, std::mt19937_64& rng) {
    const Eigen::Index m = static_cast<Eigen::Index>(importance.size());
    if (m == 0) {
        throw InvalidInput("direction oracle needs at least one knob");
    }
    Eigen::VectorXd d = Eigen::VectorXd::Zero(m);
    if (recent_improvement < improvement_threshold) {
        std::normal_distribution<double> normal(0.0, 1.0);
        double n = 0.0;
        while (!(n > 1e-12)) {
            for (Eigen::Index i = 0; i < m; ++i) {
                d[i] = normal(rng);
            }
            n = d.norm();
        }
        return d / n;
    }
    const std::size_t top = std::min<std::size_t>(5, importance.size());
    std::uniform_int_distribution<std::size_t> pick(0, top - 1);
    d[static_cast<Eigen::Index>(importance[pick(rng)])] = 1.0;
    return d;
}

std::vector<std::size_t> knob_importance(const Eigen::VectorXd& lengthscales) {
    std::vector<std::size_t> order(static_cast<std::size_t>(lengthscales.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return lengthscales[static_cast<Eigen::Index>(a)] < lengthscales[static_cast<Eigen::Index>(b)];
    });
    return order;
}

std::vector<std::size_t> knob_importance(const GpModel& model) { return knob_importance(model.params().lengthscales); }

} // namespace safetune
