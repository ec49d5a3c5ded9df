#include "safetune/safety.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "safetune/sobol.hpp"

namespace safetune {

namespace {

constexpr double kSameTol = 1e-9;

bool lex_less(const Point& a, const Point& b) {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) {
            return a[i] < b[i];
        }
    }
    return false;
}

bool same_point(const Point& a, const Point& b) { return (a - b).cwiseAbs().maxCoeff() <= kSameTol; }

// Snaps, keeps points accepted by `inside`, and removes duplicates while preserving order.
std::vector<Point> snap_filter_dedup(const std::vector<Point>& raw, const KnobSpace& space,
                                     const std::function<bool(const Point&)>& inside) {
    std::vector<Point> out;
    std::vector<std::size_t> order;
    for (const Point& p : raw) {
        Point s = space.snap(p.cwiseMax(0.0).cwiseMin(1.0));
        if (!inside(s)) {
            continue;
        }
        out.push_back(std::move(s));
    }
    // Dedup via a sorted index, keep first occurrence.
    order.resize(out.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lex_less(out[a], out[b]); });
    std::vector<bool> drop(out.size(), false);
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (same_point(out[order[i]], out[order[i - 1]])) {
            drop[std::max(order[i], order[i - 1])] = true;
        }
    }
    std::vector<Point> kept;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!drop[i]) {
            kept.push_back(std::move(out[i]));
        }
    }
    return kept;
}

Eigen::VectorXd random_shift(int dims, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::VectorXd s(dims);
    for (int i = 0; i < dims; ++i) {
        s[i] = u(rng);
    }
    return s;
}

} // namespace

double snapping_tolerance(const KnobSpace& space) {
    double sq = 0.0;
    for (std::size_t i = 0; i < space.size(); ++i) {
        double h = 0.5 * space.grid_step(i);
        sq += h * h;
    }
    return std::sqrt(sq) + 1e-9;
}

CandidateSet discretize(const Subspace& subspace, int density, const KnobSpace& space, std::mt19937_64& rng) {
    if (density < 2) {
        throw InvalidInput("discretization density must be at least 2");
    }
    const int m = static_cast<int>(space.size());
    if (subspace.center.size() != m) {
        throw InvalidInput("subspace dimension does not match the knob space");
    }
    std::vector<Point> raw;
    raw.push_back(subspace.center);
    std::function<bool(const Point&)> inside;

    if (subspace.kind == RegionKind::Hypercube) {
        if (m + 1 > SobolSequence::kMaxDims) {
            throw InvalidInput("hypercube discretization supports at most 63 knobs");
        }
        const int target = density * m;
        const int max_draws = 64 * target;
        SobolSequence sobol(m + 1);
        const Eigen::VectorXd shift = random_shift(m + 1, rng);
        int accepted = 0;
        for (int draw = 0; draw < max_draws && accepted < target; ++draw) {
            Eigen::VectorXd u = sobol.next() + shift;
            u = u.array() - u.array().floor();
            Eigen::VectorXd z(m);
            for (int i = 0; i < m; ++i) {
                z[i] = inverse_normal_cdf(std::clamp(u[i], 1e-12, 1.0 - 1e-12));
            }
            const double zn = z.norm();
            if (!(zn > 0.0)) {
                continue;
            }
            const double r = subspace.radius * std::pow(u[m], 1.0 / m);
            Point p = subspace.center + (r / zn) * z;
            if ((p.array() < 0.0).any() || (p.array() > 1.0).any()) {
                continue;
            }
            raw.push_back(std::move(p));
            ++accepted;
        }
        const Point c = subspace.center;
        const double rad = subspace.radius + kSameTol;
        inside = [c, rad](const Point& p) { return (p - c).norm() <= rad; };
    } else {
        const Eigen::VectorXd& d = subspace.direction;
        const double limit = std::sqrt(static_cast<double>(m));
        double lo = -limit, hi = limit;
        for (int i = 0; i < m; ++i) {
            if (std::abs(d[i]) < 1e-15) {
                continue;
            }
            double a = (0.0 - subspace.center[i]) / d[i];
            double b = (1.0 - subspace.center[i]) / d[i];
            lo = std::max(lo, std::min(a, b));
            hi = std::min(hi, std::max(a, b));
        }
        if (hi > lo) {
            for (int s = 0; s < density; ++s) {
                double alpha = lo + (hi - lo) * static_cast<double>(s) / static_cast<double>(density - 1);
                raw.push_back(subspace.center + alpha * d);
            }
        }
        const double tol = snapping_tolerance(space);
        const Subspace region = subspace;
        inside = [region, tol](const Point& p) { return region.contains(p, tol); };
    }
    CandidateSet out;
    out.points = snap_filter_dedup(raw, space, inside);
    out.evaluated.assign(out.points.size(), false);
    return out;
}

CandidateSet global_candidates(int count, const KnobSpace& space, std::mt19937_64& rng) {
    const int m = static_cast<int>(space.size());
    if (m > SobolSequence::kMaxDims) {
        throw InvalidInput("global candidates support at most 64 knobs");
    }
    SobolSequence sobol(m);
    const Eigen::VectorXd shift = random_shift(m, rng);
    std::vector<Point> raw;
    raw.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Eigen::VectorXd u = sobol.next() + shift;
        raw.push_back(u.array() - u.array().floor());
    }
    CandidateSet out;
    out.points = snap_filter_dedup(raw, space, [](const Point&) { return true; });
    out.evaluated.assign(out.points.size(), false);
    return out;
}

void mark_evaluated(CandidateSet& candidates, const std::vector<Point>& evaluated) {
    candidates.evaluated.assign(candidates.points.size(), false);
    for (std::size_t i = 0; i < candidates.points.size(); ++i) {
        for (const Point& e : evaluated) {
            if (same_point(candidates.points[i], e)) {
                candidates.evaluated[i] = true;
                break;
            }
        }
    }
}

std::vector<bool> black_filter(const Eigen::VectorXd& mean, const Eigen::VectorXd& std, double beta, double tau,
                               std::optional<std::size_t> fallback) {
    std::vector<bool> keep(static_cast<std::size_t>(mean.size()), false);
    for (Eigen::Index i = 0; i < mean.size(); ++i) {
        keep[static_cast<std::size_t>(i)] = mean[i] - beta * std[i] > tau;
    }
    if (fallback) {
        keep.at(*fallback) = true;
    }
    return keep;
}

bool rule_allows(const WhiteBoxRule& rule, const Point& point, const KnobSpace& space, const EnvMetrics& metrics) {
    const std::size_t k = space.index_of(rule.knob);
    const auto [lo, hi] = rule.allowed_interval(space, metrics);
    const double v = space.denormalize(point).values[k];
    return v >= lo && v <= hi;
}

WhiteFilterResult white_filter(const std::vector<Point>& points, const RuleSet& rules, const KnobSpace& space,
                               const EnvMetrics& metrics, std::optional<std::size_t> black_top,
                               std::optional<std::size_t> ignored) {
    WhiteFilterResult out;
    out.keep.assign(points.size(), true);
    for (std::size_t r = 0; r < rules.rules.size(); ++r) {
        const WhiteBoxRule& rule = rules.rules[r];
        const std::size_t k = space.index_of(rule.knob);
        if (ignored && *ignored == r) {
            continue;
        }
        const auto [lo, hi] = rule.allowed_interval(space, metrics);
        for (std::size_t i = 0; i < points.size(); ++i) {
            const double v = space.denormalize(points[i]).values[k];
            if (v < lo || v > hi) {
                out.keep[i] = false;
                if (black_top && *black_top == i) {
                    out.conflicts.push_back(r);
                }
            }
        }
    }
    return out;
}

std::vector<bool> flag_boundary(const std::vector<Point>& points, const std::vector<bool>& safe,
                                const Subspace& subspace, int k) {
    const std::size_t n = points.size();
    std::vector<bool> boundary(n, false);
    std::vector<std::pair<double, std::size_t>> dist;
    for (std::size_t i = 0; i < n; ++i) {
        if (!safe[i]) {
            continue;
        }
        dist.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                dist.emplace_back((points[i] - points[j]).norm(), j);
            }
        }
        if (dist.empty()) {
            boundary[i] = true;
            continue;
        }
        const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 1)), dist.size());
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
        bool edge = false;
        for (std::size_t t = 0; t < kk && !edge; ++t) {
            edge = !safe[dist[t].second];
        }
        if (!edge && subspace.kind == RegionKind::Hypercube) {
            // Only the ball surface counts; the cube walls cannot be expanded past.
            const double to_surface = subspace.radius - (points[i] - subspace.center).norm();
            edge = to_surface <= dist[kk - 1].first;
        }
        boundary[i] = edge;
    }
    return boundary;
}

std::optional<std::size_t> argmax_lex(const std::vector<std::size_t>& indices, const Eigen::VectorXd& score,
                                      const std::vector<Point>& points) {
    std::optional<std::size_t> best;
    for (std::size_t i : indices) {
        if (!best) {
            best = i;
            continue;
        }
        const double a = score[static_cast<Eigen::Index>(i)];
        const double b = score[static_cast<Eigen::Index>(*best)];
        if (a > b || (a == b && lex_less(points[i], points[*best]))) {
            best = i;
        }
    }
    return best;
}

std::vector<std::size_t> SafetySet::safe_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < safe.size(); ++i) {
        if (safe[i]) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<std::size_t> SafetySet::boundary_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < boundary.size(); ++i) {
        if (boundary[i]) {
            out.push_back(i);
        }
    }
    return out;
}

bool SafetySet::has_unevaluated_safe() const {
    for (std::size_t i = 0; i < safe.size(); ++i) {
        if (safe[i] && !candidates.evaluated[i]) {
            return true;
        }
    }
    return false;
}

SafetySet assess(CandidateSet candidates, const Subspace& subspace, const GpModel& model, const Context& context,
                 const SafetyOptions& options, const RuleSet* rules, const KnobSpace& space, const EnvMetrics& metrics,
                 const std::optional<Point>& fallback) {
    SafetySet out;
    if (fallback) {
        for (std::size_t i = 0; i < candidates.points.size(); ++i) {
            if (same_point(candidates.points[i], *fallback)) {
                out.fallback = i;
                break;
            }
        }
        if (!out.fallback) {
            candidates.points.push_back(*fallback);
            candidates.evaluated.push_back(true);
            out.fallback = candidates.points.size() - 1;
        }
    }
    out.candidates = std::move(candidates);
    const auto& pts = out.candidates.points;
    const std::size_t n = pts.size();

    Eigen::MatrixXd rows(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(space.size()));
    for (std::size_t i = 0; i < n; ++i) {
        rows.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
    }
    model.posterior_batch(rows, context, out.mean, out.std);

    if (options.use_black) {
        out.black_safe = black_filter(out.mean, out.std, options.beta, options.tau, out.fallback);
    } else {
        out.black_safe.assign(n, true);
    }

    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < n; ++i) {
        if (out.black_safe[i] && !out.candidates.evaluated[i]) {
            open.push_back(i);
        }
    }
    const Eigen::VectorXd ucb = out.mean + options.beta * out.std;
    out.black_top = argmax_lex(open, ucb, pts);

    out.safe = out.black_safe;
    if (options.use_white && rules != nullptr && !rules->empty()) {
        out.ignored_rule = rules->ignored;
        WhiteFilterResult wf = white_filter(pts, *rules, space, metrics, out.black_top, rules->ignored);
        for (std::size_t i = 0; i < n; ++i) {
            out.safe[i] = out.safe[i] && wf.keep[i];
        }
        out.conflicts = std::move(wf.conflicts);
    }
    if (out.fallback) {
        out.safe[*out.fallback] = true;
    }
    const int k = options.boundary_k > 0 ? options.boundary_k
                                         : (subspace.kind == RegionKind::Line ? 2 : 2 * static_cast<int>(space.size()));
    out.boundary = flag_boundary(pts, out.safe, subspace, k);
    return out;
}

SafetySet build_safety_set(const Subspace& subspace, int density, const GpModel& model, const Context& context,
                           const SafetyOptions& options, const RuleSet* rules, const KnobSpace& space,
                           const EnvMetrics& metrics, const std::vector<Point>& evaluated,
                           const std::optional<Point>& fallback, std::mt19937_64& rng) {
    CandidateSet cands = discretize(subspace, density, space, rng);
    mark_evaluated(cands, evaluated);
    return assess(std::move(cands), subspace, model, context, options, rules, space, metrics, fallback);
}

} // namespace safetune
