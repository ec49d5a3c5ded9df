#include "safetune/registry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace safetune {

TrainingSet training_set(const std::vector<Observation>& repo, const std::vector<std::size_t>& members,
                         std::size_t cap) {
    if (members.empty()) {
        throw InvalidInput("cannot build a training set for an empty cluster");
    }
    const std::size_t start = members.size() > cap ? members.size() - cap : 0;
    const std::size_t n = members.size() - start;
    const Observation& first = repo.at(members[start]);
    TrainingSet ts;
    ts.points.resize(static_cast<Eigen::Index>(n), first.point.size());
    ts.contexts.resize(static_cast<Eigen::Index>(n), first.context.size());
    ts.targets.resize(static_cast<Eigen::Index>(n));

    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t k = start; k < members.size(); ++k) {
        const Observation& o = repo.at(members[k]);
        if (!o.failure) {
            lo = std::min(lo, o.performance);
            hi = std::max(hi, o.performance);
        }
    }
    const bool any_finite = std::isfinite(lo);
    const double floor = any_finite ? lo - std::max({hi - lo, 0.1 * std::abs(lo), 1e-6}) : 0.0;

    for (std::size_t k = start; k < members.size(); ++k) {
        const Observation& o = repo.at(members[k]);
        const auto row = static_cast<Eigen::Index>(k - start);
        ts.points.row(row) = o.point.transpose();
        ts.contexts.row(row) = o.context.transpose();
        ts.targets[row] = (o.failure && any_finite) ? floor : o.performance;
    }
    return ts;
}

ModelRegistry::ModelRegistry(RegistryOptions options, Point default_point)
    : options_(std::move(options)), default_point_(std::move(default_point)) {}

int ModelRegistry::select_model(const Context& context) const {
    if (clusters_.empty()) {
        throw std::logic_error("select_model on an empty registry");
    }
    if (clusters_.size() == 1) {
        return 0;
    }
    return std::clamp(classifier_.predict(context), 0, static_cast<int>(clusters_.size()) - 1);
}

ClusterLabeling ModelRegistry::simulate_labeling(const std::vector<Observation>& repo) const {
    std::vector<Eigen::VectorXd> ctx;
    ctx.reserve(repo.size());
    for (const auto& o : repo) {
        ctx.push_back(o.context);
    }
    if (!options_.clustering) {
        return ClusterLabeling{std::vector<int>(repo.size(), 0)};
    }
    double eps = kdistance_eps(ctx, options_.eps_k);
    if (!(eps > 0.0)) {
        eps = 1e-9;
    }
    ClusterLabeling raw = dbscan(ctx, eps, options_.min_pts);
    // Small fragments become noise so a stationary trace does not split on density ripples.
    const auto min_size = static_cast<std::size_t>(
        std::max<double>(options_.min_pts, options_.min_cluster_fraction * static_cast<double>(ctx.size())));
    std::vector<std::size_t> sizes(static_cast<std::size_t>(raw.cluster_count()), 0);
    for (int l : raw.labels) {
        if (l >= 0) {
            ++sizes[static_cast<std::size_t>(l)];
        }
    }
    std::vector<int> remap(sizes.size(), kNoise);
    int next = 0;
    for (std::size_t c = 0; c < sizes.size(); ++c) {
        if (sizes[c] >= min_size) {
            remap[c] = next++;
        }
    }
    for (int& l : raw.labels) {
        if (l >= 0) {
            l = remap[static_cast<std::size_t>(l)];
        }
    }
    return absorb_noise(ctx, raw);
}

bool ModelRegistry::maybe_recluster(const std::vector<Observation>& repo) {
    if (repo.empty()) {
        throw InvalidInput("maybe_recluster needs a non-empty repository");
    }
    if (clusters_.empty()) {
        relearn(repo);
        return true;
    }
    if (!options_.clustering) {
        return false;
    }
    ClusterLabeling fresh = simulate_labeling(repo);
    // Only observations already assigned are comparable.
    const std::size_t n = std::min(fresh.size(), assignment_.size());
    ClusterLabeling cur{std::vector<int>(assignment_.begin(), assignment_.begin() + static_cast<std::ptrdiff_t>(n))};
    ClusterLabeling sim{std::vector<int>(fresh.labels.begin(), fresh.labels.begin() + static_cast<std::ptrdiff_t>(n))};
    const double score = nmi(cur, sim);
    // The zero-entropy convention scores 1-vs-k clusterings as 1.0, so a change in the number of
    // clusters is checked separately.
    const bool drift = fresh.cluster_count() != cluster_count();
    if (score < options_.mi_threshold || drift) {
        relearn(repo);
        return true;
    }
    return false;
}

void ModelRegistry::relearn(const std::vector<Observation>& repo) {
    if (repo.empty()) {
        throw InvalidInput("relearn needs a non-empty repository");
    }
    ClusterLabeling labels = simulate_labeling(repo);
    const int k = std::max(1, labels.cluster_count());

    // Warm starts survive only when the cluster structure is unchanged in size.
    std::vector<std::optional<KernelParams>> warm(static_cast<std::size_t>(k));
    if (static_cast<int>(clusters_.size()) == k) {
        for (int c = 0; c < k; ++c) {
            if (clusters_[static_cast<std::size_t>(c)].model) {
                warm[static_cast<std::size_t>(c)] = clusters_[static_cast<std::size_t>(c)].model->params();
            }
        }
    }

    clusters_.assign(static_cast<std::size_t>(k), ClusterState{});
    assignment_ = labels.labels;
    for (std::size_t i = 0; i < assignment_.size(); ++i) {
        clusters_[static_cast<std::size_t>(assignment_[i])].members.push_back(i);
    }
    for (int c = 0; c < k; ++c) {
        ClusterState& cs = clusters_[static_cast<std::size_t>(c)];
        if (cs.members.empty()) {
            continue;
        }
        FitOptions fo = options_.fit;
        fo.warm_start = warm[static_cast<std::size_t>(c)];
        cs.model = GpModel::fit(training_set(repo, cs.members, options_.cluster_cap), fo);
        cs.subspace = Subspace::hypercube(theta_best(c, repo), options_.subspace.r0);
        cs.adapt = AdaptState{};
        // Outcomes are compared as improvement over the threshold so that context trends cancel.
        for (std::size_t i : cs.members) {
            if (repo[i].safe) {
                cs.adapt.last_best_value = std::max(cs.adapt.last_best_value, repo[i].performance - repo[i].tau);
            }
        }
        cs.adapt.region_start_best = cs.adapt.last_best_value;
    }

    std::vector<Eigen::VectorXd> ctx;
    ctx.reserve(repo.size());
    for (const auto& o : repo) {
        ctx.push_back(o.context);
    }
    classifier_ = LinearOvrClassifier::train(ctx, assignment_, options_.svm);
    ++relearn_count_;
}

void ModelRegistry::assign(std::size_t index, int cluster) {
    if (index != assignment_.size()) {
        throw std::logic_error("observations must be assigned in repository order");
    }
    assignment_.push_back(cluster);
    clusters_.at(static_cast<std::size_t>(cluster)).members.push_back(index);
}

void ModelRegistry::refit(int cluster, const std::vector<Observation>& repo, bool optimize) {
    ClusterState& cs = clusters_.at(static_cast<std::size_t>(cluster));
    TrainingSet ts = training_set(repo, cs.members, options_.cluster_cap);
    if (optimize || !cs.model) {
        FitOptions fo = options_.fit;
        if (cs.model) {
            fo.warm_start = cs.model->params();
            fo.starts = options_.refit_starts;
        }
        cs.model = GpModel::fit(std::move(ts), fo);
        cs.updates_since_hyperfit = 0;
    } else {
        cs.model = GpModel::with_params(std::move(ts), cs.model->params());
        cs.updates_since_hyperfit += 1;
    }
}

std::optional<std::size_t> ModelRegistry::best_safe_member(int cluster, const std::vector<Observation>& repo) const {
    std::optional<std::size_t> best;
    for (std::size_t i : clusters_.at(static_cast<std::size_t>(cluster)).members) {
        const Observation& o = repo.at(i);
        // Ranked by improvement over the threshold of the observation's own context.
        if (o.safe && (!best || o.performance - o.tau > repo[*best].performance - repo[*best].tau)) {
            best = i;
        }
    }
    return best;
}

Point ModelRegistry::theta_best(int cluster, const std::vector<Observation>& repo) const {
    if (auto b = best_safe_member(cluster, repo)) {
        return repo[*b].point;
    }
    return default_point_;
}

} // namespace safetune
