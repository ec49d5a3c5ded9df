#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "safetune/classifier.hpp"
#include "safetune/clustering.hpp"
#include "safetune/repository.hpp"
#include "safetune/subspace.hpp"
#include "safetune/surrogate.hpp"

namespace safetune {

struct RegistryOptions {
    double mi_threshold = 0.5;
    int min_pts = 5;
    /// k of the k-distance radius heuristic.
    int eps_k = 5;
    /// Clusters smaller than this share of the repository (or min_pts) are treated as noise.
    double min_cluster_fraction = 0.1;
    /// Per-cluster training cap P; the most recent P members are kept.
    std::size_t cluster_cap = 300;
    /// When false every observation lives in a single cluster.
    bool clustering = true;
    SvmOptions svm;
    FitOptions fit;
    /// Starts used by a warm-started refit (the warm start plus fixed starts).
    int refit_starts = 1;
    SubspaceParams subspace;
};

/// Everything the tuner tracks for one cluster of contexts.
struct ClusterState {
    std::vector<std::size_t> members; // indices into the repository, ascending
    std::optional<GpModel> model;
    Subspace subspace;
    AdaptState adapt;
    bool had_unevaluated_safe = true;
    int updates_since_hyperfit = 0;
};

/// Builds the training set for a cluster from its most recent `cap` members. Failed observations
/// are fitted at a pessimistic floor below the worst finite target instead of the raw sentinel.
TrainingSet training_set(const std::vector<Observation>& repo, const std::vector<std::size_t>& members,
                         std::size_t cap);

/// Per-cluster contextual GPs, a context classifier for model selection and the re-cluster trigger.
class ModelRegistry {
public:
    ModelRegistry() = default;
    ModelRegistry(RegistryOptions options, Point default_point);

    bool empty() const { return clusters_.empty(); }
    int cluster_count() const { return static_cast<int>(clusters_.size()); }

    /// Classifier prediction for the context. Throws std::logic_error when empty.
    int select_model(const Context& context) const;

    /// Decides whether the current clustering is stale and re-learns when it is (or when empty).
    bool maybe_recluster(const std::vector<Observation>& repo);

    /// Re-clusters everything, refits every model, retrains the classifier and resets subspaces.
    void relearn(const std::vector<Observation>& repo);

    /// Fresh DBSCAN labeling of the repository contexts with noise absorbed.
    ClusterLabeling simulate_labeling(const std::vector<Observation>& repo) const;

    /// Records that observation `index` belongs to `cluster`.
    void assign(std::size_t index, int cluster);

    /// Refits one cluster's model. `optimize` re-runs hyperparameter search warm-started from the
    /// current parameters; otherwise the current parameters are reused.
    void refit(int cluster, const std::vector<Observation>& repo, bool optimize);

    /// Safe member with the largest performance - tau, or the default point when there is none.
    Point theta_best(int cluster, const std::vector<Observation>& repo) const;
    std::optional<std::size_t> best_safe_member(int cluster, const std::vector<Observation>& repo) const;

    ClusterState& cluster(int id) { return clusters_.at(static_cast<std::size_t>(id)); }
    const ClusterState& cluster(int id) const { return clusters_.at(static_cast<std::size_t>(id)); }
    const std::vector<int>& assignment() const { return assignment_; }
    ClusterLabeling current_labeling() const { return ClusterLabeling{assignment_}; }
    const LinearOvrClassifier& classifier() const { return classifier_; }
    const RegistryOptions& options() const { return options_; }
    int relearn_count() const { return relearn_count_; }

private:
    RegistryOptions options_;
    Point default_point_;
    std::vector<ClusterState> clusters_;
    std::vector<int> assignment_;
    LinearOvrClassifier classifier_;
    int relearn_count_ = 0;
};

} // namespace safetune
