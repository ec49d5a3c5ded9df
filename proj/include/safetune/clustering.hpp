#pragma once

#include <vector>

#include <Eigen/Core>

namespace safetune {

inline constexpr int kNoise = -1;

/// Cluster label per observation; kNoise marks DBSCAN noise. Non-noise labels are 0..k-1.
struct ClusterLabeling {
    std::vector<int> labels;

    int cluster_count() const;
    std::size_t size() const { return labels.size(); }
};

/// Standard DBSCAN under Euclidean distance. Points are visited in index order and
/// clusters are expanded breadth-first, so the result is deterministic.
ClusterLabeling dbscan(const std::vector<Eigen::VectorXd>& points, double eps, int min_pts);

/// Median distance to the k-th nearest neighbour (self excluded). Used as the DBSCAN radius.
double kdistance_eps(const std::vector<Eigen::VectorXd>& points, int k);

/// Normalized mutual information I(a;b) / sqrt(H(a) H(b)). Noise is treated as its own label.
/// Returns 1.0 when either labeling has zero entropy.
double nmi(const ClusterLabeling& a, const ClusterLabeling& b);

/// Reassigns noise points to the cluster with the nearest centroid. With no clusters at all,
/// every point lands in cluster 0.
ClusterLabeling absorb_noise(const std::vector<Eigen::VectorXd>& points, const ClusterLabeling& labeling);

/// Per-cluster centroids of a noise-free labeling.
std::vector<Eigen::VectorXd> centroids(const std::vector<Eigen::VectorXd>& points, const ClusterLabeling& labeling);

} // namespace safetune
