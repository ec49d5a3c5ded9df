#include "safetune/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>

#include "safetune/knobspace.hpp"

namespace safetune {

int ClusterLabeling::cluster_count() const {
    int top = -1;
    for (int l : labels) {
        top = std::max(top, l);
    }
    return top + 1;
}

ClusterLabeling dbscan(const std::vector<Eigen::VectorXd>& points, double eps, int min_pts) {
    const std::size_t n = points.size();
    constexpr int kUnvisited = -2;
    ClusterLabeling out;
    out.labels.assign(n, kUnvisited);

    auto neighbours = [&](std::size_t i) {
        std::vector<std::size_t> nb;
        for (std::size_t j = 0; j < n; ++j) {
            if ((points[i] - points[j]).norm() <= eps) {
                nb.push_back(j);
            }
        }
        return nb;
    };

    int cluster = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (out.labels[i] != kUnvisited) {
            continue;
        }
        auto nb = neighbours(i);
        if (static_cast<int>(nb.size()) < min_pts) {
            out.labels[i] = kNoise;
            continue;
        }
        out.labels[i] = cluster;
        std::deque<std::size_t> queue(nb.begin(), nb.end());
        while (!queue.empty()) {
            std::size_t j = queue.front();
            queue.pop_front();
            if (out.labels[j] == kNoise) {
                out.labels[j] = cluster; // border point
            }
            if (out.labels[j] != kUnvisited) {
                continue;
            }
            out.labels[j] = cluster;
            auto nbj = neighbours(j);
            if (static_cast<int>(nbj.size()) >= min_pts) {
                queue.insert(queue.end(), nbj.begin(), nbj.end());
            }
        }
        ++cluster;
    }
    return out;
}

double kdistance_eps(const std::vector<Eigen::VectorXd>& points, int k) {
    const std::size_t n = points.size();
    if (n < 2) {
        return 0.0;
    }
    std::vector<double> kd;
    kd.reserve(n);
    std::vector<double> d;
    for (std::size_t i = 0; i < n; ++i) {
        d.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                d.push_back((points[i] - points[j]).norm());
            }
        }
        std::size_t kth = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 1)), d.size()) - 1;
        std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kth), d.end());
        kd.push_back(d[kth]);
    }
    std::sort(kd.begin(), kd.end());
    const std::size_t mid = kd.size() / 2;
    return kd.size() % 2 == 1 ? kd[mid] : 0.5 * (kd[mid - 1] + kd[mid]);
}

double nmi(const ClusterLabeling& a, const ClusterLabeling& b) {
    if (a.size() != b.size()) {
        throw InvalidInput("nmi: labelings have different lengths");
    }
    const std::size_t n = a.size();
    if (n == 0) {
        return 1.0;
    }
    std::map<int, double> pa, pb;
    std::map<std::pair<int, int>, double> pab;
    for (std::size_t i = 0; i < n; ++i) {
        pa[a.labels[i]] += 1.0;
        pb[b.labels[i]] += 1.0;
        pab[{a.labels[i], b.labels[i]}] += 1.0;
    }
    const double dn = static_cast<double>(n);
    auto entropy = [dn](const std::map<int, double>& counts) {
        double h = 0.0;
        for (const auto& [_, c] : counts) {
            double p = c / dn;
            h -= p * std::log(p);
        }
        return h;
    };
    const double ha = entropy(pa);
    const double hb = entropy(pb);
    if (ha <= 0.0 || hb <= 0.0) {
        return 1.0;
    }
    double mi = 0.0;
    for (const auto& [key, c] : pab) {
        double pxy = c / dn;
        mi += pxy * std::log(pxy * dn * dn / (pa[key.first] * pb[key.second]));
    }
    return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

std::vector<Eigen::VectorXd> centroids(const std::vector<Eigen::VectorXd>& points, const ClusterLabeling& labeling) {
    const int k = labeling.cluster_count();
    std::vector<Eigen::VectorXd> cent;
    std::vector<double> count(static_cast<std::size_t>(k), 0.0);
    if (k == 0) {
        return cent;
    }
    cent.assign(static_cast<std::size_t>(k), Eigen::VectorXd::Zero(points.front().size()));
    for (std::size_t i = 0; i < points.size(); ++i) {
        int l = labeling.labels[i];
        if (l >= 0) {
            cent[static_cast<std::size_t>(l)] += points[i];
            count[static_cast<std::size_t>(l)] += 1.0;
        }
    }
    for (std::size_t c = 0; c < cent.size(); ++c) {
        if (count[c] > 0) {
            cent[c] /= count[c];
        }
    }
    return cent;
}

ClusterLabeling absorb_noise(const std::vector<Eigen::VectorXd>& points, const ClusterLabeling& labeling) {
    ClusterLabeling out = labeling;
    if (labeling.cluster_count() == 0) {
        std::fill(out.labels.begin(), out.labels.end(), 0);
        return out;
    }
    const auto cent = centroids(points, labeling);
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (out.labels[i] != kNoise) {
            continue;
        }
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (std::size_t c = 0; c < cent.size(); ++c) {
            double d = (points[i] - cent[c]).squaredNorm();
            if (d < best) {
                best = d;
                arg = static_cast<int>(c);
            }
        }
        out.labels[i] = arg;
    }
    return out;
}

} // namespace safetune
