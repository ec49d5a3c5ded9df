#pragma once

// Brute-force DBSCAN and direct entropy NMI, independent of the library implementation.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include <Eigen/Core>

namespace oracle {

using Pts = std::vector<Eigen::VectorXd>;

// Exhaustive neighbourhood-graph DBSCAN: components of the core graph, numbered by their
// smallest core index; border points join the lowest-numbered adjacent component.
inline std::vector<int> brute_dbscan(const Pts& p, double eps, int min_pts) {
    const int n = static_cast<int>(p.size());
    std::vector<std::vector<bool>> adj(n, std::vector<bool>(n));
    std::vector<bool> core(n);
    for (int i = 0; i < n; ++i) {
        int cnt = 0;
        for (int j = 0; j < n; ++j) {
            adj[i][j] = (p[i] - p[j]).norm() <= eps;
            cnt += adj[i][j];
        }
        core[i] = cnt >= min_pts;
    }
    // Union-find over core points.
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (core[i] && core[j] && adj[i][j]) parent[find(i)] = find(j);
    std::map<int, int> comp_min;
    for (int i = 0; i < n; ++i)
        if (core[i] && !comp_min.count(find(i))) comp_min[find(i)] = i;
    std::vector<std::pair<int, int>> order;
    for (auto [root, mn] : comp_min) order.push_back({mn, root});
    std::sort(order.begin(), order.end());
    std::map<int, int> label_of;
    for (std::size_t k = 0; k < order.size(); ++k) label_of[order[k].second] = static_cast<int>(k);
    std::vector<int> out(n, -1);
    for (int i = 0; i < n; ++i) {
        if (core[i]) {
            out[i] = label_of[find(i)];
            continue;
        }
        for (int j = 0; j < n; ++j)
            if (core[j] && adj[i][j] && (out[i] == -1 || label_of[find(j)] < out[i])) out[i] = label_of[find(j)];
    }
    return out;
}

inline double entropy(const std::vector<int>& a) {
    std::map<int, double> c;
    for (int x : a) c[x] += 1;
    double h = 0, n = static_cast<double>(a.size());
    for (auto& [k, v] : c) h -= v / n * std::log(v / n);
    return h;
}

inline double nmi_oracle(const std::vector<int>& a, const std::vector<int>& b) {
    double ha = entropy(a), hb = entropy(b);
    if (ha == 0 || hb == 0) return 1.0;
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> ca, cb;
    double n = static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1;
        ca[a[i]] += 1;
        cb[b[i]] += 1;
    }
    double mi = 0;
    for (auto& [k, v] : joint) mi += v / n * std::log(v * n / (ca[k.first] * cb[k.second]));
    return mi / std::sqrt(ha * hb);
}

} // namespace oracle
