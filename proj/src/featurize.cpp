#include "safetune/featurize.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "safetune/knobspace.hpp"

namespace safetune {

namespace {

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace

std::vector<std::string> tokenize_sql(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char ch : text) {
        if (std::isalnum(ch) || ch == '_') {
            cur.push_back(static_cast<char>(std::tolower(ch)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) {
        tokens.push_back(std::move(cur));
    }
    return tokens;
}

Eigen::VectorXd token_vector(std::string_view token, std::uint64_t seed) {
    std::uint64_t state = fnv1a64(token) ^ seed;
    Eigen::VectorXd v(kEmbeddingDim);
    for (int i = 0; i < kEmbeddingDim; ++i) {
        v[i] = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    }
    double n = v.norm();
    if (n == 0.0) {
        v.setZero();
        v[0] = 1.0;
        return v;
    }
    return v / n;
}

Eigen::VectorXd embed_query(std::string_view text, std::uint64_t seed) {
    if (text.empty()) {
        throw InvalidInput("cannot embed an empty query");
    }
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(kEmbeddingDim);
    auto tokens = tokenize_sql(text);
    for (const auto& t : tokens) {
        acc += token_vector(t, seed);
    }
    if (!tokens.empty()) {
        acc /= static_cast<double>(tokens.size());
    }
    double n = acc.norm();
    return n > 0.0 ? Eigen::VectorXd(acc / n) : acc;
}

Context featurize_window(const std::vector<QueryEvent>& queries, const std::vector<OptimizerStats>& stats,
                         double window_seconds, const FeaturizeConfig& config) {
    if (queries.empty()) {
        throw InvalidInput("cannot featurize an empty query window");
    }
    if (queries.size() != stats.size()) {
        throw InvalidInput("queries and optimizer stats are not aligned");
    }
    if (!(window_seconds > 0.0)) {
        throw InvalidInput("window length must be positive");
    }
    const double n = static_cast<double>(queries.size());
    Context c = Context::Zero(kContextDim);
    for (const auto& q : queries) {
        c.head(kEmbeddingDim) += embed_query(q.text, config.seed);
    }
    c.head(kEmbeddingDim) /= n;

    c[kArrivalDim] = std::clamp(n / window_seconds / config.max_rate, 0.0, 1.0);

    double rows = 0.0, filter = 0.0, index = 0.0;
    for (const auto& s : stats) {
        if (s.rows_examined_est < 0 || s.filter_pct < 0 || s.filter_pct > 100 || (s.index_used != 0 && s.index_used != 1)) {
            throw InvalidInput("optimizer stats out of range");
        }
        rows += std::min(std::log1p(s.rows_examined_est) / config.max_log_rows, 1.0);
        filter += s.filter_pct / 100.0;
        index += s.index_used;
    }
    c[kDataDimBegin] = rows / n;
    c[kDataDimBegin + 1] = filter / n;
    c[kDataDimBegin + 2] = index / n;
    return c;
}

} // namespace safetune
