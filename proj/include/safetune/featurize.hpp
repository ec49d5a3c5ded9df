#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "safetune/errors.hpp"

namespace safetune {

inline constexpr int kEmbeddingDim = 6;
inline constexpr int kContextDim = 10;
inline constexpr int kArrivalDim = 6;
inline constexpr int kDataDimBegin = 7;

/// Fixed-length context vector: 6 query-embedding dims, 1 arrival-rate dim, 3 data-statistics dims.
using Context = Eigen::VectorXd;

struct QueryEvent {
    std::string text;
    double arrival_time = 0.0;
};

/// Optimizer estimates attached to one query.
struct OptimizerStats {
    double rows_examined_est = 0.0;
    double filter_pct = 100.0;
    int index_used = 0;
};

struct FeaturizeConfig {
    /// Arrival rate (queries/second) mapped to 1.0.
    double max_rate = 10.0;
    /// log1p(rows) value mapped to 1.0.
    double max_log_rows = 18.420680743952367; // log1p(1e8)
    std::uint64_t seed = 0x5eedf00dULL;
};

/// Lowercased alphanumeric tokens; everything else separates.
std::vector<std::string> tokenize_sql(std::string_view text);

/// Deterministic nonnegative unit vector for one token.
Eigen::VectorXd token_vector(std::string_view token, std::uint64_t seed);

/// Hashed-token query embedding: mean of token vectors, L2-normalized. Throws on empty text.
Eigen::VectorXd embed_query(std::string_view text, std::uint64_t seed = FeaturizeConfig{}.seed);

/// Builds the context for one window of queries. Throws when the window is empty or misaligned.
Context featurize_window(const std::vector<QueryEvent>& queries, const std::vector<OptimizerStats>& stats,
                         double window_seconds, const FeaturizeConfig& config = {});

} // namespace safetune
