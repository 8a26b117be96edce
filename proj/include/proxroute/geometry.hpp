#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "proxroute/errors.hpp"

namespace proxroute {

enum class DistanceMetric { Cosine, Euclidean };

inline std::string to_string(DistanceMetric m) {
    return m == DistanceMetric::Cosine ? "cosine" : "euclidean";
}

namespace detail {
inline void require_same_length(Eigen::Index a, Eigen::Index b) {
    if (a != b)
        throw ValidationError(ValidationError::Kind::DimensionMismatch,
                              "encoding length mismatch: " + std::to_string(a) + " vs " +
                                  std::to_string(b));
}
}  // namespace detail

/// Cosine distance 1 − a·b / (‖a‖‖b‖), in [0, 2].
///
/// Accumulation runs in the operands' scalar type (float32 for stored
/// encodings — a deliberate fast path; see NeighborIndex) and the final
/// combination in double. Zero-norm inputs are rejected: an all-zero
/// encoding signals upstream corruption, not a legitimate direction.
template <typename DA, typename DB>
double cosine_distance(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
    detail::require_same_length(a.size(), b.size());
    const double na2 = static_cast<double>(a.squaredNorm());
    const double nb2 = static_cast<double>(b.squaredNorm());
    if (na2 <= 1e-24 || nb2 <= 1e-24)
        throw ValidationError(ValidationError::Kind::DegenerateInput,
                              "cosine distance undefined for (near-)zero-norm encoding");
    const double dot = static_cast<double>(a.dot(b));
    return 1.0 - dot / (std::sqrt(na2) * std::sqrt(nb2));
}

/// Euclidean (l2) distance.
template <typename DA, typename DB>
double euclidean_distance(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
    detail::require_same_length(a.size(), b.size());
    return std::sqrt(static_cast<double>((a - b).squaredNorm()));
}

template <typename DA, typename DB>
double distance(DistanceMetric metric, const Eigen::MatrixBase<DA>& a,
                const Eigen::MatrixBase<DB>& b) {
    return metric == DistanceMetric::Cosine ? cosine_distance(a, b) : euclidean_distance(a, b);
}

}  // namespace proxroute
