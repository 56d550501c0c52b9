#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <limits>

namespace ddpc {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Relative singular-value threshold used for numeric rank decisions.
inline constexpr double kDefaultRankTol = 1e-9;

/// Number of scalar entries held by a dense matrix; used for memory footprints.
inline std::size_t entries(const Matrix& m) { return static_cast<std::size_t>(m.size()); }
inline std::size_t entries(const Vector& v) { return static_cast<std::size_t>(v.size()); }

}  // namespace ddpc
