#pragma once

#include <limits>

#include <Eigen/Dense>

namespace bdsgvi {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// +infinity sentinel for extended-valued convex functions. IEEE ordering and
/// saturation (inf + finite == inf) are relied upon throughout.
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

inline bool is_infinite(double v) { return v == kInfinity; }

}  // namespace bdsgvi
