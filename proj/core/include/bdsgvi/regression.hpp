#pragma once

#include <string>
#include <vector>

#include "bdsgvi/types.hpp"

namespace bdsgvi {

struct RegressionSpec {
  enum class Kind { Auto, SampleMean, Polynomial, Partition };
  Kind kind = Kind::Auto;
  int degree = 2;
  int cells = 16;
  double ridge = 1e-10;
};

std::string to_string(RegressionSpec::Kind kind);
/// `auto`, `sample_mean`, `polynomial(p)`, `partition(cells)`.
RegressionSpec parse_regression(const std::string& text);

/// Least-squares projection of per-path responses onto functions of the
/// per-path state at one time node. Responses are shifted by their first row
/// before projection, so constant responses are reproduced bit-exactly.
class Projector {
 public:
  /// states: n × d (d may be 0, meaning no state information).
  static Projector fit(const Matrix& states, const RegressionSpec& spec);

  /// responses: n × q; returns fitted values, n × q.
  Matrix apply(const Matrix& responses) const;

  RegressionSpec::Kind kind() const { return kind_; }
  Eigen::Index basis_size() const { return basis_.cols(); }
  double condition_number() const { return condition_; }

 private:
  RegressionSpec::Kind kind_ = RegressionSpec::Kind::SampleMean;
  Matrix basis_;      // n × m (polynomial)
  Matrix gram_inv_;   // m × m
  std::vector<int> cell_of_;  // partition
  int n_cells_ = 0;
  Eigen::Index n_ = 0;
  double condition_ = 1.0;
};

}  // namespace bdsgvi
