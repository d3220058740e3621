#include "bdsgvi/regression.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "bdsgvi/call_spec.hpp"
#include "bdsgvi/errors.hpp"

namespace bdsgvi {
namespace {

void monomials(int dims, int degree, std::vector<int>& current, std::vector<std::vector<int>>& out) {
  if (static_cast<int>(current.size()) == dims) {
    out.push_back(current);
    return;
  }
  int used = 0;
  for (const int e : current) used += e;
  for (int e = 0; e + used <= degree; ++e) {
    current.push_back(e);
    monomials(dims, degree, current, out);
    current.pop_back();
  }
}

}  // namespace

std::string to_string(RegressionSpec::Kind kind) {
  switch (kind) {
    case RegressionSpec::Kind::Auto: return "auto";
    case RegressionSpec::Kind::SampleMean: return "sample_mean";
    case RegressionSpec::Kind::Polynomial: return "polynomial";
    case RegressionSpec::Kind::Partition: return "partition";
  }
  return "unknown";
}

RegressionSpec parse_regression(const std::string& text) {
  const CallSpec c = parse_call(text);
  RegressionSpec s;
  if (c.name == "auto") {
    expect_arity(c, 0, 0);
  } else if (c.name == "sample_mean") {
    expect_arity(c, 0, 0);
    s.kind = RegressionSpec::Kind::SampleMean;
  } else if (c.name == "polynomial") {
    expect_arity(c, 0, 1);
    s.kind = RegressionSpec::Kind::Polynomial;
    if (!c.args.empty()) s.degree = static_cast<int>(c.args[0]);
    if (s.degree < 0 || static_cast<double>(s.degree) != (c.args.empty() ? 2.0 : c.args[0])) {
      throw ValidationError("polynomial regression degree must be a nonnegative integer");
    }
  } else if (c.name == "partition") {
    expect_arity(c, 1, 1);
    s.kind = RegressionSpec::Kind::Partition;
    s.cells = static_cast<int>(c.args[0]);
    if (s.cells < 1 || static_cast<double>(s.cells) != c.args[0]) {
      throw ValidationError("partition regression needs a positive integer cell count");
    }
  } else {
    throw ValidationError(fmt::format(
        "unknown regression '{}' (known: auto, sample_mean, polynomial(p), partition(cells))", c.name));
  }
  return s;
}

Projector Projector::fit(const Matrix& states, const RegressionSpec& spec) {
  if (spec.degree < 0) throw ValidationError("regression degree must be >= 0");
  Projector p;
  p.n_ = states.rows();
  if (p.n_ == 0) throw ValidationError("regression needs at least one sample");
  const auto n = static_cast<double>(p.n_);

  // Standardize and keep only state coordinates that actually vary.
  std::vector<Vector> cols;
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    const auto c = states.col(j);
    const double lo = c.minCoeff();
    const double hi = c.maxCoeff();
    if (!(hi > lo)) continue;
    const double mean = c.mean();
    const double sd = std::sqrt((c.array() - mean).square().sum() / n);
    cols.push_back(((c.array() - mean) / sd).matrix());
  }

  RegressionSpec::Kind kind = spec.kind;
  if (kind == RegressionSpec::Kind::Auto) {
    kind = cols.empty() ? RegressionSpec::Kind::SampleMean : RegressionSpec::Kind::Polynomial;
  }
  if (cols.empty() || (kind == RegressionSpec::Kind::Polynomial && spec.degree == 0)) {
    kind = RegressionSpec::Kind::SampleMean;
  }
  p.kind_ = kind;

  if (kind == RegressionSpec::Kind::Polynomial) {
    std::vector<std::vector<int>> terms;
    std::vector<int> cur;
    monomials(static_cast<int>(cols.size()), spec.degree, cur, terms);
    const auto m = static_cast<Eigen::Index>(terms.size());
    if (m > p.n_) {
      throw NumericalError(fmt::format("regression basis of size {} exceeds the {} samples", m, p.n_));
    }
    p.basis_.resize(p.n_, m);
    for (Eigen::Index t = 0; t < m; ++t) {
      Vector v = Vector::Ones(p.n_);
      for (std::size_t j = 0; j < cols.size(); ++j) {
        for (int e = 0; e < terms[static_cast<std::size_t>(t)][j]; ++e) v = v.cwiseProduct(cols[j]);
      }
      p.basis_.col(t) = v;
    }
    Matrix gram = p.basis_.transpose() * p.basis_;
    gram.diagonal().array() += spec.ridge * n;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    const double lmin = eig.eigenvalues().minCoeff();
    const double lmax = eig.eigenvalues().maxCoeff();
    p.condition_ = lmin > 0.0 ? lmax / lmin : kInfinity;
    if (!(lmin > 0.0) || !std::isfinite(p.condition_) || p.condition_ > 1e14) {
      throw NumericalError(
          fmt::format("regression normal equations are singular (condition number {:.3g})", p.condition_));
    }
    p.gram_inv_ = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  } else if (kind == RegressionSpec::Kind::Partition) {
    if (spec.cells < 1) throw ValidationError("partition regression needs at least one cell");
    const int dims = static_cast<int>(cols.size());
    const int per_dim = std::max(1, static_cast<int>(std::floor(std::pow(spec.cells, 1.0 / dims) + 1e-9)));
    p.cell_of_.assign(static_cast<std::size_t>(p.n_), 0);
    int stride = 1;
    for (const Vector& c : cols) {
      const double lo = c.minCoeff();
      const double w = (c.maxCoeff() - lo) / per_dim;
      for (Eigen::Index i = 0; i < p.n_; ++i) {
        const int b = std::min(per_dim - 1, static_cast<int>((c[i] - lo) / w));
        p.cell_of_[static_cast<std::size_t>(i)] += b * stride;
      }
      stride *= per_dim;
    }
    p.n_cells_ = stride;
  }
  return p;
}

Matrix Projector::apply(const Matrix& responses) const {
  if (responses.rows() != n_) {
    throw ValidationError(fmt::format("regression fitted on {} samples, applied to {}", n_, responses.rows()));
  }
  const Eigen::RowVectorXd shift = responses.row(0);
  const Matrix centered = responses.rowwise() - shift;
  Matrix fitted;
  switch (kind_) {
    case RegressionSpec::Kind::Polynomial: {
      const Matrix coef = gram_inv_ * (basis_.transpose() * centered);
      fitted = basis_ * coef;
      break;
    }
    case RegressionSpec::Kind::Partition: {
      Matrix sums = Matrix::Zero(n_cells_, centered.cols());
      std::vector<double> counts(static_cast<std::size_t>(n_cells_), 0.0);
      for (Eigen::Index i = 0; i < n_; ++i) {
        sums.row(cell_of_[static_cast<std::size_t>(i)]) += centered.row(i);
        counts[static_cast<std::size_t>(cell_of_[static_cast<std::size_t>(i)])] += 1.0;
      }
      fitted.resize(n_, centered.cols());
      for (Eigen::Index i = 0; i < n_; ++i) {
        const int c = cell_of_[static_cast<std::size_t>(i)];
        fitted.row(i) = sums.row(c) / counts[static_cast<std::size_t>(c)];
      }
      break;
    }
    default: {
      const Eigen::RowVectorXd mean = centered.colwise().sum() / static_cast<double>(n_);
      fitted = mean.replicate(n_, 1);
      break;
    }
  }
  return fitted.rowwise() + shift;
}

}  // namespace bdsgvi
