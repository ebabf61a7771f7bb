#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lipci/error.hpp"
#include "lipci/geometry.hpp"

namespace lipci {

/// Fully observed data: locations, covariates X (N x P) and responses Y.
struct SourceDataset {
  LocationSet locations;
  Matrix covariates;
  Vector responses;
  bool intercept_included = false;

  Eigen::Index size() const { return covariates.rows(); }
  Eigen::Index num_covariates() const { return covariates.cols(); }
};

/// Inference locations and covariates; no responses.
struct TargetSet {
  LocationSet locations;
  Matrix covariates;

  Eigen::Index size() const { return covariates.rows(); }
  Eigen::Index num_covariates() const { return covariates.cols(); }
};

/// Simulation ground truth: conditional mean f, noise variance and the
/// Lipschitz constant of f.
struct GroundTruth {
  std::function<double(const Eigen::Ref<const Eigen::RowVectorXd>&)> f;
  double sigma2 = 0.0;
  double lipschitz_L0 = 1.0;

  Vector evaluate(const LocationSet& s) const {
    Vector out(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) out[i] = f(s.coords.row(i));
    return out;
  }
};

/// Prepends a constant-one column; the intercept becomes coefficient 0.
inline Matrix with_intercept(const Matrix& x) {
  detail::require(x.cols() >= 1, "empty-covariates",
                  "covariate matrix has no columns");
  detail::require(x.allFinite(), "non-finite", "covariates must be finite");
  Matrix out(x.rows(), x.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(x.cols()) = x;
  return out;
}

/// X^T X is singular when its smallest eigenvalue is at most this fraction
/// of the largest.
inline constexpr double kSingularRatio = 1e-10;

struct GramSpectrum {
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  bool singular() const {
    return !(max_eigenvalue > 0.0) ||
           min_eigenvalue <= kSingularRatio * max_eigenvalue;
  }
};

inline GramSpectrum gram_spectrum(const Matrix& x) {
  const Matrix gram = x.transpose() * x;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  return {eig.eigenvalues().minCoeff(), eig.eigenvalues().maxCoeff()};
}

/// Factorised X^T X for repeated solves; throws "singular-gram" when the
/// scale-free invertibility check fails.
class GramSolver {
 public:
  explicit GramSolver(const Matrix& x) {
    detail::require(x.rows() >= 1 && x.cols() >= 1, "empty-covariates",
                    "covariate matrix is empty");
    const GramSpectrum spec = gram_spectrum(x);
    detail::require(!spec.singular(), "singular-gram",
                    "X^T X is singular (min eigenvalue " +
                        std::to_string(spec.min_eigenvalue) + ")");
    llt_.compute(x.transpose() * x);
  }

  Vector solve(const Vector& rhs) const { return llt_.solve(rhs); }
  Matrix solve(const Matrix& rhs) const { return llt_.solve(rhs); }
  Matrix inverse() const {
    return llt_.solve(Matrix::Identity(llt_.rows(), llt_.cols()));
  }

 private:
  Eigen::LLT<Matrix> llt_;
};

struct ValidationFinding {
  std::string code;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationFinding> findings;
  double target_gram_min_eigenvalue = 0.0;
  double target_gram_max_eigenvalue = 0.0;
  std::size_t duplicate_source_locations = 0;

  bool empty() const { return findings.empty(); }
  bool has(const std::string& code) const {
    for (const auto& f : findings)
      if (f.code == code) return true;
    return false;
  }
};

/// Report-only check of the source/target pair; never throws on bad data.
inline ValidationReport validate(const SourceDataset& source,
                                 const TargetSet& target) {
  ValidationReport rep;
  auto add = [&](std::string code, std::string msg) {
    rep.findings.push_back({std::move(code), std::move(msg)});
  };

  const auto n = source.covariates.rows();
  if (n < 1) add("empty-source", "source has no rows");
  if (source.covariates.cols() < 1) add("empty-covariates", "source has P = 0");
  if (source.locations.size() != n || source.responses.size() != n)
    add("dimension-mismatch", "source row counts disagree");
  if (target.locations.size() != target.covariates.rows())
    add("dimension-mismatch", "target row counts disagree");
  if (target.covariates.cols() != source.covariates.cols())
    add("dimension-mismatch",
        "target has P = " + std::to_string(target.covariates.cols()) +
            ", source has P = " + std::to_string(source.covariates.cols()));
  if (source.locations.dim() != target.locations.dim())
    add("dimension-mismatch", "location dimensions differ");

  if (!source.covariates.allFinite() || !source.responses.allFinite() ||
      !source.locations.coords.allFinite())
    add("non-finite", "source contains non-finite entries");
  if (!target.covariates.allFinite() || !target.locations.coords.allFinite())
    add("non-finite", "target contains non-finite entries");

  // Exact-equality duplicates among source locations.
  const auto& sc = source.locations.coords;
  for (Eigen::Index i = 0; i < sc.rows(); ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      if (sc.row(i) == sc.row(j)) {
        ++rep.duplicate_source_locations;
        break;
      }
    }
  }
  if (rep.duplicate_source_locations > 0)
    add("duplicate-locations",
        std::to_string(rep.duplicate_source_locations) +
            " source locations repeat an earlier one");

  if (target.covariates.rows() >= 1 && target.covariates.cols() >= 1 &&
      target.covariates.allFinite()) {
    const GramSpectrum spec = gram_spectrum(target.covariates);
    rep.target_gram_min_eigenvalue = spec.min_eigenvalue;
    rep.target_gram_max_eigenvalue = spec.max_eigenvalue;
    if (spec.singular())
      add("singular-gram", "target X*^T X* is numerically singular");
  }
  return rep;
}

}  // namespace lipci
