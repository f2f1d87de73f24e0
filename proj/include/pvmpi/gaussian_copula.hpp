#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "pvmpi/stats.hpp"

namespace pvmpi {

inline Eigen::MatrixXd normal_scores(const Eigen::MatrixXd& u)
{
  return u.unaryExpr([](double x) { return normal_quantile(clip_unit(x)); });
}

inline double min_eigenvalue(const Eigen::MatrixXd& m)
{
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

class GaussianCopulaModel
{
public:
  static constexpr double kEigenFloor = 1e-10;

  GaussianCopulaModel() = default;

  explicit GaussianCopulaModel(Eigen::MatrixXd corr)
    : corr_(std::move(corr))
  {
    validate();
    factorize();
  }

  Eigen::Index dim() const { return corr_.rows(); }
  const Eigen::MatrixXd& corr() const { return corr_; }
  double loglik() const { return loglik_; }
  void set_loglik(double ll) { loglik_ = ll; }
  // Estimated shrinkage weight (0 when the sample correlation was PD).
  double shrinkage() const { return shrinkage_; }
  void set_shrinkage(double l) { shrinkage_ = l; }

  int kappa() const
  {
    const auto d = static_cast<int>(dim());
    return d * (d - 1) / 2;
  }

  double log_pdf(const Eigen::Ref<const Eigen::RowVectorXd>& u) const
  {
    if (u.size() != dim())
      throw std::invalid_argument("gaussian copula: dimension mismatch");
    Eigen::VectorXd z(dim());
    for (Eigen::Index d = 0; d < dim(); ++d)
      z(d) = normal_quantile(clip_unit(u(d)));
    return -0.5 * log_det_ - 0.5 * z.dot(inv_minus_identity_ * z);
  }

  // Copula log-likelihood; marginal densities are not included.
  double loglik(const Eigen::MatrixXd& u) const
  {
    if (u.cols() != dim())
      throw std::invalid_argument("gaussian copula: dimension mismatch");
    double ll = 0.0;
    for (Eigen::Index t = 0; t < u.rows(); ++t)
      ll += log_pdf(u.row(t));
    return ll;
  }

  double aic() const { return -2.0 * loglik_ + 2.0 * kappa(); }
  double bic(std::size_t n) const
  {
    return -2.0 * loglik_ + kappa() * std::log(static_cast<double>(n));
  }

  // Rows z = L eps with eps standard normal, mapped through Phi.
  Eigen::MatrixXd sample(Eigen::Index n, std::uint64_t seed) const
  {
    if (n < 1)
      throw std::invalid_argument("gaussian copula: need at least one sample");
    Rng rng(seed);
    Eigen::MatrixXd u(n, dim());
    Eigen::VectorXd eps(dim());
    for (Eigen::Index s = 0; s < n; ++s) {
      for (Eigen::Index d = 0; d < dim(); ++d)
        eps(d) = rng.normal();
      const Eigen::VectorXd z = chol_ * eps;
      for (Eigen::Index d = 0; d < dim(); ++d)
        u(s, d) = normal_cdf(z(d));
    }
    return u;
  }

  // Kendall's tau implied by the correlation matrix.
  Eigen::MatrixXd tau_matrix() const
  {
    return corr_.unaryExpr([](double r) { return 2.0 / M_PI * std::asin(r); });
  }

private:
  void validate() const
  {
    if (corr_.rows() != corr_.cols() || corr_.rows() < 1)
      throw std::invalid_argument("correlation matrix must be square");
    for (Eigen::Index i = 0; i < corr_.rows(); ++i) {
      if (std::abs(corr_(i, i) - 1.0) > 1e-12)
        throw std::invalid_argument("correlation matrix needs a unit diagonal");
      for (Eigen::Index j = 0; j < i; ++j)
        if (std::abs(corr_(i, j) - corr_(j, i)) > 1e-12)
          throw std::invalid_argument("correlation matrix is not symmetric");
    }
    if (min_eigenvalue(corr_) <= kEigenFloor)
      throw std::invalid_argument("correlation matrix is not positive definite");
  }

  void factorize()
  {
    Eigen::LLT<Eigen::MatrixXd> llt(corr_);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("correlation matrix is singular");
    chol_ = llt.matrixL();
    log_det_ = 2.0 * chol_.diagonal().array().log().sum();
    inv_minus_identity_ =
      llt.solve(Eigen::MatrixXd::Identity(dim(), dim())) -
      Eigen::MatrixXd::Identity(dim(), dim());
  }

  Eigen::MatrixXd corr_;
  Eigen::MatrixXd chol_;
  Eigen::MatrixXd inv_minus_identity_;
  double log_det_ = 0.0;
  double loglik_ = 0.0;
  double shrinkage_ = 0.0;
};

// Sample correlation of the normal scores; shrinks toward the identity with
// the smallest lambda in {1e-4, 1e-3, ..., 1} that restores positive
// definiteness.
inline GaussianCopulaModel fit_gaussian(const Eigen::MatrixXd& u)
{
  const Eigen::Index n = u.rows(), d = u.cols();
  if (n <= d)
    throw std::invalid_argument("fit_gaussian: need more rows (" +
                                std::to_string(n) + ") than dimensions (" +
                                std::to_string(d) + ")");
  Eigen::MatrixXd z = normal_scores(u);
  z.rowwise() -= z.colwise().mean();
  Eigen::MatrixXd cov = z.transpose() * z;
  Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
  Eigen::MatrixXd corr = cov.array() / (sd * sd.transpose()).array();
  corr.diagonal().setOnes();
  corr = 0.5 * (corr + corr.transpose());

  double lambda = 0.0;
  if (!(min_eigenvalue(corr) > GaussianCopulaModel::kEigenFloor)) {
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);
    for (lambda = 1e-4; lambda <= 1.0; lambda *= 10.0) {
      Eigen::MatrixXd shrunk = (1.0 - lambda) * corr + lambda * id;
      if (min_eigenvalue(shrunk) > GaussianCopulaModel::kEigenFloor) {
        corr = shrunk;
        break;
      }
    }
  }
  GaussianCopulaModel model(corr);
  model.set_shrinkage(lambda);
  model.set_loglik(model.loglik(u));
  return model;
}

inline void to_json(nlohmann::json& j, const GaussianCopulaModel& m)
{
  std::vector<double> flat;
  for (Eigen::Index r = 0; r < m.dim(); ++r)
    for (Eigen::Index c = 0; c < m.dim(); ++c)
      flat.push_back(m.corr()(r, c));
  j = nlohmann::json{ { "dim", m.dim() },
                      { "corr", flat },
                      { "loglik", m.loglik() },
                      { "kappa", m.kappa() } };
}

inline void from_json(const nlohmann::json& j, GaussianCopulaModel& m)
{
  const auto d = j.at("dim").get<Eigen::Index>();
  const auto flat = j.at("corr").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != d * d)
    throw std::invalid_argument("gaussian model: corr has wrong length");
  Eigen::MatrixXd corr(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c)
      corr(r, c) = flat[r * d + c];
  m = GaussianCopulaModel(corr);
  m.set_loglik(j.value("loglik", 0.0));
}

} // namespace pvmpi
