#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "pvmpi/mpi.hpp"
#include "pvmpi/stats.hpp"

namespace pvmpi {

// (1/S) sum_s |obs - x_s| - (1/(2 S^2)) sum_s sum_s' |x_s - x_s'|
inline double energy_score(std::span<const double> obs,
                           const Eigen::MatrixXd& scenarios)
{
  const Eigen::Index s_count = scenarios.rows(), dim = scenarios.cols();
  if (static_cast<Eigen::Index>(obs.size()) != dim)
    throw std::invalid_argument("energy_score: dimension mismatch");
  if (s_count < 1)
    throw std::invalid_argument("energy_score: need at least one scenario");
  const Eigen::Map<const Eigen::RowVectorXd> p(obs.data(), dim);
  double first = 0.0;
  for (Eigen::Index s = 0; s < s_count; ++s)
    first += (scenarios.row(s) - p).norm();
  double second = 0.0;
  for (Eigen::Index s = 0; s < s_count; ++s)
    for (Eigen::Index t = s + 1; t < s_count; ++t)
      second += (scenarios.row(s) - scenarios.row(t)).norm();
  const auto n = static_cast<double>(s_count);
  // ordered double sum = 2 * unordered
  return first / n - second / (n * n);
}

// Ordered-pair double sum over (i, j); i == j terms vanish.
inline double variogram_score(std::span<const double> obs,
                              const Eigen::MatrixXd& scenarios, double gamma,
                              const Eigen::MatrixXd& weights)
{
  const Eigen::Index s_count = scenarios.rows(), dim = scenarios.cols();
  if (static_cast<Eigen::Index>(obs.size()) != dim)
    throw std::invalid_argument("variogram_score: dimension mismatch");
  if (weights.rows() != dim || weights.cols() != dim)
    throw std::invalid_argument("variogram_score: weights must be D x D");
  if (!(gamma > 0.0))
    throw std::invalid_argument("variogram_score: gamma must be positive");
  if ((weights.array() < 0.0).any())
    throw std::invalid_argument("variogram_score: weights must be nonnegative");
  if (s_count < 1)
    throw std::invalid_argument("variogram_score: need at least one scenario");
  double vs = 0.0;
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) {
      if (i == j)
        continue;
      double ens = 0.0;
      for (Eigen::Index s = 0; s < s_count; ++s)
        ens += std::pow(std::abs(scenarios(s, i) - scenarios(s, j)), gamma);
      ens /= static_cast<double>(s_count);
      const double diff = std::pow(std::abs(obs[i] - obs[j]), gamma) - ens;
      vs += weights(i, j) * diff * diff;
    }
  return vs;
}

inline double variogram_score(std::span<const double> obs,
                              const Eigen::MatrixXd& scenarios, double gamma = 0.5)
{
  const auto d = scenarios.cols();
  return variogram_score(obs, scenarios, gamma, Eigen::MatrixXd::Ones(d, d));
}

// Share of days whose whole observed trajectory lies in the box, per alpha.
inline std::vector<double>
mpi_calibration(const std::vector<MPISet>& sets,
                const std::vector<std::vector<double>>& observed)
{
  if (sets.size() != observed.size())
    throw std::invalid_argument("mpi_calibration: one trajectory per day required");
  if (sets.empty())
    return {};
  const auto& alphas = sets.front().alphas;
  std::vector<double> hits(alphas.size(), 0.0);
  for (std::size_t t = 0; t < sets.size(); ++t) {
    if (sets[t].alphas != alphas)
      throw std::invalid_argument("mpi_calibration: alpha grids differ across days");
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      const auto& b = sets[t].boxes[a];
      if (b.dim() != observed[t].size())
        throw std::invalid_argument("mpi_calibration: dimension mismatch on day " +
                                    std::to_string(t));
      bool in = true;
      for (std::size_t d = 0; d < b.dim() && in; ++d)
        in = observed[t][d] >= b.lower[d] && observed[t][d] <= b.upper[d];
      hits[a] += in;
    }
  }
  for (auto& h : hits)
    h /= static_cast<double>(sets.size());
  return hits;
}

struct GoodnessOfFit
{
  double loglik = 0.0;
  int kappa = 0;
  std::size_t nobs = 0;
  double aic() const { return -2.0 * loglik + 2.0 * kappa; }
  double bic() const
  {
    return -2.0 * loglik + kappa * std::log(static_cast<double>(nobs));
  }
};

inline double aic(double loglik, int kappa) { return -2.0 * loglik + 2.0 * kappa; }
inline double bic(double loglik, int kappa, double nobs)
{
  return -2.0 * loglik + kappa * std::log(nobs);
}

struct ScoreReport
{
  std::string model;
  GoodnessOfFit fit;
  double mean_es = 0.0;
  double mean_vs = 0.0;
  std::vector<double> alphas;
  std::vector<double> coverage;
  double avg_deviation_pct = 0.0;
  double avg_volume_95 = 0.0;
};

// Deviation is mean |empirical - nominal| over the levels, in percentage
// points. Volumes are those of the alpha = 0.95 boxes.
inline ScoreReport summarize(std::string model, const GoodnessOfFit& fit,
                             std::span<const double> es,
                             std::span<const double> vs,
                             std::vector<double> alphas,
                             std::vector<double> coverage,
                             std::span<const double> volumes_95)
{
  if (es.empty() || vs.empty() || alphas.empty())
    throw std::invalid_argument("summarize: empty inputs");
  if (alphas.size() != coverage.size())
    throw std::invalid_argument("summarize: coverage length mismatch");
  ScoreReport r;
  r.model = std::move(model);
  r.fit = fit;
  r.mean_es = mean(es);
  r.mean_vs = mean(vs);
  std::vector<double> dev;
  for (std::size_t a = 0; a < alphas.size(); ++a)
    dev.push_back(std::abs(coverage[a] - alphas[a]) * 100.0);
  r.avg_deviation_pct = mean(dev);
  r.avg_volume_95 = volumes_95.empty() ? 0.0 : mean(volumes_95);
  r.alphas = std::move(alphas);
  r.coverage = std::move(coverage);
  return r;
}

inline void to_json(nlohmann::json& j, const ScoreReport& r)
{
  j = nlohmann::json{ { "model", r.model },
                      { "loglik", r.fit.loglik },
                      { "kappa", r.fit.kappa },
                      { "n_obs", r.fit.nobs },
                      { "aic", r.fit.aic() },
                      { "bic", r.fit.bic() },
                      { "energy_score", r.mean_es },
                      { "variogram_score", r.mean_vs },
                      { "average_deviation_pct", r.avg_deviation_pct },
                      { "average_volume_95", r.avg_volume_95 },
                      { "alphas", r.alphas },
                      { "empirical_coverage", r.coverage } };
}

} // namespace pvmpi
