#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/QR>
#include <nlohmann/json.hpp>

#include "pvmpi/data_io.hpp"
#include "pvmpi/stats.hpp"

namespace pvmpi {

// 0.05, 0.10, ..., 0.95
inline std::vector<double> default_levels()
{
  std::vector<double> lv;
  for (int i = 1; i <= 19; ++i)
    lv.push_back(i / 20.0);
  return lv;
}

inline double pinball_loss(double residual, double tau)
{
  return residual >= 0.0 ? tau * residual : (tau - 1.0) * residual;
}

// Mean pinball loss of the linear predictor X * beta.
inline double mean_pinball(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& beta, double tau)
{
  const Eigen::VectorXd r = y - x * beta;
  double s = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i)
    s += pinball_loss(r(i), tau);
  return s / static_cast<double>(r.size());
}

// Throws if the design has linearly dependent columns, naming the first
// column that lies in the span of the ones before it.
inline void check_design_rank(const Eigen::MatrixXd& x,
                              const std::vector<std::string>& names)
{
  for (Eigen::Index k = 1; k <= x.cols(); ++k) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x.leftCols(k));
    qr.setThreshold(1e-10);
    if (qr.rank() < k) {
      auto name = [&](Eigen::Index i) {
        return i < static_cast<Eigen::Index>(names.size())
                 ? names[i]
                 : "column " + std::to_string(i);
      };
      std::string others;
      for (Eigen::Index i = 0; i + 1 < k; ++i)
        others += (i ? ", " : "") + name(i);
      throw std::invalid_argument("degenerate design matrix: '" + name(k - 1) +
                                  "' is collinear with {" + others + "}");
    }
  }
}

// Linear quantile regression by exterior-point simplex descent over basic
// solutions (Barrodale-Roberts style). A basis is a set of p observations
// fitted exactly; each step moves along the edge that releases one basis
// observation with the steepest negative directional derivative, and the
// exact line search is a weighted median over the residual kinks.
inline Eigen::VectorXd fit_quantile(const Eigen::MatrixXd& x,
                                    const Eigen::VectorXd& y, double tau,
                                    const std::vector<std::string>& names = {})
{
  const Eigen::Index n = x.rows(), p = x.cols();
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("fit_quantile: level must be in (0,1)");
  if (y.size() != n)
    throw std::invalid_argument("fit_quantile: target length mismatch");
  if (n < 10 * p)
    throw std::invalid_argument("fit_quantile: need at least " +
                                std::to_string(10 * p) + " rows, got " +
                                std::to_string(n));
  check_design_rank(x, names);

  // Initial basis from a pivoted QR of X^T (well-conditioned rows).
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x.transpose());
  std::vector<Eigen::Index> basis(p);
  std::vector<char> in_basis(n, 0);
  for (Eigen::Index j = 0; j < p; ++j) {
    basis[j] = qr.colsPermutation().indices()(j);
    in_basis[basis[j]] = 1;
  }

  auto basis_matrix = [&] {
    Eigen::MatrixXd xb(p, p);
    for (Eigen::Index j = 0; j < p; ++j)
      xb.row(j) = x.row(basis[j]);
    return xb;
  };
  Eigen::MatrixXd xb = basis_matrix();
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(xb);
  Eigen::VectorXd yb(p);
  for (Eigen::Index j = 0; j < p; ++j)
    yb(j) = y(basis[j]);
  Eigen::VectorXd beta = lu.solve(yb);

  const double scale = 1.0 + y.cwiseAbs().maxCoeff();
  const double zero_tol = 1e-12 * scale;
  const Eigen::Index max_iter = 50 * n + 100;
  std::vector<std::pair<double, Eigen::Index>> kinks;
  kinks.reserve(n);

  for (Eigen::Index iter = 0; iter < max_iter; ++iter) {
    const Eigen::MatrixXd binv = lu.inverse();
    const Eigen::MatrixXd g = x * binv; // column j: fitted change along edge j
    Eigen::VectorXd r = y - x * beta;
    for (Eigen::Index j = 0; j < p; ++j)
      r(basis[j]) = 0.0;

    double best = -1e-12 * scale;
    Eigen::Index best_j = -1;
    double best_sign = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      for (double sign : { 1.0, -1.0 }) {
        // releasing basis row j: its fitted value moves by sign
        double deriv = sign > 0 ? (1.0 - tau) : tau;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (in_basis[i])
            continue;
          const double gi = sign * g(i, j);
          if (r(i) > zero_tol)
            deriv -= tau * gi;
          else if (r(i) < -zero_tol)
            deriv += (1.0 - tau) * gi;
          else
            deriv += std::max(-tau * gi, (1.0 - tau) * gi);
        }
        if (deriv < best) {
          best = deriv;
          best_j = j;
          best_sign = sign;
        }
      }
    }
    if (best_j < 0)
      return beta; // no descent edge: optimal vertex

    // Exact line search along d = sign * binv.col(j).
    kinks.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (in_basis[i])
        continue;
      const double gi = best_sign * g(i, best_j);
      if (std::abs(gi) < 1e-14)
        continue;
      const double t = r(i) / gi;
      if (t > 0.0 && std::abs(r(i)) > zero_tol)
        kinks.emplace_back(t, i);
    }
    std::sort(kinks.begin(), kinks.end());
    double slope = best;
    Eigen::Index enter = -1;
    double step = 0.0;
    for (const auto& [t, i] : kinks) {
      slope += std::abs(best_sign * g(i, best_j));
      if (slope >= 0.0) {
        enter = i;
        step = t;
        break;
      }
    }
    if (enter < 0)
      throw std::runtime_error("fit_quantile: objective unbounded along an edge");

    beta += step * best_sign * binv.col(best_j);
    in_basis[basis[best_j]] = 0;
    basis[best_j] = enter;
    in_basis[enter] = 1;
    xb = basis_matrix();
    lu.compute(xb);
    for (Eigen::Index j = 0; j < p; ++j)
      yb(j) = y(basis[j]);
    beta = lu.solve(yb); // re-anchor on the basis to avoid drift
  }
  throw std::runtime_error("fit_quantile: iteration limit reached");
}

// Predictive quantiles of one (day, lead-time). The marginal CDF is
// piecewise linear through (0,0), (q_m, level_m), (1,1).
class QuantileCurve
{
public:
  QuantileCurve() = default;

  // Values are clamped to [0,1] and sorted (quantile-crossing repair).
  QuantileCurve(std::vector<double> levels, std::vector<double> values)
    : levels_(std::move(levels))
    , values_(std::move(values))
  {
    if (levels_.size() != values_.size() || levels_.empty())
      throw std::invalid_argument("quantile curve: levels and values differ");
    for (std::size_t m = 0; m < levels_.size(); ++m) {
      if (!(levels_[m] > 0.0 && levels_[m] < 1.0) ||
          (m > 0 && levels_[m] <= levels_[m - 1]))
        throw std::invalid_argument(
          "quantile levels must be strictly increasing in (0,1)");
    }
    for (auto& v : values_)
      v = std::clamp(v, 0.0, 1.0);
    std::sort(values_.begin(), values_.end());
    xs_.reserve(values_.size() + 2);
    ys_.reserve(values_.size() + 2);
    xs_.push_back(0.0);
    ys_.push_back(0.0);
    for (std::size_t m = 0; m < values_.size(); ++m) {
      xs_.push_back(values_[m]);
      ys_.push_back(levels_[m]);
    }
    xs_.push_back(1.0);
    ys_.push_back(1.0);
  }

  const std::vector<double>& levels() const { return levels_; }
  const std::vector<double>& values() const { return values_; }

  // Where several knots share a value (a jump of the CDF) the midpoint of
  // the jump is returned.
  double cdf(double p) const
  {
    if (p <= 0.0)
      return 0.0;
    if (p >= 1.0)
      return 1.0;
    const auto lo = std::lower_bound(xs_.begin(), xs_.end(), p) - xs_.begin();
    const auto hi = std::upper_bound(xs_.begin(), xs_.end(), p) - xs_.begin();
    if (lo < hi)
      return 0.5 * (ys_[lo] + ys_[hi - 1]);
    const double x0 = xs_[lo - 1], x1 = xs_[lo];
    const double y0 = ys_[lo - 1], y1 = ys_[lo];
    return y0 + (y1 - y0) * (p - x0) / (x1 - x0);
  }

  double inverse_cdf(double u) const
  {
    if (u <= 0.0)
      return 0.0;
    if (u >= 1.0)
      return 1.0;
    const auto j = std::lower_bound(ys_.begin(), ys_.end(), u) - ys_.begin();
    if (ys_[j] == u)
      return xs_[j];
    const double x0 = xs_[j - 1], x1 = xs_[j];
    const double y0 = ys_[j - 1], y1 = ys_[j];
    return x0 + (x1 - x0) * (u - y0) / (y1 - y0);
  }

private:
  std::vector<double> levels_;
  std::vector<double> values_;
  std::vector<double> xs_, ys_;
};

// Per-lead-time quantile regressions on [1, features].
struct MarginalModel
{
  std::vector<double> levels;
  std::vector<std::string> feature_names;
  // coefficients[d][m] = intercept followed by one weight per feature
  std::vector<std::vector<Eigen::VectorXd>> coefficients;

  int dim() const { return static_cast<int>(coefficients.size()); }
  int nfeatures() const { return static_cast<int>(feature_names.size()); }
};

inline Eigen::MatrixXd design_matrix(const std::vector<DayMatrix>& days, int d,
                                     int nfeat)
{
  Eigen::MatrixXd x(days.size(), nfeat + 1);
  for (std::size_t t = 0; t < days.size(); ++t) {
    x(static_cast<Eigen::Index>(t), 0) = 1.0;
    for (int k = 0; k < nfeat; ++k)
      x(static_cast<Eigen::Index>(t), k + 1) = days[t].features(d, k);
  }
  return x;
}

inline MarginalModel fit_marginals(const std::vector<DayMatrix>& train,
                                   std::vector<double> levels,
                                   std::vector<std::string> feature_names)
{
  if (train.empty())
    throw std::invalid_argument("fit_marginals: no training days");
  MarginalModel model;
  model.levels = std::move(levels);
  model.feature_names = std::move(feature_names);
  const int nfeat = model.nfeatures();
  if (train.front().features.cols() < nfeat)
    throw std::invalid_argument("fit_marginals: days carry fewer features than named");
  std::vector<std::string> cols{ "intercept" };
  cols.insert(cols.end(), model.feature_names.begin(), model.feature_names.end());

  const int dim = train.front().dim();
  model.coefficients.resize(dim);
  for (int d = 0; d < dim; ++d) {
    const Eigen::MatrixXd x = design_matrix(train, d, nfeat);
    Eigen::VectorXd y(train.size());
    for (std::size_t t = 0; t < train.size(); ++t)
      y(static_cast<Eigen::Index>(t)) = train[t].power[d];
    for (double level : model.levels)
      model.coefficients[d].push_back(fit_quantile(x, y, level, cols));
  }
  return model;
}

inline QuantileCurve predict_curve(const MarginalModel& model,
                                   std::span<const double> features, int d)
{
  if (static_cast<int>(features.size()) != model.nfeatures())
    throw std::invalid_argument("predict_curve: expected " +
                                std::to_string(model.nfeatures()) +
                                " features, got " +
                                std::to_string(features.size()));
  if (d < 0 || d >= model.dim())
    throw std::invalid_argument("predict_curve: lead-time out of range");
  std::vector<double> values;
  for (const auto& coef : model.coefficients[d]) {
    double v = coef(0);
    for (std::size_t k = 0; k < features.size(); ++k)
      v += coef(static_cast<Eigen::Index>(k) + 1) * features[k];
    values.push_back(v);
  }
  return QuantileCurve(model.levels, std::move(values));
}

// Curves for every lead-time of one day.
inline std::vector<QuantileCurve> predict_day(const MarginalModel& model,
                                              const DayMatrix& day)
{
  if (day.dim() != model.dim())
    throw std::invalid_argument("predict_day: day dimension mismatch");
  std::vector<QuantileCurve> curves;
  std::vector<double> f(model.nfeatures());
  for (int d = 0; d < day.dim(); ++d) {
    for (int k = 0; k < model.nfeatures(); ++k)
      f[k] = day.features(d, k);
    curves.push_back(predict_curve(model, f, d));
  }
  return curves;
}

// PIT of observed powers, clipped to [eps, 1 - eps].
inline Eigen::MatrixXd pit(const std::vector<DayMatrix>& days,
                           const std::vector<std::vector<QuantileCurve>>& curves)
{
  if (days.size() != curves.size())
    throw std::invalid_argument("pit: one curve set per day required");
  if (days.empty())
    return {};
  const int dim = days.front().dim();
  Eigen::MatrixXd u(days.size(), dim);
  for (std::size_t t = 0; t < days.size(); ++t) {
    if (days[t].dim() != dim || static_cast<int>(curves[t].size()) != dim)
      throw std::invalid_argument("pit: dimension mismatch on day " +
                                  format_date(days[t].date));
    for (int d = 0; d < dim; ++d)
      u(static_cast<Eigen::Index>(t), d) =
        clip_unit(curves[t][d].cdf(days[t].power[d]));
  }
  return u;
}

inline void to_json(nlohmann::json& j, const MarginalModel& m)
{
  nlohmann::json coefs = nlohmann::json::array();
  for (const auto& per_d : m.coefficients) {
    nlohmann::json lv = nlohmann::json::array();
    for (const auto& c : per_d)
      lv.push_back(std::vector<double>(c.data(), c.data() + c.size()));
    coefs.push_back(lv);
  }
  j = nlohmann::json{ { "levels", m.levels },
                      { "feature_names", m.feature_names },
                      { "coefficients", coefs } };
}

inline void from_json(const nlohmann::json& j, MarginalModel& m)
{
  m.levels = j.at("levels").get<std::vector<double>>();
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  m.coefficients.clear();
  for (const auto& per_d : j.at("coefficients")) {
    std::vector<Eigen::VectorXd> lv;
    for (const auto& c : per_d) {
      const auto v = c.get<std::vector<double>>();
      if (static_cast<int>(v.size()) != m.nfeatures() + 1)
        throw std::invalid_argument("marginal model: coefficient length mismatch");
      lv.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()));
    }
    if (lv.size() != m.levels.size())
      throw std::invalid_argument("marginal model: level count mismatch");
    m.coefficients.push_back(std::move(lv));
  }
}

} // namespace pvmpi
