#pragma once

#include <array>
#include <cmath>
#include <iostream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/owens_t.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <nlohmann/json.hpp>

#include "pvmpi/stats.hpp"

namespace pvmpi {

// Declaration order is the tie-break order used by select_family.
enum class Family
{
  Independence,
  Gaussian,
  Clayton,
  Gumbel,
  Frank,
  SurvivalClayton,
  SurvivalGumbel,
};

inline constexpr std::array<Family, 7> kAllFamilies = {
  Family::Independence, Family::Gaussian,        Family::Clayton,
  Family::Gumbel,       Family::Frank,           Family::SurvivalClayton,
  Family::SurvivalGumbel,
};

inline std::string_view family_name(Family f)
{
  switch (f) {
    case Family::Independence:
      return "Independence";
    case Family::Gaussian:
      return "Gaussian";
    case Family::Clayton:
      return "Clayton";
    case Family::Gumbel:
      return "Gumbel";
    case Family::Frank:
      return "Frank";
    case Family::SurvivalClayton:
      return "SurvivalClayton";
    case Family::SurvivalGumbel:
      return "SurvivalGumbel";
  }
  return "?";
}

inline Family family_from_name(std::string_view name)
{
  for (Family f : kAllFamilies)
    if (family_name(f) == name)
      return f;
  throw std::invalid_argument("unknown copula family '" + std::string(name) +
                              "'");
}

// Parameter bounds used for estimation (not the full mathematical domain).
struct ParameterBounds
{
  double lower;
  double upper;
};

inline ParameterBounds estimation_bounds(Family f)
{
  switch (f) {
    case Family::Gaussian:
      return { -0.999, 0.999 };
    case Family::Clayton:
    case Family::SurvivalClayton:
      return { 1e-4, 28.0 };
    case Family::Gumbel:
    case Family::SurvivalGumbel:
      return { 1.0, 17.0 };
    case Family::Frank:
      return { -35.0, 35.0 };
    case Family::Independence:
      break;
  }
  return { 0.0, 0.0 };
}

namespace detail {

inline double frank_debye1(double theta)
{
  // (1/theta) * int_0^theta t / (e^t - 1) dt
  auto integrand = [](double t) {
    return std::abs(t) < 1e-12 ? 1.0 - t / 2.0 : t / std::expm1(t);
  };
  using boost::math::quadrature::gauss_kronrod;
  const double lo = std::min(0.0, theta), hi = std::max(0.0, theta);
  double integral = gauss_kronrod<double, 31>::integrate(integrand, lo, hi, 15,
                                                         1e-14);
  if (theta < 0)
    integral = -integral;
  return integral / theta;
}

inline double frank_tau(double theta)
{
  if (std::abs(theta) < 1e-8)
    return 0.0;
  return 1.0 + 4.0 * (frank_debye1(theta) - 1.0) / theta;
}

inline double bvn_cdf(double h, double k, double rho)
{
  // Owen's T representation of the bivariate normal CDF.
  if (h == 0.0)
    h = 1e-13;
  if (k == 0.0)
    k = 1e-13;
  const double r = std::sqrt(1.0 - rho * rho);
  const double ah = (k - rho * h) / (h * r);
  const double ak = (h - rho * k) / (k * r);
  const double beta = (h * k > 0.0) ? 0.0 : 0.5;
  return 0.5 * normal_cdf(h) + 0.5 * normal_cdf(k) -
         boost::math::owens_t(h, ah) - boost::math::owens_t(k, ak) - beta;
}

} // namespace detail

// One-parameter bivariate copula. Argument order is (u, v); hfunc1 is the
// conditional distribution of u given v, hfunc2 that of v given u. All
// families in the set are exchangeable, so hfunc2(u, v) = hfunc1(v, u).
class BivariateCopula
{
public:
  BivariateCopula() = default;

  BivariateCopula(Family family, double parameter = 0.0)
    : family_(family)
    , parameter_(family == Family::Independence ? 0.0 : parameter)
  {
    check_parameter();
  }

  Family family() const { return family_; }
  double parameter() const { return parameter_; }
  int npars() const { return family_ == Family::Independence ? 0 : 1; }

  // Log-likelihood recorded by the last fit (0 for hand-built copulas).
  double loglik() const { return loglik_; }
  void set_loglik(double ll) { loglik_ = ll; }
  std::size_t nobs() const { return nobs_; }
  void set_nobs(std::size_t n) { nobs_ = n; }

  double aic() const { return -2.0 * loglik_ + 2.0 * npars(); }

  double log_pdf(double u, double v) const
  {
    switch (family_) {
      case Family::Independence:
        return 0.0;
      case Family::Gaussian:
        return gaussian_log_pdf(u, v);
      case Family::Clayton:
        return clayton_log_pdf(u, v);
      case Family::Gumbel:
        return gumbel_log_pdf(u, v);
      case Family::Frank:
        return frank_log_pdf(u, v);
      case Family::SurvivalClayton:
        return clayton_log_pdf(1.0 - u, 1.0 - v);
      case Family::SurvivalGumbel:
        return gumbel_log_pdf(1.0 - u, 1.0 - v);
    }
    return NAN;
  }

  double pdf(double u, double v) const { return std::exp(log_pdf(u, v)); }

  double cdf(double u, double v) const
  {
    switch (family_) {
      case Family::Independence:
        return u * v;
      case Family::Gaussian:
        return detail::bvn_cdf(normal_quantile(u), normal_quantile(v),
                               parameter_);
      case Family::Clayton:
        return clayton_cdf(u, v);
      case Family::Gumbel:
        return gumbel_cdf(u, v);
      case Family::Frank:
        return frank_cdf(u, v);
      case Family::SurvivalClayton:
        return u + v - 1.0 + clayton_cdf(1.0 - u, 1.0 - v);
      case Family::SurvivalGumbel:
        return u + v - 1.0 + gumbel_cdf(1.0 - u, 1.0 - v);
    }
    return NAN;
  }

  // h(u | v) = dC(u, v) / dv
  double hfunc1(double u, double v) const
  {
    double h = NAN;
    switch (family_) {
      case Family::Independence:
        return u;
      case Family::Gaussian:
        h = gaussian_h(u, v);
        break;
      case Family::Clayton:
        h = clayton_h(u, v);
        break;
      case Family::Gumbel:
        h = gumbel_h(u, v);
        break;
      case Family::Frank:
        h = frank_h(u, v);
        break;
      case Family::SurvivalClayton:
        h = 1.0 - clayton_h(1.0 - u, 1.0 - v);
        break;
      case Family::SurvivalGumbel:
        h = 1.0 - gumbel_h(1.0 - u, 1.0 - v);
        break;
    }
    return std::clamp(h, 0.0, 1.0);
  }

  // h(v | u) = dC(u, v) / du
  double hfunc2(double u, double v) const { return hfunc1(v, u); }

  // Solves hfunc1(u, v) = w for u.
  double hinv1(double w, double v) const
  {
    switch (family_) {
      case Family::Independence:
        return w;
      case Family::Gaussian:
        return gaussian_hinv(w, v);
      case Family::Clayton:
        return clayton_hinv(w, v);
      case Family::Frank:
        return frank_hinv(w, v);
      case Family::SurvivalClayton:
        return 1.0 - clayton_hinv(1.0 - w, 1.0 - v);
      case Family::Gumbel:
      case Family::SurvivalGumbel:
        return hinv_bisect(w, v);
    }
    return NAN;
  }

  // Solves hfunc2(u, v) = w for v.
  double hinv2(double w, double u) const { return hinv1(w, u); }

  double tau() const { return parameter_to_tau(family_, parameter_); }

  static double parameter_to_tau(Family family, double parameter)
  {
    switch (family) {
      case Family::Independence:
        return 0.0;
      case Family::Gaussian:
        return 2.0 / M_PI * std::asin(parameter);
      case Family::Clayton:
      case Family::SurvivalClayton:
        return parameter / (parameter + 2.0);
      case Family::Gumbel:
      case Family::SurvivalGumbel:
        return 1.0 - 1.0 / parameter;
      case Family::Frank:
        return detail::frank_tau(parameter);
    }
    return NAN;
  }

  // Inverts the tau relation and clamps into the estimation bounds.
  static double tau_to_parameter(Family family, double tau)
  {
    const auto b = estimation_bounds(family);
    double par = 0.0;
    switch (family) {
      case Family::Independence:
        return 0.0;
      case Family::Gaussian:
        par = std::sin(M_PI / 2.0 * tau);
        break;
      case Family::Clayton:
      case Family::SurvivalClayton:
        par = 2.0 * tau / (1.0 - tau);
        break;
      case Family::Gumbel:
      case Family::SurvivalGumbel:
        par = 1.0 / (1.0 - tau);
        break;
      case Family::Frank: {
        if (std::abs(tau) < 1e-10)
          return 1e-4;
        if (tau >= detail::frank_tau(b.upper))
          return b.upper;
        if (tau <= detail::frank_tau(b.lower))
          return b.lower;
        auto f = [tau](double th) { return detail::frank_tau(th) - tau; };
        boost::math::tools::eps_tolerance<double> tol(40);
        std::uintmax_t iters = 100;
        auto r = tau > 0 ? boost::math::tools::toms748_solve(
                             f, 1e-6, b.upper, tol, iters)
                         : boost::math::tools::toms748_solve(
                             f, b.lower, -1e-6, tol, iters);
        return 0.5 * (r.first + r.second);
      }
    }
    if (!std::isfinite(par))
      par = b.upper;
    return std::clamp(par, b.lower, b.upper);
  }

  double loglik(std::span<const double> u, std::span<const double> v) const
  {
    double ll = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
      ll += log_pdf(u[i], v[i]);
    return ll;
  }

  std::string str() const
  {
    return std::string(family_name(family_)) + "(" +
           std::to_string(parameter_) + ")";
  }

private:
  void check_parameter() const
  {
    const double p = parameter_;
    bool ok = std::isfinite(p);
    switch (family_) {
      case Family::Independence:
        break;
      case Family::Gaussian:
        ok = ok && p > -1.0 && p < 1.0;
        break;
      case Family::Clayton:
      case Family::SurvivalClayton:
        ok = ok && p > 0.0;
        break;
      case Family::Gumbel:
      case Family::SurvivalGumbel:
        ok = ok && p >= 1.0;
        break;
      case Family::Frank:
        ok = ok && p != 0.0;
        break;
    }
    if (!ok)
      throw std::invalid_argument("parameter " + std::to_string(p) +
                                  " outside the domain of the " +
                                  std::string(family_name(family_)) +
                                  " copula");
  }

  // ---- Gaussian
  double gaussian_log_pdf(double u, double v) const
  {
    const double x = normal_quantile(u), y = normal_quantile(v);
    const double r = parameter_;
    const double one_m = 1.0 - r * r;
    return -0.5 * std::log(one_m) -
           (r * r * (x * x + y * y) - 2.0 * r * x * y) / (2.0 * one_m);
  }
  double gaussian_h(double u, double v) const
  {
    const double x = normal_quantile(u), y = normal_quantile(v);
    const double r = parameter_;
    return normal_cdf((x - r * y) / std::sqrt(1.0 - r * r));
  }
  double gaussian_hinv(double w, double v) const
  {
    const double r = parameter_;
    return normal_cdf(normal_quantile(w) * std::sqrt(1.0 - r * r) +
                      r * normal_quantile(v));
  }

  // ---- Clayton; uses expm1/log1p so that small parameters stay accurate
  double clayton_log_base(double u, double v) const
  {
    const double th = parameter_;
    return std::log1p(std::expm1(-th * std::log(u)) +
                      std::expm1(-th * std::log(v)));
  }
  double clayton_log_pdf(double u, double v) const
  {
    const double th = parameter_;
    return std::log1p(th) - (1.0 + th) * (std::log(u) + std::log(v)) -
           (2.0 + 1.0 / th) * clayton_log_base(u, v);
  }
  double clayton_cdf(double u, double v) const
  {
    return std::exp(-clayton_log_base(u, v) / parameter_);
  }
  double clayton_h(double u, double v) const
  {
    const double th = parameter_;
    return std::exp(-(th + 1.0) * std::log(v) -
                    (1.0 + 1.0 / th) * clayton_log_base(u, v));
  }
  double clayton_hinv(double w, double v) const
  {
    const double th = parameter_;
    const double log_a = -th / (1.0 + th) * (std::log(w) + (th + 1.0) * std::log(v));
    const double inner = std::expm1(log_a) - std::expm1(-th * std::log(v));
    return std::exp(-std::log1p(inner) / th);
  }

  // ---- Gumbel
  double gumbel_log_s(double x, double y) const
  {
    const double th = parameter_;
    const double hi = std::max(x, y), lo = std::min(x, y);
    return th * std::log(hi) + std::log1p(std::pow(lo / hi, th));
  }
  double gumbel_cdf(double u, double v) const
  {
    const double x = -std::log(u), y = -std::log(v);
    return std::exp(-std::exp(gumbel_log_s(x, y) / parameter_));
  }
  double gumbel_log_pdf(double u, double v) const
  {
    const double th = parameter_;
    const double x = -std::log(u), y = -std::log(v);
    const double log_s = gumbel_log_s(x, y);
    const double a = std::exp(log_s / th);
    return -a - std::log(u) - std::log(v) +
           (th - 1.0) * (std::log(x) + std::log(y)) +
           (2.0 / th - 2.0) * log_s + std::log(a + th - 1.0) - log_s / th;
  }
  double gumbel_h(double u, double v) const
  {
    const double th = parameter_;
    const double x = -std::log(u), y = -std::log(v);
    const double log_s = gumbel_log_s(x, y);
    const double a = std::exp(log_s / th);
    return std::exp(-a + (1.0 / th - 1.0) * log_s + (th - 1.0) * std::log(y) -
                    std::log(v));
  }

  // ---- Frank
  double frank_log_pdf(double u, double v) const
  {
    const double th = parameter_;
    const double g = -std::expm1(-th);
    const double denom =
      g - std::expm1(-th * u) * std::expm1(-th * v);
    return std::log(th * g) - th * (u + v) - 2.0 * std::log(std::abs(denom));
  }
  double frank_cdf(double u, double v) const
  {
    const double th = parameter_;
    return -std::log1p(std::expm1(-th * u) * std::expm1(-th * v) /
                       std::expm1(-th)) /
           th;
  }
  double frank_h(double u, double v) const
  {
    const double th = parameter_;
    const double a = std::expm1(-th * u), b = std::expm1(-th * v);
    return std::exp(-th * v) * a / (std::expm1(-th) + a * b);
  }
  double frank_hinv(double w, double v) const
  {
    const double th = parameter_;
    const double b = std::expm1(-th * v);
    const double a = w * std::expm1(-th) / (1.0 + b * (1.0 - w));
    return -std::log1p(a) / th;
  }

  // Monotone bisection on (0, 1); hfunc1 is nondecreasing in u.
  double hinv_bisect(double w, double v) const
  {
    double lo = 0.0, hi = 1.0, mid = 0.5;
    for (int it = 0; it < 200; ++it) {
      mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi)
        break;
      const double h = hfunc1(mid, v);
      if (h < w)
        lo = mid;
      else
        hi = mid;
    }
    const double u = std::clamp(mid, 1e-300, 1.0 - 1e-16);
    const double resid = hfunc1(u, v) - w;
    if (!std::isfinite(resid) ||
        (std::abs(resid) > 1e-9 && hi - lo > 4e-16))
      throw std::runtime_error("hinv: bisection did not converge for " +
                               str() + " at w=" + std::to_string(w) +
                               ", v=" + std::to_string(v) +
                               ", residual=" + std::to_string(resid));
    return u;
  }

  Family family_ = Family::Independence;
  double parameter_ = 0.0;
  double loglik_ = 0.0;
  std::size_t nobs_ = 0;
};

// Maximum-likelihood fit of one family. The search runs Brent's method over
// the estimation bounds, on the side of the Kendall's tau sign for Frank.
inline BivariateCopula fit_family(std::span<const double> u,
                                  std::span<const double> v,
                                  Family family)
{
  if (u.size() != v.size())
    throw std::invalid_argument("fit_family: samples differ in length");
  if (u.size() < 20)
    throw std::invalid_argument("fit_family: need at least 20 observations");
  if (family == Family::Independence) {
    BivariateCopula cop(family);
    cop.set_nobs(u.size());
    return cop;
  }

  const double tau = kendall_tau(u, v);
  auto bounds = estimation_bounds(family);
  if (family == Family::Frank) {
    if (tau >= 0)
      bounds.lower = 1e-4;
    else
      bounds.upper = -1e-4;
  }
  auto neg_ll = [&](double par) {
    const double ll = BivariateCopula(family, par).loglik(u, v);
    return std::isfinite(ll) ? -ll : std::numeric_limits<double>::max();
  };
  std::uintmax_t iters = 200;
  const auto [par, nll] = boost::math::tools::brent_find_minima(
    neg_ll, bounds.lower, bounds.upper, 40, iters);

  BivariateCopula cop;
  if (std::isfinite(nll) && nll < std::numeric_limits<double>::max()) {
    cop = BivariateCopula(family, par);
    cop.set_loglik(-nll);
  } else {
    std::clog << "warning: likelihood of " << family_name(family)
              << " copula is not finite; using tau inversion\n";
    cop = BivariateCopula(family,
                          BivariateCopula::tau_to_parameter(family, tau));
    cop.set_loglik(cop.loglik(u, v));
  }
  cop.set_nobs(u.size());
  return cop;
}

// Families allowed for a sample with the given Kendall's tau. Clayton and
// Gumbel (and their survival versions) only model positive dependence.
inline std::vector<Family> candidate_families(double tau)
{
  if (tau < 0)
    return { Family::Independence, Family::Gaussian, Family::Frank };
  return { kAllFamilies.begin(), kAllFamilies.end() };
}

// AIC-minimal fit across the candidate families. Candidates are visited in
// declaration order and only a strictly lower AIC replaces the incumbent, so
// ties go to fewer parameters and then to the earlier family.
inline BivariateCopula select_family(std::span<const double> u,
                                     std::span<const double> v)
{
  const double tau = kendall_tau(u, v);
  BivariateCopula best;
  bool have = false;
  for (Family f : candidate_families(tau)) {
    auto cop = fit_family(u, v, f);
    if (!have || cop.aic() < best.aic()) {
      best = cop;
      have = true;
    }
  }
  return best;
}

inline void to_json(nlohmann::json& j, const BivariateCopula& c)
{
  j = nlohmann::json{ { "family", std::string(family_name(c.family())) },
                      { "theta", c.parameter() } };
}

inline void from_json(const nlohmann::json& j, BivariateCopula& c)
{
  c = BivariateCopula(family_from_name(j.at("family").get<std::string>()),
                      j.value("theta", 0.0));
}

} // namespace pvmpi
