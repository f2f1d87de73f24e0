#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <iostream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "pvmpi/data_io.hpp"
#include "pvmpi/marginals.hpp"

namespace pvmpi {

struct Box
{
  std::vector<double> lower;
  std::vector<double> upper;
  double coverage = 0.0; // share of scenarios fully inside

  std::size_t dim() const { return lower.size(); }
};

// Share of rows with lower_d <= x_d <= upper_d for every d.
inline double coverage_count(const Eigen::MatrixXd& scenarios,
                             std::span<const double> lower,
                             std::span<const double> upper)
{
  if (static_cast<Eigen::Index>(lower.size()) != scenarios.cols() ||
      upper.size() != lower.size())
    throw std::invalid_argument("coverage_count: dimension mismatch");
  if (scenarios.rows() == 0)
    return 0.0;
  Eigen::Index inside = 0;
  for (Eigen::Index s = 0; s < scenarios.rows(); ++s) {
    bool in = true;
    for (Eigen::Index d = 0; d < scenarios.cols() && in; ++d)
      in = scenarios(s, d) >= lower[d] && scenarios(s, d) <= upper[d];
    inside += in;
  }
  return static_cast<double>(inside) / static_cast<double>(scenarios.rows());
}

inline double volume(std::span<const double> lower, std::span<const double> upper)
{
  if (lower.size() != upper.size())
    throw std::invalid_argument("volume: dimension mismatch");
  double v = 1.0;
  for (std::size_t d = 0; d < lower.size(); ++d) {
    if (!(lower[d] <= upper[d]))
      throw std::invalid_argument("volume: lower bound above upper bound");
    v *= upper[d] - lower[d];
  }
  return v;
}

inline double volume(const Box& b) { return volume(b.lower, b.upper); }

// Adjusted-interval widening from a given initial box. Returns the first box
// (initial one included) whose scenario coverage reaches alpha. Each round
// moves every upper bound to the next scenario value above it and every
// lower bound to the next one below it, per dimension.
inline Box widen_to_coverage(const Eigen::MatrixXd& scenarios,
                             std::vector<double> lower, std::vector<double> upper,
                             double alpha)
{
  const Eigen::Index n = scenarios.rows(), dim = scenarios.cols();
  if (n == 0)
    throw std::invalid_argument("build_mpi: empty scenario set");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("build_mpi: alpha must be in (0,1)");
  if (static_cast<Eigen::Index>(lower.size()) != dim ||
      static_cast<Eigen::Index>(upper.size()) != dim)
    throw std::invalid_argument("build_mpi: box dimension mismatch");

  // Per dimension: scenario indices sorted by value.
  std::vector<std::vector<Eigen::Index>> order(dim);
  std::vector<Eigen::Index> outside(n, 0);
  // [lo_pos, hi_pos) is the sorted range currently inside in dimension d
  std::vector<Eigen::Index> lo_pos(dim), hi_pos(dim);
  for (Eigen::Index d = 0; d < dim; ++d) {
    auto& o = order[d];
    o.resize(n);
    std::iota(o.begin(), o.end(), Eigen::Index{ 0 });
    std::sort(o.begin(), o.end(), [&](Eigen::Index a, Eigen::Index b) {
      return scenarios(a, d) < scenarios(b, d);
    });
    Eigen::Index a = 0;
    while (a < n && scenarios(o[a], d) < lower[d])
      ++a;
    Eigen::Index b = a;
    while (b < n && scenarios(o[b], d) <= upper[d])
      ++b;
    lo_pos[d] = a;
    hi_pos[d] = b;
    for (Eigen::Index i = 0; i < a; ++i)
      ++outside[o[i]];
    for (Eigen::Index i = b; i < n; ++i)
      ++outside[o[i]];
  }
  Eigen::Index covered = std::count(outside.begin(), outside.end(), 0);
  const double target = alpha * static_cast<double>(n) - 1e-9;

  auto admit = [&](Eigen::Index s) {
    if (--outside[s] == 0)
      ++covered;
  };

  while (static_cast<double>(covered) < target) {
    const Eigen::Index before = covered;
    bool moved = false;
    for (Eigen::Index d = 0; d < dim; ++d) {
      const auto& o = order[d];
      if (hi_pos[d] < n) {
        const double v = scenarios(o[hi_pos[d]], d);
        upper[d] = v;
        while (hi_pos[d] < n && scenarios(o[hi_pos[d]], d) == v)
          admit(o[hi_pos[d]++]);
        moved = true;
      }
      if (lo_pos[d] > 0) {
        const double v = scenarios(o[lo_pos[d] - 1], d);
        lower[d] = v;
        while (lo_pos[d] > 0 && scenarios(o[lo_pos[d] - 1], d) == v)
          admit(o[--lo_pos[d]]);
        moved = true;
      }
    }
    assert(covered >= before);
    (void)before;
    if (!moved)
      break; // envelope reached, coverage is 1
  }
  Box box{ std::move(lower), std::move(upper), 0.0 };
  box.coverage = static_cast<double>(covered) / static_cast<double>(n);
  return box;
}

// Initial box: central univariate interval of level alpha per lead-time,
// i.e. quantiles (1-alpha)/2 and (1+alpha)/2, clamped to [0,1].
inline Box build_mpi(const Eigen::MatrixXd& scenarios,
                     const std::vector<QuantileCurve>& upi_curves, double alpha)
{
  if (static_cast<Eigen::Index>(upi_curves.size()) != scenarios.cols())
    throw std::invalid_argument("build_mpi: need one curve per dimension");
  std::vector<double> lo, hi;
  for (const auto& c : upi_curves) {
    lo.push_back(std::clamp(c.inverse_cdf((1.0 - alpha) / 2.0), 0.0, 1.0));
    hi.push_back(std::clamp(c.inverse_cdf((1.0 + alpha) / 2.0), 0.0, 1.0));
  }
  return widen_to_coverage(scenarios, std::move(lo), std::move(hi), alpha);
}

// Central univariate intervals (no widening); the per-lead-time baseline.
inline Box upi_box(const std::vector<QuantileCurve>& curves, double alpha)
{
  Box b;
  for (const auto& c : curves) {
    b.lower.push_back(std::clamp(c.inverse_cdf((1.0 - alpha) / 2.0), 0.0, 1.0));
    b.upper.push_back(std::clamp(c.inverse_cdf((1.0 + alpha) / 2.0), 0.0, 1.0));
  }
  return b;
}

struct MPISet
{
  Days date{};
  std::vector<double> alphas;
  std::vector<Box> boxes;
};

// Builds all levels in increasing alpha; each box is replaced by its hull
// with the previous level's box so that boxes are nested.
inline MPISet build_mpi_set(const Eigen::MatrixXd& scenarios,
                            const std::vector<QuantileCurve>& curves,
                            std::vector<double> alphas, Days date = {})
{
  if (!std::is_sorted(alphas.begin(), alphas.end()))
    throw std::invalid_argument("build_mpi_set: alphas must be increasing");
  MPISet set{ date, std::move(alphas), {} };
  for (double a : set.alphas) {
    Box b = build_mpi(scenarios, curves, a);
    if (!set.boxes.empty()) {
      const Box& prev = set.boxes.back();
      bool grew = false;
      for (std::size_t d = 0; d < b.dim(); ++d) {
        if (prev.lower[d] < b.lower[d]) {
          b.lower[d] = prev.lower[d];
          grew = true;
        }
        if (prev.upper[d] > b.upper[d]) {
          b.upper[d] = prev.upper[d];
          grew = true;
        }
      }
      if (grew)
        b.coverage = coverage_count(scenarios, b.lower, b.upper);
    }
    set.boxes.push_back(std::move(b));
  }
  return set;
}

// CSV: day,alpha,dim,lower,upper (dim is 1-based).
inline void write_mpi_csv(std::ostream& out, const std::vector<MPISet>& sets)
{
  out << "day,alpha,dim,lower,upper\n";
  for (const auto& s : sets) {
    const auto day = format_date(s.date);
    for (std::size_t i = 0; i < s.alphas.size(); ++i)
      for (std::size_t d = 0; d < s.boxes[i].dim(); ++d)
        out << day << ',' << detail::fmt_double(s.alphas[i]) << ',' << (d + 1)
            << ',' << detail::fmt_double(s.boxes[i].lower[d]) << ','
            << detail::fmt_double(s.boxes[i].upper[d]) << '\n';
  }
}

inline std::vector<MPISet> read_mpi_csv(std::istream& in,
                                        const std::string& source = "<stream>")
{
  std::string line;
  if (!std::getline(in, line) ||
      detail::split_csv_line(line) !=
        std::vector<std::string>{ "day", "alpha", "dim", "lower", "upper" })
    throw DataError(source + ": expected header day,alpha,dim,lower,upper");
  std::vector<MPISet> sets;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty())
      continue;
    const auto c = detail::split_csv_line(line);
    auto bad = [&] {
      return DataError(source + " row " + std::to_string(lineno) + ": malformed");
    };
    if (c.size() != 5)
      throw bad();
    const Days day = parse_date(c[0]);
    auto alpha = detail::parse_double(c[1]);
    auto dim = detail::parse_double(c[2]);
    auto lo = detail::parse_double(c[3]);
    auto hi = detail::parse_double(c[4]);
    if (!alpha || !dim || !lo || !hi)
      throw bad();
    if (sets.empty() || sets.back().date != day)
      sets.push_back(MPISet{ day, {}, {} });
    auto& s = sets.back();
    if (s.alphas.empty() || s.alphas.back() != *alpha) {
      s.alphas.push_back(*alpha);
      s.boxes.emplace_back();
    }
    s.boxes.back().lower.push_back(*lo);
    s.boxes.back().upper.push_back(*hi);
  }
  return sets;
}

} // namespace pvmpi
