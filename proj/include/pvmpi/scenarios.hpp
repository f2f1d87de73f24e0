#pragma once

#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pvmpi/data_io.hpp"
#include "pvmpi/marginals.hpp"

namespace pvmpi {

// S sampled trajectories (rows) in normalized power space for one day.
struct ScenarioSet
{
  Days date{};
  Eigen::MatrixXd values; // S x D, entries in [0,1]
  std::string generator;
  std::uint64_t seed = 0;

  Eigen::Index size() const { return values.rows(); }
  Eigen::Index dim() const { return values.cols(); }
};

// Anything with dim() and sample(n, seed) -> n x D uniforms.
template <typename M>
concept CopulaSampler = requires(const M& m, Eigen::Index n, std::uint64_t s) {
  { m.dim() };
  { m.sample(n, s) } -> std::convertible_to<Eigen::MatrixXd>;
};

// Maps copula uniforms through the inverse marginal CDFs of the day.
inline Eigen::MatrixXd to_power_space(const Eigen::MatrixXd& u,
                                      const std::vector<QuantileCurve>& curves)
{
  if (static_cast<Eigen::Index>(curves.size()) != u.cols())
    throw std::invalid_argument("scenarios: need one quantile curve per dimension");
  Eigen::MatrixXd p(u.rows(), u.cols());
  for (Eigen::Index s = 0; s < u.rows(); ++s)
    for (Eigen::Index d = 0; d < u.cols(); ++d)
      p(s, d) = curves[d].inverse_cdf(u(s, d));
  return p;
}

template <CopulaSampler Model>
ScenarioSet generate(const Model& model, const std::vector<QuantileCurve>& curves,
                     Eigen::Index n_scenarios, std::uint64_t seed,
                     std::string generator = {})
{
  if (static_cast<Eigen::Index>(curves.size()) != static_cast<Eigen::Index>(model.dim()))
    throw std::invalid_argument(
      "scenarios: model dimension " + std::to_string(model.dim()) +
      " does not match " + std::to_string(curves.size()) + " curves");
  ScenarioSet set;
  set.values = to_power_space(model.sample(n_scenarios, seed), curves);
  set.generator = std::move(generator);
  set.seed = seed;
  return set;
}

// CSV: day,scenario,h1..hD (scenario is 1-based).
inline void write_scenarios(std::ostream& out, const std::vector<ScenarioSet>& sets,
                            Eigen::Index dim = -1)
{
  if (dim < 0)
    dim = sets.empty() ? 0 : sets.front().dim();
  out << "day,scenario";
  for (Eigen::Index d = 1; d <= dim; ++d)
    out << ",h" << d;
  out << '\n';
  for (const auto& set : sets) {
    if (set.dim() != dim)
      throw std::invalid_argument("write_scenarios: inconsistent dimension");
    const auto day = format_date(set.date);
    for (Eigen::Index s = 0; s < set.size(); ++s) {
      out << day << ',' << (s + 1);
      for (Eigen::Index d = 0; d < dim; ++d)
        out << ',' << detail::fmt_double(set.values(s, d));
      out << '\n';
    }
  }
}

inline std::vector<ScenarioSet> read_scenarios(std::istream& in,
                                               const std::string& source = "<stream>")
{
  std::string line;
  if (!std::getline(in, line))
    throw DataError(source + ": empty scenario file");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "day" || header[1] != "scenario")
    throw DataError(source + ": expected header day,scenario,h1..hD");
  const auto dim = static_cast<Eigen::Index>(header.size() - 2);
  std::vector<ScenarioSet> sets;
  std::vector<std::vector<double>> rows;
  Days current{};
  auto flush = [&] {
    if (rows.empty())
      return;
    ScenarioSet s;
    s.date = current;
    s.values.resize(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (Eigen::Index d = 0; d < dim; ++d)
        s.values(static_cast<Eigen::Index>(i), d) = rows[i][d];
    sets.push_back(std::move(s));
    rows.clear();
  };
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty())
      continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError(source + " row " + std::to_string(lineno) +
                      ": wrong number of fields");
    const Days day = parse_date(cells[0]);
    if (!rows.empty() && day != current)
      flush();
    current = day;
    std::vector<double> v;
    for (Eigen::Index d = 0; d < dim; ++d) {
      auto x = detail::parse_double(cells[2 + d]);
      if (!x)
        throw DataError(source + " row " + std::to_string(lineno) +
                        ": non-numeric value");
      v.push_back(*x);
    }
    rows.push_back(std::move(v));
  }
  flush();
  return sets;
}

} // namespace pvmpi
