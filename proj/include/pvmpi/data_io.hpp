#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/beta.hpp>
#include <nlohmann/json.hpp>

#include "pvmpi/gaussian_copula.hpp"
#include "pvmpi/rvine.hpp"
#include "pvmpi/stats.hpp"

namespace pvmpi {

using Seconds = std::chrono::sys_seconds;
using Days = std::chrono::sys_days;

class DataError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct Record
{
  Seconds timestamp;
  double power = 0.0;
  std::vector<double> features;
};

// One calendar day restricted to the hour window; rows are lead-times.
struct DayMatrix
{
  Days date;
  std::vector<double> power;   // normalized, in [0,1]
  Eigen::MatrixXd features;    // D x K

  int dim() const { return static_cast<int>(power.size()); }
};

struct SchemaConfig
{
  std::string timestamp_column = "timestamp";
  std::string power_column = "power";
  std::vector<std::string> feature_columns;
};

// ------- timestamps

inline std::string format_date(Days d)
{
  const std::chrono::year_month_day ymd{ d };
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()));
  return buf;
}

inline std::string format_timestamp(Seconds ts)
{
  const auto day = std::chrono::floor<std::chrono::days>(ts);
  const auto secs = (ts - day).count();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%sT%02lld:%02lld:%02lldZ",
                format_date(day).c_str(), static_cast<long long>(secs / 3600),
                static_cast<long long>(secs / 60 % 60),
                static_cast<long long>(secs % 60));
  return buf;
}

// Accepts YYYY-MM-DD, YYYY-MM-DD[T ]HH:MM[:SS] with optional Z or +HH:MM.
inline std::optional<Seconds> parse_timestamp(std::string_view text)
{
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  const std::string str(text);
  int consumed = 0;
  if (std::sscanf(str.c_str(), "%4d-%2d-%2d%n", &y, &mo, &d, &consumed) != 3 ||
      consumed != 10)
    return std::nullopt;
  std::string_view rest = text.substr(10);
  if (!rest.empty()) {
    if (rest[0] != 'T' && rest[0] != ' ')
      return std::nullopt;
    const std::string tail(rest.substr(1));
    int n = 0;
    if (std::sscanf(tail.c_str(), "%2d:%2d%n", &h, &mi, &n) != 2 || n != 5)
      return std::nullopt;
    rest = rest.substr(1 + n);
    if (!rest.empty() && rest[0] == ':') {
      const std::string sec(rest.substr(1));
      int m = 0;
      if (std::sscanf(sec.c_str(), "%2d%n", &s, &m) != 1 || m != 2)
        return std::nullopt;
      rest = rest.substr(1 + m);
    }
    int offset = 0;
    if (rest == "Z" || rest.empty()) {
    } else if ((rest[0] == '+' || rest[0] == '-') && rest.size() == 6) {
      int oh = 0, om = 0;
      const std::string off(rest.substr(1));
      if (std::sscanf(off.c_str(), "%2d:%2d", &oh, &om) != 2)
        return std::nullopt;
      offset = (rest[0] == '+' ? 1 : -1) * (oh * 3600 + om * 60);
    } else {
      return std::nullopt;
    }
    s -= offset;
  }
  const std::chrono::year_month_day ymd{ std::chrono::year(y),
                                         std::chrono::month(mo),
                                         std::chrono::day(d) };
  if (!ymd.ok() || h > 23 || mi > 59)
    return std::nullopt;
  return Seconds(Days(ymd)) + std::chrono::seconds(h * 3600 + mi * 60 + s);
}

inline Days parse_date(std::string_view text)
{
  auto ts = parse_timestamp(text);
  if (!ts)
    throw DataError("unparseable date '" + std::string(text) + "'");
  return std::chrono::floor<std::chrono::days>(*ts);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line)
{
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ','))
    out.push_back(cell);
  if (!line.empty() && line.back() == ',')
    out.emplace_back();
  for (auto& c : out) {
    while (!c.empty() && (c.back() == '\r' || c.back() == ' '))
      c.pop_back();
    while (!c.empty() && c.front() == ' ')
      c.erase(c.begin());
  }
  return out;
}

inline std::optional<double> parse_double(const std::string& s)
{
  if (s.empty())
    return std::nullopt;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (*b == '+')
    ++b;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || !std::isfinite(v))
    return std::nullopt;
  return v;
}

inline std::string fmt_double(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

} // namespace detail

// ------- CSV ingestion

inline std::vector<Record> read_csv(std::istream& in, const SchemaConfig& schema,
                                    const std::string& source = "<stream>")
{
  std::string line;
  if (!std::getline(in, line))
    throw DataError(source + ": empty file");
  const auto header = detail::split_csv_line(line);
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw DataError(source + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto ts_col = column(schema.timestamp_column);
  const auto p_col = column(schema.power_column);
  std::vector<std::size_t> f_cols;
  for (const auto& f : schema.feature_columns)
    f_cols.push_back(column(f));

  std::vector<std::pair<Record, std::size_t>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r")
      continue;
    const auto cells = detail::split_csv_line(line);
    const auto where = source + " row " + std::to_string(lineno);
    if (cells.size() != header.size())
      throw DataError(where + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(cells.size()));
    Record rec;
    auto ts = parse_timestamp(cells[ts_col]);
    if (!ts)
      throw DataError(where + ": unparseable timestamp '" + cells[ts_col] + "'");
    rec.timestamp = *ts;
    auto p = detail::parse_double(cells[p_col]);
    if (!p)
      throw DataError(where + ": non-numeric " + schema.power_column + " '" +
                      cells[p_col] + "'");
    rec.power = *p;
    for (std::size_t k = 0; k < f_cols.size(); ++k) {
      auto v = detail::parse_double(cells[f_cols[k]]);
      if (!v)
        throw DataError(where + ": non-numeric " + schema.feature_columns[k] +
                        " '" + cells[f_cols[k]] + "'");
      rec.features.push_back(*v);
    }
    rows.emplace_back(std::move(rec), lineno);
  }

  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.first.timestamp < b.first.timestamp;
  });
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].first.timestamp == rows[i - 1].first.timestamp)
      throw DataError(source + ": duplicate timestamp " +
                      format_timestamp(rows[i].first.timestamp) + " in rows " +
                      std::to_string(std::min(rows[i - 1].second, rows[i].second)) +
                      " and " +
                      std::to_string(std::max(rows[i - 1].second, rows[i].second)));
  std::vector<Record> out;
  out.reserve(rows.size());
  for (auto& r : rows)
    out.push_back(std::move(r.first));
  return out;
}

inline std::vector<Record> load_csv(const std::string& path,
                                    const SchemaConfig& schema)
{
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot open '" + path + "'");
  return read_csv(in, schema, path);
}

// ------- windowing

struct WindowReport
{
  std::vector<DayMatrix> days;
  std::size_t dropped_days = 0; // incomplete hour window
  std::size_t clamped_values = 0;
};

// Normalizes by capacity (clamping to [0,1]) and keeps calendar days whose
// hours hour_start..hour_end (inclusive) are all present.
inline WindowReport normalize_and_window(const std::vector<Record>& records,
                                         double capacity, int hour_start,
                                         int hour_end)
{
  if (!(capacity > 0.0))
    throw DataError("capacity must be positive");
  if (hour_start < 0 || hour_end > 23 || hour_end < hour_start)
    throw DataError("hour window " + std::to_string(hour_start) + ".." +
                    std::to_string(hour_end) + " is empty or invalid");
  const int d = hour_end - hour_start + 1;

  struct Slot
  {
    std::vector<bool> have;
    std::vector<const Record*> rec;
  };
  std::map<Days, Slot> by_day;
  std::size_t nfeat = records.empty() ? 0 : records.front().features.size();
  for (const auto& r : records) {
    if (r.features.size() != nfeat)
      throw DataError("feature vector length changes at " +
                      format_timestamp(r.timestamp));
    const auto day = std::chrono::floor<std::chrono::days>(r.timestamp);
    const auto secs = (r.timestamp - day).count();
    if (secs % 3600 != 0)
      continue; // off the hourly grid
    const int hour = static_cast<int>(secs / 3600);
    if (hour < hour_start || hour > hour_end)
      continue;
    auto& slot = by_day[day];
    if (slot.have.empty()) {
      slot.have.assign(d, false);
      slot.rec.assign(d, nullptr);
    }
    slot.have[hour - hour_start] = true;
    slot.rec[hour - hour_start] = &r;
  }

  WindowReport out;
  for (const auto& [day, slot] : by_day) {
    if (std::find(slot.have.begin(), slot.have.end(), false) != slot.have.end()) {
      ++out.dropped_days;
      continue;
    }
    DayMatrix m;
    m.date = day;
    m.power.resize(d);
    m.features.resize(d, static_cast<Eigen::Index>(nfeat));
    for (int h = 0; h < d; ++h) {
      const double p = slot.rec[h]->power / capacity;
      if (p < 0.0 || p > 1.0)
        ++out.clamped_values;
      m.power[h] = std::clamp(p, 0.0, 1.0);
      for (std::size_t k = 0; k < nfeat; ++k)
        m.features(h, static_cast<Eigen::Index>(k)) = slot.rec[h]->features[k];
    }
    out.days.push_back(std::move(m));
  }
  if (out.dropped_days > 0)
    std::clog << "info: dropped " << out.dropped_days
              << " day(s) with an incomplete hour window\n";
  if (out.clamped_values > 0)
    std::clog << "warning: clamped " << out.clamped_values
              << " power value(s) into [0, capacity]\n";
  return out;
}

// Days on or before train_end form the training partition.
inline std::pair<std::vector<DayMatrix>, std::vector<DayMatrix>>
split(const std::vector<DayMatrix>& days, Days train_end)
{
  std::vector<DayMatrix> train, eval;
  for (const auto& d : days)
    (d.date <= train_end ? train : eval).push_back(d);
  if (train.empty())
    throw DataError("split at " + format_date(train_end) +
                    " leaves the training partition empty");
  if (eval.empty())
    throw DataError("split at " + format_date(train_end) +
                    " leaves the evaluation partition empty");
  return { std::move(train), std::move(eval) };
}

// Power matrix (T x D) of a set of days.
inline Eigen::MatrixXd power_matrix(const std::vector<DayMatrix>& days)
{
  if (days.empty())
    return {};
  Eigen::MatrixXd p(days.size(), days.front().dim());
  for (std::size_t t = 0; t < days.size(); ++t)
    for (int d = 0; d < days[t].dim(); ++d)
      p(static_cast<Eigen::Index>(t), d) = days[t].power[d];
  return p;
}

// Writes days as hourly records (power in plant units = p * capacity).
inline void write_days_csv(std::ostream& out, const std::vector<DayMatrix>& days,
                           int hour_start, double capacity = 1.0)
{
  const auto nfeat = days.empty() ? 0 : days.front().features.cols();
  out << "timestamp,power";
  for (Eigen::Index k = 0; k < nfeat; ++k)
    out << ",f" << (k + 1);
  out << '\n';
  for (const auto& day : days)
    for (int h = 0; h < day.dim(); ++h) {
      const auto ts = Seconds(day.date) + std::chrono::hours(hour_start + h);
      out << format_timestamp(ts) << ','
          << detail::fmt_double(day.power[h] * capacity);
      for (Eigen::Index k = 0; k < nfeat; ++k)
        out << ',' << detail::fmt_double(day.features(h, k));
      out << '\n';
    }
}

inline SchemaConfig default_schema(int nfeat)
{
  SchemaConfig s;
  for (int k = 1; k <= nfeat; ++k)
    s.feature_columns.push_back("f" + std::to_string(k));
  return s;
}

// ------- synthetic truth

// Bounded marginals: p = k_t * profile(hour) * BetaQuantile(u; a, b), with a
// daily clearness feature k_t ~ U(clearness_min, clearness_max) exposed as
// feature f1 at every hour. The conditional quantiles are linear in k_t.
//
// With knot_levels/knot_values set, the quantile function is instead the
// piecewise-linear curve through (0,0), (level_m, k * profile * value_m), (1,1);
// every level's quantile is then affine in k_t.
struct SyntheticMarginal
{
  double beta_a = 2.0;
  double beta_b = 2.0;
  double clearness_min = 0.3;
  double clearness_max = 1.0;
  int hour_start = 7;
  std::vector<double> knot_levels;
  std::vector<double> knot_values;

  // Clear-sky shape between 06:00 and 19:00, floored at 0.05.
  static double profile(int hour)
  {
    const double x = std::sin(M_PI * (hour + 0.5 - 6.0) / 13.0);
    return std::max(0.05, x);
  }

  double quantile(double u, double clearness, int hour) const
  {
    const double scale = clearness * profile(hour);
    if (knot_levels.empty())
      return scale * boost::math::ibeta_inv(beta_a, beta_b, u);
    double a0 = 0.0, q0 = 0.0;
    for (std::size_t m = 0; m <= knot_levels.size(); ++m) {
      const double a1 = m < knot_levels.size() ? knot_levels[m] : 1.0;
      const double q1 = m < knot_levels.size() ? scale * knot_values[m] : 1.0;
      if (u <= a1)
        return q0 + (q1 - q0) * (u - a0) / (a1 - a0);
      a0 = a1;
      q0 = q1;
    }
    return 1.0;
  }
};

struct TruthSpec
{
  std::variant<GaussianCopulaModel, RVineModel> copula;
  SyntheticMarginal marginal;
  std::string start_date = "2012-04-01";

  int dim() const
  {
    return std::visit([](const auto& m) { return static_cast<int>(m.dim()); },
                      copula);
  }
};

inline TruthSpec truth_from_json(const nlohmann::json& j)
{
  TruthSpec spec{ GaussianCopulaModel(Eigen::MatrixXd::Identity(1, 1)), {}, {} };
  const auto& cop = j.at("copula");
  const auto type = cop.at("type").get<std::string>();
  if (type == "gaussian") {
    const auto rows = cop.at("corr").get<std::vector<std::vector<double>>>();
    const auto d = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd corr(d, d);
    for (Eigen::Index r = 0; r < d; ++r) {
      if (static_cast<Eigen::Index>(rows[r].size()) != d)
        throw DataError("truth spec: corr must be square");
      for (Eigen::Index c = 0; c < d; ++c)
        corr(r, c) = rows[r][c];
    }
    try {
      spec.copula = GaussianCopulaModel(corr);
    } catch (const std::invalid_argument& e) {
      throw DataError(std::string("truth spec: ") + e.what());
    }
  } else if (type == "rvine") {
    spec.copula = cop.at("model").get<RVineModel>();
  } else {
    throw DataError("truth spec: unknown copula type '" + type + "'");
  }
  if (j.contains("marginal")) {
    const auto& m = j["marginal"];
    spec.marginal.beta_a = m.value("beta_a", spec.marginal.beta_a);
    spec.marginal.beta_b = m.value("beta_b", spec.marginal.beta_b);
    spec.marginal.clearness_min = m.value("clearness_min", spec.marginal.clearness_min);
    spec.marginal.clearness_max = m.value("clearness_max", spec.marginal.clearness_max);
    spec.marginal.hour_start = m.value("hour_start", spec.marginal.hour_start);
    if (m.contains("knots")) {
      auto& mg = spec.marginal;
      mg.knot_levels = m["knots"].at("levels").get<std::vector<double>>();
      mg.knot_values = m["knots"].at("values").get<std::vector<double>>();
      const auto& a = mg.knot_levels;
      const auto& v = mg.knot_values;
      if (a.empty() || a.size() != v.size() || a.front() <= 0.0 || a.back() >= 1.0 ||
          std::adjacent_find(a.begin(), a.end(), std::greater_equal<>()) != a.end() ||
          std::adjacent_find(v.begin(), v.end(), std::greater<>()) != v.end() ||
          v.front() < 0.0 || v.back() > 1.0)
        throw DataError("truth spec: knots need increasing levels in (0,1) and "
                        "nondecreasing values in [0,1]");
    }
  }
  spec.start_date = j.value("start_date", spec.start_date);
  return spec;
}

// Copula uniforms (n_days x D) behind a synthetic dataset.
inline Eigen::MatrixXd synth_uniforms(std::uint64_t seed, int n_days,
                                      const TruthSpec& truth)
{
  const auto s = derive_seed(seed, "synth-copula");
  return std::visit([&](const auto& m) { return m.sample(n_days, s); },
                    truth.copula);
}

inline std::vector<DayMatrix> synth_generate(std::uint64_t seed, int n_days,
                                             int d, const TruthSpec& truth)
{
  if (n_days < 1)
    throw DataError("synth: n_days must be positive");
  if (truth.dim() != d)
    throw DataError("synth: truth copula has dimension " +
                    std::to_string(truth.dim()) + ", window has " +
                    std::to_string(d));
  const Eigen::MatrixXd u = synth_uniforms(seed, n_days, truth);
  Rng rng(derive_seed(seed, "synth-clearness"));
  const Days start = parse_date(truth.start_date);
  const auto& mg = truth.marginal;
  std::vector<DayMatrix> days;
  days.reserve(n_days);
  for (int t = 0; t < n_days; ++t) {
    const double k =
      mg.clearness_min + (mg.clearness_max - mg.clearness_min) * rng.uniform();
    DayMatrix day;
    day.date = start + std::chrono::days(t);
    day.power.resize(d);
    day.features = Eigen::MatrixXd::Constant(d, 1, k);
    for (int h = 0; h < d; ++h)
      day.power[h] = std::clamp(mg.quantile(u(t, h), k, mg.hour_start + h), 0.0, 1.0);
    days.push_back(std::move(day));
  }
  return days;
}

} // namespace pvmpi
