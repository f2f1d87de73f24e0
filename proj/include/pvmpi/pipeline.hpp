#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "pvmpi/data_io.hpp"
#include "pvmpi/gaussian_copula.hpp"
#include "pvmpi/marginals.hpp"
#include "pvmpi/mpi.hpp"
#include "pvmpi/plot.hpp"
#include "pvmpi/rvine.hpp"
#include "pvmpi/scenarios.hpp"
#include "pvmpi/scoring.hpp"

namespace pvmpi {

namespace fs = std::filesystem;

class ConfigError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct SynthConfig
{
  std::string truth; // path to a truth spec JSON
  int n_days = 0;

  bool enabled() const { return !truth.empty(); }
};

struct RunConfig
{
  std::string data;
  double capacity = 1.0;
  int hour_start = 7;
  int hour_end = 17;
  std::string train_end;       // empty: first train_fraction of the days
  double train_fraction = 0.6;
  std::vector<std::string> feature_columns;
  std::vector<double> levels = default_levels();
  std::vector<double> alphas = default_levels();
  int scenarios = 500;
  double gamma = 0.5;
  Eigen::MatrixXd weights; // empty means w_ij = 1
  std::uint64_t seed = 1;
  std::vector<std::string> copulas{ "gaussian", "rvine" };
  std::string out = "out";
  SynthConfig synth;

  int dim() const { return hour_end - hour_start + 1; }

  fs::path out_dir() const { return fs::path(out); }
  fs::path data_path() const
  {
    return data.empty() ? out_dir() / "data.csv" : fs::path(data);
  }
};

inline std::vector<std::string> parse_copula_choice(const std::string& s)
{
  if (s == "both")
    return { "gaussian", "rvine" };
  if (s == "gaussian" || s == "rvine")
    return { s };
  throw ConfigError("copula must be gaussian, rvine or both (got '" + s + "')");
}

// Relative paths inside the config resolve against the config's directory,
// except "out" which is relative to the working directory.
inline RunConfig config_from_json(const nlohmann::json& j, const fs::path& base = {})
{
  static const std::vector<std::string> known{
    "data",   "capacity", "hour_start", "hour_end", "train_end",
    "train_fraction", "feature_columns", "levels", "alphas", "S",
    "gamma",  "weights",  "seed",       "copula",   "out", "synth"
  };
  if (!j.is_object())
    throw ConfigError("config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ConfigError("unknown config key '" + k + "'");

  auto resolve = [&](const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute() || base.empty())
      return p;
    return (base / p).lexically_normal().string();
  };

  RunConfig c;
  try {
    c.data = resolve(j.value("data", c.data));
    c.capacity = j.value("capacity", c.capacity);
    c.hour_start = j.value("hour_start", c.hour_start);
    c.hour_end = j.value("hour_end", c.hour_end);
    c.train_end = j.value("train_end", c.train_end);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.feature_columns = j.value("feature_columns", c.feature_columns);
    c.levels = j.value("levels", c.levels);
    c.alphas = j.value("alphas", c.alphas);
    c.scenarios = j.value("S", c.scenarios);
    c.gamma = j.value("gamma", c.gamma);
    c.seed = j.value("seed", c.seed);
    c.out = j.value("out", c.out);
    if (j.contains("copula"))
      c.copulas = parse_copula_choice(j["copula"].get<std::string>());
    if (j.contains("weights") && !j["weights"].is_string()) {
      const auto rows = j["weights"].get<std::vector<std::vector<double>>>();
      c.weights.resize(static_cast<Eigen::Index>(rows.size()),
                       static_cast<Eigen::Index>(rows.size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows.size())
          throw ConfigError("weights must be a square matrix");
        for (std::size_t k = 0; k < rows.size(); ++k)
          c.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = rows[r][k];
      }
    } else if (j.contains("weights") && j["weights"].get<std::string>() != "ones") {
      throw ConfigError("weights must be \"ones\" or a D x D matrix");
    }
    if (j.contains("synth")) {
      const auto& s = j["synth"];
      c.synth.truth = resolve(s.at("truth").get<std::string>());
      c.synth.n_days = s.at("n_days").get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }

  if (!(c.capacity > 0.0))
    throw ConfigError("capacity must be positive");
  if (c.hour_start < 0 || c.hour_end > 23 || c.hour_end < c.hour_start)
    throw ConfigError("invalid hour window");
  if (c.scenarios < 1)
    throw ConfigError("S must be at least 1");
  if (!(c.gamma > 0.0))
    throw ConfigError("gamma must be positive");
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0))
    throw ConfigError("train_fraction must be in (0,1)");
  auto check_grid = [](const std::vector<double>& g, const char* name) {
    if (g.empty() || !std::is_sorted(g.begin(), g.end()) ||
        std::adjacent_find(g.begin(), g.end()) != g.end() || g.front() <= 0.0 ||
        g.back() >= 1.0)
      throw ConfigError(std::string(name) + " must be strictly increasing in (0,1)");
  };
  check_grid(c.levels, "levels");
  check_grid(c.alphas, "alphas");
  if (c.weights.size() > 0 &&
      (c.weights.rows() != c.dim() || (c.weights.array() < 0.0).any()))
    throw ConfigError("weights must be a nonnegative " + std::to_string(c.dim()) +
                      " x " + std::to_string(c.dim()) + " matrix");
  if (c.synth.enabled() && c.synth.n_days < 2)
    throw ConfigError("synth.n_days must be at least 2");
  return c;
}

inline nlohmann::json load_json(const fs::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline RunConfig load_config(const fs::path& path)
{
  nlohmann::json j;
  try {
    j = load_json(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j, path.parent_path());
}

// ------- data

inline TruthSpec load_truth(const RunConfig& cfg)
{
  auto truth = truth_from_json(load_json(cfg.synth.truth));
  truth.marginal.hour_start = cfg.hour_start;
  return truth;
}

inline std::vector<DayMatrix> synth_days(const RunConfig& cfg, const TruthSpec& truth)
{
  return synth_generate(derive_seed(cfg.seed, "synth"), cfg.synth.n_days, cfg.dim(),
                        truth);
}

struct Dataset
{
  std::vector<DayMatrix> train;
  std::vector<DayMatrix> eval;
};

inline Dataset split_days(const RunConfig& cfg, const std::vector<DayMatrix>& days)
{
  if (days.size() < 2)
    throw DataError("need at least two complete days, found " +
                    std::to_string(days.size()));
  Days end;
  if (cfg.train_end.empty()) {
    auto n = static_cast<std::size_t>(std::floor(cfg.train_fraction * days.size()));
    n = std::clamp<std::size_t>(n, 1, days.size() - 1);
    end = days[n - 1].date;
  } else {
    end = parse_date(cfg.train_end);
  }
  auto [train, eval] = split(days, end);
  return { std::move(train), std::move(eval) };
}

inline Dataset load_dataset(const RunConfig& cfg)
{
  SchemaConfig schema;
  schema.feature_columns = cfg.feature_columns;
  const auto recs = load_csv(cfg.data_path().string(), schema);
  const auto win = normalize_and_window(recs, cfg.capacity, cfg.hour_start, cfg.hour_end);
  return split_days(cfg, win.days);
}

inline std::vector<std::vector<QuantileCurve>>
curves_for(const MarginalModel& m, const std::vector<DayMatrix>& days)
{
  std::vector<std::vector<QuantileCurve>> out;
  out.reserve(days.size());
  for (const auto& d : days)
    out.push_back(predict_day(m, d));
  return out;
}

inline std::vector<std::vector<double>> observed(const std::vector<DayMatrix>& days)
{
  std::vector<std::vector<double>> out;
  for (const auto& d : days)
    out.push_back(d.power);
  return out;
}

// ------- copulas

using CopulaModel = std::variant<GaussianCopulaModel, RVineModel>;

inline CopulaModel fit_copula(const std::string& name, const Eigen::MatrixXd& u)
{
  if (name == "gaussian")
    return fit_gaussian(u);
  if (name == "rvine")
    return select_structure(u);
  throw ConfigError("unknown copula '" + name + "'");
}

inline GoodnessOfFit goodness_of_fit(const CopulaModel& m, std::size_t nobs)
{
  return std::visit(
    [&](const auto& x) { return GoodnessOfFit{ x.loglik(), x.kappa(), nobs }; }, m);
}

inline nlohmann::json copula_to_json(const std::string& name, const CopulaModel& m,
                                     std::size_t nobs)
{
  nlohmann::json model;
  std::visit([&](const auto& x) { model = x; }, m);
  return { { "type", name }, { "n_obs", nobs }, { "model", model } };
}

inline std::pair<CopulaModel, std::size_t> copula_from_json(const nlohmann::json& j)
{
  const auto type = j.at("type").get<std::string>();
  const auto nobs = j.at("n_obs").get<std::size_t>();
  if (type == "gaussian")
    return { j.at("model").get<GaussianCopulaModel>(), nobs };
  if (type == "rvine")
    return { j.at("model").get<RVineModel>(), nobs };
  throw DataError("unknown copula type '" + type + "'");
}

// ------- scenarios, intervals, scores

inline std::vector<ScenarioSet>
sample_days(const CopulaModel& model, const std::string& name,
            const std::vector<std::vector<QuantileCurve>>& curves,
            const std::vector<DayMatrix>& days, int n_scenarios, std::uint64_t seed)
{
  std::vector<ScenarioSet> out;
  out.reserve(days.size());
  for (std::size_t t = 0; t < days.size(); ++t) {
    const auto s = derive_seed(seed, "sample-" + name, t);
    auto set = std::visit(
      [&](const auto& m) { return generate(m, curves[t], n_scenarios, s, name); }, model);
    set.date = days[t].date;
    out.push_back(std::move(set));
  }
  return out;
}

inline std::vector<MPISet>
mpi_days(const std::vector<ScenarioSet>& scen,
         const std::vector<std::vector<QuantileCurve>>& curves,
         const std::vector<double>& alphas)
{
  if (scen.size() != curves.size())
    throw DataError("mpi: scenario days do not match forecast days");
  std::vector<MPISet> out;
  out.reserve(scen.size());
  for (std::size_t t = 0; t < scen.size(); ++t)
    out.push_back(build_mpi_set(scen[t].values, curves[t], alphas, scen[t].date));
  return out;
}

inline std::size_t level_index(const std::vector<double>& alphas, double target)
{
  std::size_t best = 0;
  for (std::size_t i = 1; i < alphas.size(); ++i)
    if (std::abs(alphas[i] - target) < std::abs(alphas[best] - target))
      best = i;
  return best;
}

inline ScoreReport score_model(const RunConfig& cfg, const std::string& name,
                               const GoodnessOfFit& fit,
                               const std::vector<ScenarioSet>& scen,
                               const std::vector<MPISet>& mpis,
                               const std::vector<DayMatrix>& eval)
{
  if (scen.size() != eval.size() || mpis.size() != eval.size())
    throw DataError("score: scenario/MPI days do not match the evaluation days");
  const auto d = static_cast<Eigen::Index>(cfg.dim());
  const Eigen::MatrixXd w =
    cfg.weights.size() > 0 ? cfg.weights : Eigen::MatrixXd::Ones(d, d);
  std::vector<double> es, vs, vol;
  const auto k95 = level_index(cfg.alphas, 0.95);
  for (std::size_t t = 0; t < eval.size(); ++t) {
    if (scen[t].date != eval[t].date || mpis[t].date != eval[t].date)
      throw DataError("score: day mismatch at " + format_date(eval[t].date));
    es.push_back(energy_score(eval[t].power, scen[t].values));
    vs.push_back(variogram_score(eval[t].power, scen[t].values, cfg.gamma, w));
    vol.push_back(volume(mpis[t].boxes.at(k95)));
  }
  return summarize(name, fit, es, vs, cfg.alphas, mpi_calibration(mpis, observed(eval)),
                   vol);
}

inline nlohmann::json make_report(const RunConfig& cfg, const Dataset& data,
                                  const std::vector<ScoreReport>& rows)
{
  nlohmann::json models = nlohmann::json::array();
  for (const auto& r : rows)
    models.push_back(r);
  return { { "dimension", cfg.dim() },
           { "hour_start", cfg.hour_start },
           { "hour_end", cfg.hour_end },
           { "n_train", data.train.size() },
           { "n_eval", data.eval.size() },
           { "scenarios", cfg.scenarios },
           { "gamma", cfg.gamma },
           { "seed", cfg.seed },
           { "volume_alpha", cfg.alphas[level_index(cfg.alphas, 0.95)] },
           { "models", models } };
}

// ------- in-memory run

struct ModelRun
{
  std::string name;
  CopulaModel model;
  GoodnessOfFit fit;
  std::vector<ScenarioSet> scenarios;
  std::vector<MPISet> mpis;
  ScoreReport score;
};

struct PipelineResult
{
  Dataset data;
  MarginalModel marginals;
  Eigen::MatrixXd train_pit;
  std::vector<std::vector<QuantileCurve>> eval_curves;
  std::vector<ModelRun> models;
  nlohmann::json report;
};

inline PipelineResult run_pipeline(const RunConfig& cfg, Dataset data)
{
  PipelineResult r;
  r.data = std::move(data);
  r.marginals = fit_marginals(r.data.train, cfg.levels, cfg.feature_columns);
  r.train_pit = pit(r.data.train, curves_for(r.marginals, r.data.train));
  r.eval_curves = curves_for(r.marginals, r.data.eval);
  std::vector<ScoreReport> rows;
  for (const auto& name : cfg.copulas) {
    ModelRun m{ name, fit_copula(name, r.train_pit), {}, {}, {}, {} };
    m.fit = goodness_of_fit(m.model, r.data.train.size());
    m.scenarios = sample_days(m.model, name, r.eval_curves, r.data.eval, cfg.scenarios,
                              cfg.seed);
    m.mpis = mpi_days(m.scenarios, r.eval_curves, cfg.alphas);
    m.score = score_model(cfg, name, m.fit, m.scenarios, m.mpis, r.data.eval);
    rows.push_back(m.score);
    r.models.push_back(std::move(m));
  }
  r.report = make_report(cfg, r.data, rows);
  return r;
}

// ------- file stages
//
// Artifacts in the output directory:
//   data.csv                 synthetic input (synth)
//   marginals.json           quantile regressions (fit-marginals)
//   curves.csv               day,dim,alpha,value for the evaluation days
//   copula_<m>.json          fitted copula with loglik, kappa, n_obs
//   scenarios_<m>.csv        day,scenario,h1..hD
//   mpi_<m>.csv              day,alpha,dim,lower,upper
//   scores_<m>.json          one Table-I row
//   reliability_<m>.csv      alpha,empirical
//   report.json              all rows

namespace stage {

inline fs::path artifact(const RunConfig& cfg, const std::string& stem,
                         const std::string& model, const std::string& ext)
{
  return cfg.out_dir() / (model.empty() ? stem + ext : stem + "_" + model + ext);
}

inline std::ofstream open_out(const fs::path& p)
{
  fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
  std::ofstream out(p);
  if (!out)
    throw DataError("cannot write " + p.string());
  return out;
}

inline std::ifstream open_in(const fs::path& p)
{
  std::ifstream in(p);
  if (!in)
    throw DataError("missing input " + p.string());
  return in;
}

inline void write_json(const fs::path& p, const nlohmann::json& j)
{
  open_out(p) << j.dump(2) << '\n';
}

inline void synth(const RunConfig& cfg)
{
  if (!cfg.synth.enabled())
    throw ConfigError("synth: config has no synth section");
  const auto days = synth_days(cfg, load_truth(cfg));
  auto out = open_out(cfg.data_path());
  write_days_csv(out, days, cfg.hour_start, cfg.capacity);
  std::clog << "synth: " << days.size() << " days -> " << cfg.data_path().string() << '\n';
}

inline MarginalModel load_marginals(const RunConfig& cfg)
{
  return load_json(artifact(cfg, "marginals", "", ".json")).get<MarginalModel>();
}

inline void fit_marginals(const RunConfig& cfg)
{
  const auto data = load_dataset(cfg);
  const auto m = pvmpi::fit_marginals(data.train, cfg.levels, cfg.feature_columns);
  write_json(artifact(cfg, "marginals", "", ".json"), m);
  auto out = open_out(artifact(cfg, "curves", "", ".csv"));
  out << "day,dim,alpha,value\n";
  for (const auto& day : data.eval) {
    const auto curves = predict_day(m, day);
    for (std::size_t d = 0; d < curves.size(); ++d)
      for (std::size_t k = 0; k < m.levels.size(); ++k)
        out << format_date(day.date) << ',' << (d + 1) << ','
            << detail::fmt_double(m.levels[k]) << ','
            << detail::fmt_double(curves[d].values()[k]) << '\n';
  }
  std::clog << "fit-marginals: " << data.train.size() << " training days, "
            << m.dim() << " lead-times x " << m.levels.size() << " levels\n";
}

inline void fit_copula(const RunConfig& cfg)
{
  const auto data = load_dataset(cfg);
  const auto m = load_marginals(cfg);
  const auto u = pit(data.train, curves_for(m, data.train));
  for (const auto& name : cfg.copulas) {
    const auto model = pvmpi::fit_copula(name, u);
    write_json(artifact(cfg, "copula", name, ".json"),
               copula_to_json(name, model, data.train.size()));
    const auto fit = goodness_of_fit(model, data.train.size());
    std::clog << "fit-copula: " << name << " loglik " << fit.loglik << " kappa "
              << fit.kappa << '\n';
  }
}

inline void sample(const RunConfig& cfg)
{
  const auto data = load_dataset(cfg);
  const auto curves = curves_for(load_marginals(cfg), data.eval);
  for (const auto& name : cfg.copulas) {
    const auto [model, nobs] = copula_from_json(load_json(artifact(cfg, "copula", name, ".json")));
    const auto scen = sample_days(model, name, curves, data.eval, cfg.scenarios, cfg.seed);
    auto out = open_out(artifact(cfg, "scenarios", name, ".csv"));
    write_scenarios(out, scen, cfg.dim());
    std::clog << "sample: " << name << " " << scen.size() << " days x " << cfg.scenarios
              << " scenarios\n";
  }
}

inline std::vector<ScenarioSet> load_scenarios(const RunConfig& cfg, const std::string& name)
{
  const auto p = artifact(cfg, "scenarios", name, ".csv");
  auto in = open_in(p);
  return read_scenarios(in, p.string());
}

inline std::vector<MPISet> load_mpis(const RunConfig& cfg, const std::string& name)
{
  const auto p = artifact(cfg, "mpi", name, ".csv");
  auto in = open_in(p);
  return read_mpi_csv(in, p.string());
}

inline void mpi(const RunConfig& cfg)
{
  const auto data = load_dataset(cfg);
  const auto curves = curves_for(load_marginals(cfg), data.eval);
  for (const auto& name : cfg.copulas) {
    const auto sets = mpi_days(load_scenarios(cfg, name), curves, cfg.alphas);
    auto out = open_out(artifact(cfg, "mpi", name, ".csv"));
    write_mpi_csv(out, sets);
    std::clog << "mpi: " << name << " " << sets.size() << " days x "
              << cfg.alphas.size() << " levels\n";
  }
}

inline void score(const RunConfig& cfg)
{
  const auto data = load_dataset(cfg);
  for (const auto& name : cfg.copulas) {
    const auto [model, nobs] = copula_from_json(load_json(artifact(cfg, "copula", name, ".json")));
    const auto rep = score_model(cfg, name, goodness_of_fit(model, nobs),
                                 load_scenarios(cfg, name), load_mpis(cfg, name), data.eval);
    write_json(artifact(cfg, "scores", name, ".json"), rep);
    auto out = open_out(artifact(cfg, "reliability", name, ".csv"));
    out << "alpha,empirical\n";
    for (std::size_t a = 0; a < rep.alphas.size(); ++a)
      out << detail::fmt_double(rep.alphas[a]) << ','
          << detail::fmt_double(rep.coverage[a]) << '\n';
    std::clog << "score: " << name << " ES " << rep.mean_es << " VS " << rep.mean_vs
              << " deviation " << rep.avg_deviation_pct << "%\n";
  }
}

// Runs every stage after synth (synth too when its output is missing) and
// aggregates the score rows.
inline nlohmann::json report(const RunConfig& cfg)
{
  if (cfg.synth.enabled() && !fs::exists(cfg.data_path()))
    synth(cfg);
  fit_marginals(cfg);
  fit_copula(cfg);
  sample(cfg);
  mpi(cfg);
  score(cfg);
  const auto data = load_dataset(cfg);
  nlohmann::json models = nlohmann::json::array();
  for (const auto& name : cfg.copulas)
    models.push_back(load_json(artifact(cfg, "scores", name, ".json")));
  auto j = make_report(cfg, data, {});
  j["models"] = models;
  write_json(artifact(cfg, "report", "", ".json"), j);
  std::clog << "report: " << artifact(cfg, "report", "", ".json").string() << '\n';
  return j;
}

inline plot::ReliabilityCurve load_reliability(const RunConfig& cfg, const std::string& name)
{
  const auto p = artifact(cfg, "reliability", name, ".csv");
  auto in = open_in(p);
  std::string line;
  std::getline(in, line);
  if (line != "alpha,empirical")
    throw DataError(p.string() + ": expected header alpha,empirical");
  plot::ReliabilityCurve c{ name, {}, {} };
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    const auto cells = detail::split_csv_line(line);
    auto a = cells.size() == 2 ? detail::parse_double(cells[0]) : std::nullopt;
    auto e = cells.size() == 2 ? detail::parse_double(cells[1]) : std::nullopt;
    if (!a || !e)
      throw DataError(p.string() + ": malformed row '" + line + "'");
    c.alphas.push_back(*a);
    c.empirical.push_back(*e);
  }
  return c;
}

struct PlotRequest
{
  std::vector<std::string> kinds{ "fan", "spaghetti", "mpi", "bivariate", "reliability" };
  std::size_t day = 0;            // index into the evaluation days
  std::string model;              // empty: first configured copula
  std::pair<int, int> hours{ 0, 1 }; // lead-time indices for the bivariate view
};

inline std::vector<fs::path> plot(const RunConfig& cfg, const PlotRequest& req)
{
  static const std::vector<std::string> known{ "fan", "spaghetti", "mpi", "bivariate",
                                               "reliability" };
  for (const auto& k : req.kinds)
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ConfigError("unknown plot kind '" + k + "'");
  const std::string model = req.model.empty() ? cfg.copulas.front() : req.model;
  const auto dir = cfg.out_dir() / "figures";
  std::vector<fs::path> written;
  auto emit = [&](const std::string& file, const std::string& svg) {
    const auto p = dir / file;
    open_out(p) << svg;
    written.push_back(p);
  };
  auto wants = [&](const char* k) {
    return std::find(req.kinds.begin(), req.kinds.end(), k) != req.kinds.end();
  };

  const bool need_day = wants("fan") || wants("spaghetti") || wants("mpi") || wants("bivariate");
  Dataset data;
  if (need_day) {
    data = load_dataset(cfg);
    if (req.day >= data.eval.size())
      throw ConfigError("plot: day index " + std::to_string(req.day) + " out of range (" +
                        std::to_string(data.eval.size()) + " evaluation days)");
  }
  const auto& day = need_day ? data.eval[req.day] : DayMatrix{};
  const std::string when = need_day ? format_date(day.date) : "";

  if (wants("fan")) {
    const auto curves = predict_day(load_marginals(cfg), day);
    emit("fan.svg", plot::fan_chart(curves, day.power, cfg.hour_start,
                                    "Univariate intervals " + when));
  }
  std::vector<ScenarioSet> scen;
  if (wants("spaghetti") || wants("bivariate")) {
    scen = load_scenarios(cfg, model);
    if (req.day >= scen.size() || scen[req.day].date != day.date)
      throw DataError("plot: scenarios do not cover " + when);
  }
  if (wants("spaghetti"))
    emit("spaghetti_" + model + ".svg",
         plot::spaghetti(scen[req.day], day.power, cfg.hour_start,
                         "Scenarios (" + model + ") " + when));
  if (wants("mpi") || wants("bivariate")) {
    const auto sets = load_mpis(cfg, model);
    if (req.day >= sets.size() || sets[req.day].date != day.date)
      throw DataError("plot: MPIs do not cover " + when);
    const auto& set = sets[req.day];
    if (wants("mpi"))
      emit("mpi_" + model + ".svg",
           plot::mpi_bands(set, day.power, cfg.hour_start, "MPIs (" + model + ") " + when));
    if (wants("bivariate")) {
      const auto [i, j] = req.hours;
      if (i < 0 || j < 0 || i >= day.dim() || j >= day.dim() || i == j)
        throw ConfigError("plot: bivariate hours must be two distinct lead-times");
      emit("bivariate_" + model + ".svg",
           plot::bivariate_boxes(set, &scen[req.day], day.power, i, j, cfg.hour_start,
                                 "MPIs at two hours (" + model + ") " + when));
    }
  }
  if (wants("reliability")) {
    std::vector<plot::ReliabilityCurve> curves;
    for (const auto& name : cfg.copulas)
      curves.push_back(load_reliability(cfg, name));
    emit("reliability.svg", plot::reliability(curves, "Calibration of the MPIs"));
  }
  return written;
}

} // namespace stage

} // namespace pvmpi
