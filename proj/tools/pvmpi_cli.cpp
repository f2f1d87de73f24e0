#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "pvmpi/pipeline.hpp"

using namespace pvmpi;

namespace {

struct Common
{
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> copula;
  std::optional<std::string> out;
};

void add_common(CLI::App* sub, Common& c)
{
  sub->add_option("--config", c.config, "run configuration (JSON)")->required();
  sub->add_option("--seed", c.seed, "master seed");
  sub->add_option("--copula", c.copula, "gaussian, rvine or both");
  sub->add_option("--out", c.out, "output directory");
}

RunConfig resolve(const Common& c)
{
  RunConfig cfg = load_config(c.config);
  if (c.seed)
    cfg.seed = *c.seed;
  if (c.copula)
    cfg.copulas = parse_copula_choice(*c.copula);
  if (c.out)
    cfg.out = *c.out;
  return cfg;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{ "PV power scenarios and multivariate prediction intervals from copulas" };
  app.require_subcommand(1);

  Common common;
  stage::PlotRequest plot_req;
  std::vector<int> plot_hours;

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset from the truth spec");
  auto* fit_m = app.add_subcommand("fit-marginals", "fit per-hour quantile regressions");
  auto* fit_c = app.add_subcommand("fit-copula", "fit Gaussian and/or R-vine copulas");
  auto* sample = app.add_subcommand("sample", "draw scenarios for the evaluation days");
  auto* mpi = app.add_subcommand("mpi", "build multivariate prediction intervals");
  auto* score = app.add_subcommand("score", "energy/variogram scores and MPI calibration");
  auto* report = app.add_subcommand("report", "run all stages and write report.json");
  auto* plot = app.add_subcommand("plot", "emit SVG figures");
  for (auto* s : { synth, fit_m, fit_c, sample, mpi, score, report, plot })
    add_common(s, common);
  plot->add_option("--kind", plot_req.kinds,
                   "fan, spaghetti, mpi, bivariate, reliability (repeatable)");
  plot->add_option("--day", plot_req.day, "evaluation day index");
  plot->add_option("--model", plot_req.model, "copula whose output is drawn");
  plot->add_option("--hours", plot_hours, "two 1-based lead-times for the bivariate view")
    ->expected(2);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const RunConfig cfg = resolve(common);
    if (synth->parsed())
      stage::synth(cfg);
    else if (fit_m->parsed())
      stage::fit_marginals(cfg);
    else if (fit_c->parsed())
      stage::fit_copula(cfg);
    else if (sample->parsed())
      stage::sample(cfg);
    else if (mpi->parsed())
      stage::mpi(cfg);
    else if (score->parsed())
      stage::score(cfg);
    else if (report->parsed())
      stage::report(cfg);
    else if (plot->parsed()) {
      if (!plot_hours.empty())
        plot_req.hours = { plot_hours[0] - 1, plot_hours[1] - 1 };
      for (const auto& p : stage::plot(cfg, plot_req))
        std::cout << p.string() << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
