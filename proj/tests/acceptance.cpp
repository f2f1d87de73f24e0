#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/random/sobol.hpp>

#include "pvmpi/pipeline.hpp"

using namespace pvmpi;

namespace {

fs::path config_dir()
{
  const char* env = std::getenv("PVMPI_CONFIG_DIR");
  return env ? fs::path(env) : fs::path("configs");
}

int failures = 0;

void report(int n, bool ok, const std::string& what, double seconds)
{
  std::printf("criterion %2d: %s  %s  [%.1f s]\n", n, ok ? "PASS" : "FAIL", what.c_str(),
              seconds);
  std::fflush(stdout);
  failures += !ok;
}

template <typename F>
void criterion(int n, F&& body)
{
  const auto t0 = std::chrono::steady_clock::now();
  std::string what;
  bool ok = false;
  // stage logging would break the one-line-per-criterion output
  std::ostringstream sink;
  auto* old = std::clog.rdbuf(sink.rdbuf());
  try {
    ok = body(what);
  } catch (const std::exception& e) {
    what += std::string(" exception: ") + e.what();
  }
  std::clog.rdbuf(old);
  report(n, ok, what,
         std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

std::string fmt(const char* f, auto... args)
{
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

RVineModel vine3(const BivariateCopula& c01, const BivariateCopula& c12,
                 const BivariateCopula& c02_1)
{
  nlohmann::json j;
  j["dim"] = 3;
  const auto m = RVineStructure::dvine(3).matrix();
  std::vector<int> flat;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      flat.push_back(m(r, c));
  j["structure"] = flat;
  auto edge = [](std::vector<int> pair, std::vector<int> cond, const BivariateCopula& c) {
    nlohmann::json e = c;
    e["cond_pair"] = pair;
    e["cond_set"] = cond;
    return e;
  };
  j["edges"] = { edge({ 0, 1 }, {}, c01), edge({ 1, 2 }, {}, c12),
                 edge({ 0, 2 }, { 1 }, c02_1) };
  return j.get<RVineModel>();
}

// c_ab(u_a, u_b) c_bc(u_b, u_c) c_ac|b(F(a|b), F(c|b)), written out by hand
// from the three edges of a fitted vine.
double three_factor(const std::vector<VineEdge>& edges, const Eigen::RowVector3d& u)
{
  std::vector<const VineEdge*> t0;
  const VineEdge* top = nullptr;
  for (const auto& e : edges)
    (e.tree == 0 ? t0.push_back(&e) : void(top = &e));
  const int b = top->cond.at(0);
  // F(x | b) from the tree-0 edge joining x and b
  auto cond = [&](int x) {
    for (auto* e : t0) {
      if (e->first == x && e->second == b)
        return e->copula.hfunc1(u[x], u[b]);
      if (e->first == b && e->second == x)
        return e->copula.hfunc2(u[b], u[x]);
    }
    throw std::logic_error("edge not found");
  };
  double lp = 0.0;
  for (auto* e : t0)
    lp += std::log(e->copula.pdf(u[e->first], u[e->second]));
  return lp + std::log(top->copula.pdf(cond(top->first), cond(top->second)));
}

std::string slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

RunConfig synthetic_d5(std::size_t n_days, std::uint64_t seed)
{
  RunConfig cfg;
  cfg.hour_start = 10;
  cfg.hour_end = 14;
  cfg.feature_columns = { "f1" };
  cfg.synth.truth = (config_dir() / "truth_d5_asym.json").string();
  cfg.synth.n_days = n_days;
  cfg.seed = seed;
  return cfg;
}

} // namespace

int main()
{
  criterion(1, [](std::string& what) {
    const double a = aic(396.573, 55);
    const GaussianCopulaModel g(Eigen::MatrixXd::Identity(11, 11));
    what = fmt("AIC(396.573, 55) = %.3f (want -683.145 +- 0.01); Gaussian kappa at D=11 = %d",
               a, g.kappa());
    return std::abs(a + 683.145) <= 0.01 && g.kappa() == 55 && g.kappa() == 11 * 10 / 2;
  });

  criterion(2, [](std::string& what) {
    const auto truth = vine3(BivariateCopula(Family::Clayton, 2.0),
                             BivariateCopula(Family::Gumbel, 1.6),
                             BivariateCopula(Family::Frank, 3.0));
    const auto fit = select_structure(truth.sample(2000, 21));
    const auto edges = fit.edges();
    Rng r(22);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const Eigen::RowVector3d u(r.uniform(), r.uniform(), r.uniform());
      worst = std::max(worst, std::abs(fit.log_pdf(u) - three_factor(edges, u)));
    }
    what = fmt("max |log_pdf - product| over 1000 points = %.3g (want <= 1e-9)", worst);
    return worst <= 1e-9;
  });

  criterion(3, [](std::string& what) {
    const BivariateCopula frank(Family::Frank, 5.0);
    using boost::math::quadrature::gauss_kronrod;
    auto inner = [&](double u) {
      return gauss_kronrod<double, 31>::integrate(
        [&](double v) { return frank.pdf(u, v); }, 0.0, 1.0, 15, 1e-12);
    };
    const double i2 = gauss_kronrod<double, 31>::integrate(inner, 0.0, 1.0, 15, 1e-12);

    const auto vine = vine3(BivariateCopula(Family::Clayton, 1.0),
                            BivariateCopula(Family::Gumbel, 1.4),
                            BivariateCopula(Family::Frank, -2.0));
    boost::random::sobol qrng(3);
    const double scale = 1.0 / (static_cast<double>(qrng.max()) + 1.0);
    const int n = 1'000'000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      Eigen::RowVector3d u;
      for (int d = 0; d < 3; ++d)
        u[d] = (static_cast<double>(qrng()) + 0.5) * scale;
      sum += std::exp(vine.log_pdf(u));
    }
    const double i3 = sum / n;
    what = fmt("D=2 Frank(5) quadrature = %.6f; D=3 Clayton/Gumbel/Frank Sobol 1e6 = %.6f "
               "(want 1 +- 1e-3)",
               i2, i3);
    return std::abs(i2 - 1.0) <= 1e-3 && std::abs(i3 - 1.0) <= 1e-3;
  });

  criterion(4, [](std::string& what) {
    const int s = 10000;
    Eigen::Matrix2d c;
    c << 1.0, 0.8, 0.8, 1.0;
    const GaussianCopulaModel g(c);
    const auto g_fit = fit_gaussian(g.sample(s, 41));
    const double g_err = std::abs(g_fit.tau_matrix()(0, 1) - 2.0 / M_PI * std::asin(0.8));

    const auto truth = vine3(BivariateCopula(Family::Clayton, 3.0),
                             BivariateCopula(Family::Clayton, 2.0),
                             BivariateCopula(Family::Clayton, 0.3));
    const auto v_fit = select_structure(truth.sample(s, 42));
    using Key = std::pair<std::pair<int, int>, std::vector<int>>;
    auto key = [](const VineEdge& e) {
      return Key{ { std::min(e.first, e.second), std::max(e.first, e.second) }, e.cond };
    };
    std::map<Key, double> want;
    for (const auto& e : truth.edges())
      want[key(e)] = e.copula.tau();
    double v_err = 0.0;
    bool same_edges = true;
    for (const auto& e : v_fit.edges()) {
      const auto it = want.find(key(e));
      if (it == want.end())
        same_edges = false;
      else
        v_err = std::max(v_err, std::abs(e.copula.tau() - it->second));
    }
    what = fmt("Gaussian rho=0.8 tau error %.4f; Clayton vine max edge tau error %.4f%s "
               "(want <= 0.05)",
               g_err, v_err, same_edges ? "" : ", structure not recovered");
    return g_err <= 0.05 && v_err <= 0.05 && same_edges;
  });

  criterion(5, [](std::string& what) {
    const auto cfg = synthetic_d5(2500, 1);
    const auto r = run_pipeline(cfg, split_days(cfg, synth_days(cfg, load_truth(cfg))));
    bool ok = true;
    for (const auto& m : r.models) {
      const auto& s = m.score;
      const bool mono = std::is_sorted(s.coverage.begin(), s.coverage.end());
      ok = ok && s.avg_deviation_pct < 3.0 && mono && s.coverage.size() == 19;
      what += fmt("%s deviation %.2f pp, reliability %s; ", s.model.c_str(),
                  s.avg_deviation_pct, mono ? "monotone" : "NOT monotone");
    }
    what += "(want < 3 pp, monotone)";
    return ok;
  });

  int fit_wins = 0, es_close = 0;
  const int reps = 20;
  criterion(6, [&](std::string& what) {
    for (int rep = 0; rep < reps; ++rep) {
      const auto cfg = synthetic_d5(1000, derive_seed(6, "rep", rep));
      const auto r = run_pipeline(cfg, split_days(cfg, synth_days(cfg, load_truth(cfg))));
      const auto& g = r.models[0].score;
      const auto& v = r.models[1].score;
      fit_wins += v.fit.loglik > g.fit.loglik && v.fit.aic() < g.fit.aic();
      es_close += std::abs(v.mean_es - g.mean_es) / g.mean_es < 0.05;
    }
    what = fmt("R-vine beats Gaussian on loglik and AIC in %d/%d replications (want >= 95%%)",
               fit_wins, reps);
    return fit_wins >= 0.95 * reps;
  });

  criterion(7, [&](std::string& what) {
    what = fmt("mean ES within 5%% relative in %d/%d of the same replications", es_close,
               reps);
    return es_close == reps;
  });

  criterion(8, [](std::string& what) {
    Eigen::MatrixXd tenths(10, 1);
    for (int i = 0; i < 10; ++i)
      tenths(i, 0) = (i + 1) / 10.0;
    const auto a = widen_to_coverage(tenths, { 0.28 }, { 0.72 }, 0.5);
    const bool ex1 = a.lower[0] == 0.28 && a.upper[0] == 0.72 && a.coverage == 0.5;
    const auto b = widen_to_coverage(tenths, { 0.45 }, { 0.55 }, 0.5);
    const bool ex2 = std::abs(b.lower[0] - 0.3) < 1e-12 && std::abs(b.upper[0] - 0.7) < 1e-12 &&
                     b.coverage == 0.5;
    const auto c = widen_to_coverage(tenths, { 0.1 }, { 1.0 }, 0.99);
    const bool ex3 = c.lower[0] == 0.1 && c.upper[0] == 1.0 && c.coverage == 1.0;

    Eigen::MatrixXd corr = Eigen::MatrixXd::Constant(11, 11, 0.5);
    corr.diagonal().setOnes();
    const GaussianCopulaModel g(corr);
    std::vector<QuantileCurve> curves;
    for (int d = 0; d < 11; ++d) {
      std::vector<double> v;
      for (double l : default_levels())
        v.push_back(0.1 + 0.7 * l - 0.02 * d);
      curves.emplace_back(default_levels(), v);
    }
    bool nested = true, monotone = true;
    for (int rep = 0; rep < 5; ++rep) {
      const auto scen = generate(g, curves, 500, 80 + rep).values;
      const auto set = build_mpi_set(scen, curves, default_levels());
      nested = nested && set.boxes.size() == 19;
      for (std::size_t i = 1; i < set.boxes.size(); ++i) {
        const auto& p = set.boxes[i - 1];
        const auto& q = set.boxes[i];
        for (std::size_t d = 0; d < q.dim(); ++d)
          nested = nested && q.lower[d] <= p.lower[d] && q.upper[d] >= p.upper[d];
        monotone = monotone && q.coverage >= p.coverage && q.coverage >= set.alphas[i] &&
                   volume(q) >= volume(p);
      }
    }
    what = fmt("examples %d%d%d, nesting %s, coverage monotone %s", ex1, ex2, ex3,
               nested ? "ok" : "broken", monotone ? "ok" : "broken");
    return ex1 && ex2 && ex3 && nested && monotone;
  });

  criterion(9, [](std::string& what) {
    Eigen::MatrixXd x(2, 1);
    x << -1.0, 1.0;
    const double es = energy_score(std::vector<double>{ 0.0 }, x);
    Eigen::MatrixXd one(1, 2);
    one << 0.0, 1.0;
    const double vs = variogram_score(std::vector<double>{ 0.0, 4.0 }, one, 0.5);
    Rng r(9);
    double es_law = 0.0, vs_law = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
      Eigen::MatrixXd s(30, 4);
      for (Eigen::Index i = 0; i < s.size(); ++i)
        s.data()[i] = r.uniform();
      std::vector<double> o(4), os(4);
      const double lambda = 0.1 + 5.0 * r.uniform(), gamma = 0.25 + r.uniform();
      for (int d = 0; d < 4; ++d) {
        o[d] = r.uniform();
        os[d] = lambda * o[d];
      }
      const Eigen::MatrixXd ss = lambda * s;
      const double e0 = energy_score(o, s), v0 = variogram_score(o, s, gamma);
      es_law = std::max(es_law, std::abs(energy_score(os, ss) - lambda * e0) / (lambda * e0));
      const double lv = std::pow(lambda, 2 * gamma) * v0;
      vs_law = std::max(vs_law, std::abs(variogram_score(os, ss, gamma) - lv) / lv);
    }
    what = fmt("ES = %.15g, VS = %.15g; scaling laws max rel error %.2g, %.2g", es, vs,
               es_law, vs_law);
    return std::abs(es - 0.5) <= 1e-12 && std::abs(vs - 2.0) <= 1e-12 && es_law < 1e-10 &&
           vs_law < 1e-10;
  });

  criterion(10, [](std::string& what) {
    auto cfg = load_config(config_dir() / "smoke.json");
    std::string runs[2];
    for (int i = 0; i < 2; ++i) {
      cfg.out = (fs::temp_directory_path() / ("pvmpi_acceptance_" + std::to_string(i))).string();
      fs::remove_all(cfg.out);
      stage::report(cfg);
      runs[i] = slurp(cfg.out_dir() / "report.json");
    }
    const bool same = !runs[0].empty() && runs[0] == runs[1];
    what = fmt("report.json from two fresh runs is %s (%zu bytes)",
               same ? "byte-identical" : "DIFFERENT", runs[0].size());
    return same;
  });

  return failures == 0 ? 0 : 1;
}
