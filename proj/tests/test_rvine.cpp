#include <cmath>
#include <set>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include "pvmpi/gaussian_copula.hpp"
#include "pvmpi/rvine.hpp"

using namespace pvmpi;

namespace {

std::vector<double> column(const Eigen::MatrixXd& u, int j)
{
  return { u.col(j).data(), u.col(j).data() + u.rows() };
}

// D-vine 0-1-2 with the given pair-copulas, built through the JSON reader.
RVineModel dvine3(const BivariateCopula& c01, const BivariateCopula& c12,
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
  auto edge = [](std::vector<int> pair, std::vector<int> cond,
                 const BivariateCopula& c) {
    nlohmann::json e = c;
    e["cond_pair"] = pair;
    e["cond_set"] = cond;
    return e;
  };
  j["edges"] = { edge({ 0, 1 }, {}, c01), edge({ 1, 2 }, {}, c12),
                 edge({ 0, 2 }, { 1 }, c02_1) };
  return j.get<RVineModel>();
}

// Partial correlation of (0,2) given 1.
double partial(const Eigen::Matrix3d& s)
{
  return (s(0, 2) - s(0, 1) * s(1, 2)) /
         std::sqrt((1 - s(0, 1) * s(0, 1)) * (1 - s(1, 2) * s(1, 2)));
}

Eigen::Matrix3d corr3()
{
  Eigen::Matrix3d c;
  c << 1.0, 0.6, 0.3, 0.6, 1.0, 0.5, 0.3, 0.5, 1.0;
  return c;
}

Eigen::MatrixXd random_corr(int d, Rng& r)
{
  Eigen::MatrixXd a(d, d + 2);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d + 2; ++j)
      a(i, j) = r.normal();
  Eigen::MatrixXd s = a * a.transpose();
  Eigen::VectorXd sd = s.diagonal().cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd c = sd.asDiagonal() * s * sd.asDiagonal();
  c.diagonal().setOnes();
  return c;
}

} // namespace

TEST(RVineStructure, DvineIsValid)
{
  for (int d = 1; d <= 8; ++d)
    EXPECT_TRUE(is_valid_structure(RVineStructure::dvine(d).matrix())) << d;
}

TEST(RVineStructure, RejectsBadShapes)
{
  Eigen::MatrixXi m = RVineStructure::dvine(3).matrix();
  m(0, 0) = m(1, 1);
  EXPECT_FALSE(is_valid_structure(m));
  m = RVineStructure::dvine(3).matrix();
  m(2, 0) = 0;
  EXPECT_FALSE(is_valid_structure(m));
}

TEST(RVineStructure, RejectsProximityViolation)
{
  // tree 0 = {1-0, 2-1, 3-0}; tree 1 asks for F(2 | 0), which no edge gives
  Eigen::MatrixXi m(4, 4);
  m << 3, -1, -1, -1,
       1, 2, -1, -1,
       2, 0, 1, -1,
       0, 1, 0, 0;
  EXPECT_NO_THROW(RVineStructure{ m });
  try {
    validate_structure(m);
    FAIL() << "expected a proximity violation";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("proximity"), std::string::npos);
  }
}

TEST(RVineModel, IndependenceDensityIsZero)
{
  RVineModel m(RVineStructure::dvine(5));
  Rng r(1);
  for (int i = 0; i < 20; ++i) {
    Eigen::RowVectorXd u(5);
    for (int j = 0; j < 5; ++j)
      u(j) = r.uniform();
    EXPECT_EQ(m.log_pdf(u), 0.0);
  }
  EXPECT_EQ(m.kappa(), 0);
  EXPECT_EQ(m.aic(), 0.0);
  EXPECT_EQ(m.bic(100), 0.0);
}

TEST(RVineModel, RejectsOutOfRangeArguments)
{
  RVineModel m(RVineStructure::dvine(2));
  EXPECT_THROW(m.log_pdf(Eigen::RowVector2d(0.0, 0.5)), std::invalid_argument);
  EXPECT_THROW(m.log_pdf(Eigen::RowVector3d(0.1, 0.2, 0.3)), std::invalid_argument);
}

TEST(RVineModel, ThreeFactorProduct)
{
  const BivariateCopula c01(Family::Clayton, 1.8), c12(Family::Gumbel, 1.5),
    c02(Family::Frank, -2.5);
  const auto m = dvine3(c01, c12, c02);
  Rng r(2);
  for (int i = 0; i < 1000; ++i) {
    const double u0 = r.uniform(), u1 = r.uniform(), u2 = r.uniform();
    const double direct = std::log(c01.pdf(u0, u1)) + std::log(c12.pdf(u1, u2)) +
                          std::log(c02.pdf(c01.hfunc1(u0, u1), c12.hfunc2(u1, u2)));
    EXPECT_NEAR(m.log_pdf(Eigen::RowVector3d(u0, u1, u2)), direct, 1e-9);
  }
  EXPECT_EQ(m.kappa(), 3);
}

TEST(RVineModel, BivariateGaussianMatchesGaussianCopula)
{
  const auto vine = dvine3(BivariateCopula(Family::Gaussian, 0.5),
                           BivariateCopula(Family::Independence),
                           BivariateCopula(Family::Independence));
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(3, 3);
  c(0, 1) = c(1, 0) = 0.5;
  GaussianCopulaModel g(c);
  Rng r(3);
  for (int i = 0; i < 500; ++i) {
    Eigen::RowVector3d u(r.uniform(), r.uniform(), r.uniform());
    EXPECT_NEAR(vine.log_pdf(u), g.log_pdf(u), 1e-9);
  }

  RVineStructure s2(RVineStructure::dvine(2));
  RVineModel v2(s2);
  v2.set_copula(1, 0, BivariateCopula(Family::Gaussian, -0.7));
  Eigen::Matrix2d c2;
  c2 << 1, -0.7, -0.7, 1;
  GaussianCopulaModel g2(c2);
  for (int i = 0; i < 500; ++i) {
    Eigen::RowVector2d u(r.uniform(), r.uniform());
    EXPECT_NEAR(v2.log_pdf(u), g2.log_pdf(u), 1e-9);
  }
}

TEST(RVineModel, GaussianPartialCorrelationsMatchGaussianCopula)
{
  const auto s = corr3();
  const auto vine = dvine3(BivariateCopula(Family::Gaussian, s(0, 1)),
                           BivariateCopula(Family::Gaussian, s(1, 2)),
                           BivariateCopula(Family::Gaussian, partial(s)));
  GaussianCopulaModel g(s);
  Rng r(4);
  for (int i = 0; i < 500; ++i) {
    Eigen::RowVector3d u(r.uniform(), r.uniform(), r.uniform());
    EXPECT_NEAR(vine.log_pdf(u), g.log_pdf(u), 1e-6);
  }
}

TEST(RVineModel, DensityIntegratesToOneInTwoDimensions)
{
  RVineModel v(RVineStructure::dvine(2));
  v.set_copula(1, 0, BivariateCopula(Family::Gumbel, 2.2));
  boost::math::quadrature::tanh_sinh<double> ts;
  auto f = [&](double a, double b) {
    return std::exp(v.log_pdf(Eigen::RowVector2d(clip_unit(a, 1e-15),
                                                 clip_unit(b, 1e-15))));
  };
  const double total = ts.integrate(
    [&](double b) {
      return ts.integrate([&](double a) { return f(a, b); }, 0.0, 1.0, 1e-10);
    },
    0.0, 1.0, 1e-8);
  EXPECT_NEAR(total, 1.0, 1e-3);
}

TEST(RVineModel, InverseRosenblattOfIndependenceIsIdentity)
{
  RVineModel m(RVineStructure::dvine(4));
  const std::vector<double> w{ 0.1, 0.4, 0.7, 0.9 };
  const auto u = m.inverse_rosenblatt(w);
  const auto& s = m.structure();
  for (int k = 0; k < 4; ++k)
    EXPECT_EQ(u(s(3 - k, 3 - k)), w[k]);
}

TEST(RVineModel, InverseRosenblattInvertsConditionals)
{
  const BivariateCopula c01(Family::Clayton, 1.8), c12(Family::Gumbel, 1.5),
    c02(Family::Frank, -2.5);
  const auto m = dvine3(c01, c12, c02);
  Rng r(5);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> w{ r.uniform(), r.uniform(), r.uniform() };
    const auto u = m.inverse_rosenblatt(w);
    // dvine(3) samples variable 0, then 1, then 2
    EXPECT_NEAR(u(0), w[0], 1e-12);
    EXPECT_NEAR(c01.hfunc2(u(0), u(1)), w[1], 1e-9);
    const double a = c01.hfunc1(u(0), u(1)), b = c12.hfunc2(u(1), u(2));
    EXPECT_NEAR(c02.hfunc2(a, b), w[2], 1e-8);
  }
}

TEST(RVineModel, SampledTauMatchesGaussianPair)
{
  RVineModel v(RVineStructure::dvine(2));
  v.set_copula(1, 0, BivariateCopula(Family::Gaussian, 0.5));
  const auto u = v.sample(10000, 6);
  EXPECT_NEAR(kendall_tau(column(u, 0), column(u, 1)), 1.0 / 3.0, 0.03);
  EXPECT_EQ(u, v.sample(10000, 6));
}

TEST(SelectStructure, MaximumSpanningTreeBruteForce)
{
  // weights on the three possible edges of K3
  const std::vector<detail::Candidate> cands{ { 0.6, 0, 1 }, { 0.5, 1, 2 }, { 0.1, 0, 2 } };
  const auto tree = detail::max_spanning_tree(cands, 3);
  ASSERT_EQ(tree.size(), 2u);
  std::set<std::pair<int, int>> got;
  for (const auto& c : tree)
    got.insert({ c.a, c.b });
  // exhaustive: the spanning trees of K3 are the three edge pairs
  double best = -1;
  std::set<std::pair<int, int>> want;
  for (int drop = 0; drop < 3; ++drop) {
    double w = 0;
    std::set<std::pair<int, int>> t;
    for (int i = 0; i < 3; ++i)
      if (i != drop) {
        w += cands[i].weight;
        t.insert({ cands[i].a, cands[i].b });
      }
    if (w > best) {
      best = w;
      want = t;
    }
  }
  EXPECT_EQ(got, want);
  EXPECT_EQ(got, (std::set<std::pair<int, int>>{ { 0, 1 }, { 1, 2 } }));
}

TEST(SelectStructure, TieBreakIsLexicographic)
{
  const std::vector<detail::Candidate> cands{ { 0.5, 1, 2 }, { 0.5, 0, 2 }, { 0.5, 0, 1 } };
  const auto tree = detail::max_spanning_tree(cands, 3);
  ASSERT_EQ(tree.size(), 2u);
  EXPECT_EQ(std::min(tree[0].a, tree[0].b), 0);
  EXPECT_EQ(std::max(tree[0].a, tree[0].b), 1);
  EXPECT_EQ(std::max(tree[1].a, tree[1].b), 2);
  EXPECT_EQ(std::min(tree[1].a, tree[1].b), 0);
}

TEST(SelectStructure, ThreeDimensionalChain)
{
  // Gaussian chain with tau01 = 0.6, tau12 = 0.5 and conditional independence
  const double r01 = std::sin(M_PI / 2 * 0.6), r12 = std::sin(M_PI / 2 * 0.5);
  const auto truth = dvine3(BivariateCopula(Family::Gaussian, r01),
                            BivariateCopula(Family::Gaussian, r12),
                            BivariateCopula(Family::Independence));
  const auto u = truth.sample(2000, 7);
  const auto fit = select_structure(u);
  std::set<std::pair<int, int>> tree0;
  for (const auto& e : fit.edges())
    if (e.tree == 0)
      tree0.insert({ std::min(e.first, e.second), std::max(e.first, e.second) });
    else {
      EXPECT_EQ(std::min(e.first, e.second), 0);
      EXPECT_EQ(std::max(e.first, e.second), 2);
      EXPECT_EQ(e.cond, std::vector<int>{ 1 });
    }
  EXPECT_EQ(tree0, (std::set<std::pair<int, int>>{ { 0, 1 }, { 1, 2 } }));
}

TEST(SelectStructure, TwoDimensionsSingleEdge)
{
  RVineModel v(RVineStructure::dvine(2));
  v.set_copula(1, 0, BivariateCopula(Family::Clayton, 2.0));
  const auto fit = select_structure(v.sample(500, 8));
  ASSERT_EQ(fit.edges().size(), 1u);
  EXPECT_EQ(fit.edges()[0].tree, 0);
}

TEST(SelectStructure, NeedsThirtyRows)
{
  RVineModel v(RVineStructure::dvine(3));
  EXPECT_THROW(select_structure(v.sample(29, 1)), std::invalid_argument);
  EXPECT_NO_THROW(select_structure(v.sample(30, 1)));
}

TEST(SelectStructure, IndependentDataStaysNearIndependence)
{
  RVineModel truth(RVineStructure::dvine(4));
  const auto u = truth.sample(2000, 9);
  const auto fit = select_structure(u);
  int nonindep = 0;
  for (const auto& e : fit.edges()) {
    if (e.copula.family() != Family::Independence)
      ++nonindep;
    // every edge is kept only with AIC <= 0
    EXPECT_LE(e.copula.aic(), 0.0);
    if (e.tree == 0)
      EXPECT_EQ(e.copula.family(),
                select_family(column(u, e.first), column(u, e.second)).family());
  }
  EXPECT_EQ(fit.kappa(), nonindep);
  EXPECT_LE(fit.aic(), 0.0);
  EXPECT_LT(std::abs(fit.loglik()), 3.0 * fit.edges().size());
}

TEST(SelectStructure, RandomFitsAreValidAndConsistent)
{
  Rng r(10);
  for (int rep = 0; rep < 12; ++rep) {
    const int d = 2 + rep % 6;
    GaussianCopulaModel g(random_corr(d, r));
    const auto u = g.sample(300, 100 + rep);
    const auto fit = select_structure(u);
    EXPECT_TRUE(is_valid_structure(fit.structure().matrix()));
    EXPECT_EQ(static_cast<int>(fit.edges().size()), d * (d - 1) / 2);
    // per-tree edge counts
    std::vector<int> per_tree(d, 0);
    for (const auto& e : fit.edges())
      ++per_tree[e.tree];
    for (int t = 0; t + 1 < d; ++t)
      EXPECT_EQ(per_tree[t], d - 1 - t);
    // sequential loglik equals the joint density of the assembled vine
    EXPECT_NEAR(fit.loglik(), fit.loglik(u), 1e-6 * (1 + std::abs(fit.loglik())))
      << "d=" << d;
    EXPECT_GE(fit.loglik(), 0.0);
  }
}

TEST(SelectStructure, FitSampleRefit)
{
  const auto truth = dvine3(BivariateCopula(Family::Clayton, 2.0),
                            BivariateCopula(Family::Gumbel, 1.6),
                            BivariateCopula(Family::Frank, 2.0));
  const auto fit = select_structure(truth.sample(10000, 11));
  const auto refit = select_structure(fit.sample(10000, 12));
  auto key = [](const VineEdge& e) {
    return std::make_tuple(std::min(e.first, e.second), std::max(e.first, e.second), e.cond);
  };
  std::map<decltype(key(VineEdge{})), double> fit_tau;
  for (const auto& e : fit.edges())
    fit_tau[key(e)] = e.copula.tau();
  for (const auto& e : refit.edges()) {
    ASSERT_TRUE(fit_tau.count(key(e)));
    EXPECT_NEAR(e.copula.tau(), fit_tau[key(e)], 0.05);
  }
  for (const auto& e : truth.edges())
    EXPECT_NEAR(e.copula.tau(), fit_tau[key(e)], 0.05);
}

TEST(RVineModel, JsonRoundTrip)
{
  Rng r(13);
  GaussianCopulaModel g(random_corr(5, r));
  const auto fit = select_structure(g.sample(400, 14));
  nlohmann::json j = fit;
  EXPECT_EQ(j["edges"].size(), 10u);
  EXPECT_EQ(j["structure"].size(), 25u);
  const auto back = j.get<RVineModel>();
  EXPECT_EQ(back.structure().matrix(), fit.structure().matrix());
  EXPECT_EQ(back.kappa(), fit.kappa());
  const auto u = g.sample(50, 15);
  EXPECT_NEAR(back.loglik(u), fit.loglik(u), 1e-12);
}
