#include <sstream>

#include <gtest/gtest.h>

#include "pvmpi/gaussian_copula.hpp"
#include "pvmpi/mpi.hpp"
#include "pvmpi/scenarios.hpp"

using namespace pvmpi;

namespace {

Eigen::MatrixXd tenths()
{
  Eigen::MatrixXd s(10, 1);
  for (int i = 0; i < 10; ++i)
    s(i, 0) = (i + 1) / 10.0;
  return s;
}

// Exhaustive per-row check, kept separate from the library code.
double brute_coverage(const Eigen::MatrixXd& s, const std::vector<double>& l,
                      const std::vector<double>& h)
{
  int in = 0;
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    int ok = 0;
    for (Eigen::Index d = 0; d < s.cols(); ++d)
      ok += (s(r, d) >= l[d] && s(r, d) <= h[d]);
    in += ok == s.cols();
  }
  return double(in) / s.rows();
}

std::vector<QuantileCurve> fan(int d)
{
  std::vector<QuantileCurve> out;
  for (int i = 0; i < d; ++i) {
    std::vector<double> v;
    for (double a : default_levels())
      v.push_back(0.1 + 0.7 * a - 0.02 * i);
    out.emplace_back(default_levels(), v);
  }
  return out;
}

} // namespace

TEST(Mpi, InitialBoxAlreadyCovers)
{
  const auto b = widen_to_coverage(tenths(), { 0.28 }, { 0.72 }, 0.5);
  EXPECT_EQ(b.lower[0], 0.28);
  EXPECT_EQ(b.upper[0], 0.72);
  EXPECT_DOUBLE_EQ(b.coverage, 0.5);
}

TEST(Mpi, WidensToNearestScenarios)
{
  const auto s = tenths();
  // one widening round: [0.4, 0.6], coverage 0.3
  EXPECT_NEAR(brute_coverage(s, { 0.4 }, { 0.6 }), 0.3, 1e-12);
  const auto b = widen_to_coverage(s, { 0.45 }, { 0.55 }, 0.5);
  EXPECT_NEAR(b.lower[0], 0.3, 1e-12);
  EXPECT_NEAR(b.upper[0], 0.7, 1e-12);
  EXPECT_DOUBLE_EQ(b.coverage, 0.5);
}

TEST(Mpi, EnvelopeWhenCoverageUnreachable)
{
  const auto s = tenths();
  const auto b = widen_to_coverage(s, { 0.1 }, { 1.0 }, 0.99);
  EXPECT_EQ(b.coverage, 1.0);
  EXPECT_EQ(b.lower[0], 0.1);
  EXPECT_EQ(b.upper[0], 1.0);
}

TEST(Mpi, Errors)
{
  EXPECT_THROW(widen_to_coverage(Eigen::MatrixXd(0, 1), { 0 }, { 1 }, 0.5),
               std::invalid_argument);
  EXPECT_THROW(widen_to_coverage(tenths(), { 0 }, { 1 }, 1.0), std::invalid_argument);
  EXPECT_THROW(volume(std::vector<double>{ 0.5 }, std::vector<double>{ 0.4 }),
               std::invalid_argument);
}

TEST(Coverage, HandCounts)
{
  Eigen::MatrixXd s(3, 2);
  s << 0.1, 0.1, 0.5, 0.5, 0.9, 0.9;
  EXPECT_EQ(coverage_count(s, std::vector<double>{ 0.1, 0.1 },
                           std::vector<double>{ 0.9, 0.9 }),
            1.0);
  EXPECT_DOUBLE_EQ(coverage_count(s, std::vector<double>{ 0.0, 0.0 },
                                  std::vector<double>{ 0.6, 0.6 }),
                   2.0 / 3.0);
}

TEST(Coverage, GridQuadrantMatchesBruteForce)
{
  Eigen::MatrixXd s(4, 2);
  s << 0.25, 0.25, 0.25, 0.75, 0.75, 0.25, 0.75, 0.75;
  const std::vector<double> l{ 0.0, 0.5 }, h{ 0.5, 1.0 };
  EXPECT_EQ(coverage_count(s, l, h), brute_coverage(s, l, h));
  EXPECT_EQ(coverage_count(s, l, h), 0.25);
  Rng r(1);
  for (int rep = 0; rep < 200; ++rep) {
    Eigen::MatrixXd x(7, 3);
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 3; ++j)
        x(i, j) = std::round(r.uniform() * 5) / 5;
    std::vector<double> lo(3), hi(3);
    for (int j = 0; j < 3; ++j) {
      lo[j] = std::round(r.uniform() * 5) / 5;
      hi[j] = lo[j] + std::round(r.uniform() * 5) / 5;
    }
    EXPECT_EQ(coverage_count(x, lo, hi), brute_coverage(x, lo, hi));
  }
}

TEST(Volume, Products)
{
  EXPECT_EQ(volume(std::vector<double>{ 0.2, 0.3 }, std::vector<double>{ 0.2, 0.9 }), 0.0);
  EXPECT_NEAR(volume(std::vector<double>{ 0.1, 0.2 }, std::vector<double>{ 0.3, 0.7 }),
              0.1, 1e-15);
  std::vector<double> l(11, 0.25), h(11, 0.75);
  EXPECT_NEAR(volume(l, h), 4.8828125e-4, 1e-15);
}

TEST(Mpi, CoverageAtLeastAlphaOrEnvelope)
{
  Rng r(2);
  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(5, 5, 0.6);
  c.diagonal().setOnes();
  GaussianCopulaModel g(c);
  const auto cs = fan(5);
  for (int rep = 0; rep < 10; ++rep) {
    const auto scen = generate(g, cs, 200, 100 + rep).values;
    for (double a : default_levels()) {
      const auto b = build_mpi(scen, cs, a);
      EXPECT_NEAR(b.coverage, brute_coverage(scen, b.lower, b.upper), 1e-12);
      const Eigen::RowVectorXd lo = scen.colwise().minCoeff();
      const bool envelope =
        b.coverage == 1.0 && std::equal(b.lower.begin(), b.lower.end(), lo.data());
      EXPECT_TRUE(b.coverage >= a || envelope);
      for (std::size_t d = 0; d < b.dim(); ++d)
        EXPECT_LE(b.lower[d], b.upper[d]);
    }
  }
}

TEST(Mpi, NestedAcrossLevels)
{
  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(11, 11, 0.5);
  c.diagonal().setOnes();
  GaussianCopulaModel g(c);
  const auto cs = fan(11);
  for (int rep = 0; rep < 5; ++rep) {
    const auto scen = generate(g, cs, 500, 200 + rep).values;
    const auto set = build_mpi_set(scen, cs, default_levels());
    ASSERT_EQ(set.boxes.size(), 19u);
    for (std::size_t i = 1; i < set.boxes.size(); ++i) {
      const auto& a = set.boxes[i - 1];
      const auto& b = set.boxes[i];
      for (std::size_t d = 0; d < 11; ++d) {
        EXPECT_LE(b.lower[d], a.lower[d]);
        EXPECT_GE(b.upper[d], a.upper[d]);
      }
      EXPECT_GE(b.coverage, a.coverage);
      EXPECT_GE(b.coverage, set.alphas[i]);
      EXPECT_GE(volume(b), volume(a));
    }
  }
}

TEST(Mpi, UpiBoxUsesCentralQuantiles)
{
  const auto b = upi_box(fan(1), 0.5);
  EXPECT_NEAR(b.lower[0], 0.1 + 0.7 * 0.25, 1e-12);
  EXPECT_NEAR(b.upper[0], 0.1 + 0.7 * 0.75, 1e-12);
}

TEST(MpiCsv, RoundTrip)
{
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(3, 3);
  GaussianCopulaModel g(c);
  const auto cs = fan(3);
  std::vector<MPISet> sets;
  for (int t = 0; t < 2; ++t) {
    const auto scen = generate(g, cs, 100, t).values;
    sets.push_back(build_mpi_set(scen, cs, default_levels(),
                                 parse_date("2013-02-01") + std::chrono::days(t)));
  }
  std::stringstream buf;
  write_mpi_csv(buf, sets);
  const auto back = read_mpi_csv(buf);
  ASSERT_EQ(back.size(), 2u);
  for (int t = 0; t < 2; ++t) {
    EXPECT_EQ(back[t].date, sets[t].date);
    EXPECT_EQ(back[t].alphas, sets[t].alphas);
    for (std::size_t a = 0; a < 19; ++a) {
      EXPECT_EQ(back[t].boxes[a].lower, sets[t].boxes[a].lower);
      EXPECT_EQ(back[t].boxes[a].upper, sets[t].boxes[a].upper);
    }
  }
}
