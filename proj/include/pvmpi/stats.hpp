#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

namespace pvmpi {

// Clipping bound for uniforms entering normal scores or copula densities.
inline constexpr double kUniformEps = 1e-6;

// ------- standard normal

inline double normal_cdf(double x)
{
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

inline double normal_pdf(double x)
{
  static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double normal_quantile(double p)
{
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0)
      return -INFINITY;
    if (p == 1.0)
      return INFINITY;
    throw std::domain_error("normal_quantile: probability outside [0,1]");
  }
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

inline double clip_unit(double u, double eps = kUniformEps)
{
  return std::clamp(u, eps, 1.0 - eps);
}

// ------- random numbers
//
// Uniforms and normals are derived from raw 64-bit engine output so that
// streams are identical across standard library implementations.

class SplitMix64
{
public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t operator()()
  {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

private:
  std::uint64_t state_;
};

// xoshiro256** seeded through SplitMix64.
class Rng
{
public:
  explicit Rng(std::uint64_t seed)
  {
    SplitMix64 sm(seed);
    for (auto& s : s_)
      s = sm();
  }

  std::uint64_t next()
  {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on the open interval (0,1).
  double uniform()
  {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() { return normal_quantile(uniform()); }

private:
  static std::uint64_t rotl(std::uint64_t x, int k)
  {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

// FNV-1a, used to turn stream names into seed offsets.
inline std::uint64_t hash_name(std::string_view name)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Named sub-seed: splitmix64(master ^ fnv1a(name) + index).
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::string_view name,
                                 std::uint64_t index = 0)
{
  SplitMix64 sm(master ^ hash_name(name));
  sm();
  SplitMix64 inner(sm() + index);
  return inner();
}

// ------- rank statistics

// Kendall's tau-a, (concordant - discordant) / (n choose 2), computed in
// O(n log n) by counting inversions (Knight's algorithm). Tied pairs count
// as neither concordant nor discordant.
inline double kendall_tau(std::span<const double> x, std::span<const double> y)
{
  if (x.size() != y.size())
    throw std::invalid_argument("kendall_tau: samples differ in length");
  const std::size_t n = x.size();
  if (n < 2)
    throw std::invalid_argument("kendall_tau: need at least two observations");

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });

  const auto n0 = static_cast<double>(n) * (n - 1) / 2.0;
  double ties_x = 0.0, ties_xy = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && x[idx[j]] == x[idx[i]])
      ++j;
    const double run = static_cast<double>(j - i);
    ties_x += run * (run - 1) / 2.0;
    for (std::size_t k = i; k < j;) {
      std::size_t m = k + 1;
      while (m < j && y[idx[m]] == y[idx[k]])
        ++m;
      const double r = static_cast<double>(m - k);
      ties_xy += r * (r - 1) / 2.0;
      k = m;
    }
    i = j;
  }

  // merge sort on y, counting swaps
  std::vector<double> ys(n), buf(n);
  for (std::size_t i = 0; i < n; ++i)
    ys[i] = y[idx[i]];
  double swaps = 0.0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n);
      const std::size_t hi = std::min(lo + 2 * width, n);
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (ys[j] < ys[i]) {
          swaps += static_cast<double>(mid - i);
          buf[k++] = ys[j++];
        } else {
          buf[k++] = ys[i++];
        }
      }
      while (i < mid)
        buf[k++] = ys[i++];
      while (j < hi)
        buf[k++] = ys[j++];
    }
    std::swap(ys, buf);
  }

  double ties_y = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && ys[j] == ys[i])
      ++j;
    const double run = static_cast<double>(j - i);
    ties_y += run * (run - 1) / 2.0;
    i = j;
  }

  const double diff = n0 - ties_x - ties_y + ties_xy - 2.0 * swaps;
  return std::clamp(diff / n0, -1.0, 1.0);
}

// Pearson correlation.
inline double correlation(std::span<const double> x, std::span<const double> y)
{
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> sample, Cdf&& cdf)
{
  std::sort(sample.begin(), sample.end());
  const auto n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({ d, (i + 1) / n - f, f - i / n });
  }
  return d;
}

// Pairwise (cascade) summation for order-stable reductions.
inline double pairwise_sum(std::span<const double> v)
{
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v)
      s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double mean(std::span<const double> v)
{
  if (v.empty())
    throw std::invalid_argument("mean: empty input");
  return pairwise_sum(v) / static_cast<double>(v.size());
}

} // namespace pvmpi
