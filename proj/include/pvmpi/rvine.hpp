#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "pvmpi/bicop.hpp"
#include "pvmpi/stats.hpp"

namespace pvmpi {

// Variables are 0-based. A conditioning set is a bit mask over variables.
using VarMask = std::uint32_t;

inline VarMask mask_of(const std::vector<int>& vars)
{
  VarMask m = 0;
  for (int v : vars)
    m |= VarMask{ 1 } << v;
  return m;
}

inline std::vector<int> vars_of(VarMask m)
{
  std::vector<int> out;
  for (int v = 0; m; ++v, m >>= 1)
    if (m & 1u)
      out.push_back(v);
  return out;
}

// One pair-copula of the vine: the copula couples F(first | cond) and
// F(second | cond), in that argument order.
struct VineEdge
{
  int tree = 0; // 0-based tree level; |cond| == tree
  int first = 0;
  int second = 0;
  std::vector<int> cond;
  BivariateCopula copula;
};

// R-vine array in the lower-triangular convention: column c has the
// variable m(c, c) on the diagonal; for r > c the entry m(r, c) is the
// partner of m(c, c) in tree D-1-r (0-based), conditioned on the entries
// below it, m(r+1..D-1, c). Entries above the diagonal are -1.
//
// Sampling runs from the last column to the first, so m(D-1, D-1) is drawn
// first and m(0, 0) last.
class RVineStructure
{
public:
  RVineStructure() = default;

  explicit RVineStructure(Eigen::MatrixXi matrix)
    : m_(std::move(matrix))
  {
    check_shape();
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const Eigen::MatrixXi& matrix() const { return m_; }
  int operator()(int r, int c) const { return m_(r, c); }

  int tree_of_row(int r) const { return dim() - 1 - r; }

  std::vector<int> conditioning_set(int r, int c) const
  {
    std::vector<int> s;
    for (int k = r + 1; k < dim(); ++k)
      s.push_back(m_(k, c));
    std::sort(s.begin(), s.end());
    return s;
  }

  // Variables in sampling order.
  std::vector<int> sampling_order() const
  {
    std::vector<int> order;
    for (int c = dim() - 1; c >= 0; --c)
      order.push_back(m_(c, c));
    return order;
  }

  // D-vine on 0..D-1 (path 0-1-2-...); used for defaults and tests.
  static RVineStructure dvine(int d)
  {
    // Natural order: diag = 0..d-1 reversed into the sampling convention.
    Eigen::MatrixXi m = Eigen::MatrixXi::Constant(d, d, -1);
    for (int c = 0; c < d; ++c) {
      const int x = d - 1 - c; // variable on the diagonal
      m(c, c) = x;
      // partners of x: x-1 (tree 0), x-2 (tree 1), ...
      for (int t = 0; t < x; ++t)
        m(d - 1 - t, c) = x - 1 - t;
    }
    return RVineStructure(m);
  }

private:
  void check_shape() const
  {
    const int d = dim();
    if (m_.rows() != m_.cols() || d < 1)
      throw std::invalid_argument("structure matrix must be square");
    if (d > 30)
      throw std::invalid_argument("structure dimension limited to 30");
    std::vector<bool> seen(d, false);
    for (int c = 0; c < d; ++c) {
      const int x = m_(c, c);
      if (x < 0 || x >= d || seen[x])
        throw std::invalid_argument(
          "structure diagonal must be a permutation of 0..D-1");
      seen[x] = true;
    }
    for (int c = 0; c < d; ++c) {
      std::vector<int> below, later;
      for (int r = c + 1; r < d; ++r) {
        below.push_back(m_(r, c));
        later.push_back(m_(r, r));
      }
      std::sort(below.begin(), below.end());
      std::sort(later.begin(), later.end());
      if (below != later)
        throw std::invalid_argument(
          "structure column " + std::to_string(c) +
          " must list exactly the variables sampled before its diagonal");
    }
  }

  Eigen::MatrixXi m_;
};

namespace detail {

// Flat evaluation plan: every conditional distribution value F(var | mask)
// used by the vine lives in one slot.
struct PlanEdge
{
  int row, col;
  int in_first, in_second;   // slots of F(first | S), F(second | S)
  int out_first, out_second; // slots of F(first | S+second), F(second | S+first); -1 if unused
};

class VinePlan
{
public:
  VinePlan() = default;

  explicit VinePlan(const RVineStructure& s)
  {
    const int d = s.dim();
    for (int v = 0; v < d; ++v)
      slot_index_[{ v, 0 }] = v;
    nslots_ = d;

    // Inputs first, so that producibility can be checked tree by tree.
    std::map<std::pair<int, VarMask>, bool> produced;
    for (int v = 0; v < d; ++v)
      produced[{ v, 0 }] = true;

    for (int t = 0; t + 1 < d; ++t) {
      const int r = d - 1 - t;
      std::vector<std::pair<std::pair<int, VarMask>, std::pair<int, VarMask>>>
        outs;
      for (int c = 0; c < r; ++c) {
        const int x = s(c, c), y = s(r, c);
        const VarMask cond = mask_of(s.conditioning_set(r, c));
        const std::pair<int, VarMask> kx{ x, cond }, ky{ y, cond };
        for (const auto& k : { kx, ky })
          if (!produced.count(k))
            throw std::invalid_argument(
              "structure violates the proximity condition: F(" +
              std::to_string(k.first) + " | " + mask_str(k.second) +
              ") is not available in tree " + std::to_string(t));
        PlanEdge e{ r, c, slot(kx), slot(ky), -1, -1 };
        edges_.push_back(e);
        outs.push_back({ { x, cond | (VarMask{ 1 } << y) },
                         { y, cond | (VarMask{ 1 } << x) } });
      }
      for (const auto& [a, b] : outs) {
        produced[a] = true;
        produced[b] = true;
      }
    }
    // Register outputs only where a later edge reads them.
    std::map<std::pair<int, VarMask>, int> inputs;
    for (const auto& [k, idx] : slot_index_)
      inputs[k] = idx;
    for (auto& e : edges_) {
      const int x = s(e.col, e.col), y = s(e.row, e.col);
      const VarMask cond = mask_of(s.conditioning_set(e.row, e.col));
      auto fx = inputs.find({ x, cond | (VarMask{ 1 } << y) });
      auto fy = inputs.find({ y, cond | (VarMask{ 1 } << x) });
      e.out_first = fx == inputs.end() ? -1 : fx->second;
      e.out_second = fy == inputs.end() ? -1 : fy->second;
    }
    dim_ = d;
    cell_index_.assign(d * d, -1);
    for (std::size_t i = 0; i < edges_.size(); ++i)
      cell_index_[edges_[i].row * d + edges_[i].col] = static_cast<int>(i);
  }

  int nslots() const { return nslots_; }
  const std::vector<PlanEdge>& edges() const { return edges_; }
  const PlanEdge& cell(int r, int c) const
  {
    return edges_[cell_index_[r * dim_ + c]];
  }

  int slot_of(int var, VarMask cond) const
  {
    auto it = slot_index_.find({ var, cond });
    return it == slot_index_.end() ? -1 : it->second;
  }

private:
  int slot(std::pair<int, VarMask> key)
  {
    auto it = slot_index_.find(key);
    if (it != slot_index_.end())
      return it->second;
    slot_index_[key] = nslots_;
    return nslots_++;
  }

  static std::string mask_str(VarMask m)
  {
    std::string s = "{";
    for (int v : vars_of(m))
      s += (s.size() > 1 ? "," : "") + std::to_string(v);
    return s + "}";
  }

  std::map<std::pair<int, VarMask>, int> slot_index_;
  std::vector<PlanEdge> edges_;
  std::vector<int> cell_index_;
  int nslots_ = 0;
  int dim_ = 0;
};

} // namespace detail

// Throws std::invalid_argument when the matrix is not a regular vine.
inline void validate_structure(const Eigen::MatrixXi& m)
{
  detail::VinePlan plan{ RVineStructure(m) };
  (void)plan;
}

inline bool is_valid_structure(const Eigen::MatrixXi& m)
{
  try {
    validate_structure(m);
    return true;
  } catch (const std::invalid_argument&) {
    return false;
  }
}

class RVineModel
{
public:
  RVineModel() = default;

  // copulas(r, c) for r > c holds the pair-copula of cell (r, c), with
  // arguments ordered (diagonal variable, partner).
  RVineModel(RVineStructure structure,
             std::vector<std::vector<BivariateCopula>> copulas)
    : structure_(std::move(structure))
    , copulas_(std::move(copulas))
    , plan_(structure_)
  {
    const int d = dim();
    if (static_cast<int>(copulas_.size()) != d)
      throw std::invalid_argument("rvine: copula table has wrong size");
    for (auto& col : copulas_)
      if (static_cast<int>(col.size()) != d)
        throw std::invalid_argument("rvine: copula table has wrong size");
  }

  // Independence everywhere.
  explicit RVineModel(RVineStructure structure)
    : RVineModel(structure,
                 std::vector<std::vector<BivariateCopula>>(
                   structure.dim(),
                   std::vector<BivariateCopula>(structure.dim())))
  {}

  int dim() const { return structure_.dim(); }
  const RVineStructure& structure() const { return structure_; }

  const BivariateCopula& copula(int r, int c) const { return copulas_[r][c]; }
  void set_copula(int r, int c, BivariateCopula cop)
  {
    copulas_[r][c] = std::move(cop);
  }

  double loglik() const { return loglik_; }
  void set_loglik(double ll) { loglik_ = ll; }

  int kappa() const
  {
    int k = 0;
    for (const auto& e : plan_.edges())
      k += copulas_[e.row][e.col].npars();
    return k;
  }

  double aic() const { return -2.0 * loglik_ + 2.0 * kappa(); }
  double bic(std::size_t n) const
  {
    return -2.0 * loglik_ + kappa() * std::log(static_cast<double>(n));
  }

  std::vector<VineEdge> edges() const
  {
    std::vector<VineEdge> out;
    for (const auto& e : plan_.edges()) {
      out.push_back({ structure_.tree_of_row(e.row),
                      structure_(e.col, e.col),
                      structure_(e.row, e.col),
                      structure_.conditioning_set(e.row, e.col),
                      copulas_[e.row][e.col] });
    }
    return out;
  }

  // Sum over edges of log c_e at the h-function-propagated arguments.
  double log_pdf(const Eigen::Ref<const Eigen::RowVectorXd>& u) const
  {
    if (u.size() != dim())
      throw std::invalid_argument("rvine: dimension mismatch");
    std::vector<double> slot(plan_.nslots());
    for (int v = 0; v < dim(); ++v) {
      if (!(u(v) > 0.0 && u(v) < 1.0))
        throw std::invalid_argument("rvine: density arguments must lie in (0,1)");
      slot[v] = u(v);
    }
    double ll = 0.0;
    for (const auto& e : plan_.edges()) {
      const auto& cop = copulas_[e.row][e.col];
      const double a = slot[e.in_first], b = slot[e.in_second];
      if (cop.family() == Family::Independence) {
        if (e.out_first >= 0)
          slot[e.out_first] = a;
        if (e.out_second >= 0)
          slot[e.out_second] = b;
        continue;
      }
      const double ac = clip_unit(a, 1e-12), bc = clip_unit(b, 1e-12);
      ll += cop.log_pdf(ac, bc);
      if (e.out_first >= 0)
        slot[e.out_first] = cop.hfunc1(ac, bc);
      if (e.out_second >= 0)
        slot[e.out_second] = cop.hfunc2(ac, bc);
    }
    return ll;
  }

  double loglik(const Eigen::MatrixXd& u) const
  {
    if (u.cols() != dim())
      throw std::invalid_argument("rvine: dimension mismatch");
    double ll = 0.0;
    for (Eigen::Index t = 0; t < u.rows(); ++t)
      ll += log_pdf(u.row(t));
    return ll;
  }

  // Maps independent uniforms (one per variable, in sampling order) to a
  // draw from the vine by inverting the nested h-functions column by column.
  Eigen::RowVectorXd inverse_rosenblatt(std::span<const double> w) const
  {
    const int d = dim();
    std::vector<double> slot(plan_.nslots(), NAN);
    Eigen::RowVectorXd u(d);
    for (int c = d - 1, k = 0; c >= 0; --c, ++k) {
      const int x = structure_(c, c);
      double val = w[k];
      // highest tree first, down to tree 0
      for (int r = c + 1; r < d; ++r) {
        const auto& cop = copulas_[r][c];
        if (cop.family() == Family::Independence)
          continue;
        const double fy = slot[plan_.cell(r, c).in_second];
        val = cop.hinv1(clip_unit(val, 1e-15), clip_unit(fy, 1e-12));
      }
      u(x) = val;
      slot[x] = val;
      // forward pass: conditionals of this column for later columns
      for (int r = d - 1; r > c; --r) {
        const auto& e = plan_.cell(r, c);
        const auto& cop = copulas_[r][c];
        const double fx = slot[e.in_first], fy = slot[e.in_second];
        if (cop.family() == Family::Independence) {
          if (e.out_first >= 0)
            slot[e.out_first] = fx;
          if (e.out_second >= 0)
            slot[e.out_second] = fy;
          continue;
        }
        const double a = clip_unit(fx, 1e-12), b = clip_unit(fy, 1e-12);
        if (e.out_first >= 0)
          slot[e.out_first] = cop.hfunc1(a, b);
        if (e.out_second >= 0)
          slot[e.out_second] = cop.hfunc2(a, b);
      }
    }
    return u;
  }

  Eigen::MatrixXd sample(Eigen::Index n, std::uint64_t seed) const
  {
    if (n < 1)
      throw std::invalid_argument("rvine: need at least one sample");
    Rng rng(seed);
    Eigen::MatrixXd out(n, dim());
    std::vector<double> w(dim());
    for (Eigen::Index s = 0; s < n; ++s) {
      for (auto& x : w)
        x = rng.uniform();
      out.row(s) = inverse_rosenblatt(w);
    }
    return out;
  }

private:
  RVineStructure structure_;
  std::vector<std::vector<BivariateCopula>> copulas_;
  detail::VinePlan plan_;
  double loglik_ = 0.0;
};

namespace detail {

struct SelectedEdge
{
  int first, second;          // conditioned pair, first < second
  VarMask cond;
  int end_a, end_b;           // node indices in the tree this edge belongs to
  BivariateCopula copula;
  std::vector<double> h_first;  // F(first | cond + second)
  std::vector<double> h_second; // F(second | cond + first)
  VarMask span() const
  {
    return cond | (VarMask{ 1 } << first) | (VarMask{ 1 } << second);
  }
};

struct Candidate
{
  double weight;
  int a, b; // node indices
};

// Kruskal on |tau| with ties broken by (min node, max node).
inline std::vector<Candidate> max_spanning_tree(std::vector<Candidate> cands,
                                                int nodes)
{
  std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
    if (x.weight != y.weight)
      return x.weight > y.weight;
    if (std::min(x.a, x.b) != std::min(y.a, y.b))
      return std::min(x.a, x.b) < std::min(y.a, y.b);
    return std::max(x.a, x.b) < std::max(y.a, y.b);
  });
  std::vector<int> parent(nodes);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int i) {
    while (parent[i] != i)
      i = parent[i] = parent[parent[i]];
    return i;
  };
  std::vector<Candidate> tree;
  for (const auto& c : cands) {
    const int ra = find(c.a), rb = find(c.b);
    if (ra == rb)
      continue;
    parent[ra] = rb;
    tree.push_back(c);
    if (static_cast<int>(tree.size()) == nodes - 1)
      break;
  }
  return tree;
}

// Peels the selected trees into an R-vine array: the first conditioned
// variable of the top edge becomes the diagonal, its edges (one per tree)
// fill the column, and the process repeats on the remaining variables.
inline std::pair<RVineStructure, std::vector<std::vector<BivariateCopula>>>
edges_to_matrix(const std::vector<std::vector<SelectedEdge>>& trees, int d)
{
  Eigen::MatrixXi m = Eigen::MatrixXi::Constant(d, d, -1);
  std::vector<std::vector<BivariateCopula>> cops(d,
                                                 std::vector<BivariateCopula>(d));
  std::vector<std::vector<bool>> used(trees.size());
  for (std::size_t t = 0; t < trees.size(); ++t)
    used[t].assign(trees[t].size(), false);

  VarMask remaining = (d >= 32) ? ~VarMask{ 0 } : ((VarMask{ 1 } << d) - 1);
  for (int c = 0; c + 1 < d; ++c) {
    const int top = d - 2 - c;
    int x = -1;
    for (std::size_t i = 0; i < trees[top].size(); ++i)
      if (!used[top][i] && (trees[top][i].span() & ~remaining) == 0) {
        x = trees[top][i].first;
        break;
      }
    if (x < 0)
      throw std::logic_error("rvine: no edge left in top tree");
    m(c, c) = x;
    for (int t = 0; t <= top; ++t) {
      bool found = false;
      for (std::size_t i = 0; i < trees[t].size(); ++i) {
        const auto& e = trees[t][i];
        if (used[t][i] || (e.span() & ~remaining) != 0)
          continue;
        if (e.first != x && e.second != x)
          continue;
        used[t][i] = true;
        m(d - 1 - t, c) = e.first == x ? e.second : e.first;
        // All families are exchangeable, so the orientation swap to
        // (x, partner) leaves the copula unchanged.
        cops[d - 1 - t][c] = e.copula;
        found = true;
        break;
      }
      if (!found)
        throw std::logic_error("rvine: variable missing from tree " +
                               std::to_string(t));
    }
    remaining &= ~(VarMask{ 1 } << x);
  }
  m(d - 1, d - 1) = vars_of(remaining).front();
  return { RVineStructure(m), std::move(cops) };
}

} // namespace detail

// Sequential structure selection: each tree is the maximum spanning tree on
// |Kendall's tau| among the edges allowed by the proximity condition, each
// edge's family is chosen by AIC, and the next tree's pseudo-observations
// are the h-function outputs of the fitted edges.
inline RVineModel select_structure(const Eigen::MatrixXd& u)
{
  const auto n = u.rows();
  const int d = static_cast<int>(u.cols());
  if (d < 2)
    throw std::invalid_argument("select_structure: need at least 2 dimensions");
  if (n < 30)
    throw std::invalid_argument("select_structure: need at least 30 rows, got " +
                                std::to_string(n));

  std::vector<std::vector<double>> columns(d, std::vector<double>(n));
  for (int j = 0; j < d; ++j)
    for (Eigen::Index t = 0; t < n; ++t)
      columns[j][t] = clip_unit(u(t, j), 1e-12);

  auto fit_edge = [](int first, int second, VarMask cond, int end_a, int end_b,
                     const std::vector<double>& pf,
                     const std::vector<double>& ps) {
    detail::SelectedEdge e;
    e.first = first;
    e.second = second;
    e.cond = cond;
    e.end_a = end_a;
    e.end_b = end_b;
    e.copula = select_family(pf, ps);
    e.h_first.resize(pf.size());
    e.h_second.resize(pf.size());
    for (std::size_t i = 0; i < pf.size(); ++i) {
      e.h_first[i] = clip_unit(e.copula.hfunc1(pf[i], ps[i]), 1e-12);
      e.h_second[i] = clip_unit(e.copula.hfunc2(pf[i], ps[i]), 1e-12);
    }
    return e;
  };

  std::vector<std::vector<detail::SelectedEdge>> trees;

  // tree 0 on the variables
  {
    std::vector<detail::Candidate> cands;
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j)
        cands.push_back({ std::abs(kendall_tau(columns[i], columns[j])), i, j });
    std::vector<detail::SelectedEdge> tree;
    for (const auto& c : detail::max_spanning_tree(cands, d)) {
      const int a = std::min(c.a, c.b), b = std::max(c.a, c.b);
      tree.push_back(fit_edge(a, b, 0, a, b, columns[a], columns[b]));
    }
    trees.push_back(std::move(tree));
  }

  for (int t = 1; t + 1 < d; ++t) {
    const auto& prev = trees.back();
    const int nodes = static_cast<int>(prev.size());
    struct Link
    {
      int first, second;
      VarMask cond;
      const std::vector<double>* pf;
      const std::vector<double>* ps;
    };
    std::vector<detail::Candidate> cands;
    std::map<std::pair<int, int>, Link> links;
    for (int i = 0; i < nodes; ++i) {
      for (int j = i + 1; j < nodes; ++j) {
        const auto& ei = prev[i];
        const auto& ej = prev[j];
        const bool adjacent = ei.end_a == ej.end_a || ei.end_a == ej.end_b ||
                              ei.end_b == ej.end_a || ei.end_b == ej.end_b;
        if (!adjacent)
          continue;
        const VarMask cond = ei.span() & ej.span();
        const VarMask only_i = ei.span() & ~cond, only_j = ej.span() & ~cond;
        if (std::popcount(only_i) != 1 || std::popcount(only_j) != 1)
          continue;
        const int xi = std::countr_zero(only_i), xj = std::countr_zero(only_j);
        const auto* pi = xi == ei.first ? &ei.h_first : &ei.h_second;
        const auto* pj = xj == ej.first ? &ej.h_first : &ej.h_second;
        Link link = xi < xj ? Link{ xi, xj, cond, pi, pj }
                            : Link{ xj, xi, cond, pj, pi };
        links[{ i, j }] = link;
        cands.push_back({ std::abs(kendall_tau(*link.pf, *link.ps)), i, j });
      }
    }
    std::vector<detail::SelectedEdge> tree;
    for (const auto& c : detail::max_spanning_tree(cands, nodes)) {
      const auto& l = links.at({ std::min(c.a, c.b), std::max(c.a, c.b) });
      tree.push_back(
        fit_edge(l.first, l.second, l.cond, c.a, c.b, *l.pf, *l.ps));
    }
    trees.push_back(std::move(tree));
  }

  auto [structure, copulas] = detail::edges_to_matrix(trees, d);
  RVineModel model(std::move(structure), std::move(copulas));
  double ll = 0.0;
  for (const auto& tree : trees)
    for (const auto& e : tree)
      ll += e.copula.loglik();
  model.set_loglik(ll);
  return model;
}

inline void to_json(nlohmann::json& j, const RVineModel& m)
{
  std::vector<int> flat;
  for (int r = 0; r < m.dim(); ++r)
    for (int c = 0; c < m.dim(); ++c)
      flat.push_back(m.structure()(r, c));
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : m.edges())
    edges.push_back({ { "tree", e.tree },
                      { "cond_pair", { e.first, e.second } },
                      { "cond_set", e.cond },
                      { "family", std::string(family_name(e.copula.family())) },
                      { "theta", e.copula.parameter() } });
  j = nlohmann::json{ { "dim", m.dim() },
                      { "structure", flat },
                      { "edges", edges },
                      { "loglik", m.loglik() },
                      { "kappa", m.kappa() } };
}

inline void from_json(const nlohmann::json& j, RVineModel& m)
{
  const int d = j.at("dim").get<int>();
  const auto flat = j.at("structure").get<std::vector<int>>();
  if (static_cast<int>(flat.size()) != d * d)
    throw std::invalid_argument("rvine model: structure has wrong length");
  Eigen::MatrixXi mat(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c)
      mat(r, c) = r >= c ? flat[r * d + c] : -1;
  RVineStructure s(mat);
  RVineModel model(s);
  for (const auto& e : j.at("edges")) {
    const auto pair = e.at("cond_pair").get<std::vector<int>>();
    auto cond = e.value("cond_set", std::vector<int>{});
    std::sort(cond.begin(), cond.end());
    if (pair.size() != 2)
      throw std::invalid_argument("rvine model: cond_pair needs two entries");
    bool placed = false;
    for (int c = 0; c < d && !placed; ++c)
      for (int r = c + 1; r < d && !placed; ++r) {
        const int x = s(c, c), y = s(r, c);
        const bool same = (x == pair[0] && y == pair[1]) ||
                          (x == pair[1] && y == pair[0]);
        if (same && s.conditioning_set(r, c) == cond) {
          model.set_copula(r, c, e.get<BivariateCopula>());
          placed = true;
        }
      }
    if (!placed)
      throw std::invalid_argument("rvine model: edge " + e.dump() +
                                  " does not belong to the structure");
  }
  model.set_loglik(j.value("loglik", 0.0));
  m = std::move(model);
}

} // namespace pvmpi
