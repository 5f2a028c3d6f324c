#include "se3reg/multiview.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <chrono>
#include <numeric>

#include "se3reg/errors.hpp"

namespace se3reg {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void validate(const ViewGraph& g) {
  if (g.n < 1 || static_cast<int>(g.motions.size()) != g.n) {
    throw Error("view graph has inconsistent scan count");
  }
  for (const auto& e : g.edges) {
    if (e.i < 0 || e.j < 0 || e.i >= g.n || e.j >= g.n || e.i >= e.j) {
      throw Error("view graph edge indices must satisfy 0 <= i < j < n");
    }
  }
}

// Solve threshold: below this many free scans a dense factorization wins.
constexpr int kDenseLimit = 64;

}  // namespace

bool is_connected(const ViewGraph& g) {
  if (g.n <= 1) return true;
  std::vector<int> parent(g.n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  int components = g.n;
  for (const auto& e : g.edges) {
    const int a = find(e.i);
    const int b = find(e.j);
    if (a != b) {
      parent[a] = b;
      --components;
    }
  }
  return components == 1;
}

std::vector<EdgeTerm> build_multiview_terms(const ViewGraph& g) {
  validate(g);
  if (!is_connected(g)) {
    throw DisconnectedGraph("view graph does not connect all scans");
  }
  std::size_t total = 0;
  for (const auto& e : g.edges) total += e.corrs.size();
  std::vector<EdgeTerm> terms;
  terms.reserve(total);
  for (const auto& e : g.edges) {
    for (const auto& c : e.corrs.pairs) {
      EdgeTerm t;
      t.i = e.i;
      t.j = e.j;
      const Vec3 yi = apply(g.motions[e.i], c.p);
      const Vec3 yj = apply(g.motions[e.j], c.q);
      t.block_i.leftCols<3>() = -hat3(yi);
      t.block_i.rightCols<3>() = Mat3::Identity();
      t.block_j.leftCols<3>() = hat3(yj);
      t.block_j.rightCols<3>() = -Mat3::Identity();
      t.b = yj - yi;
      terms.push_back(t);
    }
  }
  return terms;
}

NormalSystem assemble_normal_system(const std::vector<EdgeTerm>& terms,
                                    const std::vector<double>& weights,
                                    int n) {
  NormalSystem sys;
  sys.free_scans = n - 1;
  sys.rhs = Eigen::VectorXd::Zero(6 * sys.free_scans);

  auto add_block = [&sys](int bi, int bj, const Mat6& m) {
    auto [it, inserted] = sys.blocks.try_emplace({bi, bj}, m);
    if (!inserted) it->second += m;
  };

  for (std::size_t k = 0; k < terms.size(); ++k) {
    const EdgeTerm& t = terms[k];
    const double w = weights[k];
    const int bi = t.i - 1;  // free-scan index; -1 means pinned
    const int bj = t.j - 1;
    if (bi >= 0) {
      add_block(bi, bi, w * t.block_i.transpose() * t.block_i);
      sys.rhs.segment<6>(6 * bi) += w * t.block_i.transpose() * t.b;
    }
    if (bj >= 0) {
      add_block(bj, bj, w * t.block_j.transpose() * t.block_j);
      sys.rhs.segment<6>(6 * bj) += w * t.block_j.transpose() * t.b;
    }
    if (bi >= 0 && bj >= 0) {
      const Mat6 off = w * t.block_i.transpose() * t.block_j;
      add_block(bi, bj, off);
      add_block(bj, bi, off.transpose());
    }
  }
  return sys;
}

void check_system_rank(const NormalSystem& sys) {
  const int dim = 6 * sys.free_scans;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& [key, block] : sys.blocks) {
    h.block<6, 6>(6 * key.first, 6 * key.second) = block;
  }
  const Eigen::VectorXd d = Eigen::LDLT<Eigen::MatrixXd>(h).vectorD();
  if (!(d.minCoeff() > 1e-12 * d.maxCoeff())) {
    throw DegenerateGeometry("multiview system is rank deficient");
  }
}

Eigen::VectorXd solve_normal_system(const NormalSystem& sys) {
  const int dim = 6 * sys.free_scans;
  Eigen::VectorXd v;
  if (sys.free_scans <= kDenseLimit) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    for (const auto& [key, block] : sys.blocks) {
      h.block<6, 6>(6 * key.first, 6 * key.second) = block;
    }
    v = Eigen::LDLT<Eigen::MatrixXd>(h).solve(sys.rhs);
  } else {
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(sys.blocks.size() * 36);
    for (const auto& [key, block] : sys.blocks) {
      for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 6; ++c) {
          triplets.emplace_back(6 * key.first + r, 6 * key.second + c,
                                block(r, c));
        }
      }
    }
    Eigen::SparseMatrix<double> h(dim, dim);
    h.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(h);
    if (ldlt.info() != Eigen::Success) {
      throw DegenerateGeometry("multiview system factorization failed");
    }
    v = ldlt.solve(sys.rhs);
  }
  if (!v.allFinite()) {
    throw DegenerateGeometry("weighted multiview system broke down");
  }
  return v;
}

Eigen::VectorXd stacked_irls_solve(const std::vector<EdgeTerm>& terms,
                                   const LossKind& loss, int k_irls,
                                   double floor, int n) {
  check_system_rank(assemble_normal_system(
      terms, std::vector<double>(terms.size(), 1.0), n));
  Eigen::VectorXd v = Eigen::VectorXd::Zero(6 * (n - 1));
  std::vector<double> weights(terms.size());
  for (int round = 0; round < k_irls; ++round) {
    for (std::size_t k = 0; k < terms.size(); ++k) {
      const EdgeTerm& t = terms[k];
      Vec3 r = -t.b;
      if (t.i > 0) r += t.block_i * v.segment<6>(6 * (t.i - 1));
      if (t.j > 0) r += t.block_j * v.segment<6>(6 * (t.j - 1));
      weights[k] = weight(loss, r.norm(), floor);
    }
    v = solve_normal_system(assemble_normal_system(terms, weights, n));
  }
  return v;
}

MultiviewResult estimate_multiview(const ViewGraph& g,
                                   const SolverConfig& config) {
  validate(g);
  if (!is_connected(g)) {
    throw DisconnectedGraph("view graph does not connect all scans");
  }

  MultiviewResult result;
  result.graph = fix_gauge(g);
  ViewGraph& graph = result.graph;
  if (graph.n == 1) {
    result.converged = true;
    return result;
  }

  double mu = config.anneal ? config.anneal->mu0 : config.loss.mu;
  const double tolerance = static_cast<double>(graph.n) * config.epsilon;

  for (int k = 1; k <= config.max_outer; ++k) {
    const auto t0 = Clock::now();
    if (config.anneal && config.loss.kind == Loss::GemanMcClure) {
      mu = anneal(*config.anneal, mu, k);
    }
    const LossKind loss = config.loss.kind == Loss::GemanMcClure
                              ? LossKind::geman_mcclure(mu)
                              : config.loss;

    const auto terms = build_multiview_terms(graph);
    double cost = 0.0;
    for (const auto& t : terms) cost += loss_value(loss, t.b.norm());

    const Eigen::VectorXd v = stacked_irls_solve(
        terms, loss, config.k_irls, config.residual_floor, graph.n);
    for (int i = 1; i < graph.n; ++i) {
      const Twist vi = Twist::from_vec(v.segment<6>(6 * (i - 1)));
      graph.motions[i] = compose(exp_se3(vi), graph.motions[i]);
      if (k % 100 == 0) {
        graph.motions[i].rotation = orthonormalized(graph.motions[i].rotation);
      }
    }

    result.trace.push_back({cost, v.norm(), ms_since(t0)});
    if (v.norm() <= tolerance) {
      result.converged = true;
      break;
    }
  }
  return result;
}

ViewGraph fix_gauge(const ViewGraph& g) {
  validate(g);
  ViewGraph out = g;
  const RigidMotion anchor = inverse(g.motions[0]);
  for (int i = 1; i < out.n; ++i) {
    out.motions[i] = compose(anchor, g.motions[i]);
  }
  out.motions[0] = RigidMotion{};
  return out;
}

double multiview_cost(const ViewGraph& g, const LossKind& loss) {
  double cost = 0.0;
  for (const auto& e : g.edges) {
    for (const auto& c : e.corrs.pairs) {
      const Vec3 r = apply(g.motions[e.i], c.p) - apply(g.motions[e.j], c.q);
      cost += loss_value(loss, r.norm());
    }
  }
  return cost;
}

}  // namespace se3reg
