#pragma once

#include <map>
#include <utility>
#include <vector>

#include "se3reg/pairwise.hpp"

namespace se3reg {

// Correspondences on edge (i, j): pairs.p lives in scan i's local frame,
// pairs.q in scan j's. The joint residual is |M_i p - M_j q|.
struct ViewEdge {
  int i = 0;
  int j = 0;
  CorrespondenceSet corrs;
};

// N scans with absolute motions (scan-local -> global) and correspondence
// edges. Gauge fixing pins motions[0] to the identity.
struct ViewGraph {
  int n = 0;
  std::vector<RigidMotion> motions;
  std::vector<ViewEdge> edges;
};

// Row block of the stacked linear system for one correspondence on edge
// (i, j): e(v) = |block_i v_i + block_j v_j - b| with
// block_i = [-[M_i p]x | I3], block_j = [[M_j q]x | -I3], b = M_j q - M_i p.
struct EdgeTerm {
  int i = 0;
  int j = 0;
  Mat36 block_i;
  Mat36 block_j;
  Vec3 b;
};

// Assembled weighted normal equations over the free scans (scan 0's six
// columns are structurally absent). Block (bi, bj) refers to free-scan
// indices, i.e. scan index minus one.
struct NormalSystem {
  int free_scans = 0;
  std::map<std::pair<int, int>, Mat6> blocks;
  Eigen::VectorXd rhs;
};

struct MultiviewResult {
  ViewGraph graph;
  ConvergenceTrace trace;
  bool converged = false;
};

bool is_connected(const ViewGraph& g);

// Throws DisconnectedGraph when the edges do not span all scans.
std::vector<EdgeTerm> build_multiview_terms(const ViewGraph& g);

NormalSystem assemble_normal_system(const std::vector<EdgeTerm>& terms,
                                    const std::vector<double>& weights, int n);

// Pivot-ratio rank test; meant for the unweighted system, whose rank equals
// that of any positively weighted one. Throws DegenerateGeometry.
void check_system_rank(const NormalSystem& sys);

// Solves the assembled system (dense for small problems, sparse LDLT
// otherwise). Throws DegenerateGeometry when the factorization breaks down.
Eigen::VectorXd solve_normal_system(const NormalSystem& sys);

// k_irls rounds of weights + stacked solve; returns the 6(N-1) update with
// scan 0 pinned.
Eigen::VectorXd stacked_irls_solve(const std::vector<EdgeTerm>& terms,
                                   const LossKind& loss, int k_irls,
                                   double floor, int n);

// Joint robust registration: relinearize all edges, solve the collated
// system by IRLS, update M_i <- exp(v_i^) M_i for every free scan. The input
// motions are the initial guess; the gauge is fixed up front and scan 0 is
// never updated. Terminates when |v| <= n * epsilon or max_outer.
MultiviewResult estimate_multiview(const ViewGraph& g,
                                   const SolverConfig& config);

// Left-composes every motion with inverse(motions[0]); motions[0] becomes
// exactly the identity and all relative motions are preserved.
ViewGraph fix_gauge(const ViewGraph& g);

// Robust cost over all edges (multiview analogue of robust_cost).
double multiview_cost(const ViewGraph& g, const LossKind& loss);

}  // namespace se3reg
