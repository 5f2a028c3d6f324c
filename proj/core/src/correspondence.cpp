#include "se3reg/correspondence.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <queue>

#include "se3reg/errors.hpp"
#include "se3reg/multiview.hpp"

namespace se3reg {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

constexpr int kLeafSize = 8;

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[a] = b;
    return true;
  }
};

}  // namespace

SpatialIndex::SpatialIndex(const PointCloud& cloud)
    : points_(cloud.points), ids_(cloud.size()) {
  if (cloud.empty()) throw Error("cannot index an empty point cloud");
  std::iota(ids_.begin(), ids_.end(), 0);
  nodes_.reserve(2 * cloud.size() / kLeafSize + 2);
  root_ = build(0, static_cast<int>(points_.size()));
}

int SpatialIndex::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = points_[begin];
  Vec3 hi = points_[begin];
  for (int k = begin + 1; k < end; ++k) {
    lo = lo.cwiseMin(points_[k]);
    hi = hi.cwiseMax(points_[k]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);

  const int mid = begin + (end - begin) / 2;
  // Reorder points and ids together around the median on the widest axis.
  std::vector<int> perm(end - begin);
  std::iota(perm.begin(), perm.end(), begin);
  std::nth_element(perm.begin(), perm.begin() + (mid - begin), perm.end(),
                   [&](int a, int b) {
                     return points_[a][axis] < points_[b][axis];
                   });
  std::vector<Vec3> pts(end - begin);
  std::vector<int> ids(end - begin);
  for (int k = 0; k < end - begin; ++k) {
    pts[k] = points_[perm[k]];
    ids[k] = ids_[perm[k]];
  }
  std::copy(pts.begin(), pts.end(), points_.begin() + begin);
  std::copy(ids.begin(), ids.end(), ids_.begin() + begin);

  nodes_[id].axis = axis;
  nodes_[id].split = points_[mid][axis];
  nodes_[id].left = build(begin, mid);
  nodes_[id].right = build(mid, end);
  return id;
}

void SpatialIndex::search(int node, const Vec3& query, Hit& best) const {
  const Node& nd = nodes_[node];
  if (nd.axis < 0) {
    for (int k = nd.begin; k < nd.end; ++k) {
      const double d = (points_[k] - query).squaredNorm();
      if (d < best.distance) {
        best.distance = d;
        best.index = ids_[k];
      }
    }
    return;
  }
  const double diff = query[nd.axis] - nd.split;
  const int near = diff < 0.0 ? nd.left : nd.right;
  const int far = diff < 0.0 ? nd.right : nd.left;
  search(near, query, best);
  if (diff * diff < best.distance) search(far, query, best);
}

SpatialIndex::Hit SpatialIndex::nearest(const Vec3& query) const {
  Hit best;
  best.distance = std::numeric_limits<double>::infinity();
  search(root_, query, best);
  best.distance = std::sqrt(best.distance);
  return best;
}

CorrespondenceSet nn_correspondences(const PointCloud& src,
                                     const PointCloud& dst,
                                     const RigidMotion& m,
                                     double prune_multiplier) {
  const SpatialIndex index(dst);
  return nn_correspondences(src, index, dst, m, prune_multiplier);
}

CorrespondenceSet nn_correspondences(const PointCloud& src,
                                     const SpatialIndex& dst_index,
                                     const PointCloud& dst,
                                     const RigidMotion& m,
                                     double prune_multiplier) {
  if (src.empty() || dst.empty()) {
    throw Error("nearest-neighbor matching needs nonempty clouds");
  }
  std::vector<double> dist(src.size());
  std::vector<int> match(src.size());
  for (std::size_t k = 0; k < src.size(); ++k) {
    const auto hit = dst_index.nearest(apply(m, src.points[k]));
    dist[k] = hit.distance;
    match[k] = hit.index;
  }
  std::vector<double> sorted = dist;
  const std::size_t mid = sorted.size() / 2;
  std::nth_element(sorted.begin(), sorted.begin() + mid, sorted.end());
  const double cutoff = prune_multiplier * sorted[mid];

  CorrespondenceSet corrs;
  corrs.pairs.reserve(src.size());
  for (std::size_t k = 0; k < src.size(); ++k) {
    if (dist[k] <= cutoff) {
      corrs.pairs.push_back({dst.points[match[k]], src.points[k]});
    }
  }
  if (corrs.empty()) {
    throw EmptyAfterPrune("all correspondences rejected by distance pruning");
  }
  return corrs;
}

namespace {

double inlier_rmse(const CorrespondenceSet& corrs, const RigidMotion& m) {
  double sq = 0.0;
  for (const auto& c : corrs.pairs) {
    sq += (c.p - apply(m, c.q)).squaredNorm();
  }
  return std::sqrt(sq / static_cast<double>(corrs.size()));
}

RegistrationResult icp_pair_impl(const PointCloud& src, const PointCloud& dst,
                                 const RigidMotion& m0, const IcpConfig& cfg,
                                 std::size_t* final_pairs) {
  const SpatialIndex index(dst);
  RegistrationResult result;
  result.motion = m0;
  for (int round = 1; round <= cfg.max_icp_rounds; ++round) {
    const auto t0 = Clock::now();
    const auto corrs = nn_correspondences(src, index, dst, result.motion,
                                          cfg.prune_multiplier);
    const auto fit = estimate_pairwise(corrs, cfg.solver, result.motion);
    const double change =
        log_se3(compose(fit.motion, inverse(result.motion))).norm();
    result.motion = fit.motion;
    // Trace cost records the pruned-inlier RMSE under the updated motion;
    // the robust cost is not comparable across rounds because the
    // correspondence set changes.
    result.trace.push_back(
        {inlier_rmse(corrs, result.motion), change, ms_since(t0)});
    if (final_pairs) *final_pairs = corrs.size();
    if (change <= cfg.solver.epsilon) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace

RegistrationResult robust_icp_pair(const PointCloud& src, const PointCloud& dst,
                                   const RigidMotion& m0,
                                   const IcpConfig& cfg) {
  return icp_pair_impl(src, dst, m0, cfg, nullptr);
}

std::vector<RigidMotion> spanning_tree_init(
    const std::vector<RelativeMotion>& measurements, int n) {
  if (n < 1) throw Error("spanning_tree_init needs at least one node");
  for (const auto& m : measurements) {
    if (m.i < 0 || m.j < 0 || m.i >= n || m.j >= n || m.i == m.j) {
      throw Error("relative motion indices out of range");
    }
  }

  // Maximum-count spanning tree (Kruskal on descending count).
  std::vector<std::size_t> order(measurements.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return measurements[a].count > measurements[b].count;
  });
  UnionFind uf(n);
  std::vector<std::vector<std::pair<int, std::size_t>>> tree(n);
  for (const std::size_t k : order) {
    const auto& m = measurements[k];
    if (uf.unite(m.i, m.j)) {
      tree[m.i].push_back({m.j, k});
      tree[m.j].push_back({m.i, k});
    }
  }

  std::vector<RigidMotion> abs(n);
  std::vector<bool> seen(n, false);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = true;
  while (!frontier.empty()) {
    const int at = frontier.front();
    frontier.pop();
    for (const auto& [next, k] : tree[at]) {
      if (seen[next]) continue;
      const auto& m = measurements[k];
      // Measurement convention: M_j = motion * M_i.
      abs[next] = at == m.i ? compose(m.motion, abs[at])
                            : compose(inverse(m.motion), abs[at]);
      seen[next] = true;
      frontier.push(next);
    }
  }
  if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
    throw DisconnectedGraph("relative motions do not span all nodes");
  }
  return abs;
}

std::vector<RigidMotion> motion_average(
    const std::vector<RelativeMotion>& measurements,
    const std::vector<RigidMotion>& init, const MotionAverageOptions& opts) {
  const int n = static_cast<int>(init.size());
  if (n < 1) throw Error("motion_average needs at least one node");
  UnionFind uf(n);
  for (const auto& m : measurements) {
    if (m.i < 0 || m.j < 0 || m.i >= n || m.j >= n || m.i == m.j) {
      throw Error("relative motion indices out of range");
    }
    uf.unite(m.i, m.j);
  }
  if (n > 1) {
    for (int i = 1; i < n; ++i) {
      if (uf.find(i) != uf.find(0)) {
        throw DisconnectedGraph("relative motions do not span all nodes");
      }
    }
  }

  // Pin node 0: the measurement convention M_ij ~ M_j M_i^-1 is invariant
  // under right-composition, so gauge with M_i <- M_i M_0^-1.
  std::vector<RigidMotion> abs(n);
  const RigidMotion anchor = inverse(init[0]);
  for (int i = 1; i < n; ++i) abs[i] = compose(init[i], anchor);
  if (n == 1) return abs;

  const double tolerance = static_cast<double>(n) * opts.epsilon;
  for (int round = 1; round <= opts.max_rounds; ++round) {
    NormalSystem sys;
    sys.free_scans = n - 1;
    sys.rhs = Eigen::VectorXd::Zero(6 * (n - 1));
    auto add_block = [&sys](int bi, int bj, const Mat6& m) {
      auto [it, inserted] = sys.blocks.try_emplace({bi, bj}, m);
      if (!inserted) it->second += m;
    };

    for (const auto& m : measurements) {
      const Vec6 r =
          log_se3(compose(compose(m.motion, abs[m.i]), inverse(abs[m.j])))
              .vec();
      // The first round solves the plain least-squares consensus; starting
      // the reweighting from the tree init would hand an outlier edge on the
      // tree a near-zero residual and let it dominate.
      const double w = round == 1 ? 1.0
                                  : weight(LossKind::l_half(), r.norm(),
                                           opts.residual_floor);
      const int bi = m.i - 1;
      const int bj = m.j - 1;
      if (bj >= 0) {
        add_block(bj, bj, w * Mat6::Identity());
        sys.rhs.segment<6>(6 * bj) += w * r;
      }
      if (bi >= 0) {
        add_block(bi, bi, w * Mat6::Identity());
        sys.rhs.segment<6>(6 * bi) -= w * r;
      }
      if (bi >= 0 && bj >= 0) {
        add_block(bi, bj, -w * Mat6::Identity());
        add_block(bj, bi, -w * Mat6::Identity());
      }
    }

    const Eigen::VectorXd v = solve_normal_system(sys);
    for (int i = 1; i < n; ++i) {
      abs[i] = compose(exp_se3(Twist::from_vec(v.segment<6>(6 * (i - 1)))),
                       abs[i]);
    }
    if (v.norm() <= tolerance) break;
  }
  return abs;
}

std::vector<RigidMotion> multiview_icp(
    const std::vector<PointCloud>& scans,
    const std::vector<std::pair<int, int>>& edges, const IcpConfig& cfg) {
  const int n = static_cast<int>(scans.size());
  if (n < 1) throw Error("multiview_icp needs at least one scan");
  std::vector<RigidMotion> global(n);  // scan-local -> global
  if (n == 1) return global;

  UnionFind uf(n);
  for (const auto& [i, j] : edges) {
    if (i < 0 || j < 0 || i >= n || j >= n || i >= j) {
      throw Error("edge indices must satisfy 0 <= i < j < n");
    }
    uf.unite(i, j);
  }
  for (int i = 1; i < n; ++i) {
    if (uf.find(i) != uf.find(0)) {
      throw DisconnectedGraph("edge set does not connect all scans");
    }
  }

  // The averaging step runs in the inverse (pose) convention, where the ICP
  // estimate for edge (i, j) is directly the measurement P_j P_i^-1.
  std::vector<RigidMotion> pose(n);
  for (int round = 1; round <= cfg.outer_pipeline_rounds; ++round) {
    std::vector<RelativeMotion> measurements;
    measurements.reserve(edges.size());
    for (const auto& [i, j] : edges) {
      const RigidMotion warm = compose(inverse(global[j]), global[i]);
      std::size_t pairs = 0;
      const auto fit = icp_pair_impl(scans[i], scans[j], warm, cfg, &pairs);
      measurements.push_back({i, j, fit.motion, pairs});
    }
    const std::vector<RigidMotion> init =
        round == 1 ? spanning_tree_init(measurements, n) : pose;
    MotionAverageOptions opts;
    opts.residual_floor = cfg.solver.residual_floor;
    pose = motion_average(measurements, init, opts);
    for (int i = 0; i < n; ++i) global[i] = inverse(pose[i]);
    global[0] = RigidMotion{};
  }
  return global;
}

}  // namespace se3reg
