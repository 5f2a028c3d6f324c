#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "se3reg/pairwise.hpp"

namespace se3reg {

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // empty, or one per point; carried through I/O

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !normals.empty(); }
};

// Exact nearest-neighbor index (axis-aligned kd-tree, median splits).
// Immutable after construction and safe to share across threads.
class SpatialIndex {
 public:
  explicit SpatialIndex(const PointCloud& cloud);

  struct Hit {
    int index = -1;
    double distance = 0.0;
  };
  Hit nearest(const Vec3& query) const;

  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    int left = -1;
    int right = -1;
    int begin = 0;
    int end = 0;
  };

  int build(int begin, int end);
  void search(int node, const Vec3& query, Hit& best) const;

  std::vector<Vec3> points_;  // reordered copy
  std::vector<int> ids_;      // original index per reordered point
  std::vector<Node> nodes_;
  int root_ = -1;
};

struct IcpConfig {
  SolverConfig solver;  // L-half by default
  int max_icp_rounds = 50;
  double prune_multiplier = 2.5;  // reject pairs beyond this x median distance
  int outer_pipeline_rounds = 3;
};

// Pairs every src point q with the dst point nearest to apply(m, q), then
// drops pairs farther than prune_multiplier x the median match distance.
// Throws EmptyAfterPrune when nothing survives.
CorrespondenceSet nn_correspondences(const PointCloud& src,
                                     const PointCloud& dst,
                                     const RigidMotion& m,
                                     double prune_multiplier);
CorrespondenceSet nn_correspondences(const PointCloud& src,
                                     const SpatialIndex& dst_index,
                                     const PointCloud& dst,
                                     const RigidMotion& m,
                                     double prune_multiplier);

// Alternates nearest-neighbor matching with warm-started robust pairwise
// estimation until the motion change |log(dM)| <= epsilon or max_icp_rounds.
RegistrationResult robust_icp_pair(const PointCloud& src, const PointCloud& dst,
                                   const RigidMotion& m0, const IcpConfig& cfg);

// Relative motion measurement between graph nodes, in the consistency
// convention M_j ~ motion * M_i. `count` weighs spanning-tree selection
// (usually the number of supporting correspondences).
struct RelativeMotion {
  int i = 0;
  int j = 0;
  RigidMotion motion;
  std::size_t count = 1;
};

// Absolute motions by breadth-first composition from node 0 along a
// maximum-count spanning tree. Throws DisconnectedGraph.
std::vector<RigidMotion> spanning_tree_init(
    const std::vector<RelativeMotion>& measurements, int n);

struct MotionAverageOptions {
  double epsilon = 1e-9;  // terminate when |stacked update| <= n * epsilon
  int max_rounds = 100;
  double residual_floor = 1e-12;
};

// Robust Lie-algebraic averaging: per edge the consistency residual
// r_ij = log(M_ij M_i M_j^-1), re-solved through the linearized system
// sum_ij w_ij |v_j - v_i - r_ij|^2 with L-half weights until the update
// stalls. Node 0 stays pinned to the identity; the output is gauge-fixed.
std::vector<RigidMotion> motion_average(
    const std::vector<RelativeMotion>& measurements,
    const std::vector<RigidMotion>& init,
    const MotionAverageOptions& opts = {});

// Robust multiview ICP over an explicit edge set: per pipeline round, run
// robust_icp_pair on every edge and re-average the absolute motions.
// Returns gauge-fixed scan-to-global motions (scan 0 = identity).
std::vector<RigidMotion> multiview_icp(
    const std::vector<PointCloud>& scans,
    const std::vector<std::pair<int, int>>& edges, const IcpConfig& cfg);

}  // namespace se3reg
