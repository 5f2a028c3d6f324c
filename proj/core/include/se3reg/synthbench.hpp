#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "se3reg/correspondence.hpp"
#include "se3reg/multiview.hpp"
#include "se3reg/pairwise.hpp"

namespace se3reg::bench {

enum class ModelKind { Sphere, Cube, Blobs };

ModelKind model_from_name(const std::string& name);
std::string model_name(ModelKind kind);

// Built-in test models so the harness needs no external data: points on a
// unit sphere, on the surface of a cube, or a composite of Gaussian blobs.
PointCloud make_model(ModelKind kind, std::size_t count, std::uint64_t seed);

// Maximum pairwise extent. Exact for clouds up to 5,000 points; larger
// clouds use the bounding-box diagonal as an upper bound.
double surface_diameter(const PointCloud& cloud);

struct SyntheticPair {
  PointCloud src;         // the model
  PointCloud dst;         // transformed model + noise
  CorrespondenceSet corrs;  // index-aligned pairs, outliers re-pointed
  RigidMotion gt;         // maps src onto the noise-free dst
  double diameter = 0.0;
  double sigma = 0.0;     // absolute noise std (sigma_rel x diameter)
  double outlier_fraction = 0.0;
  std::uint64_t seed = 0;
};

struct PairOptions {
  double angle_max = 0.5;        // radians
  bool exact_angle = false;      // draw exactly angle_max instead of U[0, max]
  double sigma_rel = 0.0;        // noise std in diameter units
  double outlier_fraction = 0.0;
  double translation_scale = 0.25;  // per-axis U[-s, s] x diameter
};

// Deterministic given (model, options, seed).
SyntheticPair generate_pair(const PointCloud& model, const PairOptions& opts,
                            std::uint64_t seed);

struct BenchRow {
  std::string method;  // "intrinsic" or "extrinsic"
  std::string loss;
  int k_irls = 0;
  double sigma = 0.0;     // relative (diameter units), as configured
  double outliers = 0.0;
  std::uint64_t seed = 0;
  double rae_deg = 0.0;
  double tne = 0.0;
  double rmse = 0.0;  // over ground-truth correspondences, diameter units
  int k_outer = 0;
  double ms = 0.0;
};

// Fills the error metrics and k_outer; the run metadata and timing are the
// caller's. RAE in degrees, TNE in scene units, RMSE in diameter units over
// the uncorrupted ground-truth correspondences.
BenchRow evaluate(const RegistrationResult& run, const SyntheticPair& pair);

std::string csv_header();
std::string csv_row(const BenchRow& row);

// Medians/means over the rows (median RAE/TNE, mean/max RMSE, mean time).
nlohmann::json summarize(const std::vector<BenchRow>& rows);

struct BenchOptions {
  ModelKind model = ModelKind::Sphere;
  std::size_t points = 1000;
  PairOptions pair;
  int trials = 100;
  std::uint64_t seed = 0;
  SolverConfig solver;
  int threads = 1;
  bool timing = true;  // when false the ms column is written as 0
};

// One row per trial; trial t uses the derived seed mix(seed, 1 + t), so the
// output is independent of the thread count.
std::vector<BenchRow> run_bench(const BenchOptions& opts);

struct ConvergenceRun {
  std::string method;  // "extrinsic" or "intrinsic"
  int k_irls = 1;
  std::vector<double> update_norms;  // per outer iteration
  std::vector<double> costs;
  bool converged = false;
};

struct ConvergenceReport {
  std::vector<ConvergenceRun> runs;
  std::vector<double> eps_list;
  int max_outer = 100;

  // First outer iteration whose update norm reaches eps; max_outer when the
  // run never got there.
  int k_outer(const ConvergenceRun& run, double eps) const;
};

// Runs the four configurations of the line-process comparison on one pair:
// extrinsic k_irls=1 and intrinsic k_irls in {1,2,3}, all with the L-half
// loss, down to the tightest epsilon requested.
ConvergenceReport convergence_compare(const SyntheticPair& pair,
                                      const std::vector<double>& eps_list,
                                      int max_outer = 100);

// Synthetic multiview problem: gt absolute motions (gt[0] = identity), a
// view graph carrying corrupted correspondence sets, and the clean sets for
// evaluation.
struct SyntheticViewSet {
  std::vector<RigidMotion> gt;
  ViewGraph graph;                    // motions initialized to the gt
  std::vector<ViewEdge> clean_edges;  // uncorrupted copies of graph.edges
  double diameter = 0.0;
  double sigma = 0.0;
};

struct ViewSetOptions {
  int views = 6;
  std::size_t pairs_per_edge = 300;
  double angle_max = 0.5;
  double translation_scale = 0.25;
  double sigma_rel = 0.0;
  double outlier_fraction = 0.0;
  bool ring_edges = true;  // ring + two chords; otherwise all pairs
};

SyntheticViewSet generate_viewset(const PointCloud& model,
                                  const ViewSetOptions& opts,
                                  std::uint64_t seed);

// RMS of |M_i p - M_j q| over the given edges (gauge invariant).
double edge_rmse(const std::vector<RigidMotion>& motions,
                 const std::vector<ViewEdge>& edges);

}  // namespace se3reg::bench
