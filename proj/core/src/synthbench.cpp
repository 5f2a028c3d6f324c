#include "se3reg/synthbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <thread>

#include "se3reg/errors.hpp"
#include "se3reg/rng.hpp"

namespace se3reg::bench {

namespace {

using Clock = std::chrono::steady_clock;

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + mid));
  }
  return m;
}

void bounding_box(const PointCloud& cloud, Vec3& lo, Vec3& hi) {
  lo = hi = cloud.points.front();
  for (const auto& p : cloud.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

ModelKind model_from_name(const std::string& name) {
  if (name == "sphere") return ModelKind::Sphere;
  if (name == "cube") return ModelKind::Cube;
  if (name == "blobs") return ModelKind::Blobs;
  throw Error("unknown model '" + name + "' (expected sphere, cube or blobs)");
}

std::string model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Sphere:
      return "sphere";
    case ModelKind::Cube:
      return "cube";
    case ModelKind::Blobs:
      return "blobs";
  }
  return "?";
}

PointCloud make_model(ModelKind kind, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  PointCloud cloud;
  cloud.points.reserve(count);
  switch (kind) {
    case ModelKind::Sphere:
      for (std::size_t k = 0; k < count; ++k) {
        cloud.points.push_back(rng.unit_vector());
      }
      break;
    case ModelKind::Cube:
      for (std::size_t k = 0; k < count; ++k) {
        // Uniform over the six faces of the [-1, 1]^3 cube.
        Vec3 p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
               rng.uniform(-1.0, 1.0)};
        const std::uint64_t face = rng.uniform_index(6);
        p[face % 3] = face < 3 ? 1.0 : -1.0;
        cloud.points.push_back(p);
      }
      break;
    case ModelKind::Blobs: {
      // Fixed composite of anisotropic Gaussian blobs (body, head, two
      // ears, base) roughly bunny-shaped.
      struct Blob {
        Vec3 center;
        Vec3 scale;
        double share;
      };
      const Blob blobs[] = {
          {{0.0, 0.0, 0.0}, {0.55, 0.45, 0.40}, 0.45},
          {{0.55, 0.0, 0.45}, {0.25, 0.25, 0.25}, 0.25},
          {{0.65, -0.12, 0.80}, {0.06, 0.06, 0.22}, 0.10},
          {{0.65, 0.12, 0.80}, {0.06, 0.06, 0.22}, 0.10},
          {{-0.15, 0.0, -0.45}, {0.45, 0.35, 0.12}, 0.10},
      };
      for (std::size_t k = 0; k < count; ++k) {
        const double pick = rng.uniform();
        double acc = 0.0;
        const Blob* chosen = &blobs[0];
        for (const auto& b : blobs) {
          acc += b.share;
          if (pick < acc) {
            chosen = &b;
            break;
          }
        }
        cloud.points.push_back(chosen->center +
                               chosen->scale.cwiseProduct(rng.normal3(1.0)));
      }
      break;
    }
  }
  return cloud;
}

double surface_diameter(const PointCloud& cloud) {
  if (cloud.size() < 2) throw Error("diameter needs at least 2 points");
  if (cloud.size() <= 5000) {
    double best = 0.0;
    for (std::size_t a = 0; a + 1 < cloud.size(); ++a) {
      for (std::size_t b = a + 1; b < cloud.size(); ++b) {
        best = std::max(best,
                        (cloud.points[a] - cloud.points[b]).squaredNorm());
      }
    }
    return std::sqrt(best);
  }
  Vec3 lo, hi;
  bounding_box(cloud, lo, hi);
  return (hi - lo).norm();
}

SyntheticPair generate_pair(const PointCloud& model, const PairOptions& opts,
                            std::uint64_t seed) {
  SyntheticPair pair;
  pair.src = model;
  pair.diameter = surface_diameter(model);
  pair.sigma = opts.sigma_rel * pair.diameter;
  pair.outlier_fraction = opts.outlier_fraction;
  pair.seed = seed;

  Rng rng(seed);
  const Vec3 axis = rng.unit_vector();
  const double angle =
      opts.exact_angle ? opts.angle_max : opts.angle_max * rng.uniform();
  const double ts = opts.translation_scale * pair.diameter;
  const Vec3 t{rng.uniform(-ts, ts), rng.uniform(-ts, ts),
               rng.uniform(-ts, ts)};
  pair.gt = RigidMotion{exp_so3(angle * axis), t};

  const std::size_t s = model.size();
  pair.dst.points.resize(s);
  pair.corrs.pairs.resize(s);
  for (std::size_t k = 0; k < s; ++k) {
    Vec3 p = apply(pair.gt, model.points[k]);
    if (pair.sigma > 0.0) p += rng.normal3(pair.sigma);
    pair.dst.points[k] = p;
    pair.corrs.pairs[k] = {p, model.points[k]};
  }

  const auto n_outliers =
      static_cast<std::size_t>(std::llround(opts.outlier_fraction * s));
  if (n_outliers > 0) {
    Vec3 lo, hi;
    bounding_box(pair.dst, lo, hi);
    // Partial Fisher-Yates selects n_outliers distinct indices.
    std::vector<std::size_t> idx(s);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t k = 0; k < n_outliers; ++k) {
      std::swap(idx[k], idx[k + rng.uniform_index(s - k)]);
      const Vec3 sample{rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()),
                        rng.uniform(lo.z(), hi.z())};
      pair.corrs.pairs[idx[k]].p = sample;
    }
  }
  return pair;
}

BenchRow evaluate(const RegistrationResult& run, const SyntheticPair& pair) {
  BenchRow row;
  row.sigma = pair.diameter > 0.0 ? pair.sigma / pair.diameter : 0.0;
  row.outliers = pair.outlier_fraction;
  row.seed = pair.seed;
  row.rae_deg = rotation_angle_error(run.motion.rotation, pair.gt.rotation) *
                180.0 / std::numbers::pi;
  row.tne = translation_norm_error(run.motion, pair.gt);
  double sq = 0.0;
  for (const auto& p : pair.src.points) {
    sq += (apply(pair.gt, p) - apply(run.motion, p)).squaredNorm();
  }
  row.rmse = std::sqrt(sq / static_cast<double>(pair.src.size())) /
             pair.diameter;
  row.k_outer = static_cast<int>(run.trace.size());
  for (const auto& t : run.trace) row.ms += t.elapsed_ms;
  return row;
}

std::string csv_header() {
  return "method,loss,k_irls,sigma,outliers,seed,rae_deg,tne,rmse,k_outer,ms";
}

std::string csv_row(const BenchRow& row) {
  std::string out = row.method;
  out += ',';
  out += row.loss;
  out += ',';
  out += std::to_string(row.k_irls);
  out += ',';
  out += format_double(row.sigma);
  out += ',';
  out += format_double(row.outliers);
  out += ',';
  out += std::to_string(row.seed);
  out += ',';
  out += format_double(row.rae_deg);
  out += ',';
  out += format_double(row.tne);
  out += ',';
  out += format_double(row.rmse);
  out += ',';
  out += std::to_string(row.k_outer);
  out += ',';
  out += format_double(row.ms);
  return out;
}

nlohmann::json summarize(const std::vector<BenchRow>& rows) {
  nlohmann::json j;
  j["trials"] = rows.size();
  if (rows.empty()) return j;
  j["method"] = rows.front().method;
  j["loss"] = rows.front().loss;
  j["k_irls"] = rows.front().k_irls;
  j["sigma"] = rows.front().sigma;
  j["outliers"] = rows.front().outliers;

  std::vector<double> rae, tne, rmse, ms, kout;
  for (const auto& r : rows) {
    rae.push_back(r.rae_deg);
    tne.push_back(r.tne);
    rmse.push_back(r.rmse);
    ms.push_back(r.ms);
    kout.push_back(static_cast<double>(r.k_outer));
  }
  const auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  j["median_rae_deg"] = median(rae);
  j["median_tne"] = median(tne);
  j["mean_rmse"] = mean(rmse);
  j["max_rmse"] = *std::max_element(rmse.begin(), rmse.end());
  j["median_k_outer"] = median(kout);
  j["mean_ms"] = mean(ms);
  return j;
}

std::vector<BenchRow> run_bench(const BenchOptions& opts) {
  const PointCloud model =
      make_model(opts.model, opts.points, Rng::mix(opts.seed, 0));
  const double diameter = surface_diameter(model);

  std::vector<BenchRow> rows(opts.trials);
  auto run_trial = [&](int t) {
    const std::uint64_t trial_seed = Rng::mix(opts.seed, 1 + t);
    const SyntheticPair pair = generate_pair(model, opts.pair, trial_seed);
    SolverConfig solver = opts.solver;
    solver.residual_floor = 1e-12 * diameter;
    const auto t0 = Clock::now();
    const auto result = estimate_pairwise(pair.corrs, solver);
    const double ms =
        std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    BenchRow row = evaluate(result, pair);
    row.method = solver.parametrization == Parametrization::Extrinsic
                     ? "extrinsic"
                     : "intrinsic";
    row.loss = loss_name(solver.loss);
    row.k_irls = solver.k_irls;
    row.ms = opts.timing ? ms : 0.0;
    rows[t] = row;
  };

  const int threads = std::max(1, opts.threads);
  if (threads == 1) {
    for (int t = 0; t < opts.trials; ++t) run_trial(t);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (int t = w; t < opts.trials; t += threads) run_trial(t);
      });
    }
    for (auto& th : pool) th.join();
  }
  return rows;
}

int ConvergenceReport::k_outer(const ConvergenceRun& run, double eps) const {
  for (std::size_t k = 0; k < run.update_norms.size(); ++k) {
    if (run.update_norms[k] <= eps) return static_cast<int>(k + 1);
  }
  return max_outer;
}

ConvergenceReport convergence_compare(const SyntheticPair& pair,
                                      const std::vector<double>& eps_list,
                                      int max_outer) {
  ConvergenceReport report;
  report.eps_list = eps_list;
  report.max_outer = max_outer;
  const double eps_min =
      eps_list.empty() ? 1e-7
                       : *std::min_element(eps_list.begin(), eps_list.end());

  struct Setup {
    Parametrization param;
    int k_irls;
  };
  const Setup setups[] = {{Parametrization::Extrinsic, 1},
                          {Parametrization::Intrinsic, 1},
                          {Parametrization::Intrinsic, 2},
                          {Parametrization::Intrinsic, 3}};
  for (const auto& setup : setups) {
    SolverConfig config;
    config.loss = LossKind::l_half();
    config.k_irls = setup.k_irls;
    config.epsilon = eps_min;
    config.max_outer = max_outer;
    config.parametrization = setup.param;
    config.residual_floor = 1e-12 * pair.diameter;
    const auto result = estimate_pairwise(pair.corrs, config);

    ConvergenceRun run;
    run.method = setup.param == Parametrization::Extrinsic ? "extrinsic"
                                                            : "intrinsic";
    run.k_irls = setup.k_irls;
    run.converged = result.converged;
    for (const auto& t : result.trace) {
      run.update_norms.push_back(t.update_norm);
      run.costs.push_back(t.cost);
    }
    report.runs.push_back(std::move(run));
  }
  return report;
}

SyntheticViewSet generate_viewset(const PointCloud& model,
                                  const ViewSetOptions& opts,
                                  std::uint64_t seed) {
  if (opts.views < 2) throw Error("a view set needs at least 2 views");
  SyntheticViewSet set;
  set.diameter = surface_diameter(model);
  set.sigma = opts.sigma_rel * set.diameter;

  Rng rng(seed);
  set.gt.resize(opts.views);
  for (int i = 1; i < opts.views; ++i) {
    const Vec3 axis = rng.unit_vector();
    const double angle = opts.angle_max * rng.uniform();
    const double ts = opts.translation_scale * set.diameter;
    const Vec3 t{rng.uniform(-ts, ts), rng.uniform(-ts, ts),
                 rng.uniform(-ts, ts)};
    set.gt[i] = RigidMotion{exp_so3(angle * axis), t};
  }

  std::vector<std::pair<int, int>> edges;
  if (opts.ring_edges && opts.views >= 3) {
    for (int i = 0; i + 1 < opts.views; ++i) edges.push_back({i, i + 1});
    edges.push_back({0, opts.views - 1});
    if (opts.views >= 5) {
      edges.push_back({0, 2});
      edges.push_back({1, 3});
    }
  } else {
    for (int i = 0; i < opts.views; ++i) {
      for (int j = i + 1; j < opts.views; ++j) edges.push_back({i, j});
    }
  }

  Vec3 lo, hi;
  bounding_box(model, lo, hi);

  set.graph.n = opts.views;
  set.graph.motions = set.gt;
  for (const auto& [i, j] : edges) {
    ViewEdge noisy{i, j, {}};
    ViewEdge clean{i, j, {}};
    const RigidMotion inv_i = inverse(set.gt[i]);
    const RigidMotion inv_j = inverse(set.gt[j]);
    for (std::size_t s = 0; s < opts.pairs_per_edge; ++s) {
      const Vec3 x = model.points[rng.uniform_index(model.size())];
      const Vec3 pi = apply(inv_i, x);
      const Vec3 pj = apply(inv_j, x);
      clean.corrs.pairs.push_back({pi, pj});
      Vec3 pi_n = pi;
      Vec3 pj_n = pj;
      if (set.sigma > 0.0) {
        pi_n += rng.normal3(set.sigma);
        pj_n += rng.normal3(set.sigma);
      }
      if (rng.uniform() < opts.outlier_fraction) {
        pj_n = apply(inv_j, Vec3{rng.uniform(lo.x(), hi.x()),
                                 rng.uniform(lo.y(), hi.y()),
                                 rng.uniform(lo.z(), hi.z())});
      }
      noisy.corrs.pairs.push_back({pi_n, pj_n});
    }
    set.graph.edges.push_back(std::move(noisy));
    set.clean_edges.push_back(std::move(clean));
  }
  return set;
}

double edge_rmse(const std::vector<RigidMotion>& motions,
                 const std::vector<ViewEdge>& edges) {
  double sq = 0.0;
  std::size_t count = 0;
  for (const auto& e : edges) {
    for (const auto& c : e.corrs.pairs) {
      sq += (apply(motions[e.i], c.p) - apply(motions[e.j], c.q)).squaredNorm();
      ++count;
    }
  }
  return count == 0 ? 0.0 : std::sqrt(sq / static_cast<double>(count));
}

}  // namespace se3reg::bench
