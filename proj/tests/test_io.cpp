#include "se3reg/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "oracles.hpp"
#include "se3reg/errors.hpp"
#include "se3reg/rng.hpp"

using namespace se3reg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("se3reg_io_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

PointCloud random_cloud(Rng& rng, std::size_t n, bool normals) {
  PointCloud c;
  for (std::size_t k = 0; k < n; ++k) {
    c.points.push_back(rng.normal3(10.0) * std::pow(10.0, rng.uniform(-6, 6)));
    if (normals) c.normals.push_back(rng.unit_vector());
  }
  return c;
}

}  // namespace

TEST_CASE("ply ascii roundtrip is bit exact") {
  TempDir dir;
  Rng rng(401);
  const PointCloud cloud = random_cloud(rng, 200, true);
  const auto path = dir.file("cloud.ply");
  io::write_ply(cloud, path);
  const PointCloud back = io::read_ply(path);
  REQUIRE(back.size() == cloud.size());
  REQUIRE(back.has_normals());
  for (std::size_t k = 0; k < cloud.size(); ++k) {
    CHECK(back.points[k] == cloud.points[k]);
    CHECK(back.normals[k] == cloud.normals[k]);
  }
}

TEST_CASE("ply binary roundtrip") {
  TempDir dir;
  Rng rng(403);
  const PointCloud cloud = random_cloud(rng, 150, false);
  const auto path = dir.file("cloud_bin.ply");
  io::write_ply(cloud, path, {.binary = true, .double_precision = true});
  const PointCloud back = io::read_ply(path);
  REQUIRE(back.size() == cloud.size());
  for (std::size_t k = 0; k < cloud.size(); ++k) {
    CHECK(back.points[k] == cloud.points[k]);
  }

  // float32 payloads read back within float precision.
  const auto path32 = dir.file("cloud_f32.ply");
  io::write_ply(cloud, path32, {.binary = true, .double_precision = false});
  const PointCloud f32 = io::read_ply(path32);
  for (std::size_t k = 0; k < cloud.size(); ++k) {
    CHECK(f32.points[k].x() ==
          static_cast<double>(static_cast<float>(cloud.points[k].x())));
  }
}

TEST_CASE("ply three-vertex ascii file") {
  TempDir dir;
  const auto path = dir.file("tiny.ply");
  write_text(path,
             "ply\n"
             "format ascii 1.0\n"
             "comment made by hand\n"
             "element vertex 3\n"
             "property float x\n"
             "property float y\n"
             "property float z\n"
             "end_header\n"
             "0 0 0\n"
             "1 0 0\n"
             "0 1 0\n");
  const PointCloud cloud = io::read_ply(path);
  REQUIRE(cloud.size() == 3);
  CHECK(cloud.points[1] == Vec3{1, 0, 0});
  CHECK_FALSE(cloud.has_normals());
}

TEST_CASE("ply extra properties are skipped") {
  TempDir dir;
  const auto path = dir.file("extra.ply");
  write_text(path,
             "ply\n"
             "format ascii 1.0\n"
             "element vertex 2\n"
             "property float intensity\n"
             "property double x\n"
             "property double y\n"
             "property double z\n"
             "end_header\n"
             "9 1 2 3\n"
             "9 4 5 6\n");
  const PointCloud cloud = io::read_ply(path);
  REQUIRE(cloud.size() == 2);
  CHECK(cloud.points[0] == Vec3{1, 2, 3});
  CHECK(cloud.points[1] == Vec3{4, 5, 6});
}

TEST_CASE("ply error reporting") {
  TempDir dir;

  const auto big_endian = dir.file("be.ply");
  write_text(big_endian,
             "ply\nformat binary_big_endian 1.0\nelement vertex 1\n"
             "property float x\nproperty float y\nproperty float z\n"
             "end_header\n");
  CHECK_THROWS_AS(io::read_ply(big_endian), UnsupportedFormat);

  const auto no_z = dir.file("noz.ply");
  write_text(no_z,
             "ply\nformat ascii 1.0\nelement vertex 1\n"
             "property float x\nproperty float y\nend_header\n0 0\n");
  CHECK_THROWS_AS(io::read_ply(no_z), ParseError);

  const auto bad_number = dir.file("badnum.ply");
  write_text(bad_number,
             "ply\nformat ascii 1.0\nelement vertex 1\n"
             "property float x\nproperty float y\nproperty float z\n"
             "end_header\n0 zero 0\n");
  try {
    io::read_ply(bad_number);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":8") != std::string::npos);
  }

  // Truncated binary payload names expected vs actual byte counts.
  const auto truncated = dir.file("trunc.ply");
  write_text(truncated,
             "ply\nformat binary_little_endian 1.0\nelement vertex 4\n"
             "property double x\nproperty double y\nproperty double z\n"
             "end_header\n"
             "only20bytes_of_data!");
  try {
    io::read_ply(truncated);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("96") != std::string::npos);
    CHECK(msg.find("20") != std::string::npos);
  }
}

TEST_CASE("correspondence files in both formats") {
  TempDir dir;
  Rng rng(409);
  PointCloud src = random_cloud(rng, 10, false);
  PointCloud dst = random_cloud(rng, 10, false);

  // Identity index mapping.
  std::string index_text;
  for (int k = 0; k < 10; ++k) {
    index_text += std::to_string(k) + " " + std::to_string(k) + "\n";
  }
  const auto index_path = dir.file("pairs.txt");
  write_text(index_path, index_text);
  const auto from_index = io::read_correspondences(index_path, src, dst);
  REQUIRE(from_index.size() == 10);
  for (int k = 0; k < 10; ++k) {
    CHECK(from_index.pairs[k].p == dst.points[k]);
    CHECK(from_index.pairs[k].q == src.points[k]);
  }

  // The JSON form of the same data parses to the same set.
  std::string json_text = "[";
  for (int k = 0; k < 10; ++k) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "%s{\"p\": [%.17g, %.17g, %.17g], \"q\": [%.17g, %.17g, "
                  "%.17g]}",
                  k == 0 ? "" : ", ", dst.points[k].x(), dst.points[k].y(),
                  dst.points[k].z(), src.points[k].x(), src.points[k].y(),
                  src.points[k].z());
    json_text += buf;
  }
  json_text += "]";
  const auto json_path = dir.file("pairs.json");
  write_text(json_path, json_text);
  const auto from_json = io::read_correspondences(json_path, src, dst);
  REQUIRE(from_json.size() == 10);
  for (int k = 0; k < 10; ++k) {
    CHECK(from_json.pairs[k].p == from_index.pairs[k].p);
    CHECK(from_json.pairs[k].q == from_index.pairs[k].q);
  }

  const auto empty_path = dir.file("empty.txt");
  write_text(empty_path, "\n  \n");
  CHECK_THROWS_AS(io::read_correspondences(empty_path, src, dst), ParseError);

  const auto oob_path = dir.file("oob.txt");
  write_text(oob_path, "0 0\n1 99\n");
  CHECK_THROWS_AS(io::read_correspondences(oob_path, src, dst),
                  IndexOutOfRange);
}

TEST_CASE("trajectory roundtrip") {
  TempDir dir;
  Rng rng(419);
  std::vector<RigidMotion> motions;
  for (int k = 0; k < 5; ++k) {
    motions.push_back(oracle::random_motion(rng, 3.0, 10.0));
  }

  for (const bool full : {false, true}) {
    const auto path = dir.file(full ? "traj16.txt" : "traj12.txt");
    io::write_trajectory(motions, path, full);
    const auto back = io::read_trajectory(path);
    REQUIRE(back.size() == motions.size());
    for (std::size_t k = 0; k < motions.size(); ++k) {
      CHECK((back[k].matrix() - motions[k].matrix()).norm() == 0.0);
      const Mat3& r = back[k].rotation.m;
      CHECK((r.transpose() * r - Mat3::Identity()).norm() <= 1e-9);
    }
  }

  const auto bad = dir.file("bad.txt");
  write_text(bad, "1 0 0 0 0 1 0 0 0 0 1 0 9 9 9 9\n");
  CHECK_THROWS_AS(io::read_trajectory(bad), ParseError);

  const auto short_line = dir.file("short.txt");
  write_text(short_line, "1 0 0\n");
  CHECK_THROWS_AS(io::read_trajectory(short_line), ParseError);
}

TEST_CASE("viewgraph json roundtrip and path form") {
  TempDir dir;
  Rng rng(421);
  ViewGraph g;
  g.n = 3;
  g.motions = {RigidMotion{}, oracle::random_motion(rng, 1.0, 0.5),
               oracle::random_motion(rng, 1.0, 0.5)};
  for (const auto [i, j] : {std::pair{0, 1}, {1, 2}}) {
    ViewEdge e{i, j, {}};
    for (int s = 0; s < 4; ++s) {
      e.corrs.pairs.push_back({rng.normal3(1.0), rng.normal3(1.0)});
    }
    g.edges.push_back(e);
  }

  const auto path = dir.file("graph.json");
  io::write_viewgraph(g, path);
  const ViewGraph back = io::read_viewgraph(path);
  REQUIRE(back.n == 3);
  REQUIRE(back.edges.size() == 2);
  for (int i = 0; i < 3; ++i) {
    CHECK((back.motions[i].matrix() - g.motions[i].matrix()).norm() == 0.0);
  }
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    REQUIRE(back.edges[e].corrs.size() == g.edges[e].corrs.size());
    for (std::size_t s = 0; s < g.edges[e].corrs.size(); ++s) {
      CHECK(back.edges[e].corrs.pairs[s].p == g.edges[e].corrs.pairs[s].p);
      CHECK(back.edges[e].corrs.pairs[s].q == g.edges[e].corrs.pairs[s].q);
    }
  }

  // Path-referenced correspondences, relative to the JSON file.
  write_text(dir.file("edge01.txt"), "1 2 3 4 5 6\n-1 -2 -3 -4 -5 -6\n");
  write_text(path,
             "{\"n\": 2, \"motions\": [" +
                 std::string("[1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1],") +
                 "[1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]]," +
                 "\"edges\": [{\"i\": 0, \"j\": 1, \"correspondences\": "
                 "\"edge01.txt\"}]}");
  const ViewGraph from_path = io::read_viewgraph(path);
  REQUIRE(from_path.edges.size() == 1);
  REQUIRE(from_path.edges[0].corrs.size() == 2);
  CHECK(from_path.edges[0].corrs.pairs[0].p == Vec3{1, 2, 3});
  CHECK(from_path.edges[0].corrs.pairs[0].q == Vec3{4, 5, 6});

  // Bad edge indices.
  write_text(path,
             "{\"n\": 2, \"motions\": [[1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1],"
             "[1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]],"
             "\"edges\": [{\"i\": 1, \"j\": 0, \"correspondences\": []}]}");
  CHECK_THROWS_AS(io::read_viewgraph(path), IndexOutOfRange);
}
