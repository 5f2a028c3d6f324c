#pragma once

#include <string>
#include <vector>

#include "se3reg/correspondence.hpp"
#include "se3reg/multiview.hpp"

namespace se3reg::io {

// PLY support covers ascii 1.0 and binary_little_endian 1.0 with float32 or
// float64 vertex coordinates; nx/ny/nz are preserved when present. Throws
// ParseError (with line or byte location), UnsupportedFormat (big endian,
// list-typed vertex properties).
PointCloud read_ply(const std::string& path);

struct PlyWriteOptions {
  bool binary = false;
  bool double_precision = true;
};

// Ascii output prints 17 significant digits, so a double-precision
// write/read roundtrip is bit-exact.
void write_ply(const PointCloud& cloud, const std::string& path,
               const PlyWriteOptions& opts = {});

// Two formats, detected from the content: whitespace "i j" index lines
// (i indexes src, j indexes dst), or a JSON array of {"p": [x,y,z],
// "q": [x,y,z]} pairs. Index entries pair (p = dst[j], q = src[i]).
CorrespondenceSet read_correspondences(const std::string& path,
                                       const PointCloud& src,
                                       const PointCloud& dst);

// One line per motion: the top 3 rows of the homogeneous matrix, row-major
// (12 values), or all 16 with full = true. 17 significant digits.
void write_trajectory(const std::vector<RigidMotion>& motions,
                      const std::string& path, bool full = false);
std::string format_trajectory(const std::vector<RigidMotion>& motions,
                              bool full = false);
std::vector<RigidMotion> read_trajectory(const std::string& path);

// View graph as JSON: {"n": int, "motions": [[16 row-major floats], ...],
// "edges": [{"i": int, "j": int, "correspondences": <inline or path>}]}.
// Inline correspondences are arrays of 6 numbers (p then q); a string is a
// path (relative to the JSON file) to a text file with 6 numbers per line.
// Indices are 0-based.
ViewGraph read_viewgraph(const std::string& path);
void write_viewgraph(const ViewGraph& graph, const std::string& path);

}  // namespace se3reg::io
