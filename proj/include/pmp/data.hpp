#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pmp/geom.hpp"
#include "pmp/rng.hpp"

namespace pmp {

enum class ShapeKind { PlaneSlab, Sphere, Cylinder, Box, LBracket };

const std::vector<ShapeKind>& all_shape_kinds();
ShapeKind shape_kind_from_string(const std::string& s);
std::string to_string(ShapeKind k);

// Uniform surface sample of the primitive. Shapes are constructed centered at
// the origin filling the unit cube [-0.5, 0.5]^3 exactly, then multiplied by
// `scale` (default 0.9) so every coordinate stays strictly inside (-1, 1).
PointCloud synth_shape(ShapeKind kind, int64_t n, Rng& rng, double scale = 0.9);

// Removes the half-space of points with the largest projection onto view_dir;
// exactly round(keep_fraction * N) points survive, original order preserved.
PointCloud occlude(const PointCloud& cloud, const Vec3& view_dir, double keep_fraction);

// Down: random subset without replacement (original order). Up: all originals
// plus randomly duplicated points. Never invents coordinates.
PointCloud resample(const PointCloud& cloud, int64_t n, Rng& rng);

struct ShapePair {
  std::string category;  // shape kind name
  std::string id;        // unique within the dataset
  PointCloud partial;
  PointCloud complete;
};

enum class CloudFormat { XyzText, BinaryF32 };

// xyz text: one "x y z" line per point, 17 significant digits so that a
// write/read cycle reproduces the doubles exactly. binary: "PMPC" magic,
// little-endian u32 count, then N*3 little-endian f32.
void write_cloud(const PointCloud& cloud, const std::string& path, CloudFormat format);
PointCloud read_cloud(const std::string& path);  // format sniffed from the magic

struct DatasetSpec {
  std::vector<ShapeKind> kinds = all_shape_kinds();
  int64_t count = 5;         // total pairs, round-robin over kinds
  int64_t points = 256;      // N for both partial and complete
  double keep_fraction = 0.5;
  uint64_t seed = 0;
};

std::vector<ShapePair> generate_dataset(const DatasetSpec& spec);

// layout: <root>/<category>/<id>.partial.xyz and <id>.complete.xyz
void write_dataset(const std::string& root, const std::vector<ShapePair>& pairs);
std::vector<ShapePair> load_dataset(const std::string& root);

}  // namespace pmp
