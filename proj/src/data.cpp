#include "pmp/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace fs = std::filesystem;

namespace pmp {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// one rectangular face: p(u,v) = origin + u*edge_u + v*edge_v, u,v in [0,1]
struct Rect {
  Vec3 origin, edge_u, edge_v;
  double area() const {
    Vec3 n = {edge_u[1] * edge_v[2] - edge_u[2] * edge_v[1],
              edge_u[2] * edge_v[0] - edge_u[0] * edge_v[2],
              edge_u[0] * edge_v[1] - edge_u[1] * edge_v[0]};
    return std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
  }
};

std::vector<Rect> box_faces(double hx, double hy, double hz) {
  return {
      {{-hx, -hy, -hz}, {2 * hx, 0, 0}, {0, 2 * hy, 0}},  // z = -hz
      {{-hx, -hy, +hz}, {2 * hx, 0, 0}, {0, 2 * hy, 0}},  // z = +hz
      {{-hx, -hy, -hz}, {2 * hx, 0, 0}, {0, 0, 2 * hz}},  // y = -hy
      {{-hx, +hy, -hz}, {2 * hx, 0, 0}, {0, 0, 2 * hz}},  // y = +hy
      {{-hx, -hy, -hz}, {0, 2 * hy, 0}, {0, 0, 2 * hz}},  // x = -hx
      {{+hx, -hy, -hz}, {0, 2 * hy, 0}, {0, 0, 2 * hz}},  // x = +hx
  };
}

// L cross-section in xy (hexagon through (-.5,-.5) (.5,-.5) (.5,0) (0,0)
// (0,.5) (-.5,.5)), extruded along z over [-0.5, 0.5]
std::vector<Rect> lbracket_faces() {
  const double h = 0.5;
  std::vector<Rect> faces;
  auto wall = [&](double x0, double y0, double x1, double y1) {
    faces.push_back({{x0, y0, -h}, {x1 - x0, y1 - y0, 0}, {0, 0, 2 * h}});
  };
  wall(-h, -h, h, -h);
  wall(h, -h, h, 0);
  wall(h, 0, 0, 0);
  wall(0, 0, 0, h);
  wall(0, h, -h, h);
  wall(-h, h, -h, -h);
  for (double z : {-h, h}) {
    faces.push_back({{-h, -h, z}, {2 * h, 0, 0}, {0, h, 0}});  // lower limb cap
    faces.push_back({{-h, 0, z}, {h, 0, 0}, {0, h, 0}});       // upper limb cap
  }
  return faces;
}

PointCloud sample_rects(const std::vector<Rect>& faces, int64_t n, Rng& rng) {
  std::vector<double> cumulative;
  double total = 0.0;
  for (const Rect& f : faces) {
    total += f.area();
    cumulative.push_back(total);
  }
  PointCloud pc;
  pc.points.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    double pick = rng.uniform01() * total;
    size_t fi = std::lower_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin();
    if (fi >= faces.size()) fi = faces.size() - 1;
    const Rect& f = faces[fi];
    double u = rng.uniform01(), v = rng.uniform01();
    pc.points.push_back({f.origin[0] + u * f.edge_u[0] + v * f.edge_v[0],
                         f.origin[1] + u * f.edge_u[1] + v * f.edge_v[1],
                         f.origin[2] + u * f.edge_u[2] + v * f.edge_v[2]});
  }
  return pc;
}

PointCloud sample_sphere(int64_t n, Rng& rng) {
  PointCloud pc;
  pc.points.reserve(static_cast<size_t>(n));
  const double r = 0.5;
  for (int64_t i = 0; i < n; ++i) {
    double x, y, z, len;
    do {
      x = rng.gaussian();
      y = rng.gaussian();
      z = rng.gaussian();
      len = std::sqrt(x * x + y * y + z * z);
    } while (len < 1e-12);
    pc.points.push_back({r * x / len, r * y / len, r * z / len});
  }
  return pc;
}

PointCloud sample_cylinder(int64_t n, Rng& rng) {
  const double r = 0.5, h = 0.5;  // z in [-h, h]
  const double pi = 3.14159265358979323846;
  double lateral = 2 * pi * r * (2 * h);
  double cap = pi * r * r;
  double total = lateral + 2 * cap;
  PointCloud pc;
  pc.points.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    double pick = rng.uniform01() * total;
    double theta = 2 * pi * rng.uniform01();
    if (pick < lateral) {
      double z = rng.uniform(-h, h);
      pc.points.push_back({r * std::cos(theta), r * std::sin(theta), z});
    } else {
      double rho = r * std::sqrt(rng.uniform01());
      double z = (pick < lateral + cap) ? -h : h;
      pc.points.push_back({rho * std::cos(theta), rho * std::sin(theta), z});
    }
  }
  return pc;
}

}  // namespace

const std::vector<ShapeKind>& all_shape_kinds() {
  static const std::vector<ShapeKind> kinds = {ShapeKind::PlaneSlab, ShapeKind::Sphere,
                                               ShapeKind::Cylinder, ShapeKind::Box,
                                               ShapeKind::LBracket};
  return kinds;
}

ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "plane-slab") return ShapeKind::PlaneSlab;
  if (s == "sphere") return ShapeKind::Sphere;
  if (s == "cylinder") return ShapeKind::Cylinder;
  if (s == "box") return ShapeKind::Box;
  if (s == "l-bracket") return ShapeKind::LBracket;
  throw std::invalid_argument("unknown shape kind: " + s +
                              " (expected plane-slab|sphere|cylinder|box|l-bracket)");
}

std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::PlaneSlab: return "plane-slab";
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Cylinder: return "cylinder";
    case ShapeKind::Box: return "box";
    case ShapeKind::LBracket: return "l-bracket";
  }
  return "box";
}

PointCloud synth_shape(ShapeKind kind, int64_t n, Rng& rng, double scale) {
  check(n >= 1, "synth_shape: need at least one point");
  check(scale > 0.0 && scale < 2.0, "synth_shape: scale out of range");
  PointCloud pc;
  switch (kind) {
    case ShapeKind::PlaneSlab: pc = sample_rects(box_faces(0.5, 0.5, 0.05), n, rng); break;
    case ShapeKind::Sphere: pc = sample_sphere(n, rng); break;
    case ShapeKind::Cylinder: pc = sample_cylinder(n, rng); break;
    case ShapeKind::Box: pc = sample_rects(box_faces(0.5, 0.5, 0.5), n, rng); break;
    case ShapeKind::LBracket: pc = sample_rects(lbracket_faces(), n, rng); break;
  }
  for (Vec3& p : pc.points)
    for (double& c : p) c *= scale;
  return pc;
}

PointCloud occlude(const PointCloud& cloud, const Vec3& view_dir, double keep_fraction) {
  check(!cloud.empty(), "occlude: empty cloud");
  check(keep_fraction > 0.0 && keep_fraction < 1.0,
        "occlude: keep fraction must lie in (0, 1)");
  double len = std::sqrt(view_dir[0] * view_dir[0] + view_dir[1] * view_dir[1] +
                         view_dir[2] * view_dir[2]);
  check(len > 1e-12, "occlude: zero view direction");

  int64_t n = cloud.size();
  int64_t keep = static_cast<int64_t>(std::llround(keep_fraction * static_cast<double>(n)));
  keep = std::clamp<int64_t>(keep, 0, n);

  // drop the points that project farthest along the view direction
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> proj(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    proj[i] = (cloud.points[i][0] * view_dir[0] + cloud.points[i][1] * view_dir[1] +
               cloud.points[i][2] * view_dir[2]) /
              len;
  std::stable_sort(order.begin(), order.end(),
                   [&](int64_t a, int64_t b) { return proj[a] < proj[b]; });

  std::vector<uint8_t> survives(static_cast<size_t>(n), 0);
  for (int64_t i = 0; i < keep; ++i) survives[order[i]] = 1;
  PointCloud out;
  out.points.reserve(static_cast<size_t>(keep));
  for (int64_t i = 0; i < n; ++i)
    if (survives[i]) out.points.push_back(cloud.points[i]);
  return out;
}

PointCloud resample(const PointCloud& cloud, int64_t n, Rng& rng) {
  check(!cloud.empty(), "resample: empty cloud");
  check(n >= 1, "resample: need a positive target size");
  int64_t have = cloud.size();
  PointCloud out;
  out.points.reserve(static_cast<size_t>(n));
  if (n == have) {
    out.points = cloud.points;
  } else if (n < have) {
    // random subset without replacement, original order kept
    std::vector<int64_t> idx(static_cast<size_t>(have));
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    idx.resize(static_cast<size_t>(n));
    std::sort(idx.begin(), idx.end());
    for (int64_t i : idx) out.points.push_back(cloud.points[i]);
  } else {
    out.points = cloud.points;
    for (int64_t i = have; i < n; ++i)
      out.points.push_back(cloud.points[rng.uniform_int(have)]);
  }
  return out;
}

void write_cloud(const PointCloud& cloud, const std::string& path, CloudFormat format) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_cloud: cannot open " + path);
  if (format == CloudFormat::XyzText) {
    char line[128];
    for (const Vec3& p : cloud.points) {
      int len = std::snprintf(line, sizeof line, "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
      f.write(line, len);
    }
  } else {
    f.write("PMPC", 4);
    uint32_t n = static_cast<uint32_t>(cloud.size());
    unsigned char hdr[4] = {static_cast<unsigned char>(n & 0xff),
                            static_cast<unsigned char>((n >> 8) & 0xff),
                            static_cast<unsigned char>((n >> 16) & 0xff),
                            static_cast<unsigned char>((n >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(hdr), 4);
    for (const Vec3& p : cloud.points) {
      for (double c : p) {
        float v = static_cast<float>(c);
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        unsigned char b[4] = {static_cast<unsigned char>(bits & 0xff),
                              static_cast<unsigned char>((bits >> 8) & 0xff),
                              static_cast<unsigned char>((bits >> 16) & 0xff),
                              static_cast<unsigned char>((bits >> 24) & 0xff)};
        f.write(reinterpret_cast<const char*>(b), 4);
      }
    }
  }
  if (!f) throw std::runtime_error("write_cloud: write failed for " + path);
}

namespace {

PointCloud read_cloud_binary(const std::string& path, std::ifstream& f) {
  f.seekg(4);  // past the magic
  unsigned char hdr[4];
  if (!f.read(reinterpret_cast<char*>(hdr), 4))
    throw std::runtime_error("read_cloud: " + path + ": truncated header at byte 4");
  uint32_t n = static_cast<uint32_t>(hdr[0]) | (static_cast<uint32_t>(hdr[1]) << 8) |
               (static_cast<uint32_t>(hdr[2]) << 16) | (static_cast<uint32_t>(hdr[3]) << 24);
  PointCloud pc;
  pc.points.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    unsigned char buf[12];
    if (!f.read(reinterpret_cast<char*>(buf), 12))
      throw std::runtime_error("read_cloud: " + path + ": truncated at byte " +
                               std::to_string(8 + static_cast<int64_t>(i) * 12) + " (point " +
                               std::to_string(i) + " of " + std::to_string(n) + ")");
    for (int c = 0; c < 3; ++c) {
      uint32_t bits = static_cast<uint32_t>(buf[c * 4]) |
                      (static_cast<uint32_t>(buf[c * 4 + 1]) << 8) |
                      (static_cast<uint32_t>(buf[c * 4 + 2]) << 16) |
                      (static_cast<uint32_t>(buf[c * 4 + 3]) << 24);
      float v;
      std::memcpy(&v, &bits, 4);
      pc.points[i][c] = static_cast<double>(v);
    }
  }
  return pc;
}

}  // namespace

PointCloud read_cloud(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_cloud: cannot open " + path);
  char magic[4] = {0, 0, 0, 0};
  f.read(magic, 4);
  if (f.gcount() == 4 && std::memcmp(magic, "PMPC", 4) == 0) return read_cloud_binary(path, f);

  f.clear();
  f.seekg(0);
  PointCloud pc;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Vec3 p;
    char extra;
    int got = std::sscanf(line.c_str(), "%lf %lf %lf %c", &p[0], &p[1], &p[2], &extra);
    if (got != 3)
      throw std::runtime_error("read_cloud: " + path + ": malformed point on line " +
                               std::to_string(lineno));
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2]))
      throw std::runtime_error("read_cloud: " + path + ": non-finite coordinate on line " +
                               std::to_string(lineno));
    pc.points.push_back(p);
  }
  if (pc.empty()) throw std::runtime_error("read_cloud: " + path + ": no points");
  return pc;
}

std::vector<ShapePair> generate_dataset(const DatasetSpec& spec) {
  check(spec.count >= 1, "generate_dataset: count must be positive");
  check(!spec.kinds.empty(), "generate_dataset: no shape kinds");
  check(spec.points >= 1, "generate_dataset: points must be positive");
  check(spec.keep_fraction > 0.0 && spec.keep_fraction < 1.0,
        "generate_dataset: keep fraction must lie in (0, 1)");

  Rng base(spec.seed);
  std::vector<ShapePair> pairs;
  pairs.reserve(static_cast<size_t>(spec.count));
  for (int64_t i = 0; i < spec.count; ++i) {
    ShapeKind kind = spec.kinds[static_cast<size_t>(i) % spec.kinds.size()];
    Rng rng = base.fork(static_cast<uint64_t>(i));
    ShapePair pair;
    pair.category = to_string(kind);
    char idbuf[64];
    std::snprintf(idbuf, sizeof idbuf, "%s_%04lld", pair.category.c_str(),
                  static_cast<long long>(i));
    pair.id = idbuf;
    pair.complete = synth_shape(kind, spec.points, rng);
    Vec3 dir;
    double len;
    do {
      dir = {rng.gaussian(), rng.gaussian(), rng.gaussian()};
      len = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
    } while (len < 1e-12);
    for (double& c : dir) c /= len;
    pair.partial = resample(occlude(pair.complete, dir, spec.keep_fraction), spec.points, rng);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

void write_dataset(const std::string& root, const std::vector<ShapePair>& pairs) {
  for (const ShapePair& pair : pairs) {
    fs::path dir = fs::path(root) / pair.category;
    fs::create_directories(dir);
    write_cloud(pair.partial, (dir / (pair.id + ".partial.xyz")).string(),
                CloudFormat::XyzText);
    write_cloud(pair.complete, (dir / (pair.id + ".complete.xyz")).string(),
                CloudFormat::XyzText);
  }
}

std::vector<ShapePair> load_dataset(const std::string& root) {
  if (!fs::is_directory(root)) throw std::runtime_error("load_dataset: no directory " + root);
  std::vector<ShapePair> pairs;
  std::vector<fs::path> categories;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) categories.push_back(e.path());
  std::sort(categories.begin(), categories.end());
  for (const fs::path& cat : categories) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(cat))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const fs::path& f : files) {
      std::string name = f.filename().string();
      const std::string suffix = ".partial.xyz";
      if (name.size() <= suffix.size() ||
          name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
        continue;
      std::string id = name.substr(0, name.size() - suffix.size());
      fs::path complete = cat / (id + ".complete.xyz");
      if (!fs::exists(complete))
        throw std::runtime_error("load_dataset: missing " + complete.string());
      ShapePair pair;
      pair.category = cat.filename().string();
      pair.id = id;
      pair.partial = read_cloud(f.string());
      pair.complete = read_cloud(complete.string());
      pairs.push_back(std::move(pair));
    }
  }
  if (pairs.empty()) throw std::runtime_error("load_dataset: no pairs under " + root);
  return pairs;
}

}  // namespace pmp
