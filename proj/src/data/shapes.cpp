#include <algorithm>
#include <cmath>
#include <numbers>

#include "patmod/data.hpp"
#include "patmod/error.hpp"
#include "patmod/rng.hpp"

namespace patmod::data {
namespace {

constexpr double kPi = std::numbers::pi;

struct KindEntry {
  ShapeKind kind;
  const char* name;
};

constexpr KindEntry kKinds[] = {
    {ShapeKind::table, "table"},     {ShapeKind::chair, "chair"},
    {ShapeKind::cross_plane, "cross_plane"}, {ShapeKind::lamp, "lamp"},
    {ShapeKind::sofa_block, "sofa_block"},   {ShapeKind::ring, "ring"},
};

// Local (a, b, c) with c along `axis` to world coordinates.
geom::Vec3 to_world(const geom::Vec3& center, std::size_t axis, double a, double b, double c) {
  geom::Vec3 p = center;
  const std::size_t u = (axis + 1) % 3;
  const std::size_t v = (axis + 2) % 3;
  p[u] += a;
  p[v] += b;
  p[axis] += c;
  return p;
}

geom::Vec3 sample_box(const Primitive& box, Rng& rng) {
  const auto& h = box.half;
  const double faces[3] = {h[1] * h[2], h[0] * h[2], h[0] * h[1]};
  const double total = faces[0] + faces[1] + faces[2];
  double pick = rng.uniform() * total;
  std::size_t axis = 0;
  while (axis < 2 && pick >= faces[axis]) {
    pick -= faces[axis];
    ++axis;
  }
  geom::Vec3 p;
  for (std::size_t k = 0; k < 3; ++k) p[k] = box.center[k] + rng.uniform(-h[k], h[k]);
  p[axis] = box.center[axis] + (rng.uniform() < 0.5 ? -h[axis] : h[axis]);
  return p;
}

geom::Vec3 sample_cylinder(const Primitive& cyl, Rng& rng) {
  const double r = cyl.radius;
  const double side = 2.0 * kPi * r * 2.0 * cyl.half_height;
  const double cap = kPi * r * r;
  const double pick = rng.uniform() * (side + 2.0 * cap);
  const double theta = rng.uniform(0.0, 2.0 * kPi);
  if (pick < side) {
    return to_world(cyl.center, cyl.axis, r * std::cos(theta), r * std::sin(theta),
                    rng.uniform(-cyl.half_height, cyl.half_height));
  }
  const double rho = r * std::sqrt(rng.uniform());
  const double c = pick < side + cap ? -cyl.half_height : cyl.half_height;
  return to_world(cyl.center, cyl.axis, rho * std::cos(theta), rho * std::sin(theta), c);
}

geom::Vec3 sample_torus(const Primitive& tor, Rng& rng) {
  const double big = tor.radius;
  const double small = tor.tube;
  const double u = rng.uniform(0.0, 2.0 * kPi);
  // Surface density along the tube angle is proportional to big + small*cos(v).
  double v = 0.0;
  for (;;) {
    v = rng.uniform(0.0, 2.0 * kPi);
    if (rng.uniform() * (big + small) <= big + small * std::cos(v)) break;
  }
  const double ring = big + small * std::cos(v);
  return to_world(tor.center, tor.axis, ring * std::cos(u), ring * std::sin(u), small * std::sin(v));
}

double pick(Rng& rng, double lo, double hi) { return rng.uniform(lo, hi); }

void add_legs(std::vector<Primitive>& parts, Rng& rng, double x, double y, double top, double thick) {
  const bool round = rng.uniform() < 0.5;
  for (double sx : {-1.0, 1.0}) {
    for (double sy : {-1.0, 1.0}) {
      const geom::Vec3 c{sx * x, sy * y, top / 2};
      if (round) {
        parts.push_back(make_cylinder(c, thick, top / 2, 2));
      } else {
        parts.push_back(make_box(c, {thick, thick, top / 2}));
      }
    }
  }
}

std::vector<Primitive> table(Rng& rng) {
  std::vector<Primitive> parts;
  const double a = pick(rng, 0.6, 1.0);
  const double b = pick(rng, 0.4, 0.8);
  const double h = pick(rng, 0.6, 0.9);
  const double t = pick(rng, 0.03, 0.06);
  const double leg = pick(rng, 0.03, 0.06);
  parts.push_back(make_box({0, 0, h - t}, {a, b, t}));
  add_legs(parts, rng, a - 2 * leg, b - 2 * leg, h - 2 * t, leg);
  return parts;
}

std::vector<Primitive> chair(Rng& rng) {
  std::vector<Primitive> parts;
  const double a = pick(rng, 0.3, 0.45);
  const double b = pick(rng, 0.3, 0.45);
  const double seat = pick(rng, 0.4, 0.55);
  const double t = pick(rng, 0.03, 0.05);
  const double back = pick(rng, 0.45, 0.7);
  const double leg = pick(rng, 0.025, 0.045);
  parts.push_back(make_box({0, 0, seat}, {a, b, t}));
  parts.push_back(make_box({0, -b + t, seat + t + back / 2}, {a, t, back / 2}));
  add_legs(parts, rng, a - leg, b - leg, seat - t, leg);
  return parts;
}

std::vector<Primitive> cross_plane(Rng& rng) {
  std::vector<Primitive> parts;
  const double length = pick(rng, 0.8, 1.0);
  const double r = pick(rng, 0.07, 0.11);
  const double span = pick(rng, 0.7, 1.0);
  const double chord = pick(rng, 0.12, 0.2);
  const double wing_x = pick(rng, -0.1, 0.15);
  parts.push_back(make_cylinder({0, 0, 0}, r, length, 0));
  parts.push_back(make_box({wing_x, 0, 0}, {chord, span, 0.02}));
  const double tail_x = -length + chord * 0.6;
  parts.push_back(make_box({tail_x, 0, 0}, {chord * 0.5, span * 0.35, 0.015}));
  parts.push_back(make_box({tail_x, 0, r + 0.12}, {chord * 0.5, 0.015, 0.12}));
  return parts;
}

std::vector<Primitive> lamp(Rng& rng) {
  std::vector<Primitive> parts;
  const double base = pick(rng, 0.25, 0.35);
  const double pole = pick(rng, 0.8, 1.2);
  const double pole_r = pick(rng, 0.02, 0.04);
  const double shade = pick(rng, 0.2, 0.3);
  const double shade_h = pick(rng, 0.1, 0.16);
  parts.push_back(make_cylinder({0, 0, 0.03}, base, 0.03, 2));
  parts.push_back(make_cylinder({0, 0, 0.06 + pole / 2}, pole_r, pole / 2, 2));
  parts.push_back(make_cylinder({0, 0, 0.06 + pole}, shade, shade_h, 2));
  return parts;
}

std::vector<Primitive> sofa_block(Rng& rng) {
  std::vector<Primitive> parts;
  const double a = pick(rng, 0.8, 1.1);
  const double b = pick(rng, 0.35, 0.45);
  const double seat = pick(rng, 0.2, 0.3);
  const double back = pick(rng, 0.3, 0.45);
  const double arm = pick(rng, 0.08, 0.14);
  parts.push_back(make_box({0, 0, seat / 2}, {a, b, seat / 2}));
  parts.push_back(make_box({0, -b + 0.08, seat + back / 2}, {a, 0.08, back / 2}));
  for (double s : {-1.0, 1.0}) {
    parts.push_back(make_box({s * (a - arm), 0.04, seat + 0.12}, {arm, b - 0.04, 0.12}));
  }
  return parts;
}

std::vector<Primitive> ring(Rng& rng) {
  std::vector<Primitive> parts;
  const double big = pick(rng, 0.5, 0.7);
  const double tube = pick(rng, 0.06, 0.12);
  const double foot = pick(rng, 0.15, 0.3);
  parts.push_back(make_torus({0, 0, big + tube + 0.06}, big, tube, 1));
  parts.push_back(make_box({0, 0, 0.03}, {foot, foot * 0.6, 0.03}));
  return parts;
}

}  // namespace

const std::vector<ShapeKind>& all_kinds() {
  static const std::vector<ShapeKind> kinds = [] {
    std::vector<ShapeKind> out;
    for (const auto& e : kKinds) out.push_back(e.kind);
    return out;
  }();
  return kinds;
}

std::string kind_name(ShapeKind kind) {
  for (const auto& e : kKinds) {
    if (e.kind == kind) return e.name;
  }
  throw ContractError("kind_name: unknown shape kind");
}

ShapeKind parse_kind(const std::string& name) {
  for (const auto& e : kKinds) {
    if (name == e.name) return e.kind;
  }
  throw ConfigError("unknown shape class '" + name + "'");
}

double Primitive::area() const {
  switch (type) {
    case Type::box: return 8.0 * (half[0] * half[1] + half[1] * half[2] + half[0] * half[2]);
    case Type::cylinder: return 2.0 * kPi * radius * (2.0 * half_height) + 2.0 * kPi * radius * radius;
    case Type::torus: return 4.0 * kPi * kPi * radius * tube;
  }
  return 0.0;
}

Primitive make_box(geom::Vec3 center, geom::Vec3 half) {
  Primitive p;
  p.type = Primitive::Type::box;
  p.center = center;
  p.half = half;
  return p;
}

Primitive make_cylinder(geom::Vec3 center, double radius, double half_height, std::size_t axis) {
  Primitive p;
  p.type = Primitive::Type::cylinder;
  p.center = center;
  p.radius = radius;
  p.half_height = half_height;
  p.axis = axis;
  return p;
}

Primitive make_torus(geom::Vec3 center, double radius, double tube, std::size_t axis) {
  Primitive p;
  p.type = Primitive::Type::torus;
  p.center = center;
  p.radius = radius;
  p.tube = tube;
  p.axis = axis;
  return p;
}

std::vector<Primitive> assemble(ShapeKind kind, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "shape/" + kind_name(kind), 0));
  switch (kind) {
    case ShapeKind::table: return table(rng);
    case ShapeKind::chair: return chair(rng);
    case ShapeKind::cross_plane: return cross_plane(rng);
    case ShapeKind::lamp: return lamp(rng);
    case ShapeKind::sofa_block: return sofa_block(rng);
    case ShapeKind::ring: return ring(rng);
  }
  throw ContractError("assemble: unknown shape kind");
}

SurfaceSample sample_surface(const std::vector<Primitive>& parts, std::size_t count, std::uint64_t seed) {
  if (parts.empty()) throw DomainError("sample_surface: no primitives");
  double total = 0.0;
  for (const auto& p : parts) total += p.area();
  if (!(total > 0.0)) throw DomainError("sample_surface: zero surface area");

  // Largest remainder apportionment of count over the area shares.
  std::vector<std::size_t> counts(parts.size());
  std::vector<std::pair<double, std::size_t>> remainder;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const double exact = static_cast<double>(count) * parts[i].area() / total;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    remainder.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainder.begin(), remainder.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < count; ++k, ++assigned) ++counts[remainder[k % remainder.size()].second];

  Rng rng(derive_seed(seed, "surface", 0));
  SurfaceSample out{geom::PointCloud(count), {}};
  out.part.reserve(count);
  std::size_t row = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    for (std::size_t k = 0; k < counts[i]; ++k) {
      geom::Vec3 p;
      switch (parts[i].type) {
        case Primitive::Type::box: p = sample_box(parts[i], rng); break;
        case Primitive::Type::cylinder: p = sample_cylinder(parts[i], rng); break;
        case Primitive::Type::torus: p = sample_torus(parts[i], rng); break;
      }
      out.cloud.set(row++, p);
      out.part.push_back(i);
    }
  }
  return out;
}

geom::PointCloud normalize(const geom::PointCloud& cloud, double half) {
  if (cloud.empty()) throw DomainError("normalize: empty cloud");
  const geom::Box box = geom::bounding_box(cloud, 0.0);
  geom::Vec3 mid;
  double extent = 0.0;
  for (std::size_t a = 0; a < 3; ++a) {
    mid[a] = 0.5 * (box.lo[a] + box.hi[a]);
    extent = std::max(extent, 0.5 * box.side(a));
  }
  const double s = extent > 0.0 ? half / extent : 1.0;
  geom::PointCloud out(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    geom::Vec3 p = cloud[i];
    for (std::size_t a = 0; a < 3; ++a) p[a] = std::clamp((p[a] - mid[a]) * s, -half, half);
    out.set(i, p);
  }
  return out;
}

geom::PointCloud generate_shape(ShapeKind kind, std::uint64_t seed, std::size_t points) {
  return normalize(sample_surface(assemble(kind, seed), points, seed).cloud);
}

}  // namespace patmod::data
