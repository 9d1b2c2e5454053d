#include "skyweave/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "skyweave/spec_lang.hpp"

namespace skyweave {

namespace {

constexpr double kPi = 3.14159265358979323846;

Point rotate(Point p, double deg) {
  double a = deg * kPi / 180, c = std::cos(a), s = std::sin(a);
  return {p.x * c - p.y * s, p.x * s + p.y * c};
}

}  // namespace

std::vector<int> Grid::cells() const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (active[i]) out.push_back(i);
  return out;
}

Point Grid::centre(int id) const {
  Point local{(id % cols + 0.5) * cell_size, (id / cols + 0.5) * cell_size};
  Point r = rotate(local, angle_deg);
  return {origin.x + r.x, origin.y + r.y};
}

std::optional<int> Grid::locate(Point p) const {
  Point local = rotate({p.x - origin.x, p.y - origin.y}, -angle_deg);
  int c = static_cast<int>(std::floor(local.x / cell_size)), r = static_cast<int>(std::floor(local.y / cell_size));
  if (r < 0 || c < 0 || r >= rows || c >= cols || !active[index(r, c)]) return std::nullopt;
  return index(r, c);
}

std::vector<int> Grid::neighbours(int id) const {
  std::vector<int> out;
  int r = id / cols, c = id % cols;
  const int dr[] = {-1, 0, 0, 1}, dc[] = {0, -1, 1, 0};
  for (int k = 0; k < 4; ++k) {
    int rr = r + dr[k], cc = c + dc[k];
    if (rr >= 0 && cc >= 0 && rr < rows && cc < cols && active[index(rr, cc)]) out.push_back(index(rr, cc));
  }
  return out;
}

bool point_in_polygon(Point p, const std::vector<Point>& poly) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point &a = poly[i], &b = poly[j];
    if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

Grid discretize(const std::vector<Point>& bounds, double cell_size, double angle_deg,
                const std::map<std::string, std::vector<Point>>& regions) {
  if (!(cell_size > 0)) throw GridError("cell size must be positive");
  if (bounds.size() < 3) throw GridError("bounds need at least three vertices");
  double lo_x = std::numeric_limits<double>::max(), lo_y = lo_x, hi_x = -lo_x, hi_y = -lo_x;
  for (auto& p : bounds) {
    Point q = rotate(p, -angle_deg);
    lo_x = std::min(lo_x, q.x), hi_x = std::max(hi_x, q.x);
    lo_y = std::min(lo_y, q.y), hi_y = std::max(hi_y, q.y);
  }
  if (hi_x - lo_x <= 0 || hi_y - lo_y <= 0) throw GridError("bounds have no area");
  Grid g;
  g.cell_size = cell_size;
  g.angle_deg = angle_deg;
  g.origin = rotate({lo_x, lo_y}, angle_deg);
  const double eps = 1e-9;
  g.cols = static_cast<int>(std::ceil((hi_x - lo_x) / cell_size - eps));
  g.rows = static_cast<int>(std::ceil((hi_y - lo_y) / cell_size - eps));
  g.active.assign(g.size(), 0);
  for (int i = 0; i < g.size(); ++i) g.active[i] = point_in_polygon(g.centre(i), bounds);
  if (g.cells().empty()) throw GridError("no cell centre lies inside the bounds");
  for (auto& [name, poly] : regions) {
    auto& cells = g.regions[name];
    if (poly.size() < 3) continue;
    for (int i : g.cells())
      if (point_in_polygon(g.centre(i), poly)) cells.insert(i);
  }
  return g;
}

Grid rect_grid(int rows, int cols, double cell_size) {
  if (rows <= 0 || cols <= 0) throw GridError("grid needs at least one cell");
  return discretize({{0, 0}, {cols * cell_size, 0}, {cols * cell_size, rows * cell_size}, {0, rows * cell_size}},
                    cell_size);
}

std::string movement_fsl(const Grid& g, const ModelOptions& o) {
  if (!g.is_active(o.initial_cell)) throw GridError("initial cell " + std::to_string(o.initial_cell) + " is not active");
  std::ostringstream os;
  auto list = [&](const char* prefix, const std::vector<int>& ids) {
    std::string s = "{";
    for (std::size_t k = 0; k < ids.size(); ++k) s += (k ? ", " : "") + std::string(prefix) + std::to_string(ids[k]);
    return s + "}";
  };
  const auto cells = g.cells();
  os << "set GO = " << list("go.", cells) << ".\n";
  os << "set AT = " << list("at.", cells) << ".\n";
  os << o.process << " = C" << o.initial_cell;
  for (int i : cells) {
    auto nb = g.neighbours(i);
    os << ",\n  C" << i << " = ";
    if (nb.empty()) {
      os << "STOP";
      continue;
    }
    os << "(";
    for (std::size_t k = 0; k < nb.size(); ++k) os << (k ? " | " : "") << "go." << nb[k] << " -> F" << i << "_" << nb[k];
    os << ")";
    for (int j : nb) os << ",\n  F" << i << "_" << j << " = (at." << j << " -> C" << j << ")";
  }
  os << " + GO + AT.\n";
  const char* term_all = o.go_terminated ? "GO" : "AT";
  for (int i : cells) {
    os << "fluent At" << i << " = <{at." << i << "}, " << (o.go_terminated ? "GO" : "AT \\ {at." + std::to_string(i) + "}")
       << "> initially " << (i == o.initial_cell ? "true" : "false") << ".\n";
  }
  for (auto& [name, rc] : g.regions) {
    std::vector<int> ids(rc.begin(), rc.end());
    os << "fluent In" << name << " = <" << (ids.empty() ? std::string("{}") : list("at.", ids)) << ", "
       << (o.go_terminated || ids.empty() ? std::string(term_all) : "AT \\ " + list("at.", ids)) << "> initially "
       << (rc.count(o.initial_cell) ? "true" : "false") << ".\n";
  }
  os << "fluent Moving = <GO, AT>.\n";
  return os.str();
}

Lts movement_lts(const Grid& g, const ModelOptions& o) {
  return build_system(parse_or_throw(movement_fsl(g, o)), o.process);
}

}  // namespace skyweave
