#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "skyweave/lts.hpp"

namespace skyweave {

struct Point {
  double x = 0, y = 0;
};

class GridError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Square cells, row-major ids, row 0 first along the rotated y axis.  Cells
// whose centre lies outside the bounds polygon are inactive.
struct Grid {
  Point origin;
  double cell_size = 1;
  int rows = 0, cols = 0;
  double angle_deg = 0;
  std::vector<char> active;
  std::map<std::string, std::set<int>> regions;

  int size() const { return rows * cols; }
  int index(int r, int c) const { return r * cols + c; }
  bool is_active(int id) const { return id >= 0 && id < size() && active[id]; }
  std::vector<int> cells() const;
  Point centre(int id) const;
  // Active cell whose square contains p.
  std::optional<int> locate(Point p) const;
  std::vector<int> neighbours(int id) const;
};

bool point_in_polygon(Point p, const std::vector<Point>& poly);

Grid discretize(const std::vector<Point>& bounds, double cell_size, double angle_deg = 0,
                const std::map<std::string, std::vector<Point>>& regions = {});
Grid rect_grid(int rows, int cols, double cell_size = 10);

struct ModelOptions {
  int initial_cell = 0;
  // Location fluents end on any go (true only while hovering) instead of
  // on the next arrival.
  bool go_terminated = false;
  std::string process = "MOVE";
};

// Movement process (go.i controlled / at.i observed, one flying state per
// directed edge), the sets GO and AT, a fluent At<i> per cell, a fluent
// In<Region> per region and Moving.
std::string movement_fsl(const Grid& g, const ModelOptions& o = {});
Lts movement_lts(const Grid& g, const ModelOptions& o = {});

}  // namespace skyweave
