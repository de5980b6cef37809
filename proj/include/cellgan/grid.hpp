#pragma once

#include <compare>
#include <string>
#include <vector>

namespace cellgan::grid {

/// Toroidal rows x cols layout. Edges always wrap.
struct GridSpec {
  int rows = 1;
  int cols = 1;

  int cells() const { return rows * cols; }
  bool operator==(const GridSpec&) const = default;
};

struct CellCoord {
  int row = 0;
  int col = 0;

  auto operator<=>(const CellCoord&) const = default;
};

std::string to_string(const CellCoord& c);
std::string to_string(const GridSpec& g);

/// Parses "RxC" (e.g. "4x4"). Throws UsageError on malformed input or a
/// zero dimension.
GridSpec parse_grid(const std::string& text);

/// Five-cell neighborhood: center, North, East, South, West, with
/// wraparound and duplicates removed (order preserved). It is called a
/// Moore neighborhood in the coevolutionary GAN literature, although the
/// shape is the von Neumann cross.
struct Neighborhood {
  CellCoord center;
  std::vector<CellCoord> members;

  bool contains(const CellCoord& c) const;
  /// Position of `c` in `members`, or -1.
  int index_of(const CellCoord& c) const;
};

Neighborhood neighborhood(const GridSpec& spec, const CellCoord& c);

/// Cells whose neighborhoods contain `c`, found by scanning the whole grid.
/// Ordered row-major.
std::vector<CellCoord> overlap_neighbors(const GridSpec& spec, const CellCoord& c);

/// Row-major, offset by one: rank 0 is the master.
int coord_to_rank(const GridSpec& spec, const CellCoord& c);
CellCoord rank_to_coord(const GridSpec& spec, int rank);

bool in_bounds(const GridSpec& spec, const CellCoord& c);

struct RankMove {
  int rank = 0;
  bool active = true;
  CellCoord to;  // meaningful only when active

  bool operator==(const RankMove&) const = default;
};

/// Plan for switching `old_spec` to `new_spec`. `live_ranks` are the worker
/// ranks currently available. Ranks retained in the new grid receive their
/// row-major coordinate; the plan lists only ranks whose assignment changes.
/// Throws CapacityError when the new grid needs more workers than are live.
std::vector<RankMove> reconfigure(const GridSpec& old_spec, const GridSpec& new_spec,
                                  const std::vector<int>& live_ranks);

}  // namespace cellgan::grid
