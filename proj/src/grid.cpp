#include "cellgan/grid.hpp"

#include <algorithm>
#include <charconv>

#include "cellgan/error.hpp"

namespace cellgan::grid {

std::string to_string(const CellCoord& c) {
  return "(" + std::to_string(c.row) + "," + std::to_string(c.col) + ")";
}

std::string to_string(const GridSpec& g) { return std::to_string(g.rows) + "x" + std::to_string(g.cols); }

GridSpec parse_grid(const std::string& text) {
  const auto x = text.find_first_of("xX");
  if (x == std::string::npos) throw UsageError("grid must look like RxC, got '" + text + "'");
  auto parse_dim = [&](std::string_view part) {
    int v = 0;
    auto [end, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc{} || end != part.data() + part.size() || part.empty())
      throw UsageError("grid must look like RxC, got '" + text + "'");
    if (v < 1) throw UsageError("grid dimensions must be >= 1, got '" + text + "'");
    return v;
  };
  std::string_view sv(text);
  return GridSpec{parse_dim(sv.substr(0, x)), parse_dim(sv.substr(x + 1))};
}

bool Neighborhood::contains(const CellCoord& c) const { return index_of(c) >= 0; }

int Neighborhood::index_of(const CellCoord& c) const {
  auto it = std::find(members.begin(), members.end(), c);
  return it == members.end() ? -1 : static_cast<int>(it - members.begin());
}

bool in_bounds(const GridSpec& spec, const CellCoord& c) {
  return c.row >= 0 && c.col >= 0 && c.row < spec.rows && c.col < spec.cols;
}

namespace {

void require_in_bounds(const GridSpec& spec, const CellCoord& c) {
  if (!in_bounds(spec, c))
    throw UsageError("cell " + to_string(c) + " outside " + to_string(spec) + " grid");
}

int wrap(int v, int n) { return ((v % n) + n) % n; }

}  // namespace

Neighborhood neighborhood(const GridSpec& spec, const CellCoord& c) {
  require_in_bounds(spec, c);
  Neighborhood n{c, {}};
  const CellCoord candidates[] = {
      c,
      {wrap(c.row - 1, spec.rows), c.col},  // North
      {c.row, wrap(c.col + 1, spec.cols)},  // East
      {wrap(c.row + 1, spec.rows), c.col},  // South
      {c.row, wrap(c.col - 1, spec.cols)},  // West
  };
  for (const auto& m : candidates)
    if (!n.contains(m)) n.members.push_back(m);
  return n;
}

std::vector<CellCoord> overlap_neighbors(const GridSpec& spec, const CellCoord& c) {
  require_in_bounds(spec, c);
  std::vector<CellCoord> out;
  for (int r = 0; r < spec.rows; ++r)
    for (int k = 0; k < spec.cols; ++k)
      if (neighborhood(spec, {r, k}).contains(c)) out.push_back({r, k});
  return out;
}

int coord_to_rank(const GridSpec& spec, const CellCoord& c) {
  require_in_bounds(spec, c);
  return c.row * spec.cols + c.col + 1;
}

CellCoord rank_to_coord(const GridSpec& spec, int rank) {
  if (rank < 1 || rank > spec.cells())
    throw UsageError("rank " + std::to_string(rank) + " not a cell of " + to_string(spec) + " grid");
  return {(rank - 1) / spec.cols, (rank - 1) % spec.cols};
}

std::vector<RankMove> reconfigure(const GridSpec& old_spec, const GridSpec& new_spec,
                                  const std::vector<int>& live_ranks) {
  if (new_spec.rows < 1 || new_spec.cols < 1) throw UsageError("grid dimensions must be >= 1");
  std::vector<int> ranks = live_ranks;
  std::sort(ranks.begin(), ranks.end());
  ranks.erase(std::unique(ranks.begin(), ranks.end()), ranks.end());
  if (new_spec.cells() > static_cast<int>(ranks.size()))
    throw CapacityError("grid " + to_string(new_spec) + " needs " + std::to_string(new_spec.cells()) +
                        " workers, only " + std::to_string(ranks.size()) + " available");

  std::vector<RankMove> plan;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    const int rank = ranks[i];
    const bool was_active = rank >= 1 && rank <= old_spec.cells();
    if (static_cast<int>(i) < new_spec.cells()) {
      const CellCoord to{static_cast<int>(i) / new_spec.cols, static_cast<int>(i) % new_spec.cols};
      if (!was_active || rank_to_coord(old_spec, rank) != to) plan.push_back({rank, true, to});
    } else if (was_active) {
      plan.push_back({rank, false, {}});
    }
  }
  return plan;
}

}  // namespace cellgan::grid
