#include <algorithm>
#include <queue>
#include <set>

#include "cellgan/error.hpp"
#include "cellgan/grid.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace cellgan;
using namespace cellgan::grid;

using Coords = std::vector<CellCoord>;

TEST_CASE("neighborhood examples") {
  CHECK(neighborhood({4, 4}, {1, 3}).members == Coords{{1, 3}, {0, 3}, {1, 0}, {2, 3}, {1, 2}});
  CHECK(neighborhood({1, 1}, {0, 0}).members == Coords{{0, 0}});
  CHECK(neighborhood({2, 2}, {0, 0}).members == Coords{{0, 0}, {1, 0}, {0, 1}});
  CHECK(neighborhood({4, 4}, {1, 1}).members == Coords{{1, 1}, {0, 1}, {1, 2}, {2, 1}, {1, 0}});
  CHECK_THROWS_AS(neighborhood({4, 4}, {4, 0}), UsageError);
  CHECK_THROWS_AS(neighborhood({4, 4}, {0, -1}), UsageError);
}

TEST_CASE("overlap examples") {
  CHECK(overlap_neighbors({1, 1}, {0, 0}) == Coords{{0, 0}});
  auto got = overlap_neighbors({4, 4}, {1, 2});
  std::set<CellCoord> s(got.begin(), got.end());
  CHECK(s == std::set<CellCoord>{{1, 2}, {0, 2}, {1, 3}, {2, 2}, {1, 1}});
}

TEST_CASE("rank mapping examples") {
  CHECK(coord_to_rank({4, 4}, {0, 0}) == 1);
  CHECK(coord_to_rank({4, 4}, {1, 3}) == 8);
  CHECK_THROWS_AS(rank_to_coord({4, 4}, 0), UsageError);
  CHECK_THROWS_AS(rank_to_coord({4, 4}, 17), UsageError);
}

TEST_CASE("exhaustive topology properties up to 6x6") {
  for (int rows = 1; rows <= 6; ++rows)
    for (int cols = 1; cols <= 6; ++cols) {
      const GridSpec g{rows, cols};
      std::set<int> ranks;
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
          const CellCoord cell{r, c};
          const auto hood = neighborhood(g, cell);
          CHECK(hood.members.front() == cell);
          std::set<CellCoord> as_set(hood.members.begin(), hood.members.end());
          CHECK(as_set.size() == hood.members.size());
          CHECK(as_set == oracle::brute_neighborhood(rows, cols, cell));
          if (rows >= 3 && cols >= 3) CHECK(hood.members.size() == 5);

          auto ov = overlap_neighbors(g, cell);
          CHECK(std::set<CellCoord>(ov.begin(), ov.end()) == as_set);
          for (const auto& m : hood.members) CHECK(neighborhood(g, m).contains(cell));

          const int rank = coord_to_rank(g, cell);
          CHECK(rank_to_coord(g, rank) == cell);
          ranks.insert(rank);
        }
      CHECK(ranks.size() == static_cast<std::size_t>(rows * cols));
      CHECK(*ranks.begin() == 1);
      CHECK(*ranks.rbegin() == rows * cols);
    }
  CHECK(neighborhood({2, 2}, {1, 1}).members.size() == 3);
}

TEST_CASE("epidemic propagation takes the torus diameter") {
  for (int rows = 1; rows <= 6; ++rows)
    for (int cols = 1; cols <= 6; ++cols) {
      const GridSpec g{rows, cols};
      std::set<CellCoord> tagged{{0, 0}};
      int rounds = 0;
      while (tagged.size() < static_cast<std::size_t>(g.cells())) {
        std::set<CellCoord> next = tagged;
        for (const auto& t : tagged)
          for (const auto& m : neighborhood(g, t).members) next.insert(m);
        tagged = std::move(next);
        ++rounds;
      }
      CHECK(rounds == rows / 2 + cols / 2);
    }
}

TEST_CASE("parse_grid") {
  CHECK(parse_grid("4x4") == GridSpec{4, 4});
  CHECK(parse_grid("2X3") == GridSpec{2, 3});
  CHECK_THROWS_AS(parse_grid("3x0"), UsageError);
  CHECK_THROWS_AS(parse_grid("3"), UsageError);
  CHECK_THROWS_AS(parse_grid("ax2"), UsageError);
  CHECK_THROWS_AS(parse_grid("2x2x2"), UsageError);
  CHECK(to_string(GridSpec{3, 5}) == "3x5");
}

TEST_CASE("reconfigure") {
  const std::vector<int> four{1, 2, 3, 4};
  const std::vector<int> nine{1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK(reconfigure({2, 2}, {2, 2}, four).empty());

  const auto plan = reconfigure({3, 3}, {2, 2}, nine);
  std::set<int> inactive;
  for (const auto& m : plan) {
    if (!m.active) {
      inactive.insert(m.rank);
    } else {
      CHECK(m.rank <= 4);
      CHECK(m.to == rank_to_coord({2, 2}, m.rank));
    }
  }
  CHECK(inactive == std::set<int>{5, 6, 7, 8, 9});
  // Ranks 1 and 2 keep (0,0) and (0,1); ranks 3 and 4 move.
  CHECK(std::count_if(plan.begin(), plan.end(), [](const RankMove& m) { return m.active; }) == 2);

  CHECK_THROWS_AS(reconfigure({2, 2}, {3, 3}, four), CapacityError);

  const auto grow = reconfigure({2, 2}, {3, 3}, nine);
  for (const auto& m : grow) CHECK(m.active);
  CHECK(std::any_of(grow.begin(), grow.end(), [](const RankMove& m) { return m.rank == 9 && m.to == CellCoord{2, 2}; }));
}
