#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "drift/grid.hpp"

using namespace drift;

namespace {
GridSpec default_spec() { return GridSpec{}; }
}  // namespace

TEST_CASE("make_field fills and stamps time zero") {
    auto f = make_field(default_spec(), 0.0);
    CHECK(f.values.size() == 150u * 70u);
    double sum = 0.0;
    for (double v : f.values) sum += v;
    CHECK(sum == 0.0);
    CHECK(f.t == 0.0);

    GridSpec tiny{2, 2, 1.0, 1.0, {0, 0}, 20.0};
    auto g = make_field(tiny, 1.5);
    REQUIRE(g.values.size() == 4u);
    for (double v : g.values) CHECK(v == 1.5);
}

TEST_CASE("make_field rejects non-finite fill") {
    CHECK_THROWS_AS(make_field(default_spec(), std::nan("")), Error);
    CHECK_THROWS_AS(make_field(default_spec(), INFINITY), Error);
}

TEST_CASE("GridSpec validation") {
    GridSpec bad = default_spec();
    bad.nx = 1;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = default_spec();
    bad.dx = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = default_spec();
    bad.frame_rate = -1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("world_to_cell basics") {
    GridSpec s = default_spec();
    s.origin = {12.0, -3.0};
    CHECK(s.world_to_cell(s.origin) == std::make_pair(0, 0));
    CHECK(s.world_to_cell({s.origin.x + s.dx, s.origin.y}) ==
          std::make_pair(1, 0));
    CHECK_FALSE(s.world_to_cell({s.origin.x + 1000.0, s.origin.y}).has_value());
    CHECK_FALSE(s.world_to_cell({s.origin.x - 1000.0, s.origin.y}).has_value());
}

TEST_CASE("world_to_cell round-trips every cell center") {
    GridSpec s{9, 7, 0.5, 2.0, {3.25, -8.0}, 25.0};
    for (int j = 0; j < s.ny; ++j) {
        for (int i = 0; i < s.nx; ++i) {
            auto cell = s.world_to_cell(s.cell_center(i, j));
            REQUIRE(cell.has_value());
            CHECK(*cell == std::make_pair(i, j));
        }
    }
}

TEST_CASE("integrate on uniform and single-cell fields") {
    auto f = make_field(default_spec(), 1.0);
    CHECK(integrate(f) == doctest::Approx(10500.0).epsilon(1e-12));
    CHECK(integrate(make_field(default_spec(), 0.0)) == 0.0);

    // midpoint rule by hand: one cell of 2.0 on a dx=dy=0.5 grid -> 2*0.25
    GridSpec s{4, 4, 0.5, 0.5, {0, 0}, 20.0};
    auto g = make_field(s, 0.0);
    g.at(1, 2) = 2.0;
    CHECK(integrate(g) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("integrate is linear") {
    GridSpec s{12, 9, 0.7, 1.3, {-2, 5}, 20.0};
    Rng rng(42);
    auto f = make_field(s, 0.0);
    auto g = make_field(s, 0.0);
    for (int k = 0; k < s.cell_count(); ++k) {
        f.values[k] = rng.uniform(-5.0, 5.0);
        g.values[k] = rng.uniform(-5.0, 5.0);
    }
    const double a = 2.25, b = -0.75;
    auto combo = make_field(s, 0.0);
    for (int k = 0; k < s.cell_count(); ++k)
        combo.values[k] = a * f.values[k] + b * g.values[k];
    const double lhs = integrate(combo);
    const double rhs = a * integrate(f) + b * integrate(g);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
}

TEST_CASE("DRIFTGRID text round trip") {
    GridSpec s{5, 3, 0.5, 1.5, {-1.0, 2.0}, 20.0};
    auto f = make_field(s, 0.0);
    for (int k = 0; k < s.cell_count(); ++k) f.values[k] = 0.125 * k - 0.5;
    f.t = 3.75;

    std::stringstream ss;
    write_grid_text(f, ss);

    std::string first_line;
    std::getline(ss, first_line);
    CHECK(first_line == "DRIFTGRID v1 5 3 0.5 1.5 -1 2 3.75");

    ss.clear();
    ss.seekg(0);
    auto back = read_grid_text(ss);
    CHECK(back.spec == s);
    CHECK(back.t == f.t);
    REQUIRE(back.values.size() == f.values.size());
    for (std::size_t k = 0; k < f.values.size(); ++k)
        CHECK(back.values[k] == doctest::Approx(f.values[k]).epsilon(1e-8));
}

TEST_CASE("DRIFTGRID binary round trip is float32-exact") {
    GridSpec s{6, 4, 1.0, 1.0, {0, 0}, 20.0};
    auto f = make_field(s, 0.0);
    Rng rng(7);
    for (double& v : f.values) v = rng.uniform(-100.0, 100.0);
    f.t = 0.05;

    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    write_grid_binary(f, ss);
    ss.seekg(0);
    auto back = read_grid_binary(ss);
    REQUIRE(back.values.size() == f.values.size());
    for (std::size_t k = 0; k < f.values.size(); ++k)
        CHECK(back.values[k] == static_cast<double>(static_cast<float>(f.values[k])));
}

TEST_CASE("DRIFTGRID rejects malformed input") {
    std::stringstream ss("NOTAGRID v1 2 2 1 1 0 0 0\n");
    CHECK_THROWS_AS(read_grid_text(ss), Error);
    std::stringstream truncated("DRIFTGRID v1 3 3 1 1 0 0 0\n1 2 3\n");
    CHECK_THROWS_AS(read_grid_text(truncated), Error);
}
