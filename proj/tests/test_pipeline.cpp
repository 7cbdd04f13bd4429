#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "helpers.hpp"
#include "nri/pipeline.hpp"
#include "oracles.hpp"

using namespace nri;

namespace {

const std::filesystem::path kFixtures = NRI_FIXTURE_DIR;

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "nri_pipeline_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

TripRecord trip(const std::string& start, const std::string& end, double distance, double cost) {
  return {"A", "B", *parse_timestamp(start), *parse_timestamp(end), distance, cost};
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("timestamps parse as UTC") {
    CHECK(parse_timestamp("2019-01-07 00:00:00") == 1546819200);
    CHECK(parse_timestamp("2019-01-07T00:00Z") == 1546819200);
    CHECK(parse_timestamp("2019-01-07 01:30") == 1546819200 + 5400);
    CHECK_FALSE(parse_timestamp("yesterday").has_value());
    CHECK_FALSE(parse_timestamp("2019-13-01 00:00").has_value());
    CHECK(format_timestamp(1546819200) == "2019-01-07T00:00:00Z");
    auto [lo, hi] = year_bounds(2019);
    CHECK(hi - lo == 365 * 86400);
  }

  TEST_CASE("cleaning rules") {
    CHECK(clean_trips({trip("2019-03-01 10:00", "2019-03-01 10:20", 0.05, 5.0)}, 2019).empty());
    CHECK(clean_trips({trip("2019-03-01 10:00:00", "2019-03-01 10:00:30", 1.0, 5.0)}, 2019).empty());
    CHECK(clean_trips({trip("2018-12-31 23:50", "2019-01-01 00:10", 1.0, 5.0)}, 2019).empty());
    CHECK(clean_trips({trip("2019-03-01 10:00", "2019-03-01 10:20", 1.0, -2.0)}, 2019).empty());
    CHECK(clean_trips({trip("2019-03-01 10:00", "2019-03-01 10:01", 0.1, 0.01)}, 2019).size() == 1);
  }

  TEST_CASE("taxi fixture keeps six of ten trips") {
    TripTable table = read_trips(kFixtures / "taxi_trips.csv");
    REQUIRE(table.records.size() == 10);
    CHECK(table.unparseable == 0);
    CleaningReport rep;
    auto kept = clean_trips(table.records, 2019, &rep);
    CHECK(kept.size() == 6);
    CHECK(rep.input == 10);
    CHECK(rep.kept == 6);
    CHECK(rep.timestamp_error == 1);
    CHECK(rep.short_distance == 1);
    CHECK(rep.short_duration == 1);
    CHECK(rep.nonpositive_cost == 1);
  }

  TEST_CASE("unparseable trip rows are counted") {
    std::istringstream in(
        "tpep_pickup_datetime,tpep_dropoff_datetime,trip_distance,PULocationID,DOLocationID,fare_amount\n"
        "2019-01-07 08:00,2019-01-07 08:10,1.0,A,B,5\n"
        "not a time,2019-01-07 08:10,1.0,A,B,5\n"
        "2019-01-07 08:00,2019-01-07 08:10,1.0\n");
    TripTable t = parse_trips(in);
    CHECK(t.records.size() == 1);
    CHECK(t.unparseable == 2);
    std::istringstream bad("a,b,c\n1,2,3\n");
    CHECK_THROWS_AS(parse_trips(bad), DataError);
    CHECK_THROWS_AS(read_trips(kFixtures / "no_such_file.csv"), DataError);
  }

  TEST_CASE("aggregation conserves trips") {
    auto kept = clean_trips(read_trips(kFixtures / "taxi_trips.csv").records, 2019);
    const std::int64_t start = *parse_timestamp("2019-01-07 00:00");
    AggregationReport rep;
    SeriesDataset d = aggregate_zone_hour(kept, {"A", "B", "C", "D"}, start, 24, &rep);
    CHECK(d.num_nodes() == 4);
    CHECK(d.num_features() == 2);
    CHECK(d.num_globals() == 4);
    double pickups = 0, dropoffs = 0;
    for (std::size_t t = 0; t < 24; ++t)
      for (std::size_t j = 0; j < 4; ++j) {
        pickups += d.values(t, j, 0);
        dropoffs += d.values(t, j, 1);
      }
    CHECK(pickups == static_cast<double>(kept.size()));
    CHECK(dropoffs == static_cast<double>(kept.size()));
    CHECK(d.values(8, 0, 0) == 2.0);
    CHECK(d.values(3, 0, 0) == 0.0);
    CHECK(rep.unknown_pickup_zone == 0);
    CHECK(rep.outside_range == 0);

    std::vector<TripRecord> three(3, trip("2019-01-07 05:10", "2019-01-07 05:30", 1.0, 5.0));
    three.push_back({"Z", "A", start + 100, start + 900, 1.0, 5.0});
    SeriesDataset e = aggregate_zone_hour(three, {"A", "B"}, start, 6, &rep);
    CHECK(e.values(5, 0, 0) == 3.0);
    CHECK(e.values(5, 1, 1) == 3.0);
    CHECK(e.values(0, 0, 1) == 1.0);
    CHECK(rep.unknown_pickup_zone == 1);

    SeriesDataset year = aggregate_zone_hour(kept, {"A", "B", "C"}, 2019);
    CHECK(year.num_steps() == 8760);
  }

  TEST_CASE("local adjacency from zone neighbors") {
    ZoneGeometry g = read_zone_geometry(kFixtures / "taxi_zones.csv");
    REQUIRE(g.zones.size() == 4);
    AdjacencyMatrix adj = build_local_adjacency(g);
    CHECK(adj.edge_count() == 4);
    CHECK(adj(0, 1) == 1.0);
    CHECK(adj(1, 0) == 1.0);
    CHECK(adj(0, 2) == 0.0);
    CHECK(adj.is_symmetric());
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(adj(3, k) == 0.0);
      CHECK(adj(k, 3) == 0.0);
    }

    ZoneGeometry lopsided;
    lopsided.zones = {"A", "B"};
    lopsided.neighbors = {{"A", {"B"}}, {"B", {}}};
    CHECK_THROWS_AS(build_local_adjacency(lopsided), DataError);
  }

  TEST_CASE("DTW hand cases and brute-force agreement") {
    const std::vector<double> z{0, 0, 0}, o{1, 1, 1}, a{1, 2, 3}, b{2, 3};
    CHECK(dtw_distance(z, o) == 3.0);
    CHECK(oracle::brute_dtw(z, o) == 3.0);
    CHECK(dtw_distance(a, b) == 1.0);
    CHECK(oracle::brute_dtw(a, b) == 1.0);
    CHECK(dtw_distance(a, a) == 0.0);
    CHECK_THROWS(dtw_distance(std::vector<double>{}, a));

    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> x(1 + rng.next() % 6), y(1 + rng.next() % 6);
      for (double& v : x) v = rng.normal();
      for (double& v : y) v = rng.normal();
      CHECK(dtw_distance(x, y) == doctest::Approx(oracle::brute_dtw(x, y)).epsilon(1e-12));
      CHECK(dtw_distance(x, y) == doctest::Approx(dtw_distance(y, x)).epsilon(1e-12));
    }
  }

  TEST_CASE("DTW adjacency") {
    Matrix two(2, 3);
    two << 0, 1, 2, 5, 5, 5;
    auto r2 = build_dtw_adjacency(two);
    CHECK(r2.adjacency.edge_count() == 2);

    Matrix clique(11, 8);
    for (Eigen::Index i = 0; i < 10; ++i)
      for (Eigen::Index t = 0; t < 8; ++t) clique(i, t) = std::sin(static_cast<double>(t));
    for (Eigen::Index t = 0; t < 8; ++t) clique(10, t) = 10.0 + static_cast<double>(t);
    auto rc = build_dtw_adjacency(clique);
    CHECK(rc.adjacency.edge_count() == 90);
    for (std::size_t k = 0; k < 10; ++k) {
      CHECK(rc.adjacency(k, 10) == 0.0);
      CHECK(rc.adjacency(10, k) == 0.0);
    }

    Rng rng(6);
    Matrix noise(30, 24);
    for (Eigen::Index k = 0; k < noise.size(); ++k) noise.data()[k] = rng.normal();
    auto rn = build_dtw_adjacency(noise);
    const double density = static_cast<double>(rn.adjacency.edge_count()) / (30.0 * 29.0);
    CHECK(density >= 0.08);
    CHECK(density <= 0.12);
    CHECK(rn.adjacency.is_symmetric());

    CHECK_THROWS_AS(build_dtw_adjacency(Matrix::Zero(1, 4)), DataError);
  }

  TEST_CASE("daily profiles average each hour of day") {
    Matrix s(1, 48);
    for (Eigen::Index t = 0; t < 48; ++t) s(0, t) = static_cast<double>(t);
    Matrix p = daily_profile(s, 24);
    REQUIRE(p.cols() == 24);
    CHECK(p(0, 0) == 12.0);
    CHECK(p(0, 23) == 35.0);
  }

  TEST_CASE("speed table with gaps") {
    const auto path = scratch("speeds.csv");
    std::ofstream(path) << "timestamp,s1,s2\n"
                           "2019-01-07 00:00,,60\n"
                           "2019-01-07 00:05,55,0\n"
                           "2019-01-07 00:10,NaN,58\n"
                           "2019-01-07 00:15,50,57\n";
    SpeedTable t = read_speed_matrix(path);
    CHECK(t.filled == 3);
    const Tensor3& v = t.dataset.values;
    CHECK(v(0, 0, 0) == 55.0);
    CHECK(v(2, 0, 0) == 55.0);
    CHECK(v(1, 1, 0) == 60.0);
    CHECK(v(3, 1, 0) == 57.0);
    CHECK(t.dataset.node_ids == std::vector<std::string>{"s1", "s2"});
  }

  TEST_CASE("distance adjacency") {
    const auto path = scratch("distances.csv");
    std::ofstream(path) << "from,to,cost\n"
                           "s1,s2,1.5\n"
                           "s2,s1,2.5\n"
                           "s2,s3,0.5\n"
                           "s9,s1,0.1\n";
    SensorMeta meta = read_distance_table(path, {"s1", "s2", "s3"});
    CHECK(std::isinf(meta.distances(0, 2)));
    CHECK(build_distance_adjacency(meta, 0.0).edge_count() == 0);
    CHECK(build_distance_adjacency(meta, std::numeric_limits<double>::infinity()).edge_count() == 6);
    AdjacencyMatrix two = build_distance_adjacency(meta, 2.0);
    CHECK(two.edge_count() == 2);
    CHECK(two(0, 1) == 1.0);
    CHECK(two(1, 2) == 1.0);
    CHECK(distance_threshold_for_degree(meta, 1.0) == 2.5);
  }

  TEST_CASE("global calendar track") {
    std::vector<std::int64_t> ts;
    const std::int64_t monday = *parse_timestamp("2019-01-07 00:00");
    for (int h = 0; h < 24 * 8; ++h) ts.push_back(monday + h * 3600);
    Matrix g = build_global_track(ts);
    REQUIRE(g.cols() == 4);
    CHECK(std::abs(g(0, 0)) < 1e-15);
    CHECK(g(0, 1) == 1.0);
    CHECK(g(0, 3) == 1.0);
    CHECK(g(6, 0) == doctest::Approx(1.0));
    for (int h = 0; h < 24 * 7; ++h) {
      CHECK(g(h, 0) == doctest::Approx(g(h + 24, 0)).epsilon(1e-12));
      CHECK(g(h, 1) == doctest::Approx(g(h + 24, 1)).epsilon(1e-12));
    }

    const auto path = scratch("weather.csv");
    {
      std::ofstream out(path);
      out << "timestamp,temperature\n";
      for (auto t : ts) out << t << "," << 10 + (t - monday) / 3600 << "\n";
    }
    Matrix extra = read_global_extras(path, ts);
    Matrix full = build_global_track(ts, extra);
    CHECK(full.cols() == 5);
    CHECK(full(3, 4) == 13.0);

    std::vector<std::int64_t> gap{0, 3600, 10800};
    CHECK_THROWS_AS(build_global_track(gap), DataError);
  }
}
