#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "nri/core.hpp"

namespace nri {

// ---- timestamps -------------------------------------------------------------

// "YYYY-MM-DD HH:MM[:SS]" or "YYYY-MM-DDTHH:MM[:SS][Z]" as UTC unix seconds.
std::optional<std::int64_t> parse_timestamp(const std::string& text);
std::string format_timestamp(std::int64_t unix_seconds);
// [start, end) of a calendar year in unix seconds.
std::pair<std::int64_t, std::int64_t> year_bounds(int year);

// ---- trips ------------------------------------------------------------------

struct TripRecord {
  std::string pickup_zone;
  std::string dropoff_zone;
  std::int64_t start = 0;
  std::int64_t end = 0;
  double distance = 0.0;  // miles
  double cost = 0.0;

  double duration_minutes() const { return static_cast<double>(end - start) / 60.0; }
};

struct TripColumns {
  std::string pickup_zone = "PULocationID";
  std::string dropoff_zone = "DOLocationID";
  std::string pickup_time = "tpep_pickup_datetime";
  std::string dropoff_time = "tpep_dropoff_datetime";
  std::string distance = "trip_distance";
  std::string cost = "fare_amount";
};

struct TripTable {
  std::vector<TripRecord> records;
  std::size_t unparseable = 0;
};

// Delimited text with a header row naming the columns.
TripTable parse_trips(std::istream& in, const TripColumns& columns = {}, char delim = ',');
TripTable read_trips(const std::filesystem::path& path, const TripColumns& columns = {}, char delim = ',');

struct CleaningReport {
  std::size_t input = 0;
  std::size_t timestamp_error = 0;  // end <= start or start outside the year
  std::size_t short_distance = 0;   // < 0.1 mi
  std::size_t short_duration = 0;   // < 1 min
  std::size_t nonpositive_cost = 0;
  std::size_t kept = 0;
};

// Drops invalid trips. Each removed trip is counted under the first rule it
// violates, in the order of the report fields.
std::vector<TripRecord> clean_trips(const std::vector<TripRecord>& trips, int year, CleaningReport* report = nullptr);

struct AggregationReport {
  std::size_t unknown_pickup_zone = 0;
  std::size_t unknown_dropoff_zone = 0;
  std::size_t outside_range = 0;
};

// Hourly pickups (feature 0) and dropoffs (feature 1) per zone on a dense
// grid of `hours` hours starting at `start`. Globals are the calendar track.
SeriesDataset aggregate_zone_hour(const std::vector<TripRecord>& trips, const std::vector<std::string>& zones,
                                  std::int64_t start, std::size_t hours, AggregationReport* report = nullptr);
// Whole calendar year.
SeriesDataset aggregate_zone_hour(const std::vector<TripRecord>& trips, const std::vector<std::string>& zones,
                                  int year, AggregationReport* report = nullptr);

// ---- zone geometry --------------------------------------------------------------

struct ZoneGeometry {
  std::vector<std::string> zones;
  std::map<std::string, std::set<std::string>> neighbors;
};

// Lines "zone,neighbor" (an optional header row is skipped); a line with a
// single field declares an isolated zone. Zone order is first appearance.
ZoneGeometry read_zone_geometry(const std::filesystem::path& path);

AdjacencyMatrix build_local_adjacency(const ZoneGeometry& geometry);

// ---- DTW ----------------------------------------------------------------------

// Unit-step DTW with absolute-difference cost.
double dtw_distance(std::span<const double> a, std::span<const double> b);

// Hour-of-day means of each row of `series` [N x L].
Matrix daily_profile(const Matrix& series, std::size_t steps_per_day = 24);

// Per-node activity series [N x steps]: the sum over features of the first
// `steps` time steps.
Matrix node_activity(const SeriesDataset& data, std::size_t steps);

struct DtwAdjacencyResult {
  AdjacencyMatrix adjacency;
  Matrix distances;  // [N x N]
  double threshold = 0.0;
};

// Edge (i, j) iff DTW(i, j) <= the 10th percentile (nearest rank) of the
// distances over unordered pairs; rows of `series` are nodes.
DtwAdjacencyResult build_dtw_adjacency(const Matrix& series, double percentile = 10.0,
                                       const std::vector<std::string>& node_ids = {});

// ---- speed sensors ------------------------------------------------------------

struct SpeedTable {
  SeriesDataset dataset;
  std::size_t filled = 0;  // missing readings replaced by the previous reading
};

// Header "timestamp,<sensor ids...>", one row per time step. Empty, NaN or
// zero readings are missing and forward-filled.
SpeedTable read_speed_matrix(const std::filesystem::path& path);

struct SensorMeta {
  std::vector<std::string> sensors;
  Matrix distances;  // road-network distance, +inf when not listed
};

// Rows "from,to,distance" (header skipped); unknown ids are ignored.
SensorMeta read_distance_table(const std::filesystem::path& path, const std::vector<std::string>& sensors);

// A[i][j] = 1 iff distance(i, j) <= threshold. Unlisted pairs are unconnected.
AdjacencyMatrix build_distance_adjacency(const SensorMeta& meta, double threshold);
// Smallest threshold giving mean out-degree at least `target_degree`.
double distance_threshold_for_degree(const SensorMeta& meta, double target_degree = 8.0);

// ---- global features ----------------------------------------------------------

// sin/cos of hour-of-day and of day-of-week (phase 0 at Monday 00:00 UTC),
// then `extras` columns. Timestamps must be evenly spaced.
Matrix build_global_track(const std::vector<std::int64_t>& timestamps, const Matrix& extras = Matrix());

// Side file "timestamp,<columns...>" aligned row by row with `timestamps`.
Matrix read_global_extras(const std::filesystem::path& path, const std::vector<std::int64_t>& timestamps);

}  // namespace nri
