#include "nri/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "nri/io.hpp"

namespace nri {

namespace {

constexpr std::int64_t kMondayEpoch = 4 * 86400;  // 1970-01-05 00:00 UTC
constexpr std::int64_t kWeek = 7 * 86400;

auto idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  using namespace std::chrono;
  return sys_days{year{y} / month{m} / day{d}}.time_since_epoch().count();
}

bool parse_int(const std::string& s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  const char* b = s.data() + pos;
  auto [p, ec] = std::from_chars(b, b + len, out);
  return ec == std::errc() && p == b + len;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::ifstream open_text(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw DataError(std::string("cannot open ") + what + " " + path.string());
  return in;
}

}  // namespace

std::optional<std::int64_t> parse_timestamp(const std::string& raw) {
  const std::string s = io::trim(raw);
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  if (s.size() < 16 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') || s[13] != ':') return std::nullopt;
  if (!parse_int(s, 0, 4, y) || !parse_int(s, 5, 2, mo) || !parse_int(s, 8, 2, d) || !parse_int(s, 11, 2, h) ||
      !parse_int(s, 14, 2, mi))
    return std::nullopt;
  std::size_t rest = 16;
  if (s.size() >= 19 && s[16] == ':') {
    if (!parse_int(s, 17, 2, sec)) return std::nullopt;
    rest = 19;
    if (rest < s.size() && s[rest] == '.') {
      ++rest;
      while (rest < s.size() && std::isdigit(static_cast<unsigned char>(s[rest]))) ++rest;
    }
  }
  if (rest < s.size() && s[rest] == 'Z') ++rest;
  if (rest != s.size()) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) return std::nullopt;
  return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 + h * 3600 + mi * 60 + sec;
}

std::string format_timestamp(std::int64_t t) {
  using namespace std::chrono;
  const std::int64_t days = floor_div(t, 86400);
  const std::int64_t secs = t - days * 86400;
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(secs / 3600),
                static_cast<int>(secs / 60 % 60), static_cast<int>(secs % 60));
  return buf;
}

std::pair<std::int64_t, std::int64_t> year_bounds(int year) {
  return {days_from_civil(year, 1, 1) * 86400, days_from_civil(year + 1, 1, 1) * 86400};
}

TripTable parse_trips(std::istream& in, const TripColumns& columns, char delim) {
  TripTable table;
  std::string line;
  while (std::getline(in, line) && (io::trim(line).empty() || line[0] == '#')) {
  }
  if (io::trim(line).empty()) return table;
  const auto header = io::split(line, delim);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("trip table has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_pu = column(columns.pickup_zone), c_do = column(columns.dropoff_zone),
                    c_ts = column(columns.pickup_time), c_te = column(columns.dropoff_time),
                    c_dist = column(columns.distance), c_cost = column(columns.cost);
  const std::size_t needed = std::max({c_pu, c_do, c_ts, c_te, c_dist, c_cost}) + 1;
  while (std::getline(in, line)) {
    if (io::trim(line).empty()) continue;
    const auto f = io::split(line, delim);
    if (f.size() < needed) {
      ++table.unparseable;
      continue;
    }
    const auto start = parse_timestamp(f[c_ts]);
    const auto end = parse_timestamp(f[c_te]);
    const auto dist = parse_number(f[c_dist]);
    const auto cost = parse_number(f[c_cost]);
    if (!start || !end || !dist || !cost || f[c_pu].empty() || f[c_do].empty()) {
      ++table.unparseable;
      continue;
    }
    table.records.push_back({f[c_pu], f[c_do], *start, *end, *dist, *cost});
  }
  return table;
}

TripTable read_trips(const std::filesystem::path& path, const TripColumns& columns, char delim) {
  auto in = open_text(path, "trip table");
  TripTable t = parse_trips(in, columns, delim);
  if (t.unparseable > 0) spdlog::warn("{}: {} unparseable trip rows skipped", path.string(), t.unparseable);
  return t;
}

std::vector<TripRecord> clean_trips(const std::vector<TripRecord>& trips, int year, CleaningReport* report) {
  const auto [lo, hi] = year_bounds(year);
  CleaningReport r;
  r.input = trips.size();
  std::vector<TripRecord> out;
  for (const auto& t : trips) {
    if (t.end <= t.start || t.start < lo || t.start >= hi) {
      ++r.timestamp_error;
    } else if (!(t.distance >= 0.1)) {
      ++r.short_distance;
    } else if (t.duration_minutes() < 1.0) {
      ++r.short_duration;
    } else if (!(t.cost > 0.0)) {
      ++r.nonpositive_cost;
    } else {
      out.push_back(t);
    }
  }
  r.kept = out.size();
  if (report) *report = r;
  return out;
}

SeriesDataset aggregate_zone_hour(const std::vector<TripRecord>& trips, const std::vector<std::string>& zones,
                                  std::int64_t start, std::size_t hours, AggregationReport* report) {
  if (zones.empty()) throw DataError("zone list is empty");
  if (hours == 0) throw DataError("aggregation range is empty");
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t z = 0; z < zones.size(); ++z) pos.emplace(zones[z], z);
  SeriesDataset d;
  d.values = Tensor3(hours, zones.size(), 2);
  d.node_ids = zones;
  for (std::size_t t = 0; t < hours; ++t) d.timestamps.push_back(start + static_cast<std::int64_t>(t) * 3600);
  AggregationReport r;
  auto bin = [&](std::int64_t ts) -> std::optional<std::size_t> {
    if (ts < start) return std::nullopt;
    const auto h = static_cast<std::size_t>((ts - start) / 3600);
    if (h >= hours) return std::nullopt;
    return h;
  };
  for (const auto& trip : trips) {
    const auto pu = pos.find(trip.pickup_zone);
    const auto dz = pos.find(trip.dropoff_zone);
    if (pu == pos.end()) ++r.unknown_pickup_zone;
    if (dz == pos.end()) ++r.unknown_dropoff_zone;
    const auto hs = bin(trip.start);
    const auto he = bin(trip.end);
    if (!hs || !he) ++r.outside_range;
    if (pu != pos.end() && hs) d.values(*hs, pu->second, 0) += 1.0;
    if (dz != pos.end() && he) d.values(*he, dz->second, 1) += 1.0;
  }
  if (r.unknown_pickup_zone + r.unknown_dropoff_zone > 0)
    spdlog::warn("{} pickups and {} dropoffs reference unknown zones and were excluded", r.unknown_pickup_zone,
                 r.unknown_dropoff_zone);
  d.globals = build_global_track(d.timestamps);
  if (report) *report = r;
  d.validate();
  return d;
}

SeriesDataset aggregate_zone_hour(const std::vector<TripRecord>& trips, const std::vector<std::string>& zones, int year,
                                  AggregationReport* report) {
  const auto [lo, hi] = year_bounds(year);
  return aggregate_zone_hour(trips, zones, lo, static_cast<std::size_t>((hi - lo) / 3600), report);
}

ZoneGeometry read_zone_geometry(const std::filesystem::path& path) {
  auto in = open_text(path, "zone geometry");
  ZoneGeometry g;
  auto add_zone = [&](const std::string& z) {
    if (g.neighbors.emplace(z, std::set<std::string>{}).second) g.zones.push_back(z);
  };
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (io::trim(line).empty() || line[0] == '#') continue;
    const auto f = io::split(line);
    if (first) {
      first = false;
      if (f.size() >= 1 && f[0] == "zone") continue;
    }
    if (f.empty() || f[0].empty()) continue;
    add_zone(f[0]);
    if (f.size() >= 2 && !f[1].empty()) {
      add_zone(f[1]);
      g.neighbors[f[0]].insert(f[1]);
    }
  }
  return g;
}

AdjacencyMatrix build_local_adjacency(const ZoneGeometry& geometry) {
  const std::size_t n = geometry.zones.size();
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < n; ++i) pos.emplace(geometry.zones[i], i);
  AdjacencyMatrix adj(n, geometry.zones);
  for (const auto& [zone, nbrs] : geometry.neighbors) {
    const auto a = pos.find(zone);
    if (a == pos.end()) throw DataError("neighbor list names unknown zone " + zone);
    for (const auto& nb : nbrs) {
      const auto b = pos.find(nb);
      if (b == pos.end()) throw DataError("neighbor list names unknown zone " + nb);
      if (nb == zone) throw DataError("zone " + zone + " lists itself as a neighbor");
      const auto back = geometry.neighbors.find(nb);
      if (back == geometry.neighbors.end() || !back->second.count(zone))
        throw DataError("asymmetric neighbor relation: " + zone + " -> " + nb + " has no reverse entry");
      adj.set(a->second, b->second, 1.0);
    }
  }
  return adj;
}

double dtw_distance(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("dtw_distance needs non-empty series");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(b.size() + 1, inf), cur(b.size() + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::abs(a[i - 1] - b[j - 1]) + std::min({prev[j - 1], prev[j], cur[j - 1]});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

Matrix daily_profile(const Matrix& series, std::size_t steps_per_day) {
  if (steps_per_day == 0) throw std::invalid_argument("steps_per_day must be positive");
  Matrix out = Matrix::Zero(series.rows(), idx(steps_per_day));
  std::vector<double> count(steps_per_day, 0.0);
  for (Eigen::Index t = 0; t < series.cols(); ++t) {
    const auto slot = static_cast<std::size_t>(t) % steps_per_day;
    out.col(idx(slot)) += series.col(t);
    count[slot] += 1.0;
  }
  for (std::size_t s = 0; s < steps_per_day; ++s)
    if (count[s] > 0) out.col(idx(s)) /= count[s];
  return out;
}

Matrix node_activity(const SeriesDataset& data, std::size_t steps) {
  if (steps > data.num_steps()) throw std::invalid_argument("node_activity: more steps than the dataset holds");
  Matrix out = Matrix::Zero(idx(data.num_nodes()), idx(steps));
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t j = 0; j < data.num_nodes(); ++j)
      for (std::size_t f = 0; f < data.num_features(); ++f) out(idx(j), idx(t)) += data.values(t, j, f);
  return out;
}

DtwAdjacencyResult build_dtw_adjacency(const Matrix& series, double percentile, const std::vector<std::string>& node_ids) {
  const std::size_t n = static_cast<std::size_t>(series.rows());
  if (n < 2) throw DataError("DTW adjacency needs at least 2 nodes");
  if (!(percentile > 0.0 && percentile <= 100.0)) throw std::invalid_argument("percentile must lie in (0, 100]");
  DtwAdjacencyResult r;
  r.distances = Matrix::Zero(idx(n), idx(n));
  std::vector<std::vector<double>> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i].assign(series.row(idx(i)).begin(), series.row(idx(i)).end());
  std::vector<double> all;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = dtw_distance(s[i], s[j]);
      r.distances(idx(i), idx(j)) = r.distances(idx(j), idx(i)) = d;
      all.push_back(d);
    }
  std::sort(all.begin(), all.end());
  const auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * static_cast<double>(all.size())));
  r.threshold = all[std::max<std::size_t>(rank, 1) - 1];
  r.adjacency = AdjacencyMatrix(n, node_ids);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && r.distances(idx(i), idx(j)) <= r.threshold) r.adjacency.set(i, j, 1.0);
  return r;
}

SpeedTable read_speed_matrix(const std::filesystem::path& path) {
  auto in = open_text(path, "speed table");
  std::string line;
  while (std::getline(in, line) && (io::trim(line).empty() || line[0] == '#')) {
  }
  const auto header = io::split(line);
  if (header.size() < 2) throw DataError(path.string() + ": speed table needs a timestamp column and sensors");
  const std::vector<std::string> sensors(header.begin() + 1, header.end());
  const std::size_t n = sensors.size();
  std::vector<std::int64_t> stamps;
  std::vector<double> values;
  std::vector<double> last(n, std::numeric_limits<double>::quiet_NaN());
  SpeedTable out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (io::trim(line).empty()) continue;
    const auto f = io::split(line);
    if (f.size() != n + 1) throw DataError(path.string() + ":" + std::to_string(lineno) + ": wrong field count");
    std::optional<std::int64_t> ts = parse_timestamp(f[0]);
    if (!ts) {
      if (auto v = parse_number(f[0])) ts = static_cast<std::int64_t>(*v);
    }
    if (!ts) throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad timestamp '" + f[0] + "'");
    stamps.push_back(*ts);
    for (std::size_t j = 0; j < n; ++j) {
      const auto v = parse_number(f[j + 1]);
      if (v && std::isfinite(*v) && *v != 0.0) {
        last[j] = *v;
      } else {
        ++out.filled;
      }
      values.push_back(last[j]);
    }
  }
  if (stamps.empty()) throw DataError(path.string() + ": speed table has no rows");
  // Leading gaps have nothing to carry forward; back-fill from the first reading.
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t first = 0;
    while (first < stamps.size() && std::isnan(values[first * n + j])) ++first;
    if (first == stamps.size()) throw DataError(path.string() + ": sensor " + sensors[j] + " has no readings");
    for (std::size_t t = 0; t < first; ++t) values[t * n + j] = values[first * n + j];
  }
  if (out.filled > 0) spdlog::warn("{}: {} missing speed readings filled", path.string(), out.filled);
  SeriesDataset& d = out.dataset;
  d.values = Tensor3(stamps.size(), n, 1);
  std::copy(values.begin(), values.end(), d.values.data().begin());
  d.timestamps = stamps;
  d.node_ids = sensors;
  d.globals = build_global_track(stamps);
  d.validate();
  return out;
}

SensorMeta read_distance_table(const std::filesystem::path& path, const std::vector<std::string>& sensors) {
  auto in = open_text(path, "distance table");
  const std::size_t n = sensors.size();
  SensorMeta meta;
  meta.sensors = sensors;
  meta.distances = Matrix::Constant(idx(n), idx(n), std::numeric_limits<double>::infinity());
  meta.distances.diagonal().setZero();
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < n; ++i) pos.emplace(sensors[i], i);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (io::trim(line).empty() || line[0] == '#') continue;
    const auto f = io::split(line);
    if (f.size() < 3) throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed distance row");
    const auto d = parse_number(f[2]);
    if (!d) {
      if (lineno == 1) continue;  // header
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad distance '" + f[2] + "'");
    }
    if (*d < 0) throw DataError(path.string() + ":" + std::to_string(lineno) + ": negative distance");
    const auto a = pos.find(f[0]);
    const auto b = pos.find(f[1]);
    if (a == pos.end() || b == pos.end() || a->second == b->second) continue;
    meta.distances(idx(a->second), idx(b->second)) = *d;
  }
  return meta;
}

AdjacencyMatrix build_distance_adjacency(const SensorMeta& meta, double threshold) {
  const std::size_t n = meta.sensors.size();
  if (std::isinf(threshold) && threshold > 0) {
    AdjacencyMatrix full = AdjacencyMatrix::full(n);
    return AdjacencyMatrix(full.entries(), meta.sensors);
  }
  AdjacencyMatrix adj(n, meta.sensors);
  std::size_t missing = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = meta.distances(idx(i), idx(j));
      if (!std::isfinite(d)) {
        ++missing;
        continue;
      }
      if (d <= threshold) adj.set(i, j, 1.0);
    }
  if (missing > 0) spdlog::warn("{} sensor pairs have no listed distance and are treated as unconnected", missing);
  return adj;
}

double distance_threshold_for_degree(const SensorMeta& meta, double target_degree) {
  const std::size_t n = meta.sensors.size();
  std::vector<double> d;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && std::isfinite(meta.distances(idx(i), idx(j)))) d.push_back(meta.distances(idx(i), idx(j)));
  if (d.empty()) throw DataError("no sensor distances available");
  std::sort(d.begin(), d.end());
  const auto want = static_cast<std::size_t>(std::ceil(target_degree * static_cast<double>(n)));
  return d[std::min(std::max<std::size_t>(want, 1), d.size()) - 1];
}

Matrix build_global_track(const std::vector<std::int64_t>& timestamps, const Matrix& extras) {
  const std::size_t t_len = timestamps.size();
  if (extras.size() > 0 && static_cast<std::size_t>(extras.rows()) != t_len)
    throw DataError("global side channels have " + std::to_string(extras.rows()) + " rows for " +
                    std::to_string(t_len) + " time steps");
  for (std::size_t t = 2; t < t_len; ++t)
    if (timestamps[t] - timestamps[t - 1] != timestamps[1] - timestamps[0])
      throw DataError("timestamp gap at " + format_timestamp(timestamps[t - 1]) + "; series must be evenly spaced");
  if (t_len >= 2 && timestamps[1] <= timestamps[0]) throw DataError("timestamps must increase");
  const Eigen::Index extra = extras.size() > 0 ? extras.cols() : 0;
  Matrix g(idx(t_len), 4 + extra);
  for (std::size_t t = 0; t < t_len; ++t) {
    const std::int64_t since_monday = ((timestamps[t] - kMondayEpoch) % kWeek + kWeek) % kWeek;
    const double hour = 2.0 * std::numbers::pi * static_cast<double>(since_monday % 86400) / 86400.0;
    const double week = 2.0 * std::numbers::pi * static_cast<double>(since_monday) / static_cast<double>(kWeek);
    g(idx(t), 0) = std::sin(hour);
    g(idx(t), 1) = std::cos(hour);
    g(idx(t), 2) = std::sin(week);
    g(idx(t), 3) = std::cos(week);
  }
  if (extra > 0) g.rightCols(extra) = extras;
  return g;
}

Matrix read_global_extras(const std::filesystem::path& path, const std::vector<std::int64_t>& timestamps) {
  auto in = open_text(path, "global side file");
  std::string line;
  while (std::getline(in, line) && (io::trim(line).empty() || line[0] == '#')) {
  }
  const auto header = io::split(line);
  if (header.size() < 2) throw DataError(path.string() + ": side file needs a timestamp column and values");
  const auto cols = static_cast<Eigen::Index>(header.size() - 1);
  Matrix out(idx(timestamps.size()), cols);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (io::trim(line).empty()) continue;
    const auto f = io::split(line);
    if (row >= timestamps.size()) throw DataError(path.string() + ": more rows than time steps");
    if (f.size() != header.size()) throw DataError(path.string() + ": wrong field count in row " + std::to_string(row + 1));
    std::optional<std::int64_t> ts = parse_timestamp(f[0]);
    if (!ts) {
      if (auto v = parse_number(f[0])) ts = static_cast<std::int64_t>(*v);
    }
    if (!ts || *ts != timestamps[row])
      throw DataError(path.string() + ": row " + std::to_string(row + 1) + " timestamp does not match the series");
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto v = parse_number(f[static_cast<std::size_t>(c) + 1]);
      if (!v) throw DataError(path.string() + ": non-numeric value in row " + std::to_string(row + 1));
      out(idx(row), c) = *v;
    }
    ++row;
  }
  if (row != timestamps.size()) throw DataError(path.string() + ": fewer rows than time steps");
  return out;
}

}  // namespace nri
