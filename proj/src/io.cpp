#include "nri/io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>

namespace nri::io {

static_assert(std::endian::native == std::endian::little, "containers are written little-endian");

namespace {

constexpr const char* kDatasetMagic = "NRIDS1";

void write_doubles(std::ostream& out, const double* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
}

void read_doubles(std::istream& in, double* data, std::size_t count, const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw DataError("truncated payload in " + path.string());
}

}  // namespace

void write_dataset(const SeriesDataset& data, const std::filesystem::path& path, const nlohmann::json& metadata) {
  nlohmann::json header;
  header["format"] = "nri-series";
  header["version"] = 1;
  header["steps"] = data.num_steps();
  header["nodes"] = data.num_nodes();
  header["features"] = data.num_features();
  header["globals"] = data.num_globals();
  header["node_ids"] = data.node_ids;
  header["timestamps"] = data.timestamps;
  header["metadata"] = metadata;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << kDatasetMagic << '\n' << text.size() << '\n' << text;
  write_doubles(out, data.values.data().data(), data.values.size());
  write_doubles(out, data.globals.data(), static_cast<std::size_t>(data.globals.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

SeriesDataset read_dataset(const std::filesystem::path& path, nlohmann::json* metadata) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset container " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != kDatasetMagic) throw DataError(path.string() + " is not a dataset container");
  std::string len_line;
  std::getline(in, len_line);
  std::size_t len = 0;
  try {
    len = std::stoull(len_line);
  } catch (const std::exception&) {
    throw DataError("corrupt header length in " + path.string());
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated header in " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt header in " + path.string() + ": " + e.what());
  }

  SeriesDataset d;
  const auto steps = header.at("steps").get<std::size_t>();
  const auto nodes = header.at("nodes").get<std::size_t>();
  const auto features = header.at("features").get<std::size_t>();
  const auto globals = header.at("globals").get<std::size_t>();
  d.values = Tensor3(steps, nodes, features);
  d.globals = Matrix(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(globals));
  d.node_ids = header.at("node_ids").get<std::vector<std::string>>();
  d.timestamps = header.at("timestamps").get<std::vector<std::int64_t>>();
  read_doubles(in, d.values.data().data(), d.values.size(), path);
  read_doubles(in, d.globals.data(), static_cast<std::size_t>(d.globals.size()), path);
  if (metadata) *metadata = header.value("metadata", nlohmann::json::object());
  d.validate();
  return d;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n\"");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n\"");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, delim)) out.push_back(trim(cur));
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

std::string format_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

void write_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows,
                 const std::map<std::string, std::string>& comments) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& [k, v] : comments) out << "# " << k << '=' << v << '\n';
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
}

void write_adjacency(const AdjacencyMatrix& adj, const std::filesystem::path& path,
                     const std::map<std::string, std::string>& comments) {
  const auto& ids = adj.node_ids();
  auto name = [&](std::size_t i) { return ids.empty() ? std::to_string(i) : ids[i]; };
  std::map<std::string, std::string> all = comments;
  all["nodes"] = std::to_string(adj.size());
  if (!ids.empty()) {
    std::string joined;
    for (std::size_t i = 0; i < ids.size(); ++i) joined += (i ? ";" : "") + ids[i];
    all["node_ids"] = joined;
  }
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < adj.size(); ++i)
    for (std::size_t j = 0; j < adj.size(); ++j)
      if (i != j && adj(i, j) != 0.0) rows.push_back({name(i), name(j), format_double(adj(i, j))});
  write_table(path, {"source", "target", "weight"}, rows, all);
}

AdjacencyMatrix read_adjacency(const std::filesystem::path& path, const std::vector<std::string>& node_ids) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open adjacency file " + path.string());
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < node_ids.size(); ++i) pos.emplace(node_ids[i], i);
  AdjacencyMatrix adj(node_ids.size(), node_ids);
  std::string line;
  bool header_seen = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto f = split(line);
    if (f.size() < 2) throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed edge");
    const auto a = pos.find(f[0]);
    const auto b = pos.find(f[1]);
    if (a == pos.end() || b == pos.end())
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": unknown node id");
    const double w = f.size() > 2 && !f[2].empty() ? std::stod(f[2]) : 1.0;
    adj.set(a->second, b->second, w);
  }
  return adj;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

}  // namespace nri::io
