#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nri/core.hpp"

namespace nri::io {

// Binary container for a SeriesDataset:
//   line 1: "NRIDS1"
//   line 2: byte length of the JSON header
//   JSON header (shapes, node ids, timestamps, free-form metadata)
//   float64 little-endian values [T x N x c] then globals [T x c_u]
void write_dataset(const SeriesDataset& data, const std::filesystem::path& path,
                   const nlohmann::json& metadata = nlohmann::json::object());
SeriesDataset read_dataset(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

// Delimited edge list "source,target,weight" keyed by node id, preceded by
// "# key=value" comment lines. Only nonzero entries are written.
void write_adjacency(const AdjacencyMatrix& adj, const std::filesystem::path& path,
                     const std::map<std::string, std::string>& comments = {});
AdjacencyMatrix read_adjacency(const std::filesystem::path& path, const std::vector<std::string>& node_ids);

// Minimal delimited-text table helpers.
std::vector<std::string> split(const std::string& line, char delim = ',');
std::string trim(const std::string& s);

// "# key=value" header lines followed by the given rows.
void write_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows,
                 const std::map<std::string, std::string>& comments = {});
std::string format_double(double v);

// 64-bit FNV-1a of a byte string, as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace nri::io
