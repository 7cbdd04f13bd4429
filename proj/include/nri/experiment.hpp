#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nri/analysis.hpp"
#include "nri/pipeline.hpp"
#include "nri/synthetic.hpp"
#include "nri/training.hpp"

namespace nri {

struct DatasetConfig {
  std::string kind = "synthetic";  // taxi | speeds | synthetic
  std::string id;                  // used in artifact names; defaults to kind
  std::string trips, zones, speeds, distances, globals;  // input paths
  TripColumns columns;
  int year = 2019;
  std::size_t burn_in = 12;  // P
  std::size_t horizon = 6;   // Q
  std::size_t stride = 6;
  SplitFractions split;
  bool dtw_daily_profile = true;
  std::size_t steps_per_day = 24;
  double dtw_percentile = 10.0;
  double distance_degree = 8.0;
  std::optional<double> distance_threshold;
  SyntheticSpec synthetic;
};

struct ModelConfig {
  ModelMode mode = ModelMode::nri;
  std::size_t edge_types = 2;
  std::size_t encoder_hidden = 256;
  std::size_t decoder_hidden = 256;
  double tau = 0.5;
  double sigma = 0.31622776601683794;
  bool layer_norm = false;
  NodeEmbedder node_embedder = NodeEmbedder::flatten;
  // Prior for nri mode: uniform | local | dtw | distance | true | custom.
  std::string prior = "uniform";
  double prior_confidence = 0.9;  // structured priors
  double no_edge = 0.9;           // uniform prior
  std::string prior_path;         // custom prior file
  // Graph for fixed mode: true | local | dtw | distance | empty | full | path to an edge list.
  std::string adjacency = "empty";
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train;
  std::vector<std::size_t> horizons;  // empty: 1..Q
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  std::vector<std::string> overrides;  // "key.path=value" as given

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  // FNV-1a of the canonical JSON without output_dir and overrides.
  std::string hash() const;
  std::string dataset_id() const { return dataset.id.empty() ? dataset.kind : dataset.id; }
  void validate() const;
};

// Reads a JSON config (unknown keys are errors) and applies "a.b=value"
// overrides; values parse as JSON when possible, otherwise as strings.
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
ExperimentConfig config_from_json(nlohmann::json j, const std::vector<std::string>& overrides = {});

// output_dir, placed under $NRI_OUTPUT_ROOT when that is set and the
// directory is relative.
std::filesystem::path output_root(const ExperimentConfig& config);

// Artifact locations.
struct RunPaths {
  std::filesystem::path root, dataset, best_checkpoint, last_checkpoint, train_log, effective_config;
  std::filesystem::path adjacency(const std::string& name) const;
  std::filesystem::path metrics(const std::string& split) const;
  std::filesystem::path analysis_dir() const;
  std::string tag;  // "<dataset id>_<config hash>"
};
RunPaths run_paths(const ExperimentConfig& config);

// Number of leading time steps covered by the training windows.
std::size_t train_step_count(std::size_t steps, const DatasetConfig& dataset);

// ---- commands ------------------------------------------------------------------

struct PreprocessResult {
  std::filesystem::path dataset;
  std::vector<std::filesystem::path> adjacencies;
  nlohmann::json report;
};
PreprocessResult run_preprocess(const ExperimentConfig& config, std::ostream& out);

struct TrainResult {
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
  double best_val_mae = 0.0;
  std::filesystem::path checkpoint;
};
TrainResult run_train(const ExperimentConfig& config, bool resume, std::ostream& out);

struct EvaluateOptions {
  std::string split = "test";
  std::vector<std::size_t> horizons;  // empty: config horizons
  std::optional<std::filesystem::path> checkpoint;
  bool force = false;
};
std::vector<HorizonMetrics> run_evaluate(const ExperimentConfig& config, const EvaluateOptions& options,
                                         std::ostream& out);

struct AnalyzeOptions {
  double theta = 0.8;
  std::optional<std::string> focal;
  std::size_t clusters = 4;
  std::optional<std::filesystem::path> checkpoint;
  bool force = false;
};
std::vector<std::filesystem::path> run_analyze(const ExperimentConfig& config, const AnalyzeOptions& options,
                                               std::ostream& out);

// Model skeleton (shapes and seeded initial values) for a dataset.
Model build_model(const ExperimentConfig& config, const SeriesDataset& data);
// Prior for nri mode, from the preprocessed adjacency files when structured.
PriorSpec build_prior(const ExperimentConfig& config, const SeriesDataset& data);

}  // namespace nri
