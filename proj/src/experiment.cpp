#include "nri/experiment.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "nri/checkpoint.hpp"
#include "nri/io.hpp"
#include "nri/random.hpp"

namespace nri {

using nlohmann::json;

namespace {

std::string to_string(NodeEmbedder e) { return e == NodeEmbedder::flatten ? "flatten" : "recurrent"; }
NodeEmbedder node_embedder_from_string(const std::string& s) {
  if (s == "flatten") return NodeEmbedder::flatten;
  if (s == "recurrent") return NodeEmbedder::recurrent;
  throw ConfigError("unknown node_embedder '" + s + "'");
}
std::string to_string(GlobalMode g) { return g == GlobalMode::full ? "full" : "historical"; }
GlobalMode global_mode_from_string(const std::string& s) {
  if (s == "full") return GlobalMode::full;
  if (s == "historical") return GlobalMode::historical;
  throw ConfigError("unknown global_mode '" + s + "'");
}

void merge_checked(json& base, const json& user, const std::string& where) {
  if (!user.is_object()) throw ConfigError("config block '" + where + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (base[key].is_object() && value.is_object()) {
      merge_checked(base[key], value, path);
    } else {
      base[key] = value;
    }
  }
}

void apply_override(json& j, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + spec + "' is not of the form key=value");
  const std::string key = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &j;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!node->is_object() || !node->contains(parts[i])) throw ConfigError("unknown config key '" + key + "'");
    node = &(*node)[parts[i]];
  }
  if (node->is_object()) throw ConfigError("override '" + key + "' names a block, not a value");
  *node = value;
}

template <typename T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + where + "." + key + "': " + e.what());
  }
}

std::filesystem::path resolve_input(const std::string& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("dataset path '") + what + "' is not set");
  const std::filesystem::path path(p);
  if (!std::filesystem::exists(path)) throw DataError(std::string(what) + " input not found: " + path.string());
  return path;
}

std::map<std::string, std::string> stamp(const ExperimentConfig& c) {
  return {{"config_hash", c.hash()}, {"seed", std::to_string(c.seed)}, {"dataset", c.dataset_id()}};
}

}  // namespace

json ExperimentConfig::to_json() const {
  const DatasetConfig& d = dataset;
  const SyntheticSpec& s = d.synthetic;
  json j;
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  j["dataset"] = {
      {"kind", d.kind},
      {"id", d.id},
      {"paths", {{"trips", d.trips}, {"zones", d.zones}, {"speeds", d.speeds}, {"distances", d.distances}, {"globals", d.globals}}},
      {"columns",
       {{"pickup_zone", d.columns.pickup_zone},
        {"dropoff_zone", d.columns.dropoff_zone},
        {"pickup_time", d.columns.pickup_time},
        {"dropoff_time", d.columns.dropoff_time},
        {"distance", d.columns.distance},
        {"cost", d.columns.cost}}},
      {"year", d.year},
      {"P", d.burn_in},
      {"Q", d.horizon},
      {"stride", d.stride},
      {"split", {{"train", d.split.train}, {"val", d.split.val}, {"test", d.split.test}}},
      {"dtw", {{"daily_profile", d.dtw_daily_profile}, {"steps_per_day", d.steps_per_day}, {"percentile", d.dtw_percentile}}},
      {"distance", {{"target_degree", d.distance_degree}, {"threshold", d.distance_threshold ? json(*d.distance_threshold) : json()}}},
      {"synthetic",
       {{"nodes", s.nodes},
        {"edge_density", s.edge_density},
        {"alpha", s.alpha},
        {"beta", s.beta},
        {"omega", s.omega},
        {"eta", s.eta},
        {"initial_spread", s.initial_spread},
        {"steps", s.steps},
        {"seed", s.seed},
        {"start_time", s.start_time},
        {"step_seconds", s.step_seconds}}}};
  const ModelConfig& m = model;
  j["model"] = {{"mode", nri::to_string(m.mode)},
                {"edge_types", m.edge_types},
                {"encoder_hidden", m.encoder_hidden},
                {"decoder_hidden", m.decoder_hidden},
                {"tau", m.tau},
                {"sigma", m.sigma},
                {"layer_norm", m.layer_norm},
                {"node_embedder", to_string(m.node_embedder)},
                {"prior", {{"kind", m.prior}, {"confidence", m.prior_confidence}, {"no_edge", m.no_edge}, {"path", m.prior_path}}},
                {"adjacency", m.adjacency}};
  const TrainConfig& t = train;
  j["train"] = {{"epochs", t.epochs},
                {"pretrain_epochs", t.pretrain_epochs},
                {"step_size", t.step_size},
                {"step_decay", t.step_decay},
                {"batch_size", t.batch_size},
                {"clip", t.clip},
                {"hard_sample", t.hard_sample},
                {"patience", t.patience},
                {"include_burn_in", t.include_burn_in},
                {"global_mode", to_string(t.global_mode)},
                {"eval_graph", nri::to_string(t.eval_graph)},
                {"mape_epsilon", t.mape_epsilon},
                {"horizons", horizons}};
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  c.seed = get<std::uint64_t>(j, "seed", "");
  c.output_dir = get<std::string>(j, "output_dir", "");
  const json& d = j.at("dataset");
  DatasetConfig& ds = c.dataset;
  ds.kind = get<std::string>(d, "kind", "dataset");
  ds.id = get<std::string>(d, "id", "dataset");
  const json& p = d.at("paths");
  ds.trips = get<std::string>(p, "trips", "dataset.paths");
  ds.zones = get<std::string>(p, "zones", "dataset.paths");
  ds.speeds = get<std::string>(p, "speeds", "dataset.paths");
  ds.distances = get<std::string>(p, "distances", "dataset.paths");
  ds.globals = get<std::string>(p, "globals", "dataset.paths");
  const json& cols = d.at("columns");
  ds.columns.pickup_zone = get<std::string>(cols, "pickup_zone", "dataset.columns");
  ds.columns.dropoff_zone = get<std::string>(cols, "dropoff_zone", "dataset.columns");
  ds.columns.pickup_time = get<std::string>(cols, "pickup_time", "dataset.columns");
  ds.columns.dropoff_time = get<std::string>(cols, "dropoff_time", "dataset.columns");
  ds.columns.distance = get<std::string>(cols, "distance", "dataset.columns");
  ds.columns.cost = get<std::string>(cols, "cost", "dataset.columns");
  ds.year = get<int>(d, "year", "dataset");
  ds.burn_in = get<std::size_t>(d, "P", "dataset");
  ds.horizon = get<std::size_t>(d, "Q", "dataset");
  ds.stride = get<std::size_t>(d, "stride", "dataset");
  const json& sp = d.at("split");
  ds.split = {get<double>(sp, "train", "dataset.split"), get<double>(sp, "val", "dataset.split"),
              get<double>(sp, "test", "dataset.split")};
  const json& dtw = d.at("dtw");
  ds.dtw_daily_profile = get<bool>(dtw, "daily_profile", "dataset.dtw");
  ds.steps_per_day = get<std::size_t>(dtw, "steps_per_day", "dataset.dtw");
  ds.dtw_percentile = get<double>(dtw, "percentile", "dataset.dtw");
  const json& dist = d.at("distance");
  ds.distance_degree = get<double>(dist, "target_degree", "dataset.distance");
  if (!dist.at("threshold").is_null()) ds.distance_threshold = get<double>(dist, "threshold", "dataset.distance");
  const json& sy = d.at("synthetic");
  SyntheticSpec& s = ds.synthetic;
  s.nodes = get<std::size_t>(sy, "nodes", "dataset.synthetic");
  s.edge_density = get<double>(sy, "edge_density", "dataset.synthetic");
  s.alpha = get<double>(sy, "alpha", "dataset.synthetic");
  s.beta = get<double>(sy, "beta", "dataset.synthetic");
  s.omega = get<double>(sy, "omega", "dataset.synthetic");
  s.eta = get<double>(sy, "eta", "dataset.synthetic");
  s.initial_spread = get<double>(sy, "initial_spread", "dataset.synthetic");
  s.steps = get<std::size_t>(sy, "steps", "dataset.synthetic");
  s.seed = get<std::uint64_t>(sy, "seed", "dataset.synthetic");
  s.start_time = get<std::int64_t>(sy, "start_time", "dataset.synthetic");
  s.step_seconds = get<std::int64_t>(sy, "step_seconds", "dataset.synthetic");

  const json& m = j.at("model");
  ModelConfig& mc = c.model;
  mc.mode = model_mode_from_string(get<std::string>(m, "mode", "model"));
  mc.edge_types = get<std::size_t>(m, "edge_types", "model");
  mc.encoder_hidden = get<std::size_t>(m, "encoder_hidden", "model");
  mc.decoder_hidden = get<std::size_t>(m, "decoder_hidden", "model");
  mc.tau = get<double>(m, "tau", "model");
  mc.sigma = get<double>(m, "sigma", "model");
  mc.layer_norm = get<bool>(m, "layer_norm", "model");
  mc.node_embedder = node_embedder_from_string(get<std::string>(m, "node_embedder", "model"));
  const json& pr = m.at("prior");
  mc.prior = get<std::string>(pr, "kind", "model.prior");
  mc.prior_confidence = get<double>(pr, "confidence", "model.prior");
  mc.no_edge = get<double>(pr, "no_edge", "model.prior");
  mc.prior_path = get<std::string>(pr, "path", "model.prior");
  mc.adjacency = get<std::string>(m, "adjacency", "model");

  const json& t = j.at("train");
  TrainConfig& tc = c.train;
  tc.epochs = get<std::size_t>(t, "epochs", "train");
  tc.pretrain_epochs = get<std::size_t>(t, "pretrain_epochs", "train");
  tc.step_size = get<double>(t, "step_size", "train");
  tc.step_decay = get<double>(t, "step_decay", "train");
  tc.batch_size = get<std::size_t>(t, "batch_size", "train");
  tc.clip = get<double>(t, "clip", "train");
  tc.hard_sample = get<bool>(t, "hard_sample", "train");
  tc.patience = get<std::size_t>(t, "patience", "train");
  tc.include_burn_in = get<bool>(t, "include_burn_in", "train");
  tc.global_mode = global_mode_from_string(get<std::string>(t, "global_mode", "train"));
  tc.eval_graph = eval_graph_from_string(get<std::string>(t, "eval_graph", "train"));
  tc.mape_epsilon = get<double>(t, "mape_epsilon", "train");
  c.horizons = get<std::vector<std::size_t>>(t, "horizons", "train");
  tc.seed = c.seed;
  tc.tau = mc.tau;
  return c;
}

std::string ExperimentConfig::hash() const {
  json j = to_json();
  j.erase("output_dir");
  return io::fnv1a_hex(j.dump());
}

void ExperimentConfig::validate() const {
  const DatasetConfig& d = dataset;
  if (d.kind != "taxi" && d.kind != "speeds" && d.kind != "synthetic")
    throw ConfigError("dataset.kind must be taxi, speeds or synthetic, not '" + d.kind + "'");
  if (d.burn_in < 1 || d.horizon < 1 || d.stride < 1) throw ConfigError("dataset P, Q and stride must be positive");
  if (model.edge_types < 2) throw ConfigError("model.edge_types must be at least 2");
  if (model.encoder_hidden < 1 || model.decoder_hidden < 1) throw ConfigError("hidden widths must be positive");
  if (!(model.sigma > 0)) throw ConfigError("model.sigma must be positive");
  if (!(model.tau > 0)) throw ConfigError("model.tau must be positive");
  if (!(model.no_edge > 0 && model.no_edge < 1)) throw ConfigError("model.prior.no_edge must lie in (0, 1)");
  if (!(model.prior_confidence > 0 && model.prior_confidence < 1))
    throw ConfigError("model.prior.confidence must lie in (0, 1)");
  static const std::vector<std::string> priors{"uniform", "local", "dtw", "distance", "true", "custom"};
  if (std::find(priors.begin(), priors.end(), model.prior) == priors.end())
    throw ConfigError("unknown prior kind '" + model.prior + "'");
  for (std::size_t h : horizons)
    if (h < 1 || h > d.horizon) throw ConfigError("horizon " + std::to_string(h) + " outside 1..Q");
  train.validate();
}

ExperimentConfig config_from_json(json user, const std::vector<std::string>& overrides) {
  json j = ExperimentConfig{}.to_json();
  merge_checked(j, user, "");
  for (const auto& o : overrides) apply_override(j, o);
  ExperimentConfig c = ExperimentConfig::from_json(j);
  c.overrides = overrides;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json user;
  try {
    user = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(user, overrides);
}

std::filesystem::path output_root(const ExperimentConfig& config) {
  std::filesystem::path dir(config.output_dir);
  if (const char* root = std::getenv("NRI_OUTPUT_ROOT"); root && *root && dir.is_relative())
    return std::filesystem::path(root) / dir;
  return dir;
}

std::filesystem::path RunPaths::adjacency(const std::string& name) const { return root / "data" / ("adjacency_" + name + ".csv"); }
std::filesystem::path RunPaths::metrics(const std::string& split) const { return root / ("metrics_" + tag + "_" + split + ".csv"); }
std::filesystem::path RunPaths::analysis_dir() const { return root / ("analysis_" + tag); }

RunPaths run_paths(const ExperimentConfig& config) {
  RunPaths p;
  p.root = output_root(config);
  p.tag = config.dataset_id() + "_" + config.hash();
  p.dataset = p.root / "data" / (config.dataset_id() + ".nrids");
  p.best_checkpoint = p.root / "checkpoints" / ("best_" + p.tag + ".ckpt");
  p.last_checkpoint = p.root / "checkpoints" / ("last_" + p.tag + ".ckpt");
  p.train_log = p.root / ("train_log_" + p.tag + ".csv");
  p.effective_config = p.root / ("config_" + p.tag + ".json");
  return p;
}

std::size_t train_step_count(std::size_t steps, const DatasetConfig& d) {
  if (steps < d.burn_in + d.horizon)
    throw DataError("insufficient history: " + std::to_string(steps) + " steps for P+Q = " +
                    std::to_string(d.burn_in + d.horizon));
  const std::size_t windows = (steps - d.burn_in - d.horizon) / d.stride + 1;
  const SplitSizes sizes = split_sizes(windows, d.split);
  return (sizes.train - 1) * d.stride + d.burn_in + d.horizon;
}

// ---- preprocess -----------------------------------------------------------------

PreprocessResult run_preprocess(const ExperimentConfig& config, std::ostream& out) {
  const RunPaths paths = run_paths(config);
  const DatasetConfig& d = config.dataset;
  PreprocessResult result;
  json& report = result.report;
  report["kind"] = d.kind;
  SeriesDataset data;
  std::vector<std::pair<std::string, AdjacencyMatrix>> graphs;

  if (d.kind == "synthetic") {
    SyntheticData syn = generate(d.synthetic);
    data = std::move(syn.dataset);
    graphs.emplace_back("true", syn.truth);
    out << "synthetic: " << data.num_nodes() << " nodes, " << data.num_steps() << " steps, " << syn.truth.edge_count()
        << " true edges\n";
  } else if (d.kind == "taxi") {
    const TripTable table = read_trips(resolve_input(d.trips, "trips"), d.columns);
    const ZoneGeometry geometry = read_zone_geometry(resolve_input(d.zones, "zones"));
    CleaningReport clean;
    const auto trips = clean_trips(table.records, d.year, &clean);
    AggregationReport agg;
    data = aggregate_zone_hour(trips, geometry.zones, d.year, &agg);
    graphs.emplace_back("local", build_local_adjacency(geometry));
    report["rows_unparseable"] = table.unparseable;
    report["trips_read"] = clean.input;
    report["removed"] = {{"timestamp_error", clean.timestamp_error},
                         {"short_distance", clean.short_distance},
                         {"short_duration", clean.short_duration},
                         {"nonpositive_cost", clean.nonpositive_cost}};
    report["trips_kept"] = clean.kept;
    report["unknown_pickup_zone"] = agg.unknown_pickup_zone;
    report["unknown_dropoff_zone"] = agg.unknown_dropoff_zone;
    out << "trips read: " << clean.input << " (unparseable rows skipped: " << table.unparseable << ")\n"
        << "removed, timestamp error: " << clean.timestamp_error << "\n"
        << "removed, distance < 0.1 mi: " << clean.short_distance << "\n"
        << "removed, duration < 1 min: " << clean.short_duration << "\n"
        << "removed, cost <= 0: " << clean.nonpositive_cost << "\n"
        << "trips kept: " << clean.kept << "\n"
        << "zones: " << geometry.zones.size() << ", hours: " << data.num_steps() << "\n";
  } else {
    SpeedTable speeds = read_speed_matrix(resolve_input(d.speeds, "speeds"));
    data = std::move(speeds.dataset);
    report["readings_filled"] = speeds.filled;
    out << "sensors: " << data.num_nodes() << ", steps: " << data.num_steps() << ", readings filled: " << speeds.filled
        << "\n";
    if (!d.distances.empty()) {
      const SensorMeta meta = read_distance_table(resolve_input(d.distances, "distances"), data.node_ids);
      const double threshold = d.distance_threshold ? *d.distance_threshold
                                                    : distance_threshold_for_degree(meta, d.distance_degree);
      graphs.emplace_back("distance", build_distance_adjacency(meta, threshold));
      report["distance_threshold"] = threshold;
      out << "distance threshold: " << threshold << "\n";
    }
  }
  if (!d.globals.empty()) {
    const Matrix extras = read_global_extras(resolve_input(d.globals, "globals"), data.timestamps);
    data.globals = build_global_track(data.timestamps, extras);
  }
  data.validate();

  const std::size_t train_steps = train_step_count(data.num_steps(), d);
  Matrix activity = node_activity(data, train_steps);
  if (d.dtw_daily_profile) activity = daily_profile(activity, d.steps_per_day);
  const DtwAdjacencyResult dtw = build_dtw_adjacency(activity, d.dtw_percentile, data.node_ids);
  graphs.emplace_back("dtw", dtw.adjacency);
  report["dtw_threshold"] = dtw.threshold;
  report["train_steps"] = train_steps;

  json meta = {{"config_hash", config.hash()}, {"seed", config.seed}, {"dataset", config.dataset_id()}, {"report", report}};
  io::write_dataset(data, paths.dataset, meta);
  result.dataset = paths.dataset;
  for (const auto& [name, adj] : graphs) {
    AdjacencyMatrix named(adj.entries(), data.node_ids);
    io::write_adjacency(named, paths.adjacency(name), stamp(config));
    result.adjacencies.push_back(paths.adjacency(name));
    out << "adjacency " << name << ": " << named.edge_count() << " edges -> " << paths.adjacency(name).string() << "\n";
  }
  {
    std::ofstream rep(paths.root / "data" / "preprocess_report.json");
    rep << json{{"config_hash", config.hash()}, {"seed", config.seed}, {"report", report}}.dump(2) << "\n";
  }
  out << "dataset -> " << paths.dataset.string() << "\n";
  return result;
}

// ---- model assembly ------------------------------------------------------------

namespace {

AdjacencyMatrix named_adjacency(const ExperimentConfig& config, const SeriesDataset& data, const std::string& which) {
  const std::size_t n = data.num_nodes();
  if (which == "empty") return AdjacencyMatrix(n, data.node_ids);
  if (which == "full") return AdjacencyMatrix(AdjacencyMatrix::full(n).entries(), data.node_ids);
  std::filesystem::path path = which;
  if (which == "true" || which == "local" || which == "dtw" || which == "distance") {
    path = run_paths(config).adjacency(which);
    if (!std::filesystem::exists(path))
      throw DataError("adjacency '" + which + "' not found at " + path.string() + " (run preprocess first)");
  } else if (!std::filesystem::exists(path)) {
    throw DataError("adjacency file not found: " + path.string());
  }
  return io::read_adjacency(path, data.node_ids);
}

struct Prepared {
  SeriesDataset data;
  Normalizer normalizer;
  Splits splits;
  std::vector<NodeWindow> all;  // chronological, normalized
};

Prepared prepare(const ExperimentConfig& config) {
  const RunPaths paths = run_paths(config);
  if (!std::filesystem::exists(paths.dataset))
    throw DataError("dataset container not found: " + paths.dataset.string() + " (run preprocess first)");
  Prepared p;
  p.data = io::read_dataset(paths.dataset);
  const DatasetConfig& d = config.dataset;
  const std::size_t train_steps = train_step_count(p.data.num_steps(), d);
  p.normalizer = Normalizer::fit(p.data.values.slice(0, train_steps));
  p.all = build_windows(p.normalizer.apply(p.data), d.burn_in, d.horizon, d.stride);
  WindowSplit split = split_dataset(p.all, d.split);
  p.splits = {std::move(split.train), std::move(split.val), std::move(split.test)};
  return p;
}

const std::vector<NodeWindow>& pick_split(const Prepared& p, const std::string& split) {
  if (split == "train") return p.splits.train;
  if (split == "val") return p.splits.val;
  if (split == "test") return p.splits.test;
  throw ConfigError("unknown split '" + split + "' (train, val or test)");
}

TrainState state_for(const ExperimentConfig& config, const SeriesDataset& data) {
  TrainState st;
  st.model = build_model(config, data);
  st.best = st.model;
  return st;
}

}  // namespace

Model build_model(const ExperimentConfig& config, const SeriesDataset& data) {
  Model model;
  model.mode = config.model.mode;
  if (model.mode == ModelMode::lag) return model;
  const ModelConfig& m = config.model;
  DecoderConfig dc;
  dc.features = data.num_features();
  dc.globals = data.num_globals();
  dc.hidden = m.decoder_hidden;
  dc.edge_types = m.edge_types;
  dc.layer_norm = m.layer_norm;
  dc.sigma = m.sigma;
  model.decoder = DecoderParams(dc, mix_seed(config.seed, 0xdec));
  if (model.mode == ModelMode::fixed) {
    model.fixed_adjacency = named_adjacency(config, data, m.adjacency);
    if (!model.fixed_adjacency.is_binary()) throw ConfigError("fixed adjacency must be binary");
    return model;
  }
  EncoderConfig ec;
  ec.burn_in = config.dataset.burn_in;
  ec.features = data.num_features();
  ec.globals = data.num_globals();
  ec.hidden = m.encoder_hidden;
  ec.edge_types = m.edge_types;
  ec.layer_norm = m.layer_norm;
  ec.node_embedder = m.node_embedder;
  model.encoder = EncoderParams(ec, mix_seed(config.seed, 0xe4c));
  return model;
}

PriorSpec build_prior(const ExperimentConfig& config, const SeriesDataset& data) {
  const ModelConfig& m = config.model;
  const std::size_t n = data.num_nodes();
  if (m.prior == "uniform") return build_uniform_prior(n, m.edge_types, m.no_edge);
  if (m.prior == "custom") {
    if (m.prior_path.empty()) throw ConfigError("model.prior.path is required for a custom prior");
    PriorSpec p = load_prior(m.prior_path);
    if (p.edge_types() != m.edge_types) throw ConfigError("custom prior has a different number of edge types");
    if (!p.shared() && static_cast<std::size_t>(p.probs.rows()) != n * (n - 1))
      throw ConfigError("custom prior was built for a different node count");
    return p;
  }
  const AdjacencyMatrix adj = named_adjacency(config, data, m.prior);
  const PriorProvenance prov = m.prior == "local" ? PriorProvenance::local
                               : m.prior == "dtw" ? PriorProvenance::dtw
                                                  : PriorProvenance::custom;
  PriorSpec p = build_structured_prior(adj, m.prior_confidence, m.edge_types, prov);
  p.adjacency_ref = run_paths(config).adjacency(m.prior).string();
  return p;
}

// ---- train -----------------------------------------------------------------------

TrainResult run_train(const ExperimentConfig& config, bool resume, std::ostream& out) {
  const RunPaths paths = run_paths(config);
  Prepared prep = prepare(config);
  std::filesystem::create_directories(paths.root);
  {
    json eff = config.to_json();
    eff["config_hash"] = config.hash();
    eff["overrides"] = config.overrides;
    std::ofstream f(paths.effective_config);
    f << eff.dump(2) << "\n";
    out << "effective config (" << config.hash() << "):\n" << eff.dump(2) << "\n";
  }
  if (prep.splits.val.empty()) throw DataError("validation split is empty");
  TrainState state = state_for(config, prep.data);
  if (resume && std::filesystem::exists(paths.last_checkpoint)) {
    const Checkpoint ckpt = read_checkpoint(paths.last_checkpoint);
    check_config_hash(ckpt, config.hash(), false);
    restore_checkpoint(ckpt, state);
    out << "resumed from epoch " << state.epoch << "\n";
  }
  std::unique_ptr<PriorSpec> prior;
  if (config.model.mode == ModelMode::nri) prior = std::make_unique<PriorSpec>(build_prior(config, prep.data));

  const std::string hash = config.hash();
  std::size_t last_best = state.best_epoch;
  auto on_epoch = [&](const TrainState& st) {
    TrainState& s = const_cast<TrainState&>(st);
    write_checkpoint(make_checkpoint(s, prep.normalizer, hash, config.seed, true), paths.last_checkpoint);
    if (s.best_epoch != last_best) {
      write_checkpoint(make_checkpoint(s, prep.normalizer, hash, config.seed, false), paths.best_checkpoint);
      last_best = s.best_epoch;
    }
    const auto& r = s.log.rows.back();
    out << "epoch " << r.epoch << "  nll " << r.nll << "  kl " << r.kl << "  val_mae " << r.val_mae << "\n";
    return true;
  };
  train(state, config.train, prep.splits, prep.normalizer, prior.get(), on_epoch);
  write_checkpoint(make_checkpoint(state, prep.normalizer, hash, config.seed, false), paths.best_checkpoint);
  state.log.write(paths.train_log, stamp(config));
  out << "best epoch " << state.best_epoch << ", validation MAE " << state.best_val_mae << "\n"
      << "checkpoint -> " << paths.best_checkpoint.string() << "\n";
  return {state.epoch, state.best_epoch, state.best_val_mae, paths.best_checkpoint};
}

// ---- evaluate ---------------------------------------------------------------------

namespace {

Model load_best_model(const ExperimentConfig& config, const SeriesDataset& data, const std::optional<std::filesystem::path>& ckpt_path,
                      bool force, Normalizer* normalizer) {
  TrainState state = state_for(config, data);
  if (config.model.mode == ModelMode::lag) return state.model;
  const std::filesystem::path path = ckpt_path ? *ckpt_path : run_paths(config).best_checkpoint;
  if (!std::filesystem::exists(path)) throw DataError("checkpoint not found: " + path.string() + " (run train first)");
  const Checkpoint ckpt = read_checkpoint(path);
  check_config_hash(ckpt, config.hash(), force);
  const Normalizer stored = restore_checkpoint(ckpt, state);
  if (normalizer) *normalizer = stored;
  return state.best;
}

std::string opt_str(const std::optional<double>& v) { return v ? io::format_double(*v) : "nan"; }

}  // namespace

std::vector<HorizonMetrics> run_evaluate(const ExperimentConfig& config, const EvaluateOptions& options, std::ostream& out) {
  Prepared prep = prepare(config);
  Normalizer normalizer = prep.normalizer;
  const Model model = load_best_model(config, prep.data, options.checkpoint, options.force, &normalizer);
  std::vector<std::size_t> horizons = options.horizons.empty() ? config.horizons : options.horizons;
  if (horizons.empty())
    for (std::size_t h = 1; h <= config.dataset.horizon; ++h) horizons.push_back(h);
  for (std::size_t h : horizons)
    if (h < 1 || h > config.dataset.horizon)
      throw ConfigError("horizon " + std::to_string(h) + " is beyond Q = " + std::to_string(config.dataset.horizon));
  const auto& windows = pick_split(prep, options.split);
  const auto table = evaluate(model, windows, horizons, normalizer, config.train);
  std::vector<std::vector<std::string>> rows;
  out << "horizon  mae  rmse  mape%  pcc  (" << options.split << ", " << windows.size() << " windows, "
      << to_string(model.mode) << ")\n";
  for (const auto& hm : table) {
    const Metrics& m = hm.metrics;
    rows.push_back({std::to_string(hm.horizon), io::format_double(m.mae), io::format_double(m.rmse), opt_str(m.mape_percent),
                    opt_str(m.pcc), std::to_string(m.count)});
    out << hm.horizon << "  " << m.mae << "  " << m.rmse << "  " << opt_str(m.mape_percent) << "  " << opt_str(m.pcc) << "\n";
  }
  auto comments = stamp(config);
  comments["split"] = options.split;
  comments["mode"] = to_string(model.mode);
  const auto path = run_paths(config).metrics(options.split);
  io::write_table(path, {"horizon", "mae", "rmse", "mape_percent", "pcc", "count"}, rows, comments);
  out << "metrics -> " << path.string() << "\n";
  return table;
}

// ---- analyze -------------------------------------------------------------------------

namespace {

void write_series_svg(const std::filesystem::path& path, const std::vector<double>& ys, const std::string& title,
                      const std::map<std::string, std::string>& comments) {
  const double w = 800, h = 300, pad = 40;
  double lo = 0.0, hi = 1.0;
  if (!ys.empty()) {
    lo = *std::min_element(ys.begin(), ys.end());
    hi = *std::max_element(ys.begin(), ys.end());
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  for (const auto& [k, v] : comments) f << "<!-- " << k << "=" << v << " -->\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << pad << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n"
    << "<line x1=\"" << pad << "\" y1=\"" << h - pad << "\" x2=\"" << w - pad << "\" y2=\"" << h - pad
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << h - pad << "\" stroke=\"black\"/>\n"
    << "<text x=\"4\" y=\"" << pad + 4 << "\" font-size=\"10\">" << io::format_double(hi).substr(0, 6) << "</text>\n"
    << "<text x=\"4\" y=\"" << h - pad << "\" font-size=\"10\">" << io::format_double(lo).substr(0, 6) << "</text>\n"
    << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
  const double n = ys.size() > 1 ? static_cast<double>(ys.size() - 1) : 1.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const double x = pad + (w - 2 * pad) * static_cast<double>(i) / n;
    const double y = h - pad - (h - 2 * pad) * (ys[i] - lo) / (hi - lo);
    f << x << "," << y << " ";
  }
  f << "\"/>\n</svg>\n";
}

}  // namespace

std::vector<std::filesystem::path> run_analyze(const ExperimentConfig& config, const AnalyzeOptions& options, std::ostream& out) {
  if (config.model.mode != ModelMode::nri)
    throw ConfigError("analyze needs an nri checkpoint; a " + to_string(config.model.mode) +
                      " model has no latent graph to analyze");
  if (!(options.theta >= 0.0 && options.theta <= 1.0)) throw ConfigError("theta must lie in [0, 1]");
  Prepared prep = prepare(config);
  const Model model = load_best_model(config, prep.data, options.checkpoint, options.force, nullptr);
  const std::size_t n = prep.data.num_nodes();
  std::optional<std::size_t> focal;
  if (options.focal) {
    const auto it = std::find(prep.data.node_ids.begin(), prep.data.node_ids.end(), *options.focal);
    if (it == prep.data.node_ids.end()) throw ConfigError("focal node '" + *options.focal + "' is not in the dataset");
    focal = static_cast<std::size_t>(it - prep.data.node_ids.begin());
  }
  if (options.clusters < 1 || options.clusters > n)
    throw ConfigError("clusters must lie in 1.." + std::to_string(n));

  EdgeProbSeries series;
  for (const auto& w : prep.all) {
    const EdgeDistribution q = model.edge_distribution(w, config.train.global_mode);
    series.push(q.dense_probs(1), prep.data.timestamps[w.origin_index + config.dataset.burn_in]);
  }
  const auto dir = run_paths(config).analysis_dir();
  std::filesystem::create_directories(dir);
  const auto comments = stamp(config);
  const auto& ids = prep.data.node_ids;
  std::vector<std::filesystem::path> written;

  std::vector<std::vector<std::string>> rows;
  for (std::size_t w = 0; w < series.num_windows(); ++w)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j)
          rows.push_back({std::to_string(w), std::to_string(series.window_timestamps[w]), ids[i], ids[j],
                          io::format_double(series.probs(w, i, j))});
  io::write_table(dir / "edge_probs.csv", {"window", "timestamp", "sender", "receiver", "prob"}, rows, comments);
  written.push_back(dir / "edge_probs.csv");

  const auto mean = mean_edge_probability(series);
  rows.clear();
  for (std::size_t w = 0; w < mean.size(); ++w)
    rows.push_back({std::to_string(w), std::to_string(series.window_timestamps[w]), io::format_double(mean[w])});
  io::write_table(dir / "mean_edge_probability.csv", {"window", "timestamp", "mean_prob"}, rows, comments);
  written.push_back(dir / "mean_edge_probability.csv");
  write_series_svg(dir / "mean_edge_probability.svg", mean, "mean edge probability per window", comments);
  written.push_back(dir / "mean_edge_probability.svg");

  rows.clear();
  const auto profiles = node_in_out_profiles(series);
  for (std::size_t j = 0; j < n; ++j)
    rows.push_back({ids[j], io::format_double(profiles[j].ingoing), io::format_double(profiles[j].outgoing)});
  io::write_table(dir / "node_profiles.csv", {"node", "ingoing", "outgoing"}, rows, comments);
  written.push_back(dir / "node_profiles.csv");

  rows.clear();
  for (std::size_t w = 0; w < series.num_windows(); ++w) {
    Matrix probs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = series.probs(w, i, j);
    for (const auto& e : threshold_edges(probs, options.theta, focal))
      rows.push_back({std::to_string(w), std::to_string(series.window_timestamps[w]), ids[e.sender], ids[e.receiver],
                      io::format_double(e.prob), e.direction});
  }
  auto thr_comments = comments;
  thr_comments["theta"] = io::format_double(options.theta);
  if (options.focal) thr_comments["focal"] = *options.focal;
  io::write_table(dir / "thresholded_edges.csv", {"window", "timestamp", "sender", "receiver", "prob", "direction"}, rows,
                  thr_comments);
  written.push_back(dir / "thresholded_edges.csv");

  const Clustering learned = cluster_nodes(ClusterFeatures::learned_edges, &series, nullptr, options.clusters, config.seed);
  const Clustering observed =
      cluster_nodes(ClusterFeatures::observed_series, nullptr, &prep.data.values, options.clusters, config.seed);
  rows.clear();
  for (std::size_t j = 0; j < n; ++j)
    rows.push_back({ids[j], std::to_string(learned.labels[j]), std::to_string(observed.labels[j])});
  auto cl_comments = comments;
  cl_comments["k"] = std::to_string(options.clusters);
  cl_comments["inertia_learned_edges"] = io::format_double(learned.inertia);
  cl_comments["inertia_observed_series"] = io::format_double(observed.inertia);
  cl_comments["adjusted_rand_index"] = io::format_double(adjusted_rand_index(learned.labels, observed.labels));
  io::write_table(dir / "clusters.csv", {"node", "learned_edges", "observed_series"}, rows, cl_comments);
  written.push_back(dir / "clusters.csv");

  for (const auto& p : written) out << "wrote " << p.string() << "\n";
  return written;
}

}  // namespace nri
