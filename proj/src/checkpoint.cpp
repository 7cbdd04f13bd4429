#include "nri/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

namespace nri {

namespace {

constexpr const char* kMagic = "NRICKPT1";

void store(Checkpoint& ckpt, const std::string& prefix, ad::ParameterList& params) {
  for (std::size_t i = 0; i < params.size(); ++i) ckpt.tensors.emplace_back(prefix + params.name(i), params[i]);
}

void load(const Checkpoint& ckpt, const std::string& prefix, ad::ParameterList& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& m = ckpt.at(prefix + params.name(i));
    if (m.rows() != params[i].rows() || m.cols() != params[i].cols())
      throw ConfigError("checkpoint tensor " + prefix + params.name(i) + " has the wrong shape");
    params[i] = m;
  }
}

bool has_prefix(const Checkpoint& ckpt, const std::string& prefix) {
  for (const auto& [name, m] : ckpt.tensors)
    if (name.rfind(prefix, 0) == 0) return true;
  return false;
}

}  // namespace

const Matrix* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return &m;
  return nullptr;
}

const Matrix& Checkpoint::at(const std::string& name) const {
  const Matrix* m = find(name);
  if (!m) throw DataError("checkpoint has no tensor '" + name + "'");
  return *m;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little, "checkpoints are written little-endian");
  nlohmann::json meta = ckpt.meta;
  meta["format"] = "nri-checkpoint";
  meta["version"] = 1;
  meta["tensors"] = nlohmann::json::array();
  for (const auto& [name, m] : ckpt.tensors) meta["tensors"].push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  const std::string text = meta.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write to a sibling and rename so an interrupted run never leaves a torn file.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out << kMagic << '\n' << text.size() << '\n' << text;
    for (const auto& [name, m] : ckpt.tensors)
      out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!out) throw DataError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::string magic, len_line;
  std::getline(in, magic);
  if (magic != kMagic) throw DataError(path.string() + " is not a checkpoint");
  std::getline(in, len_line);
  std::size_t len = 0;
  try {
    len = std::stoull(len_line);
  } catch (const std::exception&) {
    throw DataError("corrupt checkpoint header in " + path.string());
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated checkpoint header in " + path.string());
  Checkpoint ckpt;
  try {
    ckpt.meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  for (const auto& t : ckpt.meta.at("tensors")) {
    Matrix m(t.at("rows").get<Eigen::Index>(), t.at("cols").get<Eigen::Index>());
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw DataError("truncated checkpoint payload in " + path.string());
    ckpt.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
  }
  ckpt.meta.erase("tensors");
  return ckpt;
}

Checkpoint make_checkpoint(TrainState& state, const Normalizer& normalizer, const std::string& config_hash,
                           std::uint64_t seed, bool with_optimizer) {
  Checkpoint ckpt;
  auto& m = ckpt.meta;
  m["config_hash"] = config_hash;
  m["seed"] = seed;
  m["mode"] = to_string(state.model.mode);
  m["epoch"] = state.epoch;
  m["pretrained"] = state.pretrained;
  m["best_epoch"] = state.best_epoch;
  m["best_val_mae"] = std::isfinite(state.best_val_mae) ? nlohmann::json(state.best_val_mae) : nlohmann::json();
  m["epochs_since_best"] = state.epochs_since_best;
  m["normalizer"] = {{"kind", normalizer.kind() == Normalizer::Kind::standardize ? "standardize" : "none"}};
  ckpt.tensors.emplace_back("normalizer/mean", Matrix(normalizer.mean().transpose()));
  ckpt.tensors.emplace_back("normalizer/scale", Matrix(normalizer.scale().transpose()));
  if (state.model.mode == ModelMode::fixed) ckpt.tensors.emplace_back("fixed_adjacency", state.model.fixed_adjacency.entries());

  ad::ParameterList params = state.model.parameters();
  store(ckpt, "model/", params);
  ad::ParameterList best = state.best.parameters();
  store(ckpt, "best/", best);
  if (with_optimizer) {
    m["adam_step"] = state.optimizer.step;
    if (state.optimizer.m.size() == params.size())
      for (std::size_t i = 0; i < params.size(); ++i) {
        ckpt.tensors.emplace_back("adam_m/" + params.name(i), state.optimizer.m[i]);
        ckpt.tensors.emplace_back("adam_v/" + params.name(i), state.optimizer.v[i]);
      }
    nlohmann::json log = nlohmann::json::array();
    for (const auto& r : state.log.rows)
      log.push_back({r.epoch, r.phase, r.nll, r.kl, r.total, std::isfinite(r.val_mae) ? nlohmann::json(r.val_mae) : nlohmann::json(),
                     std::isfinite(r.val_rmse) ? nlohmann::json(r.val_rmse) : nlohmann::json(), r.seconds});
    m["log"] = log;
  }
  return ckpt;
}

Normalizer restore_checkpoint(const Checkpoint& ckpt, TrainState& state) {
  const auto& m = ckpt.meta;
  const std::string mode = m.value("mode", "nri");
  if (model_mode_from_string(mode) != state.model.mode)
    throw ConfigError("checkpoint holds a '" + mode + "' model but the config asks for '" + to_string(state.model.mode) + "'");
  state.epoch = m.value("epoch", std::size_t{0});
  state.pretrained = m.value("pretrained", false);
  state.best_epoch = m.value("best_epoch", std::size_t{0});
  state.epochs_since_best = m.value("epochs_since_best", std::size_t{0});
  state.best_val_mae = m.contains("best_val_mae") && m["best_val_mae"].is_number() ? m["best_val_mae"].get<double>()
                                                                                    : std::numeric_limits<double>::infinity();
  if (const Matrix* adj = ckpt.find("fixed_adjacency")) {
    state.model.fixed_adjacency = AdjacencyMatrix(*adj, state.model.fixed_adjacency.node_ids());
  }
  ad::ParameterList params = state.model.parameters();
  if (has_prefix(ckpt, "model/")) load(ckpt, "model/", params);
  state.best = state.model;
  ad::ParameterList best = state.best.parameters();
  if (has_prefix(ckpt, "best/")) load(ckpt, "best/", best);
  if (has_prefix(ckpt, "adam_m/")) {
    state.optimizer.m.clear();
    state.optimizer.v.clear();
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.optimizer.m.push_back(ckpt.at("adam_m/" + params.name(i)));
      state.optimizer.v.push_back(ckpt.at("adam_v/" + params.name(i)));
    }
    state.optimizer.step = m.value("adam_step", std::size_t{0});
  }
  state.log.rows.clear();
  if (m.contains("log"))
    for (const auto& r : m["log"]) {
      auto num = [](const nlohmann::json& v) { return v.is_number() ? v.get<double>() : std::nan(""); };
      state.log.rows.push_back({r[0].get<std::size_t>(), r[1].get<std::string>(), num(r[2]), num(r[3]), num(r[4]),
                                num(r[5]), num(r[6]), num(r[7])});
    }
  const bool standardize = m.at("normalizer").value("kind", "none") == "standardize";
  return Normalizer(standardize ? Normalizer::Kind::standardize : Normalizer::Kind::none,
                    ckpt.at("normalizer/mean").row(0).transpose(), ckpt.at("normalizer/scale").row(0).transpose());
}

void check_config_hash(const Checkpoint& ckpt, const std::string& expected, bool force) {
  const std::string stored = ckpt.meta.value("config_hash", "");
  if (stored == expected) return;
  if (force) return;
  throw ConfigError("checkpoint was written for config " + stored + " but the current config hashes to " + expected +
                    " (pass --force to load anyway)");
}

}  // namespace nri
