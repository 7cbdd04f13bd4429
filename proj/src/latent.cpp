#include "nri/latent.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "nri/io.hpp"

namespace nri {

GraphSample::GraphSample(std::size_t num_nodes, Matrix soft, double temperature, bool hard)
    : num_nodes_(num_nodes), soft_(std::move(soft)), temperature_(temperature), hard_(hard) {
  if (num_nodes_ >= 1 && static_cast<std::size_t>(soft_.rows()) != num_nodes_ * (num_nodes_ - 1))
    throw std::invalid_argument("graph sample must have N(N-1) rows");
}

GraphSample GraphSample::from_adjacency(const AdjacencyMatrix& adj, std::size_t edge_types) {
  if (!adj.is_binary()) throw std::invalid_argument("fixed adjacency must be binary");
  if (edge_types < 2) throw std::invalid_argument("need at least 2 edge types");
  const std::size_t n = adj.size();
  const EdgeIndex idx = EdgeIndex::fully_connected(n);
  Matrix soft = Matrix::Zero(static_cast<Eigen::Index>(idx.num_edges()), static_cast<Eigen::Index>(edge_types));
  for (std::size_t e = 0; e < idx.num_edges(); ++e)
    soft(static_cast<Eigen::Index>(e), adj(idx.senders[e], idx.receivers[e]) > 0.5 ? 1 : 0) = 1.0;
  return GraphSample(n, std::move(soft), 1.0, true);
}

GraphSample GraphSample::argmax(const EdgeDistribution& q) {
  Matrix soft = Matrix::Zero(q.probs().rows(), q.probs().cols());
  for (Eigen::Index r = 0; r < soft.rows(); ++r) {
    Eigen::Index best = 0;
    q.probs().row(r).maxCoeff(&best);
    soft(r, best) = 1.0;
  }
  return GraphSample(q.num_nodes(), std::move(soft), 1.0, true);
}

GraphSample GraphSample::expected(const EdgeDistribution& q) { return GraphSample(q.num_nodes(), q.probs()); }

GraphSample GraphSample::no_edges(std::size_t n, std::size_t edge_types) {
  return from_adjacency(AdjacencyMatrix::empty(n), edge_types);
}

double GraphSample::at(std::size_t i, std::size_t j, std::size_t k) const {
  if (i == j) return 0.0;
  const std::size_t pair = i * (num_nodes_ - 1) + (j < i ? j : j - 1);
  return soft_(static_cast<Eigen::Index>(pair), static_cast<Eigen::Index>(k));
}

std::string to_string(PriorProvenance p) {
  switch (p) {
    case PriorProvenance::uniform: return "uniform";
    case PriorProvenance::local: return "local";
    case PriorProvenance::dtw: return "dtw";
    case PriorProvenance::custom: return "custom";
  }
  return "custom";
}

PriorProvenance prior_provenance_from_string(const std::string& s) {
  if (s == "uniform") return PriorProvenance::uniform;
  if (s == "local") return PriorProvenance::local;
  if (s == "dtw") return PriorProvenance::dtw;
  if (s == "custom") return PriorProvenance::custom;
  throw ConfigError("unknown prior provenance '" + s + "'");
}

Matrix PriorSpec::per_pair(std::size_t num_nodes) const {
  const auto pairs = static_cast<Eigen::Index>(num_nodes * (num_nodes - 1));
  if (shared()) return probs.replicate(pairs, 1);
  if (probs.rows() != pairs) throw std::invalid_argument("prior was built for a different node count");
  return probs;
}

void PriorSpec::validate() const {
  if (probs.rows() < 1 || probs.cols() < 2) throw std::invalid_argument("prior needs at least 2 edge types");
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    if ((probs.row(r).array() <= 0.0).any()) throw std::invalid_argument("prior probabilities must be positive");
    if (std::abs(probs.row(r).sum() - 1.0) > 1e-9) throw std::invalid_argument("prior rows must sum to 1");
  }
}

Matrix sample_gumbel(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix g(rows, cols);
  for (Eigen::Index k = 0; k < g.size(); ++k) g.data()[k] = rng.gumbel();
  return g;
}

Matrix gumbel_softmax_sample(const Matrix& logits, double tau, const Matrix& noise) {
  if (!(tau > 0)) throw std::invalid_argument("gumbel-softmax temperature must be positive");
  if (noise.rows() != logits.rows() || noise.cols() != logits.cols())
    throw std::invalid_argument("gumbel noise shape mismatch");
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const auto y = ((logits.row(r) + noise.row(r)) / tau).eval();
    const double m = y.maxCoeff();
    out.row(r) = (y.array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Matrix gumbel_softmax_sample(const Matrix& logits, double tau, Rng& rng) {
  return gumbel_softmax_sample(logits, tau, sample_gumbel(logits.rows(), logits.cols(), rng));
}

ad::Var gumbel_softmax(ad::Var logits, double tau, const Matrix& noise, bool hard) {
  if (!(tau > 0)) throw std::invalid_argument("gumbel-softmax temperature must be positive");
  ad::Var soft = ad::softmax_rows(ad::scale(ad::add_constant(logits, noise), 1.0 / tau));
  return hard ? ad::straight_through_argmax(soft) : soft;
}

double kl_categorical(const Matrix& q, const Matrix& p) {
  if (q.rows() != p.rows() || q.cols() != p.cols()) throw std::invalid_argument("kl_categorical: shape mismatch");
  double kl = 0.0;
  for (Eigen::Index k = 0; k < q.size(); ++k) {
    const double qi = q.data()[k];
    const double pi = p.data()[k];
    if (qi <= 0.0) continue;
    if (pi <= 0.0) throw std::domain_error("KL is infinite: prior is zero where q is positive");
    kl += qi * std::log(qi / pi);
  }
  return kl;
}

double kl_categorical(const EdgeDistribution& q, const PriorSpec& prior) {
  if (prior.edge_types() != q.edge_types()) throw std::invalid_argument("prior and q disagree on K");
  return kl_categorical(q.probs(), prior.per_pair(q.num_nodes()));
}

ad::Var kl_categorical(ad::Var logits, const PriorSpec& prior, std::size_t num_nodes) {
  const Matrix p = prior.per_pair(num_nodes);
  if (p.rows() != logits.rows() || p.cols() != logits.cols())
    throw std::invalid_argument("kl_categorical: prior shape mismatch");
  if ((p.array() <= 0.0).any()) throw std::domain_error("KL is infinite: prior has zero entries");
  ad::Var log_q = ad::log_softmax_rows(logits);
  ad::Var q = ad::softmax_rows(logits);
  const Matrix neg_log_p = -p.array().log().matrix();
  return ad::sum(ad::mul(q, ad::add_constant(log_q, neg_log_p)));
}

PriorSpec build_uniform_prior(std::size_t num_nodes, std::size_t edge_types, double p_no_edge) {
  (void)num_nodes;
  if (!(p_no_edge > 0.0 && p_no_edge < 1.0)) throw std::invalid_argument("p_no_edge must lie in (0, 1)");
  if (edge_types < 2) throw std::invalid_argument("need at least 2 edge types");
  PriorSpec spec;
  spec.probs = Matrix::Constant(1, static_cast<Eigen::Index>(edge_types),
                                (1.0 - p_no_edge) / static_cast<double>(edge_types - 1));
  spec.probs(0, 0) = p_no_edge;
  spec.provenance = PriorProvenance::uniform;
  spec.confidence = p_no_edge;
  return spec;
}

PriorSpec build_structured_prior(const AdjacencyMatrix& adj, double edge_conf, std::size_t edge_types,
                                 PriorProvenance provenance) {
  if (!adj.is_binary()) throw std::invalid_argument("structured prior needs a binary adjacency");
  if (!(edge_conf > 0.5 && edge_conf < 1.0)) throw std::invalid_argument("edge confidence must lie in (0.5, 1)");
  if (edge_types < 2) throw std::invalid_argument("need at least 2 edge types");
  const std::size_t n = adj.size();
  const EdgeIndex idx = EdgeIndex::fully_connected(n);
  const double others = static_cast<double>(edge_types - 1);
  PriorSpec spec;
  spec.probs.resize(static_cast<Eigen::Index>(idx.num_edges()), static_cast<Eigen::Index>(edge_types));
  for (std::size_t e = 0; e < idx.num_edges(); ++e) {
    const bool edge = adj(idx.senders[e], idx.receivers[e]) > 0.5;
    const double no_edge = edge ? 1.0 - edge_conf : edge_conf;
    auto row = spec.probs.row(static_cast<Eigen::Index>(e));
    row.setConstant((1.0 - no_edge) / others);
    row(0) = no_edge;
  }
  spec.provenance = provenance;
  spec.confidence = edge_conf;
  return spec;
}

void save_prior(const PriorSpec& prior, const std::filesystem::path& path, std::size_t num_nodes) {
  nlohmann::json j;
  j["format"] = "nri-prior";
  j["provenance"] = to_string(prior.provenance);
  j["confidence"] = prior.confidence;
  j["edge_types"] = prior.edge_types();
  j["num_nodes"] = num_nodes;
  if (!prior.adjacency_ref.empty()) j["adjacency"] = prior.adjacency_ref;
  if (prior.shared()) {
    std::vector<double> row(prior.probs.data(), prior.probs.data() + prior.probs.size());
    j["shared_probs"] = row;
  } else if (prior.adjacency_ref.empty()) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index r = 0; r < prior.probs.rows(); ++r)
      rows.emplace_back(prior.probs.row(r).data(), prior.probs.row(r).data() + prior.probs.cols());
    j["per_pair_probs"] = rows;
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

PriorSpec load_prior(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open prior file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt prior file " + path.string() + ": " + e.what());
  }
  const auto provenance = prior_provenance_from_string(j.at("provenance").get<std::string>());
  const auto k = j.at("edge_types").get<std::size_t>();
  const double conf = j.at("confidence").get<double>();
  PriorSpec spec;
  if (j.contains("shared_probs")) {
    const auto row = j["shared_probs"].get<std::vector<double>>();
    spec.probs = Eigen::Map<const Matrix>(row.data(), 1, static_cast<Eigen::Index>(row.size()));
  } else if (j.contains("adjacency")) {
    const auto ref = j["adjacency"].get<std::string>();
    const auto n = j.at("num_nodes").get<std::size_t>();
    // Edge lists written by this tool key nodes by id; read them through the
    // id order they declare, falling back to positional ids.
    std::ifstream adj_in(path.parent_path() / ref);
    if (!adj_in) throw DataError("prior references missing adjacency " + (path.parent_path() / ref).string());
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(adj_in, line)) {
      if (line.rfind("# node_ids=", 0) == 0) ids = io::split(line.substr(11), ';');
    }
    if (ids.empty())
      for (std::size_t i = 0; i < n; ++i) ids.push_back(std::to_string(i));
    const AdjacencyMatrix adj = io::read_adjacency(path.parent_path() / ref, ids);
    spec = build_structured_prior(adj, conf, k, provenance);
    spec.adjacency_ref = ref;
  } else if (j.contains("per_pair_probs")) {
    const auto rows = j["per_pair_probs"].get<std::vector<std::vector<double>>>();
    spec.probs.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(k));
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < k; ++c) spec.probs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r].at(c);
  } else {
    throw DataError("prior file " + path.string() + " has no probabilities");
  }
  spec.provenance = provenance;
  spec.confidence = conf;
  spec.validate();
  return spec;
}

}  // namespace nri
