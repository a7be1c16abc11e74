#pragma once

// Network topologies, Laplacians and their spectra, and random link
// failure models (fixed / erasure / gossip) with analytic mean Laplacians.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qcons {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Edge {
  int u = 0;  // u < v after normalization
  int v = 0;
};

inline bool operator==(const Edge& a, const Edge& b) {
  return a.u == b.u && a.v == b.v;
}

/// An undirected simple graph: node count plus the realizable edge set.
class Topology {
 public:
  Topology(int n_nodes, std::vector<Edge> edges) : n_(n_nodes) {
    if (n_nodes <= 0) throw std::invalid_argument("Topology: n_nodes must be positive");
    edges_.reserve(edges.size());
    for (Edge e : edges) {
      if (e.u == e.v) throw std::invalid_argument("Topology: self-loop");
      if (e.u > e.v) std::swap(e.u, e.v);
      if (e.u < 0 || e.v >= n_nodes) throw std::invalid_argument("Topology: node index out of range");
      edges_.push_back(e);
    }
    std::sort(edges_.begin(), edges_.end(),
              [](const Edge& a, const Edge& b) { return a.u != b.u ? a.u < b.u : a.v < b.v; });
    if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end())
      throw std::invalid_argument("Topology: duplicate edge");
  }

  int n_nodes() const { return n_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t n_edges() const { return edges_.size(); }

  static Topology path(int n) {
    std::vector<Edge> e;
    for (int i = 0; i + 1 < n; ++i) e.push_back({i, i + 1});
    return Topology(n, std::move(e));
  }

  static Topology ring(int n) {
    if (n < 3) throw std::invalid_argument("ring: need n >= 3");
    std::vector<Edge> e;
    for (int i = 0; i < n; ++i) e.push_back({i, (i + 1) % n});
    return Topology(n, std::move(e));
  }

  static Topology complete(int n) {
    std::vector<Edge> e;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) e.push_back({i, j});
    return Topology(n, std::move(e));
  }

  /// k-regular circulant: node i connects to i +/- 1 .. i +/- k/2 (mod n).
  static Topology circulant(int n, int k) {
    if (k <= 0 || k % 2 != 0 || k >= n)
      throw std::invalid_argument("circulant: degree k must be even and in (0, n)");
    std::vector<Edge> e;
    for (int i = 0; i < n; ++i)
      for (int d = 1; d <= k / 2; ++d) {
        int j = (i + d) % n;
        if (i < j)
          e.push_back({i, j});
        else
          e.push_back({j, i});
      }
    // wrap-around pairs appear once from each side; dedupe
    std::sort(e.begin(), e.end(),
              [](const Edge& a, const Edge& b) { return a.u != b.u ? a.u < b.u : a.v < b.v; });
    e.erase(std::unique(e.begin(), e.end()), e.end());
    return Topology(n, std::move(e));
  }

  // Edge-list format: one edge per line, two whitespace-separated 0-based
  // indices; '#' starts a comment; optional header line "N <count>".
  static Topology parse_edge_list(std::istream& in) {
    std::vector<Edge> edges;
    int n_declared = -1;
    int max_index = -1;
    std::string line;
    bool first_content = true;
    while (std::getline(in, line)) {
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::istringstream ls(line);
      std::string tok;
      if (!(ls >> tok)) continue;
      if (first_content && (tok == "N" || tok == "n")) {
        if (!(ls >> n_declared) || n_declared <= 0)
          throw std::invalid_argument("edge list: bad N header");
        first_content = false;
        continue;
      }
      first_content = false;
      int u = 0, v = 0;
      try {
        u = std::stoi(tok);
      } catch (const std::exception&) {
        throw std::invalid_argument("edge list: bad node index '" + tok + "'");
      }
      if (!(ls >> v)) throw std::invalid_argument("edge list: missing second index");
      max_index = std::max({max_index, u, v});
      edges.push_back({u, v});
    }
    int n = n_declared > 0 ? n_declared : max_index + 1;
    if (n <= 0) throw std::invalid_argument("edge list: empty file and no N header");
    return Topology(n, std::move(edges));
  }

  static Topology load_edge_list(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open edge list: " + path);
    return parse_edge_list(f);
  }

 private:
  int n_;
  std::vector<Edge> edges_;
};

/// L = D - A for a 0/1-weighted edge set.
inline Matrix laplacian(const Topology& t) {
  Matrix L = Matrix::Zero(t.n_nodes(), t.n_nodes());
  for (const Edge& e : t.edges()) {
    L(e.u, e.u) += 1.0;
    L(e.v, e.v) += 1.0;
    L(e.u, e.v) -= 1.0;
    L(e.v, e.u) -= 1.0;
  }
  return L;
}

struct SpectralSummary {
  double lambda2 = 0.0;  // algebraic connectivity
  double lambdaN = 0.0;  // largest Laplacian eigenvalue
  bool connected_on_average = false;
};

inline SpectralSummary spectral(const Matrix& L) {
  if (L.rows() != L.cols()) throw std::invalid_argument("spectral: matrix not square");
  if ((L - L.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw std::invalid_argument("spectral: matrix not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(L, Eigen::EigenvaluesOnly);
  const Vector& ev = es.eigenvalues();  // ascending
  if (ev(0) < -1e-9) throw std::invalid_argument("spectral: matrix not PSD");
  SpectralSummary s;
  s.lambda2 = L.rows() > 1 ? ev(1) : 0.0;
  s.lambdaN = ev(L.rows() - 1);
  s.connected_on_average = s.lambda2 > 1e-9;
  return s;
}

enum class FailureKind { Fixed, Erasure, Gossip };

/// Per-iteration distribution over Laplacians, i.i.d. across iterations.
class LinkFailureModel {
 public:
  static LinkFailureModel fixed(Topology base) {
    return LinkFailureModel(FailureKind::Fixed, std::move(base), 0.0);
  }
  static LinkFailureModel erasure(Topology base, double p_fail) {
    if (p_fail < 0.0 || p_fail > 1.0)
      throw std::invalid_argument("erasure: p_fail must be in [0,1]");
    return LinkFailureModel(FailureKind::Erasure, std::move(base), p_fail);
  }
  static LinkFailureModel gossip(Topology base) {
    if (base.n_edges() == 0) throw std::invalid_argument("gossip: empty edge set");
    return LinkFailureModel(FailureKind::Gossip, std::move(base), 0.0);
  }

  FailureKind kind() const { return kind_; }
  double p_fail() const { return p_fail_; }
  const Topology& base() const { return base_; }

  Matrix mean_laplacian() const {
    switch (kind_) {
      case FailureKind::Fixed:
        return laplacian(base_);
      case FailureKind::Erasure:
        return (1.0 - p_fail_) * laplacian(base_);
      case FailureKind::Gossip:
        return (1.0 / static_cast<double>(base_.n_edges())) * laplacian(base_);
    }
    throw std::logic_error("unreachable");
  }

  /// E[|M(i)|^2], the second moment of the active-edge count.
  double mean_active_links_sq() const {
    const double m = static_cast<double>(base_.n_edges());
    switch (kind_) {
      case FailureKind::Fixed:
        return m * m;
      case FailureKind::Erasure: {
        const double q = 1.0 - p_fail_;
        return m * (m - 1.0) * q * q + m * q;
      }
      case FailureKind::Gossip:
        return 1.0;
    }
    throw std::logic_error("unreachable");
  }

  /// Draw one realized edge set M(i) into `out` (cleared first).
  void sample_edges(std::mt19937_64& rng, std::vector<Edge>& out) const {
    out.clear();
    switch (kind_) {
      case FailureKind::Fixed:
        out = base_.edges();
        break;
      case FailureKind::Erasure: {
        for (const Edge& e : base_.edges()) {
          // uniform in [0,1)
          const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
          if (u >= p_fail_) out.push_back(e);
        }
        break;
      }
      case FailureKind::Gossip: {
        std::uniform_int_distribution<std::size_t> pick(0, base_.n_edges() - 1);
        out.push_back(base_.edges()[pick(rng)]);
        break;
      }
    }
  }

  Matrix sample(std::mt19937_64& rng) const {
    std::vector<Edge> es;
    sample_edges(rng, es);
    Matrix L = Matrix::Zero(base_.n_nodes(), base_.n_nodes());
    for (const Edge& e : es) {
      L(e.u, e.u) += 1.0;
      L(e.v, e.v) += 1.0;
      L(e.u, e.v) -= 1.0;
      L(e.v, e.u) -= 1.0;
    }
    return L;
  }

 private:
  LinkFailureModel(FailureKind k, Topology base, double p_fail)
      : kind_(k), base_(std::move(base)), p_fail_(p_fail) {}

  FailureKind kind_;
  Topology base_;
  double p_fail_;
};

}  // namespace qcons
