#include "qcons/graph.hpp"

#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace qcons;

TEST_CASE("laplacian of path, empty, and complete graphs") {
  Matrix p3 = laplacian(Topology::path(3));
  Matrix expect(3, 3);
  expect << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  CHECK((p3 - expect).cwiseAbs().maxCoeff() == 0.0);

  Matrix empty = laplacian(Topology(2, {}));
  CHECK(empty.cwiseAbs().maxCoeff() == 0.0);

  Matrix k4 = laplacian(Topology::complete(4));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(k4(i, j) == (i == j ? 3.0 : -1.0));
}

TEST_CASE("topology validation") {
  CHECK_THROWS(Topology(3, {{0, 0}}));
  CHECK_THROWS(Topology(3, {{0, 1}, {1, 0}}));  // duplicate after normalization
  CHECK_THROWS(Topology(3, {{0, 3}}));
  CHECK_THROWS(Topology(0, {}));
}

TEST_CASE("spectral examples vs independent oracles") {
  // P3 characteristic polynomial roots: 0, 1, 3
  SpectralSummary p3 = spectral(laplacian(Topology::path(3)));
  CHECK(p3.lambda2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p3.lambdaN == doctest::Approx(3.0).epsilon(1e-12));

  SpectralSummary k4 = spectral(laplacian(Topology::complete(4)));
  CHECK(k4.lambda2 == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(k4.lambdaN == doctest::Approx(4.0).epsilon(1e-12));

  // ring C10: circulant eigenvalues 2 - 2 cos(2 pi k / 10)
  SpectralSummary c10 = spectral(laplacian(Topology::ring(10)));
  const double expect2 = 2.0 - 2.0 * std::cos(2.0 * std::numbers::pi / 10.0);
  CHECK(c10.lambda2 == doctest::Approx(expect2).epsilon(1e-12));
  CHECK(c10.lambdaN == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("spectral rejects asymmetric input") {
  Matrix m(2, 2);
  m << 1, 0.5, -0.5, 1;
  CHECK_THROWS(spectral(m));
}

TEST_CASE("connected vs disconnected") {
  CHECK(spectral(laplacian(Topology::ring(6))).connected_on_average);
  // two disjoint edges on 4 nodes
  CHECK_FALSE(spectral(laplacian(Topology(4, {{0, 1}, {2, 3}}))).connected_on_average);
}

TEST_CASE("mean laplacians") {
  auto p3 = Topology::path(3);
  Matrix half = LinkFailureModel::erasure(p3, 0.5).mean_laplacian();
  CHECK((half - 0.5 * laplacian(p3)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(spectral(half).lambda2 == doctest::Approx(0.5).epsilon(1e-12));

  auto k4 = Topology::complete(4);
  CHECK((LinkFailureModel::fixed(k4).mean_laplacian() - laplacian(k4)).cwiseAbs().maxCoeff() ==
        0.0);

  auto k3 = Topology::complete(3);
  SpectralSummary gossip = spectral(LinkFailureModel::gossip(k3).mean_laplacian());
  CHECK(gossip.lambda2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(gossip.lambdaN == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS(LinkFailureModel::gossip(Topology(3, {})));
  CHECK_THROWS(LinkFailureModel::erasure(p3, 1.5));
}

TEST_CASE("sampled laplacians: structure and empirical mean") {
  auto k4 = Topology::complete(4);
  std::mt19937_64 rng(7);

  SUBCASE("fixed always yields the base laplacian") {
    auto model = LinkFailureModel::fixed(k4);
    for (int i = 0; i < 10; ++i)
      CHECK((model.sample(rng) - laplacian(k4)).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("erasure with p_fail 1 is always empty") {
    auto model = LinkFailureModel::erasure(k4, 1.0);
    for (int i = 0; i < 10; ++i) CHECK(model.sample(rng).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("per-edge frequency and entrywise mean, 1e5 samples") {
    auto model = LinkFailureModel::erasure(k4, 0.5);
    const int trials = 100000;
    Matrix sum = Matrix::Zero(4, 4);
    std::vector<Edge> es;
    std::vector<int> edge_count(k4.n_edges(), 0);
    for (int t = 0; t < trials; ++t) {
      model.sample_edges(rng, es);
      for (const Edge& e : es) {
        sum(e.u, e.u) += 1;
        sum(e.v, e.v) += 1;
        sum(e.u, e.v) -= 1;
        sum(e.v, e.u) -= 1;
        for (std::size_t k = 0; k < k4.n_edges(); ++k)
          if (k4.edges()[k] == e) ++edge_count[k];
      }
    }
    for (int c : edge_count) CHECK(std::abs(c / double(trials) - 0.5) < 0.01);
    Matrix mean = sum / double(trials);
    CHECK((mean - model.mean_laplacian()).cwiseAbs().maxCoeff() < 0.02);
  }

  SUBCASE("every sample is a valid 0/1 laplacian") {
    auto model = LinkFailureModel::erasure(Topology::ring(6), 0.3);
    for (int t = 0; t < 200; ++t) {
      Matrix L = model.sample(rng);
      CHECK((L - L.transpose()).cwiseAbs().maxCoeff() == 0.0);
      CHECK(L.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
          if (i != j) CHECK((L(i, j) == 0.0 || L(i, j) == -1.0));
      SpectralSummary sp = spectral(L);  // throws if not PSD
      CHECK(sp.lambdaN <= 2.0 * 6);
    }
  }

  SUBCASE("gossip activates exactly one edge") {
    auto model = LinkFailureModel::gossip(k4);
    std::vector<Edge> es;
    for (int t = 0; t < 100; ++t) {
      model.sample_edges(rng, es);
      CHECK(es.size() == 1);
    }
  }
}

TEST_CASE("spectrum scales linearly in the laplacian scale") {
  Matrix L = laplacian(Topology::ring(8));
  SpectralSummary base = spectral(L);
  for (double c : {0.5, 1.0 / 12.0}) {
    SpectralSummary scaled = spectral(c * L);
    CHECK(scaled.lambda2 == doctest::Approx(c * base.lambda2).epsilon(1e-10));
    CHECK(scaled.lambdaN == doctest::Approx(c * base.lambdaN).epsilon(1e-10));
  }
}

TEST_CASE("E|M|^2 analytic values") {
  auto k4 = Topology::complete(4);  // 6 edges
  CHECK(LinkFailureModel::fixed(k4).mean_active_links_sq() == 36.0);
  CHECK(LinkFailureModel::gossip(k4).mean_active_links_sq() == 1.0);
  // binomial(6, 0.7): E M^2 = 6*5*0.49 + 6*0.7
  CHECK(LinkFailureModel::erasure(k4, 0.3).mean_active_links_sq() ==
        doctest::Approx(6 * 5 * 0.49 + 6 * 0.7).epsilon(1e-12));
}

TEST_CASE("circulant generator") {
  auto c = Topology::circulant(10, 4);
  CHECK(c.n_edges() == 20);
  std::vector<int> deg(10, 0);
  for (const Edge& e : c.edges()) {
    ++deg[e.u];
    ++deg[e.v];
  }
  for (int d : deg) CHECK(d == 4);
  CHECK_THROWS(Topology::circulant(10, 3));  // odd degree
}

TEST_CASE("edge list parsing") {
  SUBCASE("plain with comments") {
    std::istringstream in("# triangle\n0 1\n1 2 # last\n0 2\n");
    auto t = Topology::parse_edge_list(in);
    CHECK(t.n_nodes() == 3);
    CHECK(t.n_edges() == 3);
  }
  SUBCASE("N header adds isolated nodes") {
    std::istringstream in("N 5\n0 1\n");
    auto t = Topology::parse_edge_list(in);
    CHECK(t.n_nodes() == 5);
    CHECK(t.n_edges() == 1);
  }
  SUBCASE("bad input rejected") {
    std::istringstream a("0\n");
    CHECK_THROWS(Topology::parse_edge_list(a));
    std::istringstream b("zero one\n");
    CHECK_THROWS(Topology::parse_edge_list(b));
    std::istringstream c("");
    CHECK_THROWS(Topology::parse_edge_list(c));
  }
}
