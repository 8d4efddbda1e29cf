#include <catch2/catch_amalgamated.hpp>

#include "dclike/tsne.hpp"
#include "test_support.hpp"

using namespace dclike;
using namespace dclike::tsne;

namespace {

// Gradient of the full objective F: grad f + 2 L_W x with W = -xi - xi^T.
Embedding full_gradient(const Embedding& x, const AffinityMatrix& p) {
  const Embedding smooth = grad_f(x);
  const SparseCoo w = neg_sym_weights(compute_xi(x, AffinityView(p)));
  const LaplacianOp lap(w);
  Embedding out(x.rows(), x.cols());
  std::vector<double> xc(x.rows()), yc(x.rows());
  for (std::size_t col = 0; col < x.cols(); ++col) {
    for (std::size_t i = 0; i < x.rows(); ++i) xc[i] = x(i, col);
    lap.apply(xc.data(), yc.data());
    for (std::size_t i = 0; i < x.rows(); ++i) out(i, col) = smooth(i, col) + 2.0 * yc[i];
  }
  return out;
}

}  // namespace

TEST_CASE("AffinityMatrix construction and validation") {
  SECTION("mirrors single-orientation input") {
    const AffinityMatrix p(2, {{0, 1, 0.5}});
    REQUIRE(p.entry_count() == 2);
    CHECK(p.entries()[0].i == 0);
    CHECK(p.entries()[1].i == 1);
    CHECK(p.entries()[0].p == 0.5);
    CHECK(p.total_mass() == 1.0);
  }
  SECTION("rejects broken input") {
    CHECK_THROWS_AS(AffinityMatrix(2, {{0, 0, 1.0}}), std::invalid_argument);      // diagonal
    CHECK_THROWS_AS(AffinityMatrix(2, {{0, 1, -0.5}}), std::invalid_argument);     // negative
    CHECK_THROWS_AS(AffinityMatrix(2, {{0, 1, 0.4}}), std::invalid_argument);      // mass != 1
    CHECK_THROWS_AS(AffinityMatrix(3, {{0, 1, 0.25}, {1, 0, 0.3}}), std::invalid_argument);
  }
  SECTION("normalized rescales to unit mass") {
    const auto p = AffinityMatrix::normalized(3, {{0, 1, 2.0}, {0, 2, 1.0}, {1, 2, 1.0}});
    CHECK(std::abs(p.total_mass() - 1.0) <= 1e-12);
  }
}

TEST_CASE("gaussian_conditional") {
  SECTION("two points: the single competitor gets everything") {
    const Matrix data = Matrix::from_rows({{0.0, 0.0}, {3.0, 4.0}});
    const auto p = gaussian_conditional(data, 0, 2.0);
    CHECK(p[0] == 0.0);
    CHECK(p[1] == 1.0);
  }
  SECTION("three collinear points") {
    const Matrix data = Matrix::from_rows({{0.0}, {1.0}, {2.0}});
    const auto p = gaussian_conditional(data, 0, 1.0);
    CHECK(p[1] == Catch::Approx(0.81757448).epsilon(1e-6));
    CHECK(p[2] == Catch::Approx(0.18242552).epsilon(1e-6));
    CHECK(p[0] == 0.0);
  }
  SECTION("rows sum to one and symmetrization has unit mass") {
    const Matrix data = make_clusters(12, 3, 3, 1.0, 77);
    const std::size_t n = data.rows();
    std::vector<std::vector<double>> cond(n);
    for (std::size_t i = 0; i < n; ++i) {
      cond[i] = gaussian_conditional(data, i, 1.5);
      KahanSum s;
      for (double v : cond[i]) s.add(v);
      CHECK(std::abs(s.value() - 1.0) <= 1e-12);
    }
    std::vector<AffinityEntry> entries;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        entries.push_back({i, j, (cond[i][j] + cond[j][i]) / (2.0 * double(n))});
    const AffinityMatrix p(n, entries);
    CHECK(std::abs(p.total_mass() - 1.0) <= 1e-12);
  }
  SECTION("invalid input") {
    const Matrix one = Matrix::from_rows({{0.0}});
    CHECK_THROWS_AS(gaussian_conditional(one, 0, 1.0), std::invalid_argument);
    const Matrix data = Matrix::from_rows({{0.0}, {1.0}});
    CHECK_THROWS_AS(gaussian_conditional(data, 0, 0.0), std::invalid_argument);
  }
}

TEST_CASE("build_knn_affinities") {
  SECTION("three points, k = 1") {
    const NeighborList nb{{1}, {0}, {1}};
    const AffinityMatrix p = build_knn_affinities(nb, 3);
    REQUIRE(p.entry_count() == 4);  // (0,1),(1,0),(1,2),(2,1)
    for (const auto& e : p.entries()) CHECK(e.p == 0.25);
    CHECK(p.total_mass() == 1.0);
  }
  SECTION("two points") {
    const AffinityMatrix p = build_knn_affinities({{1}, {0}}, 2);
    REQUIRE(p.entry_count() == 2);
    CHECK(p.entries()[0].p == 0.5);
  }
  SECTION("symmetric with unit mass on random graphs") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
      const std::size_t n = 15 + 9 * seed;
      const Matrix data = make_clusters(n, 4, 3, 1.0, seed);
      const AffinityMatrix p = build_knn_affinities(knn_graph(data, 4), n);
      CHECK(std::abs(p.total_mass() - 1.0) <= 1e-12);
      // every ordered entry has its mirror with the same value
      for (std::size_t e = 0; e + 1 < p.entry_count(); ++e) {
        const auto& entry = p.entries()[e];
        bool found = false;
        for (const auto& other : p.entries())
          if (other.i == entry.j && other.j == entry.i && other.p == entry.p) found = true;
        REQUIRE(found);
      }
    }
  }
  SECTION("invalid input") {
    CHECK_THROWS_AS(build_knn_affinities({{1}, {}}, 2), std::invalid_argument);
    CHECK_THROWS_AS(build_knn_affinities({{0}, {0}}, 2), std::invalid_argument);
  }
}

TEST_CASE("objective") {
  SECTION("two points always have KL zero") {
    const AffinityMatrix p(2, {{0, 1, 0.5}});
    for (std::uint64_t seed : {1ull, 5ull, 9ull}) {
      const Embedding x = testsupport::random_embedding(2, 2, seed, 3.0);
      CHECK(std::abs(objective(x, p)) <= 1e-12);
    }
  }
  SECTION("coincident points with uniform affinities") {
    const double u = 1.0 / 6.0;
    const AffinityMatrix p(3, {{0, 1, u}, {0, 2, u}, {1, 2, u}});
    const Embedding x(3, 2, 1.5);
    CHECK(std::abs(objective(x, p)) <= 1e-12);
  }
  SECTION("matches the dense KL oracle") {
    for (std::uint64_t seed : {3ull, 4ull, 5ull}) {
      const AffinityMatrix p = testsupport::random_affinities(10, 3, seed);
      const Embedding x = testsupport::random_embedding(10, 2, seed + 7);
      const double decomposed = objective(x, p);
      const double dense = testsupport::dense_kl(x, AffinityView(p));
      CHECK(decomposed == Catch::Approx(dense).epsilon(1e-12));
    }
  }
  SECTION("zero-probability entries contribute nothing") {
    const AffinityMatrix with_zero(3, {{0, 1, 0.5}, {0, 2, 0.0}});
    const AffinityMatrix without(3, {{0, 1, 0.5}});
    const Embedding x = testsupport::random_embedding(3, 2, 2);
    CHECK(objective(x, with_zero) == objective(x, without));
  }
  SECTION("non-negative for valid affinities") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const AffinityMatrix p = testsupport::random_affinities(12, 4, 60 + seed);
      const Embedding x = testsupport::random_embedding(12, 2, seed, 2.0);
      CHECK(objective(x, p) >= -1e-12);
    }
  }
  SECTION("translation invariance") {
    const AffinityMatrix p = testsupport::random_affinities(30, 5, 19);
    const Embedding x = testsupport::random_embedding(30, 2, 20);
    Embedding shifted = x;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      shifted(i, 0) += 17.25;
      shifted(i, 1) -= 4.5;
    }
    CHECK(objective(shifted, p) == Catch::Approx(objective(x, p)).margin(1e-10));
  }
}

TEST_CASE("grad_f") {
  SECTION("coincident points have zero gradient") {
    const Embedding x(5, 2, 0.75);
    CHECK(grad_f(x) == Embedding(5, 2, 0.0));
  }
  SECTION("columns sum to zero by antisymmetry") {
    const Embedding x = testsupport::random_embedding(15, 2, 4);
    const Embedding g = grad_f(x);
    for (std::size_t d = 0; d < 2; ++d) {
      KahanSum s;
      for (std::size_t i = 0; i < x.rows(); ++i) s.add(g(i, d));
      CHECK(std::abs(s.value()) <= 1e-12);
    }
  }
  SECTION("matches finite differences of the smooth part") {
    for (std::uint64_t seed : {1ull, 2ull}) {
      const auto problem = testsupport::random_problem(8, 3, 2, 40 + seed);
      const Embedding x = testsupport::random_embedding(8, 2, seed);
      const Embedding fd = testsupport::finite_difference_gradient(
          [&](const Embedding& point) { return problem.smooth_value(point); }, x);
      CHECK(frob_dist(grad_f(x), fd) <= 1e-5 * frob_norm(fd));
    }
  }
  SECTION("full objective gradient matches finite differences") {
    for (std::uint64_t seed : {1ull, 2ull}) {
      const AffinityMatrix p = testsupport::random_affinities(8, 3, 50 + seed);
      const Embedding x = testsupport::random_embedding(8, 2, seed + 4);
      const Embedding fd = testsupport::finite_difference_gradient(
          [&](const Embedding& point) { return objective(point, p); }, x);
      CHECK(frob_dist(full_gradient(x, p), fd) <= 1e-5 * frob_norm(fd));
    }
  }
  SECTION("requires at least two points") {
    CHECK_THROWS_AS(grad_f(Embedding(1, 2)), std::invalid_argument);
  }
}

TEST_CASE("compute_xi") {
  const AffinityMatrix p(2, {{0, 1, 0.5}});
  SECTION("coincident points: unit denominator") {
    const XiMatrix xi = compute_xi(Embedding(2, 2, 1.0), p);
    CHECK(xi.values[0] == -0.5);
    CHECK(xi.values[1] == -0.5);
  }
  SECTION("squared distance 3 with p = 0.25") {
    const auto quarter = AffinityMatrix::normalized(3, {{0, 1, 0.25}, {0, 2, 0.25}});
    Embedding x(3, 1);
    x(0, 0) = 0.0;
    x(1, 0) = std::sqrt(3.0);
    x(2, 0) = std::sqrt(3.0);
    const XiMatrix xi = compute_xi(x, quarter);
    CHECK(xi.values[0] == Catch::Approx(-0.0625).epsilon(1e-12));
  }
  SECTION("bounded by the affinities") {
    const AffinityMatrix q = testsupport::random_affinities(20, 4, 2);
    const Embedding x = testsupport::random_embedding(20, 2, 3);
    const XiMatrix xi = compute_xi(x, q);
    for (std::size_t e = 0; e < xi.values.size(); ++e) {
      CHECK(xi.values[e] <= 0.0);
      CHECK(std::abs(xi.values[e]) <= q.entries()[e].p);
    }
  }
}

TEST_CASE("subproblem_solve") {
  SECTION("zero xi is a pure gradient step") {
    const AffinityMatrix p = testsupport::random_affinities(10, 3, 1);
    XiMatrix xi;
    xi.pattern = &p;
    xi.values.assign(p.entry_count(), 0.0);
    const Embedding v = testsupport::random_embedding(10, 2, 2);
    const Embedding grad = testsupport::random_embedding(10, 2, 3);
    const double mu = 2.5;
    const Embedding x = subproblem_solve(v, grad, xi, mu);
    for (std::size_t idx = 0; idx < v.size(); ++idx)
      CHECK(x.data()[idx] ==
            Catch::Approx(v.data()[idx] - grad.data()[idx] / mu).margin(1e-12));
  }
  SECTION("constant v with zero gradient is a fixed point") {
    const AffinityMatrix p = testsupport::random_affinities(10, 3, 4);
    const XiMatrix xi = compute_xi(Embedding(10, 2, 0.3), p);
    const Embedding v(10, 2, 0.3);
    const Embedding x = subproblem_solve(v, Embedding(10, 2, 0.0), xi, 0.5);
    CHECK(x == v);  // constant vectors lie in the Laplacian null space
  }
  SECTION("matches a dense direct solve and minimizes the subproblem objective") {
    const AffinityMatrix p = testsupport::random_affinities(20, 4, 9);
    const Embedding v = testsupport::random_embedding(20, 2, 10);
    const Embedding grad = testsupport::random_embedding(20, 2, 11);
    const XiMatrix xi = compute_xi(v, p);
    const double mu = 0.8;
    const Embedding x = subproblem_solve(v, grad, xi, mu);
    const Embedding ref = testsupport::dense_subproblem_solve(v, grad, xi, mu);
    CHECK(frob_dist(x, ref) <= 1e-8 * frob_norm(ref));

    // m(x) = (mu/2)||x - v||^2 + <grad, x> + sum (-xi_ij) ||x_i - x_j||^2
    auto model = [&](const Embedding& point) {
      double m = 0.5 * mu * frob_dist(point, v) * frob_dist(point, v) + frob_dot(grad, point);
      const auto& entries = p.entries();
      for (std::size_t e = 0; e < entries.size(); ++e)
        m += -xi.values[e] * squared_distance_rows(point, entries[e].i, entries[e].j);
      return m;
    };
    const double at_solution = model(x);
    detail::GaussianSampler g(12);
    for (int rep = 0; rep < 100; ++rep) {
      Embedding perturbed = x;
      for (std::size_t idx = 0; idx < perturbed.size(); ++idx)
        perturbed.data()[idx] += 1e-3 * g.next();
      CHECK(model(perturbed) > at_solution);
    }
  }
}

TEST_CASE("mm_equivalence_check") {
  SECTION("holds at the linear-system solution") {
    const AffinityMatrix p = testsupport::random_affinities(15, 4, 21);
    const Embedding v = testsupport::random_embedding(15, 2, 22);
    CHECK(mm_equivalence_check(v, p, 0.6));
  }
  SECTION("two-point system solved by hand") {
    const AffinityMatrix p(2, {{0, 1, 0.5}});
    XiMatrix xi;
    xi.pattern = &p;
    xi.values = {-0.25, -0.25};
    Embedding v(2, 1, 0.0);
    Embedding grad(2, 1);
    grad(0, 0) = 1.0;
    grad(1, 0) = 0.0;
    // W = 0.5 on the off-diagonal, so 2L + I = [[2,-1],[-1,2]] and
    // b = -grad: x = [-2/3, -1/3].
    const Embedding x = subproblem_solve(v, grad, xi, 1.0);
    CHECK(x(0, 0) == Catch::Approx(-2.0 / 3.0).epsilon(1e-10));
    CHECK(x(1, 0) == Catch::Approx(-1.0 / 3.0).epsilon(1e-10));
    CHECK(mm_equivalence_check(v, p, 1.0));
  }
  SECTION("a loose CG tolerance breaks it") {
    const AffinityMatrix p = testsupport::random_affinities(60, 6, 23);
    const Embedding v = testsupport::random_embedding(60, 2, 24);
    CHECK(mm_equivalence_check(v, p, 0.05));
    CHECK_FALSE(mm_equivalence_check(v, p, 0.05, {1e-2, 0}));
  }
}

TEST_CASE("exaggerate") {
  const NeighborList nb{{1}, {0}, {1}};
  const AffinityMatrix p = build_knn_affinities(nb, 3);  // entries of 0.25
  const ExaggerationSchedule schedule{4.0, 20};

  SECTION("scales during the window") {
    const AffinityView view = exaggerate(p, schedule, 0);
    for (std::size_t e = 0; e < view.entry_count(); ++e) CHECK(view.p(e) == 1.0);
  }
  SECTION("restores the original bit-exactly afterwards") {
    const AffinityView view = exaggerate(p, schedule, 20);
    for (std::size_t e = 0; e < view.entry_count(); ++e) CHECK(view.p(e) == p.entries()[e].p);
    const Embedding x = testsupport::random_embedding(3, 2, 5);
    CHECK(objective(x, view) == objective(x, p));
  }
  SECTION("factor one is the identity at every iteration") {
    const ExaggerationSchedule identity{1.0, 20};
    for (std::size_t k : {std::size_t{0}, std::size_t{10}, std::size_t{30}}) {
      const AffinityView view = exaggerate(p, identity, k);
      CHECK(view.factor() == 1.0);
    }
  }
}

TEST_CASE("shifted system is positive definite with margin mu") {
  const AffinityMatrix p = testsupport::random_affinities(25, 5, 31);
  const XiMatrix xi = compute_xi(testsupport::random_embedding(25, 2, 32), p);
  const SparseCoo w = neg_sym_weights(xi);
  const LaplacianOp lap(w);
  const double mu = 0.37;
  const ShiftedLaplacian op(lap, mu);
  detail::GaussianSampler g(33);
  std::vector<double> v(25), av(25);
  for (int rep = 0; rep < 100; ++rep) {
    double norm2 = 0.0;
    for (auto& e : v) {
      e = g.next();
    }
    for (double e : v) norm2 += e * e;
    op.apply(v.data(), av.data());
    double quad = 0.0;
    for (std::size_t i = 0; i < 25; ++i) quad += v[i] * av[i];
    CHECK(quad >= mu * norm2 - 1e-10);
  }
}

TEST_CASE("lipschitz_bound") {
  CHECK(lipschitz_bound(100, 4) == 6.0 * 100.0 * 2.0);
  const auto problem = testsupport::random_problem(20, 4, 2, 3);
  CHECK(problem.lipschitz_bound() == lipschitz_bound(20, 2));
}

TEST_CASE("TsneProblem is consistent with the free functions") {
  auto problem = testsupport::random_problem(12, 3, 2, 71);
  const Embedding x = testsupport::random_embedding(12, 2, 72);
  const AffinityMatrix& p = problem.affinities();

  CHECK(problem.objective(x) == objective(x, p));
  CHECK(problem.smooth_value(x) == smooth_value(x, p));
  CHECK(problem.smooth_grad(x) == grad_f(x));
  CHECK(problem.concave_subgrad(x) == compute_xi(x, p).values);
  CHECK(problem.composite_value(x) == composite_value(x, p));

  // F = f + sum h(g)
  const auto h = problem.h_values(problem.composite_value(x));
  KahanSum total;
  for (double v : h) total.add(v);
  CHECK(problem.objective(x) ==
        Catch::Approx(problem.smooth_value(x) + total.value()).epsilon(1e-14));

  // the exaggerated state scales the composite side only
  problem.set_exaggeration_factor(4.0);
  CHECK(problem.smooth_grad(x) == grad_f(x));
  const auto xi_scaled = problem.concave_subgrad(x);
  const auto xi_plain = compute_xi(x, p).values;
  for (std::size_t e = 0; e < xi_plain.size(); ++e)
    CHECK(xi_scaled[e] == Catch::Approx(4.0 * xi_plain[e]).epsilon(1e-14));
  problem.set_exaggeration_factor(1.0);
  CHECK(problem.objective(x) == objective(x, p));
}
