#include <doctest.h>

#include <cmath>
#include <sstream>

#include "trustopt/problem.hpp"
#include "trustopt/rng.hpp"

using namespace trustopt;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

Vector random_in_box(SplitMix64& rng, const BoxConstraint& box, double scale = 1.0) {
  Vector x(box.dim);
  for (int k = 0; k < box.dim; ++k) x(k) = rng.uniform(-scale * box.eta, scale * box.eta);
  return x;
}

}  // namespace

TEST_SUITE("problem") {

TEST_CASE("gradient examples") {
  const QuadraticObjective f{vec({1, 0}), 2.0, 1.0};
  CHECK(gradient(f, vec({3, 4})) == vec({4, 4}));
  const QuadraticObjective g{vec({1}), 7.0, 0.0};
  CHECK(gradient(g, vec({7}))(0) == 0.0);
  CHECK_THROWS_AS(gradient(f, vec({1, 2, 3})), std::invalid_argument);
}

TEST_CASE("gradient agrees with central differences") {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    QuadraticObjective f{Vector(5), rng.uniform(-100, 100), rng.uniform(0, 3)};
    for (int k = 0; k < 5; ++k) f.a(k) = rng.uniform(-3, 3);
    Vector x(5);
    for (int k = 0; k < 5; ++k) x(k) = rng.uniform(-50, 50);
    const Vector g = gradient(f, x);
    for (int k = 0; k < 5; ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(x(k)));
      Vector xp = x, xm = x;
      xp(k) += h;
      xm(k) -= h;
      const double fd = (evaluate_objective(f, xp) - evaluate_objective(f, xm)) / (2 * h);
      CHECK(std::abs(fd - g(k)) <= 1e-5 * std::max(1.0, std::abs(g(k))));
    }
  }
}

TEST_CASE("objective values") {
  CHECK(evaluate_objective({vec({1, 0}), 2.0, 0.0}, vec({2, 7})) == 0.0);
  CHECK(evaluate_objective({vec({0, 0}), 0.0, 2.0}, vec({1, 1})) == doctest::Approx(2.0));
}

TEST_CASE("projection examples") {
  const BoxConstraint box2(50, 2), box3(50, 3);
  CHECK(project_box(vec({60, -10}), box2) == vec({50, -10}));
  CHECK(project_box(vec({10, -10}), box2) == vec({10, -10}));
  CHECK(project_box(vec({-51, 51, 0}), box3) == vec({-50, 50, 0}));
}

TEST_CASE("projection is idempotent and nonexpansive") {
  SplitMix64 rng(17);
  const BoxConstraint box(50, 5);
  for (int trial = 0; trial < 10000; ++trial) {
    const Vector y1 = random_in_box(rng, box, 3.0), y2 = random_in_box(rng, box, 3.0);
    const Vector p1 = project_box(y1, box), p2 = project_box(y2, box);
    CHECK((p1 - p2).norm() <= (y1 - y2).norm() + 1e-12);
    CHECK(project_box(p1, box) == p1);
    CHECK(box.contains(p1));
  }
}

TEST_CASE("consensus optimum") {
  const Problem p = consensus_problem();
  CHECK(p.n_agents() == 15);
  const Vector x = optimal_point(p.objectives, p.box);
  CHECK(std::abs(x(0) - 31.366666666666667) < 1e-9);
  CHECK(constrained_optimum(p.objectives, p.box)(0) == doctest::Approx(x(0)).epsilon(1e-12));
}

TEST_CASE("d = 5 optimum") {
  const Problem p = ridge5_problem();
  const Vector uc = unconstrained_optimum(p.objectives);
  const Vector expected_uc = vec({-61.67, -16.54, -21.19, -19.64, 60.4});
  for (int k = 0; k < 5; ++k) CHECK(std::abs(uc(k) - expected_uc(k)) < 0.01);
  const Vector clipped = optimal_point(p.objectives, p.box);
  const Vector expected = vec({-50, -16.54, -21.19, -19.64, 50});
  for (int k = 0; k < 5; ++k) CHECK(std::abs(clipped(k) - expected(k)) < 0.01);
}

TEST_CASE("clipping rule") {
  const std::vector<QuadraticObjective> one{{vec({1}), 10.0, 0.0}};
  CHECK(optimal_point(one, BoxConstraint(5, 1))(0) == 5.0);
  const std::vector<QuadraticObjective> singular{{vec({1, 0}), 1.0, 0.0}};
  CHECK_THROWS_AS(optimal_point(singular, BoxConstraint(5, 2)), std::domain_error);
}

TEST_CASE("constrained optimum satisfies projected optimality") {
  for (const Problem& p : {consensus_problem(), ridge5_problem(), ridge5_problem(1.0)}) {
    const Vector x = constrained_optimum(p.objectives, p.box);
    CHECK(p.box.contains(x, 1e-12));
    Vector g = Vector::Zero(p.dim());
    for (const auto& f : p.objectives) g += gradient(f, x);
    g /= p.n_agents();
    SplitMix64 rng(23);
    for (int trial = 0; trial < 10000; ++trial) {
      const Vector y = random_in_box(rng, p.box);
      CHECK(g.dot(y - x) >= -1e-8);
    }
  }
}

TEST_CASE("constrained optimum on random instances") {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const int d = 1 + static_cast<int>(rng() % 6);
    std::vector<QuadraticObjective> objs;
    for (int i = 0; i < 8; ++i) {
      QuadraticObjective f{Vector(d), rng.uniform(-200, 200), 0.1};
      for (int k = 0; k < d; ++k) f.a(k) = rng.uniform(-3, 3);
      objs.push_back(f);
    }
    const BoxConstraint box(rng.uniform(1, 60), d);
    const Vector x = constrained_optimum(objs, box);
    Vector g = Vector::Zero(d);
    for (const auto& f : objs) g += gradient(f, x);
    g /= 8.0;
    // KKT: zero gradient on free coordinates, correct sign on active ones.
    for (int k = 0; k < d; ++k) {
      if (x(k) >= box.eta - 1e-12)
        CHECK(g(k) <= 1e-8);
      else if (x(k) <= -box.eta + 1e-12)
        CHECK(g(k) >= -1e-8);
      else
        CHECK(std::abs(g(k)) <= 1e-8);
    }
  }
}

TEST_CASE("regularity constants") {
  SUBCASE("consensus") {
    const Problem p = consensus_problem();
    const ProblemConstants c = regularity_constants(p.objectives, p.box);
    CHECK(c.mu == 1.0);
    CHECK(c.L == 1.0);
    CHECK(c.G == doctest::Approx(50.0 + 163.3));
    CHECK(c.strongly_convex);
  }
  SUBCASE("pure regularizer") {
    const std::vector<QuadraticObjective> objs(3, {Vector::Zero(5), 0.0, 1.0});
    const ProblemConstants c = regularity_constants(objs, BoxConstraint(2, 5));
    CHECK(c.mu == 1.0);
    CHECK(c.L == 1.0);
    CHECK(c.G == doctest::Approx(2.0 * std::sqrt(5.0)));
  }
  SUBCASE("d = 5 instance") {
    const Problem p = ridge5_problem();
    const ProblemConstants c = regularity_constants(p.objectives, p.box);
    CHECK(c.mu == 0.5);
    CHECK(c.L == doctest::Approx(0.5 + 15.5561).epsilon(1e-12));
  }
  SUBCASE("not strongly convex") {
    const std::vector<QuadraticObjective> objs{{Vector::Ones(2), 1.0, 0.0}};
    CHECK_FALSE(regularity_constants(objs, BoxConstraint(1, 2)).strongly_convex);
  }
}

TEST_CASE("constants hold on samples") {
  for (const Problem& p : {consensus_problem(), ridge5_problem()}) {
    const ProblemConstants c = regularity_constants(p.objectives, p.box);
    SplitMix64 rng(77);
    for (int trial = 0; trial < 10000; ++trial) {
      const auto& f = p.objectives[trial % p.n_agents()];
      const Vector x = random_in_box(rng, p.box), y = random_in_box(rng, p.box);
      const Vector gx = gradient(f, x), gy = gradient(f, y);
      CHECK(gx.norm() <= c.G * (1 + 1e-12));
      CHECK((gx - gy).norm() <= c.L * (x - y).norm() * (1 + 1e-12) + 1e-12);
      const double lower = evaluate_objective(f, x) + gx.dot(y - x) + 0.5 * c.mu * (y - x).squaredNorm();
      CHECK(evaluate_objective(f, y) >= lower - 1e-9 * std::max(1.0, std::abs(lower)));
      const double mid = evaluate_objective(f, 0.5 * (x + y));
      CHECK(mid <= 0.5 * (evaluate_objective(f, x) + evaluate_objective(f, y)) + 1e-9);
    }
  }
}

TEST_CASE("problem file round trip") {
  const Problem p = ridge5_problem();
  std::stringstream ss;
  write_problem(ss, p);
  const Problem back = parse_problem(ss);
  REQUIRE(back.n_agents() == p.n_agents());
  for (int i = 0; i < p.n_agents(); ++i) {
    CHECK(back.objectives[i].a == p.objectives[i].a);
    CHECK(back.objectives[i].b == p.objectives[i].b);
    CHECK(back.objectives[i].lambda == p.objectives[i].lambda);
  }
  CHECK(back.box.eta == 50.0);
}

TEST_CASE("problem parse errors") {
  std::istringstream no_header("1 2\n");
  CHECK_THROWS_AS(parse_problem(no_header), std::runtime_error);
  std::istringstream short_row("d 2\nlambda 0\neta 1\n1 2\n");
  CHECK_THROWS_AS(parse_problem(short_row), std::runtime_error);
  std::istringstream bad_key("d 1\nlambda 0\neta 1\nalpha 3\n");
  CHECK_THROWS_AS(parse_problem(bad_key), std::runtime_error);
}

TEST_CASE("shipped problem files match the presets") {
  const Problem c = read_problem(TRUSTOPT_DATA_DIR "/consensus15.problem");
  CHECK(optimal_point(c.objectives, c.box)(0) == doctest::Approx(31.366666666666667));
  const Problem r = read_problem(TRUSTOPT_DATA_DIR "/ridge5.problem");
  const Problem preset = ridge5_problem();
  for (int i = 0; i < r.n_agents(); ++i) CHECK(r.objectives[i].a == preset.objectives[i].a);
}

}
