#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "guideflow/bayesopt.hpp"
#include "guideflow/errors.hpp"
#include "guideflow/rng.hpp"

using namespace guideflow;

namespace {

double sphere(const std::vector<double>& x) {
    const double dx = x[0] - 2.0, dy = x[1] - 1.5;
    return dx * dx + dy * dy;
}

}  // namespace

TEST_CASE("GP regression interpolates smooth data") {
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    for (int i = 0; i <= 8; ++i) {
        const double x = i / 8.0;
        xs.push_back({x});
        ys.push_back(std::sin(2.0 * std::numbers::pi * x));
    }
    bayesopt::GP gp;
    gp.fit(xs, ys);

    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto pred = gp.predict(xs[i]);
        CHECK(std::abs(pred.mean - ys[i]) < 0.05);
        CHECK(pred.var >= 0.0);
    }
    // Between training points the smooth interpolant stays close too.
    for (double x : {0.1875, 0.5625, 0.8125}) {
        const auto pred = gp.predict({x});
        CHECK(std::abs(pred.mean - std::sin(2.0 * std::numbers::pi * x)) < 0.15);
    }
    // Uncertainty at a training input is below uncertainty off the grid edge.
    CHECK(gp.predict(xs[4]).var < gp.predict({2.0}).var);
}

TEST_CASE("ML-II hyperparameters do not lose to the initial guess") {
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    Rng rng(3);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (int i = 0; i < 20; ++i) {
        const double x = i / 19.0;
        xs.push_back({x});
        ys.push_back(x * x + noise(rng));
    }
    bayesopt::GP gp;
    gp.fit(xs, ys);
    bayesopt::GP::Hyper initial;
    initial.log_lengthscale.assign(1, 0.0);
    CHECK(gp.negative_log_marginal(gp.hyper()) <= gp.negative_log_marginal(initial) + 1e-9);
}

TEST_CASE("expected improvement matches the closed form and a Monte Carlo oracle") {
    // Closed form recomputed inline from the normal pdf/cdf.
    const double mu = 0.3, sigma = 0.5, f_best = 0.4, xi = 0.01;
    const double z = (f_best - mu - xi) / sigma;
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    const double reference = (f_best - mu - xi) * cdf + sigma * pdf;
    CHECK(bayesopt::expected_improvement(mu, sigma, f_best, xi) ==
          doctest::Approx(reference).epsilon(1e-12));

    // Monte Carlo: EI = E[max(f_best - xi - Y, 0)], Y ~ N(mu, sigma^2).
    Rng rng(17);
    std::normal_distribution<double> y_dist(mu, sigma);
    constexpr int kDraws = 200000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < kDraws; ++i) {
        const double imp = std::max(f_best - xi - y_dist(rng), 0.0);
        sum += imp;
        sum_sq += imp * imp;
    }
    const double mc = sum / kDraws;
    const double se = std::sqrt((sum_sq / kDraws - mc * mc) / kDraws);
    CHECK(std::abs(bayesopt::expected_improvement(mu, sigma, f_best, xi) - mc) < 3.0 * se);

    // A certain posterior cannot promise improvement.
    CHECK(bayesopt::expected_improvement(0.2, 0.0, 0.4, 0.01) == 0.0);
    // Deep in the tail EI decays to ~0 but never below.
    CHECK(bayesopt::expected_improvement(5.0, 0.1, 0.0, 0.01) >= 0.0);
    CHECK(bayesopt::expected_improvement(5.0, 0.1, 0.0, 0.01) < 1e-12);
}

TEST_CASE("latin hypercube puts one point in every stratum of every dimension") {
    Rng rng(5);
    const auto points = bayesopt::latin_hypercube(16, 3, rng);
    REQUIRE(points.size() == 16);
    for (int d = 0; d < 3; ++d) {
        std::vector<bool> occupied(16, false);
        for (const auto& p : points) {
            REQUIRE(p.size() == 3);
            CHECK(p[d] >= 0.0);
            CHECK(p[d] < 1.0);
            const int stratum = static_cast<int>(p[d] * 16.0);
            CHECK_FALSE(occupied[stratum]);
            occupied[stratum] = true;
        }
    }
    CHECK_THROWS_AS(bayesopt::latin_hypercube(0, 2, rng), ConfigError);
}

TEST_CASE("halton sequence emits the radical-inverse values") {
    CHECK(bayesopt::halton(0, 2) == 0.5);
    CHECK(bayesopt::halton(1, 2) == 0.25);
    CHECK(bayesopt::halton(2, 2) == 0.75);
    CHECK(bayesopt::halton(3, 2) == 0.125);
    CHECK(bayesopt::halton(0, 3) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(bayesopt::halton(1, 3) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(bayesopt::halton(2, 3) == doctest::Approx(1.0 / 9.0).epsilon(1e-15));
    CHECK(bayesopt::halton(3, 3) == doctest::Approx(4.0 / 9.0).epsilon(1e-15));
}

TEST_CASE("nelder-mead minimizes a shifted quadratic") {
    const auto f = [](const std::vector<double>& x) {
        const double a = x[0] - 1.5, b = x[1] + 0.25;
        return 3.0 * a * a + b * b + 2.0;
    };
    const auto x = bayesopt::nelder_mead(f, {0.0, 0.0}, 0.5, 400);
    CHECK(std::abs(x[0] - 1.5) < 1e-4);
    CHECK(std::abs(x[1] + 0.25) < 1e-4);
}

TEST_CASE("optimizer lands near the sphere minimum from any seed") {
    const auto start = std::chrono::steady_clock::now();
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        bayesopt::BOProblem problem;
        problem.objective = sphere;
        problem.bounds = {{1.0, 4.0}, {1.0, 4.0}};
        problem.n_initial = 10;
        problem.n_iterations = 40;
        problem.seed = seed;
        const auto trace = bayesopt::optimize(problem);
        CHECK(std::abs(trace.best_x[0] - 2.0) < 0.1);
        CHECK(std::abs(trace.best_x[1] - 1.5) < 0.1);
    }
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start);
    CHECK(elapsed.count() < 18.0);  // per-seed share of the 30-second budget
}

TEST_CASE("optimizer trace is well formed and deterministic") {
    bayesopt::BOProblem problem;
    problem.objective = sphere;
    problem.bounds = {{1.0, 4.0}, {1.0, 4.0}};
    problem.n_initial = 6;
    problem.n_iterations = 10;
    problem.seed = 77;

    const auto trace = bayesopt::optimize(problem);
    REQUIRE(trace.rows.size() == 16);
    double incumbent = trace.rows.front().y;
    double best = incumbent;
    for (std::size_t i = 0; i < trace.rows.size(); ++i) {
        const auto& row = trace.rows[i];
        CHECK(row.iteration == static_cast<int>(i));
        for (int d = 0; d < 2; ++d) {
            CHECK(row.x[d] >= problem.bounds[d][0]);
            CHECK(row.x[d] <= problem.bounds[d][1]);
        }
        best = std::min(best, row.y);
        CHECK(row.incumbent == best);
        CHECK(row.incumbent <= incumbent);
        incumbent = row.incumbent;
    }
    CHECK(trace.best_y == best);
    CHECK(sphere(trace.best_x) == trace.best_y);

    const auto again = bayesopt::optimize(problem);
    REQUIRE(again.rows.size() == trace.rows.size());
    for (std::size_t i = 0; i < trace.rows.size(); ++i) {
        CHECK(again.rows[i].x == trace.rows[i].x);
        CHECK(again.rows[i].y == trace.rows[i].y);
    }
}

TEST_CASE("optimizer copes with a constant objective") {
    bayesopt::BOProblem problem;
    problem.objective = [](const std::vector<double>&) { return 1.25; };
    problem.bounds = {{0.0, 1.0}};
    problem.n_initial = 4;
    problem.n_iterations = 6;
    problem.seed = 5;
    const auto trace = bayesopt::optimize(problem);
    CHECK(trace.best_y == 1.25);
    CHECK(trace.rows.size() == 10);
}

TEST_CASE("objective exceptions surface as ObjectiveFailure") {
    bayesopt::BOProblem problem;
    problem.objective = [](const std::vector<double>&) -> double {
        throw std::runtime_error("boom");
    };
    problem.bounds = {{0.0, 1.0}};
    problem.n_initial = 3;
    problem.n_iterations = 2;
    problem.seed = 1;
    CHECK_THROWS_AS(bayesopt::optimize(problem), ObjectiveFailure);
}
