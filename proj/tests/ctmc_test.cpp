#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "guideflow/ctmc.hpp"
#include "guideflow/errors.hpp"
#include "guideflow/flowcore.hpp"
#include "guideflow/rng.hpp"
#include "test_util.hpp"

using namespace guideflow;

namespace {

// Sum of a rate row; every generator row must conserve probability.
double row_sum(const ctmc::RateRow& row) {
    return std::accumulate(row.begin(), row.end(), 0.0);
}

std::vector<double> random_simplex(int n, Rng& rng) {
    std::uniform_real_distribution<double> unif(1e-6, 1.0);
    std::vector<double> p(n);
    double total = 0.0;
    for (auto& v : p) {
        v = unif(rng);
        total += v;
    }
    for (auto& v : p) v /= total;
    return p;
}

// Runs the one-slot unmasking chain to the end of the grid and tallies the
// terminal states. `guide` maps the plain rate row to the guided one.
template <typename GuideFn>
std::vector<double> terminal_distribution(const std::vector<double>& p_data, double eta,
                                          int steps, int trajectories, std::uint64_t seed,
                                          GuideFn&& guide) {
    const int mask = static_cast<int>(p_data.size());
    const flowcore::TimeGrid grid{steps};
    std::vector<std::int64_t> counts(p_data.size() + 1, 0);
    for (int traj = 0; traj < trajectories; ++traj) {
        Rng rng = substream(seed, static_cast<std::uint64_t>(traj));
        int state = mask;
        for (int k = 0; k < grid.steps; ++k) {
            const auto row = guide(ctmc::rate_row(p_data, state, grid.t(k), eta), state);
            state = ctmc::sample_transition(row, state, grid.dt(), rng);
        }
        counts[state]++;
    }
    std::vector<double> freq(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i)
        freq[i] = static_cast<double>(counts[i]) / trajectories;
    return freq;
}

}  // namespace

TEST_CASE("rate rows from a masked state scale the posterior by (1 + eta t)/(1 - t)") {
    const auto row = ctmc::rate_row({0.7, 0.3}, /*current=*/2, /*t=*/0.5, /*eta=*/0.0);
    REQUIRE(row.size() == 3);
    CHECK(row[0] == doctest::Approx(1.4).epsilon(1e-12));
    CHECK(row[1] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(row[2] == doctest::Approx(-2.0).epsilon(1e-12));

    const auto remask = ctmc::rate_row({0.7, 0.3}, /*current=*/0, /*t=*/0.5, /*eta=*/1.0);
    CHECK(remask[0] == -1.0);
    CHECK(remask[1] == 0.0);
    CHECK(remask[2] == 1.0);

    const auto frozen = ctmc::rate_row({0.7, 0.3}, /*current=*/0, /*t=*/0.5, /*eta=*/0.0);
    CHECK(frozen == ctmc::RateRow{0.0, 0.0, 0.0});

    CHECK_THROWS_AS(ctmc::rate_row({0.7, 0.3}, 2, 1.0, 0.0), ConfigError);
}

TEST_CASE("transition probabilities follow delta + R dt with clamping") {
    const ctmc::RateRow row{1.4, 0.6, -2.0};
    const auto probs = ctmc::transition_probs(row, 2, 0.01);
    CHECK(probs[0] == doctest::Approx(0.014).epsilon(1e-12));
    CHECK(probs[1] == doctest::Approx(0.006).epsilon(1e-12));
    CHECK(probs[2] == doctest::Approx(0.98).epsilon(1e-12));

    // A zero rate row keeps the chain exactly in place.
    const auto stay = ctmc::transition_probs(ctmc::RateRow{0.0, 0.0, 0.0}, 1, 0.01);
    CHECK(stay == std::vector<double>{0.0, 1.0, 0.0});

    // An oversized step drives the diagonal negative; clamping and the
    // renormalization keep a proper distribution.
    const auto clamped = ctmc::transition_probs(row, 2, 1.0);
    CHECK(clamped[0] == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(clamped[1] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(clamped[2] == 0.0);
}

TEST_CASE("sample_transition matches its probability vector empirically") {
    const ctmc::RateRow row{1.4, 0.6, -2.0};
    const auto probs = ctmc::transition_probs(row, 2, 0.01);
    Rng rng(31);
    constexpr int kDraws = 100000;
    std::vector<std::int64_t> counts(3, 0);
    for (int i = 0; i < kDraws; ++i) counts[ctmc::sample_transition(row, 2, 0.01, rng)]++;
    for (int a = 0; a < 3; ++a) {
        const double freq = static_cast<double>(counts[a]) / kDraws;
        const double sigma = std::sqrt(probs[a] * (1.0 - probs[a]) / kDraws);
        CHECK(std::abs(freq - probs[a]) < 3.5 * sigma);
    }
}

TEST_CASE("unguided chain terminates at the data distribution") {
    const std::vector<double> p_data{0.6, 0.4};
    const auto identity = [](ctmc::RateRow row, int) { return row; };

    for (double eta : {0.0, 1.0}) {
        const auto freq = terminal_distribution(p_data, eta, 500, 10000, 1212, identity);
        const std::vector<double> expected{0.6, 0.4, 0.0};
        CHECK(testutil::total_variation(freq, expected) < 0.02);
    }
}

TEST_CASE("linear posterior blending: endpoints exact, clamping renormalizes") {
    const std::vector<double> pu{0.5, 0.5}, pc{0.8, 0.2};
    CHECK(ctmc::guide_prob_linear(pu, pc, 0.0) == pu);
    CHECK(ctmc::guide_prob_linear(pu, pc, 1.0) == pc);
    CHECK(ctmc::guide_prob_linear(pu, pu, 2.7) == pu);  // equal inputs collapse

    // (1 - 2) pu + 2 pc = (1.5, -0.5) -> clamp -> renormalize.
    const auto clamped = ctmc::guide_prob_linear(pu, {1.0, 0.0}, 2.0);
    CHECK(clamped[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(clamped[1] == 0.0);
}

TEST_CASE("log posterior blending matches the geometric-mean formula") {
    const std::vector<double> pu{0.5, 0.5}, pc{0.8, 0.2};
    CHECK(ctmc::guide_prob_log(pu, pc, 0.0) == pu);
    CHECK(ctmc::guide_prob_log(pu, pc, 1.0) == pc);
    CHECK(ctmc::guide_prob_log(pc, pc, 0.4) == pc);

    // pc^2 / pu = (1.28, 0.08), normalizer 1.36.
    const auto sharpened = ctmc::guide_prob_log(pu, pc, 2.0);
    CHECK(sharpened[0] == doctest::Approx(1.28 / 1.36).epsilon(1e-12));
    CHECK(sharpened[1] == doctest::Approx(0.08 / 1.36).epsilon(1e-12));
}

TEST_CASE("log posterior blending sharpens monotonically toward the guided mode") {
    const std::vector<double> pu{0.5, 0.5}, pc{0.7, 0.3};
    double previous = 0.0;
    for (double w : {0.0, 0.5, 1.0, 1.5, 2.0, 3.0}) {
        const auto p = ctmc::guide_prob_log(pu, pc, w);
        CHECK(p[0] >= previous);
        previous = p[0];
    }
    CHECK(previous > 0.7);  // past w = 1 the blend overshoots the guided value
}

TEST_CASE("linear rate blending clamps negative off-diagonals and rebuilds the diagonal") {
    const ctmc::RateRow ru{1.0, 1.0, -2.0}, rc{2.0, 0.2, -2.2};
    CHECK(ctmc::guide_rate_linear(ru, rc, 0.0, 2) == ru);
    CHECK(ctmc::guide_rate_linear(ru, rc, 1.0, 2) == rc);
    CHECK(ctmc::guide_rate_linear(rc, rc, 1.9, 2) == rc);

    // (1 - 3) ru + 3 rc = (4.0, -1.4) off-diagonal -> clamp the negative one.
    const auto blended = ctmc::guide_rate_linear(ru, rc, 3.0, 2);
    CHECK(blended[0] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(blended[1] == 0.0);
    CHECK(blended[2] == doctest::Approx(-4.0).epsilon(1e-12));
}

TEST_CASE("log rate blending: endpoints exact, shared zeros stay exactly dead") {
    const ctmc::RateRow ru{0.0, 2.0, -2.0}, rc{0.0, 1.0, -1.0};
    CHECK(ctmc::guide_rate_log(ru, rc, 0.0, 2) == ru);
    CHECK(ctmc::guide_rate_log(ru, rc, 1.0, 2) == rc);

    const auto blended = ctmc::guide_rate_log(ru, rc, 0.7, 2);
    CHECK(blended[0] == 0.0);  // dead in both inputs -> dead in the blend
    CHECK(blended[1] == doctest::Approx(std::pow(1.0, 0.7) * std::pow(2.0, 0.3)).epsilon(1e-12));
    CHECK(blended[2] == doctest::Approx(-blended[1]).epsilon(1e-12));
}

TEST_CASE("with no remasking, rate-space and posterior-space log blends are proportional") {
    // From a masked state at eta = 0 the whole row is posterior * 1/(1 - t),
    // so blending rates geometrically equals blending posteriors
    // geometrically up to the normalizer of the blended posterior. Checked
    // element-wise over 1000 random systems inside a 1-second budget.
    const auto start = std::chrono::steady_clock::now();
    Rng rng(777);
    std::uniform_real_distribution<double> w_dist(0.0, 3.0), t_dist(0.05, 0.95);
    std::uniform_int_distribution<int> size_dist(2, 6);

    for (int rep = 0; rep < 1000; ++rep) {
        const int n = size_dist(rng);
        const auto pu = random_simplex(n, rng);
        const auto pc = random_simplex(n, rng);
        const double w = w_dist(rng), t = t_dist(rng);
        const int mask = n;

        const auto ru = ctmc::rate_row(pu, mask, t, 0.0);
        const auto rc = ctmc::rate_row(pc, mask, t, 0.0);
        const auto rate_blend = ctmc::guide_rate_log(ru, rc, w, mask);

        const auto posterior_blend = ctmc::guide_prob_log(pu, pc, w);
        const auto reference = ctmc::rate_row(posterior_blend, mask, t, 0.0);

        double ratio = 0.0;
        for (int a = 0; a < n; ++a) {
            REQUIRE(reference[a] > 0.0);
            const double r = rate_blend[a] / reference[a];
            if (a == 0)
                ratio = r;
            else
                CHECK(r == doctest::Approx(ratio).epsilon(1e-9));
        }
        CHECK(ratio > 0.0);
    }
    const auto elapsed = std::chrono::steady_clock::now() - start;
    CHECK(std::chrono::duration<double>(elapsed).count() < 1.0);
}

TEST_CASE("predictor correction leaves the row alone when uninformative") {
    const auto row = ctmc::rate_row({0.25, 0.5, 0.25}, 3, 0.4, 0.5);
    const std::vector<double> flat{1.0, 1.0, 1.0, 1.0};

    CHECK(ctmc::predictor_guide_rate(row, flat, 0.0, 3) == row);

    const auto same = ctmc::predictor_guide_rate(row, flat, 2.0, 3);
    for (std::size_t a = 0; a + 1 < row.size(); ++a) CHECK(same[a] == row[a]);
    CHECK(same[3] == doctest::Approx(row[3]).epsilon(1e-12));
}

TEST_CASE("predictor guidance steers the chain to the Bayes posterior") {
    // Two tokens with p = (0.6, 0.4) and an observer y with p(y|a) = 0.8,
    // p(y|b) = 0.3, hence p(y) = 0.6 and posterior p(a|y) = 0.8. Scaling the
    // unmask rates by the likelihood ratios must land the chain on it.
    const std::vector<double> p_data{0.6, 0.4};
    const std::vector<double> ratios{0.8 / 0.6, 0.3 / 0.6, 1.0};

    const auto guided = [&](ctmc::RateRow row, int current) {
        return ctmc::predictor_guide_rate(row, ratios, 1.0, current);
    };
    const auto freq = terminal_distribution(p_data, 0.0, 500, 10000, 909, guided);
    const std::vector<double> posterior{0.8, 0.2, 0.0};
    CHECK(testutil::total_variation(freq, posterior) < 0.02);
}

TEST_CASE("every produced generator row sums to zero") {
    Rng rng(55);
    std::uniform_real_distribution<double> w_dist(0.0, 3.0);
    for (int rep = 0; rep < 200; ++rep) {
        const int n = 2 + rep % 5;
        const auto pu = random_simplex(n, rng);
        const auto pc = random_simplex(n, rng);
        const double w = w_dist(rng);
        const int mask = n;

        const auto ru = ctmc::rate_row(pu, mask, 0.3, 0.7);
        const auto rc = ctmc::rate_row(pc, mask, 0.3, 0.7);
        CHECK(std::abs(row_sum(ru)) < 1e-12);
        CHECK(std::abs(row_sum(ctmc::guide_rate_linear(ru, rc, w, mask))) < 1e-12);
        CHECK(std::abs(row_sum(ctmc::guide_rate_log(ru, rc, w, mask))) < 1e-12);
        auto ratios = pc;  // any positive values work as likelihood ratios
        ratios.push_back(1.0);
        CHECK(std::abs(row_sum(ctmc::predictor_guide_rate(ru, ratios, w, mask))) < 1e-12);
    }
}

TEST_CASE("degenerate log blends fall back to the guided posterior and are counted") {
    const std::vector<double> pu{1.0, 0.0}, pc{0.0, 1.0};
    const auto before = ctmc::degenerate_guide_count();
    // w = 40 drives exp(40 log pc + -39 log pu) past the double range once the
    // floors kick in; the combiner must hand back pc instead of NaNs.
    const auto result = ctmc::guide_prob_log(pu, pc, 40.0);
    CHECK(result == pc);
    CHECK(ctmc::degenerate_guide_count() > before);
}

TEST_CASE("format names round-trip and unknown names are rejected") {
    using ctmc::GuidanceFormat;
    for (auto f : {GuidanceFormat::LinearProb, GuidanceFormat::LogProb,
                   GuidanceFormat::LinearRate, GuidanceFormat::LogRate})
        CHECK(ctmc::parse_format(ctmc::format_name(f)) == f);
    CHECK(ctmc::parse_format("log-rate") == GuidanceFormat::LogRate);
    CHECK_THROWS_AS(ctmc::parse_format("geometric"), ConfigError);
}
