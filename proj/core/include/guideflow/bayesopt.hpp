#pragma once

// Gaussian-process Bayesian optimization with expected improvement, used to
// tune guidance weights. Everything is deterministic given the seed.

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "guideflow/errors.hpp"
#include "guideflow/rng.hpp"

namespace guideflow::bayesopt {

// Squared-exponential ARD GP with observation noise. Inputs are expected in
// the unit box (the optimizer rescales); targets are standardized
// internally. Hyperparameters are refit by marginal-likelihood maximization
// on every fit() call.
class GP {
  public:
    static constexpr double kJitter = 1e-6;

    struct Hyper {
        std::vector<double> log_lengthscale;  // one per dimension
        double log_signal_var = 0.0;
        double log_noise_var = -4.0;
    };

    struct Prediction {
        double mean = 0.0;
        double var = 0.0;  // latent-function variance, noise excluded
    };

    void fit(const std::vector<std::vector<double>>& xs, const std::vector<double>& ys);
    Prediction predict(const std::vector<double>& x) const;

    const Hyper& hyper() const { return hyper_; }
    // Negative log marginal likelihood of standardized targets at h.
    double negative_log_marginal(const Hyper& h) const;

  private:
    void factorize(const Hyper& h);

    std::vector<std::vector<double>> xs_;
    std::vector<double> ys_std_;  // standardized targets
    double y_mean_ = 0.0, y_scale_ = 1.0;
    Hyper hyper_;
    std::vector<double> chol_;   // row-major lower Cholesky of K + jitter
    std::vector<double> alpha_;  // (K)^-1 y
};

// Expected improvement for minimization with exploration offset xi:
//   z = (f_best - mu - xi) / sigma,  EI = (f_best - mu - xi) Phi(z) + sigma phi(z)
// and EI = 0 when sigma = 0.
double expected_improvement(double mu, double sigma, double f_best, double xi = 0.01);

struct BOProblem {
    std::function<double(const std::vector<double>&)> objective;  // minimized
    std::vector<std::array<double, 2>> bounds;  // finite, lo < hi
    int n_initial = 10;
    int n_iterations = 40;
    std::uint64_t seed = 0;
    double xi = 0.01;
};

struct BOTrace {
    struct Row {
        int iteration = 0;  // 0-based over initial + acquisition points
        std::vector<double> x;
        double y = 0.0;
        double incumbent = 0.0;  // best y so far, nonincreasing
    };
    std::vector<Row> rows;
    std::vector<double> best_x;
    double best_y = 0.0;
};

// Latin-hypercube init, then n_iterations rounds of: refit GP, pick the EI
// maximizer over 2048 Halton candidates plus local polish around the best 5,
// evaluate, append. Throws ConfigError for bad bounds/budgets and
// ObjectiveFailure (with the offending point) when the objective throws.
BOTrace optimize(const BOProblem& problem);

// Exposed for verification.
std::vector<std::vector<double>> latin_hypercube(int count, int dims, Rng& rng);
double halton(std::uint64_t index, int base);  // in (0, 1)

// Derivative-free simplex minimizer used for hyperparameter refits and EI
// polish. Returns the best point found after max_iter reflections.
std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> x0, double step, int max_iter);

}  // namespace guideflow::bayesopt
