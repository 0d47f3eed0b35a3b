#pragma once

// Continuous flow core: linear interpolant paths, the closed-form velocity
// field for diagonal-Gaussian endpoints, guidance blending and the Euler time
// grid shared by both modalities.

#include <cstdint>
#include <vector>

#include "guideflow/errors.hpp"
#include "guideflow/rng.hpp"

namespace guideflow::flowcore {

// x_t = (1 - t) * x0 + t * x1.
inline double interpolate(double x0, double x1, double t) {
    return (1.0 - t) * x0 + t * x1;
}

// Evenly spaced left-endpoint grid: t_k = k / steps, k = 0..steps-1,
// dt = 1 / steps. Discrete-rate factors 1/(1-t) stay finite because the grid
// never reaches 1.
struct TimeGrid {
    int steps = 100;
    double dt() const { return 1.0 / steps; }
    double t(int k) const { return static_cast<double>(k) / steps; }
};

// Diagonal-Gaussian endpoint model per coordinate: x1 ~ N(mean, var),
// x0 ~ N(0, 1) independent. Everything below is exact.
struct GaussianCoord {
    double mean = 0.0;
    double var = 1.0;
};

// Posterior means given x_t = (1-t) x0 + t x1:
//   v        = (1-t)^2 + t^2 var
//   E[x1|xt] = mean + t var (x - t mean) / v
//   E[x0|xt] = (1-t) (x - t mean) / v
struct PosteriorMeans {
    double x1 = 0.0;
    double x0 = 0.0;
};
PosteriorMeans gaussian_posterior(const GaussianCoord& g, double x, double t);

// u(x, t) = E[x1|xt] - E[x0|xt]; the marginal velocity of the linear path.
double gaussian_velocity(const GaussianCoord& g, double x, double t);

// Guidance blend u = (1 - w) * a + w * b with bit-exact endpoints:
// w == 0 returns a unchanged, w == 1 returns b unchanged, and equal inputs
// pass through unchanged for every w.
double blend(double a, double b, double w);
void blend(const std::vector<double>& a, const std::vector<double>& b, double w,
           std::vector<double>& out);

// One Euler step x <- x + u * dt.
inline double euler_step(double x, double u, double dt) { return x + u * dt; }

// Masking-process marginal: each clean token survives with probability t and
// becomes `mask` with probability 1 - t, independently.
std::vector<std::uint8_t> mask_interpolate(const std::vector<std::uint8_t>& clean,
                                           std::uint8_t mask, double t, Rng& rng);

}  // namespace guideflow::flowcore
