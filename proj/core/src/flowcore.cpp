#include "guideflow/flowcore.hpp"

namespace guideflow::flowcore {

PosteriorMeans gaussian_posterior(const GaussianCoord& g, double x, double t) {
    const double a = 1.0 - t;
    const double b = t;
    const double v = a * a + b * b * g.var;
    const double r = x - b * g.mean;
    PosteriorMeans out;
    out.x1 = g.mean + b * g.var * r / v;
    out.x0 = a * r / v;
    return out;
}

double gaussian_velocity(const GaussianCoord& g, double x, double t) {
    const auto post = gaussian_posterior(g, x, t);
    return post.x1 - post.x0;
}

double blend(double a, double b, double w) {
    if (w == 0.0 || a == b) return a;
    if (w == 1.0) return b;
    return (1.0 - w) * a + w * b;
}

void blend(const std::vector<double>& a, const std::vector<double>& b, double w,
           std::vector<double>& out) {
    if (a.size() != b.size())
        throw ShapeMismatch("blend: vector sizes differ");
    out.resize(a.size());
    if (w == 0.0) {
        out = a;
        return;
    }
    if (w == 1.0) {
        out = b;
        return;
    }
    for (std::size_t i = 0; i < a.size(); ++i)
        // a[i] == b[i] must come through unchanged: identical main and guide
        // models collapse to an exact identity, not a twice-rounded one.
        out[i] = a[i] == b[i] ? a[i] : (1.0 - w) * a[i] + w * b[i];
}

std::vector<std::uint8_t> mask_interpolate(const std::vector<std::uint8_t>& clean,
                                           std::uint8_t mask, double t, Rng& rng) {
    std::vector<std::uint8_t> out(clean.size());
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t i = 0; i < clean.size(); ++i)
        out[i] = unif(rng) < t ? clean[i] : mask;
    return out;
}

}  // namespace guideflow::flowcore
