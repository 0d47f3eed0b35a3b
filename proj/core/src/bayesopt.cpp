#include "guideflow/bayesopt.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

namespace guideflow::bayesopt {

namespace {

double sq(double v) { return v * v; }

double kernel(const std::vector<double>& a, const std::vector<double>& b,
              const GP::Hyper& h) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        d2 += sq((a[i] - b[i]) / std::exp(h.log_lengthscale[i]));
    return std::exp(h.log_signal_var) * std::exp(-0.5 * d2);
}

Eigen::MatrixXd gram(const std::vector<std::vector<double>>& xs, const GP::Hyper& h) {
    const int n = static_cast<int>(xs.size());
    Eigen::MatrixXd k(n, n);
    const double noise = std::exp(h.log_noise_var) + GP::kJitter;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            const double v = kernel(xs[i], xs[j], h);
            k(i, j) = v;
            k(j, i) = v;
        }
        k(i, i) += noise;
    }
    return k;
}

}  // namespace

double GP::negative_log_marginal(const Hyper& h) const {
    const int n = static_cast<int>(xs_.size());
    const Eigen::MatrixXd k = gram(xs_, h);
    const Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(ys_std_.data(), n);
    const Eigen::VectorXd alpha = llt.solve(y);
    double logdet = 0.0;
    for (int i = 0; i < n; ++i) logdet += std::log(llt.matrixL()(i, i));
    return 0.5 * y.dot(alpha) + logdet + 0.5 * n * std::log(2.0 * std::numbers::pi);
}

void GP::factorize(const Hyper& h) {
    const int n = static_cast<int>(xs_.size());
    const Eigen::MatrixXd k = gram(xs_, h);
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    const Eigen::MatrixXd l = llt.matrixL();
    chol_.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) chol_[static_cast<std::size_t>(i) * n + j] = l(i, j);
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(ys_std_.data(), n);
    const Eigen::VectorXd a = llt.solve(y);
    alpha_.assign(a.data(), a.data() + n);
}

void GP::fit(const std::vector<std::vector<double>>& xs, const std::vector<double>& ys) {
    if (xs.empty() || xs.size() != ys.size()) throw ShapeMismatch("GP fit: xs/ys sizes");
    const std::size_t dims = xs[0].size();
    for (const auto& x : xs)
        if (x.size() != dims) throw ShapeMismatch("GP fit: ragged inputs");
    xs_ = xs;

    y_mean_ = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
    double var = 0.0;
    for (double y : ys) var += sq(y - y_mean_);
    var /= static_cast<double>(ys.size());
    y_scale_ = var > 0.0 ? std::sqrt(var) : 1.0;
    ys_std_.resize(ys.size());
    for (std::size_t i = 0; i < ys.size(); ++i) ys_std_[i] = (ys[i] - y_mean_) / y_scale_;

    // ML-II refit from the previous optimum (warm start) and a default point.
    Hyper start = hyper_;
    if (start.log_lengthscale.size() != dims) {
        start.log_lengthscale.assign(dims, std::log(0.3));
        start.log_signal_var = 0.0;
        start.log_noise_var = -4.0;
    }
    auto pack = [dims](const Hyper& h) {
        std::vector<double> v(h.log_lengthscale);
        v.push_back(h.log_signal_var);
        v.push_back(h.log_noise_var);
        return v;
    };
    auto unpack = [dims](const std::vector<double>& v) {
        Hyper h;
        h.log_lengthscale.assign(v.begin(), v.begin() + dims);
        h.log_signal_var = v[dims];
        h.log_noise_var = v[dims + 1];
        return h;
    };
    auto objective = [this, &unpack](const std::vector<double>& v) {
        Hyper h = unpack(v);
        for (double& l : h.log_lengthscale) l = std::clamp(l, std::log(1e-3), std::log(10.0));
        h.log_signal_var = std::clamp(h.log_signal_var, std::log(1e-4), std::log(100.0));
        h.log_noise_var = std::clamp(h.log_noise_var, std::log(1e-8), std::log(1.0));
        return negative_log_marginal(h);
    };

    std::vector<double> best = nelder_mead(objective, pack(start), 0.3, 150);
    Hyper defaults;
    defaults.log_lengthscale.assign(dims, std::log(0.3));
    const std::vector<double> alt = nelder_mead(objective, pack(defaults), 0.3, 150);
    if (objective(alt) < objective(best)) best = alt;

    hyper_ = unpack(best);
    for (double& l : hyper_.log_lengthscale)
        l = std::clamp(l, std::log(1e-3), std::log(10.0));
    hyper_.log_signal_var = std::clamp(hyper_.log_signal_var, std::log(1e-4), std::log(100.0));
    hyper_.log_noise_var = std::clamp(hyper_.log_noise_var, std::log(1e-8), std::log(1.0));
    factorize(hyper_);
}

GP::Prediction GP::predict(const std::vector<double>& x) const {
    const int n = static_cast<int>(xs_.size());
    if (n == 0) throw EmptyInput("GP predict before fit");
    Eigen::VectorXd ks(n);
    for (int i = 0; i < n; ++i) ks(i) = kernel(xs_[i], x, hyper_);
    double mean_std = 0.0;
    for (int i = 0; i < n; ++i) mean_std += ks(i) * alpha_[i];

    // v = L^-1 ks by forward substitution on the stored lower factor.
    Eigen::VectorXd v = ks;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < i; ++j) v(i) -= chol_[static_cast<std::size_t>(i) * n + j] * v(j);
        v(i) /= chol_[static_cast<std::size_t>(i) * n + i];
    }
    const double prior = kernel(x, x, hyper_);
    const double var_std = std::max(prior - v.squaredNorm(), 0.0);

    Prediction p;
    p.mean = y_mean_ + y_scale_ * mean_std;
    p.var = y_scale_ * y_scale_ * var_std;
    return p;
}

double expected_improvement(double mu, double sigma, double f_best, double xi) {
    if (!(sigma > 0.0)) return 0.0;
    const double gap = f_best - mu - xi;
    const double z = gap / sigma;
    const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    return std::max(gap * cdf + sigma * phi, 0.0);
}

std::vector<std::vector<double>> latin_hypercube(int count, int dims, Rng& rng) {
    if (count <= 0 || dims <= 0) throw ConfigError("latin_hypercube needs positive sizes");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::vector<double>> points(count, std::vector<double>(dims));
    std::vector<int> perm(count);
    for (int d = 0; d < dims; ++d) {
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        for (int i = 0; i < count; ++i)
            points[i][d] = (perm[i] + unif(rng)) / static_cast<double>(count);
    }
    return points;
}

double halton(std::uint64_t index, int base) {
    double f = 1.0, r = 0.0;
    for (std::uint64_t i = index + 1; i > 0; i /= base) {
        f /= base;
        r += f * static_cast<double>(i % base);
    }
    return r;
}

std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> x0, double step, int max_iter) {
    const int dims = static_cast<int>(x0.size());
    std::vector<std::vector<double>> simplex{x0};
    for (int d = 0; d < dims; ++d) {
        auto v = x0;
        v[d] += step;
        simplex.push_back(std::move(v));
    }
    std::vector<double> values(simplex.size());
    for (std::size_t i = 0; i < simplex.size(); ++i) values[i] = f(simplex[i]);

    std::vector<std::size_t> order(simplex.size());
    auto sort_simplex = [&] {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    };
    std::vector<double> centroid(dims), trial(dims), trial2(dims);

    for (int iter = 0; iter < max_iter; ++iter) {
        sort_simplex();
        const std::size_t worst = order.back();
        const std::size_t best = order.front();
        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t i : order)
            if (i != worst)
                for (int d = 0; d < dims; ++d) centroid[d] += simplex[i][d];
        for (double& c : centroid) c /= dims;

        auto along = [&](double coef, std::vector<double>& out) {
            for (int d = 0; d < dims; ++d)
                out[d] = centroid[d] + coef * (simplex[worst][d] - centroid[d]);
        };
        along(-1.0, trial);  // reflection
        const double fr = f(trial);
        if (fr < values[best]) {
            along(-2.0, trial2);  // expansion
            const double fe = f(trial2);
            if (fe < fr) {
                simplex[worst] = trial2;
                values[worst] = fe;
            } else {
                simplex[worst] = trial;
                values[worst] = fr;
            }
            continue;
        }
        const std::size_t second_worst = order[order.size() - 2];
        if (fr < values[second_worst]) {
            simplex[worst] = trial;
            values[worst] = fr;
            continue;
        }
        along(0.5, trial2);  // contraction
        const double fc = f(trial2);
        if (fc < values[worst]) {
            simplex[worst] = trial2;
            values[worst] = fc;
            continue;
        }
        for (std::size_t i : order) {  // shrink toward the best vertex
            if (i == best) continue;
            for (int d = 0; d < dims; ++d)
                simplex[i][d] = simplex[best][d] + 0.5 * (simplex[i][d] - simplex[best][d]);
            values[i] = f(simplex[i]);
        }
    }
    sort_simplex();
    return simplex[order.front()];
}

namespace {

std::string point_text(const std::vector<double>& x) {
    std::string s = "(";
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(x[i]);
    }
    return s + ")";
}

}  // namespace

BOTrace optimize(const BOProblem& problem) {
    if (!problem.objective) throw ConfigError("optimize needs an objective");
    if (problem.bounds.empty()) throw ConfigError("optimize needs bounds");
    for (const auto& b : problem.bounds)
        if (!(b[0] < b[1]) || !std::isfinite(b[0]) || !std::isfinite(b[1]))
            throw ConfigError("optimize bounds must be finite with lo < hi");
    if (problem.n_initial < 2 || problem.n_iterations < 0)
        throw ConfigError("optimize needs n_initial >= 2 and n_iterations >= 0");

    const int dims = static_cast<int>(problem.bounds.size());
    auto to_box = [&](const std::vector<double>& unit) {
        std::vector<double> x(dims);
        for (int d = 0; d < dims; ++d)
            x[d] = problem.bounds[d][0] + unit[d] * (problem.bounds[d][1] - problem.bounds[d][0]);
        return x;
    };
    auto eval = [&](const std::vector<double>& unit) {
        const auto x = to_box(unit);
        try {
            return problem.objective(x);
        } catch (const std::exception& e) {
            throw ObjectiveFailure("objective failed at " + point_text(x) + ": " + e.what());
        }
    };

    BOTrace trace;
    std::vector<std::vector<double>> units;
    std::vector<double> ys;
    auto record = [&](std::vector<double> unit, double y) {
        BOTrace::Row row;
        row.iteration = static_cast<int>(units.size());
        row.x = to_box(unit);
        row.y = y;
        row.incumbent = trace.rows.empty() ? y : std::min(y, trace.rows.back().incumbent);
        trace.rows.push_back(std::move(row));
        units.push_back(std::move(unit));
        ys.push_back(y);
    };

    // Large substream index: objectives that sample internally use small
    // per-item indices off the same seed, and those streams must not collide
    // with the optimizer's own draws.
    Rng rng = substream(problem.seed, 0xb05eed5eedb05eedull);
    for (auto& unit : latin_hypercube(problem.n_initial, dims, rng)) {
        const double y = eval(unit);
        record(std::move(unit), y);
    }

    constexpr int kHaltonBases[] = {2, 3, 5, 7, 11, 13};
    constexpr int kCandidates = 2048;
    GP gp;
    for (int iter = 0; iter < problem.n_iterations; ++iter) {
        gp.fit(units, ys);
        const double f_best = *std::min_element(ys.begin(), ys.end());

        auto neg_ei = [&](const std::vector<double>& unit) {
            for (double v : unit)
                if (v < 0.0 || v > 1.0) return 0.0;  // outside the box: worthless
            const auto p = gp.predict(unit);
            return -expected_improvement(p.mean, std::sqrt(p.var), f_best, problem.xi);
        };

        // Deterministic low-discrepancy scan, offset per iteration so
        // successive rounds do not reuse the same grid.
        std::vector<std::pair<double, std::vector<double>>> scored;
        scored.reserve(kCandidates);
        std::vector<double> unit(dims);
        for (int c = 0; c < kCandidates; ++c) {
            const std::uint64_t idx =
                static_cast<std::uint64_t>(c) + static_cast<std::uint64_t>(iter) * kCandidates;
            for (int d = 0; d < dims; ++d) unit[d] = halton(idx, kHaltonBases[d]);
            scored.emplace_back(neg_ei(unit), unit);
        }
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });

        std::vector<double> pick = scored.front().second;
        double pick_score = scored.front().first;
        for (int s = 0; s < 5 && s < static_cast<int>(scored.size()); ++s) {
            auto polished = nelder_mead(neg_ei, scored[s].second, 0.05, 60);
            for (double& v : polished) v = std::clamp(v, 0.0, 1.0);
            const double score = neg_ei(polished);
            if (score < pick_score) {
                pick_score = score;
                pick = polished;
            }
        }
        // EI can be flat to machine precision once the model is confident;
        // fall back to an unexplored quasi-random point to keep probing.
        if (pick_score == 0.0) {
            for (int d = 0; d < dims; ++d)
                pick[d] = halton(static_cast<std::uint64_t>(units.size()) +
                                     31 * static_cast<std::uint64_t>(iter),
                                 kHaltonBases[d]);
        }
        const double y = eval(pick);
        record(std::move(pick), y);
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < ys.size(); ++i)
        if (ys[i] < ys[best]) best = i;
    trace.best_x = to_box(units[best]);
    trace.best_y = ys[best];
    return trace;
}

}  // namespace guideflow::bayesopt
