#include "guideflow/ctmc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace guideflow::ctmc {

const char* format_name(GuidanceFormat f) {
    switch (f) {
        case GuidanceFormat::LinearProb: return "linear_prob";
        case GuidanceFormat::LogProb: return "log_prob";
        case GuidanceFormat::LinearRate: return "linear_rate";
        case GuidanceFormat::LogRate: return "log_rate";
    }
    return "?";
}

GuidanceFormat parse_format(const std::string& name) {
    std::string key = name;
    std::replace(key.begin(), key.end(), '-', '_');
    if (key == "linear_prob") return GuidanceFormat::LinearProb;
    if (key == "log_prob") return GuidanceFormat::LogProb;
    if (key == "linear_rate") return GuidanceFormat::LinearRate;
    if (key == "log_rate") return GuidanceFormat::LogRate;
    throw ConfigError("unknown guidance format: " + name);
}

RateRow rate_row(const std::vector<double>& posterior, int current, double t, double eta) {
    if (t >= 1.0) throw ConfigError("rate_row requires t < 1");
    const int mask = static_cast<int>(posterior.size());
    RateRow row(posterior.size() + 1, 0.0);
    double total = 0.0;
    if (current == mask) {
        const double factor = (1.0 + eta * t) / (1.0 - t);
        for (int a = 0; a < mask; ++a) {
            row[a] = posterior[a] * factor;
            total += row[a];
        }
    } else {
        row[mask] = eta;
        total = eta;
    }
    row[current] = -total;
    return row;
}

std::vector<double> transition_probs(const RateRow& row, int current, double dt) {
    std::vector<double> probs(row.size(), 0.0);
    double total = 0.0;
    for (std::size_t a = 0; a < row.size(); ++a) {
        const double p = (static_cast<int>(a) == current ? 1.0 : 0.0) + row[a] * dt;
        probs[a] = p > 0.0 ? p : 0.0;
        total += probs[a];
    }
    if (total <= 0.0) {
        // Degenerate after clamping; stay put.
        std::fill(probs.begin(), probs.end(), 0.0);
        probs[current] = 1.0;
        return probs;
    }
    for (auto& p : probs) p /= total;
    return probs;
}

int sample_transition(const RateRow& row, int current, double dt, Rng& rng) {
    const auto probs = transition_probs(row, current, dt);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double u = unif(rng);
    for (std::size_t a = 0; a < probs.size(); ++a) {
        u -= probs[a];
        if (u < 0.0) return static_cast<int>(a);
    }
    return static_cast<int>(probs.size()) - 1;
}

namespace {

std::atomic<std::uint64_t> g_degenerate_count{0};

void renormalize(std::vector<double>& p, const std::vector<double>& fallback) {
    double total = 0.0;
    for (double v : p) total += v;
    if (total <= 0.0 || !std::isfinite(total)) {
        // All mass clamped away (or blown past the floating-point range by an
        // extreme weight); keep the conditional input and count the event.
        g_degenerate_count.fetch_add(1, std::memory_order_relaxed);
        p = fallback;
        return;
    }
    for (auto& v : p) v /= total;
}

}  // namespace

std::uint64_t degenerate_guide_count() {
    return g_degenerate_count.load(std::memory_order_relaxed);
}

std::vector<double> guide_prob_linear(const std::vector<double>& pu,
                                      const std::vector<double>& pc, double w) {
    if (pu.size() != pc.size()) throw ShapeMismatch("guide_prob: sizes differ");
    if (w == 0.0) return pu;
    if (w == 1.0 || pu == pc) return pc;
    std::vector<double> out(pu.size());
    for (std::size_t a = 0; a < out.size(); ++a) {
        const double v = (1.0 - w) * pu[a] + w * pc[a];
        out[a] = v > 0.0 ? v : 0.0;
    }
    renormalize(out, pc);
    return out;
}

std::vector<double> guide_prob_log(const std::vector<double>& pu,
                                   const std::vector<double>& pc, double w) {
    if (pu.size() != pc.size()) throw ShapeMismatch("guide_prob: sizes differ");
    if (w == 0.0) return pu;
    if (w == 1.0 || pu == pc) return pc;
    std::vector<double> out(pu.size());
    for (std::size_t a = 0; a < out.size(); ++a) {
        const double lu = std::log(std::max(pu[a], kProbFloor));
        const double lc = std::log(std::max(pc[a], kProbFloor));
        out[a] = std::exp((1.0 - w) * lu + w * lc);
    }
    renormalize(out, pc);
    return out;
}

namespace {

// Shared skeleton: combine off-diagonals, clamp to a valid row, rebuild the
// diagonal.
template <typename Combine>
RateRow guide_rate_impl(const RateRow& ru, const RateRow& rc, double w, int current,
                        Combine&& combine) {
    if (ru.size() != rc.size()) throw ShapeMismatch("guide_rate: sizes differ");
    if (w == 0.0) return ru;
    if (w == 1.0 || ru == rc) return rc;
    RateRow out(ru.size(), 0.0);
    double total = 0.0;
    for (std::size_t a = 0; a < out.size(); ++a) {
        if (static_cast<int>(a) == current) continue;
        const double v = combine(ru[a], rc[a]);
        out[a] = v > 0.0 ? v : 0.0;
        total += out[a];
    }
    out[current] = -total;
    return out;
}

}  // namespace

RateRow guide_rate_linear(const RateRow& ru, const RateRow& rc, double w, int current) {
    return guide_rate_impl(ru, rc, w, current, [w](double u, double c) {
        return (1.0 - w) * u + w * c;
    });
}

RateRow guide_rate_log(const RateRow& ru, const RateRow& rc, double w, int current) {
    return guide_rate_impl(ru, rc, w, current, [w](double u, double c) {
        if (u <= 0.0 && c <= 0.0) return 0.0;  // shared dead transition stays dead
        const double fu = std::max(u, kProbFloor);
        const double fc = std::max(c, kProbFloor);
        return std::pow(fc, w) * std::pow(fu, 1.0 - w);
    });
}

RateRow predictor_guide_rate(const RateRow& row, const std::vector<double>& ratios, double w,
                             int current) {
    if (row.size() != ratios.size()) throw ShapeMismatch("predictor_guide_rate: sizes differ");
    if (w == 0.0) return row;
    RateRow out(row.size(), 0.0);
    double total = 0.0;
    for (std::size_t a = 0; a < out.size(); ++a) {
        if (static_cast<int>(a) == current) continue;
        out[a] = std::pow(std::max(ratios[a], kProbFloor), w) * row[a];
        total += out[a];
    }
    out[current] = -total;
    return out;
}

}  // namespace guideflow::ctmc
