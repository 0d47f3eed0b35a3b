#include "guideflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace guideflow::metrics {

double property_mae(const std::vector<sampler::Sample>& samples) {
    if (samples.empty()) throw EmptyInput("property_mae needs samples");
    double total = 0.0;
    for (const auto& s : samples)
        total += std::abs(toymol::property_oracle(s.mol) - s.target);
    return total / static_cast<double>(samples.size());
}

double shannon_entropy(const std::vector<std::int64_t>& counts) {
    std::int64_t total = 0;
    for (auto c : counts) total += c;
    if (total == 0) throw AllZero("entropy of all-zero counts");
    double h = 0.0;
    for (auto c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log2(p);
    }
    return h;
}

double uniqueness(const std::vector<sampler::Sample>& samples) {
    if (samples.empty()) throw EmptyInput("uniqueness needs samples");
    std::set<std::string> keys;
    for (const auto& s : samples)
        if (toymol::is_valid(s.mol)) keys.insert(toymol::canonical_key(s.mol));
    return static_cast<double>(keys.size()) / static_cast<double>(samples.size());
}

double radar_scale(double value, double lo, double hi, bool higher_better) {
    if (!(hi > lo)) throw DegenerateRange("radar_scale needs hi > lo");
    double unit = (value - lo) / (hi - lo);
    unit = std::clamp(unit, 0.0, 1.0);
    return higher_better ? unit : 1.0 - unit;
}

MetricReport evaluate(const std::vector<sampler::Sample>& samples, double sampling_seconds) {
    if (samples.empty()) throw EmptyInput("evaluate needs samples");
    MetricReport r;
    r.sampling_seconds = sampling_seconds;
    r.property_mae = property_mae(samples);

    std::int64_t stable = 0, valid = 0;
    std::vector<std::int64_t> bond_counts(3, 0);     // orders 1..3; absent bonds excluded
    std::vector<std::int64_t> element_counts(toymol::kNumAtomTypes, 0);
    std::set<std::string> unique_valid;
    bool any_bond = false;
    for (const auto& s : samples) {
        const auto& mol = s.mol;
        const bool ok = toymol::is_valid(mol);
        stable += toymol::molecule_stability(mol).molecule_stable;
        valid += ok;
        if (ok) unique_valid.insert(toymol::canonical_key(mol));
        for (int a = 0; a < mol.n_atoms; ++a) ++element_counts[mol.atom_types[a]];
        for (auto b : mol.bond_orders)
            if (b > 0) {
                ++bond_counts[b - 1];
                any_bond = true;
            }
    }
    const double count = static_cast<double>(samples.size());
    r.molecule_stability_ratio = static_cast<double>(stable) / count;
    r.validity_ratio = static_cast<double>(valid) / count;
    r.valid_and_unique_ratio = static_cast<double>(unique_valid.size()) / count;
    r.bond_entropy = any_bond ? shannon_entropy(bond_counts) : 0.0;
    r.element_entropy = shannon_entropy(element_counts);
    return r;
}

}  // namespace guideflow::metrics
