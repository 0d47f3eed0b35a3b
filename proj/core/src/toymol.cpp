#include "guideflow/toymol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

namespace guideflow::toymol {

void center_positions(std::vector<Vec3>& positions) {
    if (positions.empty()) return;
    Vec3 c{0.0, 0.0, 0.0};
    for (const auto& p : positions)
        for (int a = 0; a < 3; ++a) c[a] += p[a];
    for (int a = 0; a < 3; ++a) c[a] /= static_cast<double>(positions.size());
    for (auto& p : positions)
        for (int a = 0; a < 3; ++a) p[a] -= c[a];
}

void validate_invariants(const ToyMolecule& mol) {
    const int n = mol.n_atoms;
    if (n < kMinAtoms || n > kMaxAtoms)
        throw ConstructionFailure("n_atoms out of [2, 9]: " + std::to_string(n));
    const auto expect = [](std::size_t got, std::size_t want, const char* what) {
        if (got != want)
            throw ShapeMismatch(std::string(what) + ": have " + std::to_string(got) +
                                ", expected " + std::to_string(want));
    };
    expect(mol.atom_types.size(), static_cast<std::size_t>(n), "atom_types length");
    expect(mol.charges.size(), static_cast<std::size_t>(n), "charges length");
    expect(mol.bond_orders.size(), static_cast<std::size_t>(n * (n - 1) / 2),
           "bond_orders length");
    expect(mol.positions.size(), static_cast<std::size_t>(n), "positions length");
    for (int i = 0; i < n; ++i) {
        if (mol.atom_types[i] >= kNumAtomTypes)
            throw ConstructionFailure("atom type out of alphabet");
        if (mol.charges[i] < -1 || mol.charges[i] > 1)
            throw ConstructionFailure("charge outside {-1, 0, +1}");
    }
    for (auto b : mol.bond_orders)
        if (b >= kNumBondOrders) throw ConstructionFailure("bond order outside {0..3}");
    Vec3 c{0.0, 0.0, 0.0};
    for (const auto& p : mol.positions)
        for (int a = 0; a < 3; ++a) c[a] += p[a];
    for (int a = 0; a < 3; ++a)
        if (std::abs(c[a] / n) > 1e-9)
            throw ConstructionFailure("positions are not centered");
}

double property_oracle(const ToyMolecule& mol) {
    const auto& vt = valence_table();
    const int n = mol.n_atoms;
    double qbar = 0.0;
    for (int i = 0; i < n; ++i)
        qbar += vt.electronegativity[mol.atom_types[i]] + mol.charges[i];
    qbar /= n;
    Vec3 dip{0.0, 0.0, 0.0};
    for (int i = 0; i < n; ++i) {
        const double q = vt.electronegativity[mol.atom_types[i]] + mol.charges[i] - qbar;
        for (int a = 0; a < 3; ++a) dip[a] += q * mol.positions[i][a];
    }
    double bond_sum = 0.0;
    for (auto b : mol.bond_orders) bond_sum += b;
    const double dip_norm = std::sqrt(dip[0] * dip[0] + dip[1] * dip[1] + dip[2] * dip[2]);
    return dip_norm + 0.1 * bond_sum + 0.05 * n;
}

StabilityResult molecule_stability(const ToyMolecule& mol) {
    const auto& vt = valence_table();
    StabilityResult res;
    res.per_atom_stable.resize(mol.n_atoms);
    bool all = true;
    int net = 0;
    for (int i = 0; i < mol.n_atoms; ++i) {
        const int want = vt.base_valence[mol.atom_types[i]] + mol.charges[i];
        const bool ok = mol.valence(i) == want;
        res.per_atom_stable[i] = ok;
        all = all && ok;
        net += mol.charges[i];
    }
    res.molecule_stable = all && net == 0;
    return res;
}

namespace {

bool connected(const ToyMolecule& mol) {
    const int n = mol.n_atoms;
    std::vector<int> stack{0};
    std::vector<bool> seen(n, false);
    seen[0] = true;
    int reached = 1;
    while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        for (int j = 0; j < n; ++j) {
            if (j == i || seen[j] || mol.bond(i, j) == 0) continue;
            seen[j] = true;
            ++reached;
            stack.push_back(j);
        }
    }
    return reached == n;
}

}  // namespace

bool is_valid(const ToyMolecule& mol) {
    return molecule_stability(mol).molecule_stable && connected(mol);
}

// ---- canonical labeling -----------------------------------------------------

namespace {

// One refinement pass: new color = rank of (old color, sorted multiset of
// (bond order, neighbor color) over ALL other atoms). Including zero-order
// pairs keeps non-adjacency information in the signature.
std::vector<int> refine(const ToyMolecule& mol, std::vector<int> colors) {
    const int n = mol.n_atoms;
    while (true) {
        std::vector<std::vector<int>> sig(n);
        for (int i = 0; i < n; ++i) {
            sig[i].push_back(colors[i]);
            std::vector<std::pair<int, int>> nb;
            nb.reserve(n - 1);
            for (int j = 0; j < n; ++j)
                if (j != i) nb.emplace_back(mol.bond(i, j), colors[j]);
            std::sort(nb.begin(), nb.end());
            for (const auto& [b, c] : nb) {
                sig[i].push_back(b);
                sig[i].push_back(c);
            }
        }
        std::vector<std::vector<int>> sorted = sig;
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        std::vector<int> next(n);
        for (int i = 0; i < n; ++i)
            next[i] = static_cast<int>(
                std::lower_bound(sorted.begin(), sorted.end(), sig[i]) - sorted.begin());
        if (next == colors) return colors;
        colors = std::move(next);
    }
}

int color_classes(const std::vector<int>& colors) {
    return static_cast<int>(std::set<int>(colors.begin(), colors.end()).size());
}

std::vector<int> order_from_colors(const std::vector<int>& colors) {
    std::vector<int> order(colors.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return colors[a] < colors[b]; });
    return order;
}

std::string key_for_order(const ToyMolecule& mol, const std::vector<int>& order) {
    static constexpr char kType[] = "XYZW";
    static constexpr char kCharge[] = "-0+";
    const int n = mol.n_atoms;
    std::string key;
    key.reserve(4 + 2 * n + n * (n - 1) / 2);
    key.push_back(static_cast<char>('0' + n));
    key.push_back('|');
    for (int r = 0; r < n; ++r) key.push_back(kType[mol.atom_types[order[r]]]);
    key.push_back('|');
    for (int r = 0; r < n; ++r) key.push_back(kCharge[mol.charges[order[r]] + 1]);
    key.push_back('|');
    for (int r = 0; r < n; ++r)
        for (int s = r + 1; s < n; ++s)
            key.push_back(static_cast<char>('0' + mol.bond(order[r], order[s])));
    return key;
}

// Individualization-refinement search over the automorphism-candidate tree,
// keeping the lexicographically smallest key.
void search(const ToyMolecule& mol, std::vector<int> colors, std::string& best_key,
            std::vector<int>& best_order) {
    colors = refine(mol, colors);
    const int n = mol.n_atoms;
    if (color_classes(colors) == n) {
        auto order = order_from_colors(colors);
        auto key = key_for_order(mol, order);
        if (best_key.empty() || key < best_key) {
            best_key = std::move(key);
            best_order = std::move(order);
        }
        return;
    }
    // Smallest non-singleton color class.
    std::map<int, std::vector<int>> classes;
    for (int i = 0; i < n; ++i) classes[colors[i]].push_back(i);
    for (const auto& [color, members] : classes) {
        if (members.size() < 2) continue;
        for (int m : members) {
            auto branched = colors;
            for (int i = 0; i < n; ++i) branched[i] *= 2;
            branched[m] -= 1;  // unique smallest color within the class
            search(mol, std::move(branched), best_key, best_order);
        }
        break;
    }
}

}  // namespace

std::vector<int> canonical_order(const ToyMolecule& mol) {
    std::vector<int> init(mol.n_atoms);
    for (int i = 0; i < mol.n_atoms; ++i)
        init[i] = static_cast<int>(mol.atom_types[i]) * 3 + (mol.charges[i] + 1);
    std::string best_key;
    std::vector<int> best_order;
    search(mol, std::move(init), best_key, best_order);
    return best_order;
}

std::string canonical_key(const ToyMolecule& mol) {
    return key_for_order(mol, canonical_order(mol));
}

ToyMolecule permute_atoms(const ToyMolecule& mol, const std::vector<int>& perm) {
    const int n = mol.n_atoms;
    ToyMolecule out;
    out.n_atoms = n;
    out.atom_types.resize(n);
    out.charges.resize(n);
    out.positions.resize(n);
    out.bond_orders.assign(static_cast<std::size_t>(n * (n - 1) / 2), 0);
    for (int r = 0; r < n; ++r) {
        out.atom_types[r] = mol.atom_types[perm[r]];
        out.charges[r] = mol.charges[perm[r]];
        out.positions[r] = mol.positions[perm[r]];
    }
    for (int r = 0; r < n; ++r)
        for (int s = r + 1; s < n; ++s)
            out.set_bond(r, s, mol.bond(perm[r], perm[s]));
    return out;
}

// ---- dataset ----------------------------------------------------------------

int Dataset::property_bin(double value) const {
    // Interior edges are bin_edges[1..15]; outside values clamp to end bins.
    int lo = 0, hi = kNumPropertyBins - 1;
    while (lo < hi) {
        const int mid = (lo + hi) / 2;
        if (value < bin_edges[mid + 1])
            hi = mid;
        else
            lo = mid + 1;
    }
    return lo;
}

void Dataset::finalize() {
    const auto count = molecules.size();
    if (count == 0) throw EmptyDataset("finalize on empty dataset");
    properties.resize(count);
    for (std::size_t i = 0; i < count; ++i) properties[i] = property_oracle(molecules[i]);

    std::vector<double> sorted = properties;
    std::sort(sorted.begin(), sorted.end());
    std::array<double, kNumPropertyBins + 1> edges{};
    edges[0] = sorted.front();
    edges[kNumPropertyBins] = sorted.back();
    for (int k = 1; k < kNumPropertyBins; ++k)
        edges[k] = sorted[count * static_cast<std::size_t>(k) / kNumPropertyBins];
    finalize_with_edges(edges);
}

void Dataset::finalize_with_edges(const std::array<double, kNumPropertyBins + 1>& edges) {
    const auto count = molecules.size();
    if (count == 0) throw EmptyDataset("finalize on empty dataset");
    properties.resize(count);
    for (std::size_t i = 0; i < count; ++i) properties[i] = property_oracle(molecules[i]);
    bin_edges = edges;

    joint_nc.assign(kMaxAtoms - kMinAtoms + 1, {});
    bin_of.resize(count);
    for (auto& v : by_n) v.clear();
    for (auto& row : by_n_bin)
        for (auto& v : row) v.clear();

    canonical.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto& mol = molecules[i];
        const int b = property_bin(properties[i]);
        bin_of[i] = b;
        joint_nc[mol.n_atoms - kMinAtoms][b] += 1;
        by_n[mol.n_atoms].push_back(static_cast<int>(i));
        by_n_bin[mol.n_atoms][b].push_back(static_cast<int>(i));

        const auto order = canonical_order(mol);
        const auto canon = permute_atoms(mol, order);
        auto& view = canonical[i];
        view.atoms = canon.atom_types;
        view.charges.resize(canon.n_atoms);
        for (int a = 0; a < canon.n_atoms; ++a)
            view.charges[a] = static_cast<std::uint8_t>(canon.charges[a] + 1);
        view.bonds = canon.bond_orders;
        view.positions = canon.positions;
    }
}

std::vector<std::uint8_t> coded_tokens(const ToyMolecule& mol, Modality m) {
    switch (m) {
        case Modality::Atoms:
            return mol.atom_types;
        case Modality::Charges: {
            std::vector<std::uint8_t> out(mol.charges.size());
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = static_cast<std::uint8_t>(mol.charges[i] + 1);
            return out;
        }
        case Modality::Bonds:
            return mol.bond_orders;
    }
    return {};
}

// ---- generation -------------------------------------------------------------

namespace {

// One constructive attempt: charges with zero sum and positive target
// valence, spanning tree under capacity, then greedy capacity pairing that
// upgrades bond orders. Returns false when the draw paints itself into a
// corner; the caller retries.
bool try_build(ToyMolecule& mol, int n, Rng& rng) {
    const auto& vt = valence_table();
    std::uniform_int_distribution<int> type_dist(0, kNumAtomTypes - 1);
    mol = ToyMolecule{};
    mol.n_atoms = n;
    mol.atom_types.resize(n);
    mol.charges.assign(n, 0);
    mol.bond_orders.assign(static_cast<std::size_t>(n * (n - 1) / 2), 0);
    for (int i = 0; i < n; ++i) mol.atom_types[i] = static_cast<std::uint8_t>(type_dist(rng));

    // Charge pairs (+1, -1) on distinct atoms keep the net charge zero.
    std::uniform_int_distribution<int> npairs_dist(0, std::min(2, n / 2));
    const int npairs = npairs_dist(rng);
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int p = 0; p < npairs; ++p) {
        mol.charges[idx[2 * p]] = +1;
        mol.charges[idx[2 * p + 1]] = -1;
    }

    std::vector<int> target(n);
    int total = 0;
    for (int i = 0; i < n; ++i) {
        target[i] = vt.base_valence[mol.atom_types[i]] + mol.charges[i];
        if (target[i] < 1 || target[i] > 3 * (n - 1)) return false;
        total += target[i];
    }
    if (total % 2 != 0 || total < 2 * (n - 1)) return false;

    // Spanning tree: each new atom bonds to an earlier one with spare
    // capacity.
    std::vector<int> cap = target;
    for (int i = 1; i < n; ++i) {
        std::vector<int> choices;
        for (int j = 0; j < i; ++j)
            if (cap[j] > 0) choices.push_back(j);
        if (choices.empty()) return false;
        const int j = choices[std::uniform_int_distribution<int>(
            0, static_cast<int>(choices.size()) - 1)(rng)];
        mol.set_bond(i, j, 1);
        --cap[i];
        --cap[j];
    }

    // Pair off remaining capacity as bond-order upgrades.
    int remaining = std::accumulate(cap.begin(), cap.end(), 0);
    while (remaining > 0) {
        std::vector<std::pair<int, int>> pairs;
        for (int i = 0; i < n; ++i) {
            if (cap[i] <= 0) continue;
            for (int j = i + 1; j < n; ++j)
                if (cap[j] > 0 && mol.bond(i, j) < kNumBondOrders - 1)
                    pairs.emplace_back(i, j);
        }
        if (pairs.empty()) return false;
        const auto [i, j] = pairs[std::uniform_int_distribution<int>(
            0, static_cast<int>(pairs.size()) - 1)(rng)];
        mol.set_bond(i, j, static_cast<std::uint8_t>(mol.bond(i, j) + 1));
        --cap[i];
        --cap[j];
        remaining -= 2;
    }
    return true;
}

void embed_positions(ToyMolecule& mol, Rng& rng) {
    const int n = mol.n_atoms;
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::normal_distribution<double> jitter(0.0, 0.1);
    mol.positions.assign(static_cast<std::size_t>(n), Vec3{0.0, 0.0, 0.0});
    for (int i = 1; i < n; ++i) {
        int parent = -1;
        for (int j = 0; j < i; ++j)
            if (mol.bond(i, j) > 0) {
                parent = j;
                break;
            }
        if (parent < 0) parent = 0;  // unreachable for tree-built molecules
        Vec3 dir{gauss(rng), gauss(rng), gauss(rng)};
        double norm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
        if (norm < 1e-12) {
            dir = {1.0, 0.0, 0.0};
            norm = 1.0;
        }
        for (int a = 0; a < 3; ++a)
            mol.positions[i][a] = mol.positions[parent][a] + 1.5 * dir[a] / norm + jitter(rng);
    }
    center_positions(mol.positions);
}

}  // namespace

Dataset generate_dataset(std::uint64_t seed, int count) {
    if (count < 100) throw EmptyInput("dataset count must be >= 100");
    // Mildly peaked size distribution over n = 2..9.
    static constexpr std::array<double, 8> kSizeWeights{0.05, 0.10, 0.15, 0.20,
                                                        0.20, 0.15, 0.10, 0.05};
    Dataset ds;
    ds.seed = seed;
    ds.molecules.reserve(static_cast<std::size_t>(count));
    Rng rng(mix64(seed));
    std::discrete_distribution<int> size_dist(kSizeWeights.begin(), kSizeWeights.end());
    int consecutive_failures = 0;
    while (ds.molecules.size() < static_cast<std::size_t>(count)) {
        const int n = kMinAtoms + size_dist(rng);
        ToyMolecule mol;
        bool ok = false;
        for (int iter = 0; iter < 1000 && !ok; ++iter) ok = try_build(mol, n, rng);
        if (!ok) {
            if (++consecutive_failures >= 100)
                throw ConstructionFailure("100 consecutive molecule resamples failed");
            continue;
        }
        consecutive_failures = 0;
        embed_positions(mol, rng);
        ds.molecules.push_back(std::move(mol));
    }
    ds.finalize();
    return ds;
}

}  // namespace guideflow::toymol
