#pragma once

// Toy molecular domain: a 4-letter atom alphabet with H/O/N/C-like valences,
// formal charges, integer bond orders and 3D positions. Stands in for a real
// chemistry stack so that guidance mechanics can be tested against exact
// oracles.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "guideflow/errors.hpp"
#include "guideflow/rng.hpp"

namespace guideflow::toymol {

inline constexpr int kMinAtoms = 2;
inline constexpr int kMaxAtoms = 9;
inline constexpr int kNumAtomTypes = 4;   // X, Y, Z, W
inline constexpr int kNumChargeStates = 3;  // -1, 0, +1
inline constexpr int kNumBondOrders = 4;  // 0..3
inline constexpr int kNumPropertyBins = 16;

enum class Modality : std::uint8_t { Atoms = 0, Charges = 1, Bonds = 2 };
inline constexpr std::array<Modality, 3> kAllModalities{Modality::Atoms, Modality::Charges,
                                                        Modality::Bonds};

// Real-token alphabet size per modality (mask token excluded).
inline constexpr int alphabet_size(Modality m) {
    switch (m) {
        case Modality::Atoms: return kNumAtomTypes;
        case Modality::Charges: return kNumChargeStates;
        case Modality::Bonds: return kNumBondOrders;
    }
    return 0;
}

// In-flight sequences use token value alphabet_size(m) as the mask.
inline constexpr std::uint8_t mask_token(Modality m) {
    return static_cast<std::uint8_t>(alphabet_size(m));
}

inline constexpr int slot_count(Modality m, int n_atoms) {
    return m == Modality::Bonds ? n_atoms * (n_atoms - 1) / 2 : n_atoms;
}

// Upper-triangular pair index for i < j.
inline constexpr int bond_slot(int i, int j, int n_atoms) {
    return i * n_atoms - i * (i + 1) / 2 + (j - i - 1);
}

inline const char* atom_symbol(int type) {
    static constexpr const char* names[] = {"X", "Y", "Z", "W"};
    return names[type];
}

// Base valences mirror H/O/N/C; electronegativities are dimensionless knobs
// for the property oracle.
struct ValenceTable {
    std::array<int, kNumAtomTypes> base_valence{1, 2, 3, 4};
    std::array<double, kNumAtomTypes> electronegativity{2.2, 3.0, 3.5, 2.5};
};

inline const ValenceTable& valence_table() {
    static const ValenceTable table;
    return table;
}

using Vec3 = std::array<double, 3>;

struct ToyMolecule {
    int n_atoms = 0;
    std::vector<std::uint8_t> atom_types;  // values 0..3
    std::vector<std::int8_t> charges;      // values -1, 0, +1
    std::vector<std::uint8_t> bond_orders; // upper-triangular, length n(n-1)/2
    std::vector<Vec3> positions;           // centroid within 1e-9 of origin

    std::uint8_t bond(int i, int j) const {
        if (i > j) std::swap(i, j);
        return bond_orders[bond_slot(i, j, n_atoms)];
    }
    void set_bond(int i, int j, std::uint8_t order) {
        if (i > j) std::swap(i, j);
        bond_orders[bond_slot(i, j, n_atoms)] = order;
    }
    int valence(int i) const {
        int v = 0;
        for (int j = 0; j < n_atoms; ++j)
            if (j != i) v += bond(i, j);
        return v;
    }
};

// Subtracts the centroid in place.
void center_positions(std::vector<Vec3>& positions);

// Throws ShapeMismatch / ConstructionFailure when a structural invariant is
// broken (sequence lengths, value ranges, centering).
void validate_invariants(const ToyMolecule& mol);

// Deterministic dipole-like property; discrete tokens and positions both
// influence it.
double property_oracle(const ToyMolecule& mol);

struct StabilityResult {
    std::vector<bool> per_atom_stable;
    bool molecule_stable = false;
};

// Atom i is stable iff its bond-order sum equals base_valence + charge;
// the molecule additionally requires zero net charge.
StabilityResult molecule_stability(const ToyMolecule& mol);

// molecule_stable plus bond-graph connectivity.
bool is_valid(const ToyMolecule& mol);

// Canonical relabeling: refinement-based ordering, ties broken by the
// lexicographically smallest encoding. `canonical_order` returns the
// permutation perm where perm[rank] = original atom index.
std::vector<int> canonical_order(const ToyMolecule& mol);
std::string canonical_key(const ToyMolecule& mol);

// Applies a relabeling: atom at original index perm[rank] moves to `rank`.
ToyMolecule permute_atoms(const ToyMolecule& mol, const std::vector<int>& perm);

struct Dataset {
    std::vector<ToyMolecule> molecules;
    std::vector<double> properties;       // properties[i] == property_oracle(molecules[i])
    std::array<double, kNumPropertyBins + 1> bin_edges{};  // equal-frequency
    std::vector<std::array<std::int64_t, kNumPropertyBins>> joint_nc;  // index n - kMinAtoms
    std::uint64_t seed = 0;

    // Derived caches (filled by finalize): canonical token sequences and
    // canonical-ordered positions per molecule, plus stratum indices.
    struct CanonicalView {
        std::vector<std::uint8_t> atoms;
        std::vector<std::uint8_t> charges;  // coded 0..2 (charge + 1)
        std::vector<std::uint8_t> bonds;
        std::vector<Vec3> positions;
    };
    std::vector<CanonicalView> canonical;
    std::vector<int> bin_of;                           // property bin per molecule
    std::array<std::vector<int>, kMaxAtoms + 1> by_n;  // molecule indices per atom count
    std::array<std::array<std::vector<int>, kNumPropertyBins>, kMaxAtoms + 1> by_n_bin;

    int property_bin(double value) const;
    std::size_t size() const { return molecules.size(); }

    // Recomputes properties, equal-frequency bin edges, the joint (n, bin)
    // table and all caches. Call after molecules change.
    void finalize();
    // Same, but adopts the given edges instead of recomputing them — keeps a
    // derived dataset (subsample, split) on the parent's bin definition.
    void finalize_with_edges(const std::array<double, kNumPropertyBins + 1>& edges);
};

// Builds `count` valid molecules (spanning tree + bond upgrades + a
// charge-assignment repair loop + noisy sequential embedding). Deterministic
// given seed. Throws ConstructionFailure after 100 consecutive failed
// resamples, EmptyInput if count < 100.
Dataset generate_dataset(std::uint64_t seed, int count);

// Coded token sequence for one modality in the molecule's stored atom order
// (charges shift to 0..2). Apply canonical_order first for canonical views.
std::vector<std::uint8_t> coded_tokens(const ToyMolecule& mol, Modality m);

}  // namespace guideflow::toymol
