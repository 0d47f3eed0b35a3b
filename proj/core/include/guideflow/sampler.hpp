#pragma once

// The hybrid guided generation loop: Euler integration for positions and
// CTMC stepping for the three discrete modalities, under one GuidanceSpec.
//
// Reproducibility contract: molecule i uses substream(seed, i), and the draw
// order inside a trajectory is fixed — (n, c), then 3n base normals, then one
// uniform per discrete slot per step, skipped when the slot's rate row is
// all-zero. The skip rule is method-independent (at matched eta the same
// slots are live), so runs with equal seeds are common-random-number paired
// across methods, formats and weights.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "guideflow/ctmc.hpp"
#include "guideflow/denoisers.hpp"
#include "guideflow/errors.hpp"
#include "guideflow/flowcore.hpp"
#include "guideflow/rng.hpp"
#include "guideflow/toymol.hpp"

namespace guideflow::sampler {

enum class Method : std::uint8_t { Vanilla, Cfg, Ag, Mg };

const char* method_name(Method m);
Method parse_method(const std::string& name);  // throws ConfigError

// Denoiser evaluations per sampling step: vanilla 1, CFG 2 (cond + uncond),
// AG 2 (main + guide), MG 1.
int forward_passes(Method m);

struct GuidanceSpec {
    Method method = Method::Vanilla;
    ctmc::GuidanceFormat format = ctmc::GuidanceFormat::LogProb;
    // Per-modality weights: [positions, atoms, charges, bonds].
    std::array<double, 4> weights{1.0, 1.0, 1.0, 1.0};
    denoisers::GuideModelSpec ag_guide;  // used when method == Ag
    double mg_weight = 1.0;              // embedded weight when method == Mg

    // Two-weight form: w1 for positions, w2 for every discrete modality.
    static std::array<double, 4> hybrid_weights(double w1, double w2) {
        return {w1, w2, w2, w2};
    }

    double weight(toymol::Modality m) const {
        return weights[1 + static_cast<int>(m)];
    }
    double position_weight() const { return weights[0]; }

    // Throws ConfigError on negative weights; vanilla pins all weights to 1.
    void validate();
};

struct SampleRequest {
    int count = 1000;
    flowcore::TimeGrid grid{100};
    std::uint64_t seed = 0;
    double eta = 0.0;
    // Fixed conditioning target; empty draws (n, c) from the dataset joint.
    std::optional<double> target = std::nullopt;
};

struct Sample {
    toymol::ToyMolecule mol;
    double target = 0.0;
    int bin = -1;
};

// Per-trajectory in-flight discrete state: plain token view plus the
// incremental posterior handles every reveal/remask must be mirrored into.
struct TrajectoryState {
    TrajectoryState(const GuidanceSpec& spec, const denoisers::ModelSet& models, int n,
                    int bin);

    denoisers::RevealedState revealed;
    std::optional<denoisers::TrajectoryPosterior> main;   // unset for MG
    std::optional<denoisers::TrajectoryPosterior> guide;  // AG only
    int bin = -1;

    void apply(toymol::Modality m, int slot, int next);  // reveal/remask dispatch
};

// Blended velocity for the whole position vector (length 3n), dispatched on
// spec.method: vanilla u_c; cfg (1-w)u_uncond + w u_c; ag w u_main +
// (1-w) u_guide; mg the trained model's head at the embedded weight.
void guided_velocity(const GuidanceSpec& spec, const denoisers::ModelSet& models, int n,
                     int bin, const std::vector<double>& x, double t,
                     std::vector<double>& out);

// Next token for one discrete slot, reading `st` as of step start (callers
// batch the apply() calls so all slots in a step see the same state).
// Consumes one uniform unless the slot's row is all-zero.
int guided_discrete_step(const GuidanceSpec& spec, const denoisers::ModelSet& models,
                         const TrajectoryState& st, denoisers::SlotRef slot, double t,
                         double dt, double eta, Rng& rng);

// Full batch driver. Positions integrate with the velocity projected onto
// the zero-centroid subspace (keeps the base draw's centering exact); any
// slot still masked after the last step is filled by the argmax of the final
// guided posterior.
std::vector<Sample> sample(const GuidanceSpec& spec, const denoisers::ModelSet& models,
                           const SampleRequest& req);

}  // namespace guideflow::sampler
