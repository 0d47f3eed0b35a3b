#include "guideflow/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace guideflow::sampler {

const char* method_name(Method m) {
    switch (m) {
        case Method::Vanilla: return "vanilla";
        case Method::Cfg: return "cfg";
        case Method::Ag: return "ag";
        case Method::Mg: return "mg";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    if (name == "vanilla") return Method::Vanilla;
    if (name == "cfg") return Method::Cfg;
    if (name == "ag") return Method::Ag;
    if (name == "mg") return Method::Mg;
    throw ConfigError("unknown method '" + name + "' (vanilla, cfg, ag, mg)");
}

int forward_passes(Method m) {
    switch (m) {
        case Method::Vanilla:
        case Method::Mg: return 1;
        case Method::Cfg:
        case Method::Ag: return 2;
    }
    return 1;
}

void GuidanceSpec::validate() {
    for (double w : weights)
        if (!(w >= 0.0)) throw ConfigError("guidance weights must be >= 0");
    if (!(mg_weight >= 0.0)) throw ConfigError("mg weight must be >= 0");
    if (method == Method::Vanilla) weights = {1.0, 1.0, 1.0, 1.0};
}

// ---- TrajectoryState ---------------------------------------------------------

TrajectoryState::TrajectoryState(const GuidanceSpec& spec, const denoisers::ModelSet& models,
                                 int n, int bin_arg)
    : revealed(n), bin(bin_arg) {
    if (spec.method == Method::Ag && !models.guide)
        throw ConfigError("autoguidance needs guide models");
    if (spec.method != Method::Mg) main.emplace(models.posterior.start(n, bin));
    if (spec.method == Method::Ag) guide.emplace(models.guide->posterior.start(n, bin));
}

void TrajectoryState::apply(toymol::Modality m, int slot, int next) {
    const int cur = revealed.token(m, slot);
    if (next == cur) return;
    const int mask = toymol::mask_token(m);
    revealed.set(m, slot, next);
    if (cur != mask) {  // leaving a real token
        if (main) main->remask(m, slot, cur);
        if (guide) guide->remask(m, slot, cur);
    }
    if (next != mask) {  // arriving at a real token
        if (main) main->reveal(m, slot, next);
        if (guide) guide->reveal(m, slot, next);
    }
}

// ---- Guided heads -------------------------------------------------------------

void guided_velocity(const GuidanceSpec& spec, const denoisers::ModelSet& models, int n,
                     int bin, const std::vector<double>& x, double t,
                     std::vector<double>& out) {
    const double w = spec.position_weight();
    switch (spec.method) {
        case Method::Vanilla:
            denoisers::velocity(models.velocity.resolve(n, bin), x, t, out);
            return;
        case Method::Mg:
            if (!models.mg) throw ConfigError("model guidance needs a trained model");
            models.mg->velocity(n, bin, spec.mg_weight, x, t, out);
            return;
        case Method::Cfg: {
            std::vector<double> uncond, cond;
            denoisers::velocity(models.velocity.resolve(n, -1), x, t, uncond);
            denoisers::velocity(models.velocity.resolve(n, bin), x, t, cond);
            flowcore::blend(uncond, cond, w, out);
            return;
        }
        case Method::Ag: {
            if (!models.guide) throw ConfigError("autoguidance needs guide models");
            std::vector<double> from_guide, from_main;
            denoisers::velocity(models.guide->velocity.resolve(n, bin), x, t, from_guide);
            denoisers::velocity(models.velocity.resolve(n, bin), x, t, from_main);
            flowcore::blend(from_guide, from_main, w, out);
            return;
        }
    }
}

namespace {

// The two posterior inputs a guided discrete step combines: `weak` plays the
// unconditional role (uncond for CFG, the degraded guide for AG).
void posterior_pair(const GuidanceSpec& spec, const TrajectoryState& st,
                    denoisers::SlotRef slot, std::vector<double>& weak,
                    std::vector<double>& strong) {
    st.main->posterior(slot, strong);
    if (spec.method == Method::Cfg)
        st.main->posterior_uncond(slot, weak);
    else
        st.guide->posterior(slot, weak);
}

// Guided posterior in probability space; rate formats map to their
// probability-space sibling (used only for the terminal argmax fill).
std::vector<double> guided_posterior(const GuidanceSpec& spec,
                                     const denoisers::ModelSet& models,
                                     const TrajectoryState& st, denoisers::SlotRef slot) {
    std::vector<double> q;
    switch (spec.method) {
        case Method::Vanilla:
            st.main->posterior(slot, q);
            return q;
        case Method::Mg:
            models.mg->posterior(st.revealed.n_atoms(), st.bin, spec.mg_weight, slot, q);
            return q;
        case Method::Cfg:
        case Method::Ag: {
            std::vector<double> weak, strong;
            posterior_pair(spec, st, slot, weak, strong);
            const double w = spec.weight(slot.modality);
            const bool linear = spec.format == ctmc::GuidanceFormat::LinearProb ||
                                spec.format == ctmc::GuidanceFormat::LinearRate;
            return linear ? ctmc::guide_prob_linear(weak, strong, w)
                          : ctmc::guide_prob_log(weak, strong, w);
        }
    }
    return q;
}

bool has_outflow(const ctmc::RateRow& row, int current) {
    for (int a = 0; a < static_cast<int>(row.size()); ++a)
        if (a != current && row[a] > 0.0) return true;
    return false;
}

}  // namespace

int guided_discrete_step(const GuidanceSpec& spec, const denoisers::ModelSet& models,
                         const TrajectoryState& st, denoisers::SlotRef slot, double t,
                         double dt, double eta, Rng& rng) {
    const auto m = slot.modality;
    const int current = st.revealed.token(m, slot.index);

    ctmc::RateRow row;
    switch (spec.method) {
        case Method::Vanilla: {
            std::vector<double> p;
            st.main->posterior(slot, p);
            row = ctmc::rate_row(p, current, t, eta);
            break;
        }
        case Method::Mg: {
            if (!models.mg) throw ConfigError("model guidance needs a trained model");
            std::vector<double> p;
            models.mg->posterior(st.revealed.n_atoms(), st.bin, spec.mg_weight, slot, p);
            row = ctmc::rate_row(p, current, t, eta);
            break;
        }
        case Method::Cfg:
        case Method::Ag: {
            std::vector<double> weak, strong;
            posterior_pair(spec, st, slot, weak, strong);
            const double w = spec.weight(m);
            switch (spec.format) {
                case ctmc::GuidanceFormat::LinearProb:
                    row = ctmc::rate_row(ctmc::guide_prob_linear(weak, strong, w), current, t,
                                         eta);
                    break;
                case ctmc::GuidanceFormat::LogProb:
                    row = ctmc::rate_row(ctmc::guide_prob_log(weak, strong, w), current, t,
                                         eta);
                    break;
                case ctmc::GuidanceFormat::LinearRate:
                    row = ctmc::guide_rate_linear(ctmc::rate_row(weak, current, t, eta),
                                                  ctmc::rate_row(strong, current, t, eta), w,
                                                  current);
                    break;
                case ctmc::GuidanceFormat::LogRate:
                    row = ctmc::guide_rate_log(ctmc::rate_row(weak, current, t, eta),
                                               ctmc::rate_row(strong, current, t, eta), w,
                                               current);
                    break;
            }
            break;
        }
    }
    // Dead rows consume no randomness; this is what keeps equal-seed runs
    // paired across methods (a slot is dead iff it is revealed and eta == 0,
    // regardless of guidance).
    if (!has_outflow(row, current)) return current;
    return ctmc::sample_transition(row, current, dt, rng);
}

// ---- Batch driver ---------------------------------------------------------------

namespace {

void subtract_centroid(std::vector<double>& coords, int n) {
    for (int axis = 0; axis < 3; ++axis) {
        double mean = 0.0;
        for (int i = 0; i < n; ++i) mean += coords[3 * i + axis];
        mean /= n;
        for (int i = 0; i < n; ++i) coords[3 * i + axis] -= mean;
    }
}

// Inverse-CDF over the (n, bin) joint counts; one uniform per molecule.
std::pair<int, int> draw_joint(const toymol::Dataset& ds, double u) {
    std::int64_t total = 0;
    for (const auto& col : ds.joint_nc)
        for (auto c : col) total += c;
    if (total == 0) throw EmptyDataset("dataset joint table is empty");
    const double x = u * static_cast<double>(total);
    std::int64_t acc = 0;
    for (std::size_t i = 0; i < ds.joint_nc.size(); ++i)
        for (int b = 0; b < toymol::kNumPropertyBins; ++b) {
            acc += ds.joint_nc[i][b];
            if (x < static_cast<double>(acc))
                return {toymol::kMinAtoms + static_cast<int>(i), b};
        }
    // u == 1 edge; land on the last populated cell.
    for (std::size_t i = ds.joint_nc.size(); i-- > 0;)
        for (int b = toymol::kNumPropertyBins; b-- > 0;)
            if (ds.joint_nc[i][b] > 0) return {toymol::kMinAtoms + static_cast<int>(i), b};
    throw EmptyDataset("dataset joint table is empty");
}

// Size draw for a fixed bin, p(n | bin); falls back to the size marginal
// when the bin column is empty.
int draw_n_given_bin(const toymol::Dataset& ds, int bin, double u) {
    std::int64_t total = 0;
    for (const auto& col : ds.joint_nc) total += col[bin];
    if (total > 0) {
        const double x = u * static_cast<double>(total);
        std::int64_t acc = 0;
        for (std::size_t i = 0; i < ds.joint_nc.size(); ++i) {
            acc += ds.joint_nc[i][bin];
            if (x < static_cast<double>(acc)) return toymol::kMinAtoms + static_cast<int>(i);
        }
        return toymol::kMinAtoms + static_cast<int>(ds.joint_nc.size()) - 1;
    }
    std::vector<std::int64_t> marginal(ds.joint_nc.size(), 0);
    std::int64_t all = 0;
    for (std::size_t i = 0; i < ds.joint_nc.size(); ++i)
        for (auto c : ds.joint_nc[i]) {
            marginal[i] += c;
            all += c;
        }
    if (all == 0) throw EmptyDataset("dataset joint table is empty");
    const double x = u * static_cast<double>(all);
    std::int64_t acc = 0;
    for (std::size_t i = 0; i < marginal.size(); ++i) {
        acc += marginal[i];
        if (x < static_cast<double>(acc)) return toymol::kMinAtoms + static_cast<int>(i);
    }
    return toymol::kMinAtoms + static_cast<int>(marginal.size()) - 1;
}

}  // namespace

std::vector<Sample> sample(const GuidanceSpec& spec_arg, const denoisers::ModelSet& models,
                           const SampleRequest& req) {
    GuidanceSpec spec = spec_arg;
    spec.validate();
    if (req.count <= 0) throw ConfigError("sample count must be positive");
    if (req.grid.steps <= 0) throw ConfigError("step count must be positive");
    if (!(req.eta >= 0.0)) throw ConfigError("eta must be >= 0");
    if (spec.method == Method::Ag && !models.guide)
        throw ConfigError("autoguidance needs guide models");
    if (spec.method == Method::Mg && !models.mg)
        throw ConfigError("model guidance needs a trained model");
    const toymol::Dataset& ds = models.posterior.dataset();

    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(req.count));
    std::vector<double> x, vel;
    std::vector<std::tuple<toymol::Modality, int, int>> changes;

    for (int i = 0; i < req.count; ++i) {
        Rng rng = substream(req.seed, static_cast<std::uint64_t>(i));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::normal_distribution<double> normal(0.0, 1.0);

        const double u = unif(rng);
        int n = 0, bin = 0;
        double target = 0.0;
        if (req.target) {
            target = *req.target;
            bin = ds.property_bin(target);
            n = draw_n_given_bin(ds, bin, u);
        } else {
            std::tie(n, bin) = draw_joint(ds, u);
            target = 0.5 * (ds.bin_edges[bin] + ds.bin_edges[bin + 1]);
        }

        x.resize(static_cast<std::size_t>(3 * n));
        for (auto& v : x) v = normal(rng);
        subtract_centroid(x, n);  // match the centered data distribution

        TrajectoryState st(spec, models, n, bin);
        for (int k = 0; k < req.grid.steps; ++k) {
            const double t = req.grid.t(k);
            const double dt = req.grid.dt();

            guided_velocity(spec, models, n, bin, x, t, vel);
            subtract_centroid(vel, n);  // keep the trajectory on the centered subspace
            for (std::size_t c = 0; c < x.size(); ++c) x[c] = flowcore::euler_step(x[c], vel[c], dt);

            changes.clear();
            for (auto m : toymol::kAllModalities) {
                const int slots = toymol::slot_count(m, n);
                for (int s = 0; s < slots; ++s) {
                    const int cur = st.revealed.token(m, s);
                    const int next =
                        guided_discrete_step(spec, models, st, {m, s}, t, dt, req.eta, rng);
                    if (next != cur) changes.emplace_back(m, s, next);
                }
            }
            // All slots above read the step-start state; commit together.
            for (const auto& [m, s, next] : changes) st.apply(m, s, next);
        }

        // Anything still masked (possible when eta > 0 remasks during the
        // last step) settles on the argmax of its guided posterior.
        for (auto m : toymol::kAllModalities) {
            const int slots = toymol::slot_count(m, n);
            for (int s = 0; s < slots; ++s) {
                if (!st.revealed.masked(m, s)) continue;
                const auto q = guided_posterior(spec, models, st, {m, s});
                const int best = static_cast<int>(
                    std::max_element(q.begin(), q.end()) - q.begin());
                st.apply(m, s, best);
            }
        }

        Sample smp;
        smp.target = target;
        smp.bin = bin;
        toymol::ToyMolecule& mol = smp.mol;
        mol.n_atoms = n;
        mol.atom_types.resize(n);
        mol.charges.resize(n);
        mol.bond_orders.resize(static_cast<std::size_t>(n) * (n - 1) / 2);
        for (int a = 0; a < n; ++a) {
            mol.atom_types[a] =
                static_cast<std::uint8_t>(st.revealed.token(toymol::Modality::Atoms, a));
            mol.charges[a] = static_cast<std::int8_t>(
                st.revealed.token(toymol::Modality::Charges, a) - 1);
        }
        for (int b = 0; b < static_cast<int>(mol.bond_orders.size()); ++b)
            mol.bond_orders[b] =
                static_cast<std::uint8_t>(st.revealed.token(toymol::Modality::Bonds, b));
        subtract_centroid(x, n);
        mol.positions.resize(n);
        for (int a = 0; a < n; ++a)
            mol.positions[a] = {x[3 * a + 0], x[3 * a + 1], x[3 * a + 2]};
        out.push_back(std::move(smp));
    }
    return out;
}

}  // namespace guideflow::sampler
