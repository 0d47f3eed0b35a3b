#include "guideflow/denoisers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace guideflow::denoisers {

RevealedState::RevealedState(int n_atoms) : n_(n_atoms) {
    for (auto m : toymol::kAllModalities)
        seq_[static_cast<int>(m)].assign(
            static_cast<std::size_t>(toymol::slot_count(m, n_atoms)), toymol::mask_token(m));
}

// ---- GaussianVelocityModel ---------------------------------------------------

namespace {

struct MomentAcc {
    std::vector<double> sum, sumsq;
    std::int64_t count = 0;

    void add(const std::vector<toymol::Vec3>& pos) {
        const std::size_t dim = pos.size() * 3;
        if (sum.empty()) {
            sum.assign(dim, 0.0);
            sumsq.assign(dim, 0.0);
        }
        for (std::size_t i = 0; i < pos.size(); ++i)
            for (int a = 0; a < 3; ++a) {
                const double v = pos[i][a];
                sum[3 * i + a] += v;
                sumsq[3 * i + a] += v * v;
            }
        ++count;
    }

    GaussianFit fit() const {
        GaussianFit f;
        f.count = count;
        f.mean.resize(sum.size());
        f.var.resize(sum.size());
        for (std::size_t i = 0; i < sum.size(); ++i) {
            f.mean[i] = sum[i] / static_cast<double>(count);
            const double raw = sumsq[i] / static_cast<double>(count) - f.mean[i] * f.mean[i];
            f.var[i] = std::max(raw, GaussianVelocityModel::kVarFloor);
        }
        return f;
    }
};

}  // namespace

GaussianVelocityModel GaussianVelocityModel::fit(const toymol::Dataset& ds, bool conditional) {
    if (ds.molecules.empty()) throw EmptyDataset("velocity fit on empty dataset");
    GaussianVelocityModel model;
    model.conditional_ = conditional;
    std::array<MomentAcc, toymol::kMaxAtoms + 1> pooled_acc;
    std::map<std::pair<int, int>, MomentAcc> binned_acc;
    for (std::size_t i = 0; i < ds.molecules.size(); ++i) {
        const int n = ds.molecules[i].n_atoms;
        const auto& pos = ds.canonical[i].positions;
        pooled_acc[n].add(pos);
        if (conditional) binned_acc[{n, ds.bin_of[i]}].add(pos);
    }
    for (int n = toymol::kMinAtoms; n <= toymol::kMaxAtoms; ++n)
        if (pooled_acc[n].count > 0) model.pooled_[n] = pooled_acc[n].fit();
    for (const auto& [key, acc] : binned_acc) model.binned_[key] = acc.fit();
    return model;
}

const GaussianFit& GaussianVelocityModel::resolve(int n, int bin) const {
    if (conditional_ && bin >= 0) {
        const auto it = binned_.find({n, bin});
        if (it != binned_.end() && it->second.count >= kMinFitCount) return it->second;
    }
    if (n < toymol::kMinAtoms || n > toymol::kMaxAtoms || pooled_[n].count == 0)
        throw UnresolvedKey("no position fit for n=" + std::to_string(n));
    return pooled_[n];
}

void GaussianVelocityModel::inflate_variance(double factor) {
    for (auto& fit : pooled_)
        for (auto& v : fit.var) v *= factor;
    for (auto& [key, fit] : binned_)
        for (auto& v : fit.var) v *= factor;
}

void GaussianVelocityModel::marginalize() {
    binned_.clear();
    conditional_ = false;
}

void velocity(const GaussianFit& fit, const std::vector<double>& x, double t,
              std::vector<double>& out) {
    if (x.size() != fit.mean.size()) throw ShapeMismatch("velocity: coordinate count");
    if (t >= 1.0) throw ConfigError("velocity requires t < 1");
    out.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = flowcore::gaussian_velocity({fit.mean[i], fit.var[i]}, x[i], t);
}

// ---- StratumTokens / MatchTracker --------------------------------------------

const std::uint8_t* StratumTokens::row_tokens(Modality m, int row) const {
    const int stride = slot_count(m);
    switch (m) {
        case Modality::Atoms: return atoms.data() + static_cast<std::size_t>(row) * stride;
        case Modality::Charges: return charges.data() + static_cast<std::size_t>(row) * stride;
        case Modality::Bonds: return bonds.data() + static_cast<std::size_t>(row) * stride;
    }
    return nullptr;
}

MatchTracker::MatchTracker(const StratumTokens* stratum, std::vector<int> members)
    : stratum_(stratum), members_(std::move(members)) {
    mismatch_.assign(members_.size(), 0);
    match_count_ = static_cast<int>(members_.size());
    bin_counts_.assign(toymol::kNumPropertyBins, 0);
    for (auto m : toymol::kAllModalities) {
        const int i = static_cast<int>(m);
        slot_counts_[i].assign(static_cast<std::size_t>(stratum_->slot_count(m)) *
                                   toymol::alphabet_size(m),
                               0);
    }
    // Everything matches initially; counts are plain token histograms.
    for (std::size_t k = 0; k < members_.size(); ++k) {
        match_count_ -= 1;  // toggle() re-adds
        toggle(static_cast<int>(k), +1);
    }
}

void MatchTracker::toggle(int member, int delta) {
    const int row = members_[member];
    match_count_ += delta;
    for (auto m : toymol::kAllModalities) {
        const int i = static_cast<int>(m);
        const int slots = stratum_->slot_count(m);
        const int alphabet = toymol::alphabet_size(m);
        const std::uint8_t* tok = stratum_->row_tokens(m, row);
        for (int s = 0; s < slots; ++s) slot_counts_[i][s * alphabet + tok[s]] += delta;
    }
    bin_counts_[stratum_->bins[row]] += delta;
}

void MatchTracker::reveal(Modality m, int slot, int token) {
    for (std::size_t k = 0; k < members_.size(); ++k) {
        if (stratum_->row_tokens(m, members_[k])[slot] == token) continue;
        if (++mismatch_[k] == 1) toggle(static_cast<int>(k), -1);
    }
}

void MatchTracker::remask(Modality m, int slot, int token) {
    for (std::size_t k = 0; k < members_.size(); ++k) {
        if (stratum_->row_tokens(m, members_[k])[slot] == token) continue;
        if (--mismatch_[k] == 0) toggle(static_cast<int>(k), +1);
    }
}

bool MatchTracker::counts(Modality m, int slot, double* out, int alphabet) const {
    if (match_count_ == 0) return false;
    const auto& table = slot_counts_[static_cast<int>(m)];
    for (int a = 0; a < alphabet; ++a) out[a] = table[slot * alphabet + a];
    return true;
}

// ---- EmpiricalPosterior -------------------------------------------------------

EmpiricalPosterior::EmpiricalPosterior(std::shared_ptr<const toymol::Dataset> ds,
                                       bool conditional, double smoothing)
    : ds_(std::move(ds)), conditional_(conditional), smoothing_(smoothing) {
    if (!ds_ || ds_->molecules.empty()) throw EmptyDataset("posterior model needs data");
    for (int n = toymol::kMinAtoms; n <= toymol::kMaxAtoms; ++n) {
        auto& st = strata_[n];
        st.n_atoms = n;
        st.rows = ds_->by_n[n];
        const int rows = static_cast<int>(st.rows.size());
        st.atoms.reserve(static_cast<std::size_t>(rows) * n);
        st.charges.reserve(static_cast<std::size_t>(rows) * n);
        st.bonds.reserve(static_cast<std::size_t>(rows) * n * (n - 1) / 2);
        st.bins.reserve(rows);
        for (int row : st.rows) {
            const auto& view = ds_->canonical[row];
            st.atoms.insert(st.atoms.end(), view.atoms.begin(), view.atoms.end());
            st.charges.insert(st.charges.end(), view.charges.begin(), view.charges.end());
            st.bonds.insert(st.bonds.end(), view.bonds.begin(), view.bonds.end());
            st.bins.push_back(static_cast<std::int16_t>(ds_->bin_of[row]));
        }
        for (auto m : toymol::kAllModalities) {
            const int i = static_cast<int>(m);
            const int slots = st.slot_count(m);
            const int alphabet = toymol::alphabet_size(m);
            auto& marg = marginals_[n][i];
            marg.assign(static_cast<std::size_t>(slots) * alphabet, 0.0);
            for (int r = 0; r < rows; ++r) {
                const std::uint8_t* tok = st.row_tokens(m, r);
                for (int s = 0; s < slots; ++s) marg[s * alphabet + tok[s]] += 1.0;
            }
        }
    }
}

const StratumTokens& EmpiricalPosterior::stratum(int n) const {
    if (n < toymol::kMinAtoms || n > toymol::kMaxAtoms)
        throw UnresolvedKey("stratum n out of range: " + std::to_string(n));
    return strata_[n];
}

TrajectoryPosterior EmpiricalPosterior::start(int n, int bin) const {
    return TrajectoryPosterior(this, n, bin);
}

std::vector<double> EmpiricalPosterior::posterior(const RevealedState& revealed, SlotRef slot,
                                                  int bin) const {
    TrajectoryPosterior traj(this, revealed.n_atoms(), bin);
    for (auto m : toymol::kAllModalities) {
        const auto& seq = revealed.tokens(m);
        for (int s = 0; s < static_cast<int>(seq.size()); ++s)
            if (seq[s] != toymol::mask_token(m)) traj.reveal(m, s, seq[s]);
    }
    std::vector<double> out;
    traj.posterior(slot, out);
    return out;
}

// ---- TrajectoryPosterior -------------------------------------------------------

TrajectoryPosterior::TrajectoryPosterior(const EmpiricalPosterior* model, int n, int bin)
    : model_(model), n_(n), bin_(bin) {
    const auto& st = model_->stratum(n);
    std::vector<int> all(st.rows.size());
    std::iota(all.begin(), all.end(), 0);
    uncond_ = MatchTracker(&st, std::move(all));
    has_cond_ = model_->conditional() && bin >= 0;
    if (has_cond_) {
        std::vector<int> members;
        for (int r = 0; r < static_cast<int>(st.rows.size()); ++r)
            if (st.bins[r] == bin) members.push_back(r);
        cond_ = MatchTracker(&st, std::move(members));
    }
}

void TrajectoryPosterior::reveal(Modality m, int slot, int token) {
    uncond_.reveal(m, slot, token);
    if (has_cond_) cond_.reveal(m, slot, token);
}

void TrajectoryPosterior::remask(Modality m, int slot, int token) {
    uncond_.remask(m, slot, token);
    if (has_cond_) cond_.remask(m, slot, token);
}

void TrajectoryPosterior::fill(SlotRef slot, bool use_cond, std::vector<double>& out) const {
    const int alphabet = toymol::alphabet_size(slot.modality);
    out.resize(alphabet);
    const double alpha = model_->smoothing();
    bool filled = false;
    if (use_cond && has_cond_)
        filled = cond_.counts(slot.modality, slot.index, out.data(), alphabet);
    if (!filled) filled = uncond_.counts(slot.modality, slot.index, out.data(), alphabet);
    if (!filled) {
        // Per-slot marginal of the n-stratum; uniform when the stratum is empty.
        const auto& marg = model_->marginals_[n_][static_cast<int>(slot.modality)];
        if (!marg.empty()) {
            for (int a = 0; a < alphabet; ++a) out[a] = marg[slot.index * alphabet + a];
        } else {
            std::fill(out.begin(), out.end(), 1.0);
        }
    }
    double total = 0.0;
    for (int a = 0; a < alphabet; ++a) {
        out[a] += alpha;
        total += out[a];
    }
    if (total <= 0.0) {
        std::fill(out.begin(), out.end(), 1.0 / alphabet);
        return;
    }
    for (auto& v : out) v /= total;
}

void TrajectoryPosterior::posterior(SlotRef slot, std::vector<double>& out) const {
    fill(slot, true, out);
}

void TrajectoryPosterior::posterior_uncond(SlotRef slot, std::vector<double>& out) const {
    fill(slot, false, out);
}

std::array<double, toymol::kNumPropertyBins> TrajectoryPosterior::bin_distribution() const {
    std::array<double, toymol::kNumPropertyBins> out{};
    if (uncond_.match_count() == 0) {
        out.fill(1.0 / toymol::kNumPropertyBins);
        return out;
    }
    const auto& counts = uncond_.bin_counts();
    const double total = uncond_.match_count();
    for (int b = 0; b < toymol::kNumPropertyBins; ++b) out[b] = counts[b] / total;
    return out;
}

// ---- build_guide ---------------------------------------------------------------

GuideModels build_guide_from_rows(const std::shared_ptr<const toymol::Dataset>& ds,
                                  const GuideModelSpec& spec, std::vector<int> kept) {
    if (spec.smoothing < 0.0) throw ConfigError("guide smoothing must be >= 0");
    if (kept.empty()) throw EmptyInput("guide needs at least one retained row");

    GuideModels guide;
    guide.spec = spec;
    guide.kept = std::move(kept);
    if (guide.kept.size() == ds->molecules.size()) {
        guide.data = ds;  // untouched: identity degradation stays bit-exact
    } else {
        auto sub = std::make_shared<toymol::Dataset>();
        sub->seed = ds->seed;
        sub->molecules.reserve(guide.kept.size());
        for (int row : guide.kept) sub->molecules.push_back(ds->molecules[row]);
        sub->finalize_with_edges(ds->bin_edges);  // parent's bin definition
        guide.data = std::move(sub);
    }
    guide.posterior = EmpiricalPosterior(guide.data, true, spec.smoothing);
    guide.velocity = GaussianVelocityModel::fit(*guide.data, true);
    if (spec.smoothing > 0.0) guide.velocity.inflate_variance(1.0 + spec.smoothing);
    if (spec.marginalize_positions) guide.velocity.marginalize();
    return guide;
}

GuideModels build_guide(const std::shared_ptr<const toymol::Dataset>& ds,
                        const GuideModelSpec& spec) {
    if (!(spec.subsample_fraction > 0.0) || spec.subsample_fraction > 1.0)
        throw ConfigError("guide subsample fraction must lie in (0, 1]");
    const int total = static_cast<int>(ds->molecules.size());
    int keep = static_cast<int>(std::lround(spec.subsample_fraction * total));
    keep = std::clamp(keep, 1, total);
    std::vector<int> kept;
    if (keep == total) {
        kept.resize(total);
        std::iota(kept.begin(), kept.end(), 0);
    } else {
        // Index far above any per-molecule stream the samplers might derive
        // from the same seed.
        Rng rng = substream(spec.seed, 0x5ab5a3b1e5eedull);
        std::vector<int> all(total);
        std::iota(all.begin(), all.end(), 0);
        std::sample(all.begin(), all.end(), std::back_inserter(kept), keep, rng);
    }
    return build_guide_from_rows(ds, spec, std::move(kept));
}

// ---- MGModel --------------------------------------------------------------------

int MGModel::pack_key(int n, int bin, int wbin) {
    return (n * (toymol::kNumPropertyBins + 1) + (bin + 1)) * kNumWeightBins + wbin;
}

int MGModel::weight_bin(double w) {
    if (w <= 0.5) return 0;
    if (w <= 1.0) return 1;
    if (w > 2.0) return kNumWeightBins - 1;
    const int idx = static_cast<int>((w - 1.0) * 8.0);
    return 2 + std::min(idx, 7);
}

void MGModel::ensure_shapes(Params& p, int n) const {
    if (p.initialized) return;
    p.mean.assign(static_cast<std::size_t>(3 * n), 0.0);
    for (auto m : toymol::kAllModalities)
        p.logits[static_cast<int>(m)].assign(
            static_cast<std::size_t>(toymol::slot_count(m, n)) * toymol::alphabet_size(m), 0.0);
    p.initialized = true;
}

MGModel::Params& MGModel::online(int n, int bin, int wbin) {
    auto& p = online_[pack_key(n, bin, wbin)];
    ensure_shapes(p, n);
    return p;
}

MGModel::Params& MGModel::ema(int n, int bin, int wbin) {
    auto& p = ema_[pack_key(n, bin, wbin)];
    ensure_shapes(p, n);
    return p;
}

const MGModel::Params* MGModel::find_online(int n, int bin, int wbin) const {
    const auto it = online_.find(pack_key(n, bin, wbin));
    return it == online_.end() ? nullptr : &it->second;
}

const MGModel::Params* MGModel::find_ema(int n, int bin, int wbin) const {
    const auto it = ema_.find(pack_key(n, bin, wbin));
    return it == ema_.end() ? nullptr : &it->second;
}

void MGModel::set_ema_to_online() { ema_ = online_; }

const std::vector<double>& MGModel::fixed_var(int n, int bin) const {
    if (bin >= 0) {
        const auto it = var_.find({n, bin});
        if (it != var_.end()) return it->second;
    }
    const auto it = var_.find({n, -1});
    if (it == var_.end()) throw UnresolvedKey("no frozen variance for n=" + std::to_string(n));
    return it->second;
}

namespace {

void softmax(const double* logits, int count, double* out) {
    double hi = logits[0];
    for (int a = 1; a < count; ++a) hi = std::max(hi, logits[a]);
    double total = 0.0;
    for (int a = 0; a < count; ++a) {
        out[a] = std::exp(logits[a] - hi);
        total += out[a];
    }
    for (int a = 0; a < count; ++a) out[a] /= total;
}

// Closed-form velocity from a mean table (zeros when p is null) with frozen
// variances.
void mg_velocity_raw(const MGModel::Params* p, const std::vector<double>& var,
                     const std::vector<double>& x, double t, std::vector<double>& out) {
    out.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double mean = p ? p->mean[i] : 0.0;
        out[i] = flowcore::gaussian_velocity({mean, var[i]}, x[i], t);
    }
}

void mg_probs_raw(const MGModel::Params* p, Modality m, int n, int slot, double* out) {
    const int alphabet = toymol::alphabet_size(m);
    if (!p) {
        for (int a = 0; a < alphabet; ++a) out[a] = 1.0 / alphabet;
        return;
    }
    softmax(p->logits[static_cast<int>(m)].data() + static_cast<std::size_t>(slot) * alphabet,
            alphabet, out);
}

}  // namespace

void MGModel::velocity(int n, int bin, double w, const std::vector<double>& x, double t,
                       std::vector<double>& out) const {
    mg_velocity_raw(find_ema(n, bin, weight_bin(w)), fixed_var(n, bin), x, t, out);
}

void MGModel::posterior(int n, int bin, double w, SlotRef slot,
                        std::vector<double>& out) const {
    out.resize(toymol::alphabet_size(slot.modality));
    mg_probs_raw(find_ema(n, bin, weight_bin(w)), slot.modality, n, slot.index, out.data());
}

void MGModel::correction(const Example& ex, std::vector<double>& velocity_corr,
                         std::array<std::vector<double>, 3>& prob_corr) const {
    const Params* cond = find_ema(ex.n, ex.bin, weight_bin(1.0));
    const Params* uncond = find_ema(ex.n, -1, weight_bin(0.0));
    std::vector<double> xt(ex.x0.size());
    for (std::size_t i = 0; i < xt.size(); ++i)
        xt[i] = flowcore::interpolate(ex.x0[i], ex.x1[i], ex.t);
    std::vector<double> vc, vu;
    mg_velocity_raw(cond, fixed_var(ex.n, ex.bin), xt, ex.t, vc);
    mg_velocity_raw(uncond, fixed_var(ex.n, -1), xt, ex.t, vu);
    velocity_corr.resize(xt.size());
    for (std::size_t i = 0; i < xt.size(); ++i) velocity_corr[i] = vc[i] - vu[i];

    for (auto m : toymol::kAllModalities) {
        const int mi = static_cast<int>(m);
        const int alphabet = toymol::alphabet_size(m);
        const int slots = toymol::slot_count(m, ex.n);
        prob_corr[mi].assign(static_cast<std::size_t>(slots) * alphabet, 0.0);
        std::vector<double> pc(alphabet), pu(alphabet);
        for (int s = 0; s < slots; ++s) {
            mg_probs_raw(cond, m, ex.n, s, pc.data());
            mg_probs_raw(uncond, m, ex.n, s, pu.data());
            for (int a = 0; a < alphabet; ++a)
                prob_corr[mi][s * alphabet + a] = pc[a] - pu[a];
        }
    }
}

namespace {

struct MGTargets {
    std::vector<double> xt;
    std::vector<double> vel_target;
    std::array<std::vector<double>, 3> soft_target;  // per modality, slot-major
};

// Builds x_t, the (possibly guidance-corrected) velocity target, and the
// soft cross-entropy targets.
MGTargets mg_targets(const MGModel& model, const MGModel::Example& ex) {
    MGTargets tg;
    const std::size_t dim = ex.x0.size();
    tg.xt.resize(dim);
    tg.vel_target.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        tg.xt[i] = flowcore::interpolate(ex.x0[i], ex.x1[i], ex.t);
        tg.vel_target[i] = ex.x1[i] - ex.x0[i];
    }
    for (auto m : toymol::kAllModalities) {
        const int mi = static_cast<int>(m);
        const int alphabet = toymol::alphabet_size(m);
        const auto& clean = ex.tokens[mi];
        tg.soft_target[mi].assign(clean.size() * alphabet, 0.0);
        for (std::size_t s = 0; s < clean.size(); ++s)
            tg.soft_target[mi][s * alphabet + clean[s]] = 1.0;
    }
    if (ex.guided) {
        std::vector<double> vel_corr;
        std::array<std::vector<double>, 3> prob_corr;
        model.correction(ex, vel_corr, prob_corr);
        for (std::size_t i = 0; i < dim; ++i) tg.vel_target[i] += ex.w * vel_corr[i];
        for (int mi = 0; mi < 3; ++mi)
            for (std::size_t j = 0; j < tg.soft_target[mi].size(); ++j)
                tg.soft_target[mi][j] += ex.w * prob_corr[mi][j];
    }
    return tg;
}

}  // namespace

double MGModel::example_loss(const Example& ex) const {
    const auto tg = mg_targets(*this, ex);
    const Params* p = find_online(ex.n, ex.bin, weight_bin(ex.w));
    const auto& var = fixed_var(ex.n, ex.bin);
    std::vector<double> pred;
    mg_velocity_raw(p, var, tg.xt, ex.t, pred);
    double loss = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - tg.vel_target[i];
        loss += d * d;
    }
    for (auto m : toymol::kAllModalities) {
        const int mi = static_cast<int>(m);
        const int alphabet = toymol::alphabet_size(m);
        const int slots = toymol::slot_count(m, ex.n);
        std::vector<double> probs(alphabet);
        for (int s = 0; s < slots; ++s) {
            mg_probs_raw(p, m, ex.n, s, probs.data());
            for (int a = 0; a < alphabet; ++a)
                loss -= tg.soft_target[mi][s * alphabet + a] *
                        std::log(std::max(probs[a], 1e-300));
        }
    }
    return loss;
}

void MGModel::example_grad(const Example& ex, Params& grad) const {
    const auto tg = mg_targets(*this, ex);
    const Params* p = find_online(ex.n, ex.bin, weight_bin(ex.w));
    const auto& var = fixed_var(ex.n, ex.bin);

    // The gradient buffer is reused across examples of different sizes, so
    // resize it for this example rather than relying on the ensure_shapes
    // initialized fast-path.
    grad.mean.assign(static_cast<std::size_t>(3 * ex.n), 0.0);
    for (auto m : toymol::kAllModalities)
        grad.logits[static_cast<int>(m)].assign(
            static_cast<std::size_t>(toymol::slot_count(m, ex.n)) * toymol::alphabet_size(m),
            0.0);
    grad.initialized = true;

    std::vector<double> pred;
    mg_velocity_raw(p, var, tg.xt, ex.t, pred);
    // d(velocity)/d(mean) for the linear-path closed form is (1 - t) / v.
    const double a = 1.0 - ex.t;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double v = a * a + ex.t * ex.t * var[i];
        grad.mean[i] = 2.0 * (pred[i] - tg.vel_target[i]) * (a / v);
    }
    for (auto m : toymol::kAllModalities) {
        const int mi = static_cast<int>(m);
        const int alphabet = toymol::alphabet_size(m);
        const int slots = toymol::slot_count(m, ex.n);
        std::vector<double> probs(alphabet);
        for (int s = 0; s < slots; ++s) {
            mg_probs_raw(p, m, ex.n, s, probs.data());
            for (int a2 = 0; a2 < alphabet; ++a2)
                grad.logits[mi][s * alphabet + a2] =
                    probs[a2] - tg.soft_target[mi][s * alphabet + a2];
        }
    }
}

namespace {

// Lazy EMA catch-up: online has been constant since p.last_step, so the
// pending updates collapse to a single geometric blend.
void ema_catch_up(MGModel::Params& ema, const MGModel::Params& online, std::int64_t step) {
    if (ema.last_step >= step) return;
    const double keep = std::pow(MGModel::kEmaDecay, double(step - ema.last_step));
    for (std::size_t i = 0; i < ema.mean.size(); ++i)
        ema.mean[i] = online.mean[i] + (ema.mean[i] - online.mean[i]) * keep;
    for (int mi = 0; mi < 3; ++mi)
        for (std::size_t i = 0; i < ema.logits[mi].size(); ++i)
            ema.logits[mi][i] = online.logits[mi][i] + (ema.logits[mi][i] - online.logits[mi][i]) * keep;
    ema.last_step = step;
}

}  // namespace

MGModel MGModel::train(const toymol::Dataset& ds, const TrainConfig& cfg) {
    if (ds.molecules.empty()) throw EmptyDataset("MG training needs data");
    MGModel model;
    // Freeze variances from the data fit (same fallback rule as resolve()).
    const auto gauss = GaussianVelocityModel::fit(ds, true);
    for (int n = toymol::kMinAtoms; n <= toymol::kMaxAtoms; ++n)
        if (gauss.pooled()[n].count > 0) model.var_[{n, -1}] = gauss.pooled()[n].var;
    for (const auto& [key, fit] : gauss.binned())
        if (fit.count >= GaussianVelocityModel::kMinFitCount) model.var_[key] = fit.var;

    Rng rng = substream(cfg.seed, 0x36d7261a11ed0ull);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss01(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, ds.molecules.size() - 1);
    const std::int64_t steps =
        static_cast<std::int64_t>(cfg.epochs) * static_cast<std::int64_t>(ds.molecules.size());

    Example ex;
    Params grad;
    double initial_avg = 0.0;
    double running = 0.0;
    const std::int64_t probe = std::min<std::int64_t>(200, steps);

    for (std::int64_t step = 0; step < steps; ++step) {
        const std::size_t row = pick(rng);
        const auto& mol = ds.molecules[row];
        const auto& view = ds.canonical[row];
        ex.n = mol.n_atoms;
        const double cat = unif(rng);
        ex.guided = false;
        if (cat < cfg.p_uncond) {
            ex.bin = -1;
            ex.w = 0.0;
        } else if (cat < cfg.p_uncond + cfg.p_guided) {
            ex.bin = ds.bin_of[row];
            ex.w = cfg.w_sampler ? cfg.w_sampler(rng)
                                 : 1.0 + unif(rng);  // Uniform[1, 2)
            ex.guided = step >= cfg.warmup_steps;
        } else {
            ex.bin = ds.bin_of[row];
            ex.w = 1.0;
        }
        ex.t = unif(rng);
        const std::size_t dim = static_cast<std::size_t>(3 * ex.n);
        ex.x0.resize(dim);
        for (auto& v : ex.x0) v = gauss01(rng);
        ex.x1.resize(dim);
        for (int i = 0; i < ex.n; ++i)
            for (int axis = 0; axis < 3; ++axis)
                ex.x1[3 * i + axis] = view.positions[i][axis];
        ex.tokens[0] = view.atoms;
        ex.tokens[1] = view.charges;
        ex.tokens[2] = view.bonds;

        const int wbin = weight_bin(ex.w);
        Params& online_p = model.online(ex.n, ex.bin, wbin);
        Params& ema_p = model.ema(ex.n, ex.bin, wbin);
        ema_catch_up(ema_p, online_p, step);
        if (ex.guided) {
            // Correction keys must be current before they are read.
            Params& c = model.ema(ex.n, ex.bin, weight_bin(1.0));
            ema_catch_up(c, model.online(ex.n, ex.bin, weight_bin(1.0)), step);
            Params& u = model.ema(ex.n, -1, weight_bin(0.0));
            ema_catch_up(u, model.online(ex.n, -1, weight_bin(0.0)), step);
        }

        const double loss = model.example_loss(ex);
        model.example_grad(ex, grad);
        for (std::size_t i = 0; i < online_p.mean.size(); ++i)
            online_p.mean[i] -= cfg.lr * grad.mean[i];
        for (int mi = 0; mi < 3; ++mi)
            for (std::size_t i = 0; i < online_p.logits[mi].size(); ++i)
                online_p.logits[mi][i] -= cfg.lr * grad.logits[mi][i];
        // One EMA step against the fresh online values.
        for (std::size_t i = 0; i < ema_p.mean.size(); ++i)
            ema_p.mean[i] = kEmaDecay * ema_p.mean[i] + (1.0 - kEmaDecay) * online_p.mean[i];
        for (int mi = 0; mi < 3; ++mi)
            for (std::size_t i = 0; i < ema_p.logits[mi].size(); ++i)
                ema_p.logits[mi][i] =
                    kEmaDecay * ema_p.logits[mi][i] + (1.0 - kEmaDecay) * online_p.logits[mi][i];
        ema_p.last_step = step + 1;

        if (step < probe) {
            initial_avg += loss / static_cast<double>(probe);
            running = initial_avg * static_cast<double>(probe) / (step + 1);
        } else {
            running = 0.995 * running + 0.005 * loss;
            if (initial_avg > 0.0 && running > 10.0 * initial_avg)
                throw TrainingDiverged("MG loss exceeded 10x its initial average");
        }
    }
    // Flush pending EMA decay so sampling sees the end-of-training state.
    for (auto& [key, ema_p] : model.ema_) {
        const auto it = model.online_.find(key);
        if (it != model.online_.end()) ema_catch_up(ema_p, it->second, steps);
    }
    return model;
}

// ---- NoisyStateClassifier ------------------------------------------------------

NoisyStateClassifier::NoisyStateClassifier(std::shared_ptr<const toymol::Dataset> ds)
    : backend_(std::move(ds), false) {}

std::array<double, toymol::kNumPropertyBins> NoisyStateClassifier::classify(
    const RevealedState& revealed) const {
    TrajectoryPosterior traj(&backend_, revealed.n_atoms(), -1);
    for (auto m : toymol::kAllModalities) {
        const auto& seq = revealed.tokens(m);
        for (int s = 0; s < static_cast<int>(seq.size()); ++s)
            if (seq[s] != toymol::mask_token(m)) traj.reveal(m, s, seq[s]);
    }
    return traj.bin_distribution();
}

// ---- ModelSet --------------------------------------------------------------------

ModelSet fit_models(std::shared_ptr<const toymol::Dataset> ds) {
    ModelSet set;
    set.data = ds;
    set.posterior = EmpiricalPosterior(ds, true, 0.0);
    set.velocity = GaussianVelocityModel::fit(*ds, true);
    return set;
}

}  // namespace guideflow::denoisers
