#pragma once

// Stand-ins for the neural denoisers, exact where possible:
//  - GaussianVelocityModel: per-(n, bin) diagonal Gaussian fits on
//    canonical-ordered positions, giving closed-form velocities.
//  - EmpiricalPosterior: exact match-counting posteriors p(x1 | revealed)
//    over the dataset, with an incremental per-trajectory tracker.
//  - build_guide: the degraded models used as the autoguidance anchor.
//  - MGModel: gradient-trained tabular model whose training target carries
//    the guidance correction (stop-gradient via EMA shadow parameters).
//  - NoisyStateClassifier: exact p(bin | revealed tokens, n).

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "guideflow/errors.hpp"
#include "guideflow/flowcore.hpp"
#include "guideflow/rng.hpp"
#include "guideflow/toymol.hpp"

namespace guideflow::denoisers {

using toymol::Modality;

struct SlotRef {
    Modality modality = Modality::Atoms;
    int index = 0;
};

// Partially revealed discrete state of one molecule in flight; mask tokens
// mark the slots still undecided.
class RevealedState {
  public:
    explicit RevealedState(int n_atoms);

    int n_atoms() const { return n_; }
    int token(Modality m, int slot) const { return seq_[static_cast<int>(m)][slot]; }
    bool masked(Modality m, int slot) const {
        return token(m, slot) == toymol::mask_token(m);
    }
    void set(Modality m, int slot, int token) {
        seq_[static_cast<int>(m)][static_cast<std::size_t>(slot)] =
            static_cast<std::uint8_t>(token);
    }
    const std::vector<std::uint8_t>& tokens(Modality m) const {
        return seq_[static_cast<int>(m)];
    }

  private:
    int n_ = 0;
    std::array<std::vector<std::uint8_t>, 3> seq_;
};

// ---- Continuous positions -------------------------------------------------

struct GaussianFit {
    std::vector<double> mean;  // 3n coords, canonical atom order
    std::vector<double> var;   // diagonal, floored
    std::int64_t count = 0;
};

class GaussianVelocityModel {
  public:
    static constexpr double kVarFloor = 1e-6;
    static constexpr std::int64_t kMinFitCount = 5;

    // conditional=true also fits per-(n, bin) keys; the pooled per-n fit is
    // always built and doubles as the unconditional model.
    static GaussianVelocityModel fit(const toymol::Dataset& ds, bool conditional);

    // bin < 0 selects the pooled fit; conditional keys with fewer than
    // kMinFitCount samples fall back to pooled. Throws UnresolvedKey when no
    // molecule of this size exists at all.
    const GaussianFit& resolve(int n, int bin) const;

    bool conditional() const { return conditional_; }

    // Degradations used by build_guide.
    void inflate_variance(double factor);
    void marginalize();  // forget bin keys; resolve() then always pools

    const std::array<GaussianFit, toymol::kMaxAtoms + 1>& pooled() const { return pooled_; }
    std::array<GaussianFit, toymol::kMaxAtoms + 1>& pooled_mutable() { return pooled_; }
    const std::map<std::pair<int, int>, GaussianFit>& binned() const { return binned_; }
    std::map<std::pair<int, int>, GaussianFit>& binned_mutable() { return binned_; }

  private:
    bool conditional_ = false;
    std::array<GaussianFit, toymol::kMaxAtoms + 1> pooled_{};
    std::map<std::pair<int, int>, GaussianFit> binned_;  // key (n, bin)
};

// Closed-form marginal velocity of the linear path for every coordinate of
// `fit` (see flowcore::gaussian_velocity). x and out have 3n entries.
void velocity(const GaussianFit& fit, const std::vector<double>& x, double t,
              std::vector<double>& out);

// ---- Discrete posteriors --------------------------------------------------

// Canonical token table for one n-stratum: row r is dataset molecule
// rows[r], tokens stored contiguously per modality.
struct StratumTokens {
    int n_atoms = 0;
    std::vector<int> rows;              // dataset molecule indices
    std::vector<std::uint8_t> atoms;    // rows.size() * n
    std::vector<std::uint8_t> charges;  // rows.size() * n
    std::vector<std::uint8_t> bonds;    // rows.size() * n(n-1)/2
    std::vector<std::int16_t> bins;     // property bin per row

    const std::uint8_t* row_tokens(Modality m, int row) const;
    int slot_count(Modality m) const { return toymol::slot_count(m, n_atoms); }
};

// Incremental matcher over a subset of stratum rows. Maintains per-row
// mismatch counts against the revealed tokens plus per-slot token counts
// over the currently matching rows, so reveal/remask cost O(candidate rows)
// and posterior queries cost O(alphabet).
class MatchTracker {
  public:
    MatchTracker() = default;
    // members: stratum row indices this tracker filters over.
    MatchTracker(const StratumTokens* stratum, std::vector<int> members);

    void reveal(Modality m, int slot, int token);
    void remask(Modality m, int slot, int token);  // token that had been revealed

    int match_count() const { return match_count_; }
    // Token counts at `slot` over matching rows; false when nothing matches.
    bool counts(Modality m, int slot, double* out, int alphabet) const;
    // Matching-row count per property bin (classifier backend).
    const std::vector<std::int64_t>& bin_counts() const { return bin_counts_; }

  private:
    void toggle(int member, int delta);

    const StratumTokens* stratum_ = nullptr;
    std::vector<int> members_;          // rows of stratum_ tracked here
    std::vector<std::int16_t> mismatch_;
    int match_count_ = 0;
    std::array<std::vector<std::int32_t>, 3> slot_counts_;  // [modality][slot * alphabet + a]
    std::vector<std::int64_t> bin_counts_;
};

class TrajectoryPosterior;

// Exact empirical posterior p(x1 at slot | all revealed tokens, n [, bin]).
// smoothing > 0 adds the same pseudo-count to every token (guide models).
class EmpiricalPosterior {
  public:
    EmpiricalPosterior() = default;
    EmpiricalPosterior(std::shared_ptr<const toymol::Dataset> ds, bool conditional,
                       double smoothing = 0.0);

    // One-shot query (builds a throwaway tracker); bin ignored when
    // unconditional. Fallback chain when nothing matches: conditional
    // stratum -> n-stratum -> per-slot n-stratum marginal -> uniform.
    std::vector<double> posterior(const RevealedState& revealed, SlotRef slot, int bin) const;

    TrajectoryPosterior start(int n, int bin) const;

    const StratumTokens& stratum(int n) const;
    const toymol::Dataset& dataset() const { return *ds_; }
    std::shared_ptr<const toymol::Dataset> dataset_ptr() const { return ds_; }
    bool conditional() const { return conditional_; }
    double smoothing() const { return smoothing_; }

  private:
    friend class TrajectoryPosterior;
    std::shared_ptr<const toymol::Dataset> ds_;
    bool conditional_ = false;
    double smoothing_ = 0.0;
    std::array<StratumTokens, toymol::kMaxAtoms + 1> strata_;
    // Per-slot marginals of each n-stratum (fallback level 3).
    std::array<std::array<std::vector<double>, 3>, toymol::kMaxAtoms + 1> marginals_;
};

// Per-trajectory incremental handle: feed it every reveal/remask the sampler
// performs, query posteriors for masked slots. Queries never return
// zero-mass distributions.
class TrajectoryPosterior {
  public:
    TrajectoryPosterior(const EmpiricalPosterior* model, int n, int bin);

    void reveal(Modality m, int slot, int token);
    void remask(Modality m, int slot, int token);

    // Conditional chain (or the unconditional one when the model was built
    // unconditional).
    void posterior(SlotRef slot, std::vector<double>& out) const;
    // Skips the conditional level regardless of how the model was built.
    void posterior_uncond(SlotRef slot, std::vector<double>& out) const;

    // Exact p(bin | revealed, n): matching-row bin frequencies of the
    // n-stratum, uniform when nothing matches.
    std::array<double, toymol::kNumPropertyBins> bin_distribution() const;

    int n_atoms() const { return n_; }

  private:
    void fill(SlotRef slot, bool use_cond, std::vector<double>& out) const;

    const EmpiricalPosterior* model_ = nullptr;
    int n_ = 0;
    int bin_ = -1;
    MatchTracker cond_;    // only active when model conditional and bin >= 0
    MatchTracker uncond_;  // whole n-stratum
    bool has_cond_ = false;
};

// ---- Autoguidance guide models ---------------------------------------------

struct GuideModelSpec {
    double subsample_fraction = 1.0;    // rho in (0, 1]
    double smoothing = 0.0;             // alpha: discrete pseudo-counts, continuous var x(1+alpha)
    bool marginalize_positions = false;
    std::uint64_t seed = 0;             // subsample draw
};

struct GuideModels {
    GuideModelSpec spec;
    std::vector<int> kept;  // dataset rows retained by the subsample
    std::shared_ptr<const toymol::Dataset> data;
    EmpiricalPosterior posterior;
    GaussianVelocityModel velocity;
};

// Fits the degraded guide on a rho-subsample of ds. With rho=1, alpha=0 and
// no marginalization the guide reproduces the main model bit-for-bit.
GuideModels build_guide(const std::shared_ptr<const toymol::Dataset>& ds,
                        const GuideModelSpec& spec);

// Same, but with the retained rows fixed up front (model reload path).
GuideModels build_guide_from_rows(const std::shared_ptr<const toymol::Dataset>& ds,
                                  const GuideModelSpec& spec, std::vector<int> kept);

// ---- Model-guidance trained model ------------------------------------------

// Tabular parametric model keyed by (n, bin-or-unconditional, weight bin).
// Continuous head: trainable mean per coordinate, variance frozen from the
// data fit; velocity via the same closed form as GaussianVelocityModel.
// Discrete head: trainable logits per slot. EMA shadows provide the
// stop-gradient correction target during training and are the parameters
// used at sampling time.
class MGModel {
  public:
    static constexpr double kEmaDecay = 0.9999;
    static constexpr int kNumWeightBins = 10;  // {w=0, w=1, 8 bins over (1,2]}

    struct Params {
        std::vector<double> mean;                         // 3n
        std::array<std::vector<double>, 3> logits;        // [modality][slot * alphabet + a]
        bool initialized = false;
        std::int64_t last_step = 0;  // EMA catch-up bookkeeping during training
    };

    struct TrainConfig {
        int epochs = 40;
        double lr = 0.05;
        std::int64_t warmup_steps = 1000;  // guidance correction off before this
        double p_uncond = 0.1;
        double p_guided = 0.2;
        std::uint64_t seed = 0;
        // Weight drawn for the guided fraction; default Uniform[1, 2].
        std::function<double(Rng&)> w_sampler;
    };

    // One fully explicit training example so the loss is finite-difference
    // checkable from outside.
    struct Example {
        int n = 0;
        int bin = -1;  // -1 = unconditional
        double w = 1.0;
        double t = 0.5;
        bool guided = false;  // whether the correction term is active
        std::vector<double> x0, x1;  // 3n each
        std::array<std::vector<std::uint8_t>, 3> tokens;  // clean sequences
    };

    static MGModel train(const toymol::Dataset& ds, const TrainConfig& cfg);

    // w <= 0 -> bin 0; w in (0,1] -> nearest of {0,1}; (1,2] -> 8 bins; >2 clamps.
    static int weight_bin(double w);

    // Sampling heads (EMA parameters).
    void velocity(int n, int bin, double w, const std::vector<double>& x, double t,
                  std::vector<double>& out) const;
    void posterior(int n, int bin, double w, SlotRef slot, std::vector<double>& out) const;

    // Training internals, exposed for gradient verification.
    double example_loss(const Example& ex) const;
    // Analytic d(loss)/d(online params of the touched key); grad is shaped
    // like Params, zero-filled by the call.
    void example_grad(const Example& ex, Params& grad) const;
    // Correction term alone (computed purely from EMA parameters).
    void correction(const Example& ex, std::vector<double>& velocity_corr,
                    std::array<std::vector<double>, 3>& prob_corr) const;

    Params& online(int n, int bin, int wbin);          // creates zero-initialized
    const Params* find_online(int n, int bin, int wbin) const;
    const Params* find_ema(int n, int bin, int wbin) const;
    Params& ema(int n, int bin, int wbin);
    void set_ema_to_online();

    const std::vector<double>& fixed_var(int n, int bin) const;  // frozen data variances
    std::map<int, Params>& online_table() { return online_; }
    const std::map<int, Params>& online_table() const { return online_; }
    const std::map<int, Params>& ema_table() const { return ema_; }
    std::map<int, Params>& ema_table_mutable() { return ema_; }
    std::map<std::pair<int, int>, std::vector<double>>& var_table() { return var_; }
    const std::map<std::pair<int, int>, std::vector<double>>& var_table() const { return var_; }

    static int pack_key(int n, int bin, int wbin);

  private:
    void ensure_shapes(Params& p, int n) const;

    std::map<int, Params> online_;
    std::map<int, Params> ema_;
    std::map<std::pair<int, int>, std::vector<double>> var_;  // (n, bin) -> 3n, bin -1 pooled
};

// ---- Exact noisy-state property classifier ----------------------------------

class NoisyStateClassifier {
  public:
    NoisyStateClassifier() = default;
    explicit NoisyStateClassifier(std::shared_ptr<const toymol::Dataset> ds);

    std::array<double, toymol::kNumPropertyBins> classify(const RevealedState& revealed) const;

  private:
    EmpiricalPosterior backend_;  // unconditional match machinery
};

// ---- Model bundle -----------------------------------------------------------

// Everything the sampler can reference. guide/mg stay empty unless the run
// uses autoguidance / model guidance.
struct ModelSet {
    std::shared_ptr<const toymol::Dataset> data;
    EmpiricalPosterior posterior;     // conditional, also answers uncond queries
    GaussianVelocityModel velocity;   // conditional fits + pooled fallback
    std::optional<GuideModels> guide;
    std::optional<MGModel> mg;
};

ModelSet fit_models(std::shared_ptr<const toymol::Dataset> ds);

// Versioned JSON round-trip. The dataset itself is not embedded; loading
// re-binds to `ds` and rebuilds the guide from its stored row list.
void save_models(const ModelSet& models, const std::string& path);
ModelSet load_models(const std::string& path, std::shared_ptr<const toymol::Dataset> ds);

}  // namespace guideflow::denoisers
