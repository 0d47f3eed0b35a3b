#pragma once

// Experiment drivers shared by the CLI and the acceptance harness: run
// configuration with JSON round-trip and hashing, the weight-grid sweeps,
// the guidance-hierarchy comparison, BO weight tuning, and the method
// benchmark with radar scaling.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "guideflow/bayesopt.hpp"
#include "guideflow/ctmc.hpp"
#include "guideflow/dataset_io.hpp"
#include "guideflow/denoisers.hpp"
#include "guideflow/errors.hpp"
#include "guideflow/metrics.hpp"
#include "guideflow/sampler.hpp"
#include "guideflow/toymol.hpp"

namespace guideflow::experiment {

struct RunConfig {
    struct DatasetCfg {
        std::uint64_t seed = 1;
        int count = 4000;
        double split = 0.0;  // > 0 writes disjoint model/eval files
        std::string path;    // dataset file; empty means <out_dir>/data.jsonl
    } dataset;

    struct ModelsCfg {
        denoisers::GuideModelSpec ag;  // autoguidance degradation
        int mg_epochs = 40;
        double mg_lr = 0.05;
        std::int64_t mg_warmup_steps = 1000;
        std::uint64_t mg_seed = 11;
        bool train_mg = true;
    } models;

    struct SamplingCfg {
        int steps = 100;
        double eta = 0.0;
        int count = 1000;
        std::uint64_t seed = 7;
        std::optional<double> target;  // empty -> joint (n, c) draw
    } sampling;

    struct GuidanceCfg {
        std::string method = "vanilla";
        std::string format = "log_prob";
        std::vector<double> weights = {1.0, 1.0};  // 1, 2 or 4 entries
        double mg_weight = 1.0;
    } guidance;

    std::string out_dir = "out";

    std::string to_json() const;                       // canonical, key-sorted
    static RunConfig from_json(const std::string& text);  // throws ConfigError
    std::string hash() const;  // FNV-1a of to_json(), hex
};

// Builds the GuidanceSpec for a weight vector of size 1 (MG scale), 2
// (hybrid w1/w2) or 4 (per modality). Throws ConfigError otherwise.
sampler::GuidanceSpec make_spec(sampler::Method method, ctmc::GuidanceFormat format,
                                const std::vector<double>& weights,
                                const denoisers::GuideModelSpec& ag);

// Property MAE of `count` molecules sampled at this spec — the BO objective.
// Fixed seed across candidates gives common-random-number comparisons.
double weight_objective(const denoisers::ModelSet& models, const sampler::GuidanceSpec& spec,
                        int count, int steps, double eta, std::uint64_t seed);

// ---- Format sweep (weight grids per guidance format) -----------------------

struct SweepRow {
    ctmc::GuidanceFormat format;
    double w1 = 1.0, w2 = 1.0;
    double mae = 0.0, validity = 0.0, uniqueness = 0.0;
};

// Wide grid w1, w2 in {1.0, 1.5, 2.0, 2.5, 3.0} for linear_prob/log_prob/
// linear_rate; log_rate keeps w1 wide but narrows w2 to {1.0, ..., 1.2} in
// 0.05 steps. 25 rows per format.
std::vector<SweepRow> sweep_formats(const denoisers::ModelSet& models, int count, int steps,
                                    double eta, std::uint64_t seed);

// ---- Guidance hierarchy (continuous-only vs discrete-only vs hybrid) -------

struct HierarchyRow {
    std::string mode;  // "continuous", "discrete", "hybrid"
    double w = 1.0;
    double mae = 0.0, validity = 0.0;
};

std::vector<HierarchyRow> hierarchy(const denoisers::ModelSet& models,
                                    ctmc::GuidanceFormat format, int count, int steps,
                                    double eta, std::uint64_t seed);

// ---- BO weight tuning -------------------------------------------------------

struct TuneResult {
    bayesopt::BOTrace trace;
    sampler::GuidanceSpec best;
};

// Bounds and budgets per method: CFG [1,4] per weight with 10 + 40; AG
// w1 in [1,4.3], w2 in [1,1.8] with 10 + 40; MG single weight in [1,2] with
// 5 + 10. n_weights is 2 or 4 (ignored for MG).
TuneResult tune(const denoisers::ModelSet& models, sampler::Method method,
                ctmc::GuidanceFormat format, int n_weights,
                const denoisers::GuideModelSpec& ag, int count, int steps, double eta,
                std::uint64_t objective_seed, std::uint64_t bo_seed);

// ---- Method benchmark -------------------------------------------------------

struct BenchmarkRow {
    sampler::GuidanceSpec spec;
    metrics::MetricReport report;
    int forward_passes = 1;
};

// Samples each spec at matched seeds and fills MetricReport.scaled with the
// radar axes: alignment (MAE, lower better), validity and uniqueness (higher
// better) scaled across the compared rows, efficiency from forward passes on
// the fixed [1, 2] scale. Wall-clock seconds are recorded in the report but
// never used for scaling, so outputs stay deterministic.
std::vector<BenchmarkRow> benchmark(const denoisers::ModelSet& models,
                                    const std::vector<sampler::GuidanceSpec>& specs,
                                    int count, int steps, double eta, std::uint64_t seed);

}  // namespace guideflow::experiment
