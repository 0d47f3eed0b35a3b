#include "guideflow/experiment.hpp"

#include <chrono>
#include <cmath>

#include "json.hpp"

namespace guideflow::experiment {

using nlohmann::json;

namespace {

json config_to_json(const RunConfig& cfg) {
    json j;
    j["dataset"] = {{"seed", cfg.dataset.seed},
                    {"count", cfg.dataset.count},
                    {"split", cfg.dataset.split},
                    {"path", cfg.dataset.path}};
    j["models"] = {{"ag_subsample_fraction", cfg.models.ag.subsample_fraction},
                   {"ag_smoothing", cfg.models.ag.smoothing},
                   {"ag_marginalize_positions", cfg.models.ag.marginalize_positions},
                   {"ag_seed", cfg.models.ag.seed},
                   {"mg_epochs", cfg.models.mg_epochs},
                   {"mg_lr", cfg.models.mg_lr},
                   {"mg_warmup_steps", cfg.models.mg_warmup_steps},
                   {"mg_seed", cfg.models.mg_seed},
                   {"train_mg", cfg.models.train_mg}};
    json sampling = {{"steps", cfg.sampling.steps},
                     {"eta", cfg.sampling.eta},
                     {"count", cfg.sampling.count},
                     {"seed", cfg.sampling.seed}};
    if (cfg.sampling.target) sampling["target"] = *cfg.sampling.target;
    j["sampling"] = sampling;
    j["guidance"] = {{"method", cfg.guidance.method},
                     {"format", cfg.guidance.format},
                     {"weights", cfg.guidance.weights},
                     {"mg_weight", cfg.guidance.mg_weight}};
    j["out_dir"] = cfg.out_dir;
    return j;
}

}  // namespace

std::string RunConfig::to_json() const { return config_to_json(*this).dump(2) + "\n"; }

RunConfig RunConfig::from_json(const std::string& text) {
    RunConfig cfg;
    try {
        const json j = json::parse(text);
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            if (d.contains("seed")) cfg.dataset.seed = d.at("seed").get<std::uint64_t>();
            if (d.contains("count")) cfg.dataset.count = d.at("count").get<int>();
            if (d.contains("split")) cfg.dataset.split = d.at("split").get<double>();
            if (d.contains("path")) cfg.dataset.path = d.at("path").get<std::string>();
        }
        if (j.contains("models")) {
            const auto& m = j.at("models");
            if (m.contains("ag_subsample_fraction"))
                cfg.models.ag.subsample_fraction = m.at("ag_subsample_fraction").get<double>();
            if (m.contains("ag_smoothing"))
                cfg.models.ag.smoothing = m.at("ag_smoothing").get<double>();
            if (m.contains("ag_marginalize_positions"))
                cfg.models.ag.marginalize_positions =
                    m.at("ag_marginalize_positions").get<bool>();
            if (m.contains("ag_seed")) cfg.models.ag.seed = m.at("ag_seed").get<std::uint64_t>();
            if (m.contains("mg_epochs")) cfg.models.mg_epochs = m.at("mg_epochs").get<int>();
            if (m.contains("mg_lr")) cfg.models.mg_lr = m.at("mg_lr").get<double>();
            if (m.contains("mg_warmup_steps"))
                cfg.models.mg_warmup_steps = m.at("mg_warmup_steps").get<std::int64_t>();
            if (m.contains("mg_seed")) cfg.models.mg_seed = m.at("mg_seed").get<std::uint64_t>();
            if (m.contains("train_mg")) cfg.models.train_mg = m.at("train_mg").get<bool>();
        }
        if (j.contains("sampling")) {
            const auto& s = j.at("sampling");
            if (s.contains("steps")) cfg.sampling.steps = s.at("steps").get<int>();
            if (s.contains("eta")) cfg.sampling.eta = s.at("eta").get<double>();
            if (s.contains("count")) cfg.sampling.count = s.at("count").get<int>();
            if (s.contains("seed")) cfg.sampling.seed = s.at("seed").get<std::uint64_t>();
            if (s.contains("target")) cfg.sampling.target = s.at("target").get<double>();
        }
        if (j.contains("guidance")) {
            const auto& g = j.at("guidance");
            if (g.contains("method")) cfg.guidance.method = g.at("method").get<std::string>();
            if (g.contains("format")) cfg.guidance.format = g.at("format").get<std::string>();
            if (g.contains("weights"))
                cfg.guidance.weights = g.at("weights").get<std::vector<double>>();
            if (g.contains("mg_weight"))
                cfg.guidance.mg_weight = g.at("mg_weight").get<double>();
        }
        if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse: ") + e.what());
    }
    return cfg;
}

std::string RunConfig::hash() const {
    // FNV-1a over the canonical serialization.
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : to_json()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = digits[h & 0xf];
        h >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf);
}

sampler::GuidanceSpec make_spec(sampler::Method method, ctmc::GuidanceFormat format,
                                const std::vector<double>& weights,
                                const denoisers::GuideModelSpec& ag) {
    sampler::GuidanceSpec spec;
    spec.method = method;
    spec.format = format;
    spec.ag_guide = ag;
    switch (weights.size()) {
        case 1:
            if (method == sampler::Method::Mg) {
                spec.mg_weight = weights[0];
            } else {
                spec.weights = {weights[0], weights[0], weights[0], weights[0]};
            }
            break;
        case 2:
            spec.weights = sampler::GuidanceSpec::hybrid_weights(weights[0], weights[1]);
            break;
        case 4:
            spec.weights = {weights[0], weights[1], weights[2], weights[3]};
            break;
        default:
            throw ConfigError("weights must have 1, 2 or 4 entries");
    }
    spec.validate();
    return spec;
}

double weight_objective(const denoisers::ModelSet& models, const sampler::GuidanceSpec& spec,
                        int count, int steps, double eta, std::uint64_t seed) {
    sampler::SampleRequest req;
    req.count = count;
    req.grid.steps = steps;
    req.seed = seed;
    req.eta = eta;
    return metrics::property_mae(sampler::sample(spec, models, req));
}

// ---- Format sweep ---------------------------------------------------------------

std::vector<SweepRow> sweep_formats(const denoisers::ModelSet& models, int count, int steps,
                                    double eta, std::uint64_t seed) {
    const std::vector<double> wide{1.0, 1.5, 2.0, 2.5, 3.0};
    const std::vector<double> narrow{1.0, 1.05, 1.1, 1.15, 1.2};
    std::vector<SweepRow> rows;
    for (auto format : {ctmc::GuidanceFormat::LinearProb, ctmc::GuidanceFormat::LogProb,
                        ctmc::GuidanceFormat::LinearRate, ctmc::GuidanceFormat::LogRate}) {
        const auto& w2_grid = format == ctmc::GuidanceFormat::LogRate ? narrow : wide;
        for (double w1 : wide)
            for (double w2 : w2_grid) {
                const auto spec =
                    make_spec(sampler::Method::Cfg, format, {w1, w2}, {});
                sampler::SampleRequest req;
                req.count = count;
                req.grid.steps = steps;
                req.seed = seed;
                req.eta = eta;
                const auto samples = sampler::sample(spec, models, req);
                SweepRow row;
                row.format = format;
                row.w1 = w1;
                row.w2 = w2;
                row.mae = metrics::property_mae(samples);
                const auto report = metrics::evaluate(samples, 0.0);
                row.validity = report.validity_ratio;
                row.uniqueness = report.valid_and_unique_ratio;
                rows.push_back(row);
            }
    }
    return rows;
}

// ---- Guidance hierarchy ----------------------------------------------------------

std::vector<HierarchyRow> hierarchy(const denoisers::ModelSet& models,
                                    ctmc::GuidanceFormat format, int count, int steps,
                                    double eta, std::uint64_t seed) {
    const std::vector<double> grid{1.0, 1.5, 2.0, 2.5, 3.0};
    std::vector<HierarchyRow> rows;
    const auto run = [&](const std::string& mode, double w, double w1, double w2) {
        const auto spec = make_spec(sampler::Method::Cfg, format, {w1, w2}, {});
        sampler::SampleRequest req;
        req.count = count;
        req.grid.steps = steps;
        req.seed = seed;
        req.eta = eta;
        const auto samples = sampler::sample(spec, models, req);
        HierarchyRow row;
        row.mode = mode;
        row.w = w;
        row.mae = metrics::property_mae(samples);
        std::int64_t valid = 0;
        for (const auto& s : samples) valid += toymol::is_valid(s.mol);
        row.validity = static_cast<double>(valid) / static_cast<double>(samples.size());
        rows.push_back(row);
    };
    for (double w : grid) run("continuous", w, w, 1.0);
    for (double w : grid) run("discrete", w, 1.0, w);
    for (double w : grid) run("hybrid", w, w, w);
    return rows;
}

// ---- BO weight tuning --------------------------------------------------------------

TuneResult tune(const denoisers::ModelSet& models, sampler::Method method,
                ctmc::GuidanceFormat format, int n_weights,
                const denoisers::GuideModelSpec& ag, int count, int steps, double eta,
                std::uint64_t objective_seed, std::uint64_t bo_seed) {
    bayesopt::BOProblem problem;
    problem.seed = bo_seed;
    switch (method) {
        case sampler::Method::Cfg:
            if (n_weights != 2 && n_weights != 4)
                throw ConfigError("cfg tuning uses 2 or 4 weights");
            problem.bounds.assign(static_cast<std::size_t>(n_weights), {1.0, 4.0});
            problem.n_initial = 10;
            problem.n_iterations = 40;
            break;
        case sampler::Method::Ag:
            if (n_weights != 2) throw ConfigError("ag tuning uses 2 weights");
            problem.bounds = {{1.0, 4.3}, {1.0, 1.8}};
            problem.n_initial = 10;
            problem.n_iterations = 40;
            break;
        case sampler::Method::Mg:
            problem.bounds = {{1.0, 2.0}};
            problem.n_initial = 5;
            problem.n_iterations = 10;
            break;
        case sampler::Method::Vanilla:
            throw ConfigError("vanilla has no weights to tune");
    }
    problem.objective = [&](const std::vector<double>& w) {
        const auto spec = make_spec(method, format, w, ag);
        return weight_objective(models, spec, count, steps, eta, objective_seed);
    };
    TuneResult result;
    result.trace = bayesopt::optimize(problem);
    result.best = make_spec(method, format, result.trace.best_x, ag);
    return result;
}

// ---- Method benchmark ----------------------------------------------------------------

std::vector<BenchmarkRow> benchmark(const denoisers::ModelSet& models,
                                    const std::vector<sampler::GuidanceSpec>& specs,
                                    int count, int steps, double eta, std::uint64_t seed) {
    if (specs.empty()) throw EmptyInput("benchmark needs specs");
    std::vector<BenchmarkRow> rows;
    rows.reserve(specs.size());
    for (const auto& spec : specs) {
        sampler::SampleRequest req;
        req.count = count;
        req.grid.steps = steps;
        req.seed = seed;
        req.eta = eta;
        const auto start = std::chrono::steady_clock::now();
        const auto samples = sampler::sample(spec, models, req);
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        BenchmarkRow row;
        row.spec = spec;
        row.report = metrics::evaluate(samples, seconds);
        row.forward_passes = sampler::forward_passes(spec.method);
        rows.push_back(std::move(row));
    }

    // Radar axes. Data-dependent metrics scale across the compared rows; the
    // efficiency axis uses the fixed [1, 2] forward-pass range so it does not
    // depend on wall clocks.
    const auto minmax = [&](auto get) {
        double lo = get(rows.front()), hi = lo;
        for (const auto& r : rows) {
            lo = std::min(lo, get(r));
            hi = std::max(hi, get(r));
        }
        return std::pair<double, double>(lo, hi);
    };
    const auto axis = [&](const std::string& name, auto get, bool higher_better) {
        auto [lo, hi] = minmax(get);
        for (auto& r : rows)
            r.report.scaled[name] =
                hi > lo ? metrics::radar_scale(get(r), lo, hi, higher_better)
                        : 1.0;  // indistinguishable rows all score full marks
    };
    axis("alignment", [](const BenchmarkRow& r) { return r.report.property_mae; }, false);
    axis("validity", [](const BenchmarkRow& r) { return r.report.validity_ratio; }, true);
    axis("uniqueness", [](const BenchmarkRow& r) { return r.report.valid_and_unique_ratio; },
         true);
    for (auto& r : rows)
        r.report.scaled["efficiency"] =
            metrics::radar_scale(static_cast<double>(r.forward_passes), 1.0, 2.0, false);
    return rows;
}

}  // namespace guideflow::experiment
