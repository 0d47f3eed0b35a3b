// guideflow: experiment runner for the guided flow-matching sampling lab.
// Exit codes: 0 success, 2 configuration/usage problem, 3 runtime failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "guideflow/dataset_io.hpp"
#include "guideflow/denoisers.hpp"
#include "guideflow/errors.hpp"
#include "guideflow/experiment.hpp"
#include "guideflow/metrics.hpp"
#include "guideflow/sampler.hpp"
#include "guideflow/toymol.hpp"

namespace {

namespace fs = std::filesystem;
using guideflow::ConfigError;
using guideflow::experiment::RunConfig;
using nlohmann::json;
namespace gf = guideflow;

// One command at a time per output directory.
class DirLock {
  public:
    explicit DirLock(const std::string& dir) {
        fs::create_directories(dir);
        path_ = dir + "/.guideflow.lock";
        std::FILE* fp = std::fopen(path_.c_str(), "wx");
        if (!fp)
            throw ConfigError("output directory '" + dir +
                              "' is locked by another run; remove " + path_ + " if stale");
        std::fputs("locked\n", fp);
        std::fclose(fp);
    }
    ~DirLock() { std::remove(path_.c_str()); }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

  private:
    std::string path_;
};

struct Flags {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out;
    int steps = 0;
    std::string steps_list;  // benchmark variant of --steps
    double eta = 0.0;
    std::string method;
    std::string format;
    double w1 = 1.0, w2 = 1.0;
    std::vector<double> weights;
    int count = 0;
    double split = 0.0;
    double target = 0.0;

    CLI::Option* o_config = nullptr;
    CLI::Option* o_seed = nullptr;
    CLI::Option* o_out = nullptr;
    CLI::Option* o_steps = nullptr;
    CLI::Option* o_eta = nullptr;
    CLI::Option* o_method = nullptr;
    CLI::Option* o_format = nullptr;
    CLI::Option* o_w1 = nullptr;
    CLI::Option* o_w2 = nullptr;
    CLI::Option* o_weights = nullptr;
    CLI::Option* o_count = nullptr;
    CLI::Option* o_split = nullptr;
    CLI::Option* o_target = nullptr;
};

void add_common_flags(CLI::App* cmd, Flags& f, bool dataset_scope, bool steps_as_list) {
    f.o_config = cmd->add_option("--config", f.config_path,
                                 "JSON run configuration; explicit flags override its fields")
                     ->check(CLI::ExistingFile);
    f.o_seed = cmd->add_option(
        "--seed", f.seed,
        dataset_scope ? "dataset generation seed" : "sampling seed (per-molecule substreams)");
    f.o_out = cmd->add_option("--out", f.out, "output directory (default 'out')");
    if (steps_as_list)
        f.o_steps = cmd->add_option("--steps", f.steps_list,
                                    "comma-separated integration step counts, e.g. 50,100,250");
    else
        f.o_steps = cmd->add_option("--steps", f.steps, "integration steps per trajectory");
    f.o_eta = cmd->add_option("--eta", f.eta, "remasking stochasticity (>= 0)");
    f.o_method =
        cmd->add_option("--method", f.method, "guidance method: vanilla, cfg, ag or mg");
    f.o_format = cmd->add_option(
        "--format", f.format,
        "discrete guidance format: linear-prob, log-prob, linear-rate or log-rate");
    f.o_w1 = cmd->add_option("--w1", f.w1, "continuous (position) guidance weight");
    f.o_w2 = cmd->add_option("--w2", f.w2, "shared discrete guidance weight");
    f.o_weights =
        cmd->add_option("--weights", f.weights,
                        "guidance weights: four values = per-modality "
                        "[positions atoms charges bonds]; two = [w1 w2]; one = mg weight "
                        "(for tune: a single 2 or 4 selects the tuned dimensionality)")
            ->expected(1, 4);
    f.o_count = cmd->add_option("--count", f.count,
                                dataset_scope ? "dataset size" : "molecules to sample");
}

RunConfig resolve(const Flags& f, bool dataset_scope) {
    RunConfig cfg;
    if (f.o_config->count())
        cfg = RunConfig::from_json(gf::dataset_io::read_text_file(f.config_path));
    if (f.o_seed->count()) {
        if (dataset_scope)
            cfg.dataset.seed = f.seed;
        else
            cfg.sampling.seed = f.seed;
    }
    if (f.o_out->count()) cfg.out_dir = f.out;
    if (f.o_steps->count() && f.steps_list.empty()) cfg.sampling.steps = f.steps;
    if (f.o_eta->count()) cfg.sampling.eta = f.eta;
    if (f.o_method->count()) cfg.guidance.method = f.method;
    if (f.o_format->count()) cfg.guidance.format = f.format;
    if (f.o_weights->count()) {
        cfg.guidance.weights = f.weights;
        if (f.weights.size() == 1) cfg.guidance.mg_weight = f.weights[0];
    }
    if (f.o_w1->count() || f.o_w2->count()) {
        if (cfg.guidance.weights.size() != 2 && cfg.guidance.weights.size() != 4)
            cfg.guidance.weights = {1.0, 1.0};
        if (f.o_w1->count()) cfg.guidance.weights[0] = f.w1;
        if (f.o_w2->count()) {
            if (cfg.guidance.weights.size() == 4) {
                cfg.guidance.weights[1] = f.w2;
                cfg.guidance.weights[2] = f.w2;
                cfg.guidance.weights[3] = f.w2;
            } else {
                cfg.guidance.weights[1] = f.w2;
            }
        }
        if (f.o_w1->count() && cfg.guidance.method == "mg") cfg.guidance.mg_weight = f.w1;
    }
    if (f.o_count->count()) {
        if (dataset_scope)
            cfg.dataset.count = f.count;
        else
            cfg.sampling.count = f.count;
    }
    if (f.o_split && f.o_split->count()) cfg.dataset.split = f.split;
    if (f.o_target && f.o_target->count()) cfg.sampling.target = f.target;
    return cfg;
}

std::string dataset_path(const RunConfig& cfg) {
    return cfg.dataset.path.empty() ? cfg.out_dir + "/data.jsonl" : cfg.dataset.path;
}

std::string models_path(const RunConfig& cfg) { return cfg.out_dir + "/models.json"; }

void write_resolved_config(const RunConfig& cfg) {
    gf::dataset_io::write_text_file(cfg.out_dir + "/config_resolved.json", cfg.to_json());
}

std::shared_ptr<const gf::toymol::Dataset> load_dataset_checked(const RunConfig& cfg) {
    const std::string path = dataset_path(cfg);
    if (!fs::exists(path))
        throw ConfigError("dataset file " + path + " not found; run gen-data first");
    return std::make_shared<gf::toymol::Dataset>(
        gf::dataset_io::load_dataset(path, gf::dataset_io::sidecar_path_for(path)));
}

gf::denoisers::ModelSet load_models_checked(const RunConfig& cfg) {
    const std::string path = models_path(cfg);
    if (!fs::exists(path))
        throw ConfigError("model file " + path + " not found; run fit first");
    return gf::denoisers::load_models(path, load_dataset_checked(cfg));
}

gf::sampler::GuidanceSpec spec_from(const RunConfig& cfg) {
    const auto method = gf::sampler::parse_method(cfg.guidance.method);
    std::vector<double> weights = cfg.guidance.weights;
    if (method == gf::sampler::Method::Mg) weights = {cfg.guidance.mg_weight};
    return gf::experiment::make_spec(method, gf::ctmc::parse_format(cfg.guidance.format),
                                     weights, cfg.models.ag);
}

std::string fmt(double v) { return gf::dataset_io::format_double(v); }

std::string spec_to_text(const gf::sampler::GuidanceSpec& spec) {
    std::string s = gf::sampler::method_name(spec.method);
    if (spec.method == gf::sampler::Method::Mg) {
        s += " w=" + fmt(spec.mg_weight);
    } else if (spec.method != gf::sampler::Method::Vanilla) {
        s += std::string(" ") + gf::ctmc::format_name(spec.format) + " w=[";
        for (int i = 0; i < 4; ++i) s += (i ? " " : "") + fmt(spec.weights[i]);
        s += "]";
    }
    return s;
}

// ---- gen-data --------------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg) {
    DirLock lock(cfg.out_dir);
    write_resolved_config(cfg);
    const auto ds = gf::toymol::generate_dataset(cfg.dataset.seed, cfg.dataset.count);

    double lo = ds.properties[0], hi = ds.properties[0];
    std::int64_t valid = 0;
    for (std::size_t i = 0; i < ds.molecules.size(); ++i) {
        lo = std::min(lo, ds.properties[i]);
        hi = std::max(hi, ds.properties[i]);
        valid += gf::toymol::is_valid(ds.molecules[i]);
    }

    if (cfg.dataset.split > 0.0) {
        if (cfg.dataset.split >= 1.0) throw ConfigError("--split must lie in (0, 1)");
        int eval_count = static_cast<int>(std::lround(cfg.dataset.split * cfg.dataset.count));
        eval_count = std::clamp(eval_count, 1, cfg.dataset.count - 1);
        const int model_count = cfg.dataset.count - eval_count;

        gf::toymol::Dataset model_ds, eval_ds;
        model_ds.seed = ds.seed;
        eval_ds.seed = ds.seed;
        model_ds.molecules.assign(ds.molecules.begin(), ds.molecules.begin() + model_count);
        eval_ds.molecules.assign(ds.molecules.begin() + model_count, ds.molecules.end());
        model_ds.finalize();
        eval_ds.finalize_with_edges(model_ds.bin_edges);  // share the model's bins

        gf::dataset_io::save_dataset(model_ds, cfg.out_dir + "/data.jsonl",
                                     cfg.out_dir + "/data.meta.json");
        gf::dataset_io::save_dataset(eval_ds, cfg.out_dir + "/eval.jsonl",
                                     cfg.out_dir + "/eval.meta.json");
        std::cout << "wrote " << model_count << " model + " << eval_count
                  << " eval molecules to " << cfg.out_dir << "\n";
    } else {
        gf::dataset_io::save_dataset(ds, cfg.out_dir + "/data.jsonl",
                                     cfg.out_dir + "/data.meta.json");
        std::cout << "wrote " << ds.molecules.size() << " molecules to " << cfg.out_dir
                  << "/data.jsonl\n";
    }
    std::cout << "validity " << fmt(static_cast<double>(valid) / ds.molecules.size())
              << ", property range [" << fmt(lo) << ", " << fmt(hi) << "], config "
              << cfg.hash() << "\n";
    return 0;
}

// ---- fit -------------------------------------------------------------------

int cmd_fit(const RunConfig& cfg) {
    DirLock lock(cfg.out_dir);
    write_resolved_config(cfg);
    const auto ds = load_dataset_checked(cfg);

    auto models = gf::denoisers::fit_models(ds);
    models.guide = gf::denoisers::build_guide(ds, cfg.models.ag);
    if (cfg.models.train_mg) {
        gf::denoisers::MGModel::TrainConfig tc;
        tc.epochs = cfg.models.mg_epochs;
        tc.lr = cfg.models.mg_lr;
        tc.warmup_steps = cfg.models.mg_warmup_steps;
        tc.seed = cfg.models.mg_seed;
        models.mg = gf::denoisers::MGModel::train(*ds, tc);
    }
    gf::denoisers::save_models(models, models_path(cfg));

    std::cout << "fit " << ds->molecules.size() << " molecules; guide kept "
              << models.guide->kept.size() << " rows; mg "
              << (models.mg ? "trained" : "skipped") << "; wrote " << models_path(cfg)
              << " (config " << cfg.hash() << ")\n";
    return 0;
}

// ---- sample ------------------------------------------------------------------

int cmd_sample(const RunConfig& cfg) {
    DirLock lock(cfg.out_dir);
    write_resolved_config(cfg);
    const auto models = load_models_checked(cfg);
    const auto spec = spec_from(cfg);

    gf::sampler::SampleRequest req;
    req.count = cfg.sampling.count;
    req.grid.steps = cfg.sampling.steps;
    req.seed = cfg.sampling.seed;
    req.eta = cfg.sampling.eta;
    req.target = cfg.sampling.target;

    const auto start = std::chrono::steady_clock::now();
    const auto samples = gf::sampler::sample(spec, models, req);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const std::string hash = cfg.hash();
    gf::dataset_io::save_samples(samples, {req.seed, hash}, cfg.out_dir + "/samples.jsonl");

    gf::dataset_io::CsvWriter csv(
        cfg.out_dir + "/samples.csv",
        {"index", "n_atoms", "property", "target", "bin", "stable", "valid", "seed",
         "config_hash"});
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        csv.row({std::to_string(i), std::to_string(s.mol.n_atoms),
                 fmt(gf::toymol::property_oracle(s.mol)), fmt(s.target),
                 std::to_string(s.bin),
                 std::to_string(
                     static_cast<int>(gf::toymol::molecule_stability(s.mol).molecule_stable)),
                 std::to_string(static_cast<int>(gf::toymol::is_valid(s.mol))),
                 std::to_string(req.seed), hash});
    }

    const auto report = gf::metrics::evaluate(samples, seconds);
    const json rj{{"property_mae", report.property_mae},
                  {"molecule_stability_ratio", report.molecule_stability_ratio},
                  {"validity_ratio", report.validity_ratio},
                  {"valid_and_unique_ratio", report.valid_and_unique_ratio},
                  {"bond_entropy", report.bond_entropy},
                  {"element_entropy", report.element_entropy},
                  {"sampling_seconds", report.sampling_seconds},
                  {"seed", req.seed},
                  {"config_hash", hash}};
    gf::dataset_io::write_text_file(cfg.out_dir + "/sample_report.json", rj.dump(2) + "\n");

    std::cout << "sampled " << samples.size() << " molecules (" << spec_to_text(spec)
              << "): mae " << fmt(report.property_mae) << ", validity "
              << fmt(report.validity_ratio) << ", config " << hash << "\n";
    return 0;
}

// ---- sweep-formats --------------------------------------------------------------

int cmd_sweep_formats(const RunConfig& cfg) {
    DirLock lock(cfg.out_dir);
    write_resolved_config(cfg);
    const auto models = load_models_checked(cfg);
    const auto rows = gf::experiment::sweep_formats(models, cfg.sampling.count,
                                                    cfg.sampling.steps, cfg.sampling.eta,
                                                    cfg.sampling.seed);
    const std::string hash = cfg.hash();
    gf::dataset_io::CsvWriter csv(
        cfg.out_dir + "/sweep_formats.csv",
        {"format", "w1", "w2", "mae", "validity", "uniqueness", "seed", "config_hash"});
    for (const auto& r : rows)
        csv.row({gf::ctmc::format_name(r.format), fmt(r.w1), fmt(r.w2), fmt(r.mae),
                 fmt(r.validity), fmt(r.uniqueness), std::to_string(cfg.sampling.seed), hash});
    std::cout << "swept " << rows.size() << " (format, w1, w2) cells -> " << cfg.out_dir
              << "/sweep_formats.csv (config " << hash << ")\n";
    return 0;
}

// ---- hierarchy --------------------------------------------------------------------

int cmd_hierarchy(const RunConfig& cfg) {
    DirLock lock(cfg.out_dir);
    write_resolved_config(cfg);
    const auto models = load_models_checked(cfg);
    const auto rows = gf::experiment::hierarchy(
        models, gf::ctmc::parse_format(cfg.guidance.format), cfg.sampling.count,
        cfg.sampling.steps, cfg.sampling.eta, cfg.sampling.seed);
    const std::string hash = cfg.hash();
    gf::dataset_io::CsvWriter csv(cfg.out_dir + "/hierarchy.csv",
                                  {"mode", "w", "mae", "validity", "seed", "config_hash"});
    for (const auto& r : rows)
        csv.row({r.mode, fmt(r.w), fmt(r.mae), fmt(r.validity),
                 std::to_string(cfg.sampling.seed), hash});
    std::cout << "wrote " << rows.size() << " hierarchy rows -> " << cfg.out_dir
              << "/hierarchy.csv (config " << hash << ")\n";
    return 0;
}

// ---- tune ------------------------------------------------------------------------

int cmd_tune(const RunConfig& cfg) {
    DirLock lock(cfg.out_dir);
    write_resolved_config(cfg);
    const auto models = load_models_checked(cfg);
    const auto method = gf::sampler::parse_method(cfg.guidance.method);
    const auto format = gf::ctmc::parse_format(cfg.guidance.format);

    int n_weights = static_cast<int>(cfg.guidance.weights.size());
    if (cfg.guidance.weights.size() == 1) {
        // A single value names the dimensionality to tune (2 or 4).
        const double v = cfg.guidance.weights[0];
        if (v != 2.0 && v != 4.0 && method != gf::sampler::Method::Mg)
            throw ConfigError("tune: --weights takes a single 2 or 4 (dimensionality)");
        n_weights = static_cast<int>(v);
    }

    const auto result = gf::experiment::tune(models, method, format, n_weights, cfg.models.ag,
                                             cfg.sampling.count, cfg.sampling.steps,
                                             cfg.sampling.eta, cfg.sampling.seed,
                                             cfg.sampling.seed);
    const std::string hash = cfg.hash();

    const int dims = static_cast<int>(result.trace.best_x.size());
    std::vector<std::string> header{"iteration"};
    for (int d = 0; d < dims; ++d) header.push_back("w" + std::to_string(d + 1));
    header.insert(header.end(), {"objective", "incumbent", "seed", "config_hash"});
    gf::dataset_io::CsvWriter csv(cfg.out_dir + "/tune_trace.csv", header);
    for (const auto& row : result.trace.rows) {
        std::vector<std::string> cells{std::to_string(row.iteration)};
        for (double v : row.x) cells.push_back(fmt(v));
        cells.push_back(fmt(row.y));
        cells.push_back(fmt(row.incumbent));
        cells.push_back(std::to_string(cfg.sampling.seed));
        cells.push_back(hash);
        csv.row(cells);
    }

    json incumbent{{"method", gf::sampler::method_name(method)},
                   {"format", gf::ctmc::format_name(format)},
                   {"weights", result.trace.best_x},
                   {"objective", result.trace.best_y},
                   {"seed", cfg.sampling.seed},
                   {"config_hash", hash}};
    gf::dataset_io::write_text_file(cfg.out_dir + "/tune_incumbent.json",
                                    incumbent.dump(2) + "\n");

    std::cout << "tuned " << gf::sampler::method_name(method) << "/"
              << gf::ctmc::format_name(format) << ": best objective "
              << fmt(result.trace.best_y) << " at";
    for (double v : result.trace.best_x) std::cout << ' ' << fmt(v);
    std::cout << " (config " << hash << ")\n";
    return 0;
}

// ---- benchmark ----------------------------------------------------------------------

std::vector<int> parse_steps_list(const std::string& text, int fallback) {
    if (text.empty()) return {fallback};
    std::vector<int> steps;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = text.find(',', pos);
        const std::string part =
            text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
            std::size_t used = 0;
            const int v = std::stoi(part, &used);
            if (used != part.size() || v <= 0) throw std::invalid_argument(part);
            steps.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError("--steps expects positive integers, got '" + part + "'");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return steps;
}

int cmd_benchmark(const RunConfig& cfg, const std::string& steps_list) {
    DirLock lock(cfg.out_dir);
    write_resolved_config(cfg);
    const auto models = load_models_checked(cfg);
    const auto format = gf::ctmc::parse_format(cfg.guidance.format);
    const std::string hash = cfg.hash();

    std::vector<gf::sampler::GuidanceSpec> specs;
    specs.push_back(gf::experiment::make_spec(gf::sampler::Method::Vanilla, format,
                                              {1.0, 1.0}, cfg.models.ag));
    specs.push_back(gf::experiment::make_spec(gf::sampler::Method::Cfg, format,
                                              cfg.guidance.weights, cfg.models.ag));
    specs.push_back(gf::experiment::make_spec(gf::sampler::Method::Ag, format,
                                              cfg.guidance.weights, cfg.models.ag));
    if (models.mg)
        specs.push_back(gf::experiment::make_spec(gf::sampler::Method::Mg, format,
                                                  {cfg.guidance.mg_weight}, cfg.models.ag));

    gf::dataset_io::CsvWriter csv(
        cfg.out_dir + "/benchmark.csv",
        {"steps", "method", "format", "w_pos", "w_atoms", "w_charges", "w_bonds", "mg_weight",
         "forward_passes", "mae", "stability", "validity", "valid_unique", "bond_entropy",
         "element_entropy", "seed", "config_hash"});
    gf::dataset_io::CsvWriter radar(cfg.out_dir + "/benchmark_radar.csv",
                                    {"steps", "method", "alignment", "validity", "uniqueness",
                                     "efficiency", "seed", "config_hash"});
    json timing = json::array();

    for (int steps : parse_steps_list(steps_list, cfg.sampling.steps)) {
        const auto rows = gf::experiment::benchmark(models, specs, cfg.sampling.count, steps,
                                                    cfg.sampling.eta, cfg.sampling.seed);
        for (const auto& r : rows) {
            const char* name = gf::sampler::method_name(r.spec.method);
            csv.row({std::to_string(steps), name, gf::ctmc::format_name(r.spec.format),
                     fmt(r.spec.weights[0]), fmt(r.spec.weights[1]), fmt(r.spec.weights[2]),
                     fmt(r.spec.weights[3]), fmt(r.spec.mg_weight),
                     std::to_string(r.forward_passes), fmt(r.report.property_mae),
                     fmt(r.report.molecule_stability_ratio), fmt(r.report.validity_ratio),
                     fmt(r.report.valid_and_unique_ratio), fmt(r.report.bond_entropy),
                     fmt(r.report.element_entropy), std::to_string(cfg.sampling.seed), hash});
            radar.row({std::to_string(steps), name, fmt(r.report.scaled.at("alignment")),
                       fmt(r.report.scaled.at("validity")),
                       fmt(r.report.scaled.at("uniqueness")),
                       fmt(r.report.scaled.at("efficiency")),
                       std::to_string(cfg.sampling.seed), hash});
            timing.push_back({{"steps", steps},
                              {"method", name},
                              {"sampling_seconds", r.report.sampling_seconds}});
        }
        std::cout << "benchmarked " << rows.size() << " methods at " << steps << " steps\n";
    }
    // Wall clocks go to JSON only; the CSVs must be rerun-identical.
    gf::dataset_io::write_text_file(cfg.out_dir + "/benchmark_timing.json",
                                    timing.dump(2) + "\n");
    std::cout << "wrote " << cfg.out_dir << "/benchmark.csv and benchmark_radar.csv (config "
              << hash << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "guideflow: guided flow-matching sampling laboratory over a toy molecular domain.\n"
        "Precedence: explicit command-line flags override fields read from --config; values\n"
        "absent from both fall back to built-in defaults."};
    app.require_subcommand(1);

    Flags f_gen, f_fit, f_sample, f_sweep, f_hier, f_tune, f_bench;

    auto* gen = app.add_subcommand("gen-data", "Generate the toy dataset (JSON-lines + sidecar)");
    add_common_flags(gen, f_gen, true, false);
    f_gen.o_split = gen->add_option("--split", f_gen.split,
                                    "fraction held out into eval.jsonl (0 disables)");

    auto* fit = app.add_subcommand("fit", "Fit denoiser models on the dataset");
    add_common_flags(fit, f_fit, false, false);

    auto* smp = app.add_subcommand("sample", "Sample molecules under a guidance spec");
    add_common_flags(smp, f_sample, false, false);
    f_sample.o_target = smp->add_option("--target", f_sample.target,
                                        "fixed property target (default: joint draw)");

    auto* swp = app.add_subcommand("sweep-formats",
                                   "Weight-grid sweep across the four guidance formats");
    add_common_flags(swp, f_sweep, false, false);

    auto* hier = app.add_subcommand(
        "hierarchy", "Continuous-only vs discrete-only vs hybrid guidance curves");
    add_common_flags(hier, f_hier, false, false);

    auto* tune = app.add_subcommand("tune", "Bayesian optimization of guidance weights");
    add_common_flags(tune, f_tune, false, false);

    auto* bench = app.add_subcommand("benchmark",
                                     "Compare methods at fixed weights (metrics + radar)");
    add_common_flags(bench, f_bench, false, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(resolve(f_gen, true));
        if (fit->parsed()) return cmd_fit(resolve(f_fit, false));
        if (smp->parsed()) return cmd_sample(resolve(f_sample, false));
        if (swp->parsed()) return cmd_sweep_formats(resolve(f_sweep, false));
        if (hier->parsed()) return cmd_hierarchy(resolve(f_hier, false));
        if (tune->parsed()) return cmd_tune(resolve(f_tune, false));
        if (bench->parsed()) return cmd_benchmark(resolve(f_bench, false), f_bench.steps_list);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
