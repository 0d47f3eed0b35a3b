#include <utility>

#include "guideflow/dataset_io.hpp"
#include "guideflow/denoisers.hpp"
#include "json.hpp"

namespace guideflow::denoisers {

namespace {

using nlohmann::json;

constexpr int kModelFormatVersion = 1;

json fit_to_json(int n, int bin, const GaussianFit& fit) {
    return json{{"n", n}, {"bin", bin}, {"count", fit.count}, {"mean", fit.mean},
                {"var", fit.var}};
}

GaussianFit fit_from_json(const json& j) {
    GaussianFit fit;
    fit.count = j.at("count").get<std::int64_t>();
    fit.mean = j.at("mean").get<std::vector<double>>();
    fit.var = j.at("var").get<std::vector<double>>();
    return fit;
}

json params_to_json(int key, const MGModel::Params& p) {
    return json{{"key", key},
                {"mean", p.mean},
                {"atom_logits", p.logits[0]},
                {"charge_logits", p.logits[1]},
                {"bond_logits", p.logits[2]}};
}

MGModel::Params params_from_json(const json& j) {
    MGModel::Params p;
    p.mean = j.at("mean").get<std::vector<double>>();
    p.logits[0] = j.at("atom_logits").get<std::vector<double>>();
    p.logits[1] = j.at("charge_logits").get<std::vector<double>>();
    p.logits[2] = j.at("bond_logits").get<std::vector<double>>();
    p.initialized = true;
    return p;
}

json velocity_to_json(const GaussianVelocityModel& model) {
    json pooled = json::array();
    for (int n = toymol::kMinAtoms; n <= toymol::kMaxAtoms; ++n)
        if (model.pooled()[n].count > 0) pooled.push_back(fit_to_json(n, -1, model.pooled()[n]));
    json binned = json::array();
    for (const auto& [key, fit] : model.binned())
        binned.push_back(fit_to_json(key.first, key.second, fit));
    return json{{"conditional", model.conditional()}, {"pooled", pooled}, {"binned", binned}};
}

GaussianVelocityModel velocity_from_json(const json& j, const toymol::Dataset& ds) {
    // Refit establishes the conditional flag, then every stored fit
    // overwrites the refit value so the file is authoritative.
    GaussianVelocityModel model = GaussianVelocityModel::fit(ds, j.at("conditional").get<bool>());
    for (auto& fit : model.pooled_mutable()) fit = GaussianFit{};
    for (const auto& entry : j.at("pooled"))
        model.pooled_mutable()[entry.at("n").get<int>()] = fit_from_json(entry);
    model.binned_mutable().clear();
    for (const auto& entry : j.at("binned"))
        model.binned_mutable()[{entry.at("n").get<int>(), entry.at("bin").get<int>()}] =
            fit_from_json(entry);
    return model;
}

}  // namespace

void save_models(const ModelSet& models, const std::string& path) {
    json doc;
    doc["format_version"] = kModelFormatVersion;
    doc["dataset"] = {{"seed", models.data->seed},
                      {"size", models.data->molecules.size()}};
    doc["posterior"] = {{"conditional", models.posterior.conditional()},
                        {"smoothing", models.posterior.smoothing()}};
    doc["velocity"] = velocity_to_json(models.velocity);
    if (models.guide) {
        doc["guide"] = {{"subsample_fraction", models.guide->spec.subsample_fraction},
                        {"smoothing", models.guide->spec.smoothing},
                        {"marginalize_positions", models.guide->spec.marginalize_positions},
                        {"seed", models.guide->spec.seed},
                        {"kept", models.guide->kept}};
    }
    if (models.mg) {
        json online = json::array();
        for (const auto& [key, p] : models.mg->online_table())
            online.push_back(params_to_json(key, p));
        json ema = json::array();
        for (const auto& [key, p] : models.mg->ema_table()) ema.push_back(params_to_json(key, p));
        json var = json::array();
        for (const auto& [key, v] : models.mg->var_table())
            var.push_back(json{{"n", key.first}, {"bin", key.second}, {"var", v}});
        doc["mg"] = {{"online", online}, {"ema", ema}, {"var", var}};
    }
    dataset_io::write_text_file(path, doc.dump(2) + "\n");
}

ModelSet load_models(const std::string& path, std::shared_ptr<const toymol::Dataset> ds) {
    json doc;
    try {
        doc = json::parse(dataset_io::read_text_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("model file " + path + ": " + e.what());
    }
    try {
        if (doc.at("format_version").get<int>() != kModelFormatVersion)
            throw ConfigError("model file " + path + ": unsupported format version");
        const auto& dsj = doc.at("dataset");
        if (dsj.at("seed").get<std::uint64_t>() != ds->seed ||
            dsj.at("size").get<std::size_t>() != ds->molecules.size())
            throw ConfigError("model file " + path + " was fit on a different dataset");

        ModelSet set;
        set.data = ds;
        set.posterior = EmpiricalPosterior(ds, doc.at("posterior").at("conditional").get<bool>(),
                                           doc.at("posterior").at("smoothing").get<double>());
        set.velocity = velocity_from_json(doc.at("velocity"), *ds);
        if (doc.contains("guide")) {
            const auto& g = doc.at("guide");
            GuideModelSpec spec;
            spec.subsample_fraction = g.at("subsample_fraction").get<double>();
            spec.smoothing = g.at("smoothing").get<double>();
            spec.marginalize_positions = g.at("marginalize_positions").get<bool>();
            spec.seed = g.at("seed").get<std::uint64_t>();
            set.guide = build_guide_from_rows(ds, spec, g.at("kept").get<std::vector<int>>());
        }
        if (doc.contains("mg")) {
            const auto& m = doc.at("mg");
            MGModel mg;
            for (const auto& entry : m.at("online"))
                mg.online_table()[entry.at("key").get<int>()] = params_from_json(entry);
            for (const auto& entry : m.at("ema"))
                mg.ema_table_mutable()[entry.at("key").get<int>()] = params_from_json(entry);
            for (const auto& entry : m.at("var"))
                mg.var_table()[{entry.at("n").get<int>(), entry.at("bin").get<int>()}] =
                    entry.at("var").get<std::vector<double>>();
            set.mg = std::move(mg);
        }
        return set;
    } catch (const json::exception& e) {
        throw ConfigError("model file " + path + ": " + e.what());
    }
}

}  // namespace guideflow::denoisers
