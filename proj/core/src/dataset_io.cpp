#include "guideflow/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace guideflow::dataset_io {

using nlohmann::json;

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed for " + path);
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + path);
}

namespace {

json molecule_to_json(const toymol::ToyMolecule& mol) {
    json pos = json::array();
    for (const auto& p : mol.positions) pos.push_back(json::array({p[0], p[1], p[2]}));
    return json{{"n", mol.n_atoms},
                {"atoms", mol.atom_types},
                {"charges", mol.charges},
                {"bonds", mol.bond_orders},
                {"positions", pos}};
}

toymol::ToyMolecule molecule_from_json(const json& j) {
    toymol::ToyMolecule mol;
    mol.n_atoms = j.at("n").get<int>();
    mol.atom_types = j.at("atoms").get<std::vector<std::uint8_t>>();
    mol.charges = j.at("charges").get<std::vector<std::int8_t>>();
    mol.bond_orders = j.at("bonds").get<std::vector<std::uint8_t>>();
    for (const auto& p : j.at("positions"))
        mol.positions.push_back({p.at(0).get<double>(), p.at(1).get<double>(),
                                 p.at(2).get<double>()});
    return mol;
}

}  // namespace

void save_dataset(const toymol::Dataset& ds, const std::string& jsonl_path,
                  const std::string& sidecar_path) {
    std::string lines;
    for (std::size_t i = 0; i < ds.molecules.size(); ++i) {
        json j = molecule_to_json(ds.molecules[i]);
        j["property"] = ds.properties[i];
        lines += j.dump();
        lines += '\n';
    }
    write_text_file(jsonl_path, lines);

    json joint = json::array();
    for (const auto& col : ds.joint_nc) joint.push_back(col);
    const json sidecar{{"seed", ds.seed},
                       {"count", ds.molecules.size()},
                       {"bin_edges", ds.bin_edges},
                       {"joint_nc", joint}};
    write_text_file(sidecar_path, sidecar.dump(2) + "\n");
}

toymol::Dataset load_dataset(const std::string& jsonl_path, const std::string& sidecar_path) {
    toymol::Dataset ds;
    json sidecar;
    try {
        sidecar = json::parse(read_text_file(sidecar_path));
        ds.seed = sidecar.at("seed").get<std::uint64_t>();
        const auto edges = sidecar.at("bin_edges").get<std::vector<double>>();
        if (edges.size() != ds.bin_edges.size())
            throw IoError("sidecar bin_edges has wrong length");
        std::copy(edges.begin(), edges.end(), ds.bin_edges.begin());

        std::istringstream lines(read_text_file(jsonl_path));
        std::string line;
        std::vector<double> stored;
        while (std::getline(lines, line)) {
            if (line.empty()) continue;
            const json j = json::parse(line);
            ds.molecules.push_back(molecule_from_json(j));
            stored.push_back(j.at("property").get<double>());
        }
        if (ds.molecules.empty()) throw IoError("dataset file " + jsonl_path + " is empty");
        const auto edges_copy = ds.bin_edges;
        ds.finalize_with_edges(edges_copy);
        const auto expected = sidecar.at("count").get<std::size_t>();
        if (ds.molecules.size() != expected)
            throw IoError("dataset line count does not match sidecar");
        for (std::size_t i = 0; i < stored.size(); ++i)
            if (stored[i] != ds.properties[i])
                throw IoError("stored property disagrees with the oracle at line " +
                              std::to_string(i));
    } catch (const json::exception& e) {
        throw IoError("dataset load " + jsonl_path + ": " + e.what());
    }
    return ds;
}

std::string sidecar_path_for(const std::string& jsonl_path) {
    const std::string suffix = ".jsonl";
    if (jsonl_path.size() > suffix.size() &&
        jsonl_path.compare(jsonl_path.size() - suffix.size(), suffix.size(), suffix) == 0)
        return jsonl_path.substr(0, jsonl_path.size() - suffix.size()) + ".meta.json";
    return jsonl_path + ".meta.json";
}

void save_samples(const std::vector<sampler::Sample>& samples, const RunStamp& stamp,
                  const std::string& path) {
    std::string lines;
    for (const auto& s : samples) {
        json j = molecule_to_json(s.mol);
        j["property"] = toymol::property_oracle(s.mol);
        j["target"] = s.target;
        j["bin"] = s.bin;
        j["seed"] = stamp.seed;
        j["config_hash"] = stamp.config_hash;
        lines += j.dump();
        lines += '\n';
    }
    write_text_file(path, lines);
}

// ---- CsvWriter -----------------------------------------------------------------

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : path_(path), columns_(header.size()) {
    if (header.empty()) throw ConfigError("CSV needs a header");
    row(header);
}

CsvWriter::~CsvWriter() {
    try {
        write_text_file(path_, buffer_);
    } catch (...) {
        // Destructors must not throw; a failed flush surfaces as a missing file.
    }
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw ShapeMismatch("CSV row width");
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& cell = cells[i];
        if (cell.find_first_of(",\"\n") != std::string::npos)
            throw ConfigError("CSV cells must not contain commas, quotes or newlines");
        if (i) buffer_ += ',';
        buffer_ += cell;
    }
    buffer_ += '\n';
}

}  // namespace guideflow::dataset_io
