#pragma once

// Persistence: datasets as JSON-lines plus a JSON sidecar, generated samples
// in the same line format augmented with run provenance, and deterministic
// CSV emission (shortest round-trip doubles, so reruns are byte-identical).

#include <cstdint>
#include <string>
#include <vector>

#include "guideflow/errors.hpp"
#include "guideflow/sampler.hpp"
#include "guideflow/toymol.hpp"

namespace guideflow::dataset_io {

// Shortest decimal string that round-trips the exact double.
std::string format_double(double v);

// One molecule per line: n, atom codes, charges, bond list, positions,
// property. Sidecar holds seed, bin edges and the (n, bin) joint table.
void save_dataset(const toymol::Dataset& ds, const std::string& jsonl_path,
                  const std::string& sidecar_path);
toymol::Dataset load_dataset(const std::string& jsonl_path, const std::string& sidecar_path);

// Derives "<stem>.meta.json" next to a "<stem>.jsonl" file.
std::string sidecar_path_for(const std::string& jsonl_path);

struct RunStamp {
    std::uint64_t seed = 0;
    std::string config_hash;
};

// Molecule lines augmented with target property and provenance.
void save_samples(const std::vector<sampler::Sample>& samples, const RunStamp& stamp,
                  const std::string& path);

// Minimal CSV writer: fixed header, one call per row, deterministic float
// text. Overwrites the file.
class CsvWriter {
  public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);
    ~CsvWriter();
    void row(const std::vector<std::string>& cells);
    static std::string cell(double v) { return format_double(v); }
    static std::string cell(std::int64_t v) { return std::to_string(v); }

  private:
    std::string path_;
    std::string buffer_;
    std::size_t columns_ = 0;
};

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace guideflow::dataset_io
