#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "guideflow/dataset_io.hpp"
#include "guideflow/errors.hpp"
#include "guideflow/experiment.hpp"
#include "guideflow/toymol.hpp"
#include "test_util.hpp"

using namespace guideflow;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case; removed on scope exit.
struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               fs::path("guideflow_io_test_" + std::to_string(::getpid()) + "_" +
                        std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
    static inline int counter = 0;
};

}  // namespace

TEST_CASE("format_double round-trips every bit pattern it is given") {
    const double values[] = {0.0,
                             -0.0,
                             0.1,
                             1.0 / 3.0,
                             std::numbers::pi,
                             1e-300,
                             -2.5e17,
                             std::numeric_limits<double>::max(),
                             std::numeric_limits<double>::denorm_min(),
                             123456789.123456789};
    for (double v : values) {
        const auto text = dataset_io::format_double(v);
        double back = 0.0;
        const auto result = std::from_chars(text.data(), text.data() + text.size(), back);
        REQUIRE(result.ec == std::errc{});
        CHECK(std::memcmp(&back, &v, sizeof v) == 0);
    }
}

TEST_CASE("dataset save/load round trip preserves molecules and metadata") {
    TempDir dir;
    const auto ds = toymol::generate_dataset(3, 150);
    const auto jsonl = dir.file("data.jsonl");
    const auto sidecar = dataset_io::sidecar_path_for(jsonl);
    CHECK(sidecar == dir.file("data.meta.json"));

    dataset_io::save_dataset(ds, jsonl, sidecar);
    const auto loaded = dataset_io::load_dataset(jsonl, sidecar);

    REQUIRE(loaded.size() == ds.size());
    CHECK(loaded.seed == ds.seed);
    CHECK(loaded.bin_edges == ds.bin_edges);
    CHECK(loaded.joint_nc == ds.joint_nc);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(testutil::same_molecule(loaded.molecules[i], ds.molecules[i]));
        CHECK(loaded.properties[i] == ds.properties[i]);
        CHECK(loaded.bin_of[i] == ds.bin_of[i]);
    }

    // Saving the loaded dataset again reproduces the files byte for byte.
    const auto jsonl2 = dir.file("data2.jsonl");
    const auto sidecar2 = dataset_io::sidecar_path_for(jsonl2);
    dataset_io::save_dataset(loaded, jsonl2, sidecar2);
    CHECK(dataset_io::read_text_file(jsonl2) == dataset_io::read_text_file(jsonl));
    CHECK(dataset_io::read_text_file(sidecar2) == dataset_io::read_text_file(sidecar));
}

TEST_CASE("loading rejects missing or corrupted files") {
    TempDir dir;
    CHECK_THROWS_AS(dataset_io::load_dataset(dir.file("absent.jsonl"), dir.file("absent.meta.json")),
                    IoError);

    const auto ds = toymol::generate_dataset(4, 120);
    const auto jsonl = dir.file("data.jsonl");
    const auto sidecar = dataset_io::sidecar_path_for(jsonl);
    dataset_io::save_dataset(ds, jsonl, sidecar);

    auto text = dataset_io::read_text_file(jsonl);
    text.insert(text.find('\n') / 2, "garbage{{{");
    dataset_io::write_text_file(jsonl, text);
    CHECK_THROWS_AS(dataset_io::load_dataset(jsonl, sidecar), IoError);
}

TEST_CASE("sample files carry provenance and are deterministic") {
    TempDir dir;
    const auto mol = testutil::make_molecule({0, 0}, {0, 0}, {1});
    std::vector<sampler::Sample> samples(2);
    samples[0].mol = mol;
    samples[0].target = 0.25;
    samples[0].bin = 3;
    samples[1] = samples[0];
    samples[1].target = 0.5;

    const dataset_io::RunStamp stamp{42, "deadbeef"};
    dataset_io::save_samples(samples, stamp, dir.file("samples.jsonl"));
    const auto text = dataset_io::read_text_file(dir.file("samples.jsonl"));
    CHECK(text.find("deadbeef") != std::string::npos);
    CHECK(text.find("42") != std::string::npos);

    dataset_io::save_samples(samples, stamp, dir.file("again.jsonl"));
    CHECK(dataset_io::read_text_file(dir.file("again.jsonl")) == text);
}

TEST_CASE("csv writer emits the fixed header and rejects ragged rows") {
    TempDir dir;
    const auto path = dir.file("table.csv");
    {
        dataset_io::CsvWriter csv(path, {"a", "b"});
        csv.row({dataset_io::CsvWriter::cell(0.5), dataset_io::CsvWriter::cell(std::int64_t{7})});
        CHECK_THROWS_AS(csv.row({"lonely"}), ShapeMismatch);
        csv.row({"x", "y"});
    }
    CHECK(dataset_io::read_text_file(path) == "a,b\n0.5,7\nx,y\n");
}

TEST_CASE("run config JSON round-trips and hashes deterministically") {
    experiment::RunConfig cfg;
    cfg.dataset.seed = 9;
    cfg.dataset.count = 500;
    cfg.sampling.target = 0.4;
    cfg.guidance.method = "cfg";
    cfg.guidance.weights = {1.5, 2.0};
    cfg.out_dir = "elsewhere";

    const auto text = cfg.to_json();
    const auto back = experiment::RunConfig::from_json(text);
    CHECK(back.to_json() == text);
    CHECK(back.hash() == cfg.hash());
    CHECK(back.sampling.target.has_value());
    CHECK(*back.sampling.target == 0.4);

    // Any field change must shift the hash.
    auto other = cfg;
    other.sampling.seed += 1;
    CHECK(other.hash() != cfg.hash());

    CHECK_THROWS_AS(experiment::RunConfig::from_json("{ not json"), ConfigError);
}
