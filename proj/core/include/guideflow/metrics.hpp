#pragma once

// Evaluation metrics over generated samples: property alignment, structural
// validity/stability, uniqueness, diversity entropies, and radar min-max
// scaling.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "guideflow/errors.hpp"
#include "guideflow/sampler.hpp"
#include "guideflow/toymol.hpp"

namespace guideflow::metrics {

struct MetricReport {
    double property_mae = 0.0;
    double molecule_stability_ratio = 0.0;
    double validity_ratio = 0.0;
    double valid_and_unique_ratio = 0.0;
    double bond_entropy = 0.0;     // bits over {single, double, triple}
    double element_entropy = 0.0;  // bits over the 4 atom types
    double sampling_seconds = 0.0;
    std::map<std::string, double> scaled;  // radar axes, filled by benchmark
};

// mean |property_oracle(mol) - target|; throws EmptyInput.
double property_mae(const std::vector<sampler::Sample>& samples);

// Base-2 entropy of normalized counts; zero categories contribute nothing.
// Throws AllZero when every count is zero.
double shannon_entropy(const std::vector<std::int64_t>& counts);

// |distinct canonical keys among valid molecules| / |samples|.
double uniqueness(const std::vector<sampler::Sample>& samples);

// Min-max transform onto [0, 1]; lower-better metrics are flipped. Values
// outside [lo, hi] clamp. Throws DegenerateRange when hi <= lo.
double radar_scale(double value, double lo, double hi, bool higher_better);

// All sample-level metrics in one pass (scaled map left empty).
MetricReport evaluate(const std::vector<sampler::Sample>& samples, double sampling_seconds);

}  // namespace guideflow::metrics
