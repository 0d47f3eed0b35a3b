#pragma once

// Discrete flow over token sequences via a masking-process CTMC. Sequences
// start all-mask at t = 0; per slot, rates push probability from the mask
// token toward the denoiser posterior, with an optional stochasticity knob
// eta that re-masks settled tokens.

#include <cstdint>
#include <string>
#include <vector>

#include "guideflow/errors.hpp"
#include "guideflow/rng.hpp"

namespace guideflow::ctmc {

// Probability floor applied before logs / fractional powers in the log-space
// guidance formats.
inline constexpr double kProbFloor = 1e-12;

// How a guided transition law is assembled from unconditional + conditional
// inputs. The *Prob formats blend denoiser posteriors before rates are
// built; the *Rate formats blend fully built rate rows.
enum class GuidanceFormat : std::uint8_t { LinearProb, LogProb, LinearRate, LogRate };

const char* format_name(GuidanceFormat f);
GuidanceFormat parse_format(const std::string& name);  // throws ConfigError

// A rate row R(z -> .) over the S real tokens plus the mask (index S).
// Off-diagonals are >= 0 (or: finite for LogRate with extreme w); the
// diagonal entry holds -sum(off-diagonals) so each row sums to zero.
using RateRow = std::vector<double>;

// Masking-process rates for a slot currently holding `current`
// (mask index == posterior.size()):
//   mask  -> a: posterior[a] * (1 + eta * t) / (1 - t)
//   token -> mask: eta
//   all other off-diagonals zero.
RateRow rate_row(const std::vector<double>& posterior, int current, double t, double eta);

// Euler-discretized jump kernel: p = delta_current + row * dt, negatives
// clamped to zero, then renormalized. Degenerate all-zero rows fall back to
// staying put.
std::vector<double> transition_probs(const RateRow& row, int current, double dt);

// Draws the next token from transition_probs via the inverse-CDF walk.
int sample_transition(const RateRow& row, int current, double dt, Rng& rng);

// Number of blends so far whose clamped mass was all zero (the combiner then
// falls back to the conditional input).
std::uint64_t degenerate_guide_count();

// ---- Guidance combiners -------------------------------------------------
// All four return the conditional input untouched at w == 1 and the
// unconditional input untouched at w == 0 (bit-exact), and collapse to the
// shared value whenever both inputs are identical.

// (1 - w) pu + w pc, clamped to >= 0, renormalized.
std::vector<double> guide_prob_linear(const std::vector<double>& pu,
                                      const std::vector<double>& pc, double w);

// exp((1 - w) log pu + w log pc) with kProbFloor applied before the logs,
// renormalized.
std::vector<double> guide_prob_log(const std::vector<double>& pu,
                                   const std::vector<double>& pc, double w);

// Off-diagonals (1 - w) Ru + w Rc clamped to >= 0; diagonal rebuilt.
RateRow guide_rate_linear(const RateRow& ru, const RateRow& rc, double w, int current);

// Off-diagonals Rc^w * Ru^(1 - w) with kProbFloor applied first; diagonal
// rebuilt. Extrapolating weights amplify the floor into huge rates — that
// blow-up is the point of keeping the format around for comparison.
RateRow guide_rate_log(const RateRow& ru, const RateRow& rc, double w, int current);

// Predictor (classifier) guidance: off-diagonal r(x -> a) scaled by
// ratios[a]^w where ratios[a] = p(y | a, t) / p(y | x, t), floored at
// kProbFloor; diagonal rebuilt. w = 0 or a flat classifier leaves the row
// unchanged.
RateRow predictor_guide_rate(const RateRow& row, const std::vector<double>& ratios, double w,
                             int current);

}  // namespace guideflow::ctmc
