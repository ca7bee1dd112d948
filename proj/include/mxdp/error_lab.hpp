#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "mxdp/mac_unit.hpp"
#include "mxdp/matrix.hpp"

namespace mxdp {

enum class DistributionKind { Uniform, Gaussian };

const char* distribution_name(DistributionKind kind);

// Workload distributions for the accumulation-precision study.
// Uniform draws element codes uniformly over the valid encodings and shared
// exponents uniformly over 2^e, e in [-32, 32]. Gaussian draws FP64 samples
// N(0, sigma) with 6*sigma = 2^32 and quantizes them per 32-element block.
struct DistributionSpec {
  DistributionKind kind = DistributionKind::Gaussian;
  uint64_t seed = 1;
};

inline constexpr int kUniformSharedExpMin = -32;
inline constexpr int kUniformSharedExpMax = 32;
inline constexpr double kGaussianSigma = 4294967296.0 / 6.0;  // 2^32 / 6

// Elements of the reference result below this magnitude are excluded from
// the relative-error means.
inline constexpr double kRefEpsilon = 7.888609052210118e-31;  // 2^-100

struct ExperimentSpec {
  ElementFormat format = ElementFormat::Fp8E4m3;
  int matrix_size = 64;  // square; 64 or 256 in the study
  DistributionSpec distribution;
  TreeVariant variant = TreeVariant::HybridIter2;
  std::vector<int> mantissa_widths;  // defaults to 2..23 when empty
  int trials = 8;
};

struct ErrorPoint {
  int mantissa_width = 0;
  double addition_mean = 0.0;
  double addition_median = 0.0;
  double quantization_mean = 0.0;
  double quantization_median = 0.0;
  int64_t saturated_trials = 0;
};

struct ErrorCurve {
  ExperimentSpec spec;
  std::vector<ErrorPoint> points;
  int crossover_width = -1;     // smallest width where quantization > addition
  int64_t excluded_elements = 0;
  int64_t total_elements = 0;
};

// Deterministic raw Gaussian draws used by the generator (exposed for
// statistical checks).
std::vector<double> sample_gaussian(uint64_t seed, size_t count);

// One quantized operand plus its decoded FP64 mirror. 'which' is 'a' for the
// left operand or 'b' for the transposed right operand; 'trial' selects the
// independent matrix of that trial.
std::pair<MxMatrix, RealMatrix> generate_matrix(const ExperimentSpec& spec, char which,
                                                int trial = 0);

// Full sweep over the configured mantissa widths.
ErrorCurve run_experiment(const ExperimentSpec& spec);

struct CrossoverEntry {
  ElementFormat format;
  int matrix_size;
  DistributionKind distribution;
  int crossover_width;
};

struct CrossoverTable {
  std::vector<CrossoverEntry> entries;
  int max_width = -1;  // the design point: worst case over the grid
};

// Critical mantissa width per grid point. Evaluates only the widths a
// bisection over the (monotone) crossover predicate needs.
CrossoverTable critical_width_table(const std::vector<ElementFormat>& formats,
                                    const std::vector<int>& sizes,
                                    const std::vector<DistributionKind>& distributions,
                                    TreeVariant variant, int trials, uint64_t seed);

void write_curve_csv(std::ostream& os, const ErrorCurve& curve);
void write_crossover_csv(std::ostream& os, const CrossoverTable& table);
void write_curve_svg(std::ostream& os, const ErrorCurve& curve);

}  // namespace mxdp
