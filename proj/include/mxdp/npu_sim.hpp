#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mxdp/mac_unit.hpp"

namespace mxdp {

// Behavioral CSR file of the tensor core.
//   csr0: precision mode code (PrecisionMode value)
//   csr1: accumulation steps per output tile (K tiles)
//   csr2: padded row/column extent of the output tile, multiple of 8
struct CsrFile {
  uint32_t csr0 = 0;
  uint32_t csr1 = 1;
  uint32_t csr2 = 8;

  bool operator==(const CsrFile&) const = default;
};

inline constexpr int64_t kLaunchLatency = 10;  // cycles per kernel offload
inline constexpr int64_t kPipelineFill = 8;    // array depth
inline constexpr int64_t kPipelineDrain = 8;

struct ConfigureResult {
  CsrFile csr;
  int64_t cycles = 0;  // one per write plus the launch latency
};

// Applies a sequence of (index, value) CSR writes at 32 bits per cycle.
// Throws Error for an invalid index, precision code, or field value.
ConfigureResult configure(std::span<const std::pair<int, uint32_t>> writes);

// Cycles per 8x8x8 tile GeMM: 8 (INT8), 2 (FP8/FP6), 1 (FP4).
int tile_cycles(PrecisionMode mode);

// Operations one MAC retires per cycle (multiply and add each count):
// 2 (INT8), 8 (FP8/FP6), 16 (FP4).
int ops_per_mac_cycle(PrecisionMode mode);

// 64 MACs * ops/cycle * frequency.
double peak_throughput_gops(PrecisionMode mode, double freq_mhz);

// Memory-access channels the mode requires: 1 (INT8), 4 (FP8), 3 (FP6), 4 (FP4).
int channel_activity(PrecisionMode mode);

// Programmable AGU loop nest, innermost first. Trace metadata.
struct AddressPattern {
  std::vector<int64_t> strides;
  std::vector<int64_t> bounds;
};

// Per-operand streamer provisioning. The mode gates how many of the
// provisioned channels actually run; provisioning below the requirement
// starves the array (legal, reported through utilization).
struct StreamerConfig {
  int channels_a = 4;
  int channels_b = 4;
  int channels_c = 4;
  int channel_width_bits = 64;
  std::optional<AddressPattern> pattern_a;
  std::optional<AddressPattern> pattern_b;
  std::optional<AddressPattern> pattern_c;
};

struct GemmLayer {
  std::string label;
  int64_t m = 0;
  int64_t k = 0;
  int64_t n = 0;
  PrecisionMode mode = PrecisionMode::MxInt8;
};

struct WorkloadSpec {
  std::vector<GemmLayer> layers;
  int64_t batch = 1;  // multiplies M of every layer
  double freq_mhz = 500.0;
};

WorkloadSpec load_workload_json(const std::string& path);
WorkloadSpec parse_workload_json(std::istream& is);

struct LayerReport {
  std::string label;
  PrecisionMode mode = PrecisionMode::MxInt8;
  int64_t m = 0, k = 0, n = 0;  // batch applied
  CsrFile csr;
  int64_t tiles = 0;
  int64_t ideal_cycles = 0;
  int64_t config_cycles = 0;
  int64_t fill_drain_cycles = 0;
  int64_t quant_cycles = 0;
  int64_t steady_cycles = 0;
  int64_t total_cycles = 0;
  double utilization = 0.0;
  double achieved_gops = 0.0;
  std::vector<int64_t> channel_busy_a;  // busy cycles per provisioned channel
  std::vector<int64_t> channel_busy_b;
  std::vector<int64_t> channel_busy_c;
};

struct SimReport {
  double freq_mhz = 0.0;
  std::vector<LayerReport> layers;
  int64_t total_cycles = 0;
  int64_t total_ideal_cycles = 0;
  double utilization = 0.0;  // total ideal / total cycles
};

struct TraceEvent {
  int64_t cycle = 0;
  std::string unit;
  std::string event;
};

// Analytic cycle model of the tensor core behind CSR configuration and gated
// streamers; see the README for the exact cycle accounting. When trace is
// non-null, events are appended for every layer (per-tile granularity for
// layers up to a few thousand tiles).
SimReport simulate_gemm(const WorkloadSpec& workload, const StreamerConfig& streamers,
                        double freq_mhz_override = 0.0,
                        std::vector<TraceEvent>* trace = nullptr);

// Functional path: executes the layer on MX operands through the simulator's
// tile schedule (64 MAC registers per output tile, K ascending) and quantizes
// each 8x8 output group. Operand row counts must be multiples of 8.
QuantizedTiles simulate_functional(const GemmLayer& layer, const MxMatrix& a,
                                   const MxMatrix& b_t, const TreeConfig& tree);

void write_report_json(std::ostream& os, const SimReport& report);
void write_report_csv(std::ostream& os, const SimReport& report);
void write_trace_csv(std::ostream& os, const std::vector<TraceEvent>& trace);

}  // namespace mxdp
