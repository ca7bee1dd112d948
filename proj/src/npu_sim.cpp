#include "mxdp/npu_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include <json.hpp>

namespace mxdp {

namespace {

int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

constexpr int64_t kTraceTileLimit = 4096;

void validate_csr(const CsrFile& csr) {
  if (csr.csr0 > 5) throw Error("configure: invalid precision code in csr0");
  if (csr.csr1 < 1) throw Error("configure: csr1 (accumulation steps) must be >= 1");
  if (csr.csr2 == 0 || csr.csr2 % 8 != 0) {
    throw Error("configure: csr2 (tile dimension) must be a positive multiple of 8");
  }
}

struct LayerCycles {
  CsrFile csr;
  int64_t mt, nt, kt, tiles;
  int64_t ideal, config, fill_drain, quant, steady, total;
  int64_t supply_a, supply_b, supply_c;  // per-tile-step / per-output-tile cycles
  int active_a, active_b, active_c;
};

LayerCycles layer_cycles(const GemmLayer& layer, const StreamerConfig& s) {
  if (layer.m <= 0 || layer.k <= 0 || layer.n <= 0) {
    throw Error("simulate_gemm: layer '" + layer.label + "' has a zero dimension");
  }
  LayerCycles c{};
  c.mt = ceil_div(layer.m, 8);
  c.nt = ceil_div(layer.n, 8);
  c.kt = ceil_div(layer.k, 8);
  c.tiles = c.mt * c.nt * c.kt;
  const int tc = tile_cycles(layer.mode);
  c.ideal = c.tiles * tc;

  const FormatSpec& fmt = mode_format(layer.mode);
  const int64_t tile_bytes = 64 * fmt.total_bits / 8;
  const int64_t out_bytes = tile_bytes + 2;  // two shared-exponent bytes per group
  const int64_t ch_bytes = s.channel_width_bits / 8;
  const int required = channel_activity(layer.mode);
  c.active_a = std::min(s.channels_a, required);
  c.active_b = std::min(s.channels_b, required);
  c.active_c = std::min(s.channels_c, required);
  if (c.active_a < 1 || c.active_b < 1 || c.active_c < 1 || ch_bytes < 1) {
    throw Error("simulate_gemm: streamer configuration has no bandwidth");
  }
  c.supply_a = ceil_div(tile_bytes, c.active_a * ch_bytes);
  c.supply_b = ceil_div(tile_bytes, c.active_b * ch_bytes);
  c.supply_c = ceil_div(out_bytes, c.active_c * ch_bytes);

  c.csr = CsrFile{static_cast<uint32_t>(layer.mode), static_cast<uint32_t>(c.kt),
                  static_cast<uint32_t>(8 * std::max(c.mt, c.nt))};
  validate_csr(c.csr);

  c.config = 3 + kLaunchLatency;
  c.fill_drain = kPipelineFill + kPipelineDrain;
  c.quant = c.mt * c.nt;  // SIMD unit, one cycle per 64-output group
  const int64_t step = std::max<int64_t>({tc, c.supply_a, c.supply_b});
  const int64_t writer = c.mt * c.nt * c.supply_c;
  c.steady = std::max(c.tiles * step, writer);
  c.total = c.config + c.fill_drain + c.quant + c.steady;
  return c;
}

void emit_layer_trace(std::vector<TraceEvent>* trace, int64_t base, const GemmLayer& layer,
                      const LayerCycles& c, const StreamerConfig& s) {
  if (trace == nullptr) return;
  int64_t t = base;
  for (int i = 0; i < 3; ++i) {
    trace->push_back({t++, "csr", "write csr" + std::to_string(i)});
  }
  trace->push_back({t, "fsm", "launch"});
  t += kLaunchLatency;
  trace->push_back({t, "array", "fill"});
  t += kPipelineFill;
  if (c.tiles <= kTraceTileLimit) {
    const int64_t step = std::max<int64_t>({tile_cycles(layer.mode), c.supply_a, c.supply_b});
    auto addr = [](const std::optional<AddressPattern>& p, int64_t idx) -> int64_t {
      if (!p) return idx;
      int64_t a = 0, rem = idx;
      for (size_t l = 0; l < p->bounds.size(); ++l) {
        a += (rem % p->bounds[l]) * p->strides[l];
        rem /= p->bounds[l];
      }
      return a;
    };
    int64_t idx = 0;
    for (int64_t mt = 0; mt < c.mt; ++mt) {
      for (int64_t nt = 0; nt < c.nt; ++nt) {
        for (int64_t kt = 0; kt < c.kt; ++kt, ++idx) {
          const int64_t at = t + idx * step;
          trace->push_back({at, "streamer_a", "fetch tile @" + std::to_string(addr(s.pattern_a, idx))});
          trace->push_back({at, "streamer_b", "fetch tile @" + std::to_string(addr(s.pattern_b, idx))});
          trace->push_back({at, "array", "tile m" + std::to_string(mt) + " n" +
                                             std::to_string(nt) + " k" + std::to_string(kt)});
        }
        trace->push_back({t + idx * step, "quant", "group m" + std::to_string(mt) + " n" +
                                                       std::to_string(nt)});
      }
    }
  }
  trace->push_back({base + c.total - kPipelineDrain, "array", "drain"});
  trace->push_back({base + c.total, "fsm", "done"});
}

}  // namespace

ConfigureResult configure(std::span<const std::pair<int, uint32_t>> writes) {
  ConfigureResult r;
  for (const auto& [idx, value] : writes) {
    switch (idx) {
      case 0: r.csr.csr0 = value; break;
      case 1: r.csr.csr1 = value; break;
      case 2: r.csr.csr2 = value; break;
      default: throw Error("configure: CSR index out of range");
    }
    r.cycles += 1;  // 32-bit write per cycle
  }
  validate_csr(r.csr);
  r.cycles += kLaunchLatency;
  return r;
}

int tile_cycles(PrecisionMode mode) {
  switch (mode) {
    case PrecisionMode::MxInt8: return 8;
    case PrecisionMode::MxFp4E2m1: return 1;
    default: return 2;
  }
}

int ops_per_mac_cycle(PrecisionMode mode) { return 2 * products_per_cycle(mode); }

double peak_throughput_gops(PrecisionMode mode, double freq_mhz) {
  if (freq_mhz <= 0) throw Error("peak_throughput: frequency must be positive");
  return 64.0 * ops_per_mac_cycle(mode) * freq_mhz / 1000.0;
}

int channel_activity(PrecisionMode mode) {
  switch (mode) {
    case PrecisionMode::MxInt8: return 1;
    case PrecisionMode::MxFp6E3m2:
    case PrecisionMode::MxFp6E2m3: return 3;
    default: return 4;  // MXFP8 (both) and MXFP4
  }
}

WorkloadSpec load_workload_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open workload file: " + path);
  return parse_workload_json(in);
}

WorkloadSpec parse_workload_json(std::istream& is) {
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("workload JSON parse error: ") + e.what());
  }
  WorkloadSpec w;
  try {
    w.batch = j.value("batch", int64_t{1});
    w.freq_mhz = j.value("freq_mhz", 500.0);
    for (const auto& jl : j.at("layers")) {
      GemmLayer layer;
      layer.label = jl.value("label", "");
      layer.m = jl.at("M").get<int64_t>();
      layer.k = jl.at("K").get<int64_t>();
      layer.n = jl.at("N").get<int64_t>();
      const std::string mode = jl.at("mode").get<std::string>();
      const PrecisionMode* pm = find_mode(mode);
      if (pm == nullptr) throw IoError("workload JSON: unknown mode '" + mode + "'");
      layer.mode = *pm;
      w.layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("workload JSON schema error: ") + e.what());
  }
  return w;
}

SimReport simulate_gemm(const WorkloadSpec& workload, const StreamerConfig& streamers,
                        double freq_mhz_override, std::vector<TraceEvent>* trace) {
  SimReport report;
  report.freq_mhz = freq_mhz_override > 0 ? freq_mhz_override : workload.freq_mhz;
  if (report.freq_mhz <= 0) throw Error("simulate_gemm: frequency must be positive");
  if (workload.batch < 1) throw Error("simulate_gemm: batch must be >= 1");

  int64_t clock = 0;
  for (const GemmLayer& l : workload.layers) {
    GemmLayer layer = l;
    layer.m *= workload.batch;
    const LayerCycles c = layer_cycles(layer, streamers);
    emit_layer_trace(trace, clock, layer, c, streamers);
    clock += c.total;

    LayerReport r;
    r.label = layer.label;
    r.mode = layer.mode;
    r.m = layer.m;
    r.k = layer.k;
    r.n = layer.n;
    r.csr = c.csr;
    r.tiles = c.tiles;
    r.ideal_cycles = c.ideal;
    r.config_cycles = c.config;
    r.fill_drain_cycles = c.fill_drain;
    r.quant_cycles = c.quant;
    r.steady_cycles = c.steady;
    r.total_cycles = c.total;
    r.utilization = static_cast<double>(c.ideal) / static_cast<double>(c.total);
    const double ops = 2.0 * static_cast<double>(layer.m) * static_cast<double>(layer.k) *
                       static_cast<double>(layer.n);
    r.achieved_gops = ops * report.freq_mhz / static_cast<double>(c.total) / 1000.0;

    // Busy cycles per provisioned channel; gated channels charge zero.
    r.channel_busy_a.assign(static_cast<size_t>(streamers.channels_a), 0);
    r.channel_busy_b.assign(static_cast<size_t>(streamers.channels_b), 0);
    r.channel_busy_c.assign(static_cast<size_t>(streamers.channels_c), 0);
    for (int ch = 0; ch < c.active_a; ++ch) r.channel_busy_a[static_cast<size_t>(ch)] = c.tiles * c.supply_a;
    for (int ch = 0; ch < c.active_b; ++ch) r.channel_busy_b[static_cast<size_t>(ch)] = c.tiles * c.supply_b;
    for (int ch = 0; ch < c.active_c; ++ch) r.channel_busy_c[static_cast<size_t>(ch)] = c.mt * c.nt * c.supply_c;

    report.total_cycles += r.total_cycles;
    report.total_ideal_cycles += r.ideal_cycles;
    report.layers.push_back(std::move(r));
  }
  if (report.total_cycles > 0) {
    report.utilization = static_cast<double>(report.total_ideal_cycles) /
                         static_cast<double>(report.total_cycles);
  }
  return report;
}

QuantizedTiles simulate_functional(const GemmLayer& layer, const MxMatrix& a,
                                   const MxMatrix& b_t, const TreeConfig& tree) {
  if (a.rows != layer.m || b_t.rows != layer.n || a.cols != layer.k || b_t.cols != layer.k) {
    throw DimensionError("simulate_functional: operand shapes do not match the layer");
  }
  if (a.rows % 8 != 0 || b_t.rows % 8 != 0) {
    throw DimensionError("simulate_functional: operand rows must be multiples of 8");
  }

  AccMatrix out;
  out.rows = a.rows;
  out.cols = b_t.rows;
  out.mantissa_bits = tree.acc_mantissa_bits;
  out.values.resize(static_cast<size_t>(out.rows * out.cols));

  // Tensor-core schedule: one output tile at a time, 64 MAC registers,
  // K consumed in ascending order through the blocks.
  MacState proto;
  proto.mode = static_cast<PrecisionMode>(layer.mode);
  proto.tree = tree;
  for (int64_t ti = 0; ti < out.rows / 8; ++ti) {
    for (int64_t tj = 0; tj < out.cols / 8; ++tj) {
      std::array<MacState, 64> regs;
      regs.fill(proto);
      for (int64_t kb = 0; kb < a.blocks_per_row; ++kb) {
        for (int r = 0; r < 8; ++r) {
          for (int c = 0; c < 8; ++c) {
            MacState& st = regs[static_cast<size_t>(r * 8 + c)];
            st = mac_dot_block(st, a.block(ti * 8 + r, kb), b_t.block(tj * 8 + c, kb));
          }
        }
      }
      for (int r = 0; r < 8; ++r) {
        for (int c = 0; c < 8; ++c) {
          out.at(ti * 8 + r, tj * 8 + c) = regs[static_cast<size_t>(r * 8 + c)].accumulator;
        }
      }
    }
  }
  return quantize_output_tiles(out, mode_format(proto.mode));
}

void write_report_json(std::ostream& os, const SimReport& report) {
  nlohmann::json j;
  j["freq_mhz"] = report.freq_mhz;
  j["total_cycles"] = report.total_cycles;
  j["total_ideal_cycles"] = report.total_ideal_cycles;
  j["utilization"] = report.utilization;
  j["layers"] = nlohmann::json::array();
  for (const LayerReport& r : report.layers) {
    nlohmann::json jl;
    jl["label"] = r.label;
    jl["mode"] = mode_name(r.mode);
    jl["M"] = r.m;
    jl["K"] = r.k;
    jl["N"] = r.n;
    jl["csr"] = {r.csr.csr0, r.csr.csr1, r.csr.csr2};
    jl["tiles"] = r.tiles;
    jl["ideal_cycles"] = r.ideal_cycles;
    jl["config_cycles"] = r.config_cycles;
    jl["fill_drain_cycles"] = r.fill_drain_cycles;
    jl["quant_cycles"] = r.quant_cycles;
    jl["steady_cycles"] = r.steady_cycles;
    jl["total_cycles"] = r.total_cycles;
    jl["utilization"] = r.utilization;
    jl["achieved_gops"] = r.achieved_gops;
    jl["channel_busy_a"] = r.channel_busy_a;
    jl["channel_busy_b"] = r.channel_busy_b;
    jl["channel_busy_c"] = r.channel_busy_c;
    j["layers"].push_back(std::move(jl));
  }
  os << j.dump(2) << '\n';
}

void write_report_csv(std::ostream& os, const SimReport& report) {
  os << "label,mode,M,K,N,tiles,ideal_cycles,config_cycles,fill_drain_cycles,quant_cycles,"
        "steady_cycles,total_cycles,utilization,achieved_gops\n";
  for (const LayerReport& r : report.layers) {
    os << r.label << ',' << mode_name(r.mode) << ',' << r.m << ',' << r.k << ',' << r.n << ','
       << r.tiles << ',' << r.ideal_cycles << ',' << r.config_cycles << ','
       << r.fill_drain_cycles << ',' << r.quant_cycles << ',' << r.steady_cycles << ','
       << r.total_cycles << ',' << r.utilization << ',' << r.achieved_gops << '\n';
  }
  os << "total,,,,,,"
     << report.total_ideal_cycles << ",,,,," << report.total_cycles << ','
     << report.utilization << ",\n";
}

void write_trace_csv(std::ostream& os, const std::vector<TraceEvent>& trace) {
  os << "cycle,unit,event\n";
  for (const TraceEvent& e : trace) {
    os << e.cycle << ',' << e.unit << ',' << e.event << '\n';
  }
}

}  // namespace mxdp
