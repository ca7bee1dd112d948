// mxdp command-line tool: quantization, dot/GeMM execution on the emulated
// reduction trees, the accumulation-precision sweep, structural cost
// reporting, and the NPU cycle simulator.
//
// Exit codes: 0 success, 1 usage, 2 I/O or input data, 3 numerical saturation.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mxdp/error_lab.hpp"
#include "mxdp/mac_unit.hpp"
#include "mxdp/npu_sim.hpp"
#include "mxdp/tensor_io.hpp"

namespace {

using namespace mxdp;

uint64_t default_seed() {
  if (const char* env = std::getenv("MXDP_SEED")) {
    return static_cast<uint64_t>(std::strtoull(env, nullptr, 10));
  }
  return 1;
}

const FormatSpec& format_or_throw(const std::string& name) {
  const FormatSpec* spec = find_format(name);
  if (spec == nullptr) throw CLI::ValidationError("--format", "unknown format '" + name + "'");
  return *spec;
}

TreeVariant variant_or_throw(const std::string& name) {
  const TreeVariant* v = find_tree_variant(name);
  if (v == nullptr) throw CLI::ValidationError("--variant", "unknown variant '" + name + "'");
  return *v;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot create file: " + path);
  return out;
}

// Every run prints the configuration it resolved to.
struct ConfigPrinter {
  std::ostringstream ss;
  template <typename T>
  ConfigPrinter& kv(const std::string& key, const T& value) {
    ss << "  " << key << " = " << value << '\n';
    return *this;
  }
  void print(const std::string& command) const {
    std::cout << "mxdp " << command << " configuration:\n" << ss.str();
  }
};

int run_quantize(const std::string& fmt_name, const std::string& in_path,
                 const std::string& out_path, bool decode) {
  ConfigPrinter cfg;
  cfg.kv("format", fmt_name).kv("in", in_path).kv("out", out_path).kv("decode", decode);
  cfg.print("quantize");
  if (decode) {
    const MxMatrix m = read_mx_matrix(in_path);
    write_real_matrix(out_path, decode_matrix(m));
    std::cout << "decoded " << m.rows << "x" << m.cols << " "
              << format_spec(m.format).name << " -> " << out_path << '\n';
    return 0;
  }
  const FormatSpec& spec = format_or_throw(fmt_name);
  const RealMatrix m = read_real_matrix(in_path);
  write_mx_matrix(out_path, quantize_matrix(m, spec));
  std::cout << "quantized " << m.rows << "x" << m.cols << " -> " << spec.name << " "
            << out_path << '\n';
  return 0;
}

int run_dot(const std::string& a_path, const std::string& b_path,
            const std::string& variant_name, int macc, const std::string& json_path) {
  const TreeVariant variant = variant_or_throw(variant_name);
  ConfigPrinter cfg;
  cfg.kv("a", a_path).kv("b", b_path).kv("variant", variant_name).kv("macc", macc);
  cfg.print("dot");

  const MxMatrix a = read_mx_matrix(a_path);
  const MxMatrix b = read_mx_matrix(b_path);
  if (a.rows != 1 || b.rows != 1) throw IoError("dot: inputs must be 1xK vectors");
  const PrecisionMode mode = static_cast<PrecisionMode>(a.format);
  const TreeConfig tree{variant, macc, 127, 127};
  const AccMatrix out = mx_gemm_raw(a, b, mode, tree);
  const AccumulatorValue& acc = out.at(0, 0);
  if (acc.saturated) {
    std::cerr << "dot: accumulator saturated\n";
    return 3;
  }
  std::cout << "dot = " << acc.to_double(macc) << "  (sign " << int(acc.sign) << ", exponent "
            << acc.exponent << ", mantissa 0x" << std::hex << acc.mantissa << std::dec << ", "
            << (acc.zero ? "zero" : "normal") << ")\n";
  if (!json_path.empty()) {
    std::ofstream js = open_out(json_path);
    js << "{\"value\": " << acc.to_double(macc) << ", \"sign\": " << int(acc.sign)
       << ", \"exponent\": " << acc.exponent << ", \"mantissa\": " << acc.mantissa
       << ", \"zero\": " << (acc.zero ? "true" : "false") << "}\n";
  }
  return 0;
}

int run_gemm(const std::string& a_path, const std::string& bt_path,
             const std::string& out_path, const std::string& out_mx_path,
             const std::string& variant_name, int macc) {
  const TreeVariant variant = variant_or_throw(variant_name);
  ConfigPrinter cfg;
  cfg.kv("a", a_path).kv("bt", bt_path).kv("out", out_path).kv("variant", variant_name)
      .kv("macc", macc);
  cfg.print("gemm");

  const MxMatrix a = read_mx_matrix(a_path);
  const MxMatrix bt = read_mx_matrix(bt_path);
  const PrecisionMode mode = static_cast<PrecisionMode>(a.format);
  const TreeConfig tree{variant, macc, 127, 127};
  const AccMatrix out = mx_gemm_raw(a, bt, mode, tree);
  for (const AccumulatorValue& v : out.values) {
    if (v.saturated) {
      std::cerr << "gemm: accumulator saturated\n";
      return 3;
    }
  }
  const RealMatrix real = out.to_real();
  if (!out_path.empty()) write_real_matrix(out_path, real);
  if (!out_mx_path.empty()) {
    write_mx_matrix(out_mx_path, quantize_matrix(real, format_spec(a.format)));
  }
  std::cout << "gemm " << a.rows << "x" << a.cols << " * " << bt.cols << "x" << bt.rows
            << " done (" << tree_variant_name(variant) << ", M=" << macc << ")\n";
  return 0;
}

int run_sweep(const std::string& fmt_name, int size, const std::string& dist_name,
              uint64_t seed, const std::string& variant_name, int trials,
              const std::string& out_path, const std::string& svg_path) {
  ExperimentSpec spec;
  spec.format = format_or_throw(fmt_name).id;
  spec.matrix_size = size;
  if (dist_name == "uniform") {
    spec.distribution.kind = DistributionKind::Uniform;
  } else if (dist_name == "gaussian") {
    spec.distribution.kind = DistributionKind::Gaussian;
  } else {
    throw CLI::ValidationError("--dist", "must be 'uniform' or 'gaussian'");
  }
  spec.distribution.seed = seed;
  spec.variant = variant_or_throw(variant_name);
  spec.trials = trials;

  ConfigPrinter cfg;
  cfg.kv("format", fmt_name).kv("size", size).kv("dist", dist_name).kv("seed", seed)
      .kv("variant", variant_name).kv("trials", trials).kv("out", out_path);
  cfg.print("sweep");

  const ErrorCurve curve = run_experiment(spec);
  std::ofstream out = open_out(out_path);
  write_curve_csv(out, curve);
  if (!svg_path.empty()) {
    std::ofstream svg = open_out(svg_path);
    write_curve_svg(svg, curve);
  }
  std::cout << "crossover width = " << curve.crossover_width << " (excluded "
            << curve.excluded_elements << "/" << curve.total_elements << " elements)\n";
  return 0;
}

int run_crossover(const std::string& sizes_csv, const std::string& dists_csv, uint64_t seed,
                  const std::string& variant_name, int trials, const std::string& out_path) {
  std::vector<ElementFormat> formats;
  for (const FormatSpec& spec : all_formats()) formats.push_back(spec.id);
  std::vector<int> sizes;
  {
    std::stringstream ss(sizes_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) sizes.push_back(std::stoi(tok));
  }
  std::vector<DistributionKind> dists;
  {
    std::stringstream ss(dists_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok == "uniform") dists.push_back(DistributionKind::Uniform);
      else if (tok == "gaussian") dists.push_back(DistributionKind::Gaussian);
      else throw CLI::ValidationError("--dists", "must list 'uniform'/'gaussian'");
    }
  }
  ConfigPrinter cfg;
  cfg.kv("sizes", sizes_csv).kv("dists", dists_csv).kv("seed", seed)
      .kv("variant", variant_name).kv("trials", trials).kv("out", out_path);
  cfg.print("crossover");

  const CrossoverTable table = critical_width_table(
      formats, sizes, dists, variant_or_throw(variant_name), trials, seed);
  std::ofstream out = open_out(out_path);
  write_crossover_csv(out, table);
  std::cout << "max critical width over the grid = " << table.max_width << '\n';
  return 0;
}

int run_costs(const std::string& variant_name, int macc, bool as_json) {
  const TreeVariant variant = variant_or_throw(variant_name);
  ConfigPrinter cfg;
  cfg.kv("variant", variant_name).kv("macc", macc);
  cfg.print("costs");
  const CostReport r = cost_report(TreeConfig{variant, macc, 127, 127});
  if (as_json) {
    std::cout << "{\"variant\": \"" << tree_variant_name(variant) << "\", \"macc\": " << macc
              << ", \"l2_align_width\": " << r.l2_align_width
              << ", \"l2_adder_width\": " << r.l2_adder_width
              << ", \"acc_adder_width\": " << r.acc_adder_width
              << ", \"norm_input_width\": " << r.norm_input_width
              << ", \"mux_bits\": " << r.mux_bits << "}\n";
  } else {
    std::cout << "l2 alignment width   " << r.l2_align_width << "\n"
              << "l2 adder width       " << r.l2_adder_width << "\n"
              << "acc adder width      " << r.acc_adder_width << "\n"
              << "normalizer input     " << r.norm_input_width << "\n"
              << "mux bits             " << r.mux_bits << "\n";
  }
  return 0;
}

int run_simulate(const std::string& workload_path, double freq, const std::string& json_path,
                 const std::string& csv_path, const std::string& trace_path, int channels_a,
                 int channels_b, int channels_c, int channel_width) {
  ConfigPrinter cfg;
  cfg.kv("workload", workload_path).kv("freq_mhz", freq).kv("channels_a", channels_a)
      .kv("channels_b", channels_b).kv("channels_c", channels_c)
      .kv("channel_width_bits", channel_width);
  cfg.print("simulate");

  const WorkloadSpec workload = load_workload_json(workload_path);
  StreamerConfig streamers;
  streamers.channels_a = channels_a;
  streamers.channels_b = channels_b;
  streamers.channels_c = channels_c;
  streamers.channel_width_bits = channel_width;

  std::vector<TraceEvent> trace;
  const SimReport report = simulate_gemm(workload, streamers, freq,
                                         trace_path.empty() ? nullptr : &trace);
  if (!json_path.empty()) {
    std::ofstream js = open_out(json_path);
    write_report_json(js, report);
  }
  if (!csv_path.empty()) {
    std::ofstream cs = open_out(csv_path);
    write_report_csv(cs, report);
  }
  if (!trace_path.empty()) {
    std::ofstream tr = open_out(trace_path);
    write_trace_csv(tr, trace);
  }
  std::cout << "layers " << report.layers.size() << ", total cycles " << report.total_cycles
            << ", utilization " << report.utilization << '\n';
  for (const LayerReport& r : report.layers) {
    std::cout << "  " << (r.label.empty() ? "(layer)" : r.label) << ": " << r.total_cycles
              << " cycles, util " << r.utilization << ", " << r.achieved_gops << " GOPS\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bit-accurate MX datapath emulator and NPU performance model"};
  app.require_subcommand(1);

  uint64_t seed = default_seed();
  app.add_option("--seed", seed, "RNG seed (default from MXDP_SEED)")->capture_default_str();

  // quantize
  auto* q = app.add_subcommand("quantize", "FP64 <-> MX tensor file conversion");
  std::string q_fmt = "fp8_e4m3", q_in, q_out;
  bool q_decode = false;
  q->add_option("--format", q_fmt, "element format")->capture_default_str();
  q->add_option("--in", q_in, "input tensor file")->required();
  q->add_option("--out", q_out, "output tensor file")->required();
  q->add_flag("--decode", q_decode, "decode an MX file back to FP64");

  // dot
  auto* d = app.add_subcommand("dot", "dot product of two MX vectors");
  std::string d_a, d_b, d_variant = "hybrid_iter2", d_json;
  int d_macc = 16;
  d->add_option("--a", d_a)->required();
  d->add_option("--b", d_b)->required();
  d->add_option("--variant", d_variant)->capture_default_str();
  d->add_option("--macc", d_macc, "accumulator mantissa bits")->capture_default_str();
  d->add_option("--json", d_json, "machine-readable output file");

  // gemm
  auto* g = app.add_subcommand("gemm", "MX GeMM through the emulated MAC array");
  std::string g_a, g_bt, g_out, g_out_mx, g_variant = "hybrid_iter2";
  int g_macc = 16;
  g->add_option("--a", g_a, "left operand, M x K")->required();
  g->add_option("--bt", g_bt, "right operand transposed, N x K")->required();
  g->add_option("--out", g_out, "FP64 result file");
  g->add_option("--out-mx", g_out_mx, "re-quantized MX result file");
  g->add_option("--variant", g_variant)->capture_default_str();
  g->add_option("--macc", g_macc)->capture_default_str();

  // sweep
  auto* s = app.add_subcommand("sweep", "accumulation-precision error sweep");
  std::string s_fmt = "fp8_e4m3", s_dist = "gaussian", s_variant = "hybrid_iter2", s_out, s_svg;
  int s_size = 64, s_trials = 8;
  s->add_option("--format", s_fmt)->capture_default_str();
  s->add_option("--size", s_size, "square matrix size")->capture_default_str();
  s->add_option("--dist", s_dist, "uniform | gaussian")->capture_default_str();
  s->add_option("--variant", s_variant)->capture_default_str();
  s->add_option("--trials", s_trials)->capture_default_str();
  s->add_option("--out", s_out, "curve CSV")->required();
  s->add_option("--svg", s_svg, "optional SVG plot");

  // crossover
  auto* c = app.add_subcommand("crossover", "critical mantissa width grid");
  std::string c_sizes = "64,256", c_dists = "uniform,gaussian", c_variant = "hybrid_iter2",
              c_out;
  int c_trials = 8;
  c->add_option("--sizes", c_sizes)->capture_default_str();
  c->add_option("--dists", c_dists)->capture_default_str();
  c->add_option("--variant", c_variant)->capture_default_str();
  c->add_option("--trials", c_trials)->capture_default_str();
  c->add_option("--out", c_out, "table CSV")->required();

  // costs
  auto* k = app.add_subcommand("costs", "structural bit-width report");
  std::string k_variant = "hybrid_iter2";
  int k_macc = 16;
  bool k_json = false;
  k->add_option("--variant", k_variant)->capture_default_str();
  k->add_option("--macc", k_macc)->capture_default_str();
  k->add_flag("--json", k_json);

  // simulate
  auto* m = app.add_subcommand("simulate", "NPU cycle simulation of a GeMM workload");
  std::string m_workload, m_json, m_csv, m_trace;
  double m_freq = 0.0;
  int m_ca = 4, m_cb = 4, m_cc = 4, m_cw = 64;
  m->add_option("--workload", m_workload, "workload JSON")->required();
  m->add_option("--freq", m_freq, "frequency MHz (overrides the file)");
  m->add_option("--json", m_json, "report JSON");
  m->add_option("--csv", m_csv, "report CSV");
  m->add_option("--trace", m_trace, "cycle trace CSV");
  m->add_option("--channels-a", m_ca)->capture_default_str();
  m->add_option("--channels-b", m_cb)->capture_default_str();
  m->add_option("--channels-c", m_cc)->capture_default_str();
  m->add_option("--channel-width", m_cw, "bits per channel per cycle")->capture_default_str();

  try {
    app.parse(argc, argv);
    if (*q) return run_quantize(q_fmt, q_in, q_out, q_decode);
    if (*d) return run_dot(d_a, d_b, d_variant, d_macc, d_json);
    if (*g) return run_gemm(g_a, g_bt, g_out, g_out_mx, g_variant, g_macc);
    if (*s) return run_sweep(s_fmt, s_size, s_dist, seed, s_variant, s_trials, s_out, s_svg);
    if (*c) return run_crossover(c_sizes, c_dists, seed, c_variant, c_trials, c_out);
    if (*k) return run_costs(k_variant, k_macc, k_json);
    if (*m) return run_simulate(m_workload, m_freq, m_json, m_csv, m_trace, m_ca, m_cb, m_cc,
                                m_cw);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const mxdp::SaturationError& e) {
    std::cerr << "saturation: " << e.what() << '\n';
    return 3;
  } catch (const mxdp::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 2;
  } catch (const mxdp::InvalidBlockError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const mxdp::DimensionError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const mxdp::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
