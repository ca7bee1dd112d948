// Python bindings for the mxdp core: format encode/decode, MX quantization,
// GeMM on the emulated reduction trees, the accumulation-precision study,
// structural costs, and the NPU cycle model.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "mxdp/error_lab.hpp"
#include "mxdp/mac_unit.hpp"
#include "mxdp/npu_sim.hpp"
#include "mxdp/tensor_io.hpp"

namespace py = pybind11;
using namespace mxdp;

namespace {

const FormatSpec& spec_arg(const std::string& name) {
  const FormatSpec* spec = find_format(name);
  if (spec == nullptr) throw Error("unknown format: " + name);
  return *spec;
}

TreeVariant variant_arg(const std::string& name) {
  const TreeVariant* v = find_tree_variant(name);
  if (v == nullptr) throw Error("unknown tree variant: " + name);
  return *v;
}

RealMatrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw Error("expected a 2-D array");
  RealMatrix m(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), m.data.begin());
  return m;
}

py::array_t<double> from_matrix(const RealMatrix& m) {
  py::array_t<double> a({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), a.mutable_data());
  return a;
}

py::dict curve_dict(const ErrorCurve& curve) {
  py::dict d;
  d["format"] = format_spec(curve.spec.format).name;
  d["size"] = curve.spec.matrix_size;
  d["distribution"] = distribution_name(curve.spec.distribution.kind);
  d["variant"] = tree_variant_name(curve.spec.variant);
  d["trials"] = curve.spec.trials;
  d["crossover_width"] = curve.crossover_width;
  d["excluded_elements"] = curve.excluded_elements;
  d["total_elements"] = curve.total_elements;
  py::list pts;
  for (const ErrorPoint& p : curve.points) {
    py::dict pd;
    pd["mantissa_width"] = p.mantissa_width;
    pd["addition_mean"] = p.addition_mean;
    pd["addition_median"] = p.addition_median;
    pd["quantization_mean"] = p.quantization_mean;
    pd["quantization_median"] = p.quantization_median;
    pd["saturated_trials"] = p.saturated_trials;
    pts.append(pd);
  }
  d["points"] = pts;
  return d;
}

DistributionKind dist_arg(const std::string& name) {
  if (name == "uniform") return DistributionKind::Uniform;
  if (name == "gaussian") return DistributionKind::Gaussian;
  throw Error("unknown distribution: " + name);
}

}  // namespace

PYBIND11_MODULE(_mxdp, m) {
  m.doc() = "bit-accurate MX datapath emulator and NPU performance model";

  py::register_exception<SaturationError>(m, "SaturationError");

  m.def("formats", [] {
    py::list out;
    for (const FormatSpec& spec : all_formats()) {
      py::dict d;
      d["name"] = spec.name;
      d["exponent_bits"] = spec.exponent_bits;
      d["mantissa_bits"] = spec.mantissa_bits;
      d["total_bits"] = spec.total_bits;
      d["bias"] = spec.bias;
      d["max_normal_exponent"] = spec.max_normal_exponent;
      d["has_inf_nan"] = spec.has_inf_nan;
      d["max_finite"] = spec.max_finite;
      out.append(d);
    }
    return out;
  });

  m.def("decode_element",
        [](const std::string& fmt, int code) {
          return decode_element(spec_arg(fmt), static_cast<uint8_t>(code));
        },
        py::arg("format"), py::arg("code"));
  m.def("encode_element",
        [](const std::string& fmt, double value) {
          return static_cast<int>(encode_element(spec_arg(fmt), value));
        },
        py::arg("format"), py::arg("value"));

  m.def("quantize",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const std::string& fmt) {
          const MxMatrix q = quantize_matrix(to_matrix(a), spec_arg(fmt));
          return from_matrix(decode_matrix(q));
        },
        py::arg("values"), py::arg("format"),
        "Quantize a 2-D array to MX blocks and return the decoded values.");

  m.def("gemm_fp64",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
          return from_matrix(gemm_fp64(to_matrix(a), to_matrix(b)));
        },
        py::arg("a"), py::arg("b"), "FP64 reference GeMM (deterministic summation order).");

  m.def("mx_gemm",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& b,
           const std::string& fmt, const std::string& variant, int macc) {
          const FormatSpec& spec = spec_arg(fmt);
          RealMatrix bm = to_matrix(b);
          RealMatrix bt(bm.cols, bm.rows);
          for (int64_t r = 0; r < bm.rows; ++r)
            for (int64_t c = 0; c < bm.cols; ++c) bt.at(c, r) = bm.at(r, c);
          const MxMatrix qa = quantize_matrix(to_matrix(a), spec);
          const MxMatrix qbt = quantize_matrix(bt, spec);
          const AccMatrix out = mx_gemm_raw(qa, qbt, static_cast<PrecisionMode>(spec.id),
                                            TreeConfig{variant_arg(variant), macc, 127, 127});
          return from_matrix(out.to_real());
        },
        py::arg("a"), py::arg("b"), py::arg("format") = "fp8_e4m3",
        py::arg("variant") = "hybrid_iter2", py::arg("macc") = 16,
        "Quantize both operands and run the GeMM through the emulated MAC array.");

  m.def("cost_report",
        [](const std::string& variant, int macc) {
          const CostReport r = cost_report(TreeConfig{variant_arg(variant), macc, 127, 127});
          py::dict d;
          d["l2_align_width"] = r.l2_align_width;
          d["l2_adder_width"] = r.l2_adder_width;
          d["acc_adder_width"] = r.acc_adder_width;
          d["norm_input_width"] = r.norm_input_width;
          d["mux_bits"] = r.mux_bits;
          return d;
        },
        py::arg("variant") = "hybrid_iter2", py::arg("macc") = 23);

  m.def("run_experiment",
        [](const std::string& fmt, int size, const std::string& dist, uint64_t seed,
           const std::string& variant, int trials, const std::vector<int>& widths) {
          ExperimentSpec spec;
          spec.format = spec_arg(fmt).id;
          spec.matrix_size = size;
          spec.distribution = {dist_arg(dist), seed};
          spec.variant = variant_arg(variant);
          spec.trials = trials;
          spec.mantissa_widths = widths;
          return curve_dict(run_experiment(spec));
        },
        py::arg("format") = "fp8_e4m3", py::arg("size") = 64, py::arg("distribution") = "gaussian",
        py::arg("seed") = 1, py::arg("variant") = "hybrid_iter2", py::arg("trials") = 8,
        py::arg("widths") = std::vector<int>{});

  m.def("critical_width_table",
        [](const std::vector<int>& sizes, const std::vector<std::string>& dists, uint64_t seed,
           const std::string& variant, int trials) {
          std::vector<ElementFormat> formats;
          for (const FormatSpec& spec : all_formats()) formats.push_back(spec.id);
          std::vector<DistributionKind> kinds;
          for (const std::string& d : dists) kinds.push_back(dist_arg(d));
          const CrossoverTable t =
              critical_width_table(formats, sizes, kinds, variant_arg(variant), trials, seed);
          py::dict out;
          py::list entries;
          for (const CrossoverEntry& e : t.entries) {
            py::dict ed;
            ed["format"] = format_spec(e.format).name;
            ed["size"] = e.matrix_size;
            ed["distribution"] = distribution_name(e.distribution);
            ed["crossover_width"] = e.crossover_width;
            entries.append(ed);
          }
          out["entries"] = entries;
          out["max_width"] = t.max_width;
          return out;
        },
        py::arg("sizes") = std::vector<int>{64},
        py::arg("distributions") = std::vector<std::string>{"uniform", "gaussian"},
        py::arg("seed") = 1, py::arg("variant") = "hybrid_iter2", py::arg("trials") = 8);

  m.def("tile_cycles", [](const std::string& mode) {
    const PrecisionMode* pm = find_mode(mode);
    if (pm == nullptr) throw Error("unknown mode: " + mode);
    return tile_cycles(*pm);
  });
  m.def("channel_activity", [](const std::string& mode) {
    const PrecisionMode* pm = find_mode(mode);
    if (pm == nullptr) throw Error("unknown mode: " + mode);
    return channel_activity(*pm);
  });
  m.def("peak_throughput_gops",
        [](const std::string& mode, double freq_mhz) {
          const PrecisionMode* pm = find_mode(mode);
          if (pm == nullptr) throw Error("unknown mode: " + mode);
          return peak_throughput_gops(*pm, freq_mhz);
        },
        py::arg("mode"), py::arg("freq_mhz") = 500.0);

  m.def("simulate",
        [](const std::string& workload_json, double freq_mhz) {
          std::istringstream is(workload_json);
          const WorkloadSpec w = parse_workload_json(is);
          const SimReport r = simulate_gemm(w, StreamerConfig{}, freq_mhz);
          std::ostringstream os;
          write_report_json(os, r);
          return os.str();
        },
        py::arg("workload_json"), py::arg("freq_mhz") = 0.0,
        "Run the cycle model on a workload JSON string; returns the report as JSON.");

  m.def("simulate_file",
        [](const std::string& path, double freq_mhz) {
          const SimReport r = simulate_gemm(load_workload_json(path), StreamerConfig{}, freq_mhz);
          std::ostringstream os;
          write_report_json(os, r);
          return os.str();
        },
        py::arg("path"), py::arg("freq_mhz") = 0.0);
}
