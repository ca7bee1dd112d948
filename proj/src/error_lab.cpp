#include "mxdp/error_lab.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <thread>

namespace mxdp {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t derive_seed(const ExperimentSpec& spec, char which, int trial) {
  uint64_t h = spec.distribution.seed;
  h = splitmix64(h ^ static_cast<uint64_t>(spec.format));
  h = splitmix64(h ^ static_cast<uint64_t>(spec.matrix_size));
  h = splitmix64(h ^ static_cast<uint64_t>(spec.distribution.kind));
  h = splitmix64(h ^ static_cast<uint64_t>(trial) * 0x100000001b3ull);
  h = splitmix64(h ^ static_cast<uint64_t>(which == 'b' ? 2 : 1));
  return h;
}

const std::vector<uint8_t>& valid_codes(const FormatSpec& spec) {
  static const std::array<std::vector<uint8_t>, kFormatCount> lists = [] {
    std::array<std::vector<uint8_t>, kFormatCount> out;
    for (int f = 0; f < kFormatCount; ++f) {
      const FormatSpec& s = format_spec(static_cast<ElementFormat>(f));
      for (int c = 0; c < s.code_count(); ++c) {
        if (code_is_finite(s, static_cast<uint8_t>(c))) {
          out[static_cast<size_t>(f)].push_back(static_cast<uint8_t>(c));
        }
      }
    }
    return out;
  }();
  return lists[static_cast<size_t>(spec.id)];
}

RealMatrix transpose(const RealMatrix& m) {
  RealMatrix out(m.cols, m.rows);
  for (int64_t r = 0; r < m.rows; ++r) {
    for (int64_t c = 0; c < m.cols; ++c) out.at(c, r) = m.at(r, c);
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<ptrdiff_t>(mid), v.end());
  double hi = v[mid];
  if (v.size() % 2 == 0) {
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
  }
  return hi;
}

std::vector<int> default_widths() {
  std::vector<int> w(22);
  std::iota(w.begin(), w.end(), 2);
  return w;
}

// One trial's fixed data: quantized operands, reference result, kept-element
// mask and the (width-independent) quantization errors.
struct TrialData {
  MxMatrix a;
  MxMatrix bt;
  RealMatrix yref;
  std::vector<char> keep;
  int64_t excluded = 0;
  std::vector<double> quant_rel;
};

// Lazily evaluates one grid point; caches per-width addition errors so the
// crossover search only pays for the widths it visits.
class PointRunner {
 public:
  explicit PointRunner(const ExperimentSpec& spec) : spec_(spec) {
    trials_.resize(static_cast<size_t>(spec.trials));
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (hw > 1 && spec.trials > 1) {
      std::vector<std::future<TrialData>> futs;
      futs.reserve(trials_.size());
      for (int t = 0; t < spec.trials; ++t) {
        futs.push_back(std::async(std::launch::async, [this, t] { return make_trial(t); }));
      }
      for (int t = 0; t < spec.trials; ++t) trials_[static_cast<size_t>(t)] = futs[static_cast<size_t>(t)].get();
    } else {
      for (int t = 0; t < spec.trials; ++t) trials_[static_cast<size_t>(t)] = make_trial(t);
    }
    std::vector<double> pooled;
    for (const TrialData& td : trials_) {
      pooled.insert(pooled.end(), td.quant_rel.begin(), td.quant_rel.end());
      excluded_ += td.excluded;
      total_ += static_cast<int64_t>(td.keep.size());
    }
    quant_mean_ = mean_of(pooled);
    quant_median_ = median_of(std::move(pooled));
  }

  double quant_mean() const { return quant_mean_; }
  double quant_median() const { return quant_median_; }
  int64_t excluded() const { return excluded_; }
  int64_t total() const { return total_; }

  ErrorPoint eval(int width) {
    auto it = cache_.find(width);
    if (it != cache_.end()) return it->second;

    std::vector<double> pooled;
    int64_t saturated = 0;
    const PrecisionMode mode = static_cast<PrecisionMode>(spec_.format);
    const TreeConfig cfg{spec_.variant, width, 127, 127};
    for (const TrialData& td : trials_) {
      const AccMatrix y = mx_gemm_raw(td.a, td.bt, mode, cfg);
      bool sat = false;
      for (const AccumulatorValue& v : y.values) sat = sat || v.saturated;
      if (sat) {
        ++saturated;
        continue;
      }
      for (size_t i = 0; i < y.values.size(); ++i) {
        if (!td.keep[i]) continue;
        const double ref = td.yref.data[i];
        pooled.push_back(std::fabs(y.values[i].to_double(width) - ref) / std::fabs(ref));
      }
    }
    ErrorPoint p;
    p.mantissa_width = width;
    p.addition_mean = mean_of(pooled);
    p.addition_median = median_of(std::move(pooled));
    p.quantization_mean = quant_mean_;
    p.quantization_median = quant_median_;
    p.saturated_trials = saturated;
    cache_.emplace(width, p);
    return p;
  }

 private:
  TrialData make_trial(int t) const {
    TrialData td;
    auto [a, a_mirror] = generate_matrix(spec_, 'a', t);
    auto [bt, bt_mirror] = generate_matrix(spec_, 'b', t);
    td.a = std::move(a);
    td.bt = std::move(bt);
    td.yref = gemm_fp64(a_mirror, transpose(bt_mirror));

    td.keep.assign(td.yref.data.size(), 0);
    for (size_t i = 0; i < td.yref.data.size(); ++i) {
      if (std::fabs(td.yref.data[i]) >= kRefEpsilon) {
        td.keep[i] = 1;
      } else {
        ++td.excluded;
      }
    }

    // Quantization error of the reference output over 8x8 groups.
    const FormatSpec& spec = format_spec(spec_.format);
    const int64_t n = td.yref.rows;
    std::array<double, 64> group;
    for (int64_t ti = 0; ti < n / 8; ++ti) {
      for (int64_t tj = 0; tj < td.yref.cols / 8; ++tj) {
        for (int r = 0; r < 8; ++r) {
          for (int c = 0; c < 8; ++c) {
            group[static_cast<size_t>(r * 8 + c)] = td.yref.at(ti * 8 + r, tj * 8 + c);
          }
        }
        const std::array<MxBlock, 2> blocks = quantize_group_values(group, spec);
        const std::array<double, kBlockSize> lo = decode_block(blocks[0]);
        const std::array<double, kBlockSize> hi = decode_block(blocks[1]);
        for (int k = 0; k < 64; ++k) {
          const int r = k / 8, c = k % 8;
          const size_t idx = static_cast<size_t>((ti * 8 + r) * td.yref.cols + tj * 8 + c);
          if (!td.keep[idx]) continue;
          const double q = k < kBlockSize ? lo[static_cast<size_t>(k)]
                                          : hi[static_cast<size_t>(k - kBlockSize)];
          td.quant_rel.push_back(std::fabs(q - group[static_cast<size_t>(k)]) /
                                 std::fabs(group[static_cast<size_t>(k)]));
        }
      }
    }
    return td;
  }

  ExperimentSpec spec_;
  std::vector<TrialData> trials_;
  std::map<int, ErrorPoint> cache_;
  double quant_mean_ = 0.0;
  double quant_median_ = 0.0;
  int64_t excluded_ = 0;
  int64_t total_ = 0;
};

}  // namespace

const char* distribution_name(DistributionKind kind) {
  return kind == DistributionKind::Uniform ? "uniform" : "gaussian";
}

std::vector<double> sample_gaussian(uint64_t seed, size_t count) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, kGaussianSigma);
  std::vector<double> out(count);
  for (double& v : out) v = dist(rng);
  return out;
}

std::pair<MxMatrix, RealMatrix> generate_matrix(const ExperimentSpec& spec, char which,
                                                int trial) {
  if (which != 'a' && which != 'b') throw Error("generate_matrix: operand must be 'a' or 'b'");
  const FormatSpec& fmt = format_spec(spec.format);
  const int n = spec.matrix_size;
  const uint64_t seed = derive_seed(spec, which, trial);

  MxMatrix m;
  if (spec.distribution.kind == DistributionKind::Gaussian) {
    const std::vector<double> samples =
        sample_gaussian(seed, static_cast<size_t>(n) * static_cast<size_t>(n));
    RealMatrix raw(n, n);
    raw.data = samples;
    m = quantize_matrix(raw, fmt);
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> shared_dist(kUniformSharedExpMin + kScaleBias,
                                                   kUniformSharedExpMax + kScaleBias);
    const std::vector<uint8_t>& codes = valid_codes(fmt);
    std::uniform_int_distribution<size_t> code_dist(0, codes.size() - 1);
    m.format = fmt.id;
    m.rows = n;
    m.cols = n;
    m.blocks_per_row = (n + kBlockSize - 1) / kBlockSize;
    m.blocks.resize(static_cast<size_t>(m.rows * m.blocks_per_row));
    for (MxBlock& blk : m.blocks) {
      blk.format = fmt.id;
      blk.shared_exponent = static_cast<uint8_t>(shared_dist(rng));
      for (uint8_t& e : blk.elements) e = codes[code_dist(rng)];
    }
  }
  RealMatrix mirror = decode_matrix(m);
  return {std::move(m), std::move(mirror)};
}

ErrorCurve run_experiment(const ExperimentSpec& spec_in) {
  ExperimentSpec spec = spec_in;
  if (spec.mantissa_widths.empty()) spec.mantissa_widths = default_widths();
  std::sort(spec.mantissa_widths.begin(), spec.mantissa_widths.end());

  PointRunner runner(spec);
  ErrorCurve curve;
  curve.spec = spec;
  curve.excluded_elements = runner.excluded();
  curve.total_elements = runner.total();
  for (int w : spec.mantissa_widths) {
    curve.points.push_back(runner.eval(w));
  }
  for (const ErrorPoint& p : curve.points) {
    if (p.quantization_mean > p.addition_mean) {
      curve.crossover_width = p.mantissa_width;
      break;
    }
  }
  return curve;
}

CrossoverTable critical_width_table(const std::vector<ElementFormat>& formats,
                                    const std::vector<int>& sizes,
                                    const std::vector<DistributionKind>& distributions,
                                    TreeVariant variant, int trials, uint64_t seed) {
  CrossoverTable table;
  for (ElementFormat fmt : formats) {
    for (int size : sizes) {
      for (DistributionKind kind : distributions) {
        ExperimentSpec spec;
        spec.format = fmt;
        spec.matrix_size = size;
        spec.distribution = {kind, seed};
        spec.variant = variant;
        spec.trials = trials;
        PointRunner runner(spec);
        auto crosses = [&](int w) { return runner.quant_mean() > runner.eval(w).addition_mean; };

        int cross = -1;
        if (crosses(2)) {
          cross = 2;
        } else if (crosses(23)) {
          int lo = 2, hi = 23;  // predicate false at lo, true at hi
          while (hi - lo > 1) {
            const int mid = (lo + hi) / 2;
            if (crosses(mid)) {
              hi = mid;
            } else {
              lo = mid;
            }
          }
          cross = hi;
          // The curve drops steeply but is sampled; settle onto the lowest
          // width whose predecessor does not cross.
          while (cross > 2 && crosses(cross - 1)) --cross;
        }
        table.entries.push_back({fmt, size, kind, cross});
        table.max_width = std::max(table.max_width, cross);
      }
    }
  }
  return table;
}

void write_curve_csv(std::ostream& os, const ErrorCurve& curve) {
  os << "format,size,distribution,variant,mantissa_width,addition_mean,addition_median,"
        "quantization_mean,quantization_median,crossover,trials,saturated_trials,"
        "excluded_elements,total_elements\n";
  const ExperimentSpec& s = curve.spec;
  for (const ErrorPoint& p : curve.points) {
    os << format_spec(s.format).name << ',' << s.matrix_size << ','
       << distribution_name(s.distribution.kind) << ',' << tree_variant_name(s.variant) << ','
       << p.mantissa_width << ',' << p.addition_mean << ',' << p.addition_median << ','
       << p.quantization_mean << ',' << p.quantization_median << ',' << curve.crossover_width
       << ',' << s.trials << ',' << p.saturated_trials << ',' << curve.excluded_elements << ','
       << curve.total_elements << '\n';
  }
}

void write_crossover_csv(std::ostream& os, const CrossoverTable& table) {
  os << "format,size,distribution,crossover_width\n";
  for (const CrossoverEntry& e : table.entries) {
    os << format_spec(e.format).name << ',' << e.matrix_size << ','
       << distribution_name(e.distribution) << ',' << e.crossover_width << '\n';
  }
  os << "max,,," << table.max_width << '\n';
}

void write_curve_svg(std::ostream& os, const ErrorCurve& curve) {
  const int width = 640, height = 420, ml = 70, mr = 20, mt = 30, mb = 50;
  double lo = 1e300, hi = -1e300;
  for (const ErrorPoint& p : curve.points) {
    for (double v : {p.addition_mean, p.quantization_mean}) {
      if (v > 0) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (hi < lo) {
    lo = 1e-9;
    hi = 1.0;
  }
  const double llo = std::floor(std::log10(lo)), lhi = std::ceil(std::log10(hi));
  const int w_min = curve.points.front().mantissa_width;
  const int w_max = curve.points.back().mantissa_width;
  auto sx = [&](double w) {
    return ml + (w - w_min) / std::max(1.0, double(w_max - w_min)) * (width - ml - mr);
  };
  auto sy = [&](double v) {
    const double t = (std::log10(std::max(v, 1e-300)) - llo) / std::max(1.0, lhi - llo);
    return height - mb - t * (height - mt - mb);
  };
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
     << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << width / 2 << "' y='18' text-anchor='middle' font-size='13'>"
     << format_spec(curve.spec.format).name << " " << curve.spec.matrix_size << "x"
     << curve.spec.matrix_size << " " << distribution_name(curve.spec.distribution.kind)
     << " (crossover " << curve.crossover_width << ")</text>\n";
  for (int d = static_cast<int>(llo); d <= static_cast<int>(lhi); ++d) {
    const double y = sy(std::pow(10.0, d));
    os << "<line x1='" << ml << "' y1='" << y << "' x2='" << width - mr << "' y2='" << y
       << "' stroke='#ddd'/>\n<text x='" << ml - 6 << "' y='" << y + 4
       << "' text-anchor='end' font-size='10'>1e" << d << "</text>\n";
  }
  for (const ErrorPoint& p : curve.points) {
    const double x = sx(p.mantissa_width);
    os << "<text x='" << x << "' y='" << height - mb + 16
       << "' text-anchor='middle' font-size='10'>" << p.mantissa_width << "</text>\n";
  }
  auto polyline = [&](const char* color, auto getter) {
    os << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (const ErrorPoint& p : curve.points) {
      os << sx(p.mantissa_width) << ',' << sy(getter(p)) << ' ';
    }
    os << "'/>\n";
  };
  polyline("#d62728", [](const ErrorPoint& p) { return p.addition_mean; });
  polyline("#1f77b4", [](const ErrorPoint& p) { return p.quantization_mean; });
  os << "<text x='" << width - mr - 150 << "' y='" << mt + 12
     << "' font-size='11' fill='#d62728'>addition error</text>\n";
  os << "<text x='" << width - mr - 150 << "' y='" << mt + 26
     << "' font-size='11' fill='#1f77b4'>quantization error</text>\n";
  os << "<text x='" << width / 2 << "' y='" << height - 12
     << "' text-anchor='middle' font-size='11'>accumulator mantissa width (bits)</text>\n";
  os << "</svg>\n";
}

}  // namespace mxdp
