#include "uqsr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "uqsr/errors.hpp"

namespace uqsr {

double psnr(const ImageTensor& a, const ImageTensor& b, double data_range) {
  if (!a.same_shape(b)) throw ShapeError("psnr: shape mismatch");
  if (!(data_range > 0.0)) throw DomainError("psnr: data_range must be positive");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

double ssim(const ImageTensor& a, const ImageTensor& b, int window, double sigma, double k1,
            double k2, double data_range) {
  if (!a.same_shape(b)) throw ShapeError("ssim: shape mismatch");
  if (a.height < window || a.width < window)
    throw ConfigError("ssim: image smaller than the window");

  std::vector<double> g(static_cast<std::size_t>(window) * window);
  const double c = (window - 1) / 2.0;
  double gsum = 0.0;
  for (int i = 0; i < window; ++i)
    for (int j = 0; j < window; ++j) {
      const double r2 = (i - c) * (i - c) + (j - c) * (j - c);
      g[static_cast<std::size_t>(i) * window + j] = std::exp(-r2 / (2.0 * sigma * sigma));
      gsum += g[static_cast<std::size_t>(i) * window + j];
    }
  for (double& v : g) v /= gsum;

  const double c1 = (k1 * data_range) * (k1 * data_range);
  const double c2 = (k2 * data_range) * (k2 * data_range);

  double total = 0.0;
  long count = 0;
  for (int ch = 0; ch < a.channels; ++ch)
    for (int y = 0; y + window <= a.height; ++y)
      for (int x = 0; x + window <= a.width; ++x) {
        double mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
        for (int i = 0; i < window; ++i)
          for (int j = 0; j < window; ++j) {
            const double w = g[static_cast<std::size_t>(i) * window + j];
            const double va = a.at(y + i, x + j, ch);
            const double vb = b.at(y + i, x + j, ch);
            mx += w * va;
            my += w * vb;
            mxx += w * va * va;
            myy += w * vb * vb;
            mxy += w * va * vb;
          }
        const double vx = mxx - mx * mx;
        const double vy = myy - my * my;
        const double cov = mxy - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                 ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
  return total / static_cast<double>(count);
}

ImageTensor mae_map(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_shape(b)) throw ShapeError("mae_map: shape mismatch");
  ImageTensor m(a.height, a.width, a.channels);
  for (std::size_t i = 0; i < a.data.size(); ++i) m.data[i] = std::fabs(a.data[i] - b.data[i]);
  return m;
}

double mae(const ImageTensor& a, const ImageTensor& b) {
  const ImageTensor m = mae_map(a, b);
  double acc = 0.0;
  for (double v : m.data) acc += v;
  return acc / static_cast<double>(m.data.size());
}

ImageTensor to_luminance(const ImageTensor& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) throw ShapeError("to_luminance: expected 1 or 3 channels");
  ImageTensor y(img.height, img.width, 1);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      y.at(r, c, 0) =
          0.299 * img.at(r, c, 0) + 0.587 * img.at(r, c, 1) + 0.114 * img.at(r, c, 2);
  return y;
}

// ---------------------------------------------------------------------------
// Calibration

CalibrationCurve binned_calibration(const std::vector<std::pair<double, double>>& records,
                                    int n_bins) {
  if (n_bins < 1) throw ConfigError("binned_calibration: n_bins must be at least 1");
  if (static_cast<int>(records.size()) < n_bins)
    throw ConfigError("binned_calibration: fewer records than bins");

  double lo = records.front().first, hi = records.front().first;
  for (const auto& [s, e] : records) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }

  CalibrationCurve curve;
  curve.kind = CurveKind::binned_images;
  if (lo == hi) {
    double err = 0.0;
    for (const auto& [s, e] : records) err += e;
    curve.points.push_back({lo, err / static_cast<double>(records.size()),
                            static_cast<long>(records.size())});
    return curve;
  }

  const double width = (hi - lo) / n_bins;
  std::vector<double> sums(n_bins, 0.0);
  std::vector<long> counts(n_bins, 0);
  for (const auto& [s, e] : records) {
    int bin = static_cast<int>((s - lo) / width);
    bin = std::min(bin, n_bins - 1);
    sums[bin] += e;
    ++counts[bin];
  }
  for (int b = 0; b < n_bins; ++b)
    if (counts[b] > 0)
      curve.points.push_back({lo + (b + 0.5) * width, sums[b] / counts[b], counts[b]});
  return curve;
}

CalibrationCurve threshold_sweep(const UncertaintyMap& umap, const ImageTensor& err_map,
                                 int n_thresholds) {
  if (!umap.sigma.same_shape(err_map)) throw ShapeError("threshold_sweep: shape mismatch");
  if (n_thresholds < 2) throw ConfigError("threshold_sweep: need at least 2 thresholds");

  const std::size_t n = umap.sigma.data.size();
  std::vector<std::pair<double, double>> pairs(n);
  for (std::size_t i = 0; i < n; ++i) pairs[i] = {umap.sigma.data[i], err_map.data[i]};
  std::sort(pairs.begin(), pairs.end());

  // Suffix sums: errors over all pixels with sigma >= pairs[i].sigma.
  std::vector<double> suffix(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] + pairs[i].second;

  const double lo = pairs.front().first, hi = pairs.back().first;
  CalibrationCurve curve;
  curve.kind = CurveKind::threshold_sweep;
  double prev_level = 0.0;
  for (int t = 0; t < n_thresholds; ++t) {
    const double level =
        lo + (hi - lo) * static_cast<double>(t) / static_cast<double>(n_thresholds - 1);
    if (!curve.points.empty() && level == prev_level) continue;
    const auto it = std::lower_bound(pairs.begin(), pairs.end(), level,
                                     [](const auto& p, double v) { return p.first < v; });
    const std::size_t idx = static_cast<std::size_t>(it - pairs.begin());
    const long support = static_cast<long>(n - idx);
    if (support <= 0) continue;
    curve.points.push_back({level, suffix[idx] / static_cast<double>(support), support});
    prev_level = level;
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Set evaluation

SetEvaluation evaluate_set(const SrSampler& sampler, const PairDataset& data, int n_bins,
                           bool luminance_only) {
  if (data.pairs.empty()) throw ConfigError("evaluate_set: empty dataset");

  SetEvaluation ev;
  std::vector<std::pair<double, double>> records;
  double sum_psnr = 0.0, sum_ssim = 0.0, sum_mae = 0.0, sum_sigma = 0.0;
  for (const TrainingPair& pair : data.pairs) {
    const SrOutput out = sampler(pair.lr);
    const ImageTensor& sr_eval = luminance_only ? to_luminance(out.sr) : out.sr;
    const ImageTensor& hr_eval = luminance_only ? to_luminance(pair.hr) : pair.hr;
    MetricReport rep;
    rep.image_id = pair.source_id;
    rep.psnr_db = psnr(sr_eval, hr_eval);
    rep.ssim = ssim(sr_eval, hr_eval);
    rep.mae = mae(sr_eval, hr_eval);
    rep.sigma_mean = out.sigma_mean;
    sum_psnr += rep.psnr_db;
    sum_ssim += rep.ssim;
    sum_mae += rep.mae;
    sum_sigma += rep.sigma_mean;
    records.emplace_back(rep.sigma_mean, rep.mae);
    ev.per_image.push_back(std::move(rep));
  }
  const double inv = 1.0 / static_cast<double>(ev.per_image.size());
  ev.aggregate.image_id = "aggregate";
  ev.aggregate.psnr_db = sum_psnr * inv;
  ev.aggregate.ssim = sum_ssim * inv;
  ev.aggregate.mae = sum_mae * inv;
  ev.aggregate.sigma_mean = sum_sigma * inv;
  ev.curve = binned_calibration(records, std::min(n_bins, static_cast<int>(records.size())));
  return ev;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& path) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw FormatError("bad numeric field in " + path + ": " + s);
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

}  // namespace

void write_metric_csv(const std::vector<MetricReport>& reports, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics csv: " + path);
  out << "image_id,psnr_db,ssim,mae,sigma_mean\n";
  for (const MetricReport& r : reports)
    out << r.image_id << ',' << fmt_g17(r.psnr_db) << ',' << fmt_g17(r.ssim) << ','
        << fmt_g17(r.mae) << ',' << fmt_g17(r.sigma_mean) << '\n';
  if (!out) throw IoError("error writing metrics csv: " + path);
}

std::vector<MetricReport> read_metric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read metrics csv: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "image_id,psnr_db,ssim,mae,sigma_mean")
    throw FormatError("bad metrics csv header: " + path);
  std::vector<MetricReport> reports;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 5) throw FormatError("bad metrics csv row: " + path);
    MetricReport r;
    r.image_id = f[0];
    r.psnr_db = parse_double(f[1], path);
    r.ssim = parse_double(f[2], path);
    r.mae = parse_double(f[3], path);
    r.sigma_mean = parse_double(f[4], path);
    reports.push_back(std::move(r));
  }
  return reports;
}

void write_curve_csv(const CalibrationCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write curve csv: " + path);
  out << "level,mean_error,count\n";
  for (const CurvePoint& p : curve.points)
    out << fmt_g17(p.level) << ',' << fmt_g17(p.mean_error) << ',' << p.count << '\n';
  if (!out) throw IoError("error writing curve csv: " + path);
}

CalibrationCurve read_curve_csv(const std::string& path, CurveKind kind) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read curve csv: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "level,mean_error,count")
    throw FormatError("bad curve csv header: " + path);
  CalibrationCurve curve;
  curve.kind = kind;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 3) throw FormatError("bad curve csv row: " + path);
    curve.points.push_back(
        {parse_double(f[0], path), parse_double(f[1], path), std::stol(f[2])});
  }
  return curve;
}

}  // namespace uqsr
