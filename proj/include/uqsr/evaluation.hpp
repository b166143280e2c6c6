#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "uqsr/image.hpp"
#include "uqsr/imaging.hpp"
#include "uqsr/uncertainty.hpp"

namespace uqsr {

// 10*log10(data_range^2 / MSE); +infinity sentinel when MSE = 0.
double psnr(const ImageTensor& a, const ImageTensor& b, double data_range = 1.0);

// Mean local SSIM over valid (fully inside) sliding Gaussian windows,
// averaged across channels.
double ssim(const ImageTensor& a, const ImageTensor& b, int window = 11, double sigma = 1.5,
            double k1 = 0.01, double k2 = 0.03, double data_range = 1.0);

ImageTensor mae_map(const ImageTensor& a, const ImageTensor& b);
double mae(const ImageTensor& a, const ImageTensor& b);

// BT.601 luma; identity for single-channel input.
ImageTensor to_luminance(const ImageTensor& img);

struct CurvePoint {
  double level = 0.0;
  double mean_error = 0.0;
  long count = 0;
};

enum class CurveKind { binned_images, threshold_sweep };

struct CalibrationCurve {
  std::vector<CurvePoint> points;
  CurveKind kind = CurveKind::binned_images;
};

// Equal-width bins over [min sigma, max sigma]; a point is (bin center,
// mean error of members, count); empty bins are omitted.
CalibrationCurve binned_calibration(const std::vector<std::pair<double, double>>& records,
                                    int n_bins);

// Thresholds linearly spaced over [min sigma, max sigma]; point t holds the
// mean error over pixels with sigma >= t. Zero-support or duplicate levels
// are dropped.
CalibrationCurve threshold_sweep(const UncertaintyMap& umap, const ImageTensor& err_map,
                                 int n_thresholds);

struct MetricReport {
  std::string image_id;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double mae = 0.0;
  double sigma_mean = 0.0;
};

// Pluggable upscaler: the evaluation protocol is independent of how the SR
// image and its uncertainty were produced.
struct SrOutput {
  ImageTensor sr;
  double sigma_mean = 0.0;
};
using SrSampler = std::function<SrOutput(const ImageTensor& lr)>;

struct SetEvaluation {
  std::vector<MetricReport> per_image;
  MetricReport aggregate;  // image_id "aggregate"; fields are means
  CalibrationCurve curve;  // sigma-mean binning against per-image MAE
};

SetEvaluation evaluate_set(const SrSampler& sampler, const PairDataset& data, int n_bins = 10,
                           bool luminance_only = false);

// CSV serialization. Metric columns: image_id,psnr_db,ssim,mae,sigma_mean
// (+infinity as the literal "inf"). Curve columns: level,mean_error,count.
void write_metric_csv(const std::vector<MetricReport>& reports, const std::string& path);
std::vector<MetricReport> read_metric_csv(const std::string& path);
void write_curve_csv(const CalibrationCurve& curve, const std::string& path);
CalibrationCurve read_curve_csv(const std::string& path,
                                CurveKind kind = CurveKind::binned_images);

}  // namespace uqsr
