#pragma once

#include <string>
#include <vector>

#include "uqsr/image.hpp"
#include "uqsr/rng.hpp"

namespace uqsr {

// ---------------------------------------------------------------------------
// Image file I/O (8-bit PNG, grayscale or RGB).

ImageTensor load_image(const std::string& path);
void save_image(const ImageTensor& img, const std::string& path);
// 16-bit grayscale PNG; values linearly mapped from [0, vmax] to [0, 65535].
// vmax <= 0 writes all zeros.
void save_image_gray16(const ImageTensor& img, const std::string& path, double vmax);

// ---------------------------------------------------------------------------
// Resampling and geometry.

// Catmull-Rom bicubic (a = -0.5), center-aligned sampling grid, coordinates
// clamped at the borders. Output clamped to [0,1].
ImageTensor bicubic_resize(const ImageTensor& img, int out_h, int out_w);

ImageTensor crop(const ImageTensor& img, int row, int col, int crop_h, int crop_w);
ImageTensor rotate90(const ImageTensor& img, int quarter_turns);  // clockwise
ImageTensor flip_horizontal(const ImageTensor& img);
ImageTensor flip_vertical(const ImageTensor& img);

// ---------------------------------------------------------------------------
// Training pairs.

struct TrainingPair {
  ImageTensor lr;
  ImageTensor hr;
  std::string source_id;
};

// Crops hr_size×hr_size at (row, col) and derives the bicubic LR counterpart.
TrainingPair make_pair(const ImageTensor& hr_source, int row, int col, int hr_size = 256,
                       int scale = 4);

struct AugmentConfig {
  double p_rotate = 0.0;  // 90/180/270, equiprobable when triggered
  double p_hflip = 0.0;
  double p_vflip = 0.0;
  double p_crop = 0.0;
  int crop_lr_size = 0;  // aligned crop size in LR pixels; 0 disables
};

// Applies one identical geometric transform to both halves of the pair.
// Draw order is fixed: crop origin, rotation, hflip, vflip.
TrainingPair augment_pair(const TrainingPair& pair, const AugmentConfig& cfg, Rng& rng);

// ---------------------------------------------------------------------------
// Manifests.

struct ManifestEntry {
  std::string source_id;
  std::string path;  // relative to the manifest (or scan root)
  std::string split;
};

struct SkippedFile {
  std::string path;
  std::string reason;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  int scale = 4;
  int hr_size = 256;
  int lr_size = 64;
  std::vector<SkippedFile> skipped;  // undecodable files found during a scan
};

// Lists every decodable image under root (recursive), lexicographic by
// relative path. Undecodable files land on the skip list.
DatasetManifest scan_manifest(const std::string& root, int scale, int hr_size);

// Line-oriented text: "source_id<TAB>path<TAB>split"; a leading "# key=value"
// header carries scale/hr_size/lr_size.
void write_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

// Pair files referenced by a prepared manifest: path column names the HR file
// ("<id>_hr.png"); the LR sibling is "<id>_lr.png".
struct PairDataset {
  std::vector<TrainingPair> pairs;
  int scale = 4;
  int hr_size = 256;
};

PairDataset load_pairs(const DatasetManifest& manifest, const std::string& base_dir);

}  // namespace uqsr
