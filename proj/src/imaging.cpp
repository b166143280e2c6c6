#include "uqsr/imaging.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "uqsr/errors.hpp"

namespace fs = std::filesystem;

namespace uqsr {

namespace {

// Catmull-Rom cubic kernel (a = -0.5), |t| <= 2.
double cubic_weight(double t) {
  const double a = -0.5;
  const double x = std::fabs(t);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

// Tap positions and kernel weights for one resampled axis (center-aligned).
void resample_axis(int out_n, int in_n, std::vector<int>& base_taps,
                   std::vector<double>& weights) {
  base_taps.resize(out_n);
  weights.resize(static_cast<std::size_t>(out_n) * 4);
  const double scale = static_cast<double>(in_n) / out_n;
  for (int i = 0; i < out_n; ++i) {
    const double src = (i + 0.5) * scale - 0.5;
    const int base = static_cast<int>(std::floor(src)) - 1;
    base_taps[i] = base;
    for (int k = 0; k < 4; ++k)
      weights[static_cast<std::size_t>(i) * 4 + k] = cubic_weight(src - (base + k));
  }
}

}  // namespace

ImageTensor bicubic_resize(const ImageTensor& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw DomainError("bicubic_resize target must be at least 1x1");

  std::vector<double> wx, wy;
  std::vector<int> bx, by;
  resample_axis(out_w, img.width, bx, wx);
  resample_axis(out_h, img.height, by, wy);

  // Horizontal pass first, then vertical over the intermediate.
  ImageTensor mid(img.height, out_w, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < out_w; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k)
          acc += wx[static_cast<std::size_t>(x) * 4 + k] *
                 img.at(y, clamp_index(bx[x] + k, img.width), c);
        mid.at(y, x, c) = acc;
      }

  ImageTensor out(out_h, out_w, img.channels);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k)
          acc += wy[static_cast<std::size_t>(y) * 4 + k] *
                 mid.at(clamp_index(by[y] + k, img.height), x, c);
        out.at(y, x, c) = acc < 0.0 ? 0.0 : (acc > 1.0 ? 1.0 : acc);
      }
  return out;
}

ImageTensor crop(const ImageTensor& img, int row, int col, int crop_h, int crop_w) {
  if (row < 0 || col < 0 || crop_h < 1 || crop_w < 1 || row + crop_h > img.height ||
      col + crop_w > img.width)
    throw DomainError("crop window out of bounds");
  ImageTensor out(crop_h, crop_w, img.channels);
  for (int y = 0; y < crop_h; ++y)
    for (int x = 0; x < crop_w; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(row + y, col + x, c);
  return out;
}

ImageTensor rotate90(const ImageTensor& img, int quarter_turns) {
  const int q = ((quarter_turns % 4) + 4) % 4;
  if (q == 0) return img;
  const bool swap = q == 1 || q == 3;
  ImageTensor out(swap ? img.width : img.height, swap ? img.height : img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      int oy = 0, ox = 0;
      if (q == 1) {  // clockwise
        oy = x;
        ox = img.height - 1 - y;
      } else if (q == 2) {
        oy = img.height - 1 - y;
        ox = img.width - 1 - x;
      } else {
        oy = img.width - 1 - x;
        ox = y;
      }
      for (int c = 0; c < img.channels; ++c) out.at(oy, ox, c) = img.at(y, x, c);
    }
  return out;
}

ImageTensor flip_horizontal(const ImageTensor& img) {
  ImageTensor out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(y, img.width - 1 - x, c) = img.at(y, x, c);
  return out;
}

ImageTensor flip_vertical(const ImageTensor& img) {
  ImageTensor out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(img.height - 1 - y, x, c) = img.at(y, x, c);
  return out;
}

TrainingPair make_pair(const ImageTensor& hr_source, int row, int col, int hr_size, int scale) {
  if (scale < 1 || hr_size % scale != 0)
    throw DomainError("hr_size must be a positive multiple of scale");
  TrainingPair pair;
  pair.hr = crop(hr_source, row, col, hr_size, hr_size);
  pair.lr = bicubic_resize(pair.hr, hr_size / scale, hr_size / scale);
  return pair;
}

TrainingPair augment_pair(const TrainingPair& pair, const AugmentConfig& cfg, Rng& rng) {
  if (pair.lr.height <= 0 || pair.hr.height % pair.lr.height != 0)
    throw ShapeError("augment_pair: hr/lr sizes are not an integer scale apart");
  const int scale = pair.hr.height / pair.lr.height;

  TrainingPair out = pair;
  if (rng.uniform() < cfg.p_crop && cfg.crop_lr_size > 0 && cfg.crop_lr_size <= out.lr.height &&
      cfg.crop_lr_size <= out.lr.width) {
    const int row = rng.uniform_int(out.lr.height - cfg.crop_lr_size + 1);
    const int col = rng.uniform_int(out.lr.width - cfg.crop_lr_size + 1);
    out.lr = crop(out.lr, row, col, cfg.crop_lr_size, cfg.crop_lr_size);
    out.hr = crop(out.hr, row * scale, col * scale, cfg.crop_lr_size * scale,
                  cfg.crop_lr_size * scale);
  }
  if (rng.uniform() < cfg.p_rotate) {
    const int q = 1 + rng.uniform_int(3);
    out.lr = rotate90(out.lr, q);
    out.hr = rotate90(out.hr, q);
  }
  if (rng.uniform() < cfg.p_hflip) {
    out.lr = flip_horizontal(out.lr);
    out.hr = flip_horizontal(out.hr);
  }
  if (rng.uniform() < cfg.p_vflip) {
    out.lr = flip_vertical(out.lr);
    out.hr = flip_vertical(out.hr);
  }
  return out;
}

namespace {

std::string sanitize_id(const std::string& rel_path) {
  std::string stem = rel_path;
  const auto dot = stem.rfind('.');
  if (dot != std::string::npos) stem.erase(dot);
  std::string id;
  for (char ch : stem) {
    const unsigned char u = static_cast<unsigned char>(ch);
    id += (std::isalnum(u) || ch == '-' || ch == '_') ? ch : '_';
  }
  return id.empty() ? "image" : id;
}

}  // namespace

DatasetManifest scan_manifest(const std::string& root, int scale, int hr_size) {
  std::error_code ec;
  if (!fs::is_directory(root, ec) || ec) throw IoError("cannot scan directory: " + root);

  std::vector<std::string> files;
  for (auto it = fs::recursive_directory_iterator(root, ec);
       it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) throw IoError("error walking directory: " + root);
    if (it->is_regular_file()) files.push_back(fs::relative(it->path(), root).generic_string());
  }
  std::sort(files.begin(), files.end());

  DatasetManifest manifest;
  manifest.scale = scale;
  manifest.hr_size = hr_size;
  manifest.lr_size = hr_size / scale;

  std::map<std::string, int> used_ids;
  for (const std::string& rel : files) {
    try {
      load_image((fs::path(root) / rel).string());
    } catch (const std::exception& e) {
      manifest.skipped.push_back({rel, e.what()});
      continue;
    }
    std::string id = sanitize_id(rel);
    const int n = ++used_ids[id];
    if (n > 1) id += "_" + std::to_string(n);
    manifest.entries.push_back({id, rel, "train"});
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path);
  out << "# scale=" << manifest.scale << " hr_size=" << manifest.hr_size
      << " lr_size=" << manifest.lr_size << "\n";
  for (const auto& e : manifest.entries)
    out << e.source_id << "\t" << e.path << "\t" << e.split << "\n";
  if (!out) throw IoError("error writing manifest: " + path);
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest: " + path);

  DatasetManifest manifest;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string kv;
      while (hs >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = kv.substr(0, eq);
        const int value = std::stoi(kv.substr(eq + 1));
        if (key == "scale") manifest.scale = value;
        else if (key == "hr_size") manifest.hr_size = value;
        else if (key == "lr_size") manifest.lr_size = value;
      }
      continue;
    }
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw FormatError("malformed manifest line " + std::to_string(lineno) + " in " + path);
    manifest.entries.push_back(
        {line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), line.substr(t2 + 1)});
  }
  if (manifest.hr_size != manifest.scale * manifest.lr_size)
    throw FormatError("manifest header violates hr_size = scale * lr_size: " + path);
  return manifest;
}

PairDataset load_pairs(const DatasetManifest& manifest, const std::string& base_dir) {
  PairDataset ds;
  ds.scale = manifest.scale;
  ds.hr_size = manifest.hr_size;
  for (const auto& e : manifest.entries) {
    const std::string hr_path = (fs::path(base_dir) / e.path).string();
    const std::string suffix = "_hr.png";
    if (e.path.size() < suffix.size() ||
        e.path.compare(e.path.size() - suffix.size(), suffix.size(), suffix) != 0)
      throw FormatError("pair manifest path must end in _hr.png: " + e.path);
    std::string lr_path = hr_path;
    lr_path.replace(lr_path.size() - suffix.size(), suffix.size(), "_lr.png");

    TrainingPair pair;
    pair.hr = load_image(hr_path);
    pair.lr = load_image(lr_path);
    pair.source_id = e.source_id;
    if (pair.hr.height != manifest.scale * pair.lr.height ||
        pair.hr.width != manifest.scale * pair.lr.width)
      throw ShapeError("pair " + e.source_id + " violates the scale relation");
    ds.pairs.push_back(std::move(pair));
  }
  return ds;
}

}  // namespace uqsr
