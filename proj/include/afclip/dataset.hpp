#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "afclip/image_io.hpp"
#include "afclip/types.hpp"

namespace afclip {

struct Sample {
  std::string image_path;
  std::string category;
  std::string split;  // "train" or "test"
  int label = 0;
  std::optional<std::string> mask_path;
};

// Supported layouts:
//   mvtec          <root>/<category>/{train/good, test/<defect>, ground_truth/<defect>/<stem>_mask.png}
//                  test/good is normal, every other test/<defect> directory is anomalous.
//   visa-csv       <root>/split_csv/1cls.csv with columns object,split,label,image,mask;
//                  label "normal" or "anomaly", paths relative to <root>.
//   flat-synthetic <root>/<category>/{train, good, anomaly, masks/<stem>.png}; train/ holds
//                  optional normal references, good/ and anomaly/ form the test split.
enum class Layout { kMvtec, kVisaCsv, kFlatSynthetic };

inline Layout parse_layout(const std::string& id) {
  if (id == "mvtec") return Layout::kMvtec;
  if (id == "visa-csv") return Layout::kVisaCsv;
  if (id == "flat-synthetic") return Layout::kFlatSynthetic;
  throw ConfigError("unknown dataset layout '" + id + "' (expected mvtec, visa-csv, flat-synthetic)");
}

namespace detail {

namespace fs = std::filesystem;

inline bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".tif" ||
         ext == ".tiff" || ext == ".jpe";
}

inline std::vector<fs::path> sorted_images(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<fs::path> sorted_dirs(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<Sample> load_mvtec(const fs::path& root) {
  std::vector<Sample> out;
  for (const auto& cat_dir : sorted_dirs(root)) {
    const std::string category = cat_dir.filename().string();
    if (!fs::is_directory(cat_dir / "test")) continue;
    for (const auto& img : sorted_images(cat_dir / "train" / "good"))
      out.push_back({img.string(), category, "train", 0, std::nullopt});
    for (const auto& defect_dir : sorted_dirs(cat_dir / "test")) {
      const std::string defect = defect_dir.filename().string();
      for (const auto& img : sorted_images(defect_dir)) {
        Sample s{img.string(), category, "test", defect == "good" ? 0 : 1, std::nullopt};
        if (s.label == 1)
          s.mask_path = (cat_dir / "ground_truth" / defect / (img.stem().string() + "_mask.png")).string();
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::vector<Sample> load_visa_csv(const fs::path& root) {
  const fs::path csv = root / "split_csv" / "1cls.csv";
  std::ifstream in(csv);
  if (!in) throw DataError("missing split file: " + csv.string());
  std::string line;
  std::getline(in, line);
  const auto header = split_csv_line(line);
  const auto column = [&](const char* name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError(csv.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto c_obj = column("object"), c_split = column("split"), c_label = column("label"),
             c_img = column("image"), c_mask = column("mask");
  std::vector<Sample> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() < header.size()) throw DataError(csv.string() + ": short row: " + line);
    Sample s{(root / cells[c_img]).string(), cells[c_obj], cells[c_split],
             cells[c_label] == "normal" ? 0 : 1, std::nullopt};
    if (cells[c_label] != "normal" && cells[c_label] != "anomaly")
      throw DataError(csv.string() + ": unknown label '" + cells[c_label] + "'");
    if (!cells[c_mask].empty()) s.mask_path = (root / cells[c_mask]).string();
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<Sample> load_flat(const fs::path& root) {
  std::vector<Sample> out;
  for (const auto& cat_dir : sorted_dirs(root)) {
    const std::string category = cat_dir.filename().string();
    for (const auto& img : sorted_images(cat_dir / "train"))
      out.push_back({img.string(), category, "train", 0, std::nullopt});
    for (const auto& img : sorted_images(cat_dir / "good"))
      out.push_back({img.string(), category, "test", 0, std::nullopt});
    for (const auto& img : sorted_images(cat_dir / "anomaly"))
      out.push_back({img.string(), category, "test", 1,
                     (cat_dir / "masks" / (img.stem().string() + ".png")).string()});
  }
  return out;
}

}  // namespace detail

// Deterministic sample list; every anomalous test sample must carry a mask
// file whose size matches its image.
inline std::vector<Sample> load_dataset(const std::string& root, const std::string& layout_id) {
  namespace fs = std::filesystem;
  const Layout layout = parse_layout(layout_id);
  if (!fs::is_directory(root)) throw ConfigError("dataset root does not exist: " + root);
  std::vector<Sample> samples;
  switch (layout) {
    case Layout::kMvtec: samples = detail::load_mvtec(root); break;
    case Layout::kVisaCsv: samples = detail::load_visa_csv(root); break;
    case Layout::kFlatSynthetic: samples = detail::load_flat(root); break;
  }
  if (samples.empty()) throw DataError("no samples found under " + root + " (layout " + layout_id + ")");
  for (const auto& s : samples) {
    if (!fs::exists(s.image_path)) throw DataError("missing image file: " + s.image_path);
    if (s.label == 0 || s.split != "test") continue;
    if (!s.mask_path || !fs::exists(*s.mask_path))
      throw DataError("anomalous sample " + s.image_path + " has no mask (expected " +
                      s.mask_path.value_or("<none>") + ")");
    const auto img = image_size(s.image_path);
    const auto mask = image_size(*s.mask_path);
    if (img != mask)
      throw DataError("mask " + *s.mask_path + " is " + std::to_string(mask.first) + "x" +
                      std::to_string(mask.second) + " but image " + s.image_path + " is " +
                      std::to_string(img.first) + "x" + std::to_string(img.second));
  }
  return samples;
}

inline std::vector<std::string> categories_of(const std::vector<Sample>& samples) {
  std::vector<std::string> out;
  for (const auto& s : samples)
    if (std::find(out.begin(), out.end(), s.category) == out.end()) out.push_back(s.category);
  return out;
}

// Mask for a sample at its native size; zeros for normal samples.
inline Matrix sample_mask(const Sample& s, int rows, int cols) {
  if (s.label == 0 || !s.mask_path) return Matrix::Zero(rows, cols);
  return load_mask(*s.mask_path);
}

}  // namespace afclip
