#ifndef FREQLENS_DATASET_HPP
#define FREQLENS_DATASET_HPP

// Verification pair lists and conforming image loading.

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "freqlens/error.hpp"
#include "freqlens/spectral.hpp"

namespace freqlens {

enum class PairLabel { kGenuine, kImposter };

inline std::string_view to_string(PairLabel label) {
  return label == PairLabel::kGenuine ? "genuine" : "imposter";
}

struct PairRecord {
  int pair_id = 0;
  std::string probe_path;
  std::string reference_path;
  PairLabel label = PairLabel::kGenuine;
  std::string group;

  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

struct PairList {
  std::vector<PairRecord> records;
  std::vector<std::string> groups;  // first-appearance order

  friend bool operator==(const PairList&, const PairList&) = default;
};

inline constexpr std::string_view kPairListHeader = "probe,reference,label,group";

namespace detail {

inline std::vector<std::string> split_commas(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      return fields;
    }
    fields.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace detail

/// Builds the group list and pair ids for already-parsed records.
inline PairList make_pair_list(std::vector<PairRecord> records) {
  PairList list;
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].pair_id = static_cast<int>(i);
    if (std::find(list.groups.begin(), list.groups.end(), records[i].group) == list.groups.end()) {
      list.groups.push_back(records[i].group);
    }
  }
  list.records = std::move(records);
  return list;
}

inline PairList parse_pairs(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::kParse, "line 1: missing header");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kPairListHeader) {
    throw Error(ErrorKind::kParse, "line 1: header must be '" + std::string(kPairListHeader) + "'");
  }
  std::vector<PairRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    const auto fields = detail::split_commas(line);
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (fields.size() != 4) {
      throw Error(ErrorKind::kParse, where + "expected 4 fields, got " + std::to_string(fields.size()));
    }
    PairRecord r;
    r.probe_path = fields[0];
    r.reference_path = fields[1];
    if (fields[2] == "genuine") {
      r.label = PairLabel::kGenuine;
    } else if (fields[2] == "imposter") {
      r.label = PairLabel::kImposter;
    } else {
      throw Error(ErrorKind::kParse, where + "unknown label '" + fields[2] + "'");
    }
    r.group = fields[3];
    if (r.probe_path.empty() || r.reference_path.empty() || r.group.empty()) {
      throw Error(ErrorKind::kParse, where + "empty field");
    }
    records.push_back(std::move(r));
  }
  return make_pair_list(std::move(records));
}

inline PairList load_pairs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open pair list " + path.string());
  return parse_pairs(in);
}

inline void write_pairs(const PairList& list, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write pair list " + path.string());
  out << kPairListHeader << '\n';
  for (const auto& r : list.records) {
    for (const auto* field : {&r.probe_path, &r.reference_path, &r.group}) {
      if (field->find(',') != std::string::npos || field->find('\n') != std::string::npos) {
        throw Error(ErrorKind::kInvalidInput, "pair list fields must not contain commas: " + *field);
      }
    }
    out << r.probe_path << ',' << r.reference_path << ',' << to_string(r.label) << ',' << r.group
        << '\n';
  }
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

/// Maps an 8-bit sample to the pipeline's [-1, 1] range.
inline double normalize_pixel(std::uint8_t p) { return static_cast<double>(p) / 127.5 - 1.0; }

inline std::uint8_t quantize_pixel(double x) {
  const double scaled = std::round((x + 1.0) * 127.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

/// Decodes an 8-bit PNG/JPEG/BMP into RGB order; grayscale is replicated to 3
/// channels and alpha is dropped. No resizing.
inline Image load_image(const std::filesystem::path& path, Extent expected) {
  const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw Error(ErrorKind::kDecode, "cannot decode image " + path.string());
  if (raw.depth() != CV_8U) {
    throw Error(ErrorKind::kDecode, "image is not 8-bit: " + path.string());
  }
  const Extent got{raw.rows, raw.cols};
  if (got != expected) {
    throw Error(ErrorKind::kShape, path.string() + " is " + to_string(got) + ", expected " +
                                       to_string(expected));
  }
  const int src_ch = raw.channels();
  if (src_ch != 1 && src_ch != 3 && src_ch != 4) {
    throw Error(ErrorKind::kDecode, "unsupported channel count in " + path.string());
  }
  Image image(raw.rows, raw.cols, 3);
  for (int y = 0; y < raw.rows; ++y) {
    const std::uint8_t* row = raw.ptr<std::uint8_t>(y);
    for (int x = 0; x < raw.cols; ++x) {
      const std::uint8_t* px = row + static_cast<std::size_t>(x) * src_ch;
      if (src_ch == 1) {
        const double v = normalize_pixel(px[0]);
        for (int c = 0; c < 3; ++c) image.at(y, x, c) = v;
      } else {
        // OpenCV stores BGR(A).
        image.at(y, x, 0) = normalize_pixel(px[2]);
        image.at(y, x, 1) = normalize_pixel(px[1]);
        image.at(y, x, 2) = normalize_pixel(px[0]);
      }
    }
  }
  return image;
}

/// Writes an 8-bit PNG (RGB or gray) after mapping [-1, 1] back to [0, 255].
inline void save_png(const Image& image, const std::filesystem::path& path) {
  const int ch = image.channels();
  cv::Mat mat(image.height(), image.width(), ch == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    std::uint8_t* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width(); ++x) {
      if (ch == 1) {
        row[x] = quantize_pixel(image.at(y, x, 0));
      } else {
        row[3 * x + 0] = quantize_pixel(image.at(y, x, 2));
        row[3 * x + 1] = quantize_pixel(image.at(y, x, 1));
        row[3 * x + 2] = quantize_pixel(image.at(y, x, 0));
      }
    }
  }
  if (!cv::imwrite(path.string(), mat, {cv::IMWRITE_PNG_COMPRESSION, 6})) {
    throw Error(ErrorKind::kIo, "cannot write " + path.string());
  }
}

}  // namespace freqlens

#endif  // FREQLENS_DATASET_HPP
