#ifndef FREQLENS_REPORT_HPP
#define FREQLENS_REPORT_HPP

// Result serialization (pair CSV, canonical audit JSON) and SVG charts.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "freqlens/aggregate.hpp"
#include "freqlens/error.hpp"
#include "freqlens/importance.hpp"
#include "freqlens/metrics.hpp"

namespace freqlens {

namespace detail {

inline std::string format_g9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string format_px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pair CSV: pair_id,group,label,base_similarity,band_0,...,band_{B-1}

inline std::string pair_csv_header(int num_bands) {
  std::string header = "pair_id,group,label,base_similarity";
  for (int b = 0; b < num_bands; ++b) header += ",band_" + std::to_string(b);
  return header;
}

inline std::string format_pair_csv(std::span<const PairExplanation> explanations, int num_bands) {
  std::vector<const PairExplanation*> ordered;
  for (const auto& e : explanations) ordered.push_back(&e);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->pair_id < b->pair_id; });
  std::string text = pair_csv_header(num_bands) + "\n";
  for (const auto* e : ordered) {
    if (static_cast<int>(e->importance.normalized.size()) != num_bands) {
      throw Error(ErrorKind::kInvalidInput, "pair " + std::to_string(e->pair_id) + " has " +
                                                std::to_string(e->importance.normalized.size()) +
                                                " bands, expected " + std::to_string(num_bands));
    }
    text += std::to_string(e->pair_id) + "," + e->group + "," + std::string(to_string(e->label)) +
            "," + detail::format_g9(e->base_similarity);
    for (double v : e->importance.normalized) text += "," + detail::format_g9(v);
    text += "\n";
  }
  return text;
}

inline void write_pair_csv(std::span<const PairExplanation> explanations, int num_bands,
                           const std::filesystem::path& path) {
  detail::write_text(path, format_pair_csv(explanations, num_bands));
}

/// Reads a pair CSV back. Raw importances are not stored, so only the
/// normalized vector is populated.
inline std::vector<PairExplanation> read_pair_csv(const std::filesystem::path& path) {
  std::istringstream in(detail::read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kParse, "line 1: missing header");
  const auto header = detail::split_commas(line);
  if (header.size() < 4 || line.rfind("pair_id,group,label,base_similarity", 0) != 0) {
    throw Error(ErrorKind::kParse, "line 1: not a pair importance header");
  }
  const int bands = static_cast<int>(header.size()) - 4;
  std::vector<PairExplanation> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split_commas(line);
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (static_cast<int>(f.size()) != bands + 4) throw Error(ErrorKind::kParse, where + "wrong field count");
    try {
      PairExplanation e;
      e.pair_id = std::stoi(f[0]);
      e.group = f[1];
      if (f[2] != "genuine" && f[2] != "imposter") throw Error(ErrorKind::kParse, where + "bad label");
      e.label = f[2] == "genuine" ? PairLabel::kGenuine : PairLabel::kImposter;
      e.base_similarity = std::stod(f[3]);
      for (int b = 0; b < bands; ++b) e.importance.normalized.push_back(std::stod(f[4 + b]));
      out.push_back(std::move(e));
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::kParse, where + "malformed number");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Audit JSON

struct AuditConfig {
  std::string pairs_path;
  std::string images_root;
  std::string backend = "reference";
  double band_size = 4.0;
  int image_size = 112;
  std::string label_filter = "all";
  int threads = 1;

  friend bool operator==(const AuditConfig&, const AuditConfig&) = default;
};

struct AuditReport {
  AuditConfig config;
  GroupImportanceMatrix importance;
  RankTable ranking;
  BiasReport bias;
  std::optional<ImportanceDelta> delta;
  std::string baseline_name;  // meaningful only with a delta
};

namespace detail {

// JSON has no infinity; unbounded values are written as the string "inf".
inline nlohmann::json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double number_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw Error(ErrorKind::kParse, "unexpected string for a number: " + s);
  }
  return j.get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const AuditReport& r) {
  using nlohmann::json;
  json config = {{"backend", r.config.backend},         {"band_size", r.config.band_size},
                 {"image_size", r.config.image_size},   {"images_root", r.config.images_root},
                 {"label_filter", r.config.label_filter}, {"pairs", r.config.pairs_path},
                 {"threads", r.config.threads}};
  json importance = {{"count", r.importance.count},
                     {"groups", r.importance.groups},
                     {"mean", r.importance.mean},
                     {"num_bands", r.importance.num_bands},
                     {"stddev", r.importance.stddev}};
  json ranking = {{"groups", r.ranking.groups},
                  {"num_bands", r.ranking.num_bands},
                  {"ranks", r.ranking.ranks}};
  json results = json::array();
  for (const auto& v : r.bias.results) {
    results.push_back({{"accuracy", v.accuracy},
                       {"group", v.group},
                       {"num_pairs", v.num_pairs},
                       {"threshold", detail::number_or_inf(v.threshold)}});
  }
  json bias = {{"mean", r.bias.mean_accuracy},
               {"results", results},
               {"ser", detail::number_or_inf(r.bias.ser)},
               {"std", r.bias.std},
               {"warnings", r.bias.warnings}};
  json out = {{"bias", bias}, {"config", config}, {"importance", importance}, {"ranking", ranking}};
  if (r.delta) {
    out["delta"] = {{"baseline", r.baseline_name},
                    {"groups", r.delta->groups},
                    {"num_bands", r.delta->num_bands},
                    {"values", r.delta->delta}};
  }
  return out;
}

inline AuditReport audit_from_json(const nlohmann::json& j) {
  try {
    AuditReport r;
    const auto& c = j.at("config");
    r.config.backend = c.at("backend").get<std::string>();
    r.config.band_size = c.at("band_size").get<double>();
    r.config.image_size = c.at("image_size").get<int>();
    r.config.images_root = c.at("images_root").get<std::string>();
    r.config.label_filter = c.at("label_filter").get<std::string>();
    r.config.pairs_path = c.at("pairs").get<std::string>();
    r.config.threads = c.at("threads").get<int>();

    const auto& imp = j.at("importance");
    r.importance.groups = imp.at("groups").get<std::vector<std::string>>();
    r.importance.num_bands = imp.at("num_bands").get<int>();
    r.importance.mean = imp.at("mean").get<GroupBandMatrix>();
    r.importance.stddev = imp.at("stddev").get<GroupBandMatrix>();
    r.importance.count = imp.at("count").get<std::vector<int>>();

    const auto& rank = j.at("ranking");
    r.ranking.groups = rank.at("groups").get<std::vector<std::string>>();
    r.ranking.num_bands = rank.at("num_bands").get<int>();
    r.ranking.ranks = rank.at("ranks").get<std::vector<std::vector<int>>>();

    const auto& bias = j.at("bias");
    r.bias.mean_accuracy = bias.at("mean").get<double>();
    r.bias.std = bias.at("std").get<double>();
    r.bias.ser = detail::number_from_json(bias.at("ser"));
    r.bias.warnings = bias.at("warnings").get<std::vector<std::string>>();
    for (const auto& v : bias.at("results")) {
      r.bias.results.push_back({v.at("group").get<std::string>(),
                                detail::number_from_json(v.at("threshold")),
                                v.at("accuracy").get<double>(), v.at("num_pairs").get<int>()});
    }
    if (j.contains("delta")) {
      const auto& d = j.at("delta");
      r.baseline_name = d.at("baseline").get<std::string>();
      r.delta = ImportanceDelta{d.at("groups").get<std::vector<std::string>>(),
                                d.at("num_bands").get<int>(), d.at("values").get<GroupBandMatrix>()};
    }
    const std::size_t e = r.importance.groups.size();
    if (r.importance.mean.size() != e || r.importance.stddev.size() != e || r.importance.count.size() != e) {
      throw Error(ErrorKind::kParse, "importance matrix rows do not match its groups");
    }
    for (const auto& row : r.importance.mean) {
      if (static_cast<int>(row.size()) != r.importance.num_bands) {
        throw Error(ErrorKind::kParse, "importance row length does not match num_bands");
      }
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("malformed audit report: ") + e.what());
  }
}

/// Sorted keys and shortest round-trip floats: equal reports give equal bytes.
inline std::string format_audit_json(const AuditReport& report) { return to_json(report).dump(2) + "\n"; }

inline void write_audit_json(const AuditReport& report, const std::filesystem::path& path) {
  detail::write_text(path, format_audit_json(report));
}

inline AuditReport read_audit_json(const std::filesystem::path& path) {
  const std::string text = detail::read_text(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, path.string() + ": " + e.what());
  }
  return audit_from_json(j);
}

// ---------------------------------------------------------------------------
// SVG charts

inline constexpr const char* kGroupPalette[8] = {"#d62728", "#ff7f0e", "#1f77b4", "#2ca02c",
                                                 "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

inline const char* group_color(std::size_t index) { return kGroupPalette[index % 8]; }

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline void svg_legend(std::ostringstream& svg, const std::vector<std::string>& groups, double x, double y) {
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double row = y + 22.0 * static_cast<double>(g);
    svg << "<rect class=\"legend-swatch\" x=\"" << format_px(x) << "\" y=\"" << format_px(row)
        << "\" width=\"14\" height=\"14\" fill=\"" << group_color(g) << "\"/>\n";
    svg << "<text x=\"" << format_px(x + 20) << "\" y=\"" << format_px(row + 12)
        << "\" font-size=\"13\">" << xml_escape(groups[g]) << "</text>\n";
  }
}

}  // namespace detail

struct RankingLayout {
  double left = 60, top = 30, plot_width = 640, plot_height = 360, legend_width = 160, bottom = 50;
};

/// Line per group: x = band, y = rank with rank 1 at the top.
inline std::string format_ranking_svg(const RankTable& table, RankingLayout layout = {}) {
  const std::size_t groups = table.groups.size();
  const int bands = table.num_bands;
  const double width = layout.left + layout.plot_width + layout.legend_width;
  const double height = layout.top + layout.plot_height + layout.bottom;
  auto x_of = [&](int b) {
    return bands <= 1 ? layout.left + layout.plot_width / 2
                      : layout.left + layout.plot_width * b / static_cast<double>(bands - 1);
  };
  auto y_of = [&](int rank) {
    return groups <= 1 ? layout.top
                       : layout.top + layout.plot_height * (rank - 1) / static_cast<double>(groups - 1);
  };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::format_px(width)
      << "\" height=\"" << detail::format_px(height) << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const double axis_y = layout.top + layout.plot_height + 10;
  svg << "<line x1=\"" << detail::format_px(layout.left) << "\" y1=\"" << detail::format_px(axis_y)
      << "\" x2=\"" << detail::format_px(layout.left + layout.plot_width) << "\" y2=\""
      << detail::format_px(axis_y) << "\" stroke=\"black\"/>\n";
  for (int b = 0; b < bands; ++b) {
    svg << "<text x=\"" << detail::format_px(x_of(b)) << "\" y=\"" << detail::format_px(axis_y + 16)
        << "\" font-size=\"11\" text-anchor=\"middle\">" << b << "</text>\n";
  }
  for (std::size_t r = 1; r <= groups; ++r) {
    svg << "<text x=\"" << detail::format_px(layout.left - 12) << "\" y=\""
        << detail::format_px(y_of(static_cast<int>(r)) + 4)
        << "\" font-size=\"11\" text-anchor=\"end\">" << r << "</text>\n";
  }
  svg << "<text x=\"" << detail::format_px(layout.left + layout.plot_width / 2) << "\" y=\""
      << detail::format_px(height - 6) << "\" font-size=\"13\" text-anchor=\"middle\">frequency band</text>\n";
  for (std::size_t g = 0; g < groups; ++g) {
    svg << "<polyline class=\"rank-line\" data-group=\"" << detail::xml_escape(table.groups[g])
        << "\" fill=\"none\" stroke=\"" << group_color(g) << "\" stroke-width=\"2\" points=\"";
    for (int b = 0; b < bands; ++b) {
      if (b) svg << ' ';
      svg << detail::format_px(x_of(b)) << ',' << detail::format_px(y_of(table.ranks[g][b]));
    }
    svg << "\"/>\n";
  }
  detail::svg_legend(svg, table.groups, layout.left + layout.plot_width + 24, layout.top);
  svg << "</svg>\n";
  return svg.str();
}

inline void render_ranking_svg(const RankTable& table, const std::filesystem::path& path) {
  detail::write_text(path, format_ranking_svg(table));
}

struct DistributionOptions {
  bool error_bars = false;
  double plot_height = 1000;
  double bar_width = 12;
  double band_gap = 10;
};

/// Grouped bars per band. A baseline, when given, is drawn first with a stripe
/// pattern so the subject bars sit on top of it.
inline std::string format_distribution_svg(const GroupImportanceMatrix& matrix,
                                           const GroupImportanceMatrix* baseline,
                                           DistributionOptions options = {}) {
  std::vector<std::size_t> baseline_row(matrix.groups.size(), 0);
  if (baseline) {
    if (baseline->num_bands != matrix.num_bands || baseline->groups.size() != matrix.groups.size()) {
      throw Error(ErrorKind::kIncompatibleReport, "baseline shape does not match the subject matrix");
    }
    for (std::size_t g = 0; g < matrix.groups.size(); ++g) {
      const auto it = std::find(baseline->groups.begin(), baseline->groups.end(), matrix.groups[g]);
      if (it == baseline->groups.end()) {
        throw Error(ErrorKind::kIncompatibleReport, "baseline lacks group '" + matrix.groups[g] + "'");
      }
      baseline_row[g] = static_cast<std::size_t>(it - baseline->groups.begin());
    }
  }
  const std::size_t groups = matrix.groups.size();
  const int bands = matrix.num_bands;
  double vmax = 0.0;
  for (std::size_t g = 0; g < groups; ++g) {
    for (int b = 0; b < bands; ++b) {
      double top = matrix.mean[g][b];
      if (options.error_bars) top += matrix.stddev[g][b];
      vmax = std::max(vmax, top);
      if (baseline) vmax = std::max(vmax, baseline->mean[baseline_row[g]][b]);
    }
  }
  if (!(vmax > 0.0)) vmax = 1.0;

  const double left = 70, top = 30, legend = 170, bottom = 60;
  const double slot = options.bar_width * static_cast<double>(groups) + options.band_gap;
  const double plot_width = slot * bands;
  const double width = left + plot_width + legend;
  const double height = top + options.plot_height + bottom;
  const double base_y = top + options.plot_height;
  auto bar_x = [&](std::size_t g, int b) {
    return left + slot * b + options.band_gap / 2 + options.bar_width * static_cast<double>(g);
  };
  auto bar_h = [&](double v) { return std::max(v, 0.0) / vmax * options.plot_height; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::format_px(width)
      << "\" height=\"" << detail::format_px(height) << "\" data-vmax=\"" << detail::format_g9(vmax)
      << "\">\n";
  if (baseline) {
    svg << "<defs>\n";
    for (std::size_t g = 0; g < groups; ++g) {
      svg << "<pattern id=\"stripe-" << g
          << "\" patternUnits=\"userSpaceOnUse\" width=\"6\" height=\"6\" "
             "patternTransform=\"rotate(45)\"><rect width=\"6\" height=\"6\" fill=\"white\"/>"
             "<line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\""
          << group_color(g) << "\" stroke-width=\"3\"/></pattern>\n";
    }
    svg << "</defs>\n";
  }
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << detail::format_px(left) << "\" y1=\"" << detail::format_px(base_y)
      << "\" x2=\"" << detail::format_px(left + plot_width) << "\" y2=\"" << detail::format_px(base_y)
      << "\" stroke=\"black\"/>\n";
  for (int b = 0; b < bands; ++b) {
    svg << "<text x=\"" << detail::format_px(left + slot * b + slot / 2) << "\" y=\""
        << detail::format_px(base_y + 18) << "\" font-size=\"11\" text-anchor=\"middle\">" << b
        << "</text>\n";
  }
  svg << "<text x=\"" << detail::format_px(left + plot_width / 2) << "\" y=\""
      << detail::format_px(height - 10)
      << "\" font-size=\"13\" text-anchor=\"middle\">frequency band</text>\n";

  auto emit_bar = [&](const char* cls, std::size_t g, int b, double v, const std::string& fill,
                      const char* extra) {
    const double h = bar_h(v);
    svg << "<rect class=\"" << cls << "\" data-group=\"" << detail::xml_escape(matrix.groups[g])
        << "\" data-band=\"" << b << "\" data-value=\"" << detail::format_g9(v) << "\" x=\""
        << detail::format_px(bar_x(g, b)) << "\" y=\"" << detail::format_px(base_y - h)
        << "\" width=\"" << detail::format_px(options.bar_width) << "\" height=\""
        << detail::format_px(h) << "\" fill=\"" << fill << "\"" << extra << "/>\n";
  };
  if (baseline) {
    for (std::size_t g = 0; g < groups; ++g) {
      for (int b = 0; b < bands; ++b) {
        emit_bar("baseline-bar", g, b, baseline->mean[baseline_row[g]][b],
                 "url(#stripe-" + std::to_string(g) + ")", "");
      }
    }
  }
  for (std::size_t g = 0; g < groups; ++g) {
    for (int b = 0; b < bands; ++b) {
      emit_bar("bar", g, b, matrix.mean[g][b], group_color(g), baseline ? " fill-opacity=\"0.6\"" : "");
    }
  }
  if (options.error_bars) {
    for (std::size_t g = 0; g < groups; ++g) {
      for (int b = 0; b < bands; ++b) {
        const double cx = bar_x(g, b) + options.bar_width / 2;
        const double lo = bar_h(matrix.mean[g][b] - matrix.stddev[g][b]);
        const double hi = bar_h(matrix.mean[g][b] + matrix.stddev[g][b]);
        svg << "<line class=\"error-bar\" x1=\"" << detail::format_px(cx) << "\" y1=\""
            << detail::format_px(base_y - lo) << "\" x2=\"" << detail::format_px(cx) << "\" y2=\""
            << detail::format_px(base_y - hi) << "\" stroke=\"black\"/>\n";
      }
    }
  }
  detail::svg_legend(svg, matrix.groups, left + plot_width + 24, top);
  svg << "</svg>\n";
  return svg.str();
}

inline void render_distribution_svg(const GroupImportanceMatrix& matrix,
                                    const GroupImportanceMatrix* baseline,
                                    const std::filesystem::path& path,
                                    DistributionOptions options = {}) {
  detail::write_text(path, format_distribution_svg(matrix, baseline, options));
}

}  // namespace freqlens

#endif  // FREQLENS_REPORT_HPP
