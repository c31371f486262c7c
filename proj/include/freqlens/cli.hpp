#ifndef FREQLENS_CLI_HPP
#define FREQLENS_CLI_HPP

// Command-line orchestration. Exit codes: 0 success, 1 processing failure,
// 2 configuration or usage error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "freqlens/aggregate.hpp"
#include "freqlens/dataset.hpp"
#include "freqlens/embedder.hpp"
#include "freqlens/error.hpp"
#include "freqlens/importance.hpp"
#include "freqlens/metrics.hpp"
#include "freqlens/report.hpp"
#include "freqlens/spectral.hpp"
#include "freqlens/synthfix.hpp"

namespace freqlens::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline constexpr const char* kPairCsvName = "pair_importance.csv";
inline constexpr const char* kAuditJsonName = "audit.json";
inline constexpr const char* kRankingSvgName = "ranking.svg";
inline constexpr const char* kDistributionSvgName = "distribution.svg";

struct RunConfig {
  std::filesystem::path pairs_path;
  std::filesystem::path images_root;  // empty: directory of the pair list
  std::string backend = "reference";
  double band_size = 4.0;
  int image_size = 112;
  std::string label_filter = "all";
  std::filesystem::path output_dir;
  int worker_count = 1;
  std::optional<std::filesystem::path> baseline_report_path;
  bool render = true;
  bool error_bars = false;
  bool quiet = false;
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidConfig:
    case ErrorKind::kEmptyInput:
    case ErrorKind::kIncompatibleReport:
      return kExitUsage;
    default:
      return kExitFailure;
  }
}

namespace detail {

inline std::filesystem::path effective_images_root(const RunConfig& config) {
  if (!config.images_root.empty()) return config.images_root;
  return config.pairs_path.parent_path();
}

inline void validate(const RunConfig& config) {
  if (!(config.band_size > 0.0)) throw Error(ErrorKind::kInvalidConfig, "--band-size must be positive");
  if (config.worker_count < 1) throw Error(ErrorKind::kInvalidConfig, "--threads must be >= 1");
  if (config.image_size < 2) throw Error(ErrorKind::kInvalidConfig, "--image-size must be >= 2");
  if (config.output_dir.empty()) throw Error(ErrorKind::kInvalidConfig, "--out is required");
  parse_label_filter(config.label_filter);
  parse_backend(config.backend);
}

inline AuditConfig snapshot(const RunConfig& config) {
  AuditConfig c;
  c.pairs_path = config.pairs_path.string();
  c.images_root = effective_images_root(config).string();
  c.backend = config.backend;
  c.band_size = config.band_size;
  c.image_size = config.image_size;
  c.label_filter = config.label_filter;
  c.threads = config.worker_count;
  return c;
}

/// Writes every (path, contents) pair; on any failure removes what was
/// written and rethrows.
inline void commit_outputs(const std::vector<std::pair<std::filesystem::path, std::string>>& files) {
  std::vector<std::filesystem::path> written;
  try {
    for (const auto& [path, text] : files) {
      freqlens::detail::write_text(path, text);
      written.push_back(path);
    }
  } catch (...) {
    std::error_code ignored;
    for (const auto& p : written) std::filesystem::remove(p, ignored);
    throw;
  }
}

inline std::vector<PairExplanation> explain_all(const RunConfig& config, const PairList& pairs,
                                                const BandPartition& partition, std::ostream& err) {
  auto backend = make_backend(parse_backend(config.backend));
  const std::size_t total = pairs.records.size();
  const std::size_t step = std::max<std::size_t>(total / 10, 1);
  return explain_pairs(pairs, partition, *backend, effective_images_root(config), config.worker_count,
                       [&](std::size_t done) {
                         if (!config.quiet && (done % step == 0 || done == total)) {
                           err << "explained " << done << "/" << total << " pairs\n";
                         }
                       });
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace detail

inline int cmd_explain(const RunConfig& config, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    detail::validate(config);
    const PairList pairs = load_pairs(config.pairs_path);
    const BandPartition partition(config.image_size, config.image_size, config.band_size);
    const auto explanations = detail::explain_all(config, pairs, partition, err);
    std::filesystem::create_directories(config.output_dir);
    detail::commit_outputs(
        {{config.output_dir / kPairCsvName, format_pair_csv(explanations, partition.num_bands())}});
    return kExitOk;
  });
}

inline int cmd_audit(const RunConfig& config, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    detail::validate(config);
    const LabelFilter filter = parse_label_filter(config.label_filter);

    std::optional<AuditReport> baseline;
    if (config.baseline_report_path) {
      try {
        baseline = read_audit_json(*config.baseline_report_path);
      } catch (const Error& e) {
        throw Error(ErrorKind::kInvalidConfig, "unusable baseline report: " + e.detail());
      }
    }

    const PairList pairs = load_pairs(config.pairs_path);
    if (std::none_of(pairs.records.begin(), pairs.records.end(),
                     [&](const PairRecord& r) { return passes(filter, r.label); })) {
      throw Error(ErrorKind::kEmptyInput,
                  "no pairs pass label filter '" + config.label_filter + "'");
    }
    const BandPartition partition(config.image_size, config.image_size, config.band_size);
    const auto explanations = detail::explain_all(config, pairs, partition, err);

    AuditReport report;
    report.config = detail::snapshot(config);
    report.importance = mean_importance(explanations, filter);
    report.ranking = rank_groups(report.importance);

    std::vector<GroupScore> scores;
    for (const auto& e : explanations) scores.push_back({e.group, e.label, e.base_similarity});
    report.bias = bias_report(group_verification(scores));
    for (const auto& w : report.bias.warnings) err << "warning: " << w << "\n";

    if (baseline) {
      report.delta = importance_delta(report.importance, baseline->importance);
      report.baseline_name = config.baseline_report_path->string();
    }

    std::filesystem::create_directories(config.output_dir);
    std::vector<std::pair<std::filesystem::path, std::string>> files = {
        {config.output_dir / kPairCsvName, format_pair_csv(explanations, partition.num_bands())},
        {config.output_dir / kAuditJsonName, format_audit_json(report)}};
    if (config.render) {
      DistributionOptions options;
      options.error_bars = config.error_bars;
      files.emplace_back(config.output_dir / kRankingSvgName, format_ranking_svg(report.ranking));
      files.emplace_back(config.output_dir / kDistributionSvgName,
                         format_distribution_svg(report.importance,
                                                 baseline ? &baseline->importance : nullptr, options));
    }
    detail::commit_outputs(files);
    return kExitOk;
  });
}

/// Parses `Group=accuracy` arguments and prints Mean/STD/SER.
inline int cmd_metrics(const std::vector<std::string>& arguments, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    std::vector<VerificationResult> results;
    for (const auto& arg : arguments) {
      const auto eq = arg.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size()) {
        throw Error(ErrorKind::kInvalidConfig, "expected Group=accuracy, got '" + arg + "'");
      }
      double accuracy = 0.0;
      try {
        std::size_t used = 0;
        accuracy = std::stod(arg.substr(eq + 1), &used);
        if (used != arg.size() - eq - 1) throw std::invalid_argument("trailing characters");
      } catch (const std::logic_error&) {
        throw Error(ErrorKind::kInvalidConfig, "accuracy is not a number in '" + arg + "'");
      }
      if (!(accuracy >= 0.0 && accuracy <= 100.0)) {
        throw Error(ErrorKind::kInvalidConfig, "accuracy must lie in [0, 100] in '" + arg + "'");
      }
      results.push_back({arg.substr(0, eq), 0.0, accuracy, 1});
    }
    if (results.size() < 2) throw Error(ErrorKind::kInvalidConfig, "need at least two Group=accuracy arguments");
    const BiasReport report = bias_report(std::move(results));
    for (const auto& w : report.warnings) err << "warning: " << w << "\n";
    char line[64];
    std::snprintf(line, sizeof line, "Mean %.2f\n", report.mean_accuracy);
    out << line;
    std::snprintf(line, sizeof line, "STD %.2f\n", report.std);
    out << line;
    if (std::isinf(report.ser)) {
      out << "SER inf\n";
    } else {
      std::snprintf(line, sizeof line, "SER %.2f\n", report.ser);
      out << line;
    }
    return kExitOk;
  });
}

struct SynthConfig {
  std::filesystem::path output_dir;
  std::uint64_t seed = 1;
  std::vector<std::string> groups;  // NAME=first-last | NAME=all
  int identities = 4;
  int pairs_per_label = 25;
  double band_size = 4.0;
  int image_size = 112;
};

inline SyntheticSpec parse_group_spec(const std::string& text, const SynthConfig& config, std::size_t index) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorKind::kInvalidConfig, "--group expects NAME=BANDS, got '" + text + "'");
  }
  const BandPartition partition(config.image_size, config.image_size, config.band_size);
  const std::string bands = text.substr(eq + 1);
  SyntheticSpec spec;
  spec.group_name = text.substr(0, eq);
  spec.seed = config.seed * 1000003ull + index;
  spec.num_identities = config.identities;
  spec.pairs_per_label = config.pairs_per_label;
  spec.band_size = config.band_size;
  spec.image_size = config.image_size;
  if (bands == "all") {
    spec.band_profile.assign(partition.num_bands(), 1.0);
    return spec;
  }
  const auto dash = bands.find('-');
  try {
    const int first = std::stoi(bands.substr(0, dash));
    const int last = dash == std::string::npos ? first : std::stoi(bands.substr(dash + 1));
    spec.band_profile = band_range_profile(partition.num_bands(), first, last);
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::kInvalidConfig, "band range must look like 1-3 or all, got '" + bands + "'");
  }
  return spec;
}

inline int cmd_synth(const SynthConfig& config, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    if (config.groups.empty()) throw Error(ErrorKind::kInvalidConfig, "at least one --group is required");
    std::vector<SyntheticSpec> specs;
    for (std::size_t i = 0; i < config.groups.size(); ++i) {
      specs.push_back(parse_group_spec(config.groups[i], config, i));
    }
    const PairList list = generate_fixtures(specs, config.output_dir);
    err << "wrote " << list.records.size() << " pairs to " << (config.output_dir / "pairs.csv").string()
        << "\n";
    return kExitOk;
  });
}

struct PrecomputeConfig {
  RunConfig run;
  std::filesystem::path store_dir;
};

/// Fills a precomputed store with every original and band-masked image the
/// explain step will request, so later runs can use `precomputed:<dir>`.
inline int cmd_precompute(const PrecomputeConfig& config, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    if (config.store_dir.empty()) throw Error(ErrorKind::kInvalidConfig, "--store is required");
    const RunConfig& run = config.run;
    if (!(run.band_size > 0.0)) throw Error(ErrorKind::kInvalidConfig, "--band-size must be positive");
    const auto descriptor = parse_backend(run.backend);
    const PairList pairs = load_pairs(run.pairs_path);
    const BandPartition partition(run.image_size, run.image_size, run.band_size);
    auto backend = make_backend(descriptor);
    PrecomputedStoreWriter writer(config.store_dir);
    const auto root = detail::effective_images_root(run);
    std::set<std::string> seen;
    for (const auto& record : pairs.records) {
      for (const auto* path : {&record.probe_path, &record.reference_path}) {
        if (!seen.insert(*path).second) continue;
        Image image;
        try {
          image = load_image(resolve_image_path(root, *path), partition.extent());
        } catch (const Error& e) {
          writer.add_error(*path, e.what());
          err << "warning: " << *path << ": " << e.what() << "\n";
          continue;
        }
        std::vector<Image> batch{image};
        for (auto& m : mask_every_band(image, partition)) batch.push_back(std::move(m));
        const auto embeddings = backend->embed_batch(batch);
        writer.add(batch[0], embeddings[0], *path);
        for (std::size_t i = 1; i < batch.size(); ++i) writer.add(batch[i], embeddings[i]);
      }
    }
    writer.save_index();
    return kExitOk;
  });
}

inline int threads_from_env(std::ostream& err) {
  const char* env = std::getenv("FREQLENS_THREADS");
  if (!env || !*env) return 1;
  try {
    std::size_t used = 0;
    const int n = std::stoi(env, &used);
    if (used == std::string(env).size() && n >= 1) return n;
  } catch (const std::logic_error&) {
  }
  err << "error: FREQLENS_THREADS must be a positive integer\n";
  return -1;
}

/// Entry point shared by the freqlens executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Frequency-band importance and bias auditing for face verification"};
  app.require_subcommand(1);

  RunConfig run_config;
  std::optional<int> threads;
  std::string baseline;
  auto add_run_options = [&](CLI::App* sub) {
    sub->add_option("--pairs", run_config.pairs_path, "pair list CSV")->required();
    sub->add_option("--images-root", run_config.images_root,
                    "directory image paths are relative to (default: the pair list's directory)");
    sub->add_option("--backend", run_config.backend, "reference | precomputed:<dir> | subprocess:<cmd>")
        ->capture_default_str();
    sub->add_option("--band-size", run_config.band_size, "frequency band width")->capture_default_str();
    sub->add_option("--image-size", run_config.image_size, "expected square image size")
        ->capture_default_str();
    sub->add_option("--threads", threads, "worker threads (fallback: FREQLENS_THREADS, then 1)");
    sub->add_flag("--quiet", run_config.quiet, "suppress progress output");
  };

  auto* explain = app.add_subcommand("explain", "compute per-pair band importances");
  add_run_options(explain);
  explain->add_option("--out", run_config.output_dir, "output directory")->required();

  auto* audit = app.add_subcommand("audit", "explain, aggregate, rank and measure bias");
  add_run_options(audit);
  audit->add_option("--out", run_config.output_dir, "output directory")->required();
  audit->add_option("--label-filter", run_config.label_filter, "all | genuine | imposter")
      ->capture_default_str();
  audit->add_option("--baseline", baseline, "audit JSON of a baseline model for deltas");
  audit->add_flag("--render,!--no-render", run_config.render, "write SVG charts");
  audit->add_flag("--error-bars", run_config.error_bars, "draw std error bars on the distribution chart");

  std::vector<std::string> accuracies;
  auto* metrics = app.add_subcommand("metrics", "Mean/STD/SER from per-group accuracies");
  metrics->add_option("accuracies", accuracies, "Group=accuracy (percent)")->required();

  SynthConfig synth_config;
  auto* synth = app.add_subcommand("synth", "generate a synthetic fixture");
  synth->add_option("--out", synth_config.output_dir, "output directory")->required();
  synth->add_option("--seed", synth_config.seed)->capture_default_str();
  synth->add_option("--group", synth_config.groups, "NAME=first-last or NAME=all (repeatable)")
      ->required();
  synth->add_option("--identities", synth_config.identities)->capture_default_str();
  synth->add_option("--pairs-per-label", synth_config.pairs_per_label)->capture_default_str();
  synth->add_option("--band-size", synth_config.band_size)->capture_default_str();
  synth->add_option("--image-size", synth_config.image_size)->capture_default_str();

  PrecomputeConfig precompute_config;
  auto* precompute = app.add_subcommand("precompute", "fill a precomputed embedding store");
  add_run_options(precompute);
  precompute->add_option("--store", precompute_config.store_dir, "store directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  if (explain->parsed() || audit->parsed() || precompute->parsed()) {
    if (threads) {
      run_config.worker_count = *threads;
    } else {
      const int env = threads_from_env(err);
      if (env < 0) return kExitUsage;
      run_config.worker_count = env;
    }
    if (!baseline.empty()) run_config.baseline_report_path = baseline;
  }
  if (explain->parsed()) return cmd_explain(run_config, err);
  if (audit->parsed()) return cmd_audit(run_config, err);
  if (metrics->parsed()) return cmd_metrics(accuracies, out, err);
  if (synth->parsed()) return cmd_synth(synth_config, err);
  if (precompute->parsed()) {
    precompute_config.run = run_config;
    return cmd_precompute(precompute_config, err);
  }
  return kExitUsage;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"freqlens"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace freqlens::cli

#endif  // FREQLENS_CLI_HPP
