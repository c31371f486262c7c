// Acceptance gate. Each criterion prints exactly one line:
//   PASS <name>: <detail> [<seconds>s]
//   FAIL <name>: <detail> [<seconds>s]
// Usage: acceptance [table1|spectral|importance|qualitative|determinism|performance]...
// With no arguments every criterion runs. Exit status is 0 iff all selected
// criteria pass.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>
#include <string>
#include <vector>

#include "freqlens/cli.hpp"
#include "freqlens/freqlens.hpp"
#include "oracles.hpp"

using namespace freqlens;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path work_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("freqlens_acceptance_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

double max_abs_diff(const Image& a, const Image& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.values().size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

int quiet_run(const std::vector<std::string>& args, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

// ---------------------------------------------------------------------------

Verdict table1() {
  struct Row {
    const char* model;
    double acc[4];
    double mean, std, ser;
  };
  const Row rows[] = {
      {"M", {92.92, 93.30, 95.67, 94.02}, 93.98, 1.05, 1.64},
      {"M_Afr", {80.25, 92.33, 94.88, 93.15}, 90.15, 5.79, 3.86},
      {"M_Asi", {92.30, 83.97, 95.22, 93.32}, 91.20, 4.31, 3.35},
      {"M_Cau", {91.93, 92.78, 90.88, 93.10}, 92.17, 0.86, 1.32},
      {"M_Ind", {92.05, 92.73, 95.28, 90.17}, 92.56, 1.83, 2.08},
      {"AdaFace", {85.77, 84.95, 93.25, 87.85}, 87.96, 3.23, 2.23},
      {"EF-Cos", {85.18, 84.20, 92.65, 88.03}, 87.51, 3.28, 2.15},
  };
  const char* groups[] = {"African", "Asian", "Caucasian", "Indian"};
  Verdict v;
  const auto start = Clock::now();
  for (const auto& row : rows) {
    std::vector<std::string> args;
    for (int g = 0; g < 4; ++g) args.push_back(std::string(groups[g]) + "=" + fmt("%.2f", row.acc[g]));
    std::ostringstream out, err;
    const int code = cli::cmd_metrics(args, out, err);
    double mean = NAN, std = NAN, ser = NAN;
    std::sscanf(out.str().c_str(), "Mean %lf\nSTD %lf\nSER %lf", &mean, &std, &ser);
    const bool ok = code == 0 && std::abs(mean - row.mean) <= 0.01 + 1e-9 &&
                    std::abs(std - row.std) <= 0.01 + 1e-9 && std::abs(ser - row.ser) <= 0.01 + 1e-9;
    v.check(ok, std::string("row ") + row.model + " printed " + out.str());
  }
  const double elapsed = seconds_since(start);
  v.check(elapsed < 1.0, "took " + fmt("%.3f", elapsed) + " s");
  if (v.pass) v.detail = "7/7 rows match Mean/STD/SER within 0.01";
  return v;
}

Verdict spectral() {
  Verdict v;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(8, 112);
  std::uniform_real_distribution<double> band_size(1.0, 8.0);
  double worst_roundtrip = 0, worst_residual = 0, worst_masksum = 0, worst_oracle = 0;
  for (int i = 0; i < 1000; ++i) {
    const int h = size(rng), w = size(rng), ch = i % 2 ? 3 : 1;
    const double s = i % 4 == 0 ? 4.0 : band_size(rng);
    const Image img = oracle::random_image(rng, h, w, ch);

    const Spectrum spec = forward_dft(img);
    worst_roundtrip = std::max(worst_roundtrip, max_abs_diff(inverse_dft(spec), img));

    const BandPartition p(h, w, s);
    std::vector<int> seen(static_cast<std::size_t>(h) * w, 0);
    for (int b = 0; b < p.num_bands(); ++b) {
      for (std::size_t k : p.members(b)) ++seen[k];
    }
    v.check(std::all_of(seen.begin(), seen.end(), [](int n) { return n == 1; }),
            "partition not a disjoint cover at " + std::to_string(h) + "x" + std::to_string(w));

    double total = 0;
    for (const auto& c : spec.values()) total += std::norm(c);
    const auto masked = mask_every_band(img, p);
    Image removed_sum(h, w, ch);
    for (int b = 0; b < p.num_bands(); ++b) {
      for (std::size_t k = 0; k < removed_sum.values().size(); ++k) {
        removed_sum.values()[k] += img.values()[k] - masked[b].values()[k];
      }
    }
    worst_masksum = std::max(worst_masksum, max_abs_diff(removed_sum, img));
    const int b = std::uniform_int_distribution<int>(0, p.num_bands() - 1)(rng);
    const auto energy = band_energy(forward_dft(masked[b]), p);
    worst_residual = std::max(worst_residual, energy[b] / total);
  }
  for (int i = 0; i < 20; ++i) {
    const Image img = oracle::random_image(rng, 16, 16, i % 2 ? 3 : 1);
    const Spectrum spec = forward_dft(img);
    for (int c = 0; c < img.channels(); ++c) {
      const auto ref = oracle::naive_dft_shifted(img, c);
      for (int u = 0; u < 16; ++u) {
        for (int x = 0; x < 16; ++x) {
          worst_oracle = std::max(worst_oracle, std::abs(spec.at(u, x, c) - ref[u * 16 + x]));
        }
      }
    }
    const double s = i % 3 == 0 ? 2.0 : 4.0;
    const BandPartition p(16, 16, s);
    const int b = i % p.num_bands();
    worst_oracle = std::max(worst_oracle, max_abs_diff(mask_band(img, BandMask(p, b)), oracle::naive_mask(img, b, s)));
  }
  v.check(worst_roundtrip <= 1e-6, "round trip error " + fmt("%.3g", worst_roundtrip));
  v.check(worst_residual <= 1e-9, "masked band residual energy " + fmt("%.3g", worst_residual));
  v.check(worst_masksum <= 1e-5, "mask-sum reconstruction error " + fmt("%.3g", worst_masksum));
  v.check(worst_oracle <= 1e-6, "naive oracle deviation " + fmt("%.3g", worst_oracle));
  if (v.pass) {
    v.detail = "1000 images: round trip " + fmt("%.2g", worst_roundtrip) + ", residual " +
               fmt("%.2g", worst_residual) + ", mask-sum " + fmt("%.2g", worst_masksum) + "; oracle " +
               fmt("%.2g", worst_oracle);
  }
  return v;
}

Verdict importance() {
  Verdict v;
  std::mt19937_64 rng(77);
  const BandPartition p(112, 112, 4);
  ReferenceEmbedder embedder;
  double worst_sum = 0, worst_scale = 0, min_entry = 1;
  for (int i = 0; i < 500; ++i) {
    const Image probe = oracle::random_image(rng, 112, 112, 3);
    Image reference = oracle::random_image(rng, 112, 112, 3);
    if (i % 2 == 0) {  // half the pairs share structure, like genuine pairs
      for (std::size_t k = 0; k < reference.values().size(); ++k) {
        reference.values()[k] = 0.7 * probe.values()[k] + 0.3 * reference.values()[k];
      }
    }
    const auto raw = raw_importance(probe, reference, p, embedder);
    const auto norm = normalize(raw.h);
    worst_sum = std::max(worst_sum, std::abs(std::accumulate(norm.begin(), norm.end(), 0.0) - 1.0));
    min_entry = std::min(min_entry, *std::min_element(norm.begin(), norm.end()));
    for (double lambda : {1e-6, 1.0, 1e6}) {
      std::vector<double> scaled(raw.h);
      for (double& x : scaled) x *= lambda;
      const auto again = normalize(scaled);
      for (std::size_t b = 0; b < norm.size(); ++b) worst_scale = std::max(worst_scale, std::abs(again[b] - norm[b]));
    }
  }
  v.check(min_entry >= 0.0, "negative normalized entry");
  v.check(worst_sum <= 1e-9, "normalized sum off by " + fmt("%.3g", worst_sum));
  v.check(worst_scale <= 1e-9, "scale invariance off by " + fmt("%.3g", worst_scale));

  const auto uniform = normalize(std::vector<double>(20, 0.0));
  v.check(std::all_of(uniform.begin(), uniform.end(), [](double x) { return x == 1.0 / 20; }),
          "all-zero input is not mapped to uniform");

  double worst_oracle = 0;
  const BandPartition toy(16, 16, 2);
  ReferenceEmbedder toy_embedder({4});
  for (int i = 0; i < 6; ++i) {
    const Image a = oracle::random_image(rng, 16, 16, 3);
    const Image b = oracle::random_image(rng, 16, 16, 3);
    const auto want = oracle::naive_importance(a, b, 2.0, 4);
    const auto got = raw_importance(a, b, toy, toy_embedder).h;
    for (std::size_t k = 0; k < want.size(); ++k) worst_oracle = std::max(worst_oracle, std::abs(got[k] - want[k]));
  }
  v.check(worst_oracle <= 1e-6, "brute-force oracle deviation " + fmt("%.3g", worst_oracle));
  if (v.pass) {
    v.detail = "500 pairs: sum error " + fmt("%.2g", worst_sum) + ", scale error " + fmt("%.2g", worst_scale) +
               "; toy oracle " + fmt("%.2g", worst_oracle);
  }
  return v;
}

// Low-band vs high-band fixture and a matching uniform-profile baseline.
struct QualitativeRun {
  AuditReport subject, baseline;
  std::string subject_json;
};

QualitativeRun qualitative_run(const fs::path& dir, int code_out[2]) {
  const std::vector<std::string> synth_common{"--seed", "7", "--pairs-per-label", "25"};
  auto synth = [&](const fs::path& out, const std::string& low, const std::string& high) {
    std::vector<std::string> args{"synth", "--out", out.string(), "--group", "Low=" + low, "--group", "High=" + high};
    args.insert(args.end(), synth_common.begin(), synth_common.end());
    return quiet_run(args);
  };
  QualitativeRun run;
  if (synth(dir / "base_fx", "all", "all") != 0 || synth(dir / "fx", "1-3", "8-12") != 0) {
    code_out[0] = code_out[1] = -1;
    return run;
  }
  code_out[0] = quiet_run({"audit", "--pairs", (dir / "base_fx" / "pairs.csv").string(), "--out",
                           (dir / "base_out").string(), "--quiet", "--threads", "1"});
  code_out[1] = quiet_run({"audit", "--pairs", (dir / "fx" / "pairs.csv").string(), "--out",
                           (dir / "out").string(), "--quiet", "--threads", "1", "--baseline",
                           (dir / "base_out" / cli::kAuditJsonName).string()});
  if (code_out[0] == 0 && code_out[1] == 0) {
    run.baseline = read_audit_json(dir / "base_out" / cli::kAuditJsonName);
    run.subject = read_audit_json(dir / "out" / cli::kAuditJsonName);
    run.subject_json = freqlens::detail::read_text(dir / "out" / cli::kAuditJsonName);
  }
  return run;
}

Verdict qualitative() {
  Verdict v;
  const auto start = Clock::now();
  int codes[2];
  const auto run = qualitative_run(work_dir("qualitative_a"), codes);
  v.check(codes[0] == 0 && codes[1] == 0, "pipeline exit codes " + std::to_string(codes[0]) + "/" +
                                               std::to_string(codes[1]));
  if (!v.pass) return v;

  const auto& groups = run.subject.ranking.groups;
  const int low = static_cast<int>(std::find(groups.begin(), groups.end(), "Low") - groups.begin());
  const int high = static_cast<int>(std::find(groups.begin(), groups.end(), "High") - groups.begin());
  v.check(run.subject.importance.count[low] == 50 && run.subject.importance.count[high] == 50,
          "expected 50 pairs per group");
  v.check(run.subject.importance.num_bands == 20, "expected 20 bands");
  const auto& delta = run.subject.delta->delta;
  const auto dg = run.subject.delta->groups;
  const int dlow = static_cast<int>(std::find(dg.begin(), dg.end(), "Low") - dg.begin());
  const int dhigh = static_cast<int>(std::find(dg.begin(), dg.end(), "High") - dg.begin());
  for (int b = 1; b <= 3; ++b) {
    v.check(run.subject.ranking.ranks[low][b] == 1, "Low not rank 1 in band " + std::to_string(b));
    v.check(delta[dlow][b] > 0, "Low delta not positive in band " + std::to_string(b));
  }
  for (int b = 8; b <= 12; ++b) {
    v.check(run.subject.ranking.ranks[high][b] == 1, "High not rank 1 in band " + std::to_string(b));
    v.check(delta[dhigh][b] > 0, "High delta not positive in band " + std::to_string(b));
  }

  // Same seed, fresh directory: identical report apart from embedded paths.
  int codes2[2];
  const auto again = qualitative_run(work_dir("qualitative_b"), codes2);
  v.check(codes2[0] == 0 && codes2[1] == 0, "second run failed");
  if (v.pass) {
    v.check(again.subject.importance.mean == run.subject.importance.mean &&
                again.subject.ranking.ranks == run.subject.ranking.ranks &&
                again.subject.delta->delta == run.subject.delta->delta,
            "results differ between seeded runs");
  }
  const double elapsed = seconds_since(start);
  v.check(elapsed < 300.0, "took " + fmt("%.1f", elapsed) + " s");
  if (v.pass) {
    v.detail = "Low rank 1 in bands 1-3, High rank 1 in bands 8-12, deltas positive (min Low " +
               fmt("%.3f", std::min({delta[dlow][1], delta[dlow][2], delta[dlow][3]})) + ", min High " +
               fmt("%.3f", *std::min_element(delta[dhigh].begin() + 8, delta[dhigh].begin() + 13)) + ")";
  }
  return v;
}

Verdict determinism() {
  Verdict v;
  const fs::path dir = work_dir("determinism");
  v.check(quiet_run({"synth", "--out", (dir / "fx").string(), "--seed", "11", "--group", "Low=1-3", "--group",
                     "High=8-12", "--pairs-per-label", "5"}) == 0,
          "fixture generation failed");
  if (!v.pass) return v;
  for (const char* out : {"run1", "run2"}) {
    std::string err;
    v.check(quiet_run({"audit", "--pairs", (dir / "fx" / "pairs.csv").string(), "--out", (dir / out).string(),
                       "--quiet", "--error-bars"},
                      &err) == 0,
            std::string("audit failed: ") + err);
  }
  if (!v.pass) return v;
  int identical = 0;
  for (const char* f : {cli::kPairCsvName, cli::kAuditJsonName, cli::kRankingSvgName, cli::kDistributionSvgName}) {
    const bool same = freqlens::detail::read_text(dir / "run1" / f) == freqlens::detail::read_text(dir / "run2" / f);
    v.check(same, std::string(f) + " differs between runs");
    identical += same;
  }
  if (v.pass) v.detail = std::to_string(identical) + "/4 outputs byte-identical across two audit runs";
  return v;
}

Verdict performance() {
  Verdict v;
  const fs::path dir = work_dir("performance");
  // 2 groups x (25 genuine + 25 imposter) = 100 pairs.
  v.check(quiet_run({"synth", "--out", (dir / "fx").string(), "--seed", "3", "--group", "Low=1-3", "--group",
                     "High=8-12", "--pairs-per-label", "25"}) == 0,
          "fixture generation failed");
  if (!v.pass) return v;
  const std::string pairs = (dir / "fx" / "pairs.csv").string();
  v.check(load_pairs(pairs).records.size() == 100, "fixture does not hold 100 pairs");

  auto timed = [&](const std::string& threads) {
    const auto start = Clock::now();
    const int code = quiet_run({"explain", "--pairs", pairs, "--out", (dir / ("out" + threads)).string(), "--quiet",
                                "--threads", threads});
    v.check(code == 0, "explain failed with " + threads + " threads");
    return seconds_since(start);
  };
  const double single = timed("1");
  const double four = timed("4");
  const double speedup = single / four;
  const unsigned cores = std::thread::hardware_concurrency();
  v.check(single < 60.0, "single-threaded explain took " + fmt("%.1f", single) + " s");
  v.check(speedup >= 3.0, "4-worker speedup " + fmt("%.2f", speedup) + "x < 3x (single " + fmt("%.1f", single) +
                              " s, 4 workers " + fmt("%.1f", four) + " s, " + std::to_string(cores) +
                              " hardware thread(s))");
  if (v.pass) {
    v.detail = "single " + fmt("%.1f", single) + " s, 4 workers " + fmt("%.1f", four) + " s, speedup " +
               fmt("%.2f", speedup) + "x";
  }
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"table1", table1},           {"spectral", spectral},         {"importance", importance},
      {"qualitative", qualitative}, {"determinism", determinism},   {"performance", performance}};
  std::vector<std::string> selected(argv + 1, argv + argc);
  if (selected.empty()) {
    for (const auto& [name, fn] : criteria) selected.push_back(name);
  }
  int failures = 0;
  for (const auto& name : selected) {
    const auto it = std::find_if(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == name; });
    if (it == criteria.end()) {
      std::cerr << "unknown criterion '" << name << "'\n";
      return 2;
    }
    const auto start = Clock::now();
    Verdict verdict;
    try {
      verdict = it->second();
    } catch (const std::exception& e) {
      verdict = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (verdict.pass ? "PASS " : "FAIL ") << name << ": " << verdict.detail << " ["
              << fmt("%.2f", seconds_since(start)) << "s]" << std::endl;
    failures += !verdict.pass;
  }
  fs::remove_all(fs::temp_directory_path() / ("freqlens_acceptance_" + std::to_string(::getpid())));
  return failures == 0 ? 0 : 1;
}
