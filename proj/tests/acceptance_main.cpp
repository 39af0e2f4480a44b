// End-to-end acceptance gate. Criteria 1-6 run the in-process invariant
// suite; 7-9 drive the command-line binary the way a user would, so the
// whole artifact chain (datasets, checkpoints, reports) is exercised from
// the outside. Prints one line per criterion and exits nonzero on any
// failure.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "geomoe/checkpoint.hpp"
#include "geomoe/data.hpp"
#include "geomoe/model.hpp"
#include "geomoe/rng.hpp"
#include "geomoe/verify.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Criterion {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

void print_line(const Criterion& c) {
  std::cout << (c.pass ? "[PASS]" : "[FAIL]") << " criterion " << c.id << ": "
            << c.name << " - " << c.detail << " (" << fmt(c.seconds, 1)
            << "s)" << std::endl;
}

// Wraps a verify-suite group: every check must pass and the group must fit
// its time budget (seconds; <= 0 means untimed).
Criterion from_checks(int id, const std::string& name,
                      const std::vector<geomoe::CheckResult>& checks,
                      double budget) {
  Criterion c;
  c.id = id;
  c.name = name;
  for (const auto& r : checks) c.seconds += r.seconds;
  c.pass = true;
  for (const auto& r : checks)
    if (!r.pass) {
      c.pass = false;
      c.detail = r.name + ": " + r.detail;
      return c;
    }
  if (budget > 0.0 && c.seconds > budget) {
    c.pass = false;
    c.detail = "checks passed but took " + fmt(c.seconds, 1) + "s (budget " +
               fmt(budget, 0) + "s)";
    return c;
  }
  c.detail = std::to_string(checks.size()) + "/" +
             std::to_string(checks.size()) + " checks";
  return c;
}

struct CliRunner {
  fs::path bin;
  fs::path log_dir;
  int counter = 0;

  // Returns true on exit status 0; all output goes to a numbered log.
  bool run(const std::string& args, std::string* log_path = nullptr) {
    const fs::path log =
        log_dir / ("cmd_" + std::to_string(counter++) + ".log");
    if (log_path) *log_path = log.string();
    const std::string cmd =
        bin.string() + " " + args + " > " + log.string() + " 2>&1";
    return std::system(cmd.c_str()) == 0;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error("missing file: " + path.string());
  return json::parse(in);
}

double best_val(const fs::path& run_dir) {
  return read_json(run_dir / "train_report.json")["result"]
      ["best_val_macro_spearman"]
          .get<double>();
}

// The fixed-seed benchmark and model recipe behind criterion 7. The numbers
// are frozen: synthetic seed 11 builds the dataset, training seed 14 runs
// the full model and all four ablations. The dominant-stream share is set
// high so each clip's targets hinge on one geometry family, and the split
// keeps training small (700 clips) so fixed uniform mixing cannot just
// average its way to the learned router's score.
const char* kBenchSynthConfig = R"({"synthetic": {"clips": 2000, "users": 40,
  "dim": 32, "dominant_share": 0.97, "stream_gain": 2.0,
  "target_noise": 0.2}})";

const char* kBenchTrainConfig = R"({"model": {"d_e": 16, "pre_layers": 1,
  "pre_heads": 2, "temporal_heads": 2, "expert_layers": 1, "attn_tokens": 4,
  "attn_heads": 2, "router_hidden": 64, "head_shared": 64, "head_adapter": 16,
  "dropout": 0.0}, "peak_lr": 0.002,
  "loss": {"lambda_entropy": 0.02, "lambda_balance": 0.1},
  "split": {"train": 0.35, "val": 0.5, "test": 0.15}})";

Criterion synthetic_end_to_end(CliRunner& cli, const fs::path& work) {
  Criterion c{7, "synthetic end-to-end with ablations", false, "", 0.0};
  Timer timer;
  const fs::path dir = work / "bench";
  const fs::path cfg = work / "bench_synth.json";
  const fs::path tcfg = work / "bench_train.json";
  write_text(cfg, kBenchSynthConfig);
  write_text(tcfg, kBenchTrainConfig);

  std::string log;
  if (!cli.run("synth " + dir.string() + " --config " + cfg.string() +
                   " --seed 11",
               &log)) {
    c.detail = "dataset generation failed, see " + log;
    c.seconds = timer.seconds();
    return c;
  }

  struct Variant {
    const char* tag;
    const char* extra;
  };
  const Variant variants[] = {
      {"full", ""},
      {"uniform", " --routing uniform"},
      {"hyperbolic", " --geometry hyperbolic"},
      {"spherical", " --geometry spherical"},
      {"euclidean", " --geometry euclidean"},
  };
  for (const auto& v : variants) {
    const fs::path out = work / ("bench_" + std::string(v.tag));
    if (!cli.run("train " + dir.string() + " --config " + tcfg.string() +
                     " --seed 14 --epochs 30" + v.extra + " --out " +
                     out.string(),
                 &log)) {
      c.detail = std::string(v.tag) + " training failed, see " + log;
      c.seconds = timer.seconds();
      return c;
    }
  }

  const double full = best_val(work / "bench_full");
  const double uniform = best_val(work / "bench_uniform");
  const double hyp = best_val(work / "bench_hyperbolic");
  const double sph = best_val(work / "bench_spherical");
  const double euc = best_val(work / "bench_euclidean");
  c.seconds = timer.seconds();
  c.detail = "full " + fmt(full) + ", uniform " + fmt(uniform) + ", hyp " +
             fmt(hyp) + ", sph " + fmt(sph) + ", euc " + fmt(euc);

  if (full < 0.80) {
    c.detail += "; full model below 0.80";
    return c;
  }
  for (const auto& [name, score] :
       {std::pair{"uniform", uniform}, std::pair{"hyperbolic", hyp},
        std::pair{"spherical", sph}, std::pair{"euclidean", euc}}) {
    if (!(score < full)) {
      c.detail += std::string("; ") + name + " ablation not below full";
      return c;
    }
  }
  if (c.seconds > 1800.0) {
    c.detail += "; exceeded the 30 min budget";
    return c;
  }
  c.pass = true;
  return c;
}

const char* kTinyTrainConfig = R"({"model": {"d_e": 8, "pre_layers": 1,
  "pre_heads": 2, "temporal_heads": 2, "expert_layers": 1, "attn_tokens": 2,
  "attn_heads": 2, "router_hidden": 8, "head_shared": 16, "head_adapter": 8,
  "dropout": 0.0}, "peak_lr": 0.003)";

Criterion determinism(CliRunner& cli, const fs::path& work) {
  Criterion c{8, "byte-identical eval and bit-exact resume", false, "", 0.0};
  Timer timer;
  const fs::path dir = work / "tiny";
  write_text(work / "tiny_synth.json",
             R"({"synthetic": {"clips": 120, "users": 12, "dim": 16}})");
  std::string log;
  if (!cli.run("synth " + dir.string() + " --config " +
                   (work / "tiny_synth.json").string() + " --seed 7",
               &log)) {
    c.detail = "dataset generation failed, see " + log;
    c.seconds = timer.seconds();
    return c;
  }

  const std::string base_cfg = kTinyTrainConfig;
  write_text(work / "tiny_train.json", base_cfg + "}");
  if (!cli.run("train " + dir.string() + " --config " +
                   (work / "tiny_train.json").string() +
                   " --seed 7 --epochs 3 --out " + (work / "run1").string(),
               &log)) {
    c.detail = "reference training failed, see " + log;
    c.seconds = timer.seconds();
    return c;
  }

  // same checkpoint, same data, twice -> identical bytes
  write_text(work / "eval_cfg.json",
             std::string("{\"split_file\": \"") +
                 (work / "run1" / "splits.json").string() +
                 "\", \"split\": \"val\"}");
  const std::string eval_args = "eval " + (work / "run1" / "best.ckpt").string() +
                                " " + dir.string() + " --config " +
                                (work / "eval_cfg.json").string() + " --out ";
  if (!cli.run(eval_args + (work / "e1.json").string(), &log) ||
      !cli.run(eval_args + (work / "e2.json").string(), &log)) {
    c.detail = "eval failed, see " + log;
    c.seconds = timer.seconds();
    return c;
  }
  const std::string b1 = read_bytes(work / "e1.json");
  const std::string b2 = read_bytes(work / "e2.json");
  if (b1.empty() || b1 != b2) {
    c.detail = "eval reports differ";
    c.seconds = timer.seconds();
    return c;
  }

  // the same three epochs, sliced as 2 + 1 through a checkpoint
  write_text(work / "sliceA.json", base_cfg + ", \"epochs_this_run\": 2}");
  write_text(work / "sliceB.json",
             base_cfg + ", \"resume\": \"" +
                 (work / "runA" / "last.ckpt").string() + "\"}");
  if (!cli.run("train " + dir.string() + " --config " +
                   (work / "sliceA.json").string() +
                   " --seed 7 --epochs 3 --out " + (work / "runA").string(),
               &log) ||
      !cli.run("train " + dir.string() + " --config " +
                   (work / "sliceB.json").string() +
                   " --seed 7 --epochs 3 --out " + (work / "runB").string(),
               &log)) {
    c.detail = "sliced training failed, see " + log;
    c.seconds = timer.seconds();
    return c;
  }

  auto epoch_entry = [](const json& report, int epoch) -> json {
    for (const auto& e : report["result"]["epochs"])
      if (e["epoch"].get<int>() == epoch) return e;
    throw std::runtime_error("epoch " + std::to_string(epoch) +
                             " missing from a train report");
  };
  const json ref = epoch_entry(read_json(work / "run1" / "train_report.json"), 2);
  const json res = epoch_entry(read_json(work / "runB" / "train_report.json"), 2);
  const double d_first = std::abs(ref["first_micro_loss"].get<double>() -
                                  res["first_micro_loss"].get<double>());
  const double d_mean = std::abs(ref["train_loss"].get<double>() -
                                 res["train_loss"].get<double>());
  c.seconds = timer.seconds();
  c.detail = "eval bytes identical; resume loss diffs " +
             fmt(d_first, 12) + " / " + fmt(d_mean, 12);
  c.pass = d_first <= 1e-10 && d_mean <= 1e-10;
  return c;
}

// Checks one eval report for the per-target + macro shape.
bool report_complete(const json& doc, std::string* why) {
  if (!doc.contains("report")) {
    *why = "no report block";
    return false;
  }
  const json& rep = doc["report"];
  if (!rep.contains("per_target") || !rep.contains("macro")) {
    *why = "missing per_target or macro";
    return false;
  }
  if (rep["per_target"].size() != static_cast<size_t>(geomoe::kNumTargets)) {
    *why = "expected 12 targets, got " +
           std::to_string(rep["per_target"].size());
    return false;
  }
  for (const auto& [name, entry] : rep["per_target"].items()) {
    for (const char* key : {"spearman", "kendall_tau_b", "c_index"})
      if (!entry.contains(key)) {
        *why = name + " lacks " + key;
        return false;
      }
  }
  for (const char* key : {"spearman", "kendall_tau_b", "c_index"})
    if (!rep["macro"].contains(key)) {
      *why = std::string("macro lacks ") + key;
      return false;
    }
  return true;
}

Criterion real_data_pathway(CliRunner& cli, const fs::path& work) {
  Criterion c{9, "metadata + feature-container eval pathway", false, "", 0.0};
  Timer timer;

  // The packaged leg reuses the criterion-8 artifacts: a metadata JSON and
  // .gmf containers evaluated through the CLI against a checkpoint.
  std::string log, why;
  if (!cli.run("eval " + (work / "run1" / "best.ckpt").string() + " " +
                   (work / "tiny").string() + " --out " +
                   (work / "full_report.json").string(),
               &log)) {
    c.detail = "eval over the packaged dataset failed, see " + log;
    c.seconds = timer.seconds();
    return c;
  }
  if (!report_complete(read_json(work / "full_report.json"), &why)) {
    c.detail = "packaged report incomplete: " + why;
    c.seconds = timer.seconds();
    return c;
  }

  const char* real = std::getenv("GEOMOE_REAL_DATA");
  if (real == nullptr || *real == '\0') {
    c.pass = true;
    c.detail =
        "per-target + macro report emitted; external dataset not supplied "
        "(set GEOMOE_REAL_DATA to exercise it)";
    c.seconds = timer.seconds();
    return c;
  }

  // External leg: build an untrained model at the dataset's feature width,
  // checkpoint it, and require a structurally complete report. No numeric
  // claim is made about the scores.
  try {
    const fs::path real_dir = fs::path(real);
    auto records = geomoe::load_metadata((real_dir / "metadata.json").string());
    if (records.empty()) throw std::runtime_error("empty metadata");
    const auto first = geomoe::read_feature_container(
        (real_dir / "features" / (records.front().id + ".gmf")).string());
    geomoe::ModelConfig mc;
    mc.d_model = first.text.shape()[1];
    mc.validate();
    geomoe::Rng rng(1);
    geomoe::CrmfModel model = geomoe::CrmfModel::init(mc, rng);
    geomoe::save_checkpoint((work / "real_init.ckpt").string(), model);
  } catch (const std::exception& e) {
    c.detail = std::string("external dataset unusable: ") + e.what();
    c.seconds = timer.seconds();
    return c;
  }
  if (!cli.run("eval " + (work / "real_init.ckpt").string() + " " +
                   std::string(real) + " --out " +
                   (work / "real_report.json").string(),
               &log)) {
    c.detail = "eval over the external dataset failed, see " + log;
    c.seconds = timer.seconds();
    return c;
  }
  if (!report_complete(read_json(work / "real_report.json"), &why)) {
    c.detail = "external report incomplete: " + why;
    c.seconds = timer.seconds();
    return c;
  }
  c.pass = true;
  c.detail = "packaged and external datasets both produced full reports";
  c.seconds = timer.seconds();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: geomoe_acceptance <geomoe-cli-path> [work-dir]\n";
    return 2;
  }
  CliRunner cli;
  cli.bin = fs::absolute(argv[1]);
  if (!fs::exists(cli.bin)) {
    std::cerr << "geomoe binary not found: " << cli.bin << "\n";
    return 2;
  }
  const fs::path work =
      fs::absolute(argc > 2 ? argv[2] : "acceptance_work");
  std::error_code ec;
  fs::remove_all(work, ec);
  fs::create_directories(work / "logs");
  cli.log_dir = work / "logs";

  std::vector<Criterion> results;
  results.push_back(
      from_checks(1, "manifold invariant sweeps", geomoe::verify_manifolds(), 30.0));
  print_line(results.back());
  results.push_back(from_checks(2, "finite-difference gradient agreement",
                                geomoe::verify_gradients(), 120.0));
  print_line(results.back());
  results.push_back(
      from_checks(3, "rank-metric oracle agreement", geomoe::verify_metrics(), 0.0));
  print_line(results.back());
  results.push_back(from_checks(4, "soft winsorization contract",
                                geomoe::verify_winsorization(), 0.0));
  print_line(results.back());
  results.push_back(from_checks(5, "pairwise-comparison utility recovery",
                                geomoe::verify_labeling_recovery(), 180.0));
  print_line(results.back());
  results.push_back(from_checks(6, "singular value thresholding optimality",
                                geomoe::verify_svt(), 0.0));
  print_line(results.back());

  results.push_back(synthetic_end_to_end(cli, work));
  print_line(results.back());
  results.push_back(determinism(cli, work));
  print_line(results.back());
  results.push_back(real_data_pathway(cli, work));
  print_line(results.back());

  int failed = 0;
  for (const auto& c : results) failed += c.pass ? 0 : 1;
  std::cout << "acceptance: " << (results.size() - failed) << "/"
            << results.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
