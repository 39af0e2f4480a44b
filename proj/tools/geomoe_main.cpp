// geomoe: pairwise labeling, synthetic benchmark generation, training,
// evaluation and self-verification in one binary. Every subcommand is
// deterministic under --seed and embeds its resolved configuration in the
// artifacts it writes.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "geomoe/checkpoint.hpp"
#include "geomoe/data.hpp"
#include "geomoe/labeling.hpp"
#include "geomoe/metrics.hpp"
#include "geomoe/model.hpp"
#include "geomoe/optim.hpp"
#include "geomoe/train.hpp"
#include "geomoe/verify.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace geomoe;

namespace {

template <typename T>
T get_or(const ordered_json& j, const char* key, T fallback) {
  if (j.is_object() && j.contains(key)) return j.at(key).get<T>();
  return fallback;
}

ordered_json read_config(const std::string& path) {
  if (path.empty()) return ordered_json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config file not found: " + path);
  return ordered_json::parse(in);
}

ordered_json sub_config(const ordered_json& cfg, const char* key) {
  if (cfg.is_object() && cfg.contains(key)) return cfg.at(key);
  return ordered_json::object();
}

// GEOMOE_THREADS caps the worker count. All module contracts in this build
// are single-threaded, so the cap is validated, echoed, and trivially
// honored.
int thread_cap() {
  const char* env = std::getenv("GEOMOE_THREADS");
  if (env == nullptr) return 1;
  int v = 0;
  try {
    v = std::stoi(env);
  } catch (const std::exception&) {
    throw std::runtime_error("GEOMOE_THREADS is not an integer");
  }
  if (v < 1) throw std::runtime_error("GEOMOE_THREADS must be >= 1");
  return v;
}

int parse_geometry(const std::string& g) {
  if (g == "all") return -1;
  if (g == "hyperbolic") return 0;
  if (g == "spherical") return 1;
  if (g == "euclidean") return 2;
  throw std::runtime_error(
      "--geometry must be hyperbolic, spherical, euclidean or all");
}

RoutingMode parse_routing(const std::string& r) {
  if (r == "learned") return RoutingMode::kLearned;
  if (r == "uniform") return RoutingMode::kUniform;
  if (r == "hard") return RoutingMode::kHard;
  throw std::runtime_error("--routing must be uniform, learned or hard");
}

void apply_model(ModelConfig& m, const ordered_json& j) {
  m.d_model = get_or(j, "d_model", m.d_model);
  m.d_e = get_or(j, "d_e", m.d_e);
  m.targets = get_or(j, "targets", m.targets);
  m.pre_layers = get_or(j, "pre_layers", m.pre_layers);
  m.pre_heads = get_or(j, "pre_heads", m.pre_heads);
  m.temporal_heads = get_or(j, "temporal_heads", m.temporal_heads);
  m.expert_layers = get_or(j, "expert_layers", m.expert_layers);
  m.dropout = get_or(j, "dropout", m.dropout);
  m.attn_tokens = get_or(j, "attn_tokens", m.attn_tokens);
  m.attn_heads = get_or(j, "attn_heads", m.attn_heads);
  m.attn_temperature = get_or(j, "attn_temperature", m.attn_temperature);
  m.router_hidden = get_or(j, "router_hidden", m.router_hidden);
  m.head_shared = get_or(j, "head_shared", m.head_shared);
  m.head_adapter = get_or(j, "head_adapter", m.head_adapter);
  m.curvature = get_or(j, "curvature", m.curvature);
}

ordered_json model_echo(const ModelConfig& m) {
  ordered_json j;
  j["d_model"] = m.d_model;
  j["d_e"] = m.d_e;
  j["targets"] = m.targets;
  j["pre_layers"] = m.pre_layers;
  j["pre_heads"] = m.pre_heads;
  j["temporal_heads"] = m.temporal_heads;
  j["expert_layers"] = m.expert_layers;
  j["dropout"] = m.dropout;
  j["attn_tokens"] = m.attn_tokens;
  j["attn_heads"] = m.attn_heads;
  j["attn_temperature"] = m.attn_temperature;
  j["router_hidden"] = m.router_hidden;
  j["head_shared"] = m.head_shared;
  j["head_adapter"] = m.head_adapter;
  j["curvature"] = m.curvature;
  return j;
}

void apply_loss(LossConfig& l, const ordered_json& j) {
  l.huber_delta = get_or(j, "huber_delta", l.huber_delta);
  l.lambda_corr = get_or(j, "lambda_corr", l.lambda_corr);
  l.lambda_cov = get_or(j, "lambda_cov", l.lambda_cov);
  l.lambda_entropy = get_or(j, "lambda_entropy", l.lambda_entropy);
  l.lambda_balance = get_or(j, "lambda_balance", l.lambda_balance);
  l.head_reg_coeff = get_or(j, "head_reg_coeff", l.head_reg_coeff);
  l.winsor_theta = get_or(j, "winsor_theta", l.winsor_theta);
  l.winsor_scale = get_or(j, "winsor_scale", l.winsor_scale);
}

ordered_json loss_echo(const LossConfig& l) {
  ordered_json j;
  j["huber_delta"] = l.huber_delta;
  j["lambda_corr"] = l.lambda_corr;
  j["lambda_cov"] = l.lambda_cov;
  j["lambda_entropy"] = l.lambda_entropy;
  j["lambda_balance"] = l.lambda_balance;
  j["head_reg_coeff"] = l.head_reg_coeff;
  j["winsor_theta"] = l.winsor_theta;
  j["winsor_scale"] = l.winsor_scale;
  return j;
}

void apply_solver(SolverConfig& s, const ordered_json& j) {
  s.alpha = get_or(j, "alpha", s.alpha);
  s.lambda = get_or(j, "lambda", s.lambda);
  s.max_iters = get_or(j, "max_iters", s.max_iters);
  s.rel_tol = get_or(j, "rel_tol", s.rel_tol);
  s.bb_min = get_or(j, "bb_min", s.bb_min);
  s.bb_max = get_or(j, "bb_max", s.bb_max);
}

void apply_synth(SyntheticSpec& s, const ordered_json& j) {
  s.seed = get_or(j, "seed", s.seed);
  s.clips = get_or(j, "clips", s.clips);
  s.users = get_or(j, "users", s.users);
  s.dim = get_or(j, "dim", s.dim);
  s.text_len = get_or(j, "text_len", s.text_len);
  s.audio_len = get_or(j, "audio_len", s.audio_len);
  s.video_len = get_or(j, "video_len", s.video_len);
  s.tree_depth = get_or(j, "tree_depth", s.tree_depth);
  s.target_noise = get_or(j, "target_noise", s.target_noise);
  s.feature_noise = get_or(j, "feature_noise", s.feature_noise);
  s.dominant_share = get_or(j, "dominant_share", s.dominant_share);
  s.stream_gain = get_or(j, "stream_gain", s.stream_gain);
  s.hier_weight = get_or(j, "hier_weight", s.hier_weight);
  s.dir_weight = get_or(j, "dir_weight", s.dir_weight);
  s.lin_weight = get_or(j, "lin_weight", s.lin_weight);
}

ordered_json synth_echo(const SyntheticSpec& s) {
  ordered_json j;
  j["seed"] = s.seed;
  j["clips"] = s.clips;
  j["users"] = s.users;
  j["dim"] = s.dim;
  j["text_len"] = s.text_len;
  j["audio_len"] = s.audio_len;
  j["video_len"] = s.video_len;
  j["tree_depth"] = s.tree_depth;
  j["target_noise"] = s.target_noise;
  j["feature_noise"] = s.feature_noise;
  j["dominant_share"] = s.dominant_share;
  j["stream_gain"] = s.stream_gain;
  j["hier_weight"] = s.hier_weight;
  j["dir_weight"] = s.dir_weight;
  j["lin_weight"] = s.lin_weight;
  return j;
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text << "\n";
    return;
  }
  std::ofstream f(out_path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + out_path);
  f << text << "\n";
}

std::vector<std::string> score_names() {
  return std::vector<std::string>(kScoreKeys.begin(), kScoreKeys.end());
}

// ------------------------------------------------------------------- label

struct LabelOpts {
  std::string tsv;
  std::string config;
  std::string out;
  std::uint64_t seed = 1;
  double lambda_nuc = 0.0;
  double alpha = 0.0;
  bool lambda_set = false, alpha_set = false;
};

int cmd_label(const LabelOpts& o) {
  const ordered_json cfg = read_config(o.config);
  std::vector<ComparisonRecord> records;
  if (o.tsv == "-") {
    records = parse_comparisons(std::cin);
  } else {
    std::ifstream in(o.tsv);
    if (!in) throw std::runtime_error("comparisons file not found: " + o.tsv);
    records = parse_comparisons(in);
  }
  if (records.empty())
    throw std::runtime_error("label: no comparison records in " + o.tsv);

  int items = get_or(cfg, "items", 0);
  int targets = get_or(cfg, "targets", 0);
  for (const auto& r : records) {
    items = std::max({items, r.item_a + 1, r.item_b + 1});
    targets = std::max(targets, r.target + 1);
  }

  SolverConfig sc;
  apply_solver(sc, sub_config(cfg, "solver"));
  if (o.alpha_set) sc.alpha = o.alpha;

  std::vector<double> grid =
      get_or(cfg, "lambda_grid",
             std::vector<double>{1e-2, 3e-3, 1e-3, 3e-4, 1e-4});
  FitResult fit;
  if (o.lambda_set) {
    sc.lambda = o.lambda_nuc;
    fit = fit_mnl(records, items, targets, sc);
  } else {
    fit = fit_mnl_grid(records, items, targets, sc, grid);
  }

  ordered_json doc;
  doc["command"] = "label";
  ordered_json& conf = doc["config"];
  conf["seed"] = o.seed;
  conf["threads"] = thread_cap();
  conf["comparisons"] = o.tsv;
  conf["records"] = records.size();
  conf["items"] = items;
  conf["targets"] = targets;
  conf["alpha"] = sc.alpha;
  if (o.lambda_set)
    conf["lambda_nuc"] = o.lambda_nuc;
  else
    conf["lambda_grid"] = grid;
  conf["max_iters"] = sc.max_iters;
  conf["rel_tol"] = sc.rel_tol;

  ordered_json& fj = doc["fit"];
  fj["lambda"] = fit.lambda;
  fj["iterations"] = fit.iterations;
  fj["converged"] = fit.converged;
  fj["objective_initial"] = fit.objective_trace.front();
  fj["objective_final"] = fit.objective_trace.back();

  const auto names = score_names();
  ordered_json items_j = ordered_json::array();
  for (int i = 0; i < items; ++i) {
    ordered_json e;
    e["id"] = i;
    e["component"] = fit.component[static_cast<std::size_t>(i)];
    e["isolated"] = static_cast<bool>(fit.isolated[static_cast<std::size_t>(i)]);
    if (targets == kNumTargets) {
      ordered_json s;
      for (int k = 0; k < targets; ++k)
        s[names[static_cast<std::size_t>(k)]] = fit.theta(i, k);
      e["scores"] = s;
    } else {
      ordered_json s = ordered_json::array();
      for (int k = 0; k < targets; ++k) s.push_back(fit.theta(i, k));
      e["scores"] = s;
    }
    items_j.push_back(std::move(e));
  }
  doc["items"] = std::move(items_j);
  emit(o.out, doc.dump(2));
  return 0;
}

// ------------------------------------------------------------------- synth

struct SynthOpts {
  std::string out_dir;
  std::string config;
  std::uint64_t seed = 1;
  bool seed_set = false;
};

int cmd_synth(const SynthOpts& o) {
  const ordered_json cfg = read_config(o.config);
  SyntheticSpec spec;
  apply_synth(spec, sub_config(cfg, "synthetic"));
  if (o.seed_set || !sub_config(cfg, "synthetic").contains("seed"))
    spec.seed = o.seed;

  SyntheticData data = synth_generate(spec);
  write_dataset(o.out_dir, data);

  ordered_json doc;
  doc["command"] = "synth";
  doc["out_dir"] = o.out_dir;
  doc["clips"] = static_cast<int>(data.records.size());
  doc["config"] = synth_echo(spec);
  std::cout << doc.dump(2) << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainOpts {
  std::string data_dir;
  std::string config;
  std::string out = "geomoe_run";
  std::uint64_t seed = 1;
  int epochs = 30, batch = 4, accum = 8;
  bool epochs_set = false, batch_set = false, accum_set = false;
  std::string geometry = "all";
  std::string routing = "learned";
};

int cmd_train(const TrainOpts& o) {
  const ordered_json cfg = read_config(o.config);

  TrainConfig tc;
  tc.epochs = o.epochs_set ? o.epochs : get_or(cfg, "epochs", tc.epochs);
  tc.batch = o.batch_set ? o.batch : get_or(cfg, "batch", tc.batch);
  tc.accum = o.accum_set ? o.accum : get_or(cfg, "accum", tc.accum);
  tc.run_epochs = get_or(cfg, "epochs_this_run", tc.run_epochs);
  tc.patience = get_or(cfg, "patience", tc.patience);
  tc.peak_lr = get_or(cfg, "peak_lr", tc.peak_lr);
  tc.seed = o.seed;
  apply_loss(tc.loss, sub_config(cfg, "loss"));
  tc.routing = parse_routing(o.routing);
  tc.forced_geometry = parse_geometry(o.geometry);
  tc.winsorize = get_or(cfg, "winsorize", true);
  tc.out_dir = o.out;
  fs::create_directories(o.out);

  const std::string features_dir = o.data_dir + "/features";
  const auto records = load_metadata(o.data_dir + "/metadata.json");
  const ordered_json split_cfg = sub_config(cfg, "split");
  const double f_train = get_or(split_cfg, "train", 0.7);
  const double f_val = get_or(split_cfg, "val", 0.15);
  const double f_test = get_or(split_cfg, "test", 0.15);
  const SplitSpec split =
      grouped_split(records, f_train, f_val, f_test, o.seed);
  write_split(o.out + "/splits.json", split);

  ModelConfig mc;
  const ordered_json model_cfg = sub_config(cfg, "model");
  apply_model(mc, model_cfg);
  if (!model_cfg.contains("d_model")) {
    if (split.train.empty()) throw std::runtime_error("empty training split");
    const FeatureBundle probe =
        read_feature_container(features_dir + "/" + split.train[0] + ".gmf");
    mc.d_model = probe.text.shape()[1];
  }

  const auto train_data =
      load_features(features_dir, records, split.train, mc.d_model);
  const auto val_data =
      load_features(features_dir, records, split.val, mc.d_model);

  AdamWConfig awc;
  const ordered_json aw = sub_config(cfg, "adamw");
  awc.beta1 = get_or(aw, "beta1", awc.beta1);
  awc.beta2 = get_or(aw, "beta2", awc.beta2);
  awc.eps = get_or(aw, "eps", awc.eps);
  awc.weight_decay = get_or(aw, "weight_decay", awc.weight_decay);

  const std::string resume = get_or(cfg, "resume", std::string());
  Rng rng(o.seed);
  AdaptiveBalancer balancer(kLossComponents);
  TrainProgress progress;
  std::optional<CrmfModel> model;
  std::optional<AdamW> opt;
  if (resume.empty()) {
    mc.validate();
    model.emplace(CrmfModel::init(mc, rng));
    opt.emplace(trainable_parameters(*model, balancer), awc);
  } else {
    const LoadedCheckpoint lc = load_checkpoint(resume);
    model.emplace(model_from_checkpoint(lc));
    mc = model->cfg;
    restore_balancer(balancer, lc);
    opt.emplace(trainable_parameters(*model, balancer), awc);
    restore_optimizer(*opt, lc);
    if (!lc.rng_state.empty()) rng.deserialize(lc.rng_state);
    progress = lc.progress;
  }

  ordered_json conf;
  conf["seed"] = o.seed;
  conf["threads"] = thread_cap();
  conf["data_dir"] = o.data_dir;
  conf["out_dir"] = o.out;
  conf["resume"] = resume;
  conf["epochs"] = tc.epochs;
  conf["batch"] = tc.batch;
  conf["accum"] = tc.accum;
  conf["patience"] = tc.patience;
  conf["peak_lr"] = tc.peak_lr;
  conf["geometry"] = o.geometry;
  conf["routing"] = o.routing;
  conf["winsorize"] = tc.winsorize;
  conf["split"] = {{"train", f_train}, {"val", f_val}, {"test", f_test}};
  conf["model"] = model_echo(mc);
  conf["loss"] = loss_echo(tc.loss);

  TrainResult result;
  try {
    result = train_loop(*model, *opt, balancer, rng, train_data, val_data,
                        tc, progress);
  } catch (const std::exception& e) {
    std::cerr << "training aborted: " << e.what() << "\n"
              << "resolved config:\n"
              << conf.dump(2) << "\n";
    return 1;
  }

  ordered_json doc;
  doc["command"] = "train";
  doc["config"] = conf;
  ordered_json& rj = doc["result"];
  rj["parameters"] = model->parameter_count();
  rj["train_clips"] = static_cast<int>(train_data.size());
  rj["val_clips"] = static_cast<int>(val_data.size());
  rj["best_val_macro_spearman"] = result.best_val;
  rj["best_epoch"] = result.best_epoch;
  rj["early_stopped"] = result.early_stopped;
  ordered_json epochs_j = ordered_json::array();
  for (const auto& s : result.epochs) {
    ordered_json e;
    e["epoch"] = s.epoch;
    e["lr"] = s.lr_last;
    e["train_loss"] = s.train_loss;
    e["first_micro_loss"] = s.first_micro_loss;
    ordered_json comps;
    for (int i = 0; i < kLossComponents; ++i)
      comps[kLossNames[static_cast<std::size_t>(i)]] =
          s.component_means[static_cast<std::size_t>(i)];
    e["components"] = comps;
    e["balancer_beta"] = s.balancer_beta;
    e["routing_mean"] = s.routing_mean;
    e["val_macro_spearman"] = s.val_macro_spearman;
    e["skipped_steps"] = s.skipped_steps;
    epochs_j.push_back(std::move(e));
  }
  rj["epochs"] = std::move(epochs_j);

  {
    std::ofstream f(o.out + "/train_report.json", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + o.out);
    f << doc.dump(2) << "\n";
  }
  ordered_json brief;
  brief["command"] = "train";
  brief["out_dir"] = o.out;
  brief["best_val_macro_spearman"] = result.best_val;
  brief["best_epoch"] = result.best_epoch;
  brief["early_stopped"] = result.early_stopped;
  std::cout << brief.dump(2) << "\n";
  return 0;
}

// -------------------------------------------------------------------- eval

struct EvalOpts {
  std::string checkpoint;
  std::string data_dir;
  std::string config;
  std::string out;
  std::uint64_t seed = 1;
  std::string geometry = "all";
  std::string routing = "learned";
};

int cmd_eval(const EvalOpts& o) {
  const ordered_json cfg = read_config(o.config);
  const LoadedCheckpoint lc = load_checkpoint(o.checkpoint);
  const CrmfModel model = model_from_checkpoint(lc);

  const auto records = load_metadata(o.data_dir + "/metadata.json");
  const std::string split_file = get_or(cfg, "split_file", std::string());
  const std::string split_name = get_or(cfg, "split", std::string("val"));
  std::vector<std::string> ids;
  if (split_file.empty()) {
    for (const auto& r : records) ids.push_back(r.id);
  } else {
    const SplitSpec sp = load_split(split_file);
    if (split_name == "train")
      ids = sp.train;
    else if (split_name == "val")
      ids = sp.val;
    else if (split_name == "test")
      ids = sp.test;
    else
      throw std::runtime_error("split must be train, val or test, got " +
                               split_name);
  }

  const auto data = load_features(o.data_dir + "/features", records, ids,
                                  model.cfg.d_model);
  const MetricReport report = evaluate(
      model, data, parse_routing(o.routing), parse_geometry(o.geometry));

  std::vector<std::string> names;
  if (model.cfg.targets == kNumTargets) names = score_names();

  ordered_json doc;
  doc["command"] = "eval";
  ordered_json& conf = doc["config"];
  conf["seed"] = o.seed;
  conf["threads"] = thread_cap();
  conf["checkpoint"] = o.checkpoint;
  conf["data_dir"] = o.data_dir;
  conf["split_file"] = split_file;
  conf["split"] = split_file.empty() ? "all" : split_name;
  conf["clips"] = static_cast<int>(data.size());
  conf["geometry"] = o.geometry;
  conf["routing"] = o.routing;
  conf["model"] = model_echo(model.cfg);
  doc["report"] = ordered_json::parse(report_to_json(report, names));
  emit(o.out, doc.dump(2));
  return 0;
}

// ------------------------------------------------------------------ verify

struct VerifyOpts {
  std::string out;
  std::uint64_t seed = 1;
};

int cmd_verify(const VerifyOpts& o) {
  const auto results = run_verification_suite();
  int failed = 0;
  double total = 0.0;
  ordered_json checks = ordered_json::array();
  for (const auto& r : results) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << " - "
              << r.detail << " (" << std::fixed << std::setprecision(2)
              << r.seconds << "s)\n"
              << std::defaultfloat;
    if (!r.pass) ++failed;
    total += r.seconds;
    ordered_json c;
    c["name"] = r.name;
    c["pass"] = r.pass;
    c["detail"] = r.detail;
    c["seconds"] = r.seconds;
    checks.push_back(std::move(c));
  }
  std::cout << results.size() << " checks, " << failed << " failed, "
            << std::fixed << std::setprecision(2) << total << "s total\n"
            << std::defaultfloat;
  if (!o.out.empty()) {
    ordered_json doc;
    doc["command"] = "verify";
    doc["config"] = {{"seed", o.seed}, {"threads", thread_cap()}};
    doc["checks"] = std::move(checks);
    doc["failed"] = failed;
    doc["total_seconds"] = total;
    emit(o.out, doc.dump(2));
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "geometric mixture-of-experts regressor and pairwise-comparison "
      "labeling pipeline"};
  app.require_subcommand(1);

  LabelOpts lo;
  CLI::App* label = app.add_subcommand(
      "label", "fit continuous scores from pairwise comparisons (TSV)");
  label->add_option("comparisons", lo.tsv, "TSV file, or - for stdin")
      ->required();
  label->add_option("--config", lo.config, "JSON config file");
  label->add_option("--seed", lo.seed, "rng seed");
  CLI::Option* lam = label->add_option("--lambda-nuc", lo.lambda_nuc,
                                       "fixed nuclear-norm weight (skips the "
                                       "lambda grid)");
  CLI::Option* alp =
      label->add_option("--alpha", lo.alpha, "log-likelihood weight");
  label->add_option("--out", lo.out, "output JSON path (default stdout)");

  SynthOpts so;
  CLI::App* synth = app.add_subcommand(
      "synth", "generate the synthetic multimodal benchmark dataset");
  synth->add_option("out_dir", so.out_dir, "dataset directory to create")
      ->required();
  synth->add_option("--config", so.config, "JSON config file");
  CLI::Option* sseed = synth->add_option("--seed", so.seed, "rng seed");

  TrainOpts to;
  CLI::App* train =
      app.add_subcommand("train", "train the regressor on a dataset");
  train->add_option("data_dir", to.data_dir,
                    "dataset directory (metadata.json + features/)")
      ->required();
  train->add_option("--config", to.config, "JSON config file");
  train->add_option("--seed", to.seed, "rng seed");
  CLI::Option* te = train->add_option("--epochs", to.epochs, "epochs");
  CLI::Option* tb = train->add_option("--batch", to.batch, "micro-batch size");
  CLI::Option* ta =
      train->add_option("--accum", to.accum, "micro-batches per step");
  train->add_option("--geometry", to.geometry, "expert geometry")
      ->check(CLI::IsMember({"hyperbolic", "spherical", "euclidean", "all"}));
  train->add_option("--routing", to.routing, "routing mode")
      ->check(CLI::IsMember({"uniform", "learned", "hard"}));
  train->add_option("--out", to.out, "run directory (default geomoe_run)");

  EvalOpts eo;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_cmd->add_option("checkpoint", eo.checkpoint, "checkpoint path")
      ->required();
  eval_cmd->add_option("data_dir", eo.data_dir, "dataset directory")
      ->required();
  eval_cmd->add_option("--config", eo.config, "JSON config file");
  eval_cmd->add_option("--seed", eo.seed, "rng seed");
  eval_cmd->add_option("--geometry", eo.geometry, "expert geometry")
      ->check(CLI::IsMember({"hyperbolic", "spherical", "euclidean", "all"}));
  eval_cmd->add_option("--routing", eo.routing, "routing mode")
      ->check(CLI::IsMember({"uniform", "learned", "hard"}));
  eval_cmd->add_option("--out", eo.out, "report path (default stdout)");

  VerifyOpts vo;
  CLI::App* verify = app.add_subcommand(
      "verify", "run the numerical invariant suite (nonzero exit on failure)");
  verify->add_option("--seed", vo.seed, "rng seed (suite uses frozen seeds)");
  verify->add_option("--out", vo.out, "JSON summary path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(label)) {
      lo.lambda_set = lam->count() > 0;
      lo.alpha_set = alp->count() > 0;
      return cmd_label(lo);
    }
    if (app.got_subcommand(synth)) {
      so.seed_set = sseed->count() > 0;
      return cmd_synth(so);
    }
    if (app.got_subcommand(train)) {
      to.epochs_set = te->count() > 0;
      to.batch_set = tb->count() > 0;
      to.accum_set = ta->count() > 0;
      return cmd_train(to);
    }
    if (app.got_subcommand(eval_cmd)) return cmd_eval(eo);
    if (app.got_subcommand(verify)) return cmd_verify(vo);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
