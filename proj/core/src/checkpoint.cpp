#include "geomoe/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace geomoe {

using nlohmann::ordered_json;

namespace {

constexpr char kMagic[8] = {'G', 'M', 'O', 'E', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& buf, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i)
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t take_u32(const std::string& buf, std::size_t& pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(
             buf[pos + static_cast<std::size_t>(i)]))
         << (8 * i);
  pos += 4;
  return v;
}

double take_f64(const std::string& buf, std::size_t& pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(
             buf[pos + static_cast<std::size_t>(i)]))
         << (8 * i);
  pos += 8;
  return std::bit_cast<double>(v);
}

ordered_json config_to_json(const ModelConfig& c) {
  ordered_json j;
  j["d_model"] = c.d_model;
  j["d_e"] = c.d_e;
  j["targets"] = c.targets;
  j["pre_layers"] = c.pre_layers;
  j["pre_heads"] = c.pre_heads;
  j["temporal_heads"] = c.temporal_heads;
  j["expert_layers"] = c.expert_layers;
  j["dropout"] = c.dropout;
  j["attn_tokens"] = c.attn_tokens;
  j["attn_heads"] = c.attn_heads;
  j["attn_temperature"] = c.attn_temperature;
  j["router_hidden"] = c.router_hidden;
  j["head_shared"] = c.head_shared;
  j["head_adapter"] = c.head_adapter;
  j["curvature"] = c.curvature;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.d_e = j.at("d_e").get<int>();
  c.targets = j.at("targets").get<int>();
  c.pre_layers = j.at("pre_layers").get<int>();
  c.pre_heads = j.at("pre_heads").get<int>();
  c.temporal_heads = j.at("temporal_heads").get<int>();
  c.expert_layers = j.at("expert_layers").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.attn_tokens = j.at("attn_tokens").get<int>();
  c.attn_heads = j.at("attn_heads").get<int>();
  c.attn_temperature = j.at("attn_temperature").get<double>();
  c.router_hidden = j.at("router_hidden").get<int>();
  c.head_shared = j.at("head_shared").get<int>();
  c.head_adapter = j.at("head_adapter").get<int>();
  c.curvature = j.at("curvature").get<double>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const CrmfModel& model,
                     const AdamW* opt, const AdaptiveBalancer* balancer,
                     const Rng* rng, const TrainProgress& progress) {
  auto table = model.named_parameters();
  if (balancer != nullptr)
    table.emplace_back("balancer.alpha", balancer->alpha());

  if (opt != nullptr && opt->params().size() != table.size())
    throw std::invalid_argument(
        "save_checkpoint: optimizer tracks " +
        std::to_string(opt->params().size()) + " tensors, checkpoint table has " +
        std::to_string(table.size()));

  ordered_json header;
  header["format"] = "geomoe-checkpoint";
  header["config"] = config_to_json(model.cfg);
  header["params"] = ordered_json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : table) {
    ordered_json p;
    p["name"] = name;
    p["shape"] = t.shape();
    p["offset"] = offset;
    header["params"].push_back(std::move(p));
    offset += static_cast<std::size_t>(t.size());
  }
  header["payload_doubles"] =
      opt != nullptr ? offset * 3 : offset;  // params (+ moment1 + moment2)
  ordered_json jopt;
  jopt["present"] = opt != nullptr;
  if (opt != nullptr) {
    jopt["steps"] = opt->step_count();
    jopt["skipped"] = opt->skipped_steps();
  }
  header["optimizer"] = std::move(jopt);
  ordered_json jbal;
  jbal["present"] = balancer != nullptr;
  if (balancer != nullptr) {
    jbal["steps"] = balancer->steps();
    jbal["mu"] = balancer->ema_mean();
    jbal["q"] = balancer->ema_sq();
  }
  header["balancer"] = std::move(jbal);
  header["rng"] = rng != nullptr ? rng->serialize() : std::string{};
  header["progress"] = {{"epoch", progress.epoch},
                        {"global_step", progress.global_step},
                        {"best_val", progress.best_val},
                        {"patience_left", progress.patience_left}};
  const std::string header_str = header.dump();

  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<std::uint32_t>(header_str.size()));
  buf += header_str;
  for (const auto& [name, t] : table)
    for (double v : t.raw()) put_f64(buf, v);
  if (opt != nullptr) {
    for (const auto& m : opt->moment1())
      for (double v : m) put_f64(buf, v);
    for (const auto& m : opt->moment2())
      for (double v : m) put_f64(buf, v);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("save_checkpoint: write failed " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();

  if (buf.size() < sizeof(kMagic) + 8 ||
      std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_checkpoint: " + path +
                             " is not a checkpoint file");
  std::size_t pos = sizeof(kMagic);
  const std::uint32_t version = take_u32(buf, pos);
  if (version != kVersion)
    throw std::runtime_error("load_checkpoint: unsupported version " +
                             std::to_string(version));
  const std::uint32_t header_len = take_u32(buf, pos);
  if (pos + header_len > buf.size())
    throw std::runtime_error("load_checkpoint: truncated header in " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.substr(pos, header_len));
  } catch (const std::exception& e) {
    throw std::runtime_error("load_checkpoint: bad header in " + path + ": " +
                             e.what());
  }
  pos += header_len;

  LoadedCheckpoint ckpt;
  ckpt.config = config_from_json(header.at("config"));

  std::size_t total = 0;
  for (const auto& p : header.at("params")) {
    std::size_t n = 1;
    for (int d : p.at("shape").get<std::vector<int>>())
      n *= static_cast<std::size_t>(d);
    total += n;
    ckpt.params.emplace_back(p.at("name").get<std::string>(),
                             std::vector<double>(n));
  }
  auto read_block = [&](std::vector<double>& dst) {
    if (pos + 8 * dst.size() > buf.size())
      throw std::runtime_error("load_checkpoint: truncated payload in " +
                               path);
    for (auto& v : dst) v = take_f64(buf, pos);
  };
  for (auto& [name, values] : ckpt.params) read_block(values);

  const auto& jopt = header.at("optimizer");
  ckpt.has_optimizer = jopt.at("present").get<bool>();
  if (ckpt.has_optimizer) {
    ckpt.opt_steps = jopt.at("steps").get<std::int64_t>();
    ckpt.opt_skipped = jopt.at("skipped").get<std::int64_t>();
    ckpt.moment1.reserve(ckpt.params.size());
    ckpt.moment2.reserve(ckpt.params.size());
    for (const auto& [name, values] : ckpt.params) {
      ckpt.moment1.emplace_back(values.size());
      read_block(ckpt.moment1.back());
    }
    for (const auto& [name, values] : ckpt.params) {
      ckpt.moment2.emplace_back(values.size());
      read_block(ckpt.moment2.back());
    }
  }
  (void)total;
  if (pos != buf.size())
    throw std::runtime_error(
        "load_checkpoint: payload length disagrees with header in " + path);

  const auto& jbal = header.at("balancer");
  ckpt.has_balancer = jbal.at("present").get<bool>();
  if (ckpt.has_balancer) {
    ckpt.balancer_steps = jbal.at("steps").get<std::int64_t>();
    ckpt.balancer_mu = jbal.at("mu").get<std::vector<double>>();
    ckpt.balancer_q = jbal.at("q").get<std::vector<double>>();
  }
  ckpt.rng_state = header.value("rng", std::string{});
  const auto& jp = header.at("progress");
  ckpt.progress.epoch = jp.at("epoch").get<int>();
  ckpt.progress.global_step = jp.at("global_step").get<std::int64_t>();
  ckpt.progress.best_val = jp.at("best_val").get<double>();
  ckpt.progress.patience_left = jp.at("patience_left").get<int>();
  return ckpt;
}

CrmfModel model_from_checkpoint(const LoadedCheckpoint& ckpt) {
  CrmfModel model = CrmfModel::zeros(ckpt.config);
  std::unordered_map<std::string, Tensor> by_name;
  for (auto& [name, t] : model.named_parameters()) by_name.emplace(name, t);
  std::unordered_set<std::string> filled;
  for (const auto& [name, values] : ckpt.params) {
    if (name == "balancer.alpha") continue;
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("model_from_checkpoint: unknown parameter '" +
                               name + "'");
    if (it->second.raw().size() != values.size())
      throw std::runtime_error("model_from_checkpoint: parameter '" + name +
                               "' holds " + std::to_string(values.size()) +
                               " values, model expects " +
                               std::to_string(it->second.raw().size()));
    it->second.raw() = values;
    filled.insert(name);
  }
  for (const auto& [name, t] : by_name)
    if (!filled.count(name))
      throw std::runtime_error("model_from_checkpoint: parameter '" + name +
                               "' missing from checkpoint");
  return model;
}

void restore_optimizer(AdamW& opt, const LoadedCheckpoint& ckpt) {
  if (!ckpt.has_optimizer)
    throw std::invalid_argument(
        "restore_optimizer: checkpoint has no optimizer state");
  if (opt.params().size() != ckpt.params.size())
    throw std::invalid_argument(
        "restore_optimizer: optimizer tracks " +
        std::to_string(opt.params().size()) + " tensors, checkpoint has " +
        std::to_string(ckpt.params.size()));
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    if (opt.moment1()[i].size() != ckpt.moment1[i].size())
      throw std::invalid_argument(
          "restore_optimizer: moment size mismatch at parameter '" +
          ckpt.params[i].first + "'");
    opt.moment1()[i] = ckpt.moment1[i];
    opt.moment2()[i] = ckpt.moment2[i];
  }
  opt.set_step_count(ckpt.opt_steps);
  opt.set_skipped_steps(ckpt.opt_skipped);
}

void restore_balancer(AdaptiveBalancer& balancer,
                      const LoadedCheckpoint& ckpt) {
  if (!ckpt.has_balancer)
    throw std::invalid_argument(
        "restore_balancer: checkpoint has no balancer state");
  const std::vector<double>* alpha = nullptr;
  for (const auto& [name, values] : ckpt.params)
    if (name == "balancer.alpha") alpha = &values;
  if (alpha == nullptr)
    throw std::runtime_error("restore_balancer: balancer.alpha missing");
  if (balancer.alpha().raw().size() != alpha->size() ||
      balancer.ema_mean().size() != ckpt.balancer_mu.size())
    throw std::invalid_argument(
        "restore_balancer: component count mismatch");
  balancer.alpha().raw() = *alpha;
  balancer.ema_mean() = ckpt.balancer_mu;
  balancer.ema_sq() = ckpt.balancer_q;
  balancer.set_steps(ckpt.balancer_steps);
}

}  // namespace geomoe
