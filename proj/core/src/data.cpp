#include "geomoe/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

#include "geomoe/rng.hpp"

namespace geomoe {

using nlohmann::ordered_json;

namespace {

constexpr std::array<const char*, 9> kTextFields = {
    "id",          "video_id", "video_filename", "duration", "question_id",
    "question",    "video_quality", "user_no",   "transcript",
};

std::string as_string(const nlohmann::json& j) {
  if (j.is_string()) return j.get<std::string>();
  return j.dump();
}

std::string entry_label(const nlohmann::json& entry, std::size_t index) {
  if (entry.is_object() && entry.contains("id")) return as_string(entry["id"]);
  return "#" + std::to_string(index);
}

}  // namespace

std::vector<ClipRecord> load_metadata(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_metadata: cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw std::runtime_error("load_metadata: parse failure in " + path + ": " +
                             e.what());
  }
  if (!doc.is_array())
    throw std::runtime_error("load_metadata: top-level JSON must be an array");

  std::unordered_set<std::string> text_fields(kTextFields.begin(),
                                              kTextFields.end());
  std::unordered_set<std::string> score_fields(kScoreKeys.begin(),
                                               kScoreKeys.end());

  std::vector<ClipRecord> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& entry = doc[i];
    const std::string label = entry_label(entry, i);
    if (!entry.is_object())
      throw std::runtime_error("load_metadata: entry " + label +
                               " is not an object");
    for (const auto& [key, value] : entry.items()) {
      (void)value;
      if (!text_fields.count(key) && !score_fields.count(key))
        throw std::runtime_error("load_metadata: entry '" + label +
                                 "': unexpected score key '" + key + "'");
    }
    ClipRecord rec;
    auto text_of = [&](const char* key) -> std::string {
      return entry.contains(key) ? as_string(entry[key]) : std::string{};
    };
    rec.id = text_of("id");
    rec.video_id = text_of("video_id");
    rec.video_filename = text_of("video_filename");
    rec.duration = text_of("duration");
    rec.question_id = text_of("question_id");
    rec.question = text_of("question");
    rec.video_quality = text_of("video_quality");
    rec.user_no = text_of("user_no");
    rec.transcript = text_of("transcript");
    if (rec.user_no.empty())
      throw std::runtime_error("load_metadata: entry '" + label +
                               "': user_no missing or empty");
    for (int k = 0; k < kNumTargets; ++k) {
      const char* key = kScoreKeys[static_cast<std::size_t>(k)];
      if (!entry.contains(key))
        throw std::runtime_error("load_metadata: entry '" + label +
                                 "': missing score key '" + key + "'");
      if (!entry[key].is_number())
        throw std::runtime_error("load_metadata: entry '" + label +
                                 "': score key '" + key + "' is not numeric");
      const double v = entry[key].get<double>();
      if (!std::isfinite(v))
        throw std::runtime_error("load_metadata: entry '" + label +
                                 "': score key '" + key + "' is not finite");
      rec.scores[static_cast<std::size_t>(k)] = v;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_metadata(const std::string& path,
                    std::span<const ClipRecord> records) {
  ordered_json doc = ordered_json::array();
  for (const auto& rec : records) {
    ordered_json e;
    e["id"] = rec.id;
    e["video_id"] = rec.video_id;
    e["video_filename"] = rec.video_filename;
    e["duration"] = rec.duration;
    e["question_id"] = rec.question_id;
    e["question"] = rec.question;
    e["video_quality"] = rec.video_quality;
    e["user_no"] = rec.user_no;
    for (int k = 0; k < kNumTargets; ++k)
      e[kScoreKeys[static_cast<std::size_t>(k)]] =
          rec.scores[static_cast<std::size_t>(k)];
    e["transcript"] = rec.transcript;
    doc.push_back(std::move(e));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metadata: cannot open " + path);
  out << doc.dump(2) << "\n";
}

SplitSpec grouped_split(std::span<const ClipRecord> records, double f_train,
                        double f_val, double f_test, std::uint64_t seed) {
  if (f_train < 0.0 || f_val < 0.0 || f_test < 0.0 ||
      std::abs(f_train + f_val + f_test - 1.0) > 1e-9)
    throw std::invalid_argument(
        "grouped_split: fractions must be nonnegative and sum to 1");

  // Users in first-appearance order so the shuffle is the only seed-dependent
  // step.
  std::vector<std::string> users;
  std::unordered_map<std::string, std::vector<std::string>> clips_of;
  for (const auto& rec : records) {
    auto [it, inserted] = clips_of.try_emplace(rec.user_no);
    if (inserted) users.push_back(rec.user_no);
    it->second.push_back(rec.id);
  }
  if (users.size() < 3)
    throw std::invalid_argument(
        "grouped_split: need at least 3 distinct users, have " +
        std::to_string(users.size()));

  Rng rng(seed);
  rng.shuffle(users);

  const double total = static_cast<double>(records.size());
  std::array<double, 3> deficit = {f_train * total, f_val * total,
                                   f_test * total};
  SplitSpec split;
  std::array<std::vector<std::string>*, 3> buckets = {&split.train, &split.val,
                                                      &split.test};
  for (const auto& user : users) {
    int best = 0;
    for (int s = 1; s < 3; ++s)
      if (deficit[static_cast<std::size_t>(s)] >
          deficit[static_cast<std::size_t>(best)])
        best = s;
    auto& ids = clips_of[user];
    auto* bucket = buckets[static_cast<std::size_t>(best)];
    bucket->insert(bucket->end(), ids.begin(), ids.end());
    deficit[static_cast<std::size_t>(best)] -=
        static_cast<double>(ids.size());
  }
  return split;
}

void write_split(const std::string& path, const SplitSpec& split) {
  ordered_json doc;
  doc["train"] = split.train;
  doc["val"] = split.val;
  doc["test"] = split.test;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_split: cannot open " + path);
  out << doc.dump(2) << "\n";
}

SplitSpec load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_split: cannot open " + path);
  nlohmann::json doc;
  in >> doc;
  SplitSpec split;
  split.train = doc.at("train").get<std::vector<std::string>>();
  split.val = doc.at("val").get<std::vector<std::string>>();
  split.test = doc.at("test").get<std::vector<std::string>>();
  return split;
}

namespace {

constexpr char kFeatureMagic[8] = {'G', 'M', 'O', 'E', 'F', 'E', 'A', 'T'};

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& buf, float f) {
  put_u32(buf, std::bit_cast<std::uint32_t>(f));
}

std::uint32_t take_u32(const std::string& buf, std::size_t& pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(
             static_cast<unsigned char>(buf[pos + static_cast<std::size_t>(i)]))
         << (8 * i);
  pos += 4;
  return v;
}

struct ModalityView {
  const char* name;
  const Tensor* tensor;
};

}  // namespace

void write_feature_container(const std::string& path, const FeatureBundle& b) {
  const std::array<ModalityView, 3> mods = {
      ModalityView{"text", &b.text},
      ModalityView{"audio", &b.audio},
      ModalityView{"video", &b.video},
  };
  ordered_json header;
  header["version"] = 1;
  header["endianness"] = "little";
  header["clip_id"] = b.clip_id;
  header["modalities"] = ordered_json::array();
  for (const auto& m : mods) {
    if (m.tensor->ndim() != 2)
      throw std::invalid_argument(std::string("write_feature_container: ") +
                                  m.name + " must be a 2-d sequence");
    ordered_json jm;
    jm["name"] = m.name;
    jm["len"] = m.tensor->dim(0);
    jm["dim"] = m.tensor->dim(1);
    header["modalities"].push_back(std::move(jm));
  }
  const std::string header_str = header.dump();

  std::string buf;
  buf.append(kFeatureMagic, sizeof(kFeatureMagic));
  put_u32(buf, static_cast<std::uint32_t>(header_str.size()));
  buf += header_str;
  for (const auto& m : mods)
    for (double v : m.tensor->raw()) put_f32(buf, static_cast<float>(v));

  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("write_feature_container: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

FeatureBundle read_feature_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("read_feature_container: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();

  if (buf.size() < sizeof(kFeatureMagic) + 4 ||
      std::memcmp(buf.data(), kFeatureMagic, sizeof(kFeatureMagic)) != 0)
    throw std::runtime_error("read_feature_container: " + path +
                             " is not a feature container");
  std::size_t pos = sizeof(kFeatureMagic);
  const std::uint32_t header_len = take_u32(buf, pos);
  if (pos + header_len > buf.size())
    throw std::runtime_error("read_feature_container: truncated header in " +
                             path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.substr(pos, header_len));
  } catch (const std::exception& e) {
    throw std::runtime_error("read_feature_container: bad header in " + path +
                             ": " + e.what());
  }
  pos += header_len;

  if (header.value("version", 0) != 1)
    throw std::runtime_error("read_feature_container: unsupported version in " +
                             path);
  if (header.value("endianness", "") != "little")
    throw std::runtime_error("read_feature_container: unsupported byte order " +
                             path);
  const auto& mods = header.at("modalities");
  if (!mods.is_array() || mods.size() != 3)
    throw std::runtime_error(
        "read_feature_container: expected 3 modalities in " + path);

  FeatureBundle bundle;
  bundle.clip_id = header.value("clip_id", "");
  const std::array<const char*, 3> expected = {"text", "audio", "video"};
  std::array<Tensor*, 3> slots = {&bundle.text, &bundle.audio, &bundle.video};
  for (std::size_t m = 0; m < 3; ++m) {
    const auto& jm = mods[m];
    if (jm.value("name", "") != expected[m])
      throw std::runtime_error("read_feature_container: modality " +
                               std::to_string(m) + " must be '" + expected[m] +
                               "' in " + path);
    const int len = jm.at("len").get<int>();
    const int dim = jm.at("dim").get<int>();
    if (len <= 0 || dim <= 0)
      throw std::runtime_error(
          "read_feature_container: non-positive modality shape in " + path);
    const std::size_t count = static_cast<std::size_t>(len * dim);
    if (pos + 4 * count > buf.size())
      throw std::runtime_error("read_feature_container: truncated payload in " +
                               path);
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i)
      values[i] = static_cast<double>(
          std::bit_cast<float>(take_u32(buf, pos)));
    *slots[m] = Tensor::from_data({len, dim}, values);
  }
  if (pos != buf.size())
    throw std::runtime_error(
        "read_feature_container: payload length disagrees with header in " +
        path);
  return bundle;
}

std::vector<FeatureBundle> load_features(const std::string& features_dir,
                                         std::span<const ClipRecord> records,
                                         std::span<const std::string> ids,
                                         int expected_dim) {
  std::unordered_map<std::string, const ClipRecord*> by_id;
  for (const auto& rec : records) by_id[rec.id] = &rec;

  std::vector<FeatureBundle> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw std::runtime_error("load_features: clip '" + id +
                               "' absent from metadata");
    const std::string path =
        (std::filesystem::path(features_dir) / (id + ".gmf")).string();
    FeatureBundle b = read_feature_container(path);
    if (b.clip_id != id)
      throw std::runtime_error("load_features: container " + path +
                               " holds clip '" + b.clip_id + "'");
    for (const Tensor* t : {&b.text, &b.audio, &b.video})
      if (t->dim(1) != expected_dim)
        throw std::runtime_error(
            "load_features: clip '" + id + "' feature width " +
            std::to_string(t->dim(1)) + " does not match model width " +
            std::to_string(expected_dim));
    b.targets.assign(it->second->scores.begin(), it->second->scores.end());
    out.push_back(std::move(b));
  }
  return out;
}

namespace {

// Collapse to float32 precision so in-memory bundles match a container
// round-trip bit for bit.
double quantize(double v) { return static_cast<double>(static_cast<float>(v)); }

std::vector<double> random_unit3(Rng& rng) {
  for (;;) {
    std::vector<double> u = {rng.normal(), rng.normal(), rng.normal()};
    const double n = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    if (n > 1e-8) {
      for (auto& x : u) x /= n;
      return u;
    }
  }
}

}  // namespace

SyntheticData synth_generate(const SyntheticSpec& spec) {
  if (spec.clips <= 0 || spec.users <= 0 || spec.dim <= 0 ||
      spec.text_len < spec.tree_depth + 1 || spec.audio_len <= 0 ||
      spec.video_len <= 0 || spec.tree_depth < 1)
    throw std::invalid_argument("synth_generate: invalid spec");

  Rng rng(spec.seed);
  const int d = spec.dim;
  const double emb_scale = 1.0 / std::sqrt(static_cast<double>(d));

  // Fixed tables, drawn once in a documented order.
  // 1) tree-node embeddings, one per (level, prefix).
  std::vector<std::vector<std::vector<double>>> node_emb(
      static_cast<std::size_t>(spec.tree_depth));
  for (int level = 0; level < spec.tree_depth; ++level) {
    const int nodes = 1 << (level + 1);
    auto& row = node_emb[static_cast<std::size_t>(level)];
    row.resize(static_cast<std::size_t>(nodes));
    for (int node = 0; node < nodes; ++node) {
      row[static_cast<std::size_t>(node)] = rng.normal_vec(
          static_cast<std::size_t>(d), 0.0, emb_scale);
    }
  }
  // 2) leaf embeddings (full path identity).
  const int leaves = 1 << spec.tree_depth;
  std::vector<std::vector<double>> leaf_emb(static_cast<std::size_t>(leaves));
  for (auto& e : leaf_emb)
    e = rng.normal_vec(static_cast<std::size_t>(d), 0.0, emb_scale);
  // 3) per-token direction encoders A_j in R^{d x 3}.
  auto draw_encoder = [&](int count) {
    std::vector<std::vector<double>> enc(static_cast<std::size_t>(count));
    for (auto& m : enc)
      m = rng.normal_vec(static_cast<std::size_t>(d) * 3, 0.0, 1.0);
    return enc;
  };
  const auto audio_enc = draw_encoder(spec.audio_len);
  // 4) per-token linear encoders V_j in R^{d x 3}.
  const auto video_enc = draw_encoder(spec.video_len);
  // 5) low-rank target mixing: theta = C (12 x 4) * W (4 x 11).
  constexpr int kLatent = 11;  // 4 hierarchy + 4 direction + 3 linear
  constexpr int kRank = 4;
  std::vector<double> cfac =
      rng.normal_vec(static_cast<std::size_t>(kNumTargets * kRank), 0.0, 1.0);
  std::vector<double> wfac = rng.normal_vec(
      static_cast<std::size_t>(kRank * kLatent), 0.0,
      1.0 / std::sqrt(static_cast<double>(kRank)));
  std::vector<double> theta(static_cast<std::size_t>(kNumTargets * kLatent),
                            0.0);
  for (int k = 0; k < kNumTargets; ++k)
    for (int f = 0; f < kLatent; ++f)
      for (int r = 0; r < kRank; ++r)
        theta[static_cast<std::size_t>(k * kLatent + f)] +=
            cfac[static_cast<std::size_t>(k * kRank + r)] *
            wfac[static_cast<std::size_t>(r * kLatent + f)];

  const std::array<double, 3> family_weight = {spec.hier_weight,
                                               spec.dir_weight,
                                               spec.lin_weight};
  std::vector<int> active;
  for (int f = 0; f < 3; ++f)
    if (family_weight[static_cast<std::size_t>(f)] > 0.0) active.push_back(f);
  if (active.empty())
    throw std::invalid_argument("synth_generate: all family weights are zero");

  SyntheticData data;
  data.records.reserve(static_cast<std::size_t>(spec.clips));
  data.bundles.reserve(static_cast<std::size_t>(spec.clips));
  std::vector<std::vector<double>> raw_targets(
      static_cast<std::size_t>(spec.clips));

  auto add_noise = [&](std::vector<double>& v) {
    if (spec.feature_noise > 0.0)
      for (auto& x : v) x += spec.feature_noise * rng.normal();
  };

  for (int i = 0; i < spec.clips; ++i) {
    // Dominant family cycles over the active set so counts stay balanced.
    const int dominant =
        active[static_cast<std::size_t>(i) % active.size()];
    std::array<double, 3> dom_weight{};
    for (int f : active)
      dom_weight[static_cast<std::size_t>(f)] =
          active.size() == 1
              ? 1.0
              : (f == dominant ? spec.dominant_share
                               : (1.0 - spec.dominant_share) /
                                     static_cast<double>(active.size() - 1));

    // Latent draws.
    std::vector<int> bits(static_cast<std::size_t>(spec.tree_depth));
    for (auto& b : bits) b = static_cast<int>(rng.uniform_int(0, 1));
    const std::vector<double> u = random_unit3(rng);
    const std::vector<double> g = rng.normal_vec(3, 0.0, 1.0);

    const double s1 = bits[0] != 0 ? 1.0 : -1.0;
    const double s2 = (spec.tree_depth > 1 && bits[1] != 0) ? 1.0 : -1.0;
    const double s3 = (spec.tree_depth > 2 && bits[2] != 0) ? 1.0 : -1.0;
    std::array<double, kLatent> latent = {
        s1, 0.6 * s2, 0.35 * s3, 0.4 * s1 * s2,      // hierarchy
        u[0], u[1], u[2], 1.7320508075688772 * u[0] * u[1],  // direction
        g[0], g[1], g[2],                             // linear
    };
    const std::array<int, kLatent> latent_family = {0, 0, 0, 0, 1, 1,
                                                    1, 1, 2, 2, 2};
    for (int f0 = 0; f0 < kLatent; ++f0)
      latent[static_cast<std::size_t>(f0)] *=
          family_weight[static_cast<std::size_t>(
              latent_family[static_cast<std::size_t>(f0)])] *
          dom_weight[static_cast<std::size_t>(
              latent_family[static_cast<std::size_t>(f0)])];

    auto& y = raw_targets[static_cast<std::size_t>(i)];
    y.assign(kNumTargets, 0.0);
    for (int k = 0; k < kNumTargets; ++k) {
      for (int f0 = 0; f0 < kLatent; ++f0)
        y[static_cast<std::size_t>(k)] +=
            theta[static_cast<std::size_t>(k * kLatent + f0)] *
            latent[static_cast<std::size_t>(f0)];
      if (spec.target_noise > 0.0)
        y[static_cast<std::size_t>(k)] += spec.target_noise * rng.normal();
    }

    // Streams.
    const double text_gain = dominant == 0 ? spec.stream_gain : 1.0;
    const double audio_gain = dominant == 1 ? spec.stream_gain : 1.0;
    const double video_gain = dominant == 2 ? spec.stream_gain : 1.0;

    std::vector<double> text(
        static_cast<std::size_t>(spec.text_len * d), 0.0);
    int prefix = 0;
    for (int level = 0; level < spec.tree_depth; ++level) {
      prefix = prefix * 2 + bits[static_cast<std::size_t>(level)];
      const auto& e =
          node_emb[static_cast<std::size_t>(level)][static_cast<std::size_t>(
              prefix)];
      for (int c = 0; c < d; ++c)
        text[static_cast<std::size_t>(level * d + c)] =
            e[static_cast<std::size_t>(c)];
    }
    {
      const auto& e = leaf_emb[static_cast<std::size_t>(prefix)];
      for (int t = spec.tree_depth; t < spec.text_len; ++t)
        for (int c = 0; c < d; ++c)
          text[static_cast<std::size_t>(t * d + c)] =
              e[static_cast<std::size_t>(c)];
    }
    add_noise(text);
    for (auto& x : text) x = quantize(x * text_gain);

    auto encode3 = [&](const std::vector<std::vector<double>>& enc, int len,
                       const std::vector<double>& src, double scale,
                       double gain) {
      std::vector<double> out(static_cast<std::size_t>(len * d), 0.0);
      for (int t = 0; t < len; ++t) {
        const auto& m = enc[static_cast<std::size_t>(t)];
        for (int c = 0; c < d; ++c) {
          double acc = 0.0;
          for (int q = 0; q < 3; ++q)
            acc += m[static_cast<std::size_t>(c * 3 + q)] *
                   src[static_cast<std::size_t>(q)];
          out[static_cast<std::size_t>(t * d + c)] = acc * scale;
        }
      }
      add_noise(out);
      for (auto& x : out) x = quantize(x * gain);
      return out;
    };
    // Scales chosen so an average token has roughly unit norm.
    std::vector<double> audio =
        encode3(audio_enc, spec.audio_len, u, emb_scale, audio_gain);
    std::vector<double> video =
        encode3(video_enc, spec.video_len, g,
                emb_scale / std::sqrt(3.0), video_gain);

    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "clip_%05d", i);
    ClipRecord rec;
    rec.id = idbuf;
    rec.video_id = rec.id;
    rec.video_filename = rec.id + ".mp4";
    rec.duration = "60";
    rec.question_id = "q" + std::to_string(i % 5 + 1);
    rec.question = "synthetic prompt " + std::to_string(i % 5 + 1);
    rec.video_quality = "720p";
    rec.user_no = "user_" + std::to_string(i % spec.users);
    rec.transcript = "synthetic transcript for " + rec.id;
    data.records.push_back(std::move(rec));

    FeatureBundle b;
    b.clip_id = idbuf;
    b.text = Tensor::from_data({spec.text_len, d}, text);
    b.audio = Tensor::from_data({spec.audio_len, d}, audio);
    b.video = Tensor::from_data({spec.video_len, d}, video);
    data.bundles.push_back(std::move(b));
  }

  // Standardize each target column over the dataset; the published scores are
  // zero-mean unit-variance.
  std::array<double, kNumTargets> mu{}, sd{};
  for (int k = 0; k < kNumTargets; ++k) {
    double m = 0.0;
    for (const auto& y : raw_targets) m += y[static_cast<std::size_t>(k)];
    m /= static_cast<double>(spec.clips);
    double v = 0.0;
    for (const auto& y : raw_targets) {
      const double dx = y[static_cast<std::size_t>(k)] - m;
      v += dx * dx;
    }
    v /= static_cast<double>(spec.clips);
    mu[static_cast<std::size_t>(k)] = m;
    sd[static_cast<std::size_t>(k)] = v > 1e-24 ? std::sqrt(v) : 1.0;
  }
  for (int i = 0; i < spec.clips; ++i) {
    auto& rec = data.records[static_cast<std::size_t>(i)];
    auto& bundle = data.bundles[static_cast<std::size_t>(i)];
    bundle.targets.resize(kNumTargets);
    for (int k = 0; k < kNumTargets; ++k) {
      const double z =
          (raw_targets[static_cast<std::size_t>(i)]
                      [static_cast<std::size_t>(k)] -
           mu[static_cast<std::size_t>(k)]) /
          sd[static_cast<std::size_t>(k)];
      rec.scores[static_cast<std::size_t>(k)] = z;
      bundle.targets[static_cast<std::size_t>(k)] = z;
    }
  }

  ordered_json recipe;
  recipe["generator"] = "three-family planted-signal benchmark";
  recipe["seed"] = spec.seed;
  recipe["clips"] = spec.clips;
  recipe["users"] = spec.users;
  recipe["dim"] = spec.dim;
  recipe["stream_lengths"] = {{"text", spec.text_len},
                              {"audio", spec.audio_len},
                              {"video", spec.video_len}};
  recipe["families"] = ordered_json::array(
      {ordered_json{{"name", "hierarchy"},
                    {"stream", "text"},
                    {"latents",
                     "tree path signs (1, 0.6, 0.35) plus 0.4*s1*s2"},
                    {"weight", spec.hier_weight}},
       ordered_json{{"name", "direction"},
                    {"stream", "audio"},
                    {"latents", "unit 3-vector plus sqrt(3)*u1*u2"},
                    {"weight", spec.dir_weight}},
       ordered_json{{"name", "linear"},
                    {"stream", "video"},
                    {"latents", "standard Gaussian 3-vector"},
                    {"weight", spec.lin_weight}}});
  recipe["target_map"] = {{"rank", kRank},
                          {"columns", kNumTargets},
                          {"latent_dim", kLatent}};
  recipe["dominance"] = {{"share", spec.dominant_share},
                         {"stream_gain", spec.stream_gain},
                         {"cycle", "clip index modulo active families"}};
  recipe["noise"] = {{"target", spec.target_noise},
                     {"feature", spec.feature_noise}};
  recipe["normalization"] = "per-target standardized over the dataset";
  data.recipe_json = recipe.dump(2);
  return data;
}

void write_dataset(const std::string& dir, const SyntheticData& data) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "features");
  write_metadata((fs::path(dir) / "metadata.json").string(), data.records);
  for (const auto& b : data.bundles)
    write_feature_container(
        (fs::path(dir) / "features" / (b.clip_id + ".gmf")).string(), b);
  std::ofstream recipe((fs::path(dir) / "recipe.json").string());
  if (!recipe)
    throw std::runtime_error("write_dataset: cannot write recipe in " + dir);
  recipe << data.recipe_json << "\n";
}

}  // namespace geomoe
