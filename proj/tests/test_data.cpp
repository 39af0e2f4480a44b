#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "geomoe/data.hpp"
#include "json.hpp"

using namespace geomoe;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("geomoe_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string str(const std::string& name = "") const {
    return (name.empty() ? path : path / name).string();
  }
};

SyntheticSpec tiny_spec() {
  SyntheticSpec spec;
  spec.seed = 3;
  spec.clips = 24;
  spec.users = 6;
  spec.dim = 8;
  return spec;
}

}  // namespace

TEST_CASE("synthetic generation is deterministic in the seed") {
  SyntheticData a = synth_generate(tiny_spec());
  SyntheticData b = synth_generate(tiny_spec());
  REQUIRE(a.bundles.size() == 24);
  CHECK(a.recipe_json == b.recipe_json);
  for (size_t i = 0; i < a.bundles.size(); ++i) {
    CHECK(a.bundles[i].clip_id == b.bundles[i].clip_id);
    CHECK(a.bundles[i].text.raw() == b.bundles[i].text.raw());
    CHECK(a.bundles[i].targets == b.bundles[i].targets);
  }

  SyntheticSpec other = tiny_spec();
  other.seed = 4;
  SyntheticData c = synth_generate(other);
  CHECK(a.bundles[0].text.raw() != c.bundles[0].text.raw());
}

TEST_CASE("synthetic records carry twelve finite scores and user groups") {
  SyntheticData d = synth_generate(tiny_spec());
  std::set<std::string> users;
  for (const auto& r : d.records) {
    users.insert(r.user_no);
    for (double s : r.scores) CHECK(std::isfinite(s));
  }
  CHECK(users.size() == 6);
}

TEST_CASE("metadata json round-trips every field") {
  TempDir tmp;
  SyntheticData d = synth_generate(tiny_spec());
  const std::string path = tmp.str("metadata.json");
  write_metadata(path, d.records);
  auto back = load_metadata(path);
  REQUIRE(back.size() == d.records.size());
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == d.records[i].id);
    CHECK(back[i].user_no == d.records[i].user_no);
    CHECK(back[i].scores == d.records[i].scores);
    CHECK(back[i].transcript == d.records[i].transcript);
  }
}

TEST_CASE("metadata loading names the missing score key and the entry") {
  TempDir tmp;
  nlohmann::json entry = {{"id", "clip_0"},      {"video_id", "v"},
                          {"video_filename", "f"}, {"duration", "1"},
                          {"question_id", "q"},  {"question", "?"},
                          {"video_quality", "hd"}, {"user_no", "u1"},
                          {"transcript", "hello"}};
  for (const char* key : kScoreKeys) entry[key] = 0.5;
  entry.erase("interview_score");
  nlohmann::json doc = nlohmann::json::array({entry});
  const std::string path = tmp.str("broken.json");
  std::ofstream(path) << doc.dump();
  try {
    load_metadata(path);
    FAIL("expected an error for the missing score key");
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    CHECK(msg.find("interview_score") != std::string::npos);
    CHECK(msg.find("clip_0") != std::string::npos);
  }
}

TEST_CASE("grouped split keeps every user on one side") {
  SyntheticSpec spec = tiny_spec();
  spec.clips = 60;
  spec.users = 10;
  SyntheticData d = synth_generate(spec);
  SplitSpec split = grouped_split(d.records, 0.6, 0.2, 0.2, 7);

  auto user_of = [&](const std::string& id) {
    for (const auto& r : d.records)
      if (r.id == id) return r.user_no;
    return std::string();
  };
  std::set<std::string> train_users, other_users;
  for (const auto& id : split.train) train_users.insert(user_of(id));
  for (const auto& id : split.val) other_users.insert(user_of(id));
  for (const auto& id : split.test) other_users.insert(user_of(id));
  for (const auto& u : train_users) CHECK(other_users.count(u) == 0);

  CHECK(split.train.size() + split.val.size() + split.test.size() == 60);
  CHECK(split.train.size() > split.val.size());

  // deterministic in the seed
  SplitSpec again = grouped_split(d.records, 0.6, 0.2, 0.2, 7);
  CHECK(again.train == split.train);
  SplitSpec moved = grouped_split(d.records, 0.6, 0.2, 0.2, 8);
  CHECK(moved.train != split.train);

  CHECK_THROWS(grouped_split(d.records, 0.9, 0.2, 0.2, 1));
}

TEST_CASE("split files round-trip") {
  TempDir tmp;
  SplitSpec s;
  s.train = {"a", "b"};
  s.val = {"c"};
  s.test = {"d"};
  write_split(tmp.str("splits.json"), s);
  SplitSpec back = load_split(tmp.str("splits.json"));
  CHECK(back.train == s.train);
  CHECK(back.val == s.val);
  CHECK(back.test == s.test);
}

TEST_CASE("feature containers store float32 payloads faithfully") {
  TempDir tmp;
  SyntheticData d = synth_generate(tiny_spec());
  const FeatureBundle& b = d.bundles[0];
  const std::string path = tmp.str("clip.gmf");
  write_feature_container(path, b);
  FeatureBundle back = read_feature_container(path);
  CHECK(back.clip_id == b.clip_id);
  REQUIRE(back.text.shape() == b.text.shape());
  REQUIRE(back.video.shape() == b.video.shape());
  for (int i = 0; i < b.text.size(); ++i)
    CHECK(back.text.at(i) ==
          doctest::Approx(b.text.at(i)).epsilon(1e-6));  // f32 quantization

  // corrupted magic is rejected
  std::ofstream(tmp.str("bad.gmf"), std::ios::binary) << "NOTMAGIC" << std::string(64, '\0');
  CHECK_THROWS(read_feature_container(tmp.str("bad.gmf")));
}

TEST_CASE("dataset writing and bulk loading joins targets from the metadata") {
  TempDir tmp;
  SyntheticData d = synth_generate(tiny_spec());
  write_dataset(tmp.str(), d);
  CHECK(fs::exists(tmp.path / "metadata.json"));
  CHECK(fs::exists(tmp.path / "recipe.json"));

  auto records = load_metadata(tmp.str("metadata.json"));
  std::vector<std::string> ids = {records[0].id, records[3].id};
  auto bundles = load_features(tmp.str("features"), records, ids, 8);
  REQUIRE(bundles.size() == 2);
  CHECK(bundles[0].clip_id == records[0].id);
  REQUIRE(bundles[0].targets.size() == static_cast<size_t>(kNumTargets));
  CHECK(bundles[0].targets[2] ==
        doctest::Approx(records[0].scores[2]).epsilon(1e-12));

  // feature width validation
  CHECK_THROWS(load_features(tmp.str("features"), records, ids, 16));
  // unknown id
  std::vector<std::string> missing = {"nope"};
  CHECK_THROWS(load_features(tmp.str("features"), records, missing, 8));
}
