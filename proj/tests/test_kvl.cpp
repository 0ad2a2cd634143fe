#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kgdl/kvl.hpp"

using namespace kgdl;

namespace {

Vec dist_with(int n, std::initializer_list<std::pair<int, double>> weights) {
  Vec d = Vec::Constant(n, 0.01);
  for (const auto& [id, w] : weights) d(id) = w;
  return d / d.sum();
}

// Independent restatement of the constraint rule, structured differently on
// purpose: explicit lowest-id argmax scans over std::set registries.
struct OracleOut {
  int emitted;
  std::string reason;
};

OracleOut oracle(const Vec& dist, const std::set<int>& global, const std::set<int>& local) {
  int best = 0;
  for (int i = 1; i < dist.size(); ++i)
    if (dist(i) > dist(best)) best = i;  // keeps the lowest id on ties
  if (!global.count(best)) return {best, "not_entity"};
  if (local.count(best)) return {best, "in_local"};
  if (local.empty()) return {best, "local_empty_passthrough"};
  int pick = -1;
  double p = -1.0;
  for (const int id : local)  // std::set iterates ascending: lowest id wins ties
    if (dist(id) > p) {
      p = dist(id);
      pick = id;
    }
  return {pick, "replaced"};
}

}  // namespace

TEST_CASE("the four constraint outcomes", "[kvl]") {
  const EntityRegistry reg({4, 5, 6}, {5}, 8);

  // argmax is a plain word: untouched
  {
    const KvlDecision d = constrain(dist_with(8, {{7, 5.0}}), reg);
    CHECK(d.emitted_id == 7);
    CHECK_FALSE(d.replaced);
    CHECK(d.reason == KvlReason::not_entity);
  }
  // argmax is a local entity: untouched
  {
    const KvlDecision d = constrain(dist_with(8, {{5, 5.0}}), reg);
    CHECK(d.emitted_id == 5);
    CHECK_FALSE(d.replaced);
    CHECK(d.reason == KvlReason::in_local);
  }
  // argmax is a global entity outside the local KG: swapped for the best
  // local one
  {
    const KvlDecision d = constrain(dist_with(8, {{4, 5.0}, {5, 2.0}}), reg);
    CHECK(d.original_id == 4);
    CHECK(d.emitted_id == 5);
    CHECK(d.replaced);
    CHECK(d.reason == KvlReason::replaced);
  }
  // empty local KG: everything passes through
  {
    const EntityRegistry empty({4, 5, 6}, {}, 8);
    const KvlDecision d = constrain(dist_with(8, {{4, 5.0}}), empty);
    CHECK(d.emitted_id == 4);
    CHECK_FALSE(d.replaced);
    CHECK(d.reason == KvlReason::local_empty_passthrough);
  }
}

TEST_CASE("replacement picks the most probable local entity, ties to lowest id", "[kvl]") {
  const EntityRegistry reg({4, 5, 6, 7}, {5, 6}, 9);
  // p(6) > p(5): 6 wins
  CHECK(constrain(dist_with(9, {{4, 5.0}, {5, 1.0}, {6, 2.0}}), reg).emitted_id == 6);
  // exact tie between 5 and 6: the lower id wins
  CHECK(constrain(dist_with(9, {{4, 5.0}, {5, 2.0}, {6, 2.0}}), reg).emitted_id == 5);
  // argmax tie between entity 4 and word 8: lowest id 4 is the argmax
  const Vec tied = dist_with(9, {{4, 3.0}, {8, 3.0}, {5, 1.0}});
  const KvlDecision d = constrain(tied, reg);
  CHECK(d.original_id == 4);
  CHECK(d.reason == KvlReason::replaced);
}

TEST_CASE("constraint agrees with an exhaustive oracle on random cases", "[kvl]") {
  std::mt19937_64 rng(20240817);
  std::uniform_int_distribution<int> vs(6, 30);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = vs(rng);
    std::set<int> global, local;
    for (int id = 4; id < n; ++id) {
      if (u(rng) < 0.4) {
        global.insert(id);
        if (u(rng) < 0.4) local.insert(id);
      }
    }
    if (u(rng) < 0.15) local.clear();
    Vec dist(n);
    for (int i = 0; i < n; ++i) dist(i) = u(rng);
    if (u(rng) < 0.3) {
      // plant exact ties at the top
      const double mx = dist.maxCoeff();
      dist(static_cast<int>(u(rng) * n) % n) = mx;
    }
    dist /= dist.sum();

    const EntityRegistry reg({global.begin(), global.end()}, {local.begin(), local.end()}, n);
    const KvlDecision got = constrain(dist, reg);
    const OracleOut want = oracle(dist, global, local);
    INFO("trial " << trial << " n=" << n);
    REQUIRE(got.emitted_id == want.emitted);
    REQUIRE(std::string(to_string(got.reason)) == want.reason);
    REQUIRE(got.replaced == (got.emitted_id != got.original_id));
  }
}

TEST_CASE("registry construction validates and filters", "[kvl]") {
  CHECK_THROWS_AS(EntityRegistry({4, 5}, {6}, 8), ValidationError);

  Vocabulary v;
  v.add("word");
  v.add("chevron", true);
  v.add("valero", true);
  KnowledgeGraph local;
  local.add({"valero", "distance", "3_miles"});  // 3_miles unknown to the vocab
  local.add({"chevron", "kind", "word"});        // word is known but not an entity
  const EntityRegistry reg = make_registry(v, local);
  CHECK(reg.global_entities.size() == 2);
  CHECK(reg.local_entities.size() == 2);  // valero and chevron only
  CHECK(reg.local_entities.count(v.find("valero")) == 1);
  CHECK(reg.local_entities.count(v.find("word")) == 0);
  CHECK(reg.vocab_size == v.size());
}

TEST_CASE("distribution length must match the registry", "[kvl]") {
  const EntityRegistry reg({4}, {4}, 8);
  CHECK_THROWS_AS(constrain(Vec::Constant(5, 0.2), reg), DimensionError);
}

TEST_CASE("with every entity local, constrained decoding is plain decoding", "[kvl]") {
  Vocabulary v;
  v.add("u");
  v.add("w");
  v.add("e1", true);
  v.add("e2", true);
  const ModelParams p = init_model(random_embeddings(v.size(), 6, 77), 2, 78);
  std::unordered_set<int> ents{v.find("e1"), v.find("e2")};
  const EntityRegistry reg(ents, ents, v.size());
  const std::vector<int> input{v.find("u"), v.find("e1"), v.find("w")};
  const auto [out, decisions] = decode_with_kvl(p, input, reg, 20);
  CHECK(out == generate(p, input, 20));
  for (const auto& d : decisions) {
    CHECK_FALSE(d.replaced);
    CHECK(d.reason != KvlReason::replaced);
  }
}

TEST_CASE("a replaced token is what the next step consumes", "[kvl]") {
  Vocabulary v;
  v.add("w");
  v.add("a", true);
  v.add("b", true);
  const int A = v.find("a"), B = v.find("b");
  ModelParams p = init_model(random_embeddings(v.size(), 4, 79), 2, 80);
  p.enc.W.setZero();
  p.enc.U.setZero();
  p.enc.b.setZero();
  p.dec.W.setZero();
  p.dec.U.setZero();
  p.dec.b.setZero();
  p.W_out.setZero();
  p.b_out.setZero();
  p.b_out(A) = 50.0;  // the raw argmax is always the out-of-local entity
  const EntityRegistry reg({A, B}, {B}, v.size());
  const auto [out, decisions] = decode_with_kvl(p, {v.find("w")}, reg, 5);
  REQUIRE(out.size() == 5);  // never emits EOS, runs to the cap
  for (std::size_t t = 0; t < out.size(); ++t) {
    CHECK(out[t] == B);
    CHECK(decisions[t].original_id == A);
    CHECK(decisions[t].replaced);
  }
}

TEST_CASE("decision log is one JSON object per line", "[kvl]") {
  Vocabulary v;
  v.add("w");
  v.add("a", true);
  v.add("b", true);
  std::vector<KvlDecision> ds;
  KvlDecision d1;
  d1.original_id = v.find("a");
  d1.emitted_id = v.find("b");
  d1.replaced = true;
  d1.reason = KvlReason::replaced;
  KvlDecision d2;
  d2.original_id = v.find("w");
  d2.emitted_id = v.find("w");
  d2.replaced = false;
  d2.reason = KvlReason::not_entity;
  ds.push_back(d1);
  ds.push_back(d2);

  std::ostringstream out;
  save_decisions(ds, v, out);
  std::istringstream in(out.str());
  std::string line;
  REQUIRE(std::getline(in, line));
  nlohmann::json j1 = nlohmann::json::parse(line);
  CHECK(j1["original"] == "a");
  CHECK(j1["emitted"] == "b");
  CHECK(j1["replaced"] == true);
  CHECK(j1["reason"] == "replaced");
  REQUIRE(std::getline(in, line));
  nlohmann::json j2 = nlohmann::json::parse(line);
  CHECK(j2["replaced"] == false);
  CHECK(j2["reason"] == "not_entity");
  CHECK_FALSE(std::getline(in, line));

  const std::string path = "kgdl_test_decisions.jsonl";
  save_decisions(ds, v, path);
  std::ifstream fin(path);
  std::string first;
  std::getline(fin, first);
  CHECK(first == out.str().substr(0, out.str().find('\n')));
  std::remove(path.c_str());
}
