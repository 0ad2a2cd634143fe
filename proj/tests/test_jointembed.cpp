#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <random>

#include "kgdl/jointembed.hpp"

using namespace kgdl;

namespace {

struct Instance {
  Vocabulary vocab;
  CooccurrenceMatrix cooccur{8, 3};
  KnowledgeGraph kg;
};

// Small random problem: 8 content words, a few of them KG-linked.
Instance random_instance(std::uint64_t seed) {
  Instance inst;
  for (const auto* t : {"a", "b", "c", "d", "e", "f", "g", "h"}) inst.vocab.add(t);
  inst.cooccur = CooccurrenceMatrix(inst.vocab.size(), 3);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> tok(4, inst.vocab.size() - 1);
  for (int s = 0; s < 12; ++s) {
    std::vector<int> sent(8);
    for (auto& t : sent) t = tok(rng);
    inst.cooccur.add_sentence(sent);
  }
  inst.kg.add({"a", "r", "b"});
  inst.kg.add({"c", "r", "d"});
  inst.kg.add({"a", "r", "e"});
  return inst;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("frequency damping follows (x/x_max)^a capped at one", "[jointembed]") {
  CHECK(glove_weight(25, 100, 0.75) == Catch::Approx(0.35355339059327379).epsilon(1e-14));
  CHECK(glove_weight(100, 100, 0.75) == 1.0);
  CHECK(glove_weight(250, 100, 0.75) == 1.0);
  CHECK(glove_weight(0, 100, 0.75) == 0.0);
  CHECK(glove_weight(50, 100, 1.0) == Catch::Approx(0.5));
  CHECK_THROWS_AS(glove_weight(-1, 100, 0.75), ValidationError);
}

TEST_CASE("corpus objective is zero at an exact fit", "[jointembed]") {
  Vocabulary v;
  v.add("x");
  v.add("y");
  CooccurrenceMatrix m(v.size(), 2);
  for (int k = 0; k < 10; ++k) m.add_sentence({4, 5});  // X(4,5) = 10
  EmbeddingMatrix e(v.size(), 2);
  e.biases(4) = std::log(10.0);  // w.w + b_i + b_j == log X exactly
  JointTrainConfig cfg;
  CHECK(corpus_objective(e, m, cfg) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("corpus objective matches hand-computed fixtures", "[jointembed]") {
  JointTrainConfig cfg;  // x_max 100, exponent 0.75

  // one off-diagonal entry X(4,5)=4, prediction 1.9, residual 1.9-ln4
  {
    CooccurrenceMatrix m(6, 2);
    for (int k = 0; k < 4; ++k) m.add_sentence({4, 5});
    EmbeddingMatrix e(6, 2);
    e.vectors(4, 0) = 1.0;
    e.vectors(5, 0) = 2.0;
    e.biases(4) = 0.1;
    e.biases(5) = -0.2;
    CHECK(corpus_objective(e, m, cfg) ==
          Catch::Approx(0.023603350709604832).epsilon(1e-12));
  }

  // one diagonal entry X(4,4)=4: counted once at half weight
  {
    CooccurrenceMatrix m(6, 2);
    for (int k = 0; k < 4; ++k) m.add_sentence({4, 4});
    EmbeddingMatrix e(6, 2);
    e.vectors(4, 0) = 1.0;
    e.biases(4) = 0.1;
    CHECK(corpus_objective(e, m, cfg) ==
          Catch::Approx(0.0015520811233956089).epsilon(1e-12));
  }
}

TEST_CASE("kg objective counts each linked pair once with its strength", "[jointembed]") {
  Vocabulary v;
  v.add("p", true);
  v.add("q", true);
  KnowledgeGraph kg;
  kg.add({"p", "r", "q"});
  const RelationStrength rel(kg, v, RelationMode::binary);
  EmbeddingMatrix e(v.size(), 3);
  e.vectors(4, 0) = 1.0;  // difference is the first basis vector
  CHECK(kg_objective(e, rel) == Catch::Approx(1.0).epsilon(1e-14));
  e.vectors(5, 1) = 2.0;  // difference (1,-2,0), squared norm 5
  CHECK(kg_objective(e, rel) == Catch::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("joint objective is affine in lambda", "[jointembed]") {
  const Instance inst = random_instance(11);
  const RelationStrength rel(inst.kg, inst.vocab, RelationMode::binary);
  EmbeddingMatrix e = random_embeddings(inst.vocab.size(), 4, 99);
  e.biases.setRandom();
  JointTrainConfig c0, c10;
  c0.lambda = 0.0;
  c10.lambda = 10.0;
  const double j0 = joint_objective(e, inst.cooccur, rel, c0);
  const double j10 = joint_objective(e, inst.cooccur, rel, c10);
  CHECK(j10 - j0 == Catch::Approx(10.0 * kg_objective(e, rel)).epsilon(1e-12));
  CHECK(j0 == Catch::Approx(corpus_objective(e, inst.cooccur, c0)).epsilon(1e-14));
}

TEST_CASE("analytic gradients match central differences", "[jointembed]") {
  for (const std::uint64_t seed : {3u, 4u}) {
    const Instance inst = random_instance(seed);
    const RelationStrength rel(inst.kg, inst.vocab, RelationMode::binary);
    JointTrainConfig cfg;
    cfg.lambda = 2.5;
    EmbeddingMatrix e = random_embeddings(inst.vocab.size(), 5, seed + 100);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (int i = 0; i < e.vocab_size(); ++i) e.biases(i) = u(rng);

    const EmbeddingMatrix g = joint_gradients(e, inst.cooccur, rel, cfg);
    const double h = 1e-5;
    double worst = 0.0;
    EmbeddingMatrix probe = e;
    for (int i = 0; i < e.vocab_size(); ++i) {
      for (int k = 0; k < e.dim(); ++k) {
        const double save = probe.vectors(i, k);
        probe.vectors(i, k) = save + h;
        const double jp = joint_objective(probe, inst.cooccur, rel, cfg);
        probe.vectors(i, k) = save - h;
        const double jm = joint_objective(probe, inst.cooccur, rel, cfg);
        probe.vectors(i, k) = save;
        worst = std::max(worst, rel_err(g.vectors(i, k), (jp - jm) / (2 * h)));
      }
      const double save = probe.biases(i);
      probe.biases(i) = save + h;
      const double jp = joint_objective(probe, inst.cooccur, rel, cfg);
      probe.biases(i) = save - h;
      const double jm = joint_objective(probe, inst.cooccur, rel, cfg);
      probe.biases(i) = save;
      worst = std::max(worst, rel_err(g.biases(i), (jp - jm) / (2 * h)));
    }
    INFO("seed " << seed << " worst relative error " << worst);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("gradient of the kg term is linear in lambda", "[jointembed]") {
  const Instance inst = random_instance(5);
  const RelationStrength rel(inst.kg, inst.vocab, RelationMode::binary);
  EmbeddingMatrix e = random_embeddings(inst.vocab.size(), 4, 17);
  JointTrainConfig c0, c1, c3;
  c0.lambda = 0.0;
  c1.lambda = 1.0;
  c3.lambda = 3.0;
  const EmbeddingMatrix g0 = joint_gradients(e, inst.cooccur, rel, c0);
  const EmbeddingMatrix g1 = joint_gradients(e, inst.cooccur, rel, c1);
  const EmbeddingMatrix g3 = joint_gradients(e, inst.cooccur, rel, c3);
  const Mat kg_part1 = g1.vectors - g0.vectors;
  const Mat kg_part3 = g3.vectors - g0.vectors;
  CHECK((kg_part3 - 3.0 * kg_part1).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((g1.biases - g0.biases).cwiseAbs().maxCoeff() == 0.0);  // kg term has no bias
}

TEST_CASE("training is deterministic per seed", "[jointembed]") {
  const Instance inst = random_instance(21);
  const RelationStrength rel(inst.kg, inst.vocab, RelationMode::binary);
  JointTrainConfig cfg;
  cfg.dim = 6;
  cfg.epochs = 30;
  cfg.learning_rate = 0.05;
  cfg.lambda = 1.0;
  const EmbeddingMatrix a = train_embeddings(inst.cooccur, rel, cfg);
  const EmbeddingMatrix b = train_embeddings(inst.cooccur, rel, cfg);
  CHECK(a.vectors == b.vectors);
  CHECK(a.biases == b.biases);
  cfg.seed = 43;
  const EmbeddingMatrix c = train_embeddings(inst.cooccur, rel, cfg);
  CHECK(a.vectors != c.vectors);
}

TEST_CASE("objective decreases along full-batch descent", "[jointembed]") {
  const Instance inst = random_instance(31);
  const RelationStrength rel(inst.kg, inst.vocab, RelationMode::binary);
  JointTrainConfig cfg;
  cfg.dim = 6;
  cfg.epochs = 200;
  cfg.learning_rate = 0.02;
  cfg.lambda = 0.5;
  std::vector<JointEpochLog> log;
  train_embeddings(inst.cooccur, rel, cfg, &log);
  REQUIRE(log.size() == 200);
  int drops = 0;
  for (std::size_t i = 1; i < log.size(); ++i)
    if (log[i].j < log[i - 1].j) ++drops;
  CHECK(drops >= 190);  // at least 95% of steps reduce J
  CHECK(log.back().j < log.front().j);
  for (const auto& row : log)
    CHECK(row.j == Catch::Approx(row.j_corpus + cfg.lambda * row.j_kg).epsilon(1e-12));
}

TEST_CASE("adagrad variant also reduces the objective", "[jointembed]") {
  const Instance inst = random_instance(37);
  const RelationStrength rel(inst.kg, inst.vocab, RelationMode::binary);
  JointTrainConfig cfg;
  cfg.dim = 6;
  cfg.epochs = 100;
  cfg.learning_rate = 0.05;
  cfg.lambda = 0.5;
  cfg.adagrad = true;
  std::vector<JointEpochLog> log;
  train_embeddings(inst.cooccur, rel, cfg, &log);
  CHECK(log.back().j < log.front().j);
}

TEST_CASE("lambda zero reproduces the pure corpus fit bitwise", "[jointembed]") {
  const Instance inst = random_instance(41);
  const RelationStrength rel(inst.kg, inst.vocab, RelationMode::binary);
  const RelationStrength none(KnowledgeGraph{}, inst.vocab, RelationMode::binary);
  JointTrainConfig cfg;
  cfg.dim = 5;
  cfg.epochs = 40;
  cfg.learning_rate = 0.05;
  cfg.lambda = 0.0;
  const EmbeddingMatrix with_kg = train_embeddings(inst.cooccur, rel, cfg);
  const EmbeddingMatrix without = train_embeddings(inst.cooccur, none, cfg);
  CHECK(with_kg.vectors == without.vectors);  // bit-for-bit
  CHECK(with_kg.biases == without.biases);
}

TEST_CASE("kg pull draws linked vectors together", "[jointembed]") {
  const Instance inst = random_instance(47);
  const RelationStrength rel(inst.kg, inst.vocab, RelationMode::binary);
  JointTrainConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 300;
  cfg.learning_rate = 0.002;  // keeps the stiff kg term stable
  cfg.lambda = 50.0;
  const EmbeddingMatrix e = train_embeddings(inst.cooccur, rel, cfg);
  const Vocabulary& v = inst.vocab;
  const double linked = cosine_or_zero(e.vectors.row(v.find("a")), e.vectors.row(v.find("b")));
  const double unlinked =
      cosine_or_zero(e.vectors.row(v.find("f")), e.vectors.row(v.find("g")));
  CHECK(linked > unlinked);
  CHECK(linked > 0.9);  // strong pull nearly aligns the pair
}

TEST_CASE("divergence raises a numeric error naming the epoch", "[jointembed]") {
  const Instance inst = random_instance(53);
  const RelationStrength rel(inst.kg, inst.vocab, RelationMode::binary);
  JointTrainConfig cfg;
  cfg.dim = 4;
  cfg.epochs = 50;
  cfg.learning_rate = 1e8;  // guaranteed blow-up
  cfg.lambda = 1.0;
  try {
    train_embeddings(inst.cooccur, rel, cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("embedding training log is a CSV with pinned columns", "[jointembed]") {
  const std::vector<JointEpochLog> log{{1, 3.0, 2.0, 1.0}, {2, 2.5, 2.0, 0.5}};
  const std::string path = "kgdl_test_embl.csv";
  save_training_log(log, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,J,J_C,J_S");
  std::getline(in, line);
  CHECK(line.rfind("1,3", 0) == 0);
  std::remove(path.c_str());
}

TEST_CASE("embedding text export round-trips to six decimals", "[jointembed]") {
  Vocabulary v;
  v.add("alpha");
  v.add("beta", true);
  EmbeddingMatrix e = random_embeddings(v.size(), 3, 7);
  e.biases.setLinSpaced(v.size(), -0.3, 0.4);
  const std::string path = "kgdl_test_vectors.txt";
  save_embeddings(e, v, path);
  const EmbeddingMatrix back = load_embeddings(v, path);
  CHECK((back.vectors - e.vectors).cwiseAbs().maxCoeff() < 5e-7);
  CHECK((back.biases - e.biases).cwiseAbs().maxCoeff() < 5e-7);

  // first line is `token v1 v2 v3`
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("<pad> ", 0) == 0);
  CHECK(std::count(line.begin(), line.end(), ' ') == 3);

  // a vocabulary with an uncovered token is rejected
  Vocabulary bigger = v;
  bigger.add("gamma");
  CHECK_THROWS_AS(load_embeddings(bigger, path), ValidationError);
  std::remove(path.c_str());
  std::remove((path + ".bias").c_str());
  CHECK_THROWS_AS(load_embeddings(v, "no/such/vectors.txt"), ArtifactError);
}

TEST_CASE("nearest neighbors rank by cosine with id tie-break", "[jointembed]") {
  Vocabulary v;
  for (const auto* t : {"q", "n1", "n2", "n3"}) v.add(t);
  EmbeddingMatrix e(v.size(), 2);
  e.vectors.row(v.find("q")) << 1.0, 0.0;
  e.vectors.row(v.find("n1")) << 1.0, 1.0;   // cos = 1/sqrt(2)
  e.vectors.row(v.find("n2")) << 2.0, 0.0;   // cos = 1
  e.vectors.row(v.find("n3")) << 0.0, 1.0;   // cos = 0
  const auto nn = nearest_neighbors(e, v, "q", 2);
  REQUIRE(nn.size() == 2);
  CHECK(nn[0].first == "n2");
  CHECK(nn[0].second == Catch::Approx(1.0));
  CHECK(nn[1].first == "n1");
  CHECK(nn[1].second == Catch::Approx(1.0 / std::sqrt(2.0)));
  CHECK_THROWS_AS(nearest_neighbors(e, v, "missing", 2), LookupError);

  // zero rows tie at cosine 0: reserved ids win by ascending id
  const auto ties = nearest_neighbors(e, v, "n3", 3);
  REQUIRE(ties.size() == 3);
  CHECK(ties[0].first == "n1");  // the only positive-cosine neighbor
  CHECK(ties[1].first == "<pad>");
  CHECK(ties[2].first == "<sos>");
  CHECK(ties[1].second == 0.0);
}

TEST_CASE("config validation rejects out-of-range settings", "[jointembed]") {
  JointTrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.dim = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.weight_exponent = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.lambda = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
