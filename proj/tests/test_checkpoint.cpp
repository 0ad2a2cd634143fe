#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "kgdl/checkpoint.hpp"

using namespace kgdl;

namespace {

ModelParams sample_model(bool per_step = false) {
  return init_model(random_embeddings(11, 5, 31), 4, 32, per_step);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("checkpoints round-trip bit for bit", "[checkpoint]") {
  const ModelParams p = sample_model();
  const std::string path = "kgdl_test_model.ckpt";
  checkpoint::save(p, path);
  const ModelParams back = checkpoint::load(path);

  CHECK(back.embedding.vectors == p.embedding.vectors);
  CHECK(back.embedding.biases == p.embedding.biases);
  CHECK(back.enc.W == p.enc.W);
  CHECK(back.enc.U == p.enc.U);
  CHECK(back.enc.b == p.enc.b);
  CHECK(back.dec.W == p.dec.W);
  CHECK(back.dec.U == p.dec.U);
  CHECK(back.dec.b == p.dec.b);
  CHECK(back.W_att == p.W_att);
  CHECK(back.v_att == p.v_att);
  CHECK(back.W_out == p.W_out);
  CHECK(back.b_out == p.b_out);
  CHECK(back.W_int_in == p.W_int_in);
  CHECK(back.W_int_out == p.W_int_out);
  CHECK(back.hidden == p.hidden);
  CHECK(back.n_intents == p.n_intents);
  CHECK(back.intent_per_step == p.intent_per_step);

  // saving the reloaded model reproduces the same bytes
  const std::string path2 = "kgdl_test_model2.ckpt";
  checkpoint::save(back, path2);
  CHECK(slurp(path) == slurp(path2));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("the per-step intent flag survives the round-trip", "[checkpoint]") {
  const ModelParams p = sample_model(true);
  const std::string path = "kgdl_test_ps.ckpt";
  checkpoint::save(p, path);
  CHECK(checkpoint::load(path).intent_per_step);
  std::remove(path.c_str());
}

TEST_CASE("the file starts with the format magic", "[checkpoint]") {
  const std::string path = "kgdl_test_magic.ckpt";
  checkpoint::save(sample_model(), path);
  const std::string bytes = slurp(path);
  REQUIRE(bytes.size() > 13);
  CHECK(bytes.substr(0, 5) == "KGDL1");
  std::remove(path.c_str());
}

TEST_CASE("a missing checkpoint is a missing artifact", "[checkpoint]") {
  CHECK_THROWS_AS(checkpoint::load("no/such/model.ckpt"), ArtifactError);
}

TEST_CASE("corruption is a parse error, not a crash", "[checkpoint]") {
  const std::string path = "kgdl_test_corrupt.ckpt";
  checkpoint::save(sample_model(), path);
  const std::string good = slurp(path);

  // wrong magic
  std::string bad = good;
  bad[0] = 'X';
  spit(path, bad);
  CHECK_THROWS_AS(checkpoint::load(path), ParseError);

  // truncated payload
  spit(path, good.substr(0, good.size() - 16));
  CHECK_THROWS_AS(checkpoint::load(path), ParseError);

  // truncated inside the manifest
  spit(path, good.substr(0, 20));
  CHECK_THROWS_AS(checkpoint::load(path), ParseError);

  // manifest is not JSON
  bad = good;
  for (std::size_t i = 13; i < 20; ++i) bad[i] = '#';
  spit(path, bad);
  CHECK_THROWS_AS(checkpoint::load(path), ParseError);

  // empty file
  spit(path, "");
  CHECK_THROWS_AS(checkpoint::load(path), ParseError);
  std::remove(path.c_str());
}

TEST_CASE("loaded checkpoints behave identically", "[checkpoint]") {
  const ModelParams p = sample_model();
  const std::string path = "kgdl_test_same.ckpt";
  checkpoint::save(p, path);
  const ModelParams back = checkpoint::load(path);
  std::remove(path.c_str());
  const std::vector<int> input{4, 7, 9};
  CHECK(generate(p, input, 15) == generate(back, input, 15));
  const EncoderTrace tr1 = encode(p, input);
  const EncoderTrace tr2 = encode(back, input);
  CHECK((predict_intent(p, tr1) - predict_intent(back, tr2)).cwiseAbs().maxCoeff() == 0.0);
}
