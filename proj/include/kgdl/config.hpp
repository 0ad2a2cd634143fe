#pragma once

#include "kgdl/cooccur.hpp"
#include "kgdl/jointembed.hpp"
#include "kgdl/train.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <string>

namespace kgdl {

/// Ablation variants: glove vs joint embeddings, with the intent and entity
/// loss terms switched per tag.
enum class Variant {
  s2s_glove,
  s2s_je,
  s2s_intent_je,
  s2s_intent_glove,
  s2s_intent_je_el,
};

inline const char* variant_tag(Variant v) {
  switch (v) {
    case Variant::s2s_glove: return "S2S+glove";
    case Variant::s2s_je: return "S2S+JE";
    case Variant::s2s_intent_je: return "S2S+Intent+JE";
    case Variant::s2s_intent_glove: return "S2S+Intent+glove";
    case Variant::s2s_intent_je_el: return "S2S+Intent+JE+EL";
  }
  return "?";
}

/// Filesystem-safe form of the tag.
inline const char* variant_slug(Variant v) {
  switch (v) {
    case Variant::s2s_glove: return "s2s_glove";
    case Variant::s2s_je: return "s2s_je";
    case Variant::s2s_intent_je: return "s2s_intent_je";
    case Variant::s2s_intent_glove: return "s2s_intent_glove";
    case Variant::s2s_intent_je_el: return "s2s_intent_je_el";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (const Variant v : {Variant::s2s_glove, Variant::s2s_je, Variant::s2s_intent_je,
                          Variant::s2s_intent_glove, Variant::s2s_intent_je_el})
    if (s == variant_tag(v) || s == variant_slug(v)) return v;
  throw ValidationError("unknown variant: \"" + s + "\"");
}

inline bool variant_uses_joint(Variant v) {
  return v == Variant::s2s_je || v == Variant::s2s_intent_je || v == Variant::s2s_intent_je_el;
}

inline LossMask variant_mask(Variant v) {
  LossMask m;
  m.intent = v == Variant::s2s_intent_je || v == Variant::s2s_intent_glove ||
             v == Variant::s2s_intent_je_el;
  m.entity = v == Variant::s2s_intent_je_el;
  return m;
}

inline const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = {Variant::s2s_glove, Variant::s2s_je,
                                         Variant::s2s_intent_je, Variant::s2s_intent_glove,
                                         Variant::s2s_intent_je_el};
  return v;
}

struct PipelineConfig {
  std::string train_path, dev_path, test_path;
  int window = 15;
  RelationMode relation_mode = RelationMode::context_count;
  bool harmonic_window = false;
  int min_count = 1;
  JointTrainConfig embedding;
  TrainConfig model;
  bool intent_per_step = false;
  int max_len = 60;
  Variant variant = Variant::s2s_intent_je_el;
  bool kvl = true;
  std::uint64_t seed = 42;
  std::string out_dir = "artifacts";

  void apply_seed(std::uint64_t s) {
    seed = s;
    embedding.seed = s;
    model.seed = s;
  }
};

/// Single JSON document; every field optional, defaulting to the standard
/// hyperparameters. Unknown keys are ignored.
inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("malformed config " + path + ": " + e.what());
  }
  PipelineConfig c;
  try {
    if (j.contains("data")) {
      const auto& d = j["data"];
      c.train_path = d.value("train", "");
      c.dev_path = d.value("dev", "");
      c.test_path = d.value("test", "");
    }
    c.window = j.value("window", c.window);
    if (j.contains("relation_mode")) {
      const std::string m = j["relation_mode"].get<std::string>();
      if (m == "binary") {
        c.relation_mode = RelationMode::binary;
      } else if (m == "context_count") {
        c.relation_mode = RelationMode::context_count;
      } else {
        throw ValidationError("config: unknown relation_mode \"" + m + "\"");
      }
    }
    c.harmonic_window = j.value("harmonic_window", c.harmonic_window);
    c.min_count = j.value("min_count", c.min_count);
    if (j.contains("embedding")) {
      const auto& e = j["embedding"];
      c.embedding.dim = e.value("dim", c.embedding.dim);
      c.embedding.epochs = e.value("epochs", c.embedding.epochs);
      c.embedding.learning_rate = e.value("learning_rate", c.embedding.learning_rate);
      c.embedding.weight_decay = e.value("weight_decay", c.embedding.weight_decay);
      c.embedding.lambda = e.value("lambda", c.embedding.lambda);
      c.embedding.x_max = e.value("x_max", c.embedding.x_max);
      c.embedding.weight_exponent = e.value("weight_exponent", c.embedding.weight_exponent);
      c.embedding.adagrad = e.value("adagrad", c.embedding.adagrad);
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      c.model.epochs = m.value("epochs", c.model.epochs);
      c.model.batch_size = m.value("batch_size", c.model.batch_size);
      c.model.encoder_lr = m.value("encoder_lr", c.model.encoder_lr);
      c.model.decoder_lr = m.value("decoder_lr", c.model.decoder_lr);
      c.model.grad_clip_norm = m.value("grad_clip_norm", c.model.grad_clip_norm);
      c.model.teacher_forcing = m.value("teacher_forcing", c.model.teacher_forcing);
      c.model.fine_tune_embeddings =
          m.value("fine_tune_embeddings", c.model.fine_tune_embeddings);
      c.intent_per_step = m.value("intent_per_step", c.intent_per_step);
      c.max_len = m.value("max_len", c.max_len);
    }
    if (j.contains("variant")) c.variant = parse_variant(j["variant"].get<std::string>());
    c.kvl = j.value("kvl", c.kvl);
    c.out_dir = j.value("out", c.out_dir);
    if (j.contains("seed")) c.apply_seed(j["seed"].get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad config value in " + path + ": " + e.what());
  }
  return c;
}

}  // namespace kgdl
