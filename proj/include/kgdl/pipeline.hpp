#pragma once

#include "kgdl/checkpoint.hpp"
#include "kgdl/config.hpp"
#include "kgdl/metrics.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace kgdl {

namespace paths {
inline std::string norm(const PipelineConfig& c, const std::string& split) {
  return (std::filesystem::path(c.out_dir) / (split + ".norm.json")).string();
}
inline std::string vocab(const PipelineConfig& c) {
  return (std::filesystem::path(c.out_dir) / "vocab.txt").string();
}
inline std::string kg(const PipelineConfig& c) {
  return (std::filesystem::path(c.out_dir) / "kg.tsv").string();
}
inline std::string cooccur(const PipelineConfig& c) {
  return (std::filesystem::path(c.out_dir) / "cooccur.txt").string();
}
inline std::string embeddings(const PipelineConfig& c, bool joint) {
  return (std::filesystem::path(c.out_dir) /
          (std::string("embeddings_") + (joint ? "joint" : "glove") + ".txt"))
      .string();
}
inline std::string embed_log(const PipelineConfig& c, bool joint) {
  return (std::filesystem::path(c.out_dir) /
          (std::string("embed_log_") + (joint ? "joint" : "glove") + ".csv"))
      .string();
}
inline std::string model(const PipelineConfig& c, Variant v) {
  return (std::filesystem::path(c.out_dir) / ("model_" + std::string(variant_slug(v)) + ".ckpt"))
      .string();
}
inline std::string train_log(const PipelineConfig& c, Variant v) {
  return (std::filesystem::path(c.out_dir) /
          ("train_log_" + std::string(variant_slug(v)) + ".csv"))
      .string();
}
inline std::string report(const PipelineConfig& c, Variant v, bool kvl) {
  return (std::filesystem::path(c.out_dir) /
          ("report_" + std::string(variant_slug(v)) + (kvl ? "_kvl" : "") + ".json"))
      .string();
}
inline std::string decisions(const PipelineConfig& c, Variant v) {
  return (std::filesystem::path(c.out_dir) /
          ("decisions_" + std::string(variant_slug(v)) + ".jsonl"))
      .string();
}
inline std::string ablation_csv(const PipelineConfig& c) {
  return (std::filesystem::path(c.out_dir) / "ablation.csv").string();
}
inline std::string ablation_txt(const PipelineConfig& c) {
  return (std::filesystem::path(c.out_dir) / "ablation.txt").string();
}
}  // namespace paths

namespace detail {

inline void ensure_out_dir(const PipelineConfig& c) {
  std::filesystem::create_directories(c.out_dir);
}

inline nlohmann::json config_echo(const PipelineConfig& c) {
  return {{"variant", variant_tag(c.variant)},
          {"kvl", c.kvl},
          {"seed", c.seed},
          {"window", c.window},
          {"min_count", c.min_count},
          {"relation_mode",
           c.relation_mode == RelationMode::binary ? "binary" : "context_count"},
          {"embedding",
           {{"dim", c.embedding.dim},
            {"epochs", c.embedding.epochs},
            {"learning_rate", c.embedding.learning_rate},
            {"weight_decay", c.embedding.weight_decay},
            {"lambda", c.embedding.lambda},
            {"x_max", c.embedding.x_max},
            {"weight_exponent", c.embedding.weight_exponent},
            {"adagrad", c.embedding.adagrad}}},
          {"model",
           {{"epochs", c.model.epochs},
            {"batch_size", c.model.batch_size},
            {"encoder_lr", c.model.encoder_lr},
            {"decoder_lr", c.model.decoder_lr},
            {"grad_clip_norm", c.model.grad_clip_norm},
            {"teacher_forcing", c.model.teacher_forcing},
            {"fine_tune_embeddings", c.model.fine_tune_embeddings},
            {"intent_per_step", c.intent_per_step},
            {"max_len", c.max_len}}}};
}

inline std::string join_tokens(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::string out;
  for (const int id : ids) {
    if (id < Vocabulary::kReservedCount) continue;
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

inline Dataset load_eval_split(const PipelineConfig& c) {
  if (!c.test_path.empty() || std::filesystem::exists(paths::norm(c, "test")))
    return load_normalized(paths::norm(c, "test"));
  if (!c.dev_path.empty() || std::filesystem::exists(paths::norm(c, "dev")))
    return load_normalized(paths::norm(c, "dev"));
  throw ArtifactError("no evaluation split found under " + c.out_dir);
}

inline void print_split_stats(std::ostream& out, const std::string& name, const Dataset& ds,
                              const Vocabulary& vocab) {
  const DatasetStats s = dataset_stats(ds, vocab);
  out << name << ": " << s.dialogues << " dialogues, " << s.avg_utterances_per_dialogue
      << " utterances/dialogue, " << s.avg_tokens_per_utterance << " tokens/utterance\n";
}

}  // namespace detail

/// Load the raw datasets, build the vocabulary and merged KG, and persist
/// the normalized artifacts everything downstream consumes.
inline void cmd_preprocess(const PipelineConfig& c, std::ostream& out) {
  if (c.train_path.empty()) throw ValidationError("preprocess: no training dataset configured");
  detail::ensure_out_dir(c);
  Dataset train = load_dataset(c.train_path);
  std::vector<std::string> intents;
  for (const IntentLabel& l : train.intents) intents.push_back(l.name);

  KnowledgeGraph merged = train.global_kg;
  Dataset dev, test;
  const bool have_dev = !c.dev_path.empty();
  const bool have_test = !c.test_path.empty();
  if (have_dev) {
    dev = load_dataset(c.dev_path, intents);
    merged.merge(dev.global_kg);
  }
  if (have_test) {
    test = load_dataset(c.test_path, intents);
    merged.merge(test.global_kg);
  }

  const Vocabulary vocab = build_vocabulary(train.dialogues, merged, c.min_count);
  save_normalized(train, paths::norm(c, "train"));
  if (have_dev) save_normalized(dev, paths::norm(c, "dev"));
  if (have_test) save_normalized(test, paths::norm(c, "test"));
  vocab.save(paths::vocab(c));
  merged.save_tsv(paths::kg(c));

  detail::print_split_stats(out, "train", train, vocab);
  if (have_dev) detail::print_split_stats(out, "dev", dev, vocab);
  if (have_test) detail::print_split_stats(out, "test", test, vocab);
  out << "vocabulary: " << vocab.size() - Vocabulary::kReservedCount << " tokens (+"
      << Vocabulary::kReservedCount << " reserved)\n"
      << "entities: " << merged.entities().size() << "\n"
      << "triples: " << merged.size() << "\n";
}

/// Count within-window co-occurrences over the training pairs.
inline void cmd_cooccur(const PipelineConfig& c, std::ostream& out) {
  detail::ensure_out_dir(c);
  const Vocabulary vocab = Vocabulary::load(paths::vocab(c));
  const Dataset train = load_normalized(paths::norm(c, "train"));
  const KnowledgeGraph kg = KnowledgeGraph::load_tsv(paths::kg(c));
  const auto pairs = build_pairs(train.dialogues, vocab);
  CooccurrenceMatrix m(vocab.size(), c.window, c.harmonic_window);
  m.add_corpus(pairs);
  m.save(paths::cooccur(c));
  const CooccurrenceStats s = cooccurrence_stats(m, kg, vocab);
  out << "unique co-occurrences: " << s.nonzeros << "\n"
      << "triples in context: " << s.triples_in_context << "\n"
      << "max triple co-occurrence: " << s.max_linked_cooccurrence << "\n";
}

namespace detail {

inline void train_embeddings_kind(const PipelineConfig& c, bool joint, std::ostream& out) {
  const Vocabulary vocab = Vocabulary::load(paths::vocab(c));
  const KnowledgeGraph kg = KnowledgeGraph::load_tsv(paths::kg(c));
  const CooccurrenceMatrix m = CooccurrenceMatrix::load(paths::cooccur(c));
  if (m.vocab_size() != vocab.size())
    throw DimensionError("cooccur artifact does not match the vocabulary");
  JointTrainConfig cfg = c.embedding;
  if (!joint) cfg.lambda = 0.0;
  const RelationStrength rel(kg, vocab, c.relation_mode,
                             c.relation_mode == RelationMode::context_count ? &m : nullptr);
  out << "training " << (joint ? "joint" : "glove") << " embeddings: dim=" << cfg.dim
      << " epochs=" << cfg.epochs << " lr=" << cfg.learning_rate << " lambda=" << cfg.lambda
      << " weight_decay=" << cfg.weight_decay << "\n";
  std::vector<JointEpochLog> log;
  const EmbeddingMatrix e = train_embeddings(m, rel, cfg, &log);
  save_embeddings(e, vocab, paths::embeddings(c, joint));
  save_training_log(log, paths::embed_log(c, joint));
  if (!log.empty())
    out << "final J=" << log.back().j << " J_C=" << log.back().j_corpus
        << " J_S=" << log.back().j_kg << "\n";
}

}  // namespace detail

inline void cmd_train_embeddings(const PipelineConfig& c, std::ostream& out) {
  detail::ensure_out_dir(c);
  detail::train_embeddings_kind(c, variant_uses_joint(c.variant), out);
}

inline void cmd_train_model(const PipelineConfig& c, std::ostream& out) {
  detail::ensure_out_dir(c);
  const Vocabulary vocab = Vocabulary::load(paths::vocab(c));
  const Dataset train = load_normalized(paths::norm(c, "train"));
  const EmbeddingMatrix emb =
      load_embeddings(vocab, paths::embeddings(c, variant_uses_joint(c.variant)));
  const auto pairs = build_pairs(train.dialogues, vocab);
  if (pairs.empty()) throw ValidationError("train-model: training set has no assistant turns");
  ModelParams model = init_model(emb, static_cast<int>(train.intents.size()), c.model.seed,
                                 c.intent_per_step);
  TrainConfig cfg = c.model;
  cfg.mask = variant_mask(c.variant);
  out << "training " << variant_tag(c.variant) << ": " << pairs.size() << " pairs, epochs="
      << cfg.epochs << " batch=" << cfg.batch_size << " enc_lr=" << cfg.encoder_lr
      << " dec_lr=" << cfg.decoder_lr << " clip=" << cfg.grad_clip_norm
      << " intent=" << (cfg.mask.intent ? "on" : "off")
      << " entity=" << (cfg.mask.entity ? "on" : "off") << "\n";
  std::vector<TrainEpochLog> log;
  model = train_model(std::move(model), pairs, vocab, cfg, &log);
  checkpoint::save(model, paths::model(c, c.variant));
  save_training_log(log, paths::train_log(c, c.variant));
  if (!log.empty())
    out << "final loss: total=" << log.back().loss.total
        << " vocab=" << log.back().loss.vocab_loss << " intent=" << log.back().loss.intent_loss
        << " entity=" << log.back().loss.entity_loss << " intent_acc=" << log.back().intent_acc
        << "\n";
}

namespace detail {

inline std::vector<AblationRow> read_ablation_rows(const std::string& path) {
  std::vector<AblationRow> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) continue;
    AblationRow r;
    r.model = line.substr(0, c1);
    r.bleu = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    r.bleu_kvl = std::stod(line.substr(c2 + 1));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_ablation_rows(const PipelineConfig& c, const std::vector<AblationRow>& rows) {
  std::ofstream out(paths::ablation_csv(c));
  if (!out) throw ArtifactError("cannot write " + paths::ablation_csv(c));
  out << "model,bleu,bleu_kvl\n";
  out.precision(17);
  for (const AblationRow& r : rows) out << r.model << ',' << r.bleu << ',' << r.bleu_kvl << '\n';
  std::ofstream txt(paths::ablation_txt(c));
  if (!txt) throw ArtifactError("cannot write " + paths::ablation_txt(c));
  txt << render_ablation_table(rows);
}

inline void upsert_ablation_row(const PipelineConfig& c, const AblationRow& row) {
  auto rows = read_ablation_rows(paths::ablation_csv(c));
  auto it = std::find_if(rows.begin(), rows.end(),
                         [&](const AblationRow& r) { return r.model == row.model; });
  if (it == rows.end()) {
    rows.push_back(row);
  } else {
    *it = row;
  }
  write_ablation_rows(c, rows);
}

}  // namespace detail

/// Score the variant's checkpoint on the evaluation split, with and without
/// constrained decoding, and fold the result into the ablation table.
inline AblationRow cmd_evaluate(const PipelineConfig& c, std::ostream& out) {
  detail::ensure_out_dir(c);
  const Vocabulary vocab = Vocabulary::load(paths::vocab(c));
  const ModelParams model = checkpoint::load(paths::model(c, c.variant));
  if (model.vocab_size() != vocab.size())
    throw DimensionError("checkpoint vocabulary size does not match vocab.txt");
  const Dataset eval_ds = detail::load_eval_split(c);

  const EvaluationReport plain =
      evaluate(model, eval_ds.dialogues, vocab, false, c.max_len, variant_tag(c.variant));
  std::vector<KvlDecision> decisions;
  const EvaluationReport with_kvl = evaluate(model, eval_ds.dialogues, vocab, true, c.max_len,
                                             variant_tag(c.variant), &decisions);
  const nlohmann::json echo = detail::config_echo(c);
  save_report(plain, paths::report(c, c.variant, false), echo);
  save_report(with_kvl, paths::report(c, c.variant, true), echo);
  save_decisions(decisions, vocab, paths::decisions(c, c.variant));

  AblationRow row{variant_tag(c.variant), plain.bleu, with_kvl.bleu};
  detail::upsert_ablation_row(c, row);
  out << variant_tag(c.variant) << ": BLEU=" << plain.bleu << " BLEU+KVL=" << with_kvl.bleu
      << " emb_avg=" << plain.embedding_average << " vec_ext=" << plain.vector_extrema
      << " greedy=" << plain.greedy_matching << " replacements=" << with_kvl.kvl_replacements
      << "\n";
  return row;
}

/// Run all five variants under one seed and emit the combined table.
inline void cmd_ablate(const PipelineConfig& c, std::ostream& out) {
  detail::ensure_out_dir(c);
  for (const bool joint : {false, true})
    if (!std::filesystem::exists(paths::embeddings(c, joint)))
      detail::train_embeddings_kind(c, joint, out);
  std::vector<AblationRow> rows;
  for (const Variant v : all_variants()) {
    PipelineConfig vc = c;
    vc.variant = v;
    cmd_train_model(vc, out);
    rows.push_back(cmd_evaluate(vc, out));
  }
  detail::write_ablation_rows(c, rows);
  out << "\n" << render_ablation_table(rows);
}

/// Line-oriented REPL over a trained checkpoint. The context accumulates
/// turn by turn exactly as during training.
inline void cmd_chat(const PipelineConfig& c, std::istream& in, std::ostream& out) {
  const Vocabulary vocab = Vocabulary::load(paths::vocab(c));
  const ModelParams model = checkpoint::load(paths::model(c, c.variant));
  if (model.vocab_size() != vocab.size())
    throw DimensionError("checkpoint vocabulary size does not match vocab.txt");
  const Dataset scenarios = detail::load_eval_split(c);
  if (scenarios.dialogues.empty()) throw ValidationError("chat: no scenarios available");

  std::size_t scenario = 0;
  std::vector<int> context;
  auto registry = [&] { return make_registry(vocab, scenarios.dialogues[scenario].local_kg); };
  out << "loaded " << variant_tag(c.variant) << "; " << scenarios.dialogues.size()
      << " scenarios. /scenario <n>, /reset, /intent, /quit\n"
      << "scenario 0: " << scenarios.dialogues[0].local_kg.size() << " local triples, intent "
      << scenarios.dialogues[0].intent.name << "\n";

  std::string line;
  while (out << "> " << std::flush, std::getline(in, line)) {
    if (line == "/quit") break;
    if (line == "/reset") {
      context.clear();
      out << "context cleared\n";
      continue;
    }
    if (line == "/intent") {
      if (context.empty()) {
        out << "no context yet\n";
        continue;
      }
      const Vec scores = detail::softmax(predict_intent(model, encode(model, context)));
      for (const IntentLabel& l : scenarios.intents)
        out << "  " << l.name << ": " << scores(l.id) << "\n";
      continue;
    }
    if (line.rfind("/scenario", 0) == 0) {
      std::istringstream ss(line.substr(9));
      std::size_t k = 0;
      if (!(ss >> k) || k >= scenarios.dialogues.size()) {
        out << "usage: /scenario <0.." << scenarios.dialogues.size() - 1 << ">\n";
        continue;
      }
      scenario = k;
      context.clear();
      out << "scenario " << k << ": " << scenarios.dialogues[k].local_kg.size()
          << " local triples, intent " << scenarios.dialogues[k].intent.name
          << "; context cleared\n";
      continue;
    }
    const auto toks = tokenize(line);
    if (toks.empty()) continue;
    const auto ids = vocab.encode(toks);
    const long unk = std::count(ids.begin(), ids.end(), Vocabulary::kUnk);
    if (unk > 0) out << "note: " << unk << " token(s) out of vocabulary, using <unk>\n";
    context.insert(context.end(), ids.begin(), ids.end());

    std::vector<int> reply;
    std::vector<KvlDecision> decisions;
    if (c.kvl) {
      auto [r, d] = decode_with_kvl(model, context, registry(), c.max_len);
      reply = std::move(r);
      decisions = std::move(d);
    } else {
      reply = generate(model, context, c.max_len);
    }
    out << "assistant: " << detail::join_tokens(reply, vocab) << "\n";
    const Vec scores = detail::softmax(predict_intent(model, encode(model, context)));
    int best;
    scores.maxCoeff(&best);
    for (const IntentLabel& l : scenarios.intents)
      if (l.id == best) out << "intent: " << l.name << " (" << scores(best) << ")\n";
    for (const KvlDecision& d : decisions)
      if (d.replaced)
        out << "kvl: " << vocab.token(d.original_id) << " -> " << vocab.token(d.emitted_id)
            << "\n";
    for (const int id : reply)
      if (id >= Vocabulary::kReservedCount) context.push_back(id);
  }
}

}  // namespace kgdl
