#pragma once

#include "kgdl/model.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace kgdl {

/// Entity id sets for constrained decoding: every entity the model knows,
/// and the subset present in the current dialogue's KG.
struct EntityRegistry {
  std::unordered_set<int> global_entities;
  std::unordered_set<int> local_entities;
  int vocab_size = 0;

  EntityRegistry(std::unordered_set<int> global, std::unordered_set<int> local, int vocab)
      : global_entities(std::move(global)), local_entities(std::move(local)), vocab_size(vocab) {
    for (const int id : local_entities)
      if (!global_entities.count(id))
        throw ValidationError("EntityRegistry: local entity id " + std::to_string(id) +
                              " not in the global set");
  }
};

/// Registry for one dialogue. Local KG values that the vocabulary does not
/// know as entities are dropped; the model could never emit them anyway.
inline EntityRegistry make_registry(const Vocabulary& vocab, const KnowledgeGraph& local_kg) {
  std::unordered_set<int> global;
  for (const int id : vocab.entity_ids()) global.insert(id);
  std::unordered_set<int> local;
  for (const std::string& e : local_kg.entities()) {
    const int id = vocab.find(e);
    if (id >= 0 && global.count(id)) local.insert(id);
  }
  return EntityRegistry(std::move(global), std::move(local), vocab.size());
}

enum class KvlReason { not_entity, in_local, replaced, local_empty_passthrough };

inline const char* to_string(KvlReason r) {
  switch (r) {
    case KvlReason::not_entity: return "not_entity";
    case KvlReason::in_local: return "in_local";
    case KvlReason::replaced: return "replaced";
    case KvlReason::local_empty_passthrough: return "local_empty_passthrough";
  }
  return "?";
}

struct KvlDecision {
  int original_id = -1;
  int emitted_id = -1;
  bool replaced = false;
  KvlReason reason = KvlReason::not_entity;
};

/// Keep the argmax unless it names a global entity missing from the local
/// KG; then emit the most probable local entity instead. Ties go to the
/// lowest token id. An empty local KG never suppresses anything.
inline KvlDecision constrain(const Vec& dist, const EntityRegistry& reg) {
  if (dist.size() != reg.vocab_size)
    throw DimensionError("constrain: distribution length " + std::to_string(dist.size()) +
                         " != vocabulary size " + std::to_string(reg.vocab_size));
  KvlDecision d;
  int best;
  dist.maxCoeff(&best);  // first maximal index, so ties already go to the lowest id
  d.original_id = best;
  if (!reg.global_entities.count(best)) {
    d.emitted_id = best;
    d.reason = KvlReason::not_entity;
  } else if (reg.local_entities.count(best)) {
    d.emitted_id = best;
    d.reason = KvlReason::in_local;
  } else if (!reg.local_entities.empty()) {
    int pick = -1;
    double p = -1.0;
    for (int id = 0; id < reg.vocab_size; ++id) {
      if (!reg.local_entities.count(id)) continue;
      if (dist(id) > p) {
        p = dist(id);
        pick = id;
      }
    }
    d.emitted_id = pick;
    d.reason = KvlReason::replaced;
  } else {
    d.emitted_id = best;
    d.reason = KvlReason::local_empty_passthrough;
  }
  d.replaced = d.emitted_id != d.original_id;
  return d;
}

/// Greedy decoding with the constraint applied at every step; the emitted
/// (possibly replaced) token is what the next step sees.
inline std::pair<std::vector<int>, std::vector<KvlDecision>> decode_with_kvl(
    const ModelParams& params, const std::vector<int>& input_ids, const EntityRegistry& reg,
    int max_len) {
  if (max_len < 1) throw ValidationError("decode_with_kvl: max_len must be >= 1");
  const EncoderTrace tr = encode(params, input_ids);
  Vec s = tr.final_h, cell = tr.final_c;
  int prev = Vocabulary::kSos;
  std::vector<int> out;
  std::vector<KvlDecision> decisions;
  for (int t = 0; t < max_len; ++t) {
    const DecoderStep step = decode_step(params, prev, s, cell, tr);
    const KvlDecision d = constrain(step.p, reg);
    out.push_back(d.emitted_id);
    decisions.push_back(d);
    if (d.emitted_id == Vocabulary::kEos) break;
    prev = d.emitted_id;
    s = step.s;
    cell = step.cell;
  }
  return {out, decisions};
}

/// One JSON object per decision, one per line.
inline void save_decisions(const std::vector<KvlDecision>& decisions, const Vocabulary& vocab,
                           std::ostream& out) {
  for (const KvlDecision& d : decisions) {
    nlohmann::json j = {{"original", vocab.token(d.original_id)},
                        {"emitted", vocab.token(d.emitted_id)},
                        {"replaced", d.replaced},
                        {"reason", to_string(d.reason)}};
    out << j.dump() << '\n';
  }
}

inline void save_decisions(const std::vector<KvlDecision>& decisions, const Vocabulary& vocab,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write decision log: " + path);
  save_decisions(decisions, vocab, out);
}

}  // namespace kgdl
