#pragma once

#include "kgdl/kg.hpp"
#include "kgdl/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace kgdl {

enum class Speaker { driver, assistant };

struct Turn {
  Speaker speaker;
  std::vector<std::string> utterance;  // tokens

  bool operator==(const Turn&) const = default;
};

struct IntentLabel {
  int id = -1;
  std::string name;

  bool operator==(const IntentLabel&) const = default;
};

struct Dialogue {
  std::vector<Turn> turns;  // alternating, driver first
  IntentLabel intent;
  KnowledgeGraph local_kg;

  bool operator==(const Dialogue&) const = default;
};

/// Bijective token <-> id map with four reserved slots and a per-token
/// entity flag (set for tokens that are global-KG entities).
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReservedCount = 4;

  Vocabulary() {
    add("<pad>");
    add("<sos>");
    add("<eos>");
    add("<unk>");
  }

  int add(const std::string& token, bool entity = false) {
    auto it = ids_.find(token);
    if (it != ids_.end()) {
      if (entity) entity_[it->second] = 1;
      return it->second;
    }
    const int id = static_cast<int>(tokens_.size());
    ids_.emplace(token, id);
    tokens_.push_back(token);
    entity_.push_back(entity ? 1 : 0);
    return id;
  }

  /// -1 when absent.
  int find(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? -1 : it->second;
  }

  /// UNK fallback for out-of-vocabulary tokens.
  int id_or_unk(const std::string& token) const {
    const int id = find(token);
    return id < 0 ? kUnk : id;
  }

  const std::string& token(int id) const {
    if (id < 0 || id >= static_cast<int>(tokens_.size()))
      throw LookupError("Vocabulary: id out of range: " + std::to_string(id));
    return tokens_[id];
  }

  bool is_entity(int id) const { return id >= 0 && id < size() && entity_[id] != 0; }
  bool is_reserved(int id) const { return id >= 0 && id < kReservedCount; }

  int size() const { return static_cast<int>(tokens_.size()); }

  std::vector<int> encode(const std::vector<std::string>& toks) const {
    std::vector<int> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(id_or_unk(t));
    return out;
  }

  std::vector<std::string> decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (const int id : ids) out.push_back(token(id));
    return out;
  }

  std::vector<int> entity_ids() const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
      if (entity_[i]) out.push_back(i);
    return out;
  }

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && entity_ == other.entity_;
  }

  /// One "token\tflag" line per id, in id order (reserved rows first).
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ArtifactError("cannot write vocabulary: " + path);
    for (int i = 0; i < size(); ++i) out << tokens_[i] << '\t' << int(entity_[i]) << '\n';
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ArtifactError("cannot open vocabulary: " + path);
    Vocabulary v;
    v.tokens_.clear();
    v.ids_.clear();
    v.entity_.clear();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto tab = line.rfind('\t');
      if (tab == std::string::npos)
        throw ParseError("bad vocabulary line " + std::to_string(lineno) + " in " + path);
      const std::string tok = line.substr(0, tab);
      const bool ent = line.substr(tab + 1) == "1";
      const int id = static_cast<int>(v.tokens_.size());
      v.ids_.emplace(tok, id);
      v.tokens_.push_back(tok);
      v.entity_.push_back(ent ? 1 : 0);
    }
    if (v.size() < kReservedCount || v.tokens_[kPad] != "<pad>" || v.tokens_[kUnk] != "<unk>")
      throw ParseError("vocabulary file lacks reserved tokens: " + path);
    return v;
  }

 private:
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> tokens_;
  std::vector<char> entity_;
};

/// One (concatenated context -> assistant response) training example.
struct TrainingPair {
  std::vector<int> input;   // [i_1; o_1; ...; o_{k-1}; i_k]
  std::vector<int> target;  // o_k, EOS-terminated
  IntentLabel intent;
  int dialogue_ref = -1;
};

/// Every assistant turn yields one pair whose input is everything said
/// strictly before it, in order.
inline std::vector<TrainingPair> build_pairs(const Dialogue& d, const Vocabulary& vocab,
                                             int dialogue_ref = -1) {
  std::vector<TrainingPair> out;
  std::vector<int> context;
  for (const Turn& turn : d.turns) {
    const std::vector<int> ids = vocab.encode(turn.utterance);
    if (turn.speaker == Speaker::assistant) {
      TrainingPair p;
      p.input = context;
      p.target = ids;
      p.target.push_back(Vocabulary::kEos);
      p.intent = d.intent;
      p.dialogue_ref = dialogue_ref;
      out.push_back(std::move(p));
    }
    context.insert(context.end(), ids.begin(), ids.end());
  }
  return out;
}

inline std::vector<TrainingPair> build_pairs(const std::vector<Dialogue>& dialogues,
                                             const Vocabulary& vocab) {
  std::vector<TrainingPair> out;
  for (std::size_t i = 0; i < dialogues.size(); ++i) {
    auto pairs = build_pairs(dialogues[i], vocab, static_cast<int>(i));
    out.insert(out.end(), std::make_move_iterator(pairs.begin()),
               std::make_move_iterator(pairs.end()));
  }
  return out;
}

/// Corpus tokens meeting min_count, every KG entity regardless of count,
/// and the reserved rows. Ids are assigned in lexicographic order so the
/// same inputs always produce the same vocabulary.
inline Vocabulary build_vocabulary(const std::vector<Dialogue>& dialogues,
                                   const KnowledgeGraph& kg, int min_count = 1) {
  if (min_count < 1) throw ValidationError("build_vocabulary: min_count must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const Dialogue& d : dialogues)
    for (const Turn& t : d.turns)
      for (const std::string& tok : t.utterance) ++counts[tok];
  Vocabulary v;
  for (const auto& [tok, n] : counts)
    if (n >= static_cast<std::size_t>(min_count)) v.add(tok, kg.has_entity(tok));
  for (const std::string& e : kg.entities()) v.add(e, true);
  return v;
}

struct Dataset {
  std::vector<Dialogue> dialogues;
  KnowledgeGraph global_kg;
  std::vector<IntentLabel> intents;  // sorted by name, ids dense from 0
};

namespace detail {

/// Attribute names for the comma-separated parts of a KB value. Simple
/// values keep their column name; the in-car weather forecasts split into
/// condition plus low/high temperature attributes.
inline std::vector<std::string> compound_attributes(const std::string& raw_value,
                                                    const std::string& column) {
  std::size_t parts = 1;
  for (const char c : raw_value)
    if (c == ',') ++parts;
  if (parts == 1) return {column};
  std::vector<std::string> attrs;
  std::size_t begin = 0;
  int extra = 0;
  for (std::size_t k = 0; k < parts; ++k) {
    std::size_t end = raw_value.find(',', begin);
    if (end == std::string::npos) end = raw_value.size();
    std::string part = raw_value.substr(begin, end - begin);
    begin = end + 1;
    while (!part.empty() && std::isspace(static_cast<unsigned char>(part.front())))
      part.erase(part.begin());
    std::string low;
    for (const char c : part) low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (low.rfind("low of ", 0) == 0) {
      attrs.push_back("low_temperature");
    } else if (low.rfind("high of ", 0) == 0) {
      attrs.push_back("high_temperature");
    } else {
      attrs.push_back(extra == 0 ? "weather_condition"
                                 : "weather_condition_" + std::to_string(extra + 1));
      ++extra;
    }
  }
  return attrs;
}

inline bool kb_value_usable(const nlohmann::json& v) {
  if (!v.is_string()) return false;
  const std::string s = v.get<std::string>();
  if (s.empty() || s == "-") return false;
  for (const char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) return true;
  return false;
}

inline bool word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

/// Replace exact surface mentions of KB values with their canonical tokens.
/// Longest surface first; matches must sit on word boundaries (underscore
/// counts as a word character so earlier replacements are never re-matched).
inline std::string canonicalize_mentions(
    const std::string& lower_text,
    const std::vector<std::pair<std::string, std::string>>& surface_to_canon) {
  std::string text = lower_text;
  for (const auto& [surface, canon] : surface_to_canon) {
    if (surface == canon) continue;
    std::string out;
    std::size_t pos = 0;
    while (pos < text.size()) {
      const std::size_t hit = text.find(surface, pos);
      if (hit == std::string::npos) {
        out.append(text, pos, std::string::npos);
        break;
      }
      const bool left_ok = hit == 0 || !word_char(text[hit - 1]);
      const std::size_t after = hit + surface.size();
      const bool right_ok = after >= text.size() || !word_char(text[after]);
      out.append(text, pos, hit - pos);
      if (left_ok && right_ok) {
        out.append(canon);
      } else {
        out.append(surface);
      }
      pos = after;
    }
    text = std::move(out);
  }
  return text;
}

inline std::string lowercased(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (const char c : s) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return out;
}

}  // namespace detail

/// Load a KVRET-style JSON dataset: per-dialogue local KGs are built from the
/// KB tables (first column is the triple subject), entity mentions in the
/// utterances are canonicalized, and consecutive same-speaker turns merge so
/// dialogues strictly alternate starting with the driver. Intent ids are
/// assigned by sorted name. When expected_intents is given (dev/test splits),
/// any other intent string is a validation error.
inline Dataset load_dataset(const std::string& path,
                            const std::vector<std::string>& expected_intents = {}) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file: " + path);
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("malformed JSON in " + path + ": " + e.what());
  }
  if (!root.is_array()) throw ParseError("dataset root must be a JSON array: " + path);

  Dataset ds;
  std::set<std::string> intent_names;
  std::vector<std::string> dialogue_intent(root.size());

  for (std::size_t di = 0; di < root.size(); ++di) {
    const nlohmann::json& j = root[di];
    const auto where = [&] { return "dialogue #" + std::to_string(di) + " in " + path; };

    const nlohmann::json* task = j.contains("scenario") ? &j["scenario"] : nullptr;
    if (!task || !task->contains("task") || !(*task)["task"].contains("intent") ||
        !(*task)["task"]["intent"].is_string())
      throw ValidationError("missing intent in " + where());
    const std::string intent = (*task)["task"]["intent"].get<std::string>();
    if (intent.empty()) throw ValidationError("empty intent in " + where());
    if (!expected_intents.empty() &&
        std::find(expected_intents.begin(), expected_intents.end(), intent) ==
            expected_intents.end())
      throw ValidationError("unknown intent \"" + intent + "\" in " + where());
    intent_names.insert(intent);
    dialogue_intent[di] = intent;

    Dialogue d;
    std::vector<std::pair<std::string, std::string>> mentions;  // surface -> canonical

    if (task->contains("kb") && (*task)["kb"].is_object()) {
      const nlohmann::json& kb = (*task)["kb"];
      std::vector<std::string> columns;
      if (kb.contains("column_names") && kb["column_names"].is_array())
        for (const auto& c : kb["column_names"]) columns.push_back(c.get<std::string>());
      if (!columns.empty() && kb.contains("items") && kb["items"].is_array()) {
        const std::string& subject_col = columns.front();
        for (const auto& item : kb["items"]) {
          if (!item.is_object() || !item.contains(subject_col) ||
              !detail::kb_value_usable(item[subject_col]))
            continue;
          const std::string subject_raw = item[subject_col].get<std::string>();
          const std::string subject = canonicalize(subject_raw);
          mentions.emplace_back(detail::lowercased(subject_raw), subject);
          for (std::size_t ci = 1; ci < columns.size(); ++ci) {
            const std::string& col = columns[ci];
            if (!item.contains(col) || !detail::kb_value_usable(item[col])) continue;
            const std::string raw = item[col].get<std::string>();
            const auto attrs = detail::compound_attributes(raw, canonicalize(col));
            for (const auto& [attr, value] : split_compound_entity(raw, attrs)) {
              d.local_kg.add({subject, attr, value});
              std::string surface = detail::lowercased(value);
              std::replace(surface.begin(), surface.end(), '_', ' ');
              mentions.emplace_back(std::move(surface), value);
            }
          }
        }
      }
    }

    std::stable_sort(mentions.begin(), mentions.end(), [](const auto& a, const auto& b) {
      if (a.first.size() != b.first.size()) return a.first.size() > b.first.size();
      return a.first < b.first;
    });
    mentions.erase(std::unique(mentions.begin(), mentions.end()), mentions.end());

    if (j.contains("dialogue") && j["dialogue"].is_array()) {
      for (const auto& turn : j["dialogue"]) {
        if (!turn.is_object() || !turn.contains("turn") || !turn["turn"].is_string())
          throw ValidationError("turn without speaker in " + where());
        const std::string who = turn["turn"].get<std::string>();
        Speaker speaker;
        if (who == "driver") {
          speaker = Speaker::driver;
        } else if (who == "assistant") {
          speaker = Speaker::assistant;
        } else {
          throw ValidationError("unknown speaker \"" + who + "\" in " + where());
        }
        std::string utt;
        if (turn.contains("data") && turn["data"].is_object() &&
            turn["data"].contains("utterance") && turn["data"]["utterance"].is_string())
          utt = turn["data"]["utterance"].get<std::string>();
        const std::vector<std::string> toks =
            tokenize(detail::canonicalize_mentions(detail::lowercased(utt), mentions));
        if (toks.empty()) continue;
        if (d.turns.empty() && speaker == Speaker::assistant) continue;  // no context to answer
        if (!d.turns.empty() && d.turns.back().speaker == speaker) {
          auto& prev = d.turns.back().utterance;
          prev.insert(prev.end(), toks.begin(), toks.end());
        } else {
          d.turns.push_back({speaker, toks});
        }
      }
    }

    ds.global_kg.merge(d.local_kg);
    ds.dialogues.push_back(std::move(d));
  }

  int next_id = 0;
  std::map<std::string, int> intent_ids;
  for (const std::string& name : intent_names) {
    intent_ids[name] = next_id;
    ds.intents.push_back({next_id, name});
    ++next_id;
  }
  for (std::size_t di = 0; di < ds.dialogues.size(); ++di)
    ds.dialogues[di].intent = {intent_ids[dialogue_intent[di]], dialogue_intent[di]};
  return ds;
}

struct DatasetStats {
  std::size_t dialogues = 0;
  double avg_utterances_per_dialogue = 0.0;
  double avg_tokens_per_utterance = 0.0;
  std::size_t vocabulary_size = 0;  // content tokens, reserved rows excluded
  std::size_t entities = 0;
  std::size_t triples = 0;
};

inline DatasetStats dataset_stats(const Dataset& ds, const Vocabulary& vocab) {
  DatasetStats s;
  s.dialogues = ds.dialogues.size();
  std::size_t utterances = 0, tokens = 0;
  for (const Dialogue& d : ds.dialogues) {
    utterances += d.turns.size();
    for (const Turn& t : d.turns) tokens += t.utterance.size();
  }
  if (s.dialogues > 0)
    s.avg_utterances_per_dialogue = static_cast<double>(utterances) / s.dialogues;
  if (utterances > 0) s.avg_tokens_per_utterance = static_cast<double>(tokens) / utterances;
  s.vocabulary_size = static_cast<std::size_t>(vocab.size()) - Vocabulary::kReservedCount;
  s.entities = ds.global_kg.entities().size();
  s.triples = ds.global_kg.size();
  return s;
}

/// Normalized dataset artifact: tokenized turns, intent names, local KG
/// triples. This is what the training and evaluation stages consume.
inline void save_normalized(const Dataset& ds, const std::string& path) {
  nlohmann::json root = nlohmann::json::array();
  for (const Dialogue& d : ds.dialogues) {
    nlohmann::json turns = nlohmann::json::array();
    for (const Turn& t : d.turns)
      turns.push_back({{"speaker", t.speaker == Speaker::driver ? "driver" : "assistant"},
                       {"tokens", t.utterance}});
    nlohmann::json triples = nlohmann::json::array();
    for (const Triple& t : d.local_kg.triples())
      triples.push_back({t.head, t.relation, t.tail});
    root.push_back({{"intent", d.intent.name}, {"turns", turns}, {"kg", triples}});
  }
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write normalized dataset: " + path);
  out << root.dump(1) << '\n';
}

inline Dataset load_normalized(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("cannot open normalized dataset: " + path);
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("malformed normalized dataset " + path + ": " + e.what());
  }
  Dataset ds;
  std::set<std::string> intent_names;
  std::vector<std::string> dialogue_intent;
  for (const auto& j : root) {
    Dialogue d;
    dialogue_intent.push_back(j.at("intent").get<std::string>());
    intent_names.insert(dialogue_intent.back());
    for (const auto& t : j.at("turns")) {
      Turn turn;
      turn.speaker = t.at("speaker").get<std::string>() == "driver" ? Speaker::driver
                                                                    : Speaker::assistant;
      turn.utterance = t.at("tokens").get<std::vector<std::string>>();
      d.turns.push_back(std::move(turn));
    }
    for (const auto& t : j.at("kg"))
      d.local_kg.add({t.at(0).get<std::string>(), t.at(1).get<std::string>(),
                      t.at(2).get<std::string>()});
    ds.global_kg.merge(d.local_kg);
    ds.dialogues.push_back(std::move(d));
  }
  int next_id = 0;
  std::map<std::string, int> intent_ids;
  for (const std::string& name : intent_names) {
    intent_ids[name] = next_id;
    ds.intents.push_back({next_id, name});
    ++next_id;
  }
  for (std::size_t di = 0; di < ds.dialogues.size(); ++di)
    ds.dialogues[di].intent = {intent_ids[dialogue_intent[di]], dialogue_intent[di]};
  return ds;
}

}  // namespace kgdl
