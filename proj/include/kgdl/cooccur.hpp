#pragma once

#include "kgdl/corpus.hpp"

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace kgdl {

/// Symmetric sparse co-occurrence counts over token ids. Entries are stored
/// once under the canonical key (min,max); reserved ids never enter.
class CooccurrenceMatrix {
 public:
  explicit CooccurrenceMatrix(int vocab_size, int window = 5, bool harmonic = false)
      : vocab_size_(vocab_size), window_(window), harmonic_(harmonic) {
    if (vocab_size < Vocabulary::kReservedCount)
      throw ValidationError("CooccurrenceMatrix: vocab size too small");
    if (window < 1) throw ValidationError("CooccurrenceMatrix: window must be >= 1");
  }

  int vocab_size() const { return vocab_size_; }
  int window() const { return window_; }
  bool harmonic() const { return harmonic_; }

  /// Count every unordered position pair (p < q, q - p <= window) once.
  void add_sentence(const std::vector<int>& ids) {
    const auto n = static_cast<std::ptrdiff_t>(ids.size());
    for (std::ptrdiff_t p = 0; p < n; ++p) {
      const int a = ids[p];
      if (a < Vocabulary::kReservedCount) continue;
      check_id(a);
      for (std::ptrdiff_t q = p + 1; q < n && q - p <= window_; ++q) {
        const int b = ids[q];
        if (b < Vocabulary::kReservedCount) continue;
        check_id(b);
        const double w = harmonic_ ? 1.0 / static_cast<double>(q - p) : 1.0;
        counts_[key(a, b)] += w;
      }
    }
  }

  void add_corpus(const std::vector<TrainingPair>& pairs) {
    for (const TrainingPair& p : pairs) {
      add_sentence(p.input);
      add_sentence(p.target);
    }
  }

  double at(int i, int j) const {
    check_id(i);
    check_id(j);
    const auto it = counts_.find(key(i, j));
    return it == counts_.end() ? 0.0 : it->second;
  }

  std::size_t nonzeros() const { return counts_.size(); }

  double total_mass() const {
    double m = 0.0;
    for (const auto& [k, v] : counts_) m += v;
    return m;
  }

  /// Stored entries in canonical (i <= j) id order.
  const std::map<std::pair<int, int>, double>& entries() const { return counts_; }

  bool operator==(const CooccurrenceMatrix& other) const {
    return vocab_size_ == other.vocab_size_ && window_ == other.window_ &&
           counts_ == other.counts_;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ArtifactError("cannot write co-occurrence file: " + path);
    out << "#cooccur v1 |V|=" << vocab_size_ << " window=" << window_ << '\n';
    out.precision(17);
    for (const auto& [k, v] : counts_) out << k.first << '\t' << k.second << '\t' << v << '\n';
  }

  static CooccurrenceMatrix load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ArtifactError("cannot open co-occurrence file: " + path);
    std::string header;
    if (!std::getline(in, header)) throw ParseError("empty co-occurrence file: " + path);
    int vs = -1, win = -1;
    if (std::sscanf(header.c_str(), "#cooccur v1 |V|=%d window=%d", &vs, &win) != 2)
      throw ParseError("bad co-occurrence header in " + path + ": \"" + header + "\"");
    CooccurrenceMatrix m(vs, win);
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::istringstream ss(line);
      int i, j;
      double v;
      if (!(ss >> i >> j >> v) || i > j)
        throw ParseError("bad co-occurrence line " + std::to_string(lineno) + " in " + path);
      m.check_id(i);
      m.check_id(j);
      m.counts_[{i, j}] = v;
    }
    return m;
  }

 private:
  static std::pair<int, int> key(int a, int b) {
    return a <= b ? std::make_pair(a, b) : std::make_pair(b, a);
  }

  void check_id(int id) const {
    if (id < 0 || id >= vocab_size_)
      throw LookupError("CooccurrenceMatrix: token id out of range: " + std::to_string(id));
  }

  int vocab_size_;
  int window_;
  bool harmonic_;
  std::map<std::pair<int, int>, double> counts_;
};

enum class RelationMode { binary, context_count };

/// Pairwise pull strength between vocabulary ids that are linked by a KG
/// triple. binary: 1 for every linked pair. context_count: the pair's
/// co-occurrence count, normalized by the largest such count so values
/// stay in [0, 1].
class RelationStrength {
 public:
  RelationStrength(const KnowledgeGraph& kg, const Vocabulary& vocab, RelationMode mode,
                   const CooccurrenceMatrix* cooccur = nullptr) {
    if (mode == RelationMode::context_count && cooccur == nullptr)
      throw ValidationError("RelationStrength: context_count mode needs co-occurrence counts");
    for (const Triple& t : kg.triples()) {
      const int h = vocab.find(t.head);
      if (h < 0) throw ValidationError("RelationStrength: entity not in vocabulary: " + t.head);
      const int ta = vocab.find(t.tail);
      if (ta < 0) throw ValidationError("RelationStrength: entity not in vocabulary: " + t.tail);
      if (h == ta) continue;  // self-loop exerts no pull
      linked_[minmax(h, ta)] = 1.0;
    }
    if (mode == RelationMode::context_count) {
      double max_count = 0.0;
      for (auto& [k, v] : linked_) {
        v = cooccur->at(k.first, k.second);
        max_count = std::max(max_count, v);
      }
      if (max_count > 0.0)
        for (auto& [k, v] : linked_) v /= max_count;
      // max_count == 0: no linked pair ever co-occurs, all strengths stay 0
    }
  }

  double at(int i, int j) const {
    if (i == j) return 0.0;
    const auto it = linked_.find(minmax(i, j));
    return it == linked_.end() ? 0.0 : it->second;
  }

  const std::map<std::pair<int, int>, double>& pairs() const { return linked_; }

  std::size_t linked_pair_count() const { return linked_.size(); }

 private:
  static std::pair<int, int> minmax(int a, int b) {
    return a <= b ? std::make_pair(a, b) : std::make_pair(b, a);
  }

  std::map<std::pair<int, int>, double> linked_;
};

struct CooccurrenceStats {
  std::size_t nonzeros = 0;
  double total_mass = 0.0;
  std::size_t linked_pairs = 0;           // KG-linked id pairs
  std::size_t linked_pairs_observed = 0;  // of those, co-occurring at least once
  std::size_t triples_in_context = 0;     // triples whose endpoints co-occur
  double max_linked_cooccurrence = 0.0;
};

inline CooccurrenceStats cooccurrence_stats(const CooccurrenceMatrix& m,
                                            const KnowledgeGraph& kg, const Vocabulary& vocab) {
  CooccurrenceStats s;
  s.nonzeros = m.nonzeros();
  s.total_mass = m.total_mass();
  RelationStrength binary(kg, vocab, RelationMode::binary);
  s.linked_pairs = binary.linked_pair_count();
  for (const auto& [k, unused] : binary.pairs()) {
    const double c = m.at(k.first, k.second);
    if (c > 0.0) {
      ++s.linked_pairs_observed;
      s.max_linked_cooccurrence = std::max(s.max_linked_cooccurrence, c);
    }
  }
  for (const Triple& t : kg.triples()) {
    const int h = vocab.find(t.head);
    const int ta = vocab.find(t.tail);
    if (h >= 0 && ta >= 0 && h != ta && m.at(h, ta) > 0.0) ++s.triples_in_context;
  }
  return s;
}

}  // namespace kgdl
