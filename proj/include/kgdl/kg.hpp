#pragma once

#include "kgdl/common.hpp"

#include <compare>
#include <fstream>
#include <set>
#include <string>

namespace kgdl {

/// One (head, relation, tail) fact. Fields hold canonicalized tokens.
struct Triple {
  std::string head;
  std::string relation;
  std::string tail;

  auto operator<=>(const Triple&) const = default;
};

/// Set of triples plus the entity set they span (heads and tails).
/// Duplicates collapse; iteration order is the triples' sort order.
class KnowledgeGraph {
 public:
  void add(Triple t) {
    if (t.head.empty() || t.relation.empty() || t.tail.empty())
      throw ValidationError("KnowledgeGraph: triple with empty field");
    entities_.insert(t.head);
    entities_.insert(t.tail);
    triples_.insert(std::move(t));
  }

  void merge(const KnowledgeGraph& other) {
    for (const Triple& t : other.triples_) add(t);
  }

  bool contains(const Triple& t) const { return triples_.count(t) > 0; }
  bool has_entity(const std::string& e) const { return entities_.count(e) > 0; }

  const std::set<Triple>& triples() const { return triples_; }
  const std::set<std::string>& entities() const { return entities_; }
  std::size_t size() const { return triples_.size(); }
  bool empty() const { return triples_.empty(); }

  bool operator==(const KnowledgeGraph& other) const { return triples_ == other.triples_; }

  /// UTF-8 TSV, one "head\trelation\ttail" per line.
  void save_tsv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ArtifactError("cannot write KG file: " + path);
    for (const Triple& t : triples_) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
  }

  static KnowledgeGraph load_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ArtifactError("cannot open KG file: " + path);
    KnowledgeGraph kg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto t1 = line.find('\t');
      const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
      if (t2 == std::string::npos)
        throw ParseError("bad KG line " + std::to_string(lineno) + " in " + path);
      kg.add({line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), line.substr(t2 + 1)});
    }
    return kg;
  }

 private:
  std::set<Triple> triples_;
  std::set<std::string> entities_;
};

}  // namespace kgdl
