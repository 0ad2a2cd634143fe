#pragma once

#include "kgdl/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace kgdl {

/// |V| x d word vectors plus per-word scalar biases. Rows are addressed by
/// vocabulary id. All entries stay finite; training aborts otherwise.
struct EmbeddingMatrix {
  Mat vectors;  // |V| x d
  Vec biases;   // |V|

  EmbeddingMatrix() = default;
  EmbeddingMatrix(int vocab_size, int dim)
      : vectors(Mat::Zero(vocab_size, dim)), biases(Vec::Zero(vocab_size)) {
    if (vocab_size < 1 || dim < 1)
      throw ValidationError("EmbeddingMatrix: vocab size and dimension must be positive");
  }

  int vocab_size() const { return static_cast<int>(vectors.rows()); }
  int dim() const { return static_cast<int>(vectors.cols()); }

  void check_finite(const std::string& context) const {
    if (!vectors.allFinite() || !biases.allFinite())
      throw NumericError("non-finite embedding entries: " + context);
  }
};

inline EmbeddingMatrix random_embeddings(int vocab_size, int dim, std::uint64_t seed) {
  EmbeddingMatrix e(vocab_size, dim);
  auto rng = make_rng(seed);
  const double r = 0.5 / dim;
  fill_uniform(e.vectors, -r, r, rng);
  return e;
}

/// GloVe-style text export: one `token v1 ... vd` line per vocabulary id,
/// 6-decimal fixed formatting. Biases go to a sibling `<path>.bias` file.
inline void save_embeddings(const EmbeddingMatrix& e, const Vocabulary& vocab,
                            const std::string& path) {
  if (e.vocab_size() != vocab.size())
    throw DimensionError("save_embeddings: embedding rows != vocabulary size");
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write embeddings: " + path);
  char buf[64];
  for (int i = 0; i < vocab.size(); ++i) {
    out << vocab.token(i);
    for (int k = 0; k < e.dim(); ++k) {
      std::snprintf(buf, sizeof buf, " %.6f", e.vectors(i, k));
      out << buf;
    }
    out << '\n';
  }
  std::ofstream bout(path + ".bias");
  if (!bout) throw ArtifactError("cannot write embedding biases: " + path + ".bias");
  for (int i = 0; i < vocab.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f\n", e.biases(i));
    bout << vocab.token(i) << ' ' << buf;
  }
}

/// Every vocabulary token must be covered; the sibling bias file is optional
/// (zeros when absent, which downstream consumers never read anyway).
inline EmbeddingMatrix load_embeddings(const Vocabulary& vocab, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("cannot open embeddings: " + path);
  std::string line;
  int dim = -1;
  std::vector<char> seen(static_cast<std::size_t>(vocab.size()), 0);
  EmbeddingMatrix e;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    std::vector<double> vals;
    double v;
    while (ss >> v) vals.push_back(v);
    if (vals.empty())
      throw ParseError("bad embedding line " + std::to_string(lineno) + " in " + path);
    if (dim < 0) {
      dim = static_cast<int>(vals.size());
      e = EmbeddingMatrix(vocab.size(), dim);
    } else if (static_cast<int>(vals.size()) != dim) {
      throw ParseError("inconsistent embedding dimension at line " + std::to_string(lineno) +
                       " in " + path);
    }
    const int id = vocab.find(tok);
    if (id < 0) continue;  // extra tokens are allowed, missing ones are not
    for (int k = 0; k < dim; ++k) e.vectors(id, k) = vals[static_cast<std::size_t>(k)];
    seen[static_cast<std::size_t>(id)] = 1;
  }
  if (dim < 0) throw ParseError("empty embedding file: " + path);
  for (int i = 0; i < vocab.size(); ++i)
    if (!seen[static_cast<std::size_t>(i)])
      throw ValidationError("embeddings missing vocabulary token: " + vocab.token(i));
  std::ifstream bin(path + ".bias");
  if (bin) {
    while (std::getline(bin, line)) {
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::string tok;
      double b;
      if (!(ss >> tok >> b)) throw ParseError("bad bias line in " + path + ".bias");
      const int id = vocab.find(tok);
      if (id >= 0) e.biases(id) = b;
    }
  }
  return e;
}

/// k most cosine-similar vocabulary tokens, query excluded, ties broken by
/// token id ascending.
inline std::vector<std::pair<std::string, double>> nearest_neighbors(
    const EmbeddingMatrix& e, const Vocabulary& vocab, const std::string& token, int k) {
  if (k < 1) throw ValidationError("nearest_neighbors: k must be >= 1");
  const int q = vocab.find(token);
  if (q < 0) throw LookupError("nearest_neighbors: token not in vocabulary: " + token);
  const Vec query = e.vectors.row(q);
  std::vector<std::pair<double, int>> scored;
  scored.reserve(static_cast<std::size_t>(vocab.size()));
  for (int i = 0; i < vocab.size(); ++i) {
    if (i == q) continue;
    scored.emplace_back(cosine_or_zero(query, e.vectors.row(i)), i);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  if (static_cast<int>(scored.size()) > k) scored.resize(static_cast<std::size_t>(k));
  std::vector<std::pair<std::string, double>> out;
  out.reserve(scored.size());
  for (const auto& [sim, id] : scored) out.emplace_back(vocab.token(id), sim);
  return out;
}

}  // namespace kgdl
