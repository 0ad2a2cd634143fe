#pragma once

#include "kgdl/cooccur.hpp"
#include "kgdl/embedding.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace kgdl {

struct JointTrainConfig {
  int dim = 300;
  int epochs = 500;
  double learning_rate = 1e-4;
  double weight_decay = 1e-6;   // decoupled, vectors only
  double lambda = 10000.0;      // pull of the knowledge graph term
  double x_max = 100.0;
  double weight_exponent = 0.75;
  bool adagrad = false;
  std::uint64_t seed = 42;

  void validate() const {
    if (dim < 1) throw ValidationError("JointTrainConfig: dim must be positive");
    if (epochs < 0) throw ValidationError("JointTrainConfig: epochs must be non-negative");
    if (learning_rate <= 0) throw ValidationError("JointTrainConfig: learning_rate must be positive");
    if (weight_decay < 0) throw ValidationError("JointTrainConfig: weight_decay must be non-negative");
    if (lambda < 0) throw ValidationError("JointTrainConfig: lambda must be non-negative");
    if (x_max <= 0) throw ValidationError("JointTrainConfig: x_max must be positive");
    if (weight_exponent <= 0 || weight_exponent > 1)
      throw ValidationError("JointTrainConfig: weight_exponent must be in (0,1]");
  }
};

/// Frequency damping (x/x_max)^a, capped at 1.
inline double glove_weight(double x, double x_max, double exponent) {
  if (x < 0) throw ValidationError("glove_weight: negative co-occurrence count");
  if (x >= x_max) return 1.0;
  return std::pow(x / x_max, exponent);
}

/// Weighted least-squares fit of log co-occurrence: half the symmetric sum of
/// f(X_ij)(w_i'w_j + b_i + b_j - log X_ij)^2. Each stored off-diagonal entry
/// stands for two symmetric terms.
inline double corpus_objective(const EmbeddingMatrix& e, const CooccurrenceMatrix& x,
                               const JointTrainConfig& cfg) {
  if (e.vocab_size() != x.vocab_size())
    throw DimensionError("corpus_objective: embedding rows != co-occurrence vocab size");
  double j = 0.0;
  for (const auto& [k, count] : x.entries()) {
    const auto [i, jj] = k;
    const double f = glove_weight(count, cfg.x_max, cfg.weight_exponent);
    const double r =
        e.vectors.row(i).dot(e.vectors.row(jj)) + e.biases(i) + e.biases(jj) - std::log(count);
    j += (i == jj ? 0.5 : 1.0) * f * r * r;
  }
  return j;
}

/// Half the symmetric sum of R(i,j) ||w_i - w_j||^2 over linked pairs.
inline double kg_objective(const EmbeddingMatrix& e, const RelationStrength& rel) {
  double j = 0.0;
  for (const auto& [k, r] : rel.pairs()) {
    if (r <= 0.0) continue;
    const double d2 = (e.vectors.row(k.first) - e.vectors.row(k.second)).squaredNorm();
    j += r * d2;  // two symmetric terms at 1/2 each
  }
  return j;
}

inline double joint_objective(const EmbeddingMatrix& e, const CooccurrenceMatrix& x,
                              const RelationStrength& rel, const JointTrainConfig& cfg) {
  return corpus_objective(e, x, cfg) + cfg.lambda * kg_objective(e, rel);
}

/// Analytic gradient of the joint objective in the same layout as the
/// embeddings. lambda = 0 leaves the knowledge graph term untouched.
inline EmbeddingMatrix joint_gradients(const EmbeddingMatrix& e, const CooccurrenceMatrix& x,
                                       const RelationStrength& rel,
                                       const JointTrainConfig& cfg) {
  if (e.vocab_size() != x.vocab_size())
    throw DimensionError("joint_gradients: embedding rows != co-occurrence vocab size");
  EmbeddingMatrix g(e.vocab_size(), e.dim());
  for (const auto& [k, count] : x.entries()) {
    const auto [i, j] = k;
    const double f = glove_weight(count, cfg.x_max, cfg.weight_exponent);
    const double r =
        e.vectors.row(i).dot(e.vectors.row(j)) + e.biases(i) + e.biases(j) - std::log(count);
    const double c = 2.0 * f * r;
    if (i == j) {
      g.vectors.row(i) += c * e.vectors.row(i);
      g.biases(i) += c;
    } else {
      g.vectors.row(i) += c * e.vectors.row(j);
      g.vectors.row(j) += c * e.vectors.row(i);
      g.biases(i) += c;
      g.biases(j) += c;
    }
  }
  if (cfg.lambda > 0.0) {
    for (const auto& [k, r] : rel.pairs()) {
      if (r <= 0.0) continue;
      const Vec diff = e.vectors.row(k.first) - e.vectors.row(k.second);
      g.vectors.row(k.first) += (2.0 * cfg.lambda * r) * diff.transpose();
      g.vectors.row(k.second) -= (2.0 * cfg.lambda * r) * diff.transpose();
    }
  }
  return g;
}

struct JointEpochLog {
  int epoch = 0;
  double j = 0.0;
  double j_corpus = 0.0;
  double j_kg = 0.0;
};

inline void save_training_log(const std::vector<JointEpochLog>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write training log: " + path);
  out << "epoch,J,J_C,J_S\n";
  out.precision(17);
  for (const auto& row : log)
    out << row.epoch << ',' << row.j << ',' << row.j_corpus << ',' << row.j_kg << '\n';
}

/// Full-batch descent on the joint objective. Weight decay is decoupled and
/// applies to vectors only; biases are never decayed. AdaGrad divides the
/// step by the running root sum of squared gradients.
inline EmbeddingMatrix train_embeddings(const CooccurrenceMatrix& x, const RelationStrength& rel,
                                        const JointTrainConfig& cfg,
                                        std::vector<JointEpochLog>* log = nullptr) {
  cfg.validate();
  EmbeddingMatrix e = random_embeddings(x.vocab_size(), cfg.dim, cfg.seed);
  Mat accum_v;
  Vec accum_b;
  if (cfg.adagrad) {
    accum_v = Mat::Zero(e.vocab_size(), e.dim());
    accum_b = Vec::Zero(e.vocab_size());
  }
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double jc = corpus_objective(e, x, cfg);
    const double js = kg_objective(e, rel);
    const double j = jc + cfg.lambda * js;
    if (!std::isfinite(j)) {
      throw NumericError("joint objective diverged at epoch " + std::to_string(epoch) +
                         ": J=" + std::to_string(j));
    }
    if (log) log->push_back({epoch, j, jc, js});
    log_debug("embed epoch " + std::to_string(epoch) + " J=" + std::to_string(j));

    EmbeddingMatrix g = joint_gradients(e, x, rel, cfg);
    if (!g.vectors.allFinite() || !g.biases.allFinite()) {
      int bad = -1;
      for (int i = 0; i < g.vocab_size() && bad < 0; ++i)
        if (!g.vectors.row(i).allFinite() || !std::isfinite(g.biases(i))) bad = i;
      throw NumericError("non-finite gradient at epoch " + std::to_string(epoch) +
                         ", vocabulary id " + std::to_string(bad));
    }
    if (cfg.adagrad) {
      accum_v.array() += g.vectors.array().square();
      accum_b.array() += g.biases.array().square();
      e.vectors.array() -=
          cfg.learning_rate * g.vectors.array() / (accum_v.array().sqrt() + 1e-8);
      e.biases.array() -= cfg.learning_rate * g.biases.array() / (accum_b.array().sqrt() + 1e-8);
    } else {
      e.vectors -= cfg.learning_rate * g.vectors;
      e.biases -= cfg.learning_rate * g.biases;
    }
    if (cfg.weight_decay > 0.0) e.vectors *= 1.0 - cfg.learning_rate * cfg.weight_decay;
  }
  e.check_finite("after embedding training");
  return e;
}

}  // namespace kgdl
