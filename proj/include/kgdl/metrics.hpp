#pragma once

#include "kgdl/embedding.hpp"
#include "kgdl/kvl.hpp"
#include "kgdl/model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace kgdl {

/// Corpus-level BLEU with clipped 1..4-gram precisions pooled over all pairs
/// and a brevity penalty on total lengths, scaled to 0..100. Any empty pooled
/// precision zeroes the score.
inline double corpus_bleu(const std::vector<std::vector<int>>& references,
                          const std::vector<std::vector<int>>& hypotheses) {
  if (references.size() != hypotheses.size())
    throw ValidationError("corpus_bleu: reference and hypothesis counts differ");
  if (references.empty()) throw ValidationError("corpus_bleu: empty corpus");
  long ref_total = 0, hyp_total = 0;
  double log_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    long num = 0, den = 0;
    for (std::size_t k = 0; k < references.size(); ++k) {
      const auto& ref = references[k];
      const auto& hyp = hypotheses[k];
      if (n == 1) {
        ref_total += static_cast<long>(ref.size());
        hyp_total += static_cast<long>(hyp.size());
      }
      if (static_cast<int>(hyp.size()) < n) continue;
      std::map<std::vector<int>, long> ref_counts;
      for (std::size_t i = 0; i + n <= ref.size(); ++i)
        ++ref_counts[std::vector<int>(ref.begin() + static_cast<std::ptrdiff_t>(i),
                                      ref.begin() + static_cast<std::ptrdiff_t>(i + n))];
      std::map<std::vector<int>, long> hyp_counts;
      for (std::size_t i = 0; i + n <= hyp.size(); ++i)
        ++hyp_counts[std::vector<int>(hyp.begin() + static_cast<std::ptrdiff_t>(i),
                                      hyp.begin() + static_cast<std::ptrdiff_t>(i + n))];
      for (const auto& [gram, c] : hyp_counts) {
        const auto it = ref_counts.find(gram);
        num += std::min(c, it == ref_counts.end() ? 0L : it->second);
        den += c;
      }
    }
    if (num == 0 || den == 0) return 0.0;
    log_sum += std::log(static_cast<double>(num) / static_cast<double>(den));
  }
  if (hyp_total == 0) return 0.0;
  const double bp = hyp_total >= ref_total
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref_total) /
                                             static_cast<double>(hyp_total));
  return 100.0 * bp * std::exp(log_sum / 4.0);
}

namespace detail {

inline std::vector<int> content_ids(const std::vector<int>& ids) {
  std::vector<int> out;
  out.reserve(ids.size());
  for (const int id : ids)
    if (id >= Vocabulary::kReservedCount) out.push_back(id);
  return out;
}

}  // namespace detail

/// Cosine of the sentence mean vectors. Sentences with no scorable tokens
/// give 0 and set the degenerate flag.
inline double embedding_average(const EmbeddingMatrix& e, const std::vector<int>& ref,
                                const std::vector<int>& hyp, bool* degenerate = nullptr) {
  const auto r = detail::content_ids(ref);
  const auto h = detail::content_ids(hyp);
  if (r.empty() || h.empty()) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  Vec rm = Vec::Zero(e.dim()), hm = Vec::Zero(e.dim());
  for (const int id : r) rm += e.vectors.row(id).transpose();
  for (const int id : h) hm += e.vectors.row(id).transpose();
  rm /= static_cast<double>(r.size());
  hm /= static_cast<double>(h.size());
  return cosine_or_zero(rm, hm);
}

/// Cosine of the per-dimension extrema vectors (largest magnitude, sign kept).
inline double vector_extrema(const EmbeddingMatrix& e, const std::vector<int>& ref,
                             const std::vector<int>& hyp, bool* degenerate = nullptr) {
  const auto r = detail::content_ids(ref);
  const auto h = detail::content_ids(hyp);
  if (r.empty() || h.empty()) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  auto extrema = [&](const std::vector<int>& ids) {
    Vec ex = e.vectors.row(ids.front());
    for (std::size_t k = 1; k < ids.size(); ++k) {
      const auto row = e.vectors.row(ids[k]);
      for (int dim = 0; dim < e.dim(); ++dim)
        if (std::abs(row(dim)) > std::abs(ex(dim))) ex(dim) = row(dim);
    }
    return ex;
  };
  return cosine_or_zero(extrema(r), extrema(h));
}

/// Symmetrized mean of best-match cosines between the two token sets.
inline double greedy_matching(const EmbeddingMatrix& e, const std::vector<int>& ref,
                              const std::vector<int>& hyp, bool* degenerate = nullptr) {
  const auto r = detail::content_ids(ref);
  const auto h = detail::content_ids(hyp);
  if (r.empty() || h.empty()) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  auto direction = [&](const std::vector<int>& a, const std::vector<int>& b) {
    double sum = 0.0;
    for (const int w : a) {
      double best = -2.0;
      for (const int v : b)
        best = std::max(best, cosine_or_zero(e.vectors.row(w), e.vectors.row(v)));
      sum += best;
    }
    return sum / static_cast<double>(a.size());
  };
  return 0.5 * (direction(r, h) + direction(h, r));
}

struct PairScore {
  double embedding_average = 0.0;
  double vector_extrema = 0.0;
  double greedy_matching = 0.0;
};

struct EvaluationReport {
  double bleu = 0.0;
  double embedding_average = 0.0;
  double vector_extrema = 0.0;
  double greedy_matching = 0.0;
  std::vector<PairScore> per_example;
  std::string model_tag;
  long oov_degenerate_pairs = 0;  // pairs where a side had no scorable tokens
  long n_pairs = 0;
  long kvl_replacements = 0;
};

/// Generate a response for every assistant turn in the test set and score
/// against the references. KVL constrains decoding per-dialogue when enabled.
inline EvaluationReport evaluate(const ModelParams& params,
                                 const std::vector<Dialogue>& testset, const Vocabulary& vocab,
                                 bool use_kvl, int max_len = 60,
                                 const std::string& model_tag = "",
                                 std::vector<KvlDecision>* decisions_out = nullptr) {
  params.check_consistent();
  EvaluationReport rep;
  rep.model_tag = model_tag;
  std::vector<std::vector<int>> refs, hyps;
  for (const Dialogue& d : testset) {
    const EntityRegistry reg = make_registry(vocab, d.local_kg);
    for (const TrainingPair& pair : build_pairs(d, vocab)) {
      std::vector<int> hyp;
      if (use_kvl) {
        auto [ids, decisions] = decode_with_kvl(params, pair.input, reg, max_len);
        hyp = std::move(ids);
        for (const KvlDecision& dec : decisions)
          if (dec.replaced) ++rep.kvl_replacements;
        if (decisions_out)
          decisions_out->insert(decisions_out->end(), decisions.begin(), decisions.end());
      } else {
        hyp = generate(params, pair.input, max_len);
      }
      refs.push_back(detail::content_ids(pair.target));
      hyps.push_back(detail::content_ids(hyp));
    }
  }
  if (refs.empty()) throw ValidationError("evaluate: test set has no assistant turns");
  rep.n_pairs = static_cast<long>(refs.size());
  rep.bleu = corpus_bleu(refs, hyps);
  double ea = 0.0, ve = 0.0, gm = 0.0;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    bool degenerate = false;
    PairScore s;
    s.embedding_average = embedding_average(params.embedding, refs[k], hyps[k], &degenerate);
    s.vector_extrema = vector_extrema(params.embedding, refs[k], hyps[k], &degenerate);
    s.greedy_matching = greedy_matching(params.embedding, refs[k], hyps[k], &degenerate);
    if (degenerate) ++rep.oov_degenerate_pairs;
    ea += s.embedding_average;
    ve += s.vector_extrema;
    gm += s.greedy_matching;
    rep.per_example.push_back(s);
  }
  const auto n = static_cast<double>(refs.size());
  rep.embedding_average = ea / n;
  rep.vector_extrema = ve / n;
  rep.greedy_matching = gm / n;
  return rep;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline nlohmann::json report_to_json(const EvaluationReport& rep,
                                     const nlohmann::json& config = nlohmann::json::object()) {
  nlohmann::json per = nlohmann::json::array();
  for (const PairScore& s : rep.per_example)
    per.push_back({{"embedding_average", s.embedding_average},
                   {"vector_extrema", s.vector_extrema},
                   {"greedy_matching", s.greedy_matching}});
  char fp[32];
  std::snprintf(fp, sizeof fp, "%016llx",
                static_cast<unsigned long long>(fnv1a(config.dump())));
  return {{"model_tag", rep.model_tag},
          {"bleu", rep.bleu},
          {"embedding_average", rep.embedding_average},
          {"vector_extrema", rep.vector_extrema},
          {"greedy_matching", rep.greedy_matching},
          {"n_pairs", rep.n_pairs},
          {"oov_degenerate_pairs", rep.oov_degenerate_pairs},
          {"kvl_replacements", rep.kvl_replacements},
          {"per_example", per},
          {"config", config},
          {"config_fingerprint", fp}};
}

inline void save_report(const EvaluationReport& rep, const std::string& path,
                        const nlohmann::json& config = nlohmann::json::object()) {
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write report: " + path);
  out << report_to_json(rep, config).dump(1) << '\n';
}

struct AblationRow {
  std::string model;
  double bleu = 0.0;
  double bleu_kvl = 0.0;
};

inline std::string render_ablation_table(const std::vector<AblationRow>& rows) {
  std::size_t w = std::string("Model").size();
  for (const AblationRow& r : rows) w = std::max(w, r.model.size());
  char buf[64];
  std::string out = "Model";
  out.append(w - 5 + 2, ' ');
  out += "BLEU      BLEU+KVL\n";
  for (const AblationRow& r : rows) {
    out += r.model;
    out.append(w - r.model.size() + 2, ' ');
    std::snprintf(buf, sizeof buf, "%-8.2f  %-8.2f\n", r.bleu, r.bleu_kvl);
    out += buf;
  }
  return out;
}

}  // namespace kgdl
