#pragma once

#include "kgdl/corpus.hpp"
#include "kgdl/embedding.hpp"
#include "kgdl/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace kgdl {

/// Attention encoder-decoder with an intent head. Hidden size, attention
/// size, and intent projection are all tied to the embedding dimension.
struct ModelParams {
  EmbeddingMatrix embedding;  // |V| x d, rows addressed by token id
  LstmParams enc;             // input d
  LstmParams dec;             // input d + H
  Mat W_att;                  // A x 2H, left half maps the query, right half the key
  Vec v_att;                  // A
  Mat W_out;                  // |V| x 2H over [s_t; c_t]
  Vec b_out;                  // |V|
  Mat W_int_in;               // P x 2H over [query; context]
  Mat W_int_out;              // n_intents x P
  int hidden = 0;
  int n_intents = 0;
  bool intent_per_step = false;  // average the intent head over decoder steps

  int vocab_size() const { return embedding.vocab_size(); }

  void check_consistent() const {
    const int h = hidden;
    if (h != embedding.dim())
      throw DimensionError("ModelParams: hidden size must equal embedding dimension");
    if (enc.input() != embedding.dim() || enc.hidden() != h || dec.hidden() != h ||
        dec.input() != embedding.dim() + h || W_att.cols() != 2 * h ||
        v_att.size() != W_att.rows() || W_out.cols() != 2 * h ||
        W_out.rows() != embedding.vocab_size() || b_out.size() != W_out.rows() ||
        W_int_in.cols() != 2 * h || W_int_out.cols() != W_int_in.rows() ||
        W_int_out.rows() != n_intents)
      throw DimensionError("ModelParams: inconsistent tensor shapes");
  }
};

inline ModelParams init_model(const EmbeddingMatrix& embedding, int n_intents,
                              std::uint64_t seed, bool intent_per_step = false) {
  if (n_intents < 1) throw ValidationError("init_model: need at least one intent");
  const int d = embedding.dim();
  const int V = embedding.vocab_size();
  ModelParams p;
  p.embedding = embedding;
  p.hidden = d;
  p.n_intents = n_intents;
  p.intent_per_step = intent_per_step;
  auto rng = make_rng(seed);
  p.enc = lstm_init(d, d, rng);
  p.dec = lstm_init(2 * d, d, rng);
  p.W_att = Mat(d, 2 * d);
  fill_uniform(p.W_att, -0.08, 0.08, rng);
  p.v_att = Vec(d);
  std::uniform_real_distribution<double> dist(-0.08, 0.08);
  for (int i = 0; i < d; ++i) p.v_att(i) = dist(rng);
  p.W_out = Mat(V, 2 * d);
  fill_uniform(p.W_out, -0.08, 0.08, rng);
  p.b_out = Vec::Zero(V);
  p.W_int_in = Mat(d, 2 * d);
  fill_uniform(p.W_int_in, -0.08, 0.08, rng);
  p.W_int_out = Mat(n_intents, d);
  fill_uniform(p.W_int_out, -0.08, 0.08, rng);
  p.check_consistent();
  return p;
}

struct EncoderTrace {
  Mat h;         // H x m, column j = state after token j
  Vec final_h;   // last column
  Vec final_c;   // final cell state
  int length() const { return static_cast<int>(h.cols()); }
};

namespace detail {

inline std::vector<LstmCache> encode_full(const ModelParams& p, const std::vector<int>& ids) {
  if (ids.empty()) throw ValidationError("encode: empty input");
  const int H = p.hidden;
  std::vector<LstmCache> out;
  out.reserve(ids.size());
  Vec h = Vec::Zero(H), c = Vec::Zero(H);
  for (const int id : ids) {
    if (id < 0 || id >= p.vocab_size())
      throw LookupError("encode: token id out of range: " + std::to_string(id));
    out.push_back(lstm_forward(p.enc, p.embedding.vectors.row(id), h, c));
    h = out.back().h;
    c = out.back().c;
  }
  return out;
}

inline EncoderTrace trace_of(const std::vector<LstmCache>& enc) {
  EncoderTrace t;
  const int m = static_cast<int>(enc.size());
  const int H = static_cast<int>(enc.front().h.size());
  t.h = Mat(H, m);
  for (int j = 0; j < m; ++j) t.h.col(j) = enc[static_cast<std::size_t>(j)].h;
  t.final_h = enc.back().h;
  t.final_c = enc.back().c;
  return t;
}

inline Vec softmax(const Vec& z) {
  const double mx = z.maxCoeff();
  Vec e = (z.array() - mx).exp();
  return e / e.sum();
}

struct AttnCache {
  Vec query;  // H
  Mat a;      // A x m, tanh activations per source position
  Vec alpha;  // m
  Vec ctx;    // H
};

inline AttnCache attend_full(const ModelParams& p, const Vec& query, const EncoderTrace& tr) {
  if (tr.length() < 1) throw ValidationError("attend: empty encoder trace");
  const int H = p.hidden;
  AttnCache c;
  c.query = query;
  const Vec q_proj = p.W_att.leftCols(H) * query;
  c.a = ((p.W_att.rightCols(H) * tr.h).colwise() + q_proj).array().tanh();
  const Vec e = c.a.transpose() * p.v_att;
  c.alpha = softmax(e);
  c.ctx = tr.h * c.alpha;
  return c;
}

}  // namespace detail

inline EncoderTrace encode(const ModelParams& p, const std::vector<int>& ids) {
  return detail::trace_of(detail::encode_full(p, ids));
}

/// Additive attention: score each source state against the query, softmax,
/// convex-combine the states.
inline std::pair<Vec, Vec> attend(const ModelParams& p, const Vec& s_prev,
                                  const EncoderTrace& tr) {
  const auto c = detail::attend_full(p, s_prev, tr);
  return {c.alpha, c.ctx};
}

struct DecoderStep {
  Vec s;        // decoder state after the step
  Vec cell;     // decoder cell state
  Vec context;  // attention context used this step
  Vec alpha;    // attention weights, length m
  Vec p;        // distribution over the vocabulary
};

inline DecoderStep decode_step(const ModelParams& params, int y_prev_id, const Vec& s_prev,
                               const Vec& cell_prev, const EncoderTrace& tr) {
  if (y_prev_id < 0 || y_prev_id >= params.vocab_size())
    throw LookupError("decode_step: token id out of range: " + std::to_string(y_prev_id));
  const int H = params.hidden;
  const auto att = detail::attend_full(params, s_prev, tr);
  Vec x(params.dec.input());
  x.head(params.embedding.dim()) = params.embedding.vectors.row(y_prev_id);
  x.tail(H) = att.ctx;
  const LstmCache cell = lstm_forward(params.dec, x, s_prev, cell_prev);
  Vec sc(2 * H);
  sc.head(H) = cell.h;
  sc.tail(H) = att.ctx;
  DecoderStep out;
  out.s = cell.h;
  out.cell = cell.c;
  out.context = att.ctx;
  out.alpha = att.alpha;
  out.p = detail::softmax(params.W_out * sc + params.b_out);
  return out;
}

/// Intent scores from the final encoder state and its attention context.
inline Vec predict_intent(const ModelParams& p, const EncoderTrace& tr) {
  const int H = p.hidden;
  const auto att = detail::attend_full(p, tr.final_h, tr);
  Vec z(2 * H);
  z.head(H) = tr.final_h;
  z.tail(H) = att.ctx;
  return p.W_int_out * (p.W_int_in * z).array().tanh().matrix();
}

/// Greedy decoding from SOS until EOS or max_len tokens.
inline std::vector<int> generate(const ModelParams& p, const std::vector<int>& input_ids,
                                 int max_len) {
  if (max_len < 1) throw ValidationError("generate: max_len must be >= 1");
  const EncoderTrace tr = encode(p, input_ids);
  Vec s = tr.final_h, cell = tr.final_c;
  int prev = Vocabulary::kSos;
  std::vector<int> out;
  for (int t = 0; t < max_len; ++t) {
    const DecoderStep step = decode_step(p, prev, s, cell, tr);
    int best;
    step.p.maxCoeff(&best);
    out.push_back(best);
    if (best == Vocabulary::kEos) break;
    prev = best;
    s = step.s;
    cell = step.cell;
  }
  return out;
}

struct LossBreakdown {
  double vocab_loss = 0.0;
  double intent_loss = 0.0;
  double entity_loss = 0.0;
  double total = 0.0;
};

/// Ablation switches: a disabled term is exactly 0 in the loss and
/// contributes no gradient.
struct LossMask {
  bool intent = true;
  bool entity = true;
};

namespace detail {

struct EntityPosCache {
  double loss = 0.0;
  double mass = 0.0;       // S, probability mass on entity tokens
  Vec ptilde;              // renormalized probs, parallel to entity id list
  Vec phi;                 // expected entity embedding
  double phi_norm = 0.0;
  double corr_norm = 0.0;
  double cosine = 0.0;
};

inline EntityPosCache entity_position_loss(const EmbeddingMatrix& emb, const Vec& p,
                                           int target_id, const std::vector<int>& entity_ids,
                                           const Vocabulary& vocab) {
  EntityPosCache c;
  const auto n = static_cast<int>(entity_ids.size());
  c.ptilde = Vec(n);
  for (int k = 0; k < n; ++k) {
    c.ptilde(k) = p(entity_ids[static_cast<std::size_t>(k)]);
    c.mass += c.ptilde(k);
  }
  if (!(c.mass > 0.0))
    throw NumericError("entity loss: no probability mass on entity tokens");
  c.ptilde /= c.mass;
  c.phi = Vec::Zero(emb.dim());
  for (int k = 0; k < n; ++k)
    c.phi += c.ptilde(k) * emb.vectors.row(entity_ids[static_cast<std::size_t>(k)]).transpose();
  const Vec corr = emb.vectors.row(target_id);
  c.corr_norm = corr.norm();
  c.phi_norm = c.phi.norm();
  if (c.corr_norm < 1e-300)
    throw NumericError("entity loss: zero-norm embedding for token \"" + vocab.token(target_id) +
                       "\"");
  if (c.phi_norm < 1e-300)
    throw NumericError("entity loss: zero-norm expected entity embedding");
  c.cosine = c.phi.dot(corr) / (c.phi_norm * c.corr_norm);
  c.loss = 1.0 - c.cosine;
  return c;
}

}  // namespace detail

/// Mean cosine distance between the correct entity's embedding and the
/// probability-weighted entity embedding, over target positions that are
/// entities. Zero when the target mentions no entity.
inline double entity_loss(const ModelParams& params, const std::vector<DecoderStep>& steps,
                          const std::vector<int>& target_ids, const Vocabulary& vocab) {
  if (steps.size() != target_ids.size())
    throw DimensionError("entity_loss: steps and targets misaligned");
  const std::vector<int> ents = vocab.entity_ids();
  double sum = 0.0;
  int n = 0;
  for (std::size_t t = 0; t < target_ids.size(); ++t) {
    if (!vocab.is_entity(target_ids[t])) continue;
    sum += detail::entity_position_loss(params.embedding, steps[t].p, target_ids[t], ents, vocab)
               .loss;
    ++n;
  }
  return n == 0 ? 0.0 : sum / n;
}

namespace detail {

/// Full teacher-forced (or self-fed) forward pass over one example, keeping
/// everything the backward pass will need.
struct StepCache {
  int fed_id = -1;
  LstmCache lstm;
  AttnCache att;
  Vec logits;
  Vec p;
};

struct ExampleCache {
  std::vector<LstmCache> enc;
  EncoderTrace trace;
  std::vector<StepCache> steps;
  std::vector<std::pair<int, EntityPosCache>> entity_positions;  // (step index, cache)
  AttnCache intent_att;   // when the intent head runs once per example
  Vec intent_tanh;        // P
  Vec intent_logits;      // n_intents
  Vec intent_p;
  double vocab_ce_sum = 0.0;   // per-token CE summed over the target
  double intent_ce = 0.0;
  double entity_mean = 0.0;    // per-example mean over entity positions
  int n_target_tokens = 0;
};

inline ExampleCache forward_example(const ModelParams& params, const TrainingPair& pair,
                                    const Vocabulary& vocab, const std::vector<int>& entity_ids,
                                    bool teacher_forcing, bool want_entity = true) {
  if (pair.target.empty()) throw ValidationError("forward_example: empty target");
  const int H = params.hidden;
  ExampleCache ex;
  ex.enc = encode_full(params, pair.input);
  ex.trace = trace_of(ex.enc);

  Vec s = ex.trace.final_h, cell = ex.trace.final_c;
  int fed = Vocabulary::kSos;
  const auto T = static_cast<int>(pair.target.size());
  ex.steps.reserve(static_cast<std::size_t>(T));
  double entity_sum = 0.0;
  for (int t = 0; t < T; ++t) {
    StepCache sc;
    sc.fed_id = fed;
    sc.att = attend_full(params, s, ex.trace);
    Vec x(params.dec.input());
    x.head(params.embedding.dim()) = params.embedding.vectors.row(fed);
    x.tail(H) = sc.att.ctx;
    sc.lstm = lstm_forward(params.dec, x, s, cell);
    Vec cat(2 * H);
    cat.head(H) = sc.lstm.h;
    cat.tail(H) = sc.att.ctx;
    sc.logits = params.W_out * cat + params.b_out;
    sc.p = softmax(sc.logits);

    const int gold = pair.target[static_cast<std::size_t>(t)];
    if (gold < 0 || gold >= params.vocab_size())
      throw LookupError("forward_example: target id out of range");
    ex.vocab_ce_sum += -std::log(std::max(sc.p(gold), 1e-300));
    if (want_entity && vocab.is_entity(gold)) {
      ex.entity_positions.emplace_back(
          t, entity_position_loss(params.embedding, sc.p, gold, entity_ids, vocab));
      entity_sum += ex.entity_positions.back().second.loss;
    }

    s = sc.lstm.h;
    cell = sc.lstm.c;
    if (teacher_forcing) {
      fed = gold;
    } else {
      int best;
      sc.p.maxCoeff(&best);
      fed = best;
    }
    ex.steps.push_back(std::move(sc));
  }
  ex.n_target_tokens = T;
  if (!ex.entity_positions.empty())
    ex.entity_mean = entity_sum / static_cast<double>(ex.entity_positions.size());

  if (params.intent_per_step) {
    Vec acc = Vec::Zero(params.n_intents);
    for (const StepCache& sc : ex.steps) {
      Vec z(2 * H);
      z.head(H) = sc.lstm.h;
      z.tail(H) = sc.att.ctx;
      acc += params.W_int_out * (params.W_int_in * z).array().tanh().matrix();
    }
    ex.intent_logits = acc / static_cast<double>(ex.steps.size());
  } else {
    ex.intent_att = attend_full(params, ex.trace.final_h, ex.trace);
    Vec z(2 * H);
    z.head(H) = ex.trace.final_h;
    z.tail(H) = ex.intent_att.ctx;
    ex.intent_tanh = (params.W_int_in * z).array().tanh();
    ex.intent_logits = params.W_int_out * ex.intent_tanh;
  }
  ex.intent_p = softmax(ex.intent_logits);
  if (pair.intent.id < 0 || pair.intent.id >= params.n_intents)
    throw LookupError("forward_example: intent id out of range");
  ex.intent_ce = -std::log(std::max(ex.intent_p(pair.intent.id), 1e-300));
  return ex;
}

}  // namespace detail

/// Teacher-forced multi-task loss over a batch: mean per-token vocabulary
/// cross-entropy + mean intent cross-entropy + mean per-example entity loss.
inline LossBreakdown total_loss(const ModelParams& params,
                                const std::vector<TrainingPair>& batch,
                                const Vocabulary& vocab, bool teacher_forcing = true,
                                const LossMask& mask = {}) {
  if (batch.empty()) throw ValidationError("total_loss: empty batch");
  params.check_consistent();
  const std::vector<int> ents = vocab.entity_ids();
  double vocab_sum = 0.0, intent_sum = 0.0, entity_sum = 0.0;
  long total_tokens = 0;
  for (const TrainingPair& pair : batch) {
    const auto ex =
        detail::forward_example(params, pair, vocab, ents, teacher_forcing, mask.entity);
    vocab_sum += ex.vocab_ce_sum;
    total_tokens += ex.n_target_tokens;
    if (mask.intent) intent_sum += ex.intent_ce;
    entity_sum += ex.entity_mean;
  }
  LossBreakdown l;
  l.vocab_loss = vocab_sum / static_cast<double>(total_tokens);
  l.intent_loss = intent_sum / static_cast<double>(batch.size());
  l.entity_loss = entity_sum / static_cast<double>(batch.size());
  l.total = l.vocab_loss + l.intent_loss + l.entity_loss;
  if (!std::isfinite(l.total)) throw NumericError("total_loss: non-finite loss");
  return l;
}

/// Fraction of teacher-forced target positions whose argmax matches the gold
/// token.
inline double teacher_forced_accuracy(const ModelParams& params,
                                      const std::vector<TrainingPair>& pairs,
                                      const Vocabulary& vocab) {
  const std::vector<int> ents = vocab.entity_ids();
  long correct = 0, total = 0;
  for (const TrainingPair& pair : pairs) {
    const auto ex = detail::forward_example(params, pair, vocab, ents, true);
    for (std::size_t t = 0; t < ex.steps.size(); ++t) {
      int best;
      ex.steps[t].p.maxCoeff(&best);
      if (best == pair.target[t]) ++correct;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

inline double intent_accuracy(const ModelParams& params, const std::vector<TrainingPair>& pairs,
                              const Vocabulary& vocab) {
  if (pairs.empty()) return 0.0;
  const std::vector<int> ents = vocab.entity_ids();
  long correct = 0;
  for (const TrainingPair& pair : pairs) {
    const auto ex = detail::forward_example(params, pair, vocab, ents, true);
    int best;
    ex.intent_p.maxCoeff(&best);
    if (best == pair.intent.id) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

}  // namespace kgdl
