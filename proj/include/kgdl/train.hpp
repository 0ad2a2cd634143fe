#pragma once

#include "kgdl/backprop.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

namespace kgdl {

struct TrainConfig {
  int epochs = 1000;
  int batch_size = 128;
  double encoder_lr = 1e-4;   // also the intent head and fine-tuned embeddings
  double decoder_lr = 5e-4;   // decoder cell, attention, output projection
  double grad_clip_norm = 50.0;
  std::uint64_t seed = 42;
  bool teacher_forcing = true;
  bool fine_tune_embeddings = false;
  LossMask mask;  // ablation variants disable intent or entity terms

  void validate() const {
    if (epochs < 0) throw ValidationError("TrainConfig: epochs must be non-negative");
    if (batch_size < 1) throw ValidationError("TrainConfig: batch_size must be positive");
    if (encoder_lr <= 0 || decoder_lr <= 0)
      throw ValidationError("TrainConfig: learning rates must be positive");
    if (grad_clip_norm <= 0) throw ValidationError("TrainConfig: grad_clip_norm must be positive");
  }
};

namespace detail {

template <typename M>
struct AdamSlot {
  M m, v;
  explicit AdamSlot(const M& like) : m(M::Zero(like.rows(), like.cols())),
                                     v(M::Zero(like.rows(), like.cols())) {}
};

template <typename M>
inline void adam_update(M& param, const M& grad, AdamSlot<M>& slot, double lr, double t) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  slot.m = b1 * slot.m + (1.0 - b1) * grad;
  slot.v = b2 * slot.v.array().matrix() + (1.0 - b2) * grad.array().square().matrix();
  const double mc = 1.0 - std::pow(b1, t);
  const double vc = 1.0 - std::pow(b2, t);
  param.array() -= lr * (slot.m.array() / mc) / ((slot.v.array() / vc).sqrt() + eps);
}

struct AdamState {
  AdamSlot<Mat> embedding, enc_W, enc_U, dec_W, dec_U, W_att, W_out, W_int_in, W_int_out;
  AdamSlot<Vec> enc_b, dec_b, v_att, b_out;
  double t = 0.0;

  explicit AdamState(const ModelParams& p)
      : embedding(p.embedding.vectors),
        enc_W(p.enc.W),
        enc_U(p.enc.U),
        dec_W(p.dec.W),
        dec_U(p.dec.U),
        W_att(p.W_att),
        W_out(p.W_out),
        W_int_in(p.W_int_in),
        W_int_out(p.W_int_out),
        enc_b(p.enc.b),
        dec_b(p.dec.b),
        v_att(p.v_att),
        b_out(p.b_out) {}

  void step(ModelParams& p, const ModelGrads& g, const TrainConfig& cfg) {
    t += 1.0;
    adam_update(p.enc.W, g.enc.W, enc_W, cfg.encoder_lr, t);
    adam_update(p.enc.U, g.enc.U, enc_U, cfg.encoder_lr, t);
    adam_update(p.enc.b, g.enc.b, enc_b, cfg.encoder_lr, t);
    adam_update(p.W_int_in, g.W_int_in, W_int_in, cfg.encoder_lr, t);
    adam_update(p.W_int_out, g.W_int_out, W_int_out, cfg.encoder_lr, t);
    if (g.fine_tune) adam_update(p.embedding.vectors, g.embedding, embedding, cfg.encoder_lr, t);
    adam_update(p.dec.W, g.dec.W, dec_W, cfg.decoder_lr, t);
    adam_update(p.dec.U, g.dec.U, dec_U, cfg.decoder_lr, t);
    adam_update(p.dec.b, g.dec.b, dec_b, cfg.decoder_lr, t);
    adam_update(p.W_att, g.W_att, W_att, cfg.decoder_lr, t);
    adam_update(p.v_att, g.v_att, v_att, cfg.decoder_lr, t);
    adam_update(p.W_out, g.W_out, W_out, cfg.decoder_lr, t);
    adam_update(p.b_out, g.b_out, b_out, cfg.decoder_lr, t);
  }
};

}  // namespace detail

struct TrainEpochLog {
  int epoch = 0;
  LossBreakdown loss;
  double intent_acc = 0.0;
};

inline void save_training_log(const std::vector<TrainEpochLog>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write training log: " + path);
  out << "epoch,vocab_loss,intent_loss,entity_loss,total,intent_acc\n";
  out.precision(17);
  for (const auto& row : log)
    out << row.epoch << ',' << row.loss.vocab_loss << ',' << row.loss.intent_loss << ','
        << row.loss.entity_loss << ',' << row.loss.total << ',' << row.intent_acc << '\n';
}

/// Adam with separate encoder- and decoder-side learning rates and global
/// gradient-norm clipping. Deterministic under a fixed seed: the per-epoch
/// shuffle and every accumulation run in a fixed order.
inline ModelParams train_model(ModelParams params, const std::vector<TrainingPair>& pairs,
                               const Vocabulary& vocab, const TrainConfig& cfg,
                               std::vector<TrainEpochLog>* log = nullptr) {
  cfg.validate();
  params.check_consistent();
  if (pairs.empty()) throw ValidationError("train_model: no training pairs");
  detail::AdamState adam(params);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_rng(cfg.seed);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double vocab_sum = 0.0, intent_sum = 0.0, entity_sum = 0.0;
    long token_total = 0, intent_correct = 0;
    const auto n = pairs.size();
    for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(n, begin + static_cast<std::size_t>(cfg.batch_size));
      std::vector<TrainingPair> batch;
      batch.reserve(end - begin);
      long batch_tokens = 0;
      for (std::size_t k = begin; k < end; ++k) {
        batch.push_back(pairs[order[k]]);
        batch_tokens += static_cast<long>(batch.back().target.size());
      }
      BackwardResult res = backward(params, batch, vocab, cfg.fine_tune_embeddings,
                                    cfg.teacher_forcing, cfg.mask);
      if (!std::isfinite(res.loss.total) || !res.grads.all_finite())
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(begin / static_cast<std::size_t>(cfg.batch_size)));
      clip_global_norm(res.grads, cfg.grad_clip_norm);
      adam.step(params, res.grads, cfg);

      vocab_sum += res.loss.vocab_loss * static_cast<double>(batch_tokens);
      intent_sum += res.loss.intent_loss * static_cast<double>(batch.size());
      entity_sum += res.loss.entity_loss * static_cast<double>(batch.size());
      token_total += batch_tokens;
      intent_correct += res.intent_correct;
    }
    TrainEpochLog row;
    row.epoch = epoch;
    row.loss.vocab_loss = vocab_sum / static_cast<double>(token_total);
    row.loss.intent_loss = intent_sum / static_cast<double>(n);
    row.loss.entity_loss = entity_sum / static_cast<double>(n);
    row.loss.total = row.loss.vocab_loss + row.loss.intent_loss + row.loss.entity_loss;
    row.intent_acc = static_cast<double>(intent_correct) / static_cast<double>(n);
    if (log) log->push_back(row);
    if (epoch == 1 || epoch == cfg.epochs || epoch % 50 == 0)
      log_info("epoch " + std::to_string(epoch) + " total=" + std::to_string(row.loss.total) +
               " intent_acc=" + std::to_string(row.intent_acc));
  }
  params.embedding.check_finite("after model training");
  return params;
}

}  // namespace kgdl
