#pragma once

#include "kgdl/model.hpp"

#include <cmath>
#include <vector>

namespace kgdl {

struct ModelGrads {
  Mat embedding;  // stays zero while embeddings are frozen
  LstmGrads enc, dec;
  Mat W_att;
  Vec v_att;
  Mat W_out;
  Vec b_out;
  Mat W_int_in, W_int_out;
  bool fine_tune = false;

  ModelGrads(const ModelParams& p, bool fine_tune_embeddings)
      : embedding(Mat::Zero(p.embedding.vectors.rows(), p.embedding.vectors.cols())),
        enc(p.enc),
        dec(p.dec),
        W_att(Mat::Zero(p.W_att.rows(), p.W_att.cols())),
        v_att(Vec::Zero(p.v_att.size())),
        W_out(Mat::Zero(p.W_out.rows(), p.W_out.cols())),
        b_out(Vec::Zero(p.b_out.size())),
        W_int_in(Mat::Zero(p.W_int_in.rows(), p.W_int_in.cols())),
        W_int_out(Mat::Zero(p.W_int_out.rows(), p.W_int_out.cols())),
        fine_tune(fine_tune_embeddings) {}

  double squared_norm() const {
    double n = enc.W.squaredNorm() + enc.U.squaredNorm() + enc.b.squaredNorm() +
               dec.W.squaredNorm() + dec.U.squaredNorm() + dec.b.squaredNorm() +
               W_att.squaredNorm() + v_att.squaredNorm() + W_out.squaredNorm() +
               b_out.squaredNorm() + W_int_in.squaredNorm() + W_int_out.squaredNorm();
    if (fine_tune) n += embedding.squaredNorm();
    return n;
  }

  double global_norm() const { return std::sqrt(squared_norm()); }

  void scale(double s) {
    embedding *= s;
    enc.W *= s;
    enc.U *= s;
    enc.b *= s;
    dec.W *= s;
    dec.U *= s;
    dec.b *= s;
    W_att *= s;
    v_att *= s;
    W_out *= s;
    b_out *= s;
    W_int_in *= s;
    W_int_out *= s;
  }

  bool all_finite() const {
    return embedding.allFinite() && enc.W.allFinite() && enc.U.allFinite() &&
           enc.b.allFinite() && dec.W.allFinite() && dec.U.allFinite() && dec.b.allFinite() &&
           W_att.allFinite() && v_att.allFinite() && W_out.allFinite() && b_out.allFinite() &&
           W_int_in.allFinite() && W_int_out.allFinite();
  }
};

struct BackwardResult {
  ModelGrads grads;
  LossBreakdown loss;
  long intent_correct = 0;
};

namespace detail {

/// Backward through one attention application. dctx is the upstream gradient
/// on the context vector; dquery and the per-position state gradients (added
/// into dH) come out.
inline void attention_backward(const ModelParams& p, const AttnCache& c, const EncoderTrace& tr,
                               const Vec& dctx, ModelGrads& g, Vec& dquery, Mat& dH) {
  const int H = p.hidden;
  dH += dctx * c.alpha.transpose();
  const Vec dalpha = tr.h.transpose() * dctx;
  const double mix = c.alpha.dot(dalpha);
  const Vec de = c.alpha.array() * (dalpha.array() - mix);
  g.v_att.noalias() += c.a * de;
  const Mat dpre = (p.v_att * de.transpose()).array() * (1.0 - c.a.array().square());
  const Vec dpre_sum = dpre.rowwise().sum();
  g.W_att.leftCols(H).noalias() += dpre_sum * c.query.transpose();
  g.W_att.rightCols(H).noalias() += dpre * tr.h.transpose();
  dquery.noalias() = p.W_att.leftCols(H).transpose() * dpre_sum;
  dH.noalias() += p.W_att.rightCols(H).transpose() * dpre;
}

}  // namespace detail

/// Gradients of the batch loss (same accumulation as total_loss) with respect
/// to every trainable tensor. Embedding gradients are produced only when
/// fine_tune_embeddings is set; with self-feeding the fed tokens are treated
/// as constants.
inline BackwardResult backward(const ModelParams& params, const std::vector<TrainingPair>& batch,
                               const Vocabulary& vocab, bool fine_tune_embeddings,
                               bool teacher_forcing = true, const LossMask& mask = {}) {
  if (batch.empty()) throw ValidationError("backward: empty batch");
  params.check_consistent();
  const int H = params.hidden;
  const int d = params.embedding.dim();
  const auto B = static_cast<double>(batch.size());
  const std::vector<int> ents = vocab.entity_ids();

  long total_tokens = 0;
  for (const TrainingPair& pair : batch) total_tokens += static_cast<long>(pair.target.size());
  const double vocab_scale = 1.0 / static_cast<double>(total_tokens);

  BackwardResult res{ModelGrads(params, fine_tune_embeddings), {}, 0};
  ModelGrads& g = res.grads;
  double vocab_sum = 0.0, intent_sum = 0.0, entity_sum = 0.0;

  for (const TrainingPair& pair : batch) {
    const auto ex =
        detail::forward_example(params, pair, vocab, ents, teacher_forcing, mask.entity);
    vocab_sum += ex.vocab_ce_sum;
    if (mask.intent) intent_sum += ex.intent_ce;
    entity_sum += ex.entity_mean;
    {
      int best;
      ex.intent_p.maxCoeff(&best);
      if (best == pair.intent.id) ++res.intent_correct;
    }

    const auto T = static_cast<int>(ex.steps.size());
    const int m = ex.trace.length();
    std::vector<Vec> dstate(static_cast<std::size_t>(T), Vec::Zero(H));
    std::vector<Vec> dctx(static_cast<std::size_t>(T), Vec::Zero(H));
    Mat dH_enc = Mat::Zero(H, m);
    Vec dfinal_c = Vec::Zero(H);

    // vocabulary cross-entropy at every step
    std::vector<Vec> dlogits(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      Vec dl = vocab_scale * ex.steps[static_cast<std::size_t>(t)].p;
      dl(pair.target[static_cast<std::size_t>(t)]) -= vocab_scale;
      dlogits[static_cast<std::size_t>(t)] = std::move(dl);
    }

    // entity cosine loss at entity positions
    if (!ex.entity_positions.empty()) {
      const double u = 1.0 / (B * static_cast<double>(ex.entity_positions.size()));
      for (const auto& [t, c] : ex.entity_positions) {
        const auto& p_t = ex.steps[static_cast<std::size_t>(t)].p;
        const int gold = pair.target[static_cast<std::size_t>(t)];
        const Vec corr = params.embedding.vectors.row(gold);
        const Vec corr_hat = corr / c.corr_norm;
        const Vec phi_hat = c.phi / c.phi_norm;
        const Vec dphi = (-u / c.phi_norm) * (corr_hat - c.cosine * phi_hat);
        const auto n_ent = static_cast<int>(ents.size());
        Vec dptilde(n_ent);
        for (int k = 0; k < n_ent; ++k)
          dptilde(k) = params.embedding.vectors.row(ents[static_cast<std::size_t>(k)]).dot(dphi);
        const double mix = dptilde.dot(c.ptilde);
        const Vec dp = (dptilde.array() - mix) / c.mass;
        double dot_p = 0.0;
        for (int k = 0; k < n_ent; ++k)
          dot_p += p_t(ents[static_cast<std::size_t>(k)]) * dp(k);
        Vec& dl = dlogits[static_cast<std::size_t>(t)];
        dl.noalias() -= dot_p * p_t;
        for (int k = 0; k < n_ent; ++k) {
          const int v = ents[static_cast<std::size_t>(k)];
          dl(v) += p_t(v) * dp(k);
        }
        if (fine_tune_embeddings) {
          for (int k = 0; k < n_ent; ++k)
            g.embedding.row(ents[static_cast<std::size_t>(k)]) +=
                c.ptilde(k) * dphi.transpose();
          g.embedding.row(gold) +=
              ((-u / c.corr_norm) * (phi_hat - c.cosine * corr_hat)).transpose();
        }
      }
    }

    // output projection, collecting state and context gradients per step
    for (int t = 0; t < T; ++t) {
      const auto& sc = ex.steps[static_cast<std::size_t>(t)];
      const Vec& dl = dlogits[static_cast<std::size_t>(t)];
      Vec cat(2 * H);
      cat.head(H) = sc.lstm.h;
      cat.tail(H) = sc.att.ctx;
      g.W_out.noalias() += dl * cat.transpose();
      g.b_out += dl;
      const Vec dcat = params.W_out.transpose() * dl;
      dstate[static_cast<std::size_t>(t)] += dcat.head(H);
      dctx[static_cast<std::size_t>(t)] += dcat.tail(H);
    }

    // intent head
    if (mask.intent) {
      const double intent_scale = 1.0 / B;
      Vec dlint = intent_scale * ex.intent_p;
      dlint(pair.intent.id) -= intent_scale;
      if (params.intent_per_step) {
        const double per = 1.0 / static_cast<double>(T);
        for (int t = 0; t < T; ++t) {
          const auto& sc = ex.steps[static_cast<std::size_t>(t)];
          Vec z(2 * H);
          z.head(H) = sc.lstm.h;
          z.tail(H) = sc.att.ctx;
          const Vec th = (params.W_int_in * z).array().tanh();
          g.W_int_out.noalias() += (per * dlint) * th.transpose();
          const Vec dth = params.W_int_out.transpose() * (per * dlint);
          const Vec dpre = dth.array() * (1.0 - th.array().square());
          g.W_int_in.noalias() += dpre * z.transpose();
          const Vec dz = params.W_int_in.transpose() * dpre;
          dstate[static_cast<std::size_t>(t)] += dz.head(H);
          dctx[static_cast<std::size_t>(t)] += dz.tail(H);
        }
      } else {
        g.W_int_out.noalias() += dlint * ex.intent_tanh.transpose();
        const Vec dth = params.W_int_out.transpose() * dlint;
        const Vec dpre = dth.array() * (1.0 - ex.intent_tanh.array().square());
        Vec z(2 * H);
        z.head(H) = ex.trace.final_h;
        z.tail(H) = ex.intent_att.ctx;
        g.W_int_in.noalias() += dpre * z.transpose();
        const Vec dz = params.W_int_in.transpose() * dpre;
        Vec dquery = Vec::Zero(H);
        detail::attention_backward(params, ex.intent_att, ex.trace, dz.tail(H), g, dquery, dH_enc);
        dH_enc.col(m - 1) += dz.head(H) + dquery;
      }
    }

    // decoder, last step first
    Vec ds_next = Vec::Zero(H), dcell_next = Vec::Zero(H);
    for (int t = T - 1; t >= 0; --t) {
      const auto& sc = ex.steps[static_cast<std::size_t>(t)];
      const Vec dh = dstate[static_cast<std::size_t>(t)] + ds_next;
      Vec dx(2 * d), dh_prev(H), dc_prev(H);
      lstm_backward(params.dec, sc.lstm, dh, dcell_next, g.dec, dx, dh_prev, dc_prev);
      if (fine_tune_embeddings) g.embedding.row(sc.fed_id) += dx.head(d).transpose();
      dctx[static_cast<std::size_t>(t)] += dx.tail(H);
      Vec dquery = Vec::Zero(H);
      detail::attention_backward(params, sc.att, ex.trace, dctx[static_cast<std::size_t>(t)], g,
                                 dquery, dH_enc);
      if (t > 0) {
        ds_next = dh_prev + dquery;
        dcell_next = dc_prev;
      } else {
        dH_enc.col(m - 1) += dh_prev + dquery;
        dfinal_c = dc_prev;
      }
    }

    // encoder, last position first
    Vec dh_rec = Vec::Zero(H), dc_rec = dfinal_c;
    for (int j = m - 1; j >= 0; --j) {
      const Vec dh = dH_enc.col(j) + dh_rec;
      Vec dx(d), dh_prev(H), dc_prev(H);
      lstm_backward(params.enc, ex.enc[static_cast<std::size_t>(j)], dh, dc_rec, g.enc, dx,
                    dh_prev, dc_prev);
      if (fine_tune_embeddings)
        g.embedding.row(pair.input[static_cast<std::size_t>(j)]) += dx.transpose();
      dh_rec = dh_prev;
      dc_rec = dc_prev;
    }
  }

  res.loss.vocab_loss = vocab_sum / static_cast<double>(total_tokens);
  res.loss.intent_loss = intent_sum / B;
  res.loss.entity_loss = entity_sum / B;
  res.loss.total = res.loss.vocab_loss + res.loss.intent_loss + res.loss.entity_loss;
  return res;
}

/// Scales all gradients so the global norm does not exceed max_norm.
inline void clip_global_norm(ModelGrads& g, double max_norm) {
  if (max_norm <= 0) throw ValidationError("clip_global_norm: max_norm must be positive");
  const double n = g.global_norm();
  if (n > max_norm) g.scale(max_norm / n);
}

}  // namespace kgdl
