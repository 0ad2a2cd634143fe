#pragma once

#include "kgdl/common.hpp"

#include <cstdint>

namespace kgdl {

/// Four-gate recurrent cell, gates stacked [input; forget; candidate; output]
/// in the 4H rows of W, U, b.
struct LstmParams {
  Mat W;  // 4H x In
  Mat U;  // 4H x H
  Vec b;  // 4H

  int hidden() const { return static_cast<int>(U.cols()); }
  int input() const { return static_cast<int>(W.cols()); }
};

inline LstmParams lstm_init(int input, int hidden, std::mt19937_64& rng, double scale = 0.08) {
  LstmParams p;
  p.W = Mat(4 * hidden, input);
  p.U = Mat(4 * hidden, hidden);
  fill_uniform(p.W, -scale, scale, rng);
  fill_uniform(p.U, -scale, scale, rng);
  p.b = Vec::Zero(4 * hidden);
  p.b.segment(hidden, hidden).setConstant(1.0);  // forget gate starts open
  return p;
}

/// Everything the backward pass needs from one forward step.
struct LstmCache {
  Vec x, h_prev, c_prev;
  Vec i, f, g, o;  // post-activation gates
  Vec c, tanh_c, h;
};

inline LstmCache lstm_forward(const LstmParams& p, const Vec& x, const Vec& h_prev,
                              const Vec& c_prev) {
  const int H = p.hidden();
  if (x.size() != p.input()) throw DimensionError("lstm_forward: input size mismatch");
  LstmCache s;
  s.x = x;
  s.h_prev = h_prev;
  s.c_prev = c_prev;
  const Vec z = p.W * x + p.U * h_prev + p.b;
  s.i = (1.0 + (-z.segment(0, H).array()).exp()).inverse();
  s.f = (1.0 + (-z.segment(H, H).array()).exp()).inverse();
  s.g = z.segment(2 * H, H).array().tanh();
  s.o = (1.0 + (-z.segment(3 * H, H).array()).exp()).inverse();
  s.c = s.f.array() * c_prev.array() + s.i.array() * s.g.array();
  s.tanh_c = s.c.array().tanh();
  s.h = s.o.array() * s.tanh_c.array();
  return s;
}

struct LstmGrads {
  Mat W;
  Mat U;
  Vec b;

  explicit LstmGrads(const LstmParams& p)
      : W(Mat::Zero(p.W.rows(), p.W.cols())),
        U(Mat::Zero(p.U.rows(), p.U.cols())),
        b(Vec::Zero(p.b.size())) {}
};

/// Accumulates into g; writes the input-side gradients to dx/dh_prev/dc_prev.
inline void lstm_backward(const LstmParams& p, const LstmCache& s, const Vec& dh,
                          const Vec& dc_in, LstmGrads& g, Vec& dx, Vec& dh_prev, Vec& dc_prev) {
  const int H = p.hidden();
  const Vec dc = dc_in.array() + dh.array() * s.o.array() * (1.0 - s.tanh_c.array().square());
  Vec dz(4 * H);
  dz.segment(0, H) =
      dc.array() * s.g.array() * s.i.array() * (1.0 - s.i.array());            // input gate
  dz.segment(H, H) =
      dc.array() * s.c_prev.array() * s.f.array() * (1.0 - s.f.array());       // forget gate
  dz.segment(2 * H, H) = dc.array() * s.i.array() * (1.0 - s.g.array().square());
  dz.segment(3 * H, H) =
      dh.array() * s.tanh_c.array() * s.o.array() * (1.0 - s.o.array());       // output gate
  g.W.noalias() += dz * s.x.transpose();
  g.U.noalias() += dz * s.h_prev.transpose();
  g.b += dz;
  dx.noalias() = p.W.transpose() * dz;
  dh_prev.noalias() = p.U.transpose() * dz;
  dc_prev = dc.array() * s.f.array();
}

}  // namespace kgdl
