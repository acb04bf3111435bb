#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "terramesh/autodiff.hpp"

namespace terramesh {

// Stacks single-channel (H,W) tensors into a (C,H,W) image.
inline Var stack_channels(Tape& tape, const std::vector<Var>& channels) {
  if (channels.empty()) throw std::invalid_argument("stack_channels: no channels");
  const Tensor& first = channels[0].value();
  if (first.rank() != 2) throw std::invalid_argument("stack_channels: channels must be (H,W)");
  const std::size_t h = first.dim(0), w = first.dim(1);
  std::vector<std::size_t> parents;
  for (const Var& c : channels) {
    if (!c.value().same_shape(first))
      detail::shape_error("stack_channels", c.value(), first);
    parents.push_back(c.id());
  }
  const std::size_t nc = channels.size();
  Tensor out({nc, h, w});
  for (std::size_t c = 0; c < nc; ++c) {
    const Tensor& src = channels[c].value();
    for (std::size_t i = 0; i < h * w; ++i) out[c * h * w + i] = src[i];
  }
  const std::size_t oid = tape.size();
  return tape.record(std::move(out), parents, [parents, oid, h, w](Tape& tp) {
    const Tensor& g = tp.grad(oid);
    for (std::size_t c = 0; c < parents.size(); ++c) {
      Tensor& gc = tp.grad(parents[c]);
      for (std::size_t i = 0; i < h * w; ++i) gc[i] += g[c * h * w + i];
    }
  });
}

namespace detail {

// 3x3 convolution with stride 2 and padding 1 over a (Cin,H,W) input. The
// forward and backward loops share the same index arithmetic.
struct Conv2dDims {
  std::size_t cin, cout, h, w, hout, wout;
};

inline Conv2dDims conv2d_dims(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.rank() != 3 || weight.rank() != 4 || bias.rank() != 1)
    throw std::invalid_argument("conv2d: expected input (C,H,W), weight (Co,Ci,3,3), bias (Co)");
  if (weight.dim(2) != 3 || weight.dim(3) != 3)
    throw std::invalid_argument("conv2d: only 3x3 kernels supported");
  if (weight.dim(1) != input.dim(0))
    throw std::invalid_argument("conv2d: input channels " + std::to_string(input.dim(0)) +
                                " do not match kernel " + std::to_string(weight.dim(1)));
  if (bias.dim(0) != weight.dim(0))
    throw std::invalid_argument("conv2d: bias size does not match output channels");
  Conv2dDims d;
  d.cin = input.dim(0);
  d.cout = weight.dim(0);
  d.h = input.dim(1);
  d.w = input.dim(2);
  d.hout = (d.h + 2 - 3) / 2 + 1;
  d.wout = (d.w + 2 - 3) / 2 + 1;
  return d;
}

}  // namespace detail

// Strided 3x3 convolution, the encoder's downsampling block.
inline Var conv2d_s2(const Var& input, const Var& weight, const Var& bias) {
  detail::require_same_tape(input, weight, "conv2d");
  detail::require_same_tape(input, bias, "conv2d");
  Tape& tape = *input.tape();
  const Tensor& x = input.value();
  const Tensor& wt = weight.value();
  const Tensor& b = bias.value();
  const auto d = detail::conv2d_dims(x, wt, b);

  Tensor out({d.cout, d.hout, d.wout});
  for (std::size_t co = 0; co < d.cout; ++co) {
    double* out_c = out.data() + co * d.hout * d.wout;
    for (std::size_t i = 0; i < d.hout * d.wout; ++i) out_c[i] = b[co];
    for (std::size_t ci = 0; ci < d.cin; ++ci) {
      const double* in_c = x.data() + ci * d.h * d.w;
      const double* w_cc = wt.data() + (co * d.cin + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = w_cc[ky * 3 + kx];
          if (wv == 0.0) continue;
          for (std::size_t oy = 0; oy < d.hout; ++oy) {
            const long iy = static_cast<long>(oy) * 2 + ky - 1;
            if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
            double* out_row = out_c + oy * d.wout;
            const double* in_row = in_c + iy * d.w;
            for (std::size_t ox = 0; ox < d.wout; ++ox) {
              const long ix = static_cast<long>(ox) * 2 + kx - 1;
              if (ix < 0 || ix >= static_cast<long>(d.w)) continue;
              out_row[ox] += wv * in_row[ix];
            }
          }
        }
      }
    }
  }

  const std::size_t xi = input.id(), wi = weight.id(), bi = bias.id();
  const std::size_t oi = tape.size();
  return tape.record(std::move(out), {xi, wi, bi}, [xi, wi, bi, oi, d](Tape& tp) {
    const Tensor& g = tp.grad(oi);
    const Tensor& x2 = tp.value(xi);
    const Tensor& w2 = tp.value(wi);
    Tensor& gx = tp.grad(xi);
    Tensor& gw = tp.grad(wi);
    Tensor& gb = tp.grad(bi);
    for (std::size_t co = 0; co < d.cout; ++co) {
      const double* g_c = g.data() + co * d.hout * d.wout;
      for (std::size_t i = 0; i < d.hout * d.wout; ++i) gb[co] += g_c[i];
      for (std::size_t ci = 0; ci < d.cin; ++ci) {
        const double* in_c = x2.data() + ci * d.h * d.w;
        double* gin_c = gx.data() + ci * d.h * d.w;
        const double* w_cc = w2.data() + (co * d.cin + ci) * 9;
        double* gw_cc = gw.data() + (co * d.cin + ci) * 9;
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const double wv = w_cc[ky * 3 + kx];
            double wacc = 0.0;
            for (std::size_t oy = 0; oy < d.hout; ++oy) {
              const long iy = static_cast<long>(oy) * 2 + ky - 1;
              if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
              const double* g_row = g_c + oy * d.wout;
              const double* in_row = in_c + iy * d.w;
              double* gin_row = gin_c + iy * d.w;
              for (std::size_t ox = 0; ox < d.wout; ++ox) {
                const long ix = static_cast<long>(ox) * 2 + kx - 1;
                if (ix < 0 || ix >= static_cast<long>(d.w)) continue;
                const double gv = g_row[ox];
                wacc += gv * in_row[ix];
                gin_row[ix] += gv * wv;
              }
            }
            gw_cc[ky * 3 + kx] += wacc;
          }
        }
      }
    }
  });
}

// Four feature maps of strictly decreasing resolution (strides 2,4,8,16).
struct FeaturePyramid {
  std::array<Var, 4> levels;

  std::array<std::size_t, 4> channel_counts() const {
    return {levels[0].value().dim(0), levels[1].value().dim(0), levels[2].value().dim(0),
            levels[3].value().dim(0)};
  }
  std::size_t total_channels() const {
    auto c = channel_counts();
    return c[0] + c[1] + c[2] + c[3];
  }
};

// Encoder parameters lifted onto a tape for one forward/backward pass.
struct EncoderVars {
  std::array<Var, 4> weights;
  std::array<Var, 4> biases;
};

// phi(C): four conv/ReLU stages over the stacked input image.
inline FeaturePyramid extract_features(const Var& input, const EncoderVars& enc) {
  FeaturePyramid pyr;
  Var x = input;
  for (int s = 0; s < 4; ++s) {
    x = relu(conv2d_s2(x, enc.weights[s], enc.biases[s]));
    pyr.levels[s] = x;
  }
  return pyr;
}

}  // namespace terramesh
