#ifndef INK_OPS_HPP
#define INK_OPS_HPP

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ink/tensor.hpp"

// Forward and backward kernels for the layer set the segmentation nets
// need. Convolutions run as im2col + Eigen GEMM; everything else is a
// direct loop or Eigen array expression. All backward functions return
// exact analytic gradients (checked against central differences in the
// test suite).

namespace ink {

inline Index conv_out_extent(Index in, Index k, Index stride, Index pad) {
  return (in + 2 * pad - k) / stride + 1;
}

namespace detail {

template <typename S>
void check_conv_args(const Tensor4<S>& input, const Tensor4<S>& kernel,
                     Index stride, Index padding) {
  if (kernel.h() != kernel.w())
    throw ShapeError("conv2d: kernel must be square, got " + kernel.shape().str());
  if (stride != 1 && stride != 2)
    throw UsageError("conv2d: stride must be 1 or 2, got " + std::to_string(stride));
  if (padding < 0) throw UsageError("conv2d: negative padding");
  if (input.c() != kernel.c())
    throw ShapeError("conv2d: input channels " + input.shape().str() +
                     " do not match kernel " + kernel.shape().str());
  Index oh = conv_out_extent(input.h(), kernel.h(), stride, padding);
  Index ow = conv_out_extent(input.w(), kernel.w(), stride, padding);
  if (oh < 1 || ow < 1)
    throw ShapeError("conv2d: kernel " + kernel.shape().str() +
                     " exceeds padded input " + input.shape().str() +
                     ", output would be empty");
}

// Patch matrix for one batch item: rows (c_in*k*k), cols (oh*ow).
template <typename S>
void im2col(const Tensor4<S>& input, Index item, Index k, Index stride,
            Index pad, Index oh, Index ow, RowMat<S>& cols) {
  const Index ci_n = input.c(), ih = input.h(), iw = input.w();
  cols.setZero(ci_n * k * k, oh * ow);
  for (Index ci = 0; ci < ci_n; ++ci) {
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Index row = (ci * k + ky) * k + kx;
        for (Index oy = 0; oy < oh; ++oy) {
          const Index y = oy * stride + ky - pad;
          if (y < 0 || y >= ih) continue;
          for (Index ox = 0; ox < ow; ++ox) {
            const Index x = ox * stride + kx - pad;
            if (x < 0 || x >= iw) continue;
            cols(row, oy * ow + ox) = input.at(item, ci, y, x);
          }
        }
      }
    }
  }
}

// Scatter-add of a patch matrix back onto the input raster.
template <typename S>
void col2im_add(const RowMat<S>& cols, Index item, Index k, Index stride,
                Index pad, Index oh, Index ow, Tensor4<S>& input_grad) {
  const Index ci_n = input_grad.c(), ih = input_grad.h(), iw = input_grad.w();
  for (Index ci = 0; ci < ci_n; ++ci) {
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Index row = (ci * k + ky) * k + kx;
        for (Index oy = 0; oy < oh; ++oy) {
          const Index y = oy * stride + ky - pad;
          if (y < 0 || y >= ih) continue;
          for (Index ox = 0; ox < ow; ++ox) {
            const Index x = ox * stride + kx - pad;
            if (x < 0 || x >= iw) continue;
            input_grad.at(item, ci, y, x) += cols(row, oy * ow + ox);
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Cross-correlation with square kernel (c_out, c_in, k, k) plus bias.
template <typename S>
Tensor4<S> conv2d(const Tensor4<S>& input, const Tensor4<S>& kernel,
                  const VecX<S>& bias, Index stride, Index padding) {
  detail::check_conv_args(input, kernel, stride, padding);
  const Index k = kernel.h(), c_out = kernel.n();
  if (bias.size() != c_out)
    throw ShapeError("conv2d: bias size " + std::to_string(bias.size()) +
                     " does not match output channels " + std::to_string(c_out));
  const Index oh = conv_out_extent(input.h(), k, stride, padding);
  const Index ow = conv_out_extent(input.w(), k, stride, padding);
  Tensor4<S> out({input.n(), c_out, oh, ow});

  Eigen::Map<const RowMat<S>> kmat(kernel.data().data(), c_out, kernel.c() * k * k);
  RowMat<S> cols;
  for (Index item = 0; item < input.n(); ++item) {
    detail::im2col(input, item, k, stride, padding, oh, ow, cols);
    Eigen::Map<RowMat<S>> omat(out.data().data() + item * c_out * oh * ow,
                               c_out, oh * ow);
    omat.noalias() = kmat * cols;
    omat.colwise() += bias.matrix();
  }
  return out;
}

template <typename S>
struct Conv2dGrads {
  Tensor4<S> input;
  Tensor4<S> kernel;
  VecX<S> bias;
};

template <typename S>
Conv2dGrads<S> conv2d_backward(const Tensor4<S>& input, const Tensor4<S>& kernel,
                               Index stride, Index padding,
                               const Tensor4<S>& upstream) {
  detail::check_conv_args(input, kernel, stride, padding);
  const Index k = kernel.h(), c_out = kernel.n();
  const Index oh = conv_out_extent(input.h(), k, stride, padding);
  const Index ow = conv_out_extent(input.w(), k, stride, padding);
  Shape4 expect{input.n(), c_out, oh, ow};
  if (!(upstream.shape() == expect))
    throw ShapeError("conv2d_backward: upstream shape " + upstream.shape().str() +
                     " does not match forward output " + expect.str());

  Conv2dGrads<S> g{Tensor4<S>(input.shape()), Tensor4<S>(kernel.shape()),
                   VecX<S>::Zero(c_out)};
  Eigen::Map<const RowMat<S>> kmat(kernel.data().data(), c_out, kernel.c() * k * k);
  Eigen::Map<RowMat<S>> kgrad(g.kernel.data().data(), c_out, kernel.c() * k * k);
  RowMat<S> cols, colgrad;
  for (Index item = 0; item < input.n(); ++item) {
    Eigen::Map<const RowMat<S>> up(upstream.data().data() + item * c_out * oh * ow,
                                   c_out, oh * ow);
    detail::im2col(input, item, k, stride, padding, oh, ow, cols);
    kgrad.noalias() += up * cols.transpose();
    g.bias += up.rowwise().sum().array();
    colgrad.noalias() = kmat.transpose() * up;
    detail::col2im_add(colgrad, item, k, stride, padding, oh, ow, g.input);
  }
  return g;
}

template <typename S>
struct MaxPool2Result {
  Tensor4<S> output;
  std::vector<Index> argmax;  // flat input offset feeding each output cell
};

/// 2x2 max pooling, stride 2. Ties go to the first element in row-major
/// scan order so gradients are deterministic.
template <typename S>
MaxPool2Result<S> maxpool2(const Tensor4<S>& input) {
  if (input.h() % 2 != 0 || input.w() % 2 != 0)
    throw ShapeError("maxpool2: spatial dims of " + input.shape().str() +
                     " are odd; pad the input to even extents first");
  const Index oh = input.h() / 2, ow = input.w() / 2;
  MaxPool2Result<S> r{Tensor4<S>({input.n(), input.c(), oh, ow}), {}};
  r.argmax.resize(r.output.size());
  Index o = 0;
  for (Index in = 0; in < input.n(); ++in)
    for (Index ic = 0; ic < input.c(); ++ic)
      for (Index oy = 0; oy < oh; ++oy)
        for (Index ox = 0; ox < ow; ++ox, ++o) {
          Index best = input.offset(in, ic, 2 * oy, 2 * ox);
          S best_v = input.data()[best];
          for (Index dy = 0; dy < 2; ++dy)
            for (Index dx = 0; dx < 2; ++dx) {
              Index idx = input.offset(in, ic, 2 * oy + dy, 2 * ox + dx);
              if (input.data()[idx] > best_v) {
                best = idx;
                best_v = input.data()[idx];
              }
            }
          r.output.data()[o] = best_v;
          r.argmax[o] = best;
        }
  return r;
}

template <typename S>
Tensor4<S> maxpool2_backward(Shape4 input_shape, const std::vector<Index>& argmax,
                             const Tensor4<S>& upstream) {
  if (static_cast<Index>(argmax.size()) != upstream.size())
    throw ShapeError("maxpool2_backward: argmax map size does not match upstream " +
                     upstream.shape().str());
  Tensor4<S> g(input_shape);
  for (Index o = 0; o < upstream.size(); ++o) g.data()[argmax[o]] += upstream.data()[o];
  return g;
}

/// Each pixel replicated into a 2x2 block.
template <typename S>
Tensor4<S> upsample_nearest2(const Tensor4<S>& input) {
  Tensor4<S> out({input.n(), input.c(), input.h() * 2, input.w() * 2});
  for (Index in = 0; in < input.n(); ++in)
    for (Index ic = 0; ic < input.c(); ++ic)
      for (Index y = 0; y < input.h(); ++y)
        for (Index x = 0; x < input.w(); ++x) {
          S v = input.at(in, ic, y, x);
          out.at(in, ic, 2 * y, 2 * x) = v;
          out.at(in, ic, 2 * y, 2 * x + 1) = v;
          out.at(in, ic, 2 * y + 1, 2 * x) = v;
          out.at(in, ic, 2 * y + 1, 2 * x + 1) = v;
        }
  return out;
}

template <typename S>
Tensor4<S> upsample_nearest2_backward(Shape4 input_shape, const Tensor4<S>& upstream) {
  Shape4 expect{input_shape.n, input_shape.c, input_shape.h * 2, input_shape.w * 2};
  if (!(upstream.shape() == expect))
    throw ShapeError("upsample_nearest2_backward: upstream " + upstream.shape().str() +
                     " vs expected " + expect.str());
  Tensor4<S> g(input_shape);
  for (Index in = 0; in < input_shape.n; ++in)
    for (Index ic = 0; ic < input_shape.c; ++ic)
      for (Index y = 0; y < input_shape.h; ++y)
        for (Index x = 0; x < input_shape.w; ++x)
          g.at(in, ic, y, x) = upstream.at(in, ic, 2 * y, 2 * x) +
                               upstream.at(in, ic, 2 * y, 2 * x + 1) +
                               upstream.at(in, ic, 2 * y + 1, 2 * x) +
                               upstream.at(in, ic, 2 * y + 1, 2 * x + 1);
  return g;
}

namespace detail {

template <typename S>
void check_tconv_args(const Tensor4<S>& input, const Tensor4<S>& kernel) {
  if (kernel.h() != 2 || kernel.w() != 2)
    throw ShapeError("transposed_conv2: kernel must be (c_in, c_out, 2, 2), got " +
                     kernel.shape().str());
  if (input.c() != kernel.n())
    throw ShapeError("transposed_conv2: input channels " + input.shape().str() +
                     " do not match kernel " + kernel.shape().str());
}

}  // namespace detail

/// Transposed convolution, 2x2 kernel, stride 2: doubles the spatial dims.
/// Kernel layout is (c_in, c_out, 2, 2). With stride equal to the kernel
/// size the scatter windows never overlap, so each output pixel receives
/// exactly one contribution.
template <typename S>
Tensor4<S> transposed_conv2(const Tensor4<S>& input, const Tensor4<S>& kernel,
                            const VecX<S>& bias) {
  detail::check_tconv_args(input, kernel);
  const Index c_in = input.c(), c_out = kernel.c(), h = input.h(), w = input.w();
  if (bias.size() != c_out)
    throw ShapeError("transposed_conv2: bias size " + std::to_string(bias.size()) +
                     " does not match output channels " + std::to_string(c_out));
  Tensor4<S> out({input.n(), c_out, 2 * h, 2 * w});

  // kernel rows: c_in, cols: (c_out*2*2)
  Eigen::Map<const RowMat<S>> kmat(kernel.data().data(), c_in, c_out * 4);
  RowMat<S> scat;
  for (Index item = 0; item < input.n(); ++item) {
    Eigen::Map<const RowMat<S>> in(input.data().data() + item * c_in * h * w,
                                   c_in, h * w);
    scat.noalias() = kmat.transpose() * in;  // (c_out*4, h*w)
    for (Index co = 0; co < c_out; ++co)
      for (Index ky = 0; ky < 2; ++ky)
        for (Index kx = 0; kx < 2; ++kx) {
          const Index row = (co * 2 + ky) * 2 + kx;
          for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x)
              out.at(item, co, 2 * y + ky, 2 * x + kx) =
                  scat(row, y * w + x) + bias[co];
        }
  }
  return out;
}

template <typename S>
struct TConv2Grads {
  Tensor4<S> input;
  Tensor4<S> kernel;
  VecX<S> bias;
};

template <typename S>
TConv2Grads<S> transposed_conv2_backward(const Tensor4<S>& input,
                                         const Tensor4<S>& kernel,
                                         const Tensor4<S>& upstream) {
  detail::check_tconv_args(input, kernel);
  const Index c_in = input.c(), c_out = kernel.c(), h = input.h(), w = input.w();
  Shape4 expect{input.n(), c_out, 2 * h, 2 * w};
  if (!(upstream.shape() == expect))
    throw ShapeError("transposed_conv2_backward: upstream " + upstream.shape().str() +
                     " vs expected " + expect.str());

  TConv2Grads<S> g{Tensor4<S>(input.shape()), Tensor4<S>(kernel.shape()),
                   VecX<S>::Zero(c_out)};
  Eigen::Map<const RowMat<S>> kmat(kernel.data().data(), c_in, c_out * 4);
  Eigen::Map<RowMat<S>> kgrad(g.kernel.data().data(), c_in, c_out * 4);
  RowMat<S> up_gather(c_out * 4, h * w);
  for (Index item = 0; item < input.n(); ++item) {
    for (Index co = 0; co < c_out; ++co)
      for (Index ky = 0; ky < 2; ++ky)
        for (Index kx = 0; kx < 2; ++kx) {
          const Index row = (co * 2 + ky) * 2 + kx;
          for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x)
              up_gather(row, y * w + x) = upstream.at(item, co, 2 * y + ky, 2 * x + kx);
        }
    Eigen::Map<const RowMat<S>> in(input.data().data() + item * c_in * h * w,
                                   c_in, h * w);
    Eigen::Map<RowMat<S>> igrad(g.input.data().data() + item * c_in * h * w,
                                c_in, h * w);
    igrad.noalias() += kmat * up_gather;
    kgrad.noalias() += in * up_gather.transpose();
  }
  for (Index co = 0; co < c_out; ++co)
    for (Index item = 0; item < input.n(); ++item)
      for (Index y = 0; y < 2 * h; ++y)
        for (Index x = 0; x < 2 * w; ++x) g.bias[co] += upstream.at(item, co, y, x);
  return g;
}

template <typename S>
Tensor4<S> relu(const Tensor4<S>& input) {
  Tensor4<S> out(input.shape());
  out.data() = input.data().max(S(0));
  return out;
}

// Subgradient at 0 is taken as 0.
template <typename S>
Tensor4<S> relu_backward(const Tensor4<S>& input, const Tensor4<S>& upstream) {
  require_same_shape(input, upstream, "relu_backward");
  Tensor4<S> g(input.shape());
  g.data() = (input.data() > S(0)).select(upstream.data(), VecX<S>::Zero(input.size()));
  return g;
}

template <typename S>
Tensor4<S> sigmoid(const Tensor4<S>& input) {
  Tensor4<S> out(input.shape());
  out.data() = input.data().unaryExpr([](S x) {
    if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
    S e = std::exp(x);
    return e / (S(1) + e);
  });
  return out;
}

template <typename S>
Tensor4<S> sigmoid_backward(const Tensor4<S>& output, const Tensor4<S>& upstream) {
  require_same_shape(output, upstream, "sigmoid_backward");
  Tensor4<S> g(output.shape());
  g.data() = upstream.data() * output.data() * (S(1) - output.data());
  return g;
}

/// Channel stacking; a's channels come first.
template <typename S>
Tensor4<S> concat_channels(const Tensor4<S>& a, const Tensor4<S>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw ShapeError("concat_channels: shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  Tensor4<S> out({a.n(), a.c() + b.c(), a.h(), a.w()});
  const Index plane_a = a.c() * a.h() * a.w(), plane_b = b.c() * b.h() * b.w();
  for (Index item = 0; item < a.n(); ++item) {
    out.data().segment(item * (plane_a + plane_b), plane_a) =
        a.data().segment(item * plane_a, plane_a);
    out.data().segment(item * (plane_a + plane_b) + plane_a, plane_b) =
        b.data().segment(item * plane_b, plane_b);
  }
  return out;
}

template <typename S>
std::pair<Tensor4<S>, Tensor4<S>> concat_channels_backward(Shape4 a_shape,
                                                           Shape4 b_shape,
                                                           const Tensor4<S>& upstream) {
  Shape4 expect{a_shape.n, a_shape.c + b_shape.c, a_shape.h, a_shape.w};
  if (!(upstream.shape() == expect))
    throw ShapeError("concat_channels_backward: upstream " + upstream.shape().str() +
                     " vs expected " + expect.str());
  std::pair<Tensor4<S>, Tensor4<S>> g{Tensor4<S>(a_shape), Tensor4<S>(b_shape)};
  const Index plane_a = a_shape.c * a_shape.h * a_shape.w;
  const Index plane_b = b_shape.c * b_shape.h * b_shape.w;
  for (Index item = 0; item < a_shape.n; ++item) {
    g.first.data().segment(item * plane_a, plane_a) =
        upstream.data().segment(item * (plane_a + plane_b), plane_a);
    g.second.data().segment(item * plane_b, plane_b) =
        upstream.data().segment(item * (plane_a + plane_b) + plane_a, plane_b);
  }
  return g;
}

/// Channels [c_begin, c_end) of every batch item.
template <typename S>
Tensor4<S> slice_channels(const Tensor4<S>& t, Index c_begin, Index c_end) {
  if (c_begin < 0 || c_end > t.c() || c_begin >= c_end)
    throw ShapeError("slice_channels: bad range [" + std::to_string(c_begin) + "," +
                     std::to_string(c_end) + ") for " + t.shape().str());
  Tensor4<S> out({t.n(), c_end - c_begin, t.h(), t.w()});
  const Index plane = t.h() * t.w();
  for (Index item = 0; item < t.n(); ++item)
    out.data().segment(item * out.c() * plane, out.c() * plane) =
        t.data().segment((item * t.c() + c_begin) * plane, out.c() * plane);
  return out;
}

template <typename S>
Tensor4<S> add(const Tensor4<S>& a, const Tensor4<S>& b) {
  require_same_shape(a, b, "add");
  Tensor4<S> out(a.shape());
  out.data() = a.data() + b.data();
  return out;
}

}  // namespace ink

#endif  // INK_OPS_HPP
