#include "ssgan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace ssgan {

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kConst: return "const";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kTranspose2d: return "transpose2d";
    case OpKind::kReshape: return "reshape";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kPadTo: return "pad_to";
    case OpKind::kBroadcastTo: return "broadcast_to";
    case OpKind::kSumAxes: return "sum_axes";
    case OpKind::kRelu: return "relu";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSquare: return "square";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kAffine: return "affine";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kConvT2d: return "conv_transpose2d";
    case OpKind::kConv2dWGrad: return "conv2d_wgrad";
    case OpKind::kConvT2dWGrad: return "conv_transpose2d_wgrad";
    case OpKind::kUpsample2x: return "upsample2x";
    case OpKind::kDownsample2xSum: return "downsample2x_sum";
  }
  return "?";
}

const Tensor& Variable::value() const { return node_->value; }
Tensor& Variable::value() { return node_->value; }
const std::vector<int64_t>& Variable::shape() const { return node_->value.shape(); }
DType Variable::dtype() const { return node_->value.dtype(); }
int64_t Variable::numel() const { return node_->value.numel(); }
bool Variable::requires_grad() const { return node_->requires_grad; }

Variable Variable::detach() const {
  auto n = std::make_shared<VarNode>();
  n->value = node_->value;
  n->kind = OpKind::kConst;
  return Variable(std::move(n));
}

Variable make_leaf(Tensor value) {
  auto n = std::make_shared<VarNode>();
  n->value = std::move(value);
  n->kind = OpKind::kLeaf;
  n->requires_grad = true;
  return Variable(std::move(n));
}

Variable make_constant(Tensor value) {
  auto n = std::make_shared<VarNode>();
  n->value = std::move(value);
  n->kind = OpKind::kConst;
  return Variable(std::move(n));
}

Variable Tape::record(OpKind kind, Tensor value, std::vector<Variable> inputs, OpAttrs attrs) {
  auto n = std::make_shared<VarNode>();
  n->value = std::move(value);
  n->kind = kind;
  n->inputs = std::move(inputs);
  n->attrs = std::move(attrs);
  n->tape_index = static_cast<int64_t>(nodes_.size());
  for (const auto& in : n->inputs) {
    if (in.requires_grad()) {
      n->requires_grad = true;
      break;
    }
  }
  nodes_.push_back(n);
  return Variable(std::move(n));
}

namespace ops {

namespace {

void check_dtype(const char* op, const Variable& a, const Variable& b) {
  if (a.dtype() != b.dtype()) {
    throw Error(std::string(op) + ": mixed dtypes " + dtype_name(a.dtype()) + " vs " +
                dtype_name(b.dtype()));
  }
}

Variable emit(Tape* tape, OpKind kind, Tensor value, std::vector<Variable> inputs,
              OpAttrs attrs = {}) {
  bool rg = false;
  for (const auto& in : inputs) rg = rg || in.requires_grad();
  if (tape == nullptr || !rg) return make_constant(std::move(value));
  return tape->record(kind, std::move(value), std::move(inputs), std::move(attrs));
}

// Strides padded to `rank`, zeroed on broadcast dims.
std::vector<int64_t> bcast_strides(const std::vector<int64_t>& shape, size_t rank) {
  std::vector<int64_t> strides(rank, 0);
  const auto own = row_major_strides(shape);
  const size_t off = rank - shape.size();
  for (size_t i = 0; i < shape.size(); ++i) {
    strides[off + i] = shape[i] == 1 ? 0 : own[i];
  }
  return strides;
}

template <class T, class F>
void ew_binary_kernel(const Tensor& a, const Tensor& b, Tensor& out, F f) {
  const T* pa = a.data<T>().data();
  const T* pb = b.data<T>().data();
  T* po = out.mut<T>().data();
  const int64_t n = out.numel();
  if (a.shape() == b.shape()) {
    for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
    return;
  }
  const auto& oshape = out.shape();
  const size_t rank = oshape.size();
  const auto sa = bcast_strides(a.shape(), rank);
  const auto sb = bcast_strides(b.shape(), rank);
  std::vector<int64_t> idx(rank, 0);
  int64_t offa = 0, offb = 0;
  for (int64_t i = 0; i < n; ++i) {
    po[i] = f(pa[offa], pb[offb]);
    for (size_t d = rank; d-- > 0;) {
      ++idx[d];
      offa += sa[d];
      offb += sb[d];
      if (idx[d] < oshape[d]) break;
      offa -= sa[d] * oshape[d];
      offb -= sb[d] * oshape[d];
      idx[d] = 0;
    }
  }
}

template <class FF, class FD>
Variable ew_binary(Tape* tape, OpKind kind, const Variable& a, const Variable& b, FF ff, FD fd) {
  check_dtype(op_name(kind), a, b);
  auto oshape = broadcast_shapes(a.shape(), b.shape(), op_name(kind));
  Tensor out = Tensor::empty(oshape, a.dtype());
  if (a.dtype() == DType::F32) {
    ew_binary_kernel<float>(a.value(), b.value(), out, ff);
  } else {
    ew_binary_kernel<double>(a.value(), b.value(), out, fd);
  }
  return emit(tape, kind, std::move(out), {a, b});
}

template <class F>
Variable ew_unary(Tape* tape, OpKind kind, const Variable& a, F f, OpAttrs attrs = {}) {
  Tensor out = Tensor::empty(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.value().data<T>().data();
    T* po = out.mut<T>().data();
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = static_cast<T>(f(static_cast<double>(pa[i])));
  });
  return emit(tape, kind, std::move(out), {a}, std::move(attrs));
}

std::vector<int64_t> normalize_axes(const char* op, std::vector<int64_t> axes, int64_t rank) {
  for (auto& ax : axes) {
    if (ax < 0) ax += rank;
    if (ax < 0 || ax >= rank) {
      throw Error(std::string(op) + ": axis " + std::to_string(ax) + " out of range for rank " +
                  std::to_string(rank));
    }
  }
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  return axes;
}

struct Conv2dDims {
  int64_t batch, cin, h, w, cout, kh, kw, oh, ow;
};

Conv2dDims conv2d_dims(const char* op, const std::vector<int64_t>& xs,
                       const std::vector<int64_t>& ws, int64_t stride, int64_t pad,
                       bool transposed) {
  if (xs.size() != 4 || ws.size() != 4) {
    throw Error(std::string(op) + ": expected 4-d input and kernel, got " + shape_str(xs) +
                " and " + shape_str(ws));
  }
  if (stride < 1 || pad < 0) {
    throw Error(std::string(op) + ": invalid stride/pad " + std::to_string(stride) + "/" +
                std::to_string(pad));
  }
  Conv2dDims d{};
  d.batch = xs[0];
  d.cin = xs[1];
  d.h = xs[2];
  d.w = xs[3];
  d.kh = ws[2];
  d.kw = ws[3];
  if (transposed) {
    if (ws[0] != d.cin) {
      throw Error(std::string(op) + ": kernel in-channels mismatch: input " + shape_str(xs) +
                  " kernel " + shape_str(ws));
    }
    d.cout = ws[1];
    d.oh = (d.h - 1) * stride - 2 * pad + d.kh;
    d.ow = (d.w - 1) * stride - 2 * pad + d.kw;
    if (d.oh <= 0 || d.ow <= 0) {
      throw Error(std::string(op) + ": non-positive output extent " + std::to_string(d.oh) + "x" +
                  std::to_string(d.ow));
    }
  } else {
    if (ws[1] != d.cin) {
      throw Error(std::string(op) + ": kernel in-channels mismatch: input " + shape_str(xs) +
                  " kernel " + shape_str(ws));
    }
    d.cout = ws[0];
    const int64_t eh = d.h + 2 * pad - d.kh;
    const int64_t ew = d.w + 2 * pad - d.kw;
    if (eh < 0 || ew < 0 || eh % stride != 0 || ew % stride != 0) {
      throw Error(std::string(op) + ": input " + shape_str(xs) + " with kernel " + shape_str(ws) +
                  " stride " + std::to_string(stride) + " pad " + std::to_string(pad) +
                  " does not tile evenly");
    }
    d.oh = eh / stride + 1;
    d.ow = ew / stride + 1;
  }
  return d;
}

template <class T>
void conv2d_kernel(const T* x, const T* w, T* out, const Conv2dDims& d, int64_t stride,
                   int64_t pad) {
  const int64_t xhw = d.h * d.w;
  const int64_t ohw = d.oh * d.ow;
  const int64_t khw = d.kh * d.kw;
  for (int64_t b = 0; b < d.batch; ++b) {
    const T* xb = x + b * d.cin * xhw;
    T* ob = out + b * d.cout * ohw;
    for (int64_t co = 0; co < d.cout; ++co) {
      const T* wc = w + co * d.cin * khw;
      T* oc = ob + co * ohw;
      for (int64_t oh = 0; oh < d.oh; ++oh) {
        for (int64_t ow = 0; ow < d.ow; ++ow) {
          T acc = 0;
          const int64_t ih0 = oh * stride - pad;
          const int64_t iw0 = ow * stride - pad;
          for (int64_t ci = 0; ci < d.cin; ++ci) {
            const T* xc = xb + ci * xhw;
            const T* wk = wc + ci * khw;
            for (int64_t kh = 0; kh < d.kh; ++kh) {
              const int64_t ih = ih0 + kh;
              if (ih < 0 || ih >= d.h) continue;
              const int64_t klo = std::max<int64_t>(0, -iw0);
              const int64_t khi = std::min(d.kw, d.w - iw0);
              const T* xrow = xc + ih * d.w + iw0;
              const T* wrow = wk + kh * d.kw;
              for (int64_t kw = klo; kw < khi; ++kw) acc += xrow[kw] * wrow[kw];
            }
          }
          oc[oh * d.ow + ow] = acc;
        }
      }
    }
  }
}

template <class T>
void tconv2d_kernel(const T* x, const T* w, T* out, const Conv2dDims& d, int64_t stride,
                    int64_t pad) {
  // Scatter-add: each input site spreads a kernel-weighted copy into the
  // output window.
  const int64_t xhw = d.h * d.w;
  const int64_t ohw = d.oh * d.ow;
  const int64_t khw = d.kh * d.kw;
  for (int64_t b = 0; b < d.batch; ++b) {
    const T* xb = x + b * d.cin * xhw;
    T* ob = out + b * d.cout * ohw;
    for (int64_t ci = 0; ci < d.cin; ++ci) {
      const T* xc = xb + ci * xhw;
      const T* wci = w + ci * d.cout * khw;
      for (int64_t h = 0; h < d.h; ++h) {
        for (int64_t wpos = 0; wpos < d.w; ++wpos) {
          const T xv = xc[h * d.w + wpos];
          if (xv == T(0)) continue;
          const int64_t oh0 = h * stride - pad;
          const int64_t ow0 = wpos * stride - pad;
          const int64_t klo = std::max<int64_t>(0, -ow0);
          const int64_t khi = std::min(d.kw, d.ow - ow0);
          if (klo >= khi) continue;
          for (int64_t co = 0; co < d.cout; ++co) {
            const T* wk = wci + co * khw;
            T* oc = ob + co * ohw;
            for (int64_t kh = 0; kh < d.kh; ++kh) {
              const int64_t oh = oh0 + kh;
              if (oh < 0 || oh >= d.oh) continue;
              T* orow = oc + oh * d.ow + ow0;
              const T* wrow = wk + kh * d.kw;
              for (int64_t kw = klo; kw < khi; ++kw) orow[kw] += xv * wrow[kw];
            }
          }
        }
      }
    }
  }
}

// gw[co,ci,kh,kw] = sum_{b,oh,ow} g[b,co,oh,ow] * x[b,ci,oh*s-p+kh, ow*s-p+kw]
template <class T>
void conv2d_wgrad_kernel(const T* x, const T* g, T* gw, const Conv2dDims& d, int64_t stride,
                         int64_t pad) {
  const int64_t xhw = d.h * d.w;
  const int64_t ohw = d.oh * d.ow;
  const int64_t khw = d.kh * d.kw;
  for (int64_t b = 0; b < d.batch; ++b) {
    const T* xb = x + b * d.cin * xhw;
    const T* gb = g + b * d.cout * ohw;
    for (int64_t co = 0; co < d.cout; ++co) {
      const T* gc = gb + co * ohw;
      for (int64_t oh = 0; oh < d.oh; ++oh) {
        for (int64_t ow = 0; ow < d.ow; ++ow) {
          const T gv = gc[oh * d.ow + ow];
          if (gv == T(0)) continue;
          const int64_t ih0 = oh * stride - pad;
          const int64_t iw0 = ow * stride - pad;
          const int64_t klo = std::max<int64_t>(0, -iw0);
          const int64_t khi = std::min(d.kw, d.w - iw0);
          if (klo >= khi) continue;
          for (int64_t ci = 0; ci < d.cin; ++ci) {
            const T* xc = xb + ci * xhw;
            T* gwrow = gw + (co * d.cin + ci) * khw;
            for (int64_t kh = 0; kh < d.kh; ++kh) {
              const int64_t ih = ih0 + kh;
              if (ih < 0 || ih >= d.h) continue;
              const T* xrow = xc + ih * d.w + iw0;
              T* grow = gwrow + kh * d.kw;
              for (int64_t kw = klo; kw < khi; ++kw) grow[kw] += gv * xrow[kw];
            }
          }
        }
      }
    }
  }
}

// gw[ci,co,kh,kw] = sum_{b,h,w} x[b,ci,h,w] * g[b,co,h*s-p+kh, w*s-p+kw]
template <class T>
void tconv2d_wgrad_kernel(const T* x, const T* g, T* gw, const Conv2dDims& d, int64_t stride,
                          int64_t pad) {
  const int64_t xhw = d.h * d.w;
  const int64_t ohw = d.oh * d.ow;
  const int64_t khw = d.kh * d.kw;
  for (int64_t b = 0; b < d.batch; ++b) {
    const T* xb = x + b * d.cin * xhw;
    const T* gb = g + b * d.cout * ohw;
    for (int64_t ci = 0; ci < d.cin; ++ci) {
      const T* xc = xb + ci * xhw;
      for (int64_t h = 0; h < d.h; ++h) {
        for (int64_t wpos = 0; wpos < d.w; ++wpos) {
          const T xv = xc[h * d.w + wpos];
          if (xv == T(0)) continue;
          const int64_t oh0 = h * stride - pad;
          const int64_t ow0 = wpos * stride - pad;
          const int64_t klo = std::max<int64_t>(0, -ow0);
          const int64_t khi = std::min(d.kw, d.ow - ow0);
          if (klo >= khi) continue;
          for (int64_t co = 0; co < d.cout; ++co) {
            const T* gc = gb + co * ohw;
            T* gwrow = gw + (ci * d.cout + co) * khw;
            for (int64_t kh = 0; kh < d.kh; ++kh) {
              const int64_t oh = oh0 + kh;
              if (oh < 0 || oh >= d.oh) continue;
              const T* grow = gc + oh * d.ow + ow0;
              T* gwr = gwrow + kh * d.kw;
              for (int64_t kw = klo; kw < khi; ++kw) gwr[kw] += xv * grow[kw];
            }
          }
        }
      }
    }
  }
}

Tensor conv2d_forward(const Tensor& x, const Tensor& w, int64_t stride, int64_t pad) {
  const auto d = conv2d_dims("conv2d", x.shape(), w.shape(), stride, pad, false);
  Tensor out = Tensor::zeros({d.batch, d.cout, d.oh, d.ow}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    conv2d_kernel<T>(x.data<T>().data(), w.data<T>().data(), out.mut<T>().data(), d, stride, pad);
  });
  return out;
}

Tensor tconv2d_forward(const Tensor& x, const Tensor& w, int64_t stride, int64_t pad) {
  const auto d = conv2d_dims("conv_transpose2d", x.shape(), w.shape(), stride, pad, true);
  Tensor out = Tensor::zeros({d.batch, d.cout, d.oh, d.ow}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    tconv2d_kernel<T>(x.data<T>().data(), w.data<T>().data(), out.mut<T>().data(), d, stride, pad);
  });
  return out;
}

Variable conv2d_wgrad(Tape* tape, const Variable& x, const Variable& g, int64_t stride,
                      int64_t pad, const std::vector<int64_t>& wshape) {
  const auto d = conv2d_dims("conv2d_wgrad", x.shape(), wshape, stride, pad, false);
  Tensor out = Tensor::zeros(wshape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    conv2d_wgrad_kernel<T>(x.value().data<T>().data(), g.value().data<T>().data(),
                           out.mut<T>().data(), d, stride, pad);
  });
  OpAttrs attrs;
  attrs.stride = stride;
  attrs.pad = pad;
  attrs.ints2 = wshape;
  return emit(tape, OpKind::kConv2dWGrad, std::move(out), {x, g}, std::move(attrs));
}

Variable tconv2d_wgrad(Tape* tape, const Variable& x, const Variable& g, int64_t stride,
                       int64_t pad, const std::vector<int64_t>& wshape) {
  const auto d = conv2d_dims("conv_transpose2d_wgrad", x.shape(), wshape, stride, pad, true);
  Tensor out = Tensor::zeros(wshape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    tconv2d_wgrad_kernel<T>(x.value().data<T>().data(), g.value().data<T>().data(),
                            out.mut<T>().data(), d, stride, pad);
  });
  OpAttrs attrs;
  attrs.stride = stride;
  attrs.pad = pad;
  attrs.ints2 = wshape;
  return emit(tape, OpKind::kConvT2dWGrad, std::move(out), {x, g}, std::move(attrs));
}

Variable pad_to(Tape* tape, const Variable& a, const std::vector<int64_t>& target,
                const std::vector<int64_t>& starts) {
  Tensor out = Tensor::zeros(target, a.dtype());
  const auto& ashape = a.shape();
  const size_t rank = target.size();
  const auto ostr = row_major_strides(target);
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.value().data<T>().data();
    T* po = out.mut<T>().data();
    std::vector<int64_t> idx(rank, 0);
    int64_t off = 0;
    for (size_t d = 0; d < rank; ++d) off += starts[d] * ostr[d];
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) {
      po[off] = pa[i];
      for (size_t d = rank; d-- > 0;) {
        ++idx[d];
        off += ostr[d];
        if (idx[d] < ashape[d]) break;
        off -= ostr[d] * ashape[d];
        idx[d] = 0;
      }
    }
  });
  OpAttrs attrs;
  attrs.ints = starts;
  attrs.ints2 = ashape;
  return emit(tape, OpKind::kPadTo, std::move(out), {a}, std::move(attrs));
}

Tensor mask_where_positive(const Tensor& x, double lo_value) {
  Tensor m = Tensor::empty(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.data<T>().data();
    T* pm = m.mut<T>().data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) pm[i] = px[i] > T(0) ? T(1) : static_cast<T>(lo_value);
  });
  return m;
}

}  // namespace

Variable add(Tape* tape, const Variable& a, const Variable& b) {
  return ew_binary(tape, OpKind::kAdd, a, b, [](float x, float y) { return x + y; },
                   [](double x, double y) { return x + y; });
}

Variable sub(Tape* tape, const Variable& a, const Variable& b) {
  return ew_binary(tape, OpKind::kSub, a, b, [](float x, float y) { return x - y; },
                   [](double x, double y) { return x - y; });
}

Variable mul(Tape* tape, const Variable& a, const Variable& b) {
  return ew_binary(tape, OpKind::kMul, a, b, [](float x, float y) { return x * y; },
                   [](double x, double y) { return x * y; });
}

Variable divide(Tape* tape, const Variable& a, const Variable& b) {
  return ew_binary(tape, OpKind::kDiv, a, b, [](float x, float y) { return x / y; },
                   [](double x, double y) { return x / y; });
}

Variable matmul(Tape* tape, const Variable& a, const Variable& b) {
  check_dtype("matmul", a, b);
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0]) {
    throw Error("matmul: incompatible shapes " + shape_str(as) + " and " + shape_str(bs));
  }
  const int64_t m = as[0], k = as[1], n = bs[1];
  Tensor out = Tensor::zeros({m, n}, a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.value().data<T>().data();
    const T* pb = b.value().data<T>().data();
    T* po = out.mut<T>().data();
    for (int64_t i = 0; i < m; ++i) {
      T* crow = po + i * n;
      const T* arow = pa + i * k;
      for (int64_t kk = 0; kk < k; ++kk) {
        const T av = arow[kk];
        if (av == T(0)) continue;
        const T* brow = pb + kk * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
  return emit(tape, OpKind::kMatmul, std::move(out), {a, b});
}

Variable transpose(Tape* tape, const Variable& a) {
  const auto& as = a.shape();
  if (as.size() != 2) throw Error("transpose2d: expected rank 2, got " + shape_str(as));
  const int64_t m = as[0], n = as[1];
  Tensor out = Tensor::empty({n, m}, a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.value().data<T>().data();
    T* po = out.mut<T>().data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) po[j * m + i] = pa[i * n + j];
  });
  return emit(tape, OpKind::kTranspose2d, std::move(out), {a});
}

Variable reshape(Tape* tape, const Variable& a, std::vector<int64_t> shape) {
  Tensor out = a.value().reshaped(shape);
  OpAttrs attrs;
  attrs.ints = std::move(shape);
  attrs.ints2 = a.shape();
  return emit(tape, OpKind::kReshape, std::move(out), {a}, std::move(attrs));
}

Variable concat(Tape* tape, const std::vector<Variable>& xs, int64_t axis) {
  if (xs.empty()) throw Error("concat: no inputs");
  const auto& ref = xs[0].shape();
  const int64_t rank = static_cast<int64_t>(ref.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw Error("concat: axis out of range");
  std::vector<int64_t> oshape = ref;
  oshape[axis] = 0;
  for (const auto& x : xs) {
    const auto& s = x.shape();
    if (static_cast<int64_t>(s.size()) != rank) {
      throw Error("concat: rank mismatch " + shape_str(ref) + " vs " + shape_str(s));
    }
    for (int64_t d = 0; d < rank; ++d) {
      if (d != axis && s[d] != ref[d]) {
        throw Error("concat: shape mismatch " + shape_str(ref) + " vs " + shape_str(s));
      }
    }
    oshape[axis] += s[axis];
  }
  Tensor out = Tensor::empty(oshape, xs[0].dtype());
  // outer = product of dims before axis, inner = product after
  int64_t outer = 1, inner = 1;
  for (int64_t d = 0; d < axis; ++d) outer *= oshape[d];
  for (int64_t d = axis + 1; d < rank; ++d) inner *= oshape[d];
  dispatch(xs[0].dtype(), [&](auto tag) {
    using T = decltype(tag);
    T* po = out.mut<T>().data();
    const int64_t orow = oshape[axis] * inner;
    int64_t pos = 0;
    for (const auto& x : xs) {
      const T* px = x.value().data<T>().data();
      const int64_t xa = x.shape()[axis];
      for (int64_t o = 0; o < outer; ++o) {
        std::memcpy(po + o * orow + pos * inner, px + o * xa * inner,
                    static_cast<size_t>(xa * inner) * sizeof(T));
      }
      pos += xa;
    }
  });
  OpAttrs attrs;
  attrs.ints = {axis};
  return emit(tape, OpKind::kConcat, std::move(out), xs, std::move(attrs));
}

Variable slice(Tape* tape, const Variable& a, std::vector<int64_t> starts,
               std::vector<int64_t> stops) {
  const auto& as = a.shape();
  const size_t rank = as.size();
  if (starts.size() != rank || stops.size() != rank) {
    throw Error("slice: starts/stops rank mismatch for shape " + shape_str(as));
  }
  std::vector<int64_t> oshape(rank);
  for (size_t d = 0; d < rank; ++d) {
    if (starts[d] < 0 || stops[d] > as[d] || starts[d] >= stops[d]) {
      throw Error("slice: window [" + std::to_string(starts[d]) + "," + std::to_string(stops[d]) +
                  ") invalid for extent " + std::to_string(as[d]));
    }
    oshape[d] = stops[d] - starts[d];
  }
  Tensor out = Tensor::empty(oshape, a.dtype());
  const auto istr = row_major_strides(as);
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.value().data<T>().data();
    T* po = out.mut<T>().data();
    std::vector<int64_t> idx(rank, 0);
    int64_t off = 0;
    for (size_t d = 0; d < rank; ++d) off += starts[d] * istr[d];
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) {
      po[i] = pa[off];
      for (size_t d = rank; d-- > 0;) {
        ++idx[d];
        off += istr[d];
        if (idx[d] < oshape[d]) break;
        off -= istr[d] * oshape[d];
        idx[d] = 0;
      }
    }
  });
  OpAttrs attrs;
  attrs.ints = std::move(starts);
  attrs.ints2 = std::move(stops);
  return emit(tape, OpKind::kSlice, std::move(out), {a}, std::move(attrs));
}

Variable broadcast_to(Tape* tape, const Variable& a, std::vector<int64_t> shape) {
  const auto check = broadcast_shapes(a.shape(), shape, "broadcast_to");
  if (check != shape) {
    throw Error("broadcast_to: cannot expand " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  Tensor out = Tensor::empty(shape, a.dtype());
  const size_t rank = shape.size();
  const auto sa = bcast_strides(a.shape(), rank);
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.value().data<T>().data();
    T* po = out.mut<T>().data();
    std::vector<int64_t> idx(rank, 0);
    int64_t off = 0;
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) {
      po[i] = pa[off];
      for (size_t d = rank; d-- > 0;) {
        ++idx[d];
        off += sa[d];
        if (idx[d] < shape[d]) break;
        off -= sa[d] * shape[d];
        idx[d] = 0;
      }
    }
  });
  OpAttrs attrs;
  attrs.ints = shape;
  attrs.ints2 = a.shape();
  return emit(tape, OpKind::kBroadcastTo, std::move(out), {a}, std::move(attrs));
}

Variable sum_axes(Tape* tape, const Variable& a, std::vector<int64_t> axes, bool keepdims) {
  const auto& as = a.shape();
  const int64_t rank = static_cast<int64_t>(as.size());
  axes = normalize_axes("sum_axes", std::move(axes), rank);
  std::vector<int64_t> oshape;
  std::vector<bool> reduced(static_cast<size_t>(rank), false);
  for (int64_t ax : axes) reduced[static_cast<size_t>(ax)] = true;
  for (int64_t d = 0; d < rank; ++d) {
    if (!reduced[static_cast<size_t>(d)]) {
      oshape.push_back(as[d]);
    } else if (keepdims) {
      oshape.push_back(1);
    }
  }
  Tensor out = Tensor::empty(oshape, a.dtype());
  // Output strides viewed in input axes, zero on reduced dims.
  std::vector<int64_t> ostr_in(static_cast<size_t>(rank), 0);
  {
    const auto ostr = row_major_strides(oshape);
    size_t oi = 0;
    for (int64_t d = 0; d < rank; ++d) {
      if (!reduced[static_cast<size_t>(d)]) {
        ostr_in[static_cast<size_t>(d)] = ostr[oi++];
      } else if (keepdims) {
        ++oi;
      }
    }
  }
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.value().data<T>().data();
    std::vector<double> acc(static_cast<size_t>(out.numel()), 0.0);
    std::vector<int64_t> idx(static_cast<size_t>(rank), 0);
    int64_t off = 0;
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) {
      acc[static_cast<size_t>(off)] += static_cast<double>(pa[i]);
      for (size_t d = static_cast<size_t>(rank); d-- > 0;) {
        ++idx[d];
        off += ostr_in[d];
        if (idx[d] < as[d]) break;
        off -= ostr_in[d] * as[d];
        idx[d] = 0;
      }
    }
    T* po = out.mut<T>().data();
    for (size_t i = 0; i < acc.size(); ++i) po[i] = static_cast<T>(acc[i]);
  });
  OpAttrs attrs;
  attrs.ints = axes;
  attrs.ints2 = as;
  attrs.keepdims = keepdims;
  return emit(tape, OpKind::kSumAxes, std::move(out), {a}, std::move(attrs));
}

Variable sum_all(Tape* tape, const Variable& a) {
  std::vector<int64_t> axes(a.shape().size());
  for (size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int64_t>(i);
  return sum_axes(tape, a, std::move(axes), false);
}

Variable mean_axes(Tape* tape, const Variable& a, std::vector<int64_t> axes, bool keepdims) {
  const auto& as = a.shape();
  const int64_t rank = static_cast<int64_t>(as.size());
  auto norm = normalize_axes("mean_axes", axes, rank);
  int64_t count = 1;
  for (int64_t ax : norm) count *= as[static_cast<size_t>(ax)];
  Variable s = sum_axes(tape, a, std::move(norm), keepdims);
  return affine(tape, s, 1.0 / static_cast<double>(count), 0.0);
}

Variable mean_all(Tape* tape, const Variable& a) {
  Variable s = sum_all(tape, a);
  return affine(tape, s, 1.0 / static_cast<double>(a.numel()), 0.0);
}

Variable reduce_to(Tape* tape, const Variable& a, const std::vector<int64_t>& shape) {
  if (a.shape() == shape) return a;
  const auto& as = a.shape();
  const int64_t rank = static_cast<int64_t>(as.size());
  const int64_t off = rank - static_cast<int64_t>(shape.size());
  if (off < 0) throw Error("reduce_to: rank grows from " + shape_str(as) + " to " + shape_str(shape));
  std::vector<int64_t> axes;
  for (int64_t d = 0; d < rank; ++d) {
    const int64_t target = d < off ? 1 : shape[static_cast<size_t>(d - off)];
    if (as[static_cast<size_t>(d)] != target) {
      if (target != 1) {
        throw Error("reduce_to: cannot reduce " + shape_str(as) + " to " + shape_str(shape));
      }
      axes.push_back(d);
    }
  }
  Variable r = axes.empty() ? a : sum_axes(tape, a, std::move(axes), true);
  if (r.shape() != shape) r = reshape(tape, r, shape);
  return r;
}

Variable relu(Tape* tape, const Variable& a) {
  return ew_unary(tape, OpKind::kRelu, a, [](double v) { return v > 0 ? v : 0.0; });
}

Variable leaky_relu(Tape* tape, const Variable& a, double slope) {
  OpAttrs attrs;
  attrs.a = slope;
  return ew_unary(
      tape, OpKind::kLeakyRelu, a, [slope](double v) { return v > 0 ? v : slope * v; },
      std::move(attrs));
}

Variable tanh(Tape* tape, const Variable& a) {
  return ew_unary(tape, OpKind::kTanh, a, [](double v) { return std::tanh(v); });
}

Variable square(Tape* tape, const Variable& a) {
  return ew_unary(tape, OpKind::kSquare, a, [](double v) { return v * v; });
}

Variable sqrt(Tape* tape, const Variable& a) {
  return ew_unary(tape, OpKind::kSqrt, a, [](double v) { return std::sqrt(v); });
}

Variable affine(Tape* tape, const Variable& a, double scale, double shift) {
  OpAttrs attrs;
  attrs.a = scale;
  attrs.b = shift;
  return ew_unary(
      tape, OpKind::kAffine, a, [scale, shift](double v) { return scale * v + shift; },
      std::move(attrs));
}

Variable neg(Tape* tape, const Variable& a) { return affine(tape, a, -1.0, 0.0); }
Variable add_scalar(Tape* tape, const Variable& a, double v) { return affine(tape, a, 1.0, v); }
Variable mul_scalar(Tape* tape, const Variable& a, double v) { return affine(tape, a, v, 0.0); }

Variable conv2d(Tape* tape, const Variable& x, const Variable& w, int64_t stride, int64_t pad) {
  check_dtype("conv2d", x, w);
  Tensor out = conv2d_forward(x.value(), w.value(), stride, pad);
  OpAttrs attrs;
  attrs.stride = stride;
  attrs.pad = pad;
  return emit(tape, OpKind::kConv2d, std::move(out), {x, w}, std::move(attrs));
}

Variable conv_transpose2d(Tape* tape, const Variable& x, const Variable& w, int64_t stride,
                          int64_t pad) {
  check_dtype("conv_transpose2d", x, w);
  Tensor out = tconv2d_forward(x.value(), w.value(), stride, pad);
  OpAttrs attrs;
  attrs.stride = stride;
  attrs.pad = pad;
  return emit(tape, OpKind::kConvT2d, std::move(out), {x, w}, std::move(attrs));
}

Variable upsample2x(Tape* tape, const Variable& x) {
  const auto& s = x.shape();
  if (s.size() != 4) throw Error("upsample2x: expected 4-d input, got " + shape_str(s));
  const int64_t bc = s[0] * s[1], h = s[2], w = s[3];
  Tensor out = Tensor::empty({s[0], s[1], 2 * h, 2 * w}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.value().data<T>().data();
    T* po = out.mut<T>().data();
    for (int64_t p = 0; p < bc; ++p) {
      const T* xp = px + p * h * w;
      T* op = po + p * 4 * h * w;
      for (int64_t i = 0; i < h; ++i) {
        for (int64_t j = 0; j < w; ++j) {
          const T v = xp[i * w + j];
          T* o0 = op + (2 * i) * 2 * w + 2 * j;
          o0[0] = v;
          o0[1] = v;
          o0[2 * w] = v;
          o0[2 * w + 1] = v;
        }
      }
    }
  });
  return emit(tape, OpKind::kUpsample2x, std::move(out), {x});
}

Variable downsample2x_sum(Tape* tape, const Variable& x) {
  const auto& s = x.shape();
  if (s.size() != 4 || s[2] % 2 != 0 || s[3] % 2 != 0) {
    throw Error("downsample2x_sum: expected 4-d input with even extents, got " + shape_str(s));
  }
  const int64_t bc = s[0] * s[1], h = s[2] / 2, w = s[3] / 2;
  Tensor out = Tensor::empty({s[0], s[1], h, w}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.value().data<T>().data();
    T* po = out.mut<T>().data();
    for (int64_t p = 0; p < bc; ++p) {
      const T* xp = px + p * 4 * h * w;
      T* op = po + p * h * w;
      for (int64_t i = 0; i < h; ++i) {
        for (int64_t j = 0; j < w; ++j) {
          const T* x0 = xp + (2 * i) * 2 * w + 2 * j;
          op[i * w + j] = x0[0] + x0[1] + x0[2 * w] + x0[2 * w + 1];
        }
      }
    }
  });
  return emit(tape, OpKind::kDownsample2xSum, std::move(out), {x});
}

Tensor matmul_val(const Tensor& a, const Tensor& b) {
  return matmul(nullptr, make_constant(a), make_constant(b)).value();
}

Tensor conv2d_val(const Tensor& x, const Tensor& w, int64_t stride, int64_t pad) {
  return conv2d_forward(x, w, stride, pad);
}

Tensor conv_transpose2d_val(const Tensor& x, const Tensor& w, int64_t stride, int64_t pad) {
  return tconv2d_forward(x, w, stride, pad);
}

namespace {

// Adjoints per input of `node`, given upstream g. Expressed through the
// public ops so the results are themselves recorded and differentiable.
std::vector<Variable> vjp(Tape* tape, const std::shared_ptr<VarNode>& node, const Variable& g) {
  VarNode& n = *node;
  const Variable a = n.inputs.size() > 0 ? n.inputs[0] : Variable();
  const Variable b = n.inputs.size() > 1 ? n.inputs[1] : Variable();
  const Variable self(node);
  switch (n.kind) {
    case OpKind::kAdd:
      return {reduce_to(tape, g, a.shape()), reduce_to(tape, g, b.shape())};
    case OpKind::kSub:
      return {reduce_to(tape, g, a.shape()), reduce_to(tape, neg(tape, g), b.shape())};
    case OpKind::kMul:
      return {reduce_to(tape, mul(tape, g, b), a.shape()),
              reduce_to(tape, mul(tape, g, a), b.shape())};
    case OpKind::kDiv: {
      Variable ga = reduce_to(tape, divide(tape, g, b), a.shape());
      Variable gb = reduce_to(
          tape, neg(tape, divide(tape, mul(tape, g, a), mul(tape, b, b))), b.shape());
      return {ga, gb};
    }
    case OpKind::kMatmul:
      return {matmul(tape, g, transpose(tape, b)), matmul(tape, transpose(tape, a), g)};
    case OpKind::kTranspose2d:
      return {transpose(tape, g)};
    case OpKind::kReshape:
      return {reshape(tape, g, n.attrs.ints2)};
    case OpKind::kConcat: {
      std::vector<Variable> grads;
      const int64_t axis = n.attrs.ints[0];
      const size_t rank = n.value.shape().size();
      int64_t pos = 0;
      for (const auto& x : n.inputs) {
        std::vector<int64_t> starts(rank, 0), stops = n.value.shape();
        starts[static_cast<size_t>(axis)] = pos;
        pos += x.shape()[static_cast<size_t>(axis)];
        stops[static_cast<size_t>(axis)] = pos;
        grads.push_back(slice(tape, g, starts, stops));
      }
      return grads;
    }
    case OpKind::kSlice:
      return {pad_to(tape, g, a.shape(), n.attrs.ints)};
    case OpKind::kPadTo: {
      const auto& starts = n.attrs.ints;
      const auto& src = n.attrs.ints2;
      std::vector<int64_t> stops(src.size());
      for (size_t d = 0; d < src.size(); ++d) stops[d] = starts[d] + src[d];
      return {slice(tape, g, starts, stops)};
    }
    case OpKind::kBroadcastTo:
      return {reduce_to(tape, g, n.attrs.ints2)};
    case OpKind::kSumAxes: {
      const auto& in_shape = n.attrs.ints2;
      Variable gk = g;
      if (!n.attrs.keepdims) {
        std::vector<int64_t> keep = in_shape;
        for (int64_t ax : n.attrs.ints) keep[static_cast<size_t>(ax)] = 1;
        gk = reshape(tape, g, keep);
      }
      return {broadcast_to(tape, gk, in_shape)};
    }
    case OpKind::kRelu:
      return {mul(tape, g, make_constant(mask_where_positive(a.value(), 0.0)))};
    case OpKind::kLeakyRelu:
      return {mul(tape, g, make_constant(mask_where_positive(a.value(), n.attrs.a)))};
    case OpKind::kTanh:
      return {mul(tape, g, affine(tape, square(tape, self), -1.0, 1.0))};
    case OpKind::kSquare:
      return {mul(tape, g, affine(tape, a, 2.0, 0.0))};
    case OpKind::kSqrt:
      return {divide(tape, g, affine(tape, self, 2.0, 0.0))};
    case OpKind::kAffine:
      return {affine(tape, g, n.attrs.a, 0.0)};
    case OpKind::kConv2d:
      return {conv_transpose2d(tape, g, b, n.attrs.stride, n.attrs.pad),
              conv2d_wgrad(tape, a, g, n.attrs.stride, n.attrs.pad, b.shape())};
    case OpKind::kConvT2d:
      return {conv2d(tape, g, b, n.attrs.stride, n.attrs.pad),
              tconv2d_wgrad(tape, a, g, n.attrs.stride, n.attrs.pad, b.shape())};
    case OpKind::kConv2dWGrad:
      return {conv_transpose2d(tape, b, g, n.attrs.stride, n.attrs.pad),
              conv2d(tape, a, g, n.attrs.stride, n.attrs.pad)};
    case OpKind::kConvT2dWGrad:
      return {conv2d(tape, b, g, n.attrs.stride, n.attrs.pad),
              conv_transpose2d(tape, a, g, n.attrs.stride, n.attrs.pad)};
    case OpKind::kUpsample2x:
      return {downsample2x_sum(tape, g)};
    case OpKind::kDownsample2xSum:
      return {upsample2x(tape, g)};
    case OpKind::kLeaf:
    case OpKind::kConst:
      break;
  }
  throw Error(std::string("vjp: not differentiable through ") + op_name(n.kind));
}

}  // namespace
}  // namespace ops

GradMap backward(Tape& tape, const Variable& output, const std::vector<Variable>& wrt) {
  if (!output.defined()) throw Error("backward: undefined output");
  if (output.numel() != 1) {
    throw Error("backward: output must be scalar, got shape " + shape_str(output.shape()));
  }
  GradMap adjoint;
  adjoint[output.node()] =
      make_constant(Tensor::full(output.shape(), 1.0, output.dtype()));
  const int64_t start = output.node()->tape_index;
  if (start >= 0) {
    if (start >= tape.size() || tape.at(start).get() != output.node()) {
      throw Error("backward: output recorded on a different tape");
    }
    for (int64_t i = start; i >= 0; --i) {
      // Copy: vjp() appends to the tape, which may reallocate its node list.
      const std::shared_ptr<VarNode> node_sp = tape.at(i);
      VarNode* node = node_sp.get();
      auto it = adjoint.find(node);
      if (it == adjoint.end() || node->inputs.empty()) continue;
      const Variable g = it->second;
      auto input_grads = ops::vjp(&tape, node_sp, g);
      for (size_t j = 0; j < node->inputs.size(); ++j) {
        const Variable& in = node->inputs[j];
        if (!in.requires_grad()) continue;
        auto cur = adjoint.find(in.node());
        if (cur == adjoint.end()) {
          adjoint[in.node()] = input_grads[j];
        } else {
          cur->second = ops::add(&tape, cur->second, input_grads[j]);
        }
      }
    }
  }
  GradMap result;
  for (const auto& v : wrt) {
    auto it = adjoint.find(v.node());
    if (it != adjoint.end()) {
      result[v.node()] = it->second;
    } else {
      result[v.node()] = make_constant(Tensor::zeros(v.shape(), v.dtype()));
    }
  }
  return result;
}

}  // namespace ssgan
