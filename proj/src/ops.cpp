#include "asymvq/ops.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace asymvq {

namespace {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <typename S, typename Fwd, typename Deriv>
Var<S> unary(const Var<S>& a, Fwd fwd, Deriv deriv) {
  Tensor<S> out(a.shape());
  out.array() = a.value().array().unaryExpr(fwd);
  return make_result<S>(std::move(out), {a}, [deriv](Node<S>& self) {
    auto& p = *self.parents[0];
    if (!p.wants_grad()) return;
    p.grad_buffer().array() += self.grad.array() * deriv(p.value.array(), self.value.array());
  });
}

void require_map(const Shape& x, const Shape& map, const char* what) {
  if (map.n != x.n || map.c != 1 || map.h != x.h || map.w != x.w)
    throw ShapeError(std::string(what) + ": map " + map.str() + " does not fit " + x.str());
}

// Output columns [lo, hi) whose input column ox * stride - pad + kx lies inside [0, width).
std::pair<int, int> valid_columns(int width, int out_w, int kx, int stride, int pad) {
  const int first = kx - pad;  // input column of ox = 0
  const int lo = first >= 0 ? 0 : (-first + stride - 1) / stride;
  const int last = width - 1 - first;
  const int hi = last < 0 ? 0 : std::min(out_w, last / stride + 1);
  return {std::min(lo, hi), hi};
}

// Patch matrix in transposed layout: one column per (c, ky, kx) tap, one row per output
// location, so every tap fills a contiguous column.
template <typename S>
void im2col(const Tensor<S>& x, int n, int k, int stride, int pad, int out_h, int out_w, Mat<S>& cols) {
  const int channels = x.c();
  const int height = x.h();
  const int width = x.w();
  const Eigen::Index locations = static_cast<Eigen::Index>(out_h) * out_w;
  cols.resize(locations, static_cast<Eigen::Index>(channels) * k * k);
  const S* src = x.data() + x.offset(n, 0, 0, 0);
  for (int c = 0; c < channels; ++c) {
    const S* plane = src + static_cast<Eigen::Index>(c) * height * width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        S* dst = cols.col((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        // Output columns whose input column lies inside the image.
        const auto [ox_lo, ox_hi] = valid_columns(width, out_w, kx, stride, pad);
        for (int oy = 0; oy < out_h; ++oy) {
          S* row = dst + static_cast<Eigen::Index>(oy) * out_w;
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= height || ox_lo >= ox_hi) {
            std::fill(row, row + out_w, S(0));
            continue;
          }
          std::fill(row, row + ox_lo, S(0));
          const S* in = plane + static_cast<Eigen::Index>(iy) * width - pad + kx;
          if (stride == 1) {
            std::copy(in + ox_lo, in + ox_hi, row + ox_lo);
          } else {
            for (int ox = ox_lo; ox < ox_hi; ++ox) row[ox] = in[ox * stride];
          }
          std::fill(row + ox_hi, row + out_w, S(0));
        }
      }
    }
  }
}

template <typename S>
void col2im_add(const Mat<S>& cols, Tensor<S>& dx, int n, int k, int stride, int pad, int out_h, int out_w) {
  const int channels = dx.c();
  const int height = dx.h();
  const int width = dx.w();
  S* dst = dx.data() + dx.offset(n, 0, 0, 0);
  for (int c = 0; c < channels; ++c) {
    S* plane = dst + static_cast<Eigen::Index>(c) * height * width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const S* src = cols.col((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        const auto [ox_lo, ox_hi] = valid_columns(width, out_w, kx, stride, pad);
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= height) continue;
          const S* row = src + static_cast<Eigen::Index>(oy) * out_w;
          S* out = plane + static_cast<Eigen::Index>(iy) * width - pad + kx;
          for (int ox = ox_lo; ox < ox_hi; ++ox) out[ox * stride] += row[ox];
        }
      }
    }
  }
}

}  // namespace

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<S> out(a.shape());
  out.array() = a.value().array() + b.value().array();
  return make_result<S>(std::move(out), {a, b}, [](Node<S>& self) {
    for (auto& p : self.parents)
      if (p->wants_grad()) p->accumulate(self.grad);
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<S> out(a.shape());
  out.array() = a.value().array() - b.value().array();
  return make_result<S>(std::move(out), {a, b}, [](Node<S>& self) {
    if (self.parents[0]->wants_grad()) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->wants_grad()) self.parents[1]->grad_buffer().array() -= self.grad.array();
  });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<S> out(a.shape());
  out.array() = a.value().array() * b.value().array();
  return make_result<S>(std::move(out), {a, b}, [](Node<S>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.wants_grad()) pa.grad_buffer().array() += self.grad.array() * pb.value.array();
    if (pb.wants_grad()) pb.grad_buffer().array() += self.grad.array() * pa.value.array();
  });
}

template <typename S>
Var<S> scale(const Var<S>& a, S factor) {
  Tensor<S> out(a.shape());
  out.array() = a.value().array() * factor;
  return make_result<S>(std::move(out), {a}, [factor](Node<S>& self) {
    if (self.parents[0]->wants_grad()) self.parents[0]->grad_buffer().array() += self.grad.array() * factor;
  });
}

template <typename S>
Var<S> add_scalar(const Var<S>& a, S offset) {
  Tensor<S> out(a.shape());
  out.array() = a.value().array() + offset;
  return make_result<S>(std::move(out), {a}, [](Node<S>& self) {
    if (self.parents[0]->wants_grad()) self.parents[0]->accumulate(self.grad);
  });
}

template <typename S>
Var<S> square(const Var<S>& a) {
  return unary<S>(a, [](S v) { return v * v; }, [](const auto& x, const auto&) { return S(2) * x; });
}

template <typename S>
Var<S> abs(const Var<S>& a) {
  return unary<S>(
      a, [](S v) { return std::abs(v); },
      [](const auto& x, const auto&) { return x.sign(); });
}

template <typename S>
Var<S> exp(const Var<S>& a) {
  return unary<S>(a, [](S v) { return std::exp(v); }, [](const auto&, const auto& y) { return y; });
}

template <typename S>
Var<S> tanh(const Var<S>& a) {
  return unary<S>(
      a, [](S v) { return std::tanh(v); }, [](const auto&, const auto& y) { return S(1) - y * y; });
}

template <typename S>
Var<S> relu(const Var<S>& a) {
  return unary<S>(
      a, [](S v) { return v > S(0) ? v : S(0); },
      [](const auto& x, const auto&) { return (x > S(0)).template cast<S>(); });
}

template <typename S>
Var<S> leaky_relu(const Var<S>& a, S slope) {
  return unary<S>(
      a, [slope](S v) { return v > S(0) ? v : slope * v; },
      [slope](const auto& x, const auto&) { return (x > S(0)).select(S(1), S(0) * x + slope); });
}

template <typename S>
Var<S> swish(const Var<S>& a) {
  return unary<S>(
      a, [](S v) { return v / (S(1) + std::exp(-v)); },
      [](const auto& x, const auto&) {
        auto sig = S(1) / (S(1) + (-x).exp());
        return sig * (S(1) + x * (S(1) - sig));
      });
}

template <typename S>
Var<S> softplus(const Var<S>& a) {
  return unary<S>(
      a, [](S v) { return std::max(v, S(0)) + std::log1p(std::exp(-std::abs(v))); },
      [](const auto& x, const auto&) { return S(1) / (S(1) + (-x).exp()); });
}

template <typename S>
Var<S> sum(const Var<S>& a) {
  Tensor<S> out(Shape{1, 1, 1, 1}, a.value().array().sum());
  return make_result<S>(std::move(out), {a}, [](Node<S>& self) {
    if (self.parents[0]->wants_grad()) self.parents[0]->grad_buffer().array() += self.grad.array()[0];
  });
}

template <typename S>
Var<S> mean(const Var<S>& a) {
  const auto count = static_cast<S>(a.value().size());
  Tensor<S> out(Shape{1, 1, 1, 1}, a.value().array().sum() / count);
  return make_result<S>(std::move(out), {a}, [count](Node<S>& self) {
    if (self.parents[0]->wants_grad())
      self.parents[0]->grad_buffer().array() += self.grad.array()[0] / count;
  });
}

template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& weight, const std::optional<Var<S>>& bias, int stride,
              int padding) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (ws.h != ws.w) throw ShapeError("conv2d: non-square kernel " + ws.str());
  if (ws.c != xs.c) throw ShapeError("conv2d: weight " + ws.str() + " does not match input " + xs.str());
  if (bias && bias->shape().size() != ws.n) throw ShapeError("conv2d: bias size mismatch");
  const int k = ws.h;
  const int out_h = (xs.h + 2 * padding - k) / stride + 1;
  const int out_w = (xs.w + 2 * padding - k) / stride + 1;
  if (out_h <= 0 || out_w <= 0) throw ShapeError("conv2d: kernel larger than padded input " + xs.str());
  const bool pointwise = k == 1 && stride == 1 && padding == 0;

  Tensor<S> out(Shape{xs.n, ws.n, out_h, out_w});
  typename Tensor<S>::ConstMatrixMap wmat(weight.value().data(), ws.n, static_cast<Eigen::Index>(ws.c) * k * k);
  Mat<S> cols;
  for (int n = 0; n < xs.n; ++n) {
    if (pointwise) {
      out.item(n).noalias() = wmat * x.value().item(n);
    } else {
      im2col(x.value(), n, k, stride, padding, out_h, out_w, cols);
      out.item(n).noalias() = wmat * cols.transpose();
    }
    if (bias) out.item(n).colwise() += bias->value().array().matrix();
  }

  std::vector<Var<S>> parents{x, weight};
  if (bias) parents.push_back(*bias);
  return make_result<S>(std::move(out), std::move(parents), [k, stride, padding, out_h, out_w, pointwise](Node<S>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    const Shape xs = px.value.shape();
    const Shape ws = pw.value.shape();
    typename Tensor<S>::ConstMatrixMap wmat(pw.value.data(), ws.n, static_cast<Eigen::Index>(ws.c) * k * k);
    Mat<S> cols;
    for (int n = 0; n < xs.n; ++n) {
      auto dout = self.grad.item(n);
      if (pw.wants_grad()) {
        typename Tensor<S>::MatrixMap dw(pw.grad_buffer().data(), ws.n, static_cast<Eigen::Index>(ws.c) * k * k);
        if (pointwise) {
          dw.noalias() += dout * px.value.item(n).transpose();
        } else {
          im2col(px.value, n, k, stride, padding, out_h, out_w, cols);
          dw.noalias() += dout * cols;
        }
      }
      if (px.wants_grad()) {
        if (pointwise) {
          px.grad_buffer().item(n).noalias() += wmat.transpose() * dout;
        } else {
          Mat<S> dcols = dout.transpose() * wmat;
          col2im_add(dcols, px.grad_buffer(), n, k, stride, padding, out_h, out_w);
        }
      }
      if (self.parents.size() > 2 && self.parents[2]->wants_grad())
        self.parents[2]->grad_buffer().array() += dout.rowwise().sum().array();
    }
  });
}

template <typename S>
Var<S> add_channel_bias(const Var<S>& x, const Var<S>& bias, const Tensor<S>* map) {
  const Shape& xs = x.shape();
  if (bias.shape().size() != xs.c) throw ShapeError("add_channel_bias: bias size mismatch");
  if (map) require_map(xs, map->shape(), "add_channel_bias");
  Tensor<S> out = x.value();
  for (int n = 0; n < xs.n; ++n) {
    auto item = out.item(n);
    if (map) {
      auto m = map->item(n);
      item.noalias() += bias.value().array().matrix() * m;
    } else {
      item.colwise() += bias.value().array().matrix();
    }
  }
  Tensor<S> gate = map ? *map : Tensor<S>();
  return make_result<S>(std::move(out), {x, bias}, [gate](Node<S>& self) {
    if (self.parents[0]->wants_grad()) self.parents[0]->accumulate(self.grad);
    auto& pb = *self.parents[1];
    if (!pb.wants_grad()) return;
    auto& gb = pb.grad_buffer().array();
    for (int n = 0; n < self.grad.n(); ++n) {
      if (gate.empty()) gb += self.grad.item(n).rowwise().sum().array();
      else gb += (self.grad.item(n) * gate.item(n).transpose()).array();
    }
  });
}

template <typename S>
Var<S> mul_map(const Var<S>& x, const Tensor<S>& map) {
  require_map(x.shape(), map.shape(), "mul_map");
  Tensor<S> out = x.value();
  for (int n = 0; n < out.n(); ++n) out.item(n).array().rowwise() *= map.item(n).array().row(0);
  return make_result<S>(std::move(out), {x}, [map](Node<S>& self) {
    auto& p = *self.parents[0];
    if (!p.wants_grad()) return;
    auto& g = p.grad_buffer();
    for (int n = 0; n < g.n(); ++n)
      g.item(n).array() += self.grad.item(n).array().rowwise() * map.item(n).array().row(0);
  });
}

template <typename S>
Var<S> group_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, int groups, S eps) {
  const Shape xs = x.shape();
  if (groups <= 0 || xs.c % groups != 0)
    throw ShapeError("group_norm: " + std::to_string(groups) + " groups do not divide " + std::to_string(xs.c) + " channels");
  if (gamma.shape().size() != xs.c || beta.shape().size() != xs.c) throw ShapeError("group_norm: affine size mismatch");
  const int per_group = xs.c / groups;
  const Eigen::Index span = per_group * xs.plane();

  Tensor<S> normalized(xs);
  std::vector<S> inv_std(static_cast<std::size_t>(xs.n) * groups);
  for (int n = 0; n < xs.n; ++n) {
    for (int g = 0; g < groups; ++g) {
      const Eigen::Index off = x.value().offset(n, g * per_group, 0, 0);
      auto seg = x.value().array().segment(off, span);
      const S mu = seg.mean();
      const S var = (seg - mu).square().mean();
      const S is = S(1) / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(n) * groups + g] = is;
      normalized.array().segment(off, span) = (seg - mu) * is;
    }
  }
  Tensor<S> out(xs);
  for (int n = 0; n < xs.n; ++n) {
    out.item(n) = normalized.item(n);
    out.item(n).array().colwise() *= gamma.value().array();
    out.item(n).array().colwise() += beta.value().array();
  }
  return make_result<S>(std::move(out), {x, gamma, beta},
                        [normalized = std::move(normalized), inv_std = std::move(inv_std), groups, per_group, span](Node<S>& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    auto& pb = *self.parents[2];
    const Shape xs = px.value.shape();
    for (int n = 0; n < xs.n; ++n) {
      auto dy = self.grad.item(n);
      auto xhat = normalized.item(n);
      if (pg.wants_grad()) pg.grad_buffer().array() += (dy.array() * xhat.array()).rowwise().sum();
      if (pb.wants_grad()) pb.grad_buffer().array() += dy.rowwise().sum().array();
    }
    if (!px.wants_grad()) return;
    auto& gx = px.grad_buffer();
    for (int n = 0; n < xs.n; ++n) {
      Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic> dxhat = self.grad.item(n).array();
      dxhat.colwise() *= pg.value.array();
      for (int g = 0; g < groups; ++g) {
        auto d = dxhat.middleRows(g * per_group, per_group);
        auto xh = normalized.item(n).array().middleRows(g * per_group, per_group);
        const S mean_d = d.sum() / static_cast<S>(span);
        const S mean_dx = (d * xh).sum() / static_cast<S>(span);
        const S is = inv_std[static_cast<std::size_t>(n) * groups + g];
        gx.item(n).array().middleRows(g * per_group, per_group) += is * (d - mean_d - xh * mean_dx);
      }
    }
  });
}

template <typename S>
Var<S> upsample_nearest2x(const Var<S>& x) {
  const Shape xs = x.shape();
  Tensor<S> out(Shape{xs.n, xs.c, xs.h * 2, xs.w * 2});
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c)
      for (int y = 0; y < xs.h * 2; ++y)
        for (int xx = 0; xx < xs.w * 2; ++xx) out(n, c, y, xx) = x.value()(n, c, y / 2, xx / 2);
  return make_result<S>(std::move(out), {x}, [](Node<S>& self) {
    auto& p = *self.parents[0];
    if (!p.wants_grad()) return;
    auto& g = p.grad_buffer();
    const Shape s = g.shape();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h * 2; ++y)
          for (int xx = 0; xx < s.w * 2; ++xx) g(n, c, y / 2, xx / 2) += self.grad(n, c, y, xx);
  });
}

template <typename S>
Var<S> concat_channels(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  Shape s = parts.front().shape();
  int total = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    if (ps.n != s.n || ps.h != s.h || ps.w != s.w)
      throw ShapeError("concat_channels: " + ps.str() + " vs " + s.str());
    total += ps.c;
  }
  s.c = total;
  Tensor<S> out(s);
  for (int n = 0; n < s.n; ++n) {
    int row = 0;
    for (const auto& p : parts) {
      out.item(n).middleRows(row, p.shape().c) = p.value().item(n);
      row += p.shape().c;
    }
  }
  return make_result<S>(std::move(out), parts, [](Node<S>& self) {
    for (int n = 0; n < self.grad.n(); ++n) {
      int row = 0;
      for (auto& p : self.parents) {
        const int c = p->value.c();
        if (p->wants_grad()) p->grad_buffer().item(n) += self.grad.item(n).middleRows(row, c);
        row += c;
      }
    }
  });
}

template <typename S>
Var<S> slice_channels(const Var<S>& x, int begin, int count) {
  const Shape xs = x.shape();
  if (begin < 0 || count <= 0 || begin + count > xs.c) throw ShapeError("slice_channels: out of range for " + xs.str());
  Tensor<S> out(Shape{xs.n, count, xs.h, xs.w});
  for (int n = 0; n < xs.n; ++n) out.item(n) = x.value().item(n).middleRows(begin, count);
  return make_result<S>(std::move(out), {x}, [begin, count](Node<S>& self) {
    auto& p = *self.parents[0];
    if (!p.wants_grad()) return;
    for (int n = 0; n < self.grad.n(); ++n) p.grad_buffer().item(n).middleRows(begin, count) += self.grad.item(n);
  });
}

template <typename S>
Var<S> spatial_attention(const Var<S>& q, const Var<S>& k, const Var<S>& v) {
  require_same_shape(q.shape(), k.shape(), "spatial_attention");
  require_same_shape(q.shape(), v.shape(), "spatial_attention");
  const Shape s = q.shape();
  const S factor = S(1) / std::sqrt(static_cast<S>(s.c));
  Tensor<S> out(s);
  std::vector<Mat<S>> attn(static_cast<std::size_t>(s.n));
  for (int n = 0; n < s.n; ++n) {
    Mat<S> logits = factor * (q.value().item(n).transpose() * k.value().item(n));
    logits.colwise() -= logits.rowwise().maxCoeff();
    logits = logits.array().exp().matrix();
    logits.array().colwise() /= logits.rowwise().sum().array();
    out.item(n).noalias() = v.value().item(n) * logits.transpose();
    attn[static_cast<std::size_t>(n)] = std::move(logits);
  }
  return make_result<S>(std::move(out), {q, k, v}, [attn = std::move(attn), factor](Node<S>& self) {
    auto& pq = *self.parents[0];
    auto& pk = *self.parents[1];
    auto& pv = *self.parents[2];
    for (int n = 0; n < self.grad.n(); ++n) {
      const Mat<S>& a = attn[static_cast<std::size_t>(n)];
      auto dout = self.grad.item(n);
      if (pv.wants_grad()) pv.grad_buffer().item(n).noalias() += dout * a;
      if (!pq.wants_grad() && !pk.wants_grad()) continue;
      Mat<S> da = dout.transpose() * pv.value.item(n);
      Eigen::Matrix<S, Eigen::Dynamic, 1> row_dot = (da.array() * a.array()).rowwise().sum();
      Mat<S> ds = a.array() * (da.colwise() - row_dot).array();
      if (pq.wants_grad()) pq.grad_buffer().item(n).noalias() += factor * (pk.value.item(n) * ds.transpose());
      if (pk.wants_grad()) pk.grad_buffer().item(n).noalias() += factor * (pq.value.item(n) * ds);
    }
  });
}

template <typename S>
Var<S> mask_blend(const Var<S>& a, const Var<S>& b, const Tensor<S>& m) {
  require_same_shape(a.shape(), b.shape(), "mask_blend");
  require_map(a.shape(), m.shape(), "mask_blend");
  Tensor<S> out(a.shape());
  for (int n = 0; n < out.n(); ++n) {
    auto keep = m.item(n).array().row(0);
    out.item(n).array() = a.value().item(n).array().rowwise() * keep +
                          b.value().item(n).array().rowwise() * (S(1) - keep);
  }
  return make_result<S>(std::move(out), {a, b}, [m](Node<S>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (int n = 0; n < self.grad.n(); ++n) {
      auto keep = m.item(n).array().row(0);
      if (pa.wants_grad()) pa.grad_buffer().item(n).array() += self.grad.item(n).array().rowwise() * keep;
      if (pb.wants_grad()) pb.grad_buffer().item(n).array() += self.grad.item(n).array().rowwise() * (S(1) - keep);
    }
  });
}

template <typename S>
Var<S> gather_codewords(const Var<S>& table, const std::vector<int>& indices, int n, int h, int w) {
  const Shape ts = table.shape();
  const int dim = ts.c;
  if (static_cast<Eigen::Index>(indices.size()) != static_cast<Eigen::Index>(n) * h * w)
    throw ShapeError("gather_codewords: index count mismatch");
  Tensor<S> out(Shape{n, dim, h, w});
  for (int b = 0; b < n; ++b)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int k = indices[(static_cast<std::size_t>(b) * h + y) * w + x];
        for (int c = 0; c < dim; ++c) out(b, c, y, x) = table.value()(k, c, 0, 0);
      }
  return make_result<S>(std::move(out), {table}, [indices](Node<S>& self) {
    auto& p = *self.parents[0];
    if (!p.wants_grad()) return;
    auto& g = p.grad_buffer();
    const Shape s = self.grad.shape();
    for (int b = 0; b < s.n; ++b)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const int k = indices[(static_cast<std::size_t>(b) * s.h + y) * s.w + x];
          for (int c = 0; c < s.c; ++c) g(k, c, 0, 0) += self.grad(b, c, y, x);
        }
  });
}

template <typename S>
Var<S> straight_through(const Var<S>& continuous, const Var<S>& quantized) {
  require_same_shape(continuous.shape(), quantized.shape(), "straight_through");
  return make_result<S>(quantized.value(), {continuous}, [](Node<S>& self) {
    if (self.parents[0]->wants_grad()) self.parents[0]->accumulate(self.grad);
  });
}

#define ASYMVQ_INSTANTIATE_OPS(S)                                                                   \
  template Var<S> add(const Var<S>&, const Var<S>&);                                                \
  template Var<S> sub(const Var<S>&, const Var<S>&);                                                \
  template Var<S> mul(const Var<S>&, const Var<S>&);                                                \
  template Var<S> scale(const Var<S>&, S);                                                          \
  template Var<S> add_scalar(const Var<S>&, S);                                                     \
  template Var<S> square(const Var<S>&);                                                            \
  template Var<S> abs(const Var<S>&);                                                               \
  template Var<S> exp(const Var<S>&);                                                               \
  template Var<S> tanh(const Var<S>&);                                                              \
  template Var<S> relu(const Var<S>&);                                                              \
  template Var<S> leaky_relu(const Var<S>&, S);                                                     \
  template Var<S> swish(const Var<S>&);                                                             \
  template Var<S> softplus(const Var<S>&);                                                          \
  template Var<S> sum(const Var<S>&);                                                               \
  template Var<S> mean(const Var<S>&);                                                              \
  template Var<S> conv2d(const Var<S>&, const Var<S>&, const std::optional<Var<S>>&, int, int);     \
  template Var<S> add_channel_bias(const Var<S>&, const Var<S>&, const Tensor<S>*);                 \
  template Var<S> mul_map(const Var<S>&, const Tensor<S>&);                                         \
  template Var<S> group_norm(const Var<S>&, const Var<S>&, const Var<S>&, int, S);                  \
  template Var<S> upsample_nearest2x(const Var<S>&);                                                \
  template Var<S> concat_channels(const std::vector<Var<S>>&);                                      \
  template Var<S> slice_channels(const Var<S>&, int, int);                                          \
  template Var<S> spatial_attention(const Var<S>&, const Var<S>&, const Var<S>&);                   \
  template Var<S> mask_blend(const Var<S>&, const Var<S>&, const Tensor<S>&);                       \
  template Var<S> gather_codewords(const Var<S>&, const std::vector<int>&, int, int, int);          \
  template Var<S> straight_through(const Var<S>&, const Var<S>&);

ASYMVQ_INSTANTIATE_OPS(float)
ASYMVQ_INSTANTIATE_OPS(double)

}  // namespace asymvq
