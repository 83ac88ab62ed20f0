#include "ssda/tape.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

namespace ssda {

namespace {
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;
}  // namespace

int Tape::push(Tensor value, std::function<void()> back) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    n.grad = Tensor(n.value.shape);
    n.back = std::move(back);
  }
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(const Tensor& value, Tensor* sink) {
  const int id = push(value);
  if (grad_enabled_ && sink != nullptr) {
    if (!sink->same_shape(value)) *sink = Tensor(value.shape);
    leaves_.emplace_back(id, sink);
  }
  return id;
}

int Tape::constant(Tensor value) { return push(std::move(value)); }

void Tape::backward(int root) {
  if (!grad_enabled_) throw Error("backward() on a grad-disabled tape");
  if (value(root).numel() != 1) throw ShapeError("backward root must be scalar");
  grad_mut(root).data[0] = 1.0;
  for (int i = root; i >= 0; --i) {
    auto& fn = nodes_[static_cast<size_t>(i)].back;
    if (fn) fn();
  }
  for (auto& [id, sink] : leaves_) {
    const Tensor& g = grad(id);
    for (int64_t k = 0; k < g.numel(); ++k) sink->data[static_cast<size_t>(k)] += g[k];
  }
}

int Tape::add(int a, int b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (!va.same_shape(vb)) throw ShapeError("add: shape mismatch");
  Tensor out(va.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = va[i] + vb[i];
  const int id = push(std::move(out));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, a, b] {
    const Tensor& g = grad(id);
    Tensor& ga = grad_mut(a);
    Tensor& gb = grad_mut(b);
    for (int64_t i = 0; i < g.numel(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  };
  return id;
}

int Tape::sub(int a, int b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (!va.same_shape(vb)) throw ShapeError("sub: shape mismatch");
  Tensor out(va.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = va[i] - vb[i];
  const int id = push(std::move(out));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, a, b] {
    const Tensor& g = grad(id);
    Tensor& ga = grad_mut(a);
    Tensor& gb = grad_mut(b);
    for (int64_t i = 0; i < g.numel(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  };
  return id;
}

int Tape::scale(int a, double s) {
  const Tensor& va = value(a);
  Tensor out(va.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = va[i] * s;
  const int id = push(std::move(out));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, a, s] {
    const Tensor& g = grad(id);
    Tensor& ga = grad_mut(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += s * g[i];
  };
  return id;
}

int Tape::square(int a) {
  const Tensor& va = value(a);
  Tensor out(va.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = va[i] * va[i];
  const int id = push(std::move(out));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, a] {
    const Tensor& g = grad(id);
    const Tensor& va = value(a);
    Tensor& ga = grad_mut(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += 2.0 * va[i] * g[i];
  };
  return id;
}

int Tape::relu(int a) {
  const Tensor& va = value(a);
  Tensor out(va.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = va[i] > 0.0 ? va[i] : 0.0;
  const int id = push(std::move(out));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, a] {
    const Tensor& g = grad(id);
    const Tensor& va = value(a);
    Tensor& ga = grad_mut(a);
    for (int64_t i = 0; i < g.numel(); ++i) {
      if (va[i] > 0.0) ga[i] += g[i];
    }
  };
  return id;
}

int Tape::sigmoid(int a) {
  const Tensor& va = value(a);
  Tensor out(va.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-va[i]));
  const int id = push(std::move(out));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, a] {
    const Tensor& g = grad(id);
    const Tensor& vo = value(id);
    Tensor& ga = grad_mut(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += vo[i] * (1.0 - vo[i]) * g[i];
  };
  return id;
}

int Tape::mean_all(int a) {
  const Tensor& va = value(a);
  const int64_t n = va.numel();
  if (n == 0) throw ShapeError("mean_all of empty tensor");
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += va[i];
  const int id = push(Tensor::scalar(s / static_cast<double>(n)));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, a, n] {
    const double g = grad(id).data[0] / static_cast<double>(n);
    Tensor& ga = grad_mut(a);
    for (int64_t i = 0; i < n; ++i) ga[i] += g;
  };
  return id;
}

int Tape::sum_list(const std::vector<int>& xs) {
  double s = 0.0;
  for (int x : xs) {
    if (value(x).numel() != 1) throw ShapeError("sum_list wants scalars");
    s += value(x).data[0];
  }
  const int id = push(Tensor::scalar(s));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, xs] {
    const double g = grad(id).data[0];
    for (int x : xs) grad_mut(x).data[0] += g;
  };
  return id;
}

int Tape::wsum(const std::vector<std::pair<int, double>>& terms) {
  double s = 0.0;
  for (const auto& [x, w] : terms) {
    if (value(x).numel() != 1) throw ShapeError("wsum wants scalars");
    s += w * value(x).data[0];
  }
  const int id = push(Tensor::scalar(s));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, terms] {
    const double g = grad(id).data[0];
    for (const auto& [x, w] : terms) grad_mut(x).data[0] += w * g;
  };
  return id;
}

int Tape::concat_ch(int a, int b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.rank() != 3 || vb.rank() != 3 || va.dim(1) != vb.dim(1) || va.dim(2) != vb.dim(2)) {
    throw ShapeError("concat_ch: want CxHxW with equal spatial dims");
  }
  Tensor out({va.dim(0) + vb.dim(0), va.dim(1), va.dim(2)});
  std::copy(va.data.begin(), va.data.end(), out.data.begin());
  std::copy(vb.data.begin(), vb.data.end(), out.data.begin() + va.data.size());
  const int64_t na = va.numel();  // before push: pushing may reallocate nodes_
  const int id = push(std::move(out));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, a, b, na] {
    const Tensor& g = grad(id);
    Tensor& ga = grad_mut(a);
    Tensor& gb = grad_mut(b);
    for (int64_t i = 0; i < na; ++i) ga[i] += g[i];
    for (int64_t i = na; i < g.numel(); ++i) gb[i - na] += g[i];
  };
  return id;
}

int Tape::upsample2x(int a) {
  const Tensor& va = value(a);
  if (va.rank() != 3) throw ShapeError("upsample2x wants CxHxW");
  const int c = va.dim(0), h = va.dim(1), w = va.dim(2);
  Tensor out({c, 2 * h, 2 * w});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < 2 * h; ++y) {
      for (int x = 0; x < 2 * w; ++x) {
        out.at3(ch, y, x) = va.at3(ch, y / 2, x / 2);
      }
    }
  }
  const int id = push(std::move(out));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, a, c, h, w] {
    const Tensor& g = grad(id);
    Tensor& ga = grad_mut(a);
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < 2 * h; ++y) {
        for (int x = 0; x < 2 * w; ++x) {
          ga.at3(ch, y / 2, x / 2) += g.at3(ch, y, x);
        }
      }
    }
  };
  return id;
}

int Tape::spatial_mean(int a) {
  const Tensor& va = value(a);
  if (va.rank() != 3) throw ShapeError("spatial_mean wants CxHxW");
  const int c = va.dim(0);
  const int64_t hw = static_cast<int64_t>(va.dim(1)) * va.dim(2);
  Tensor out({c});
  for (int ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (int64_t i = 0; i < hw; ++i) s += va[ch * hw + i];
    out[ch] = s / static_cast<double>(hw);
  }
  const int id = push(std::move(out));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, a, c, hw] {
    const Tensor& g = grad(id);
    Tensor& ga = grad_mut(a);
    for (int ch = 0; ch < c; ++ch) {
      const double gv = g[ch] / static_cast<double>(hw);
      for (int64_t i = 0; i < hw; ++i) ga[ch * hw + i] += gv;
    }
  };
  return id;
}

int Tape::gather(int a, std::vector<int64_t> indices) {
  const Tensor& va = value(a);
  Tensor out({static_cast<int>(indices.size())});
  for (size_t i = 0; i < indices.size(); ++i) out[static_cast<int64_t>(i)] = va[indices[i]];
  const int id = push(std::move(out));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, a, indices = std::move(indices)] {
    const Tensor& g = grad(id);
    Tensor& ga = grad_mut(a);
    for (size_t i = 0; i < indices.size(); ++i) ga[indices[i]] += g[static_cast<int64_t>(i)];
  };
  return id;
}

int Tape::stack_scalars(const std::vector<int>& xs) {
  Tensor out({static_cast<int>(xs.size())});
  for (size_t i = 0; i < xs.size(); ++i) {
    if (value(xs[i]).numel() != 1) throw ShapeError("stack_scalars wants scalars");
    out[static_cast<int64_t>(i)] = value(xs[i]).data[0];
  }
  const int id = push(std::move(out));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, xs] {
    const Tensor& g = grad(id);
    for (size_t i = 0; i < xs.size(); ++i) grad_mut(xs[i]).data[0] += g[static_cast<int64_t>(i)];
  };
  return id;
}

int Tape::broadcast_to(int scalar, int n) {
  if (value(scalar).numel() != 1) throw ShapeError("broadcast_to wants a scalar");
  Tensor out({n}, value(scalar).data[0]);
  const int id = push(std::move(out));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, scalar, n] {
    const Tensor& g = grad(id);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += g[i];
    grad_mut(scalar).data[0] += s;
  };
  return id;
}

int Tape::conv2d(int x, int w, int b, int stride, int pad) {
  const Tensor& vx = value(x);
  const Tensor& vw = value(w);
  const Tensor& vb = value(b);
  if (vx.rank() != 3 || vw.rank() != 4) throw ShapeError("conv2d wants CxHxW input, OxCxKhxKw weight");
  const int ci = vx.dim(0), hi = vx.dim(1), wi = vx.dim(2);
  const int co = vw.dim(0), kh = vw.dim(2), kw = vw.dim(3);
  if (vw.dim(1) != ci) throw ShapeError("conv2d: channel mismatch");
  if (vb.numel() != co) throw ShapeError("conv2d: bias size mismatch");
  const int ho = (hi + 2 * pad - kh) / stride + 1;
  const int wo = (wi + 2 * pad - kw) / stride + 1;
  if (ho <= 0 || wo <= 0) throw ShapeError("conv2d: empty output");

  const int k_rows = ci * kh * kw;
  const int n_cols = ho * wo;
  auto col = std::make_shared<MatRM>(k_rows, n_cols);
  col->setZero();
  for (int c = 0; c < ci; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const int row = (c * kh + ki) * kw + kj;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ki - pad;
          if (iy < 0 || iy >= hi) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kj - pad;
            if (ix < 0 || ix >= wi) continue;
            (*col)(row, oy * wo + ox) = vx.at3(c, iy, ix);
          }
        }
      }
    }
  }

  Tensor out({co, ho, wo});
  {
    CMapRM wmat(vw.data.data(), co, k_rows);
    MapRM y(out.data.data(), co, n_cols);
    y.noalias() = wmat * (*col);
    for (int o = 0; o < co; ++o) y.row(o).array() += vb[o];
  }
  const int id = push(std::move(out));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, x, w, b, col, stride, pad, ci, hi, wi, co, kh, kw, ho, wo] {
    const Tensor& g = grad(id);
    const Tensor& vw = value(w);
    const int k_rows = ci * kh * kw;
    const int n_cols = ho * wo;
    CMapRM dy(g.data.data(), co, n_cols);
    CMapRM wmat(vw.data.data(), co, k_rows);
    // weight gradient
    {
      MapRM dw(grad_mut(w).data.data(), co, k_rows);
      dw.noalias() += dy * col->transpose();
    }
    // bias gradient
    {
      Tensor& db = grad_mut(b);
      for (int o = 0; o < co; ++o) db[o] += dy.row(o).sum();
    }
    // input gradient via col2im scatter
    {
      MatRM dcol = wmat.transpose() * dy;
      Tensor& gx = grad_mut(x);
      for (int c = 0; c < ci; ++c) {
        for (int ki = 0; ki < kh; ++ki) {
          for (int kj = 0; kj < kw; ++kj) {
            const int row = (c * kh + ki) * kw + kj;
            for (int oy = 0; oy < ho; ++oy) {
              const int iy = oy * stride + ki - pad;
              if (iy < 0 || iy >= hi) continue;
              for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * stride + kj - pad;
                if (ix < 0 || ix >= wi) continue;
                gx.at3(c, iy, ix) += dcol(row, oy * wo + ox);
              }
            }
          }
        }
      }
    }
  };
  return id;
}

int Tape::linear(int x, int w, int b) {
  const Tensor& vx = value(x);
  const Tensor& vw = value(w);
  const Tensor& vb = value(b);
  if (vw.rank() != 2) throw ShapeError("linear wants 2-D weight");
  const int m = vw.dim(0), n = vw.dim(1);
  if (vx.numel() != n) throw ShapeError("linear: input size mismatch");
  if (vb.numel() != m) throw ShapeError("linear: bias size mismatch");
  Tensor out({m});
  {
    CMapRM wm(vw.data.data(), m, n);
    Eigen::Map<const Eigen::VectorXd> xv(vx.data.data(), n);
    Eigen::Map<Eigen::VectorXd> yv(out.data.data(), m);
    yv.noalias() = wm * xv;
    for (int i = 0; i < m; ++i) yv[i] += vb[i];
  }
  const int id = push(std::move(out));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, x, w, b, m, n] {
    const Tensor& g = grad(id);
    const Tensor& vx = value(x);
    const Tensor& vw = value(w);
    Eigen::Map<const Eigen::VectorXd> gy(g.data.data(), m);
    Eigen::Map<const Eigen::VectorXd> xv(vx.data.data(), n);
    CMapRM wm(vw.data.data(), m, n);
    {
      MapRM dw(grad_mut(w).data.data(), m, n);
      dw.noalias() += gy * xv.transpose();
    }
    {
      Tensor& db = grad_mut(b);
      for (int i = 0; i < m; ++i) db[i] += gy[i];
    }
    {
      Eigen::Map<Eigen::VectorXd> dx(grad_mut(x).data.data(), n);
      dx.noalias() += wm.transpose() * gy;
    }
  };
  return id;
}

int Tape::roi_align(int feat, double x1, double y1, double x2, double y2, int pool) {
  const Tensor& vf = value(feat);
  if (vf.rank() != 3) throw ShapeError("roi_align wants CxHxW");
  const int c = vf.dim(0), h = vf.dim(1), w = vf.dim(2);
  const double bw = std::max(x2 - x1, 1e-6) / pool;
  const double bh = std::max(y2 - y1, 1e-6) / pool;

  struct Sample {
    int idx00, idx01, idx10, idx11;
    double w00, w01, w10, w11;
  };
  auto samples = std::make_shared<std::vector<Sample>>();
  samples->reserve(static_cast<size_t>(pool) * pool);
  Tensor out({c, pool, pool});
  for (int py = 0; py < pool; ++py) {
    for (int px = 0; px < pool; ++px) {
      double sy = y1 + (py + 0.5) * bh;
      double sx = x1 + (px + 0.5) * bw;
      sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
      sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
      const int y0 = std::min(static_cast<int>(sy), h - 2 >= 0 ? h - 2 : 0);
      const int x0 = std::min(static_cast<int>(sx), w - 2 >= 0 ? w - 2 : 0);
      const int y1i = std::min(y0 + 1, h - 1);
      const int x1i = std::min(x0 + 1, w - 1);
      const double fy = sy - y0, fx = sx - x0;
      Sample s;
      s.idx00 = y0 * w + x0;
      s.idx01 = y0 * w + x1i;
      s.idx10 = y1i * w + x0;
      s.idx11 = y1i * w + x1i;
      s.w00 = (1 - fy) * (1 - fx);
      s.w01 = (1 - fy) * fx;
      s.w10 = fy * (1 - fx);
      s.w11 = fy * fx;
      samples->push_back(s);
      for (int ch = 0; ch < c; ++ch) {
        const double* base = vf.data.data() + static_cast<size_t>(ch) * h * w;
        out.at3(ch, py, px) =
            s.w00 * base[s.idx00] + s.w01 * base[s.idx01] + s.w10 * base[s.idx10] + s.w11 * base[s.idx11];
      }
    }
  }
  const int id = push(std::move(out));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, feat, samples, c, h, w, pool] {
    const Tensor& g = grad(id);
    Tensor& gf = grad_mut(feat);
    for (int py = 0; py < pool; ++py) {
      for (int px = 0; px < pool; ++px) {
        const Sample& s = (*samples)[static_cast<size_t>(py) * pool + px];
        for (int ch = 0; ch < c; ++ch) {
          double* base = gf.data.data() + static_cast<size_t>(ch) * h * w;
          const double gv = g.at3(ch, py, px);
          base[s.idx00] += s.w00 * gv;
          base[s.idx01] += s.w01 * gv;
          base[s.idx10] += s.w10 * gv;
          base[s.idx11] += s.w11 * gv;
        }
      }
    }
  };
  return id;
}

int Tape::grad_reverse(int a, double coeff) {
  Tensor out = value(a);
  const int id = push(std::move(out));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, a, coeff] {
    const Tensor& g = grad(id);
    Tensor& ga = grad_mut(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += -coeff * g[i];
  };
  return id;
}

int Tape::bce_logits_mean(int logits, Tensor targets) {
  const Tensor& vz = value(logits);
  if (!vz.same_shape(targets)) throw ShapeError("bce_logits_mean: target shape mismatch");
  const int64_t n = vz.numel();
  if (n == 0) throw ShapeError("bce_logits_mean of empty tensor");
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double z = vz[i], t = targets[i];
    loss += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  const int id = push(Tensor::scalar(loss / static_cast<double>(n)));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, logits, targets = std::move(targets), n] {
    const double g = grad(id).data[0] / static_cast<double>(n);
    const Tensor& vz = value(logits);
    Tensor& gz = grad_mut(logits);
    for (int64_t i = 0; i < n; ++i) {
      const double p = 1.0 / (1.0 + std::exp(-vz[i]));
      gz[i] += g * (p - targets[i]);
    }
  };
  return id;
}

int Tape::softmax_ce(int logits, int label) {
  const Tensor& vz = value(logits);
  const int64_t n = vz.numel();
  if (label < 0 || label >= n) throw ShapeError("softmax_ce: label out of range");
  double zmax = vz[0];
  for (int64_t i = 1; i < n; ++i) zmax = std::max(zmax, vz[i]);
  double sum = 0.0;
  for (int64_t i = 0; i < n; ++i) sum += std::exp(vz[i] - zmax);
  const double log_sum = std::log(sum) + zmax;
  const int id = push(Tensor::scalar(log_sum - vz[label]));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, logits, label, n, log_sum] {
    const double g = grad(id).data[0];
    const Tensor& vz = value(logits);
    Tensor& gz = grad_mut(logits);
    for (int64_t i = 0; i < n; ++i) {
      const double p = std::exp(vz[i] - log_sum);
      gz[i] += g * (p - (i == label ? 1.0 : 0.0));
    }
  };
  return id;
}

int Tape::smooth_l1_sum(int pred, Tensor target, double beta) {
  const Tensor& vp = value(pred);
  if (!vp.same_shape(target)) throw ShapeError("smooth_l1_sum: target shape mismatch");
  double loss = 0.0;
  for (int64_t i = 0; i < vp.numel(); ++i) {
    const double d = std::abs(vp[i] - target[i]);
    loss += d < beta ? 0.5 * d * d / beta : d - 0.5 * beta;
  }
  const int id = push(Tensor::scalar(loss));
  if (!grad_enabled_) return id;
  nodes_.back().back = [this, id, pred, target = std::move(target), beta] {
    const double g = grad(id).data[0];
    const Tensor& vp = value(pred);
    Tensor& gp = grad_mut(pred);
    for (int64_t i = 0; i < vp.numel(); ++i) {
      const double d = vp[i] - target[i];
      const double dd = std::abs(d) < beta ? d / beta : (d > 0 ? 1.0 : -1.0);
      gp[i] += g * dd;
    }
  };
  return id;
}

}  // namespace ssda
