#include "sremtl/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace sremtl {

using detail::grad_target;
using detail::make_result;
using detail::TensorImpl;

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

struct Broadcast {
  std::size_t outer;
  std::size_t inner;
};

bool is_suffix(const Shape& big, const Shape& small) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Broadcast broadcast_of(const Tensor& a, const Tensor& b, const char* op) {
  if (b.rank() == 0 || is_suffix(a.shape(), b.shape())) {
    const std::size_t inner = b.numel();
    return {inner ? a.numel() / inner : 0, inner};
  }
  throw ShapeError(std::string(op) + ": cannot broadcast " +
                   shape_str(b.shape()) + " onto " + shape_str(a.shape()));
}

template <typename Fwd, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd f,
              DA da, DB db) {
  const Broadcast bc = broadcast_of(a, b, name);
  std::vector<double> out(a.numel());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t o = 0; o < bc.outer; ++o) {
    for (std::size_t i = 0; i < bc.inner; ++i) {
      const std::size_t k = o * bc.inner + i;
      out[k] = f(x[k], y[i]);
    }
  }
  return make_result(a.shape(), std::move(out), {a, b},
                     [a, b, bc, da, db](const TensorImpl& res) {
                       const auto& g = res.grad;
                       const auto x = a.data();
                       const auto y = b.data();
                       if (auto* ga = grad_target(a)) {
                         for (std::size_t o = 0; o < bc.outer; ++o)
                           for (std::size_t i = 0; i < bc.inner; ++i) {
                             const std::size_t k = o * bc.inner + i;
                             (*ga)[k] += g[k] * da(x[k], y[i]);
                           }
                       }
                       if (auto* gb = grad_target(b)) {
                         for (std::size_t o = 0; o < bc.outer; ++o)
                           for (std::size_t i = 0; i < bc.inner; ++i) {
                             const std::size_t k = o * bc.inner + i;
                             (*gb)[i] += g[k] * db(x[k], y[i]);
                           }
                       }
                     });
}

// Elementwise unary op whose derivative is expressed through input and output.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd f, Deriv d) {
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_result(x.shape(), std::move(out), {x},
                     [x, d](const TensorImpl& res) {
                       auto* gx = grad_target(x);
                       if (!gx) return;
                       const auto in = x.data();
                       for (std::size_t i = 0; i < in.size(); ++i)
                         (*gx)[i] += res.grad[i] * d(in[i], res.data[i]);
                     });
}

struct AxisSplit {
  std::size_t outer;
  std::size_t n;
  std::size_t inner;
};

AxisSplit split_at(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for " + shape_str(shape));
  }
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (b.rank() != 0 && !is_suffix(a.shape(), b.shape()) &&
      is_suffix(b.shape(), a.shape()))
    return add(b, a);
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (b.rank() != 0 && !is_suffix(a.shape(), b.shape()) &&
      is_suffix(b.shape(), a.shape()))
    return mul(b, a);
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor add(const Tensor& a, double c) {
  return unary(
      a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor mul(const Tensor& a, double c) {
  return unary(
      a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Tensor neg(const Tensor& x) { return mul(x, -1.0); }

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

namespace {
constexpr double kGeluScale = 0.79788456080286535588;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;
}  // namespace

Tensor gelu(const Tensor& x) {
  constexpr double k0 = kGeluScale;
  constexpr double k1 = kGeluCubic;
  // tanh form: 0.5 x (1 + tanh(u)), u = sqrt(2/pi) (x + 0.044715 x^3), with
  // tanh(u) = 1 - 2 / (1 + exp(2u)) so the exp vectorizes.
  const std::size_t n = x.numel();
  Eigen::Map<const Eigen::ArrayXd> in(x.data().data(), static_cast<Eigen::Index>(n));
  Eigen::ArrayXd th =
      1.0 - 2.0 / (1.0 + (2.0 * k0 * (in + k1 * in.cube())).exp());
  std::vector<double> out(n);
  Eigen::Map<Eigen::ArrayXd>(out.data(), static_cast<Eigen::Index>(n)) =
      0.5 * in * (1.0 + th);
  return make_result(
      x.shape(), std::move(out), {x},
      [x, th = std::move(th)](const TensorImpl& res) {
        const double k0 = kGeluScale, k1 = kGeluCubic;
        auto* gx = grad_target(x);
        if (!gx) return;
        const auto n = static_cast<Eigen::Index>(gx->size());
        Eigen::Map<const Eigen::ArrayXd> in(x.data().data(), n);
        Eigen::Map<const Eigen::ArrayXd> g(res.grad.data(), n);
        Eigen::Map<Eigen::ArrayXd>(gx->data(), n) +=
            g * (0.5 * (1.0 + th) + 0.5 * in * (1.0 - th.square()) * k0 *
                                         (1.0 + 3.0 * k1 * in.square()));
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor reciprocal(const Tensor& x) {
  return unary(
      x, [](double v) { return 1.0 / v; },
      [](double, double y) { return -y * y; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " +
                     shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() =
      ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
  return make_result({m, n}, std::move(out), {a, b},
                     [a, b, m, k, n](const TensorImpl& res) {
                       ConstMap g(res.grad.data(), m, n);
                       if (auto* ga = grad_target(a)) {
                         MutMap(ga->data(), m, k).noalias() +=
                             g * ConstMap(b.data().data(), k, n).transpose();
                       }
                       if (auto* gb = grad_target(b)) {
                         MutMap(gb->data(), k, n).noalias() +=
                             ConstMap(a.data().data(), m, k).transpose() * g;
                       }
                     });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  MutMap(out.data(), c, r) = ConstMap(x.data().data(), r, c).transpose();
  return make_result({c, r}, std::move(out), {x},
                     [x, r, c](const TensorImpl& res) {
                       if (auto* gx = grad_target(x)) {
                         MutMap(gx->data(), r, c) +=
                             ConstMap(res.grad.data(), c, r).transpose();
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " +
                     shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x},
                     [x](const TensorImpl& res) {
                       if (auto* gx = grad_target(x)) {
                         for (std::size_t i = 0; i < gx->size(); ++i)
                           (*gx)[i] += res.grad[i];
                       }
                     });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin,
             std::size_t end) {
  const AxisSplit s = split_at(x.shape(), axis, "slice");
  if (begin > end || end > s.n) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") out of bounds for axis of size " +
                     std::to_string(s.n));
  }
  const std::size_t len = end - begin;
  Shape shape = x.shape();
  shape[axis] = len;
  std::vector<double> out(s.outer * len * s.inner);
  const auto in = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(in.begin() + (o * s.n + begin) * s.inner, len * s.inner,
                out.begin() + o * len * s.inner);
  }
  return make_result(std::move(shape), std::move(out), {x},
                     [x, s, begin, len](const TensorImpl& res) {
                       auto* gx = grad_target(x);
                       if (!gx) return;
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         const double* src = res.grad.data() + o * len * s.inner;
                         double* dst =
                             gx->data() + (o * s.n + begin) * s.inner;
                         for (std::size_t i = 0; i < len * s.inner; ++i)
                           dst[i] += src[i];
                       }
                     });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& ref = parts[0].shape();
  const AxisSplit s0 = split_at(ref, axis, "concat");
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != ref.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < ref.size(); ++d) {
      if (d != axis && p.shape()[d] != ref[d]) {
        throw ShapeError("concat: " + shape_str(p.shape()) +
                         " incompatible with " + shape_str(ref));
      }
    }
    lens.push_back(p.shape()[axis]);
    total += p.shape()[axis];
  }
  Shape shape = ref;
  shape[axis] = total;
  std::vector<double> out(s0.outer * total * s0.inner);
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto in = parts[pi].data();
    const std::size_t block = lens[pi] * s0.inner;
    for (std::size_t o = 0; o < s0.outer; ++o) {
      std::copy_n(in.begin() + o * block, block,
                  out.begin() + (o * total + offset) * s0.inner);
    }
    offset += lens[pi];
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(
      std::move(shape), std::move(out), inputs,
      [inputs, lens, total, s0](const TensorImpl& res) {
        std::size_t offset = 0;
        for (std::size_t pi = 0; pi < inputs.size(); ++pi) {
          const std::size_t block = lens[pi] * s0.inner;
          if (auto* g = grad_target(inputs[pi])) {
            for (std::size_t o = 0; o < s0.outer; ++o) {
              const double* src =
                  res.grad.data() + (o * total + offset) * s0.inner;
              double* dst = g->data() + o * block;
              for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
            }
          }
          offset += lens[pi];
        }
      });
}

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("stack: no inputs");
  std::vector<Tensor> lifted;
  lifted.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.shape() != parts[0].shape()) {
      throw ShapeError("stack: " + shape_str(p.shape()) + " vs " +
                       shape_str(parts[0].shape()));
    }
    Shape s{1};
    s.insert(s.end(), p.shape().begin(), p.shape().end());
    lifted.push_back(reshape(p, std::move(s)));
  }
  return concat(lifted, 0);
}

Tensor index_select(const Tensor& x, std::span<const std::size_t> indices) {
  if (x.rank() == 0) throw ShapeError("index_select on a scalar");
  const std::size_t rows = x.dim(0);
  const std::size_t width = rows ? x.numel() / rows : 0;
  Shape shape = x.shape();
  shape[0] = indices.size();
  std::vector<double> out(indices.size() * width);
  const auto in = x.data();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= rows) {
      throw ShapeError("index_select: index " + std::to_string(indices[r]) +
                       " out of range " + std::to_string(rows));
    }
    std::copy_n(in.begin() + indices[r] * width, width,
                out.begin() + r * width);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result(std::move(shape), std::move(out), {x},
                     [x, idx, width](const TensorImpl& res) {
                       auto* gx = grad_target(x);
                       if (!gx) return;
                       for (std::size_t r = 0; r < idx.size(); ++r)
                         for (std::size_t i = 0; i < width; ++i)
                           (*gx)[idx[r] * width + i] += res.grad[r * width + i];
                     });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result({}, {total}, {x}, [x](const TensorImpl& res) {
    if (auto* gx = grad_target(x)) {
      for (double& g : *gx) g += res.grad[0];
    }
  });
}

Tensor sum(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis, "sum");
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto in = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.n; ++j)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += in[(o * s.n + j) * s.inner + i];
  return make_result(std::move(shape), std::move(out), {x},
                     [x, s](const TensorImpl& res) {
                       auto* gx = grad_target(x);
                       if (!gx) return;
                       for (std::size_t o = 0; o < s.outer; ++o)
                         for (std::size_t j = 0; j < s.n; ++j)
                           for (std::size_t i = 0; i < s.inner; ++i)
                             (*gx)[(o * s.n + j) * s.inner + i] +=
                                 res.grad[o * s.inner + i];
                     });
}

Tensor mean(const Tensor& x) {
  return mul(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mean(const Tensor& x, std::size_t axis) {
  return mul(sum(x, axis), 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis, "softmax");
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.n * s.inner + i;
      double mx = in[base];
      for (std::size_t j = 1; j < s.n; ++j)
        mx = std::max(mx, in[base + j * s.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) {
        const double e = std::exp(in[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < s.n; ++j) out[base + j * s.inner] /= z;
    }
  return make_result(x.shape(), std::move(out), {x},
                     [x, s](const TensorImpl& res) {
                       auto* gx = grad_target(x);
                       if (!gx) return;
                       const auto& y = res.data;
                       const auto& g = res.grad;
                       for (std::size_t o = 0; o < s.outer; ++o)
                         for (std::size_t i = 0; i < s.inner; ++i) {
                           const std::size_t base = o * s.n * s.inner + i;
                           double dot = 0.0;
                           for (std::size_t j = 0; j < s.n; ++j) {
                             const std::size_t k = base + j * s.inner;
                             dot += g[k] * y[k];
                           }
                           for (std::size_t j = 0; j < s.n; ++j) {
                             const std::size_t k = base + j * s.inner;
                             (*gx)[k] += y[k] * (g[k] - dot);
                           }
                         }
                     });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis, "log_softmax");
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.n * s.inner + i;
      double mx = in[base];
      for (std::size_t j = 1; j < s.n; ++j)
        mx = std::max(mx, in[base + j * s.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < s.n; ++j)
        z += std::exp(in[base + j * s.inner] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t j = 0; j < s.n; ++j)
        out[base + j * s.inner] = in[base + j * s.inner] - lse;
    }
  return make_result(x.shape(), std::move(out), {x},
                     [x, s](const TensorImpl& res) {
                       auto* gx = grad_target(x);
                       if (!gx) return;
                       const auto& y = res.data;
                       const auto& g = res.grad;
                       for (std::size_t o = 0; o < s.outer; ++o)
                         for (std::size_t i = 0; i < s.inner; ++i) {
                           const std::size_t base = o * s.n * s.inner + i;
                           double total = 0.0;
                           for (std::size_t j = 0; j < s.n; ++j)
                             total += g[base + j * s.inner];
                           for (std::size_t j = 0; j < s.n; ++j) {
                             const std::size_t k = base + j * s.inner;
                             (*gx)[k] += g[k] - std::exp(y[k]) * total;
                           }
                         }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  if (x.rank() == 0) throw ShapeError("layer_norm on a scalar");
  const std::size_t d = x.shape().back();
  if (d == 0) throw ShapeError("layer_norm: empty last axis");
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(d) +
                     "]");
  }
  if (!(eps > 0.0)) throw ParameterError("layer_norm: eps must be positive");
  const std::size_t rows = x.numel() / d;
  std::vector<double> xhat(x.numel()), rstd(rows), out(x.numel());
  const auto in = x.data();
  const auto gm = gamma.data();
  const auto bt = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * rstd[r];
      xhat[r * d + j] = h;
      out[r * d + j] = gm[j] * h + bt[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd), rows,
       d](const TensorImpl& res) {
        const auto& g = res.grad;
        const auto gm = gamma.data();
        if (auto* gg = grad_target(gamma)) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j)
              (*gg)[j] += g[r * d + j] * xhat[r * d + j];
        }
        if (auto* gb = grad_target(beta)) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) (*gb)[j] += g[r * d + j];
        }
        if (auto* gx = grad_target(x)) {
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = g[r * d + j] * gm[j];
              m1 += dh;
              m2 += dh * xhat[r * d + j];
            }
            m1 *= inv_d;
            m2 *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = g[r * d + j] * gm[j];
              (*gx)[r * d + j] += rstd[r] * (dh - m1 - xhat[r * d + j] * m2);
            }
          }
        }
      });
}

Tensor gumbel_softmax(const Tensor& logits, double temperature, bool hard,
                      std::span<const double> noise) {
  if (!(temperature > 0.0)) {
    throw ParameterError("gumbel_softmax: temperature must be positive, got " +
                         std::to_string(temperature));
  }
  if (noise.size() != logits.numel()) {
    throw ShapeError("gumbel_softmax: noise size does not match logits");
  }
  if (logits.rank() == 0) throw ShapeError("gumbel_softmax on a scalar");
  Tensor g(logits.shape(), std::vector<double>(noise.begin(), noise.end()));
  Tensor soft =
      softmax(mul(add(logits, g), 1.0 / temperature), logits.rank() - 1);
  return hard ? straight_through(soft) : soft;
}

Tensor gumbel_softmax(const Tensor& logits, double temperature, bool hard,
                      Rng& rng) {
  std::vector<double> noise(logits.numel());
  for (double& v : noise) v = rng.gumbel();
  return gumbel_softmax(logits, temperature, hard, noise);
}

Tensor straight_through(const Tensor& soft) {
  if (soft.rank() == 0) throw ShapeError("straight_through on a scalar");
  const std::size_t n = soft.shape().back();
  const std::size_t rows = n ? soft.numel() / n : 0;
  std::vector<double> out(soft.numel(), 0.0);
  const auto in = soft.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = in.subspan(r * n, n);
    const auto best = static_cast<std::size_t>(
        std::max_element(row.begin(), row.end()) - row.begin());
    out[r * n + best] = 1.0;
  }
  return make_result(soft.shape(), std::move(out), {soft},
                     [soft](const TensorImpl& res) {
                       if (auto* gs = grad_target(soft)) {
                         for (std::size_t i = 0; i < gs->size(); ++i)
                           (*gs)[i] += res.grad[i];
                       }
                     });
}

Tensor replace_rows(const Tensor& x, const std::vector<bool>& mask,
                    const Tensor& row) {
  require_rank(x, 2, "replace_rows");
  const std::size_t t = x.dim(0), d = x.dim(1);
  if (mask.size() != t) {
    throw ShapeError("replace_rows: mask length " + std::to_string(mask.size()) +
                     " != " + std::to_string(t) + " frames");
  }
  if (row.shape() != Shape{d}) throw ShapeError("replace_rows: row must be [d]");
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < t; ++i)
    if (mask[i]) std::copy_n(row.data().begin(), d, out.begin() + i * d);
  const std::vector<bool>& m = mask;
  return make_result(x.shape(), std::move(out), {x, row},
                     [x, row, m, d](const TensorImpl& res) {
                       auto* gx = grad_target(x);
                       auto* gr = grad_target(row);
                       for (std::size_t i = 0; i < m.size(); ++i)
                         for (std::size_t j = 0; j < d; ++j) {
                           const double g = res.grad[i * d + j];
                           if (m[i]) {
                             if (gr) (*gr)[j] += g;
                           } else if (gx) {
                             (*gx)[i * d + j] += g;
                           }
                         }
                     });
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
  require_rank(x, 2, "scale_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (s.shape() != Shape{n}) throw ShapeError("scale_rows: scale must be [N]");
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      out[i * d + j] = x.data()[i * d + j] * s.data()[i];
  return make_result(x.shape(), std::move(out), {x, s},
                     [x, s, n, d](const TensorImpl& res) {
                       auto* gx = grad_target(x);
                       auto* gs = grad_target(s);
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < d; ++j) {
                           const double g = res.grad[i * d + j];
                           if (gx) (*gx)[i * d + j] += g * s.data()[i];
                           if (gs) (*gs)[i] += g * x.data()[i * d + j];
                         }
                     });
}

Tensor cosine_rows(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "cosine_rows");
  if (a.shape() != b.shape()) {
    throw ShapeError("cosine_rows: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), d = a.dim(1);
  std::vector<double> out(n), na(n), nb(n);
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double x = a.data()[i * d + j], y = b.data()[i * d + j];
      dot += x * y;
      aa += x * x;
      bb += y * y;
    }
    if (aa == 0.0 || bb == 0.0) {
      throw ContractError("cosine similarity of a zero vector");
    }
    na[i] = std::sqrt(aa);
    nb[i] = std::sqrt(bb);
    out[i] = dot / (na[i] * nb[i]);
  }
  return make_result(
      {n}, std::move(out), {a, b},
      [a, b, n, d, na = std::move(na), nb = std::move(nb)](
          const TensorImpl& res) {
        auto* ga = grad_target(a);
        auto* gb = grad_target(b);
        for (std::size_t i = 0; i < n; ++i) {
          const double c = res.data[i], g = res.grad[i];
          const double inv = 1.0 / (na[i] * nb[i]);
          for (std::size_t j = 0; j < d; ++j) {
            const double x = a.data()[i * d + j], y = b.data()[i * d + j];
            if (ga) (*ga)[i * d + j] += g * (y * inv - c * x / (na[i] * na[i]));
            if (gb) (*gb)[i * d + j] += g * (x * inv - c * y / (nb[i] * nb[i]));
          }
        }
      });
}

Tensor row_norms(const Tensor& x) {
  require_rank(x, 2, "row_norms");
  return sqrt(sum(square(x), 1));
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps, std::vector<double>* batch_mean,
                  std::vector<double>* batch_var) {
  require_rank(x, 2, "batch_norm");
  Tensor mu = mean(x, 0);
  Tensor centered = sub(x, mu);
  Tensor var = mean(square(centered), 0);
  if (batch_mean) batch_mean->assign(mu.data().begin(), mu.data().end());
  if (batch_var) batch_var->assign(var.data().begin(), var.data().end());
  Tensor normed = div(centered, sqrt(add(var, eps)));
  return add(mul(normed, gamma), beta);
}

Tensor batch_norm_inference(const Tensor& x, const Tensor& gamma,
                            const Tensor& beta, std::span<const double> mean,
                            std::span<const double> var, double eps) {
  require_rank(x, 2, "batch_norm_inference");
  const std::size_t c = x.dim(1);
  std::vector<double> shift(c), scale(c);
  for (std::size_t j = 0; j < c; ++j) {
    shift[j] = mean[j];
    scale[j] = 1.0 / std::sqrt(var[j] + eps);
  }
  Tensor normed = mul(sub(x, Tensor(Shape{c}, std::move(shift))),
                      Tensor(Shape{c}, std::move(scale)));
  return add(mul(normed, gamma), beta);
}

Tensor sinusoidal_positions(std::size_t steps, std::size_t dim) {
  std::vector<double> pe(steps * dim);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t j = 0; j < dim; ++j) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(j - j % 2) /
                                static_cast<double>(dim));
      const double angle = static_cast<double>(t) * freq;
      pe[t * dim + j] = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return Tensor({steps, dim}, std::move(pe));
}

Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k,
                                    const Tensor& v) {
  require_rank(q, 2, "attention");
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  Tensor scores = mul(matmul(q, transpose(k)), scale);
  return matmul(softmax(scores, 1), v);
}

LstmState lstm_step(const Tensor& x, const LstmState& state,
                    const Tensor& w_ih, const Tensor& w_hh,
                    const Tensor& bias) {
  const std::size_t h = state.h.dim(1);
  if (w_hh.shape() != Shape{h, 4 * h} || bias.shape() != Shape{4 * h}) {
    throw ShapeError("lstm_step: weights do not match hidden size " +
                     std::to_string(h));
  }
  Tensor gates = add(add(matmul(x, w_ih), matmul(state.h, w_hh)), bias);
  Tensor i = sigmoid(slice(gates, 1, 0, h));
  Tensor f = sigmoid(slice(gates, 1, h, 2 * h));
  Tensor g = tanh(slice(gates, 1, 2 * h, 3 * h));
  Tensor o = sigmoid(slice(gates, 1, 3 * h, 4 * h));
  Tensor c = add(mul(f, state.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

}  // namespace sremtl
