#include <Eigen/Core>
#include <string>

#include "sremtl/ops.hpp"

namespace sremtl {

using detail::grad_target;
using detail::make_result;
using detail::TensorImpl;

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

struct ConvGeometry {
  std::size_t c_in, length, c_out, kernel, stride, pad_left, out_len;
};

// Column matrix [c_in * kernel, out_len] of the (implicitly zero-padded) input.
std::vector<double> im2col(std::span<const double> x, const ConvGeometry& g) {
  std::vector<double> cols(g.c_in * g.kernel * g.out_len, 0.0);
  for (std::size_t c = 0; c < g.c_in; ++c) {
    const double* row = x.data() + c * g.length;
    for (std::size_t k = 0; k < g.kernel; ++k) {
      double* dst = cols.data() + (c * g.kernel + k) * g.out_len;
      for (std::size_t t = 0; t < g.out_len; ++t) {
        const std::ptrdiff_t pos =
            static_cast<std::ptrdiff_t>(t * g.stride + k) -
            static_cast<std::ptrdiff_t>(g.pad_left);
        if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(g.length))
          dst[t] = row[pos];
      }
    }
  }
  return cols;
}

void col2im_add(const std::vector<double>& cols, const ConvGeometry& g,
                std::vector<double>& dx) {
  for (std::size_t c = 0; c < g.c_in; ++c) {
    double* row = dx.data() + c * g.length;
    for (std::size_t k = 0; k < g.kernel; ++k) {
      const double* src = cols.data() + (c * g.kernel + k) * g.out_len;
      for (std::size_t t = 0; t < g.out_len; ++t) {
        const std::ptrdiff_t pos =
            static_cast<std::ptrdiff_t>(t * g.stride + k) -
            static_cast<std::ptrdiff_t>(g.pad_left);
        if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(g.length))
          row[pos] += src[t];
      }
    }
  }
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor* bias,
              std::size_t stride, std::size_t pad_left, std::size_t pad_right) {
  if (x.rank() != 2 || weight.rank() != 3) {
    throw ShapeError("conv1d: expected x [C_in, L] and weight [C_out, C_in, K], "
                     "got " + shape_str(x.shape()) + " and " +
                     shape_str(weight.shape()));
  }
  if (stride == 0) throw ParameterError("conv1d: stride must be >= 1");
  ConvGeometry g{x.dim(0), x.dim(1), weight.dim(0), weight.dim(2),
                 stride,   pad_left, 0};
  if (weight.dim(1) != g.c_in) {
    throw ShapeError("conv1d: weight expects " + std::to_string(weight.dim(1)) +
                     " input channels, input has " + std::to_string(g.c_in));
  }
  const std::size_t padded = g.length + pad_left + pad_right;
  if (g.kernel == 0 || padded < g.kernel) {
    throw ShapeError("conv1d: kernel " + std::to_string(g.kernel) +
                     " larger than padded input " + std::to_string(padded));
  }
  if (bias && bias->shape() != Shape{g.c_out}) {
    throw ShapeError("conv1d: bias must be [C_out]");
  }
  g.out_len = (padded - g.kernel) / stride + 1;
  const std::size_t depth = g.c_in * g.kernel;

  std::vector<double> cols = im2col(x.data(), g);
  std::vector<double> out(g.c_out * g.out_len);
  MutMap y(out.data(), g.c_out, g.out_len);
  y.noalias() = ConstMap(weight.data().data(), g.c_out, depth) *
                ConstMap(cols.data(), depth, g.out_len);
  if (bias) {
    for (std::size_t o = 0; o < g.c_out; ++o) y.row(o).array() += (*bias)[o];
  }

  std::vector<Tensor> inputs{x, weight};
  Tensor b = bias ? *bias : Tensor();
  if (bias) inputs.push_back(b);
  const bool has_bias = bias != nullptr;
  return make_result(
      {g.c_out, g.out_len}, std::move(out), inputs,
      [x, weight, b, has_bias, g, depth,
       cols = std::move(cols)](const TensorImpl& res) {
        ConstMap dy(res.grad.data(), g.c_out, g.out_len);
        if (auto* gw = grad_target(weight)) {
          MutMap(gw->data(), g.c_out, depth).noalias() +=
              dy * ConstMap(cols.data(), depth, g.out_len).transpose();
        }
        if (has_bias) {
          if (auto* gb = grad_target(b)) {
            // Sequential sum: Eigen's vectorized sum depends on pointer alignment.
            for (std::size_t o = 0; o < g.c_out; ++o) {
              const double* row = res.grad.data() + o * g.out_len;
              double acc = 0;
              for (std::size_t t = 0; t < g.out_len; ++t) acc += row[t];
              (*gb)[o] += acc;
            }
          }
        }
        if (auto* gx = grad_target(x)) {
          std::vector<double> dcols(depth * g.out_len);
          MutMap(dcols.data(), depth, g.out_len).noalias() =
              ConstMap(weight.data().data(), g.c_out, depth).transpose() * dy;
          col2im_add(dcols, g, *gx);
        }
      });
}

Tensor conv1d(const Tensor& x, const Tensor& weight, std::size_t stride,
              std::size_t padding) {
  return conv1d(x, weight, nullptr, stride, padding, padding);
}

}  // namespace sremtl
