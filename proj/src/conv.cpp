#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "anogan/ops.hpp"
#include "gemm.hpp"

namespace anogan::ops {

namespace {

// Sliding-window geometry of a convolution over a [N,channels,height,width]
// image producing a grid_h x grid_w output grid.
struct Geometry {
  std::size_t batch, channels, height, width;
  std::size_t kernel_h, kernel_w, stride, padding;
  std::size_t grid_h, grid_w;

  std::size_t rows() const { return channels * kernel_h * kernel_w; }
  std::size_t grid() const { return grid_h * grid_w; }
  std::size_t cols() const { return batch * grid(); }
  std::size_t image() const { return channels * height * width; }
};

// Images are processed in chunks small enough that the column buffer stays
// in cache; scratch space is reused across calls on the same thread.
constexpr std::size_t kChunkFloats = std::size_t{1} << 20;

std::size_t chunk_images(const Geometry& g) {
  const std::size_t per_image = std::max<std::size_t>(1, g.rows() * g.grid());
  return std::clamp<std::size_t>(kChunkFloats / per_image, 1, std::max<std::size_t>(g.batch, 1));
}

struct Scratch {
  std::vector<float> col;
  std::vector<float> mat;
  std::vector<float> phases;
};

Scratch& scratch() {
  thread_local Scratch s;
  return s;
}

float* reserve(std::vector<float>& v, std::size_t n) {
  if (v.size() < n) v.resize(n);
  return v.data();
}

// A stride-s window reads every s-th pixel. Splitting each image plane into
// s*s phase planes (y mod s, x mod s) turns every tap row into a contiguous
// run. The phase planes carry a zero margin wide enough for the padding, so
// taps that fall outside the image read zeros without any bounds checks.
std::ptrdiff_t floor_div(std::ptrdiff_t a, std::ptrdiff_t b) {
  std::ptrdiff_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

struct PhaseAxis {
  std::size_t extent;  // phase-plane length holding real pixels
  std::size_t before;  // zero margin in front
  std::size_t total;   // padded length

  PhaseAxis(std::size_t size, std::size_t grid, std::size_t kernel, const Geometry& g) {
    const auto s = static_cast<std::ptrdiff_t>(g.stride);
    const auto p = static_cast<std::ptrdiff_t>(g.padding);
    extent = (size + g.stride - 1) / g.stride;
    const std::ptrdiff_t lowest = floor_div(-p, s);
    const std::ptrdiff_t highest =
        static_cast<std::ptrdiff_t>(grid) - 1 + floor_div(static_cast<std::ptrdiff_t>(kernel) - 1 - p, s);
    before = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -lowest));
    const std::size_t after = static_cast<std::size_t>(
        std::max<std::ptrdiff_t>(0, highest - (static_cast<std::ptrdiff_t>(extent) - 1)));
    total = before + extent + after;
  }
};

struct PhaseLayout {
  std::size_t stride, planes;  // planes = batch * channels
  PhaseAxis y, x;

  explicit PhaseLayout(const Geometry& g)
      : stride(g.stride),
        planes(g.batch * g.channels),
        y(g.height, g.grid_h, g.kernel_h, g),
        x(g.width, g.grid_w, g.kernel_w, g) {}

  std::size_t plane_size() const { return y.total * x.total; }
  std::size_t size() const { return stride * stride * planes * plane_size(); }
  // Start of phase plane (py,px) for image plane `plane`, at real pixel (0,0).
  std::size_t origin(std::size_t py, std::size_t px, std::size_t plane) const {
    return ((py * stride + px) * planes + plane) * plane_size() + y.before * x.total + x.before;
  }
};

// Image position o*s + k - p = (o + shift)*s + phase.
void split_tap(std::size_t k, const Geometry& g, std::size_t& phase, std::ptrdiff_t& shift) {
  const auto s = static_cast<std::ptrdiff_t>(g.stride);
  const auto off = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(g.padding);
  shift = floor_div(off, s);
  phase = static_cast<std::size_t>(off - shift * s);
}

float* zeroed_phases(const PhaseLayout& ph, std::vector<float>& buf) {
  if (buf.size() < ph.size()) buf.resize(ph.size());
  std::fill(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(ph.size()), 0.0f);
  return buf.data();
}

// col[(c,ki,kj), (n,oy,ox)] = image[n,c,oy*s-p+ki,ox*s-p+kj], zero outside.
void im2col(const float* image, const Geometry& g, float* col, std::vector<float>& phase_buf) {
  const PhaseLayout ph(g);
  float* phases = zeroed_phases(ph, phase_buf);
  const std::size_t s = g.stride;
  const std::size_t row_stride = ph.x.total;
  for (std::size_t p = 0; p < ph.planes; ++p) {
    const float* src = image + p * g.height * g.width;
    for (std::size_t y = 0; y < g.height; ++y) {
      const float* row = src + y * g.width;
      for (std::size_t px = 0; px < s && px < g.width; ++px) {
        float* dst = phases + ph.origin(y % s, px, p) + (y / s) * row_stride;
        const std::size_t count = (g.width - px + s - 1) / s;
        for (std::size_t hx = 0; hx < count; ++hx) dst[hx] = row[hx * s + px];
      }
    }
  }

  const std::size_t grid = g.grid();
  float* dst = col;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      std::size_t py;
      std::ptrdiff_t dy;
      split_tap(ki, g, py, dy);
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        std::size_t px;
        std::ptrdiff_t dx;
        split_tap(kj, g, px, dx);
        const std::ptrdiff_t lead = dy * static_cast<std::ptrdiff_t>(row_stride) + dx;
        for (std::size_t n = 0; n < g.batch; ++n) {
          const float* plane = phases + ph.origin(py, px, n * g.channels + c) + lead;
          float* block = dst + n * grid;
          for (std::size_t oy = 0; oy < g.grid_h; ++oy) {
            const float* from = plane + oy * row_stride;
            float* to = block + oy * g.grid_w;
            for (std::size_t ox = 0; ox < g.grid_w; ++ox) to[ox] = from[ox];
          }
        }
        dst += g.cols();
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into the image.
void col2im_add(const float* col, const Geometry& g, float* image, std::vector<float>& phase_buf) {
  const PhaseLayout ph(g);
  float* phases = zeroed_phases(ph, phase_buf);
  const std::size_t s = g.stride;
  const std::size_t row_stride = ph.x.total;
  const std::size_t grid = g.grid();
  const float* src = col;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      std::size_t py;
      std::ptrdiff_t dy;
      split_tap(ki, g, py, dy);
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        std::size_t px;
        std::ptrdiff_t dx;
        split_tap(kj, g, px, dx);
        const std::ptrdiff_t lead = dy * static_cast<std::ptrdiff_t>(row_stride) + dx;
        for (std::size_t n = 0; n < g.batch; ++n) {
          float* plane = phases + ph.origin(py, px, n * g.channels + c) + lead;
          const float* block = src + n * grid;
          for (std::size_t oy = 0; oy < g.grid_h; ++oy) {
            float* to = plane + oy * row_stride;
            const float* from = block + oy * g.grid_w;
            for (std::size_t ox = 0; ox < g.grid_w; ++ox) to[ox] += from[ox];
          }
        }
        src += g.cols();
      }
    }
  }

  for (std::size_t p = 0; p < ph.planes; ++p) {
    float* dst = image + p * g.height * g.width;
    for (std::size_t y = 0; y < g.height; ++y) {
      float* row = dst + y * g.width;
      for (std::size_t px = 0; px < s && px < g.width; ++px) {
        const float* from = phases + ph.origin(y % s, px, p) + (y / s) * row_stride;
        const std::size_t count = (g.width - px + s - 1) / s;
        for (std::size_t hx = 0; hx < count; ++hx) row[hx * s + px] += from[hx];
      }
    }
  }
}

// [N,C,S] <-> [C,N*S]
void nchw_to_cn(const float* src, std::size_t n, std::size_t c, std::size_t s, float* dst) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      std::copy_n(src + (i * c + ch) * s, s, dst + ch * n * s + i * s);
    }
  }
}

void cn_to_nchw(const float* src, std::size_t n, std::size_t c, std::size_t s, float* dst,
                bool accumulate) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float* from = src + ch * n * s + i * s;
      float* to = dst + (i * c + ch) * s;
      if (accumulate) {
        for (std::size_t j = 0; j < s; ++j) to[j] += from[j];
      } else {
        std::copy_n(from, s, to);
      }
    }
  }
}

Geometry chunk_of(Geometry g, std::size_t images) {
  g.batch = images;
  return g;
}

void require_rank4(const Tensor& t, const char* op, const char* what) {
  if (t.rank() != 4) {
    throw std::invalid_argument(std::string(op) + ": " + what + " must be rank 4, got " +
                                shape_string(t.shape()));
  }
}

}  // namespace

std::size_t conv2d_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  if (in + 2 * padding < kernel) {
    throw std::invalid_argument("conv2d: padded input " + std::to_string(in + 2 * padding) +
                                " smaller than kernel " + std::to_string(kernel));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                                       std::size_t padding, std::size_t output_padding) {
  if (stride == 0) throw std::invalid_argument("conv2d_transpose: stride must be positive");
  if (output_padding >= stride && output_padding > 0) {
    throw std::invalid_argument("conv2d_transpose: output_padding must be smaller than stride");
  }
  const auto full = static_cast<std::ptrdiff_t>((in - 1) * stride + kernel + output_padding);
  const auto out = full - 2 * static_cast<std::ptrdiff_t>(padding);
  if (in == 0 || out < 1) {
    throw std::invalid_argument("conv2d_transpose: geometry yields empty output");
  }
  return static_cast<std::size_t>(out);
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, Conv2dParams p, Tape* tape) {
  require_rank4(input, "conv2d", "input");
  require_rank4(kernel, "conv2d", "kernel");
  if (input.dim(1) != kernel.dim(1)) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(input.dim(1)) +
                                " channels but kernel " + shape_string(kernel.shape()) +
                                " expects " + std::to_string(kernel.dim(1)));
  }
  const Geometry g{input.dim(0),
                   input.dim(1),
                   input.dim(2),
                   input.dim(3),
                   kernel.dim(2),
                   kernel.dim(3),
                   p.stride,
                   p.padding,
                   conv2d_output_size(input.dim(2), kernel.dim(2), p.stride, p.padding),
                   conv2d_output_size(input.dim(3), kernel.dim(3), p.stride, p.padding)};
  const std::size_t cout = kernel.dim(0);
  Tensor out({g.batch, cout, g.grid_h, g.grid_w});

  const std::size_t step = chunk_images(g);
  Scratch& buf = scratch();
  for (std::size_t n0 = 0; n0 < g.batch; n0 += step) {
    const Geometry gc = chunk_of(g, std::min(step, g.batch - n0));
    float* col = reserve(buf.col, gc.rows() * gc.cols());
    float* out2d = reserve(buf.mat, cout * gc.cols());
    im2col(input.ptr() + n0 * g.image(), gc, col, buf.phases);
    detail::gemm(false, false, cout, gc.cols(), gc.rows(), 1.0f, kernel.ptr(), col, 0.0f, out2d);
    cn_to_nchw(out2d, gc.batch, cout, gc.grid(), out.ptr() + n0 * cout * g.grid(), false);
  }

  const bool grad_input = tape && tape->tracks(input);
  const bool grad_kernel = tape && tape->tracks(kernel);
  if (grad_input || grad_kernel) {
    tape->record("conv2d", {input, kernel}, out,
                 [input, kernel, g, cout, grad_input, grad_kernel](const Tensor& o) {
                   const std::size_t step = chunk_images(g);
                   Scratch& buf = scratch();
                   const std::size_t out_image = cout * g.grid();
                   for (std::size_t n0 = 0; n0 < g.batch; n0 += step) {
                     const Geometry gc = chunk_of(g, std::min(step, g.batch - n0));
                     float* dout2d = reserve(buf.mat, cout * gc.cols());
                     nchw_to_cn(o.grad().data() + n0 * out_image, gc.batch, cout, gc.grid(),
                                dout2d);
                     float* col = reserve(buf.col, gc.rows() * gc.cols());
                     if (grad_kernel) {
                       im2col(input.ptr() + n0 * g.image(), gc, col, buf.phases);
                       detail::gemm(false, true, cout, gc.rows(), gc.cols(), 1.0f, dout2d, col,
                                    1.0f, kernel.mutable_grad().data());
                     }
                     if (grad_input) {
                       detail::gemm(true, false, gc.rows(), gc.cols(), cout, 1.0f, kernel.ptr(),
                                    dout2d, 0.0f, col);
                       col2im_add(col, gc, input.mutable_grad().data() + n0 * g.image(), buf.phases);
                     }
                   }
                 });
  }
  return out;
}

Tensor conv2d_transpose(const Tensor& input, const Tensor& kernel, ConvTransposeParams p,
                        Tape* tape) {
  require_rank4(input, "conv2d_transpose", "input");
  require_rank4(kernel, "conv2d_transpose", "kernel");
  if (input.dim(1) != kernel.dim(0)) {
    throw std::invalid_argument("conv2d_transpose: input has " + std::to_string(input.dim(1)) +
                                " channels but kernel " + shape_string(kernel.shape()) +
                                " expects " + std::to_string(kernel.dim(0)));
  }
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernel.dim(1);
  const std::size_t out_h =
      conv_transpose_output_size(h, kernel.dim(2), p.stride, p.padding, p.output_padding);
  const std::size_t out_w =
      conv_transpose_output_size(w, kernel.dim(3), p.stride, p.padding, p.output_padding);
  // The forward conv this op is the adjoint of: out image -> input grid.
  const Geometry g{n, cout, out_h, out_w, kernel.dim(2), kernel.dim(3), p.stride, p.padding, h, w};
  if (conv2d_output_size(out_h, g.kernel_h, p.stride, p.padding) != h ||
      conv2d_output_size(out_w, g.kernel_w, p.stride, p.padding) != w) {
    throw std::invalid_argument("conv2d_transpose: inconsistent stride/padding geometry");
  }
  const std::size_t in_image = cin * g.grid();
  Tensor out({n, cout, out_h, out_w});

  const std::size_t step = chunk_images(g);
  Scratch& buf = scratch();
  for (std::size_t n0 = 0; n0 < n; n0 += step) {
    const Geometry gc = chunk_of(g, std::min(step, n - n0));
    float* x2d = reserve(buf.mat, cin * gc.cols());
    float* col = reserve(buf.col, gc.rows() * gc.cols());
    nchw_to_cn(input.ptr() + n0 * in_image, gc.batch, cin, gc.grid(), x2d);
    detail::gemm(true, false, gc.rows(), gc.cols(), cin, 1.0f, kernel.ptr(), x2d, 0.0f, col);
    col2im_add(col, gc, out.ptr() + n0 * g.image(), buf.phases);
  }

  const bool grad_input = tape && tape->tracks(input);
  const bool grad_kernel = tape && tape->tracks(kernel);
  if (grad_input || grad_kernel) {
    tape->record("conv2d_transpose", {input, kernel}, out,
                 [input, kernel, g, cin, in_image, grad_input, grad_kernel](const Tensor& o) {
                   const std::size_t step = chunk_images(g);
                   Scratch& buf = scratch();
                   for (std::size_t n0 = 0; n0 < g.batch; n0 += step) {
                     const Geometry gc = chunk_of(g, std::min(step, g.batch - n0));
                     float* dcol = reserve(buf.col, gc.rows() * gc.cols());
                     im2col(o.grad().data() + n0 * g.image(), gc, dcol, buf.phases);
                     float* mat = reserve(buf.mat, cin * gc.cols());
                     if (grad_kernel) {
                       nchw_to_cn(input.ptr() + n0 * in_image, gc.batch, cin, gc.grid(), mat);
                       detail::gemm(false, true, cin, gc.rows(), gc.cols(), 1.0f, mat, dcol,
                                    1.0f, kernel.mutable_grad().data());
                     }
                     if (grad_input) {
                       detail::gemm(false, false, cin, gc.cols(), gc.rows(), 1.0f, kernel.ptr(),
                                    dcol, 0.0f, mat);
                       cn_to_nchw(mat, gc.batch, cin, gc.grid(),
                                  input.mutable_grad().data() + n0 * in_image, true);
                     }
                   }
                 });
  }
  return out;
}

}  // namespace anogan::ops
