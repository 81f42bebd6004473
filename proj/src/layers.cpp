#include "dcfae/layers.hpp"

#include <algorithm>
#include <cstring>

namespace dcfae {

ConvGeometry same_geometry(std::size_t in_h, std::size_t in_w, std::size_t kernel, std::size_t stride) {
  ConvGeometry g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.kernel = kernel;
  g.stride = stride;
  g.out_h = (in_h + stride - 1) / stride;
  g.out_w = (in_w + stride - 1) / stride;
  const auto pad_total = [&](std::size_t in, std::size_t out) {
    const long need = static_cast<long>((out - 1) * stride + kernel) - static_cast<long>(in);
    return static_cast<std::size_t>(std::max(need, 0L));
  };
  g.pad_top = pad_total(in_h, g.out_h) / 2;
  g.pad_left = pad_total(in_w, g.out_w) / 2;
  return g;
}

template <typename T>
void im2col(const T* input, std::size_t n, std::size_t channels, const ConvGeometry& g, T* cols) {
  const std::size_t k = g.kernel;
  const std::size_t row_len = k * k * channels;
  for (std::size_t b = 0; b < n; ++b) {
    const T* img = input + b * g.in_h * g.in_w * channels;
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        T* row = cols + ((b * g.out_h + oy) * g.out_w + ox) * row_len;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad_top);
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad_left);
            T* dst = row + (ky * k + kx) * channels;
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.in_h) || ix >= static_cast<long>(g.in_w)) {
              std::fill_n(dst, channels, T{0});
            } else {
              std::memcpy(dst, img + (static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)) * channels,
                          channels * sizeof(T));
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, std::size_t n, std::size_t channels, const ConvGeometry& g, T* output) {
  const std::size_t k = g.kernel;
  const std::size_t row_len = k * k * channels;
  for (std::size_t b = 0; b < n; ++b) {
    T* img = output + b * g.in_h * g.in_w * channels;
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const T* row = cols + ((b * g.out_h + oy) * g.out_w + ox) * row_len;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad_top);
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad_left);
            if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
            const T* src = row + (ky * k + kx) * channels;
            T* dst = img + (static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)) * channels;
            for (std::size_t c = 0; c < channels; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

namespace {

template <typename T>
void fill_normal(Tensor<T>& t, Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data) v = static_cast<T>(dist(rng));
}

template <typename T>
void add_bias(Tensor<T>& y, const Tensor<T>& bias) {
  const std::size_t c = bias.size();
  for (std::size_t i = 0; i < y.size(); i += c) {
    for (std::size_t j = 0; j < c; ++j) y[i + j] += bias[j];
  }
}

template <typename T>
void accumulate_bias_grad(Tensor<T>& grad, const Tensor<T>& dy) {
  const std::size_t c = grad.size();
  for (std::size_t i = 0; i < dy.size(); i += c) {
    for (std::size_t j = 0; j < c; ++j) grad[j] += dy[i + j];
  }
}

template <typename T>
void require_nhwc(const Tensor<T>& x, std::size_t channels, const char* what) {
  if (x.rank() != 4 || x.dim(3) != channels) {
    throw ShapeError(std::string(what) + ": expected [n, h, w, " + std::to_string(channels) + "], got " +
                     shape_string(x.shape));
  }
}

}  // namespace

// ---- Conv2d ---------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(const std::string& name, std::size_t in_channels, std::size_t out_channels, std::size_t stride,
                  std::size_t kernel)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      stride_(stride),
      kernel_(kernel),
      weight_(name + ".w", {kernel * kernel * in_channels, out_channels}),
      bias_(name + ".b", {out_channels}) {}

template <typename T>
void Conv2d<T>::init_he(Rng& rng) {
  fill_normal(weight_.value, rng, std::sqrt(2.0 / static_cast<double>(kernel_ * kernel_ * in_channels_)));
  bias_.value.fill(T{0});
}

template <typename T>
ConvGeometry Conv2d<T>::geometry(const Tensor<T>& x) const {
  require_nhwc(x, in_channels_, "Conv2d");
  return same_geometry(x.dim(1), x.dim(2), kernel_, stride_);
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, const ForwardContext&, Cache<T>* cache) const {
  const ConvGeometry g = geometry(x);
  const std::size_t n = x.dim(0);
  Tensor<T> cols({n * g.out_h * g.out_w, kernel_ * kernel_ * in_channels_});
  im2col(x.ptr(), n, in_channels_, g, cols.ptr());
  Tensor<T> y({n, g.out_h, g.out_w, out_channels_});
  MatrixMap<T>(y.ptr(), static_cast<Eigen::Index>(cols.rows()), static_cast<Eigen::Index>(out_channels_)).noalias() =
      as_matrix(cols) * as_matrix(weight_.value);
  add_bias(y, bias_.value);
  if (cache) cache->input = x;
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Cache<T>& cache, const Tensor<T>& dy, bool input_grad) {
  const Tensor<T>& x = cache.input;
  const ConvGeometry g = geometry(x);
  const std::size_t n = x.dim(0);
  const auto rows = static_cast<Eigen::Index>(n * g.out_h * g.out_w);
  ConstMatrixMap<T> dy_mat(dy.ptr(), rows, static_cast<Eigen::Index>(out_channels_));
  Tensor<T> dx;
  if (weight_.requires_grad) {
    Tensor<T> cols({n * g.out_h * g.out_w, kernel_ * kernel_ * in_channels_});
    im2col(x.ptr(), n, in_channels_, g, cols.ptr());
    as_matrix(weight_.grad).noalias() += as_matrix(cols).transpose() * dy_mat;
    accumulate_bias_grad(bias_.grad, dy);
  }
  if (input_grad) {
    Tensor<T> dcols({n * g.out_h * g.out_w, kernel_ * kernel_ * in_channels_});
    as_matrix(dcols).noalias() = dy_mat * as_matrix(weight_.value).transpose();
    dx = Tensor<T>(x.shape);
    col2im(dcols.ptr(), n, in_channels_, g, dx.ptr());
  }
  return dx;
}

// ---- ConvTranspose2d ------------------------------------------------------

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                                    std::size_t out_size, std::size_t stride, std::size_t kernel)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      out_size_(out_size),
      stride_(stride),
      kernel_(kernel),
      weight_(name + ".w", {in_channels, kernel * kernel * out_channels}),
      bias_(name + ".b", {out_channels}) {}

template <typename T>
void ConvTranspose2d<T>::init_he(Rng& rng) {
  fill_normal(weight_.value, rng, std::sqrt(2.0 / static_cast<double>(kernel_ * kernel_ * in_channels_)));
  bias_.value.fill(T{0});
}

template <typename T>
ConvGeometry ConvTranspose2d<T>::geometry(const Tensor<T>& x) const {
  require_nhwc(x, in_channels_, "ConvTranspose2d");
  const ConvGeometry g = same_geometry(out_size_, out_size_, kernel_, stride_);
  if (g.out_h != x.dim(1) || g.out_w != x.dim(2)) {
    throw ShapeError("ConvTranspose2d: input " + shape_string(x.shape) + " does not map to output side " +
                     std::to_string(out_size_));
  }
  return g;
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x, const ForwardContext&, Cache<T>* cache) const {
  const ConvGeometry g = geometry(x);
  const std::size_t n = x.dim(0);
  Tensor<T> cols({n * g.out_h * g.out_w, kernel_ * kernel_ * out_channels_});
  ConstMatrixMap<T> x_mat(x.ptr(), static_cast<Eigen::Index>(cols.rows()), static_cast<Eigen::Index>(in_channels_));
  as_matrix(cols).noalias() = x_mat * as_matrix(weight_.value);
  Tensor<T> y({n, out_size_, out_size_, out_channels_});
  col2im(cols.ptr(), n, out_channels_, g, y.ptr());
  add_bias(y, bias_.value);
  if (cache) cache->input = x;
  return y;
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::backward(const Cache<T>& cache, const Tensor<T>& dy, bool input_grad) {
  const Tensor<T>& x = cache.input;
  const ConvGeometry g = geometry(x);
  const std::size_t n = x.dim(0);
  Tensor<T> dcols({n * g.out_h * g.out_w, kernel_ * kernel_ * out_channels_});
  im2col(dy.ptr(), n, out_channels_, g, dcols.ptr());
  ConstMatrixMap<T> x_mat(x.ptr(), static_cast<Eigen::Index>(dcols.rows()), static_cast<Eigen::Index>(in_channels_));
  if (weight_.requires_grad) {
    as_matrix(weight_.grad).noalias() += x_mat.transpose() * as_matrix(dcols);
    accumulate_bias_grad(bias_.grad, dy);
  }
  Tensor<T> dx;
  if (input_grad) {
    dx = Tensor<T>(x.shape);
    MatrixMap<T>(dx.ptr(), static_cast<Eigen::Index>(dcols.rows()), static_cast<Eigen::Index>(in_channels_)).noalias() =
        as_matrix(dcols) * as_matrix(weight_.value).transpose();
  }
  return dx;
}

// ---- Dense ----------------------------------------------------------------

template <typename T>
Dense<T>::Dense(const std::string& name, std::size_t in_features, std::size_t out_features)
    : in_features_(in_features),
      out_features_(out_features),
      weight_(name + ".w", {in_features, out_features}),
      bias_(name + ".b", {out_features}) {}

template <typename T>
void Dense<T>::init_normal(Rng& rng, double stddev) {
  fill_normal(weight_.value, rng, stddev);
  bias_.value.fill(T{0});
}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& x, const ForwardContext&, Cache<T>* cache) const {
  if (x.cols() != in_features_) {
    throw ShapeError("Dense " + weight_.name + ": expected " + std::to_string(in_features_) + " features, got " +
                     shape_string(x.shape));
  }
  Tensor<T> y({x.rows(), out_features_});
  as_matrix(y).noalias() = as_matrix(x) * as_matrix(weight_.value);
  add_bias(y, bias_.value);
  if (cache) cache->input = x;
  return y;
}

template <typename T>
Tensor<T> Dense<T>::backward(const Cache<T>& cache, const Tensor<T>& dy, bool input_grad) {
  const Tensor<T>& x = cache.input;
  if (weight_.requires_grad) {
    as_matrix(weight_.grad).noalias() += as_matrix(x).transpose() * as_matrix(dy);
    accumulate_bias_grad(bias_.grad, dy);
  }
  Tensor<T> dx;
  if (input_grad) {
    dx = Tensor<T>(x.shape);
    MatrixMap<T>(dx.ptr(), static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(in_features_)).noalias() =
        as_matrix(dy) * as_matrix(weight_.value).transpose();
  }
  return dx;
}

// ---- Relu / Reshape / Dropout ---------------------------------------------

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& x, const ForwardContext&, Cache<T>* cache) const {
  Tensor<T> y = x;
  for (auto& v : y.data) v = v > T{0} ? v : T{0};
  if (cache) cache->aux = y;
  return y;
}

template <typename T>
Tensor<T> Relu<T>::backward(const Cache<T>& cache, const Tensor<T>& dy, bool input_grad) {
  if (!input_grad) return {};
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(cache.aux[i] > T{0})) dx[i] = T{0};
  }
  return dx;
}

template <typename T>
Tensor<T> Reshape<T>::forward(const Tensor<T>& x, const ForwardContext&, Cache<T>* cache) const {
  Shape s{x.rows()};
  s.insert(s.end(), trailing_.begin(), trailing_.end());
  if (cache) cache->input.shape = x.shape;
  return x.reshaped(std::move(s));
}

template <typename T>
Tensor<T> Reshape<T>::backward(const Cache<T>& cache, const Tensor<T>& dy, bool input_grad) {
  if (!input_grad) return {};
  return dy.reshaped(cache.input.shape);
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, const ForwardContext& ctx, Cache<T>* cache) const {
  if (!ctx.training || rate_ <= 0.0) {
    if (cache) cache->aux = Tensor<T>();
    return x;
  }
  Rng rng = make_rng({ctx.dropout_seed, to_key(Stream::kDropout), stream_});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const T scale = static_cast<T>(1.0 / (1.0 - rate_));
  Tensor<T> mask(x.shape);
  Tensor<T> y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = u(rng) < rate_ ? T{0} : scale;
    y[i] = x[i] * mask[i];
  }
  if (cache) cache->aux = std::move(mask);
  return y;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Cache<T>& cache, const Tensor<T>& dy, bool input_grad) {
  if (!input_grad) return {};
  if (cache.aux.empty()) return dy;
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= cache.aux[i];
  return dx;
}

// ---- ResidualBlock --------------------------------------------------------

template <typename T>
ResidualBlock<T>::ResidualBlock(const std::string& name, std::size_t channels)
    : first_(name + ".conv1", channels, channels, 1), second_(name + ".conv2", channels, channels, 1) {}

template <typename T>
Tensor<T> ResidualBlock<T>::forward(const Tensor<T>& x, const ForwardContext& ctx, Cache<T>* cache) const {
  Cache<T>* c1 = nullptr;
  Cache<T>* c2 = nullptr;
  if (cache) {
    cache->children.resize(2);
    c1 = &cache->children[0];
    c2 = &cache->children[1];
  }
  Tensor<T> h = first_.forward(x, ctx, c1);
  for (auto& v : h.data) v = v > T{0} ? v : T{0};
  Tensor<T> y = second_.forward(h, ctx, c2);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const T s = y[i] + x[i];
    y[i] = s > T{0} ? s : T{0};
  }
  if (cache) cache->aux = y;
  return y;
}

template <typename T>
Tensor<T> ResidualBlock<T>::backward(const Cache<T>& cache, const Tensor<T>& dy, bool input_grad) {
  Tensor<T> ds = dy;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!(cache.aux[i] > T{0})) ds[i] = T{0};
  }
  Tensor<T> dh = second_.backward(cache.children[1], ds, true);
  // the inner ReLU output is the second conv's cached input
  const Tensor<T>& h = cache.children[1].input;
  for (std::size_t i = 0; i < dh.size(); ++i) {
    if (!(h[i] > T{0})) dh[i] = T{0};
  }
  Tensor<T> dx = first_.backward(cache.children[0], dh, input_grad);
  if (!input_grad) return {};
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += ds[i];
  return dx;
}

// ---- Sequential -----------------------------------------------------------

template <typename T>
Sequential<T>::Sequential(const Sequential& other) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

template <typename T>
Sequential<T>& Sequential<T>::operator=(const Sequential& other) {
  if (this != &other) {
    layers_.clear();
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
  }
  return *this;
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, const ForwardContext& ctx, Cache<T>* cache) const {
  if (cache) cache->children.resize(layers_.size());
  Tensor<T> h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i]->forward(h, ctx, cache ? &cache->children[i] : nullptr);
  }
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Cache<T>& cache, const Tensor<T>& dy, bool input_grad) {
  Tensor<T> g = dy;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = layers_[i]->backward(cache.children[i], g, i > 0 || input_grad);
  }
  return g;
}

template <typename T>
void Sequential<T>::collect(ParameterList<T>& out) {
  for (auto& l : layers_) l->collect(out);
}

#define DCFAE_INSTANTIATE(T)                                                                   \
  template void im2col<T>(const T*, std::size_t, std::size_t, const ConvGeometry&, T*);        \
  template void col2im<T>(const T*, std::size_t, std::size_t, const ConvGeometry&, T*);        \
  template class Conv2d<T>;                                                                    \
  template class ConvTranspose2d<T>;                                                           \
  template class Dense<T>;                                                                     \
  template class Relu<T>;                                                                      \
  template class Reshape<T>;                                                                   \
  template class Dropout<T>;                                                                   \
  template class ResidualBlock<T>;                                                             \
  template class Sequential<T>;

DCFAE_INSTANTIATE(float)
DCFAE_INSTANTIATE(double)

}  // namespace dcfae
