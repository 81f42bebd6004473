#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dcfae/rng.hpp"
#include "dcfae/tensor.hpp"

namespace dcfae {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  // Frozen parameters skip gradient accumulation entirely.
  bool requires_grad = true;

  Parameter() = default;
  Parameter(std::string n, Shape s) : name(std::move(n)), value(s), grad(s) {}

  void zero_grad() { grad.fill(T{0}); }
};

template <typename T>
using ParameterList = std::vector<Parameter<T>*>;

struct ForwardContext {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

/// Activations a layer keeps for its backward pass. Forward passes write only
/// into a caller-owned cache; layers themselves stay immutable during forward.
template <typename T>
struct Cache {
  Tensor<T> input;
  Tensor<T> aux;
  std::vector<Cache> children;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx, Cache<T>* cache) const = 0;
  /// Accumulates parameter gradients and returns dL/dx (empty when
  /// `input_grad` is false).
  virtual Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy, bool input_grad) = 0;
  virtual void collect(ParameterList<T>& /*out*/) {}
  virtual std::unique_ptr<Layer> clone() const = 0;
};

/// "Same" padding geometry of a square-kernel convolution.
struct ConvGeometry {
  std::size_t in_h = 0, in_w = 0;
  std::size_t out_h = 0, out_w = 0;
  std::size_t kernel = 3, stride = 1;
  std::size_t pad_top = 0, pad_left = 0;
};

ConvGeometry same_geometry(std::size_t in_h, std::size_t in_w, std::size_t kernel, std::size_t stride);

/// NHWC -> [n*out_h*out_w, kernel*kernel*channels], column order (ky, kx, c).
template <typename T>
void im2col(const T* input, std::size_t n, std::size_t channels, const ConvGeometry& g, T* cols);
/// Adjoint of im2col; accumulates into `output`.
template <typename T>
void col2im(const T* cols, std::size_t n, std::size_t channels, const ConvGeometry& g, T* output);

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(const std::string& name, std::size_t in_channels, std::size_t out_channels, std::size_t stride,
         std::size_t kernel = 3);
  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx, Cache<T>* cache) const override;
  Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy, bool input_grad) override;
  void collect(ParameterList<T>& out) override { out.push_back(&weight_); out.push_back(&bias_); }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2d>(*this); }

  void init_he(Rng& rng);
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  ConvGeometry geometry(const Tensor<T>& x) const;

  std::size_t in_channels_, out_channels_, stride_, kernel_;
  Parameter<T> weight_;  // [kernel*kernel*in, out]
  Parameter<T> bias_;    // [out]
};

/// Adjoint of a stride-s same-padded convolution from out_size to the input
/// size, so ConvTranspose2d(size a -> b) exactly undoes the geometry of
/// Conv2d(size b -> a).
template <typename T>
class ConvTranspose2d final : public Layer<T> {
 public:
  ConvTranspose2d(const std::string& name, std::size_t in_channels, std::size_t out_channels, std::size_t out_size,
                  std::size_t stride, std::size_t kernel = 3);
  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx, Cache<T>* cache) const override;
  Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy, bool input_grad) override;
  void collect(ParameterList<T>& out) override { out.push_back(&weight_); out.push_back(&bias_); }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ConvTranspose2d>(*this); }

  void init_he(Rng& rng);

 private:
  ConvGeometry geometry(const Tensor<T>& x) const;

  std::size_t in_channels_, out_channels_, out_size_, stride_, kernel_;
  Parameter<T> weight_;  // [in, kernel*kernel*out]
  Parameter<T> bias_;    // [out]
};

template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(const std::string& name, std::size_t in_features, std::size_t out_features);
  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx, Cache<T>* cache) const override;
  Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy, bool input_grad) override;
  void collect(ParameterList<T>& out) override { out.push_back(&weight_); out.push_back(&bias_); }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dense>(*this); }

  void init_normal(Rng& rng, double stddev);
  void init_he(Rng& rng) { init_normal(rng, std::sqrt(2.0 / static_cast<double>(in_features_))); }
  std::size_t in_features() const { return in_features_; }
  std::size_t out_features() const { return out_features_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  std::size_t in_features_, out_features_;
  Parameter<T> weight_;  // [in, out]
  Parameter<T> bias_;    // [out]
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx, Cache<T>* cache) const override;
  Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy, bool input_grad) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Relu>(*this); }
};

/// Changes the trailing shape, keeping the leading (batch) axis.
template <typename T>
class Reshape final : public Layer<T> {
 public:
  explicit Reshape(Shape trailing) : trailing_(std::move(trailing)) {}
  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx, Cache<T>* cache) const override;
  Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy, bool input_grad) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Reshape>(*this); }

 private:
  Shape trailing_;
};

/// Inverted dropout: kept units are scaled by 1/(1-rate) while training, so
/// inference is the identity. Each instance draws from its own stream.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  Dropout(double rate, std::uint64_t stream) : rate_(rate), stream_(stream) {}
  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx, Cache<T>* cache) const override;
  Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy, bool input_grad) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dropout>(*this); }

 private:
  double rate_;
  std::uint64_t stream_;
};

/// conv3x3 -> ReLU -> conv3x3, identity skip, ReLU after the sum.
template <typename T>
class ResidualBlock final : public Layer<T> {
 public:
  ResidualBlock(const std::string& name, std::size_t channels);
  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx, Cache<T>* cache) const override;
  Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy, bool input_grad) override;
  void collect(ParameterList<T>& out) override { first_.collect(out); second_.collect(out); }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ResidualBlock>(*this); }

  void init_he(Rng& rng) { first_.init_he(rng); second_.init_he(rng); }

 private:
  Conv2d<T> first_;
  Conv2d<T> second_;
};

template <typename T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L>
  L& add(L layer) {
    auto owned = std::make_unique<L>(std::move(layer));
    L& ref = *owned;
    layers_.push_back(std::move(owned));
    return ref;
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx, Cache<T>* cache) const;
  Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& dy, bool input_grad);
  void collect(ParameterList<T>& out);
  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

}  // namespace dcfae
