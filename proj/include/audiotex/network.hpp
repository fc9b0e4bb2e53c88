#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "audiotex/matrix.hpp"
#include "audiotex/tensor.hpp"

namespace audiotex {

/// How a (bins x frames) spectrogram is laid onto (B, C, H, W).
enum class Orientation {
  freq_channels_1d,  // (1, bins, 1, frames)
  time_channels_1d,  // (1, frames, 1, bins)
  image_2d,          // (1, 1, bins, frames)
};

std::string_view to_string(Orientation o);
/// Accepts the short CLI names (freq1d, time1d, 2d) and the long names.
Orientation parse_orientation(std::string_view name);
bool is_1d(Orientation o);

/// Channel count the network's first stack needs for a (bins x frames) image.
std::size_t input_channels(Orientation o, std::size_t bins, std::size_t frames);

Tensor4 orient(const Matrix& pixels, Orientation o);
/// Stacks several equally sized images on the batch axis.
Tensor4 orient_batch(const std::vector<Matrix>& images, Orientation o);
/// Inverse of orient. Requires B == 1.
Matrix deorient(const Tensor4& t, Orientation o);

/// The three post-ReLU layers that losses may read.
enum class Layer : int { relu1 = 0, relu2 = 1, relu3 = 2 };
inline constexpr int kNumLayers = 3;

std::string_view to_string(Layer l);
Layer parse_layer(std::string_view name);

/// Small set of layers.
class LayerSet {
 public:
  constexpr LayerSet() = default;
  constexpr LayerSet(std::initializer_list<Layer> layers) {
    for (Layer l : layers) insert(l);
  }
  constexpr void insert(Layer l) { bits_ |= 1u << static_cast<int>(l); }
  constexpr bool contains(Layer l) const {
    return (bits_ >> static_cast<int>(l)) & 1u;
  }
  constexpr bool empty() const { return bits_ == 0; }
  /// Number of stacks that must run for every layer in the set (0 if empty).
  constexpr int depth() const {
    for (int i = kNumLayers - 1; i >= 0; --i)
      if ((bits_ >> i) & 1u) return i + 1;
    return 0;
  }
  friend constexpr bool operator==(LayerSet, LayerSet) = default;

 private:
  unsigned bits_ = 0;
};

/// "relu1,relu2" style lists.
LayerSet parse_layer_set(std::string_view list);
std::string to_string(LayerSet s);

struct StackConfig {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kh = 1;
  std::size_t kw = 1;
  std::size_t ph = 1;  // pooling window; stride equals the window
  std::size_t pw = 2;
  friend bool operator==(const StackConfig&, const StackConfig&) = default;
};

/// conv -> batchnorm -> ReLU -> maxpool.
struct Stack {
  StackConfig config;
  std::vector<float> weights;  // (out, in, kh, kw)
  std::vector<float> bias;     // out
  std::vector<float> bn_scale;
  std::vector<float> bn_shift;
  /// Running statistics; used only when `use_running_stats` is set.
  std::vector<float> bn_mean;
  std::vector<float> bn_var;
};

/// Fixed-weight three-stack network. Immutable once built.
class Network {
 public:
  static constexpr double kBatchNormEps = 1e-5;

  Network(Orientation orientation, std::array<Stack, 3> stacks,
          bool use_running_stats, std::uint64_t seed);

  Orientation orientation() const { return orientation_; }
  const Stack& stack(int n) const { return stacks_.at(static_cast<std::size_t>(n)); }
  std::size_t in_channels() const { return stacks_[0].config.in_channels; }
  std::size_t channels(Layer l) const {
    return stacks_[static_cast<std::size_t>(l)].config.out_channels;
  }
  bool use_running_stats() const { return use_running_stats_; }
  std::uint64_t seed() const { return seed_; }
  double bn_eps() const { return kBatchNormEps; }
  std::size_t parameter_count() const;

 private:
  Orientation orientation_;
  std::array<Stack, 3> stacks_;
  bool use_running_stats_;
  std::uint64_t seed_;
};

/// Default per-stack channel counts for an orientation: 4096 everywhere for
/// the 1D layouts, (512, 1024, 2048) for the 2D layout.
std::array<std::size_t, 3> default_channels(Orientation o);

/// Random network: conv weights uniform in [-b, b] with b = 1/sqrt(fan_in),
/// zero biases, batchnorm scale 1 and shift 0. Kernel width must be odd.
Network init_random(Orientation o, std::array<std::size_t, 3> channels,
                    std::size_t kernel_width, std::size_t in_channels,
                    std::uint64_t seed);
Network init_random(Orientation o, std::size_t channels,
                    std::size_t kernel_width, std::size_t in_channels,
                    std::uint64_t seed);

/// Binary weight file (little-endian):
///   "ATXW" u32 version=1, u32 orientation, u32 flags (bit 0: running stats
///   valid), 3 x (u32 in, u32 out, u32 kh, u32 kw),
///   f32 weights of stacks 1..3 in (out, in, kh, kw) order,
///   f32 biases of stacks 1..3,
///   per stack: f32 scale[out], shift[out], mean[out], var[out].
Network load_weights(const std::filesystem::path& path);
void save_weights(const std::filesystem::path& path, const Network& net);

/// Per-stack state kept for backpropagation.
struct StackState {
  Shape4 input_shape;
  Tensor4 normalized;           // batchnorm output before scale/shift
  std::vector<double> inv_std;  // per channel
  Tensor4 relu;
  Tensor4 pooled;                     // empty for the last computed stack
  std::vector<std::uint32_t> argmax;  // flat index into the relu plane
};

struct Activations {
  std::vector<StackState> stacks;  // size == depth

  int depth() const { return static_cast<int>(stacks.size()); }
  const Tensor4& relu(Layer l) const;
  bool has(Layer l) const { return static_cast<int>(l) < depth(); }
};

/// Runs the first `depth` stacks (1..3). relu_n is recorded before pooling.
Activations forward(const Network& net, const Tensor4& input, int depth = 3);

/// Gradients injected at relu layers; unset entries are zero.
using LayerGrads = std::array<std::optional<Tensor4>, kNumLayers>;

/// d(loss)/d(input) given d(loss)/d(relu_n) for the injected layers.
Tensor4 backward_input(const Network& net, const Activations& acts,
                       const LayerGrads& grads);

}  // namespace audiotex
