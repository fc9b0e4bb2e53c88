#include "audiotex/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "audiotex/error.hpp"
#include "audiotex/kernels.hpp"
#include "audiotex/random.hpp"

namespace audiotex {

static_assert(std::endian::native == std::endian::little,
              "weight file I/O assumes a little-endian host");

std::string_view to_string(Orientation o) {
  switch (o) {
    case Orientation::freq_channels_1d: return "freq1d";
    case Orientation::time_channels_1d: return "time1d";
    case Orientation::image_2d: return "2d";
  }
  return "?";
}

Orientation parse_orientation(std::string_view name) {
  if (name == "freq1d" || name == "freq_channels_1d") return Orientation::freq_channels_1d;
  if (name == "time1d" || name == "time_channels_1d") return Orientation::time_channels_1d;
  if (name == "2d" || name == "image_2d") return Orientation::image_2d;
  throw InvalidArgument("unknown orientation '" + std::string(name) + "'");
}

bool is_1d(Orientation o) { return o != Orientation::image_2d; }

std::size_t input_channels(Orientation o, std::size_t bins, std::size_t frames) {
  switch (o) {
    case Orientation::freq_channels_1d: return bins;
    case Orientation::time_channels_1d: return frames;
    case Orientation::image_2d: return 1;
  }
  return 0;
}

namespace {

Shape4 oriented_shape(std::size_t batch, std::size_t bins, std::size_t frames,
                      Orientation o) {
  switch (o) {
    case Orientation::freq_channels_1d: return {batch, bins, 1, frames};
    case Orientation::time_channels_1d: return {batch, frames, 1, bins};
    case Orientation::image_2d: return {batch, 1, bins, frames};
  }
  return {};
}

void write_image(Tensor4& t, std::size_t b, const Matrix& m, Orientation o) {
  for (std::size_t f = 0; f < m.rows(); ++f)
    for (std::size_t k = 0; k < m.cols(); ++k) {
      const double v = m(f, k);
      switch (o) {
        case Orientation::freq_channels_1d: t.at(b, f, 0, k) = v; break;
        case Orientation::time_channels_1d: t.at(b, k, 0, f) = v; break;
        case Orientation::image_2d: t.at(b, 0, f, k) = v; break;
      }
    }
}

}  // namespace

Tensor4 orient(const Matrix& pixels, Orientation o) {
  return orient_batch({pixels}, o);
}

Tensor4 orient_batch(const std::vector<Matrix>& images, Orientation o) {
  if (images.empty()) throw InvalidArgument("orient_batch: no images");
  const std::size_t bins = images.front().rows();
  const std::size_t frames = images.front().cols();
  if (bins == 0 || frames == 0) throw InvalidArgument("orient: empty image");
  Tensor4 t(oriented_shape(images.size(), bins, frames, o));
  for (std::size_t b = 0; b < images.size(); ++b) {
    if (images[b].rows() != bins || images[b].cols() != frames)
      throw InvalidArgument("orient_batch: images differ in shape");
    write_image(t, b, images[b], o);
  }
  return t;
}

Matrix deorient(const Tensor4& t, Orientation o) {
  const Shape4 s = t.shape();
  if (s.b != 1) throw InvalidArgument("deorient needs batch size 1, got " + to_string(s));
  std::size_t bins = 0, frames = 0;
  switch (o) {
    case Orientation::freq_channels_1d:
      if (s.h != 1) throw InvalidArgument("deorient: freq1d tensor must have H == 1");
      bins = s.c, frames = s.w;
      break;
    case Orientation::time_channels_1d:
      if (s.h != 1) throw InvalidArgument("deorient: time1d tensor must have H == 1");
      bins = s.w, frames = s.c;
      break;
    case Orientation::image_2d:
      if (s.c != 1) throw InvalidArgument("deorient: 2d tensor must have C == 1");
      bins = s.h, frames = s.w;
      break;
  }
  Matrix m(bins, frames);
  for (std::size_t f = 0; f < bins; ++f)
    for (std::size_t k = 0; k < frames; ++k) {
      switch (o) {
        case Orientation::freq_channels_1d: m(f, k) = t.at(0, f, 0, k); break;
        case Orientation::time_channels_1d: m(f, k) = t.at(0, k, 0, f); break;
        case Orientation::image_2d: m(f, k) = t.at(0, 0, f, k); break;
      }
    }
  return m;
}

std::string_view to_string(Layer l) {
  switch (l) {
    case Layer::relu1: return "relu1";
    case Layer::relu2: return "relu2";
    case Layer::relu3: return "relu3";
  }
  return "?";
}

Layer parse_layer(std::string_view name) {
  if (name == "relu1") return Layer::relu1;
  if (name == "relu2") return Layer::relu2;
  if (name == "relu3") return Layer::relu3;
  throw InvalidArgument("unknown layer '" + std::string(name) + "'");
}

LayerSet parse_layer_set(std::string_view list) {
  LayerSet set;
  while (!list.empty()) {
    const auto comma = list.find(',');
    auto item = list.substr(0, comma);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) set.insert(parse_layer(item));
    if (comma == std::string_view::npos) break;
    list.remove_prefix(comma + 1);
  }
  return set;
}

std::string to_string(LayerSet s) {
  std::string out;
  for (int i = 0; i < kNumLayers; ++i) {
    const auto l = static_cast<Layer>(i);
    if (!s.contains(l)) continue;
    if (!out.empty()) out += ',';
    out += to_string(l);
  }
  return out;
}

Network::Network(Orientation orientation, std::array<Stack, 3> stacks,
                 bool use_running_stats, std::uint64_t seed)
    : orientation_(orientation),
      stacks_(std::move(stacks)),
      use_running_stats_(use_running_stats),
      seed_(seed) {
  for (std::size_t n = 0; n < stacks_.size(); ++n) {
    const Stack& s = stacks_[n];
    const StackConfig& c = s.config;
    const std::string where = "stack " + std::to_string(n + 1) + ": ";
    if (c.in_channels == 0 || c.out_channels == 0)
      throw InvalidArgument(where + "channel counts must be >= 1");
    if (c.kh % 2 == 0 || c.kw % 2 == 0)
      throw InvalidArgument(where + "kernel extents must be odd for same padding");
    if (c.ph == 0 || c.pw == 0) throw InvalidArgument(where + "pool window must be >= 1");
    if (n > 0 && c.in_channels != stacks_[n - 1].config.out_channels)
      throw InvalidArgument(where + "in_channels does not match previous stack");
    if (s.weights.size() != c.out_channels * c.in_channels * c.kh * c.kw)
      throw InvalidArgument(where + "weight count does not match shape");
    for (const auto* v : {&s.bias, &s.bn_scale, &s.bn_shift})
      if (v->size() != c.out_channels)
        throw InvalidArgument(where + "per-channel parameter count mismatch");
    if (use_running_stats_ &&
        (s.bn_mean.size() != c.out_channels || s.bn_var.size() != c.out_channels))
      throw InvalidArgument(where + "running statistics missing");
  }
  const bool one_d = is_1d(orientation_);
  for (const Stack& s : stacks_) {
    const StackConfig& c = s.config;
    if (one_d && (c.kh != 1 || c.ph != 1 || c.pw != 2))
      throw InvalidArgument("1D networks need (1, k) kernels and (1, 2) pooling");
    if (!one_d && (c.kh != c.kw || c.ph != 2 || c.pw != 2))
      throw InvalidArgument("2D networks need square kernels and (2, 2) pooling");
  }
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Stack& s : stacks_) n += s.weights.size() + s.bias.size();
  return n;
}

std::array<std::size_t, 3> default_channels(Orientation o) {
  if (is_1d(o)) return {4096, 4096, 4096};
  return {512, 1024, 2048};
}

Network init_random(Orientation o, std::array<std::size_t, 3> channels,
                    std::size_t kernel_width, std::size_t in_channels,
                    std::uint64_t seed) {
  if (kernel_width == 0 || kernel_width % 2 == 0)
    throw InvalidArgument("kernel width must be odd, got " + std::to_string(kernel_width));
  if (in_channels == 0) throw InvalidArgument("in_channels must be >= 1");
  for (std::size_t c : channels)
    if (c == 0) throw InvalidArgument("channel counts must be >= 1");

  const bool one_d = is_1d(o);
  Rng rng(seed);
  std::array<Stack, 3> stacks;
  std::size_t prev = in_channels;
  for (std::size_t n = 0; n < 3; ++n) {
    Stack& s = stacks[n];
    s.config = {prev, channels[n], one_d ? 1 : kernel_width, kernel_width,
                one_d ? std::size_t{1} : std::size_t{2}, 2};
    const std::size_t fan_in = prev * s.config.kh * s.config.kw;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    s.weights.resize(channels[n] * fan_in);
    for (float& w : s.weights) w = static_cast<float>(uniform(rng, -bound, bound));
    s.bias.assign(channels[n], 0.0f);
    s.bn_scale.assign(channels[n], 1.0f);
    s.bn_shift.assign(channels[n], 0.0f);
    s.bn_mean.assign(channels[n], 0.0f);
    s.bn_var.assign(channels[n], 1.0f);
    prev = channels[n];
  }
  return Network(o, std::move(stacks), false, seed);
}

Network init_random(Orientation o, std::size_t channels, std::size_t kernel_width,
                    std::size_t in_channels, std::uint64_t seed) {
  return init_random(o, {channels, channels, channels}, kernel_width, in_channels, seed);
}

namespace {

constexpr char kMagic[4] = {'A', 'T', 'X', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_floats(std::ofstream& out, const std::vector<float>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}

std::uint32_t get_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw IoError("unreadable file: truncated weight header");
  return v;
}

std::vector<float> get_floats(std::ifstream& in, std::size_t n) {
  std::vector<float> v(n);
  if (!in.read(reinterpret_cast<char*>(v.data()),
               static_cast<std::streamsize>(n * sizeof(float))))
    throw IoError("unreadable file: truncated weight data");
  for (float f : v)
    if (!std::isfinite(f)) throw IoError("weight file contains non-finite values");
  return v;
}

}  // namespace

void save_weights(const std::filesystem::path& path, const Network& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(net.orientation()));
  put_u32(out, net.use_running_stats() ? 1u : 0u);
  for (int n = 0; n < 3; ++n) {
    const StackConfig& c = net.stack(n).config;
    for (std::size_t v : {c.in_channels, c.out_channels, c.kh, c.kw})
      put_u32(out, static_cast<std::uint32_t>(v));
  }
  for (int n = 0; n < 3; ++n) put_floats(out, net.stack(n).weights);
  for (int n = 0; n < 3; ++n) put_floats(out, net.stack(n).bias);
  for (int n = 0; n < 3; ++n) {
    const Stack& s = net.stack(n);
    put_floats(out, s.bn_scale);
    put_floats(out, s.bn_shift);
    put_floats(out, s.bn_mean);
    put_floats(out, s.bn_var);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Network load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("unreadable file: cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("unreadable file: not a weight file: " + path.string());
  if (get_u32(in) != kVersion) throw IoError("unsupported weight file version");
  const std::uint32_t orient_tag = get_u32(in);
  if (orient_tag > 2) throw IoError("weight file has an invalid orientation");
  const auto o = static_cast<Orientation>(orient_tag);
  const bool running = (get_u32(in) & 1u) != 0;

  std::array<Stack, 3> stacks;
  const bool one_d = is_1d(o);
  for (Stack& s : stacks) {
    StackConfig& c = s.config;
    c.in_channels = get_u32(in);
    c.out_channels = get_u32(in);
    c.kh = get_u32(in);
    c.kw = get_u32(in);
    c.ph = one_d ? 1 : 2;
    c.pw = 2;
    if (c.in_channels == 0 || c.out_channels == 0 || c.kh == 0 || c.kw == 0 ||
        c.in_channels > (1u << 20) || c.out_channels > (1u << 20) || c.kh > 4096 ||
        c.kw > 4096)
      throw IoError("weight file has an implausible stack shape");
  }
  for (Stack& s : stacks)
    s.weights = get_floats(in, s.config.out_channels * s.config.in_channels *
                                   s.config.kh * s.config.kw);
  for (Stack& s : stacks) s.bias = get_floats(in, s.config.out_channels);
  for (Stack& s : stacks) {
    s.bn_scale = get_floats(in, s.config.out_channels);
    s.bn_shift = get_floats(in, s.config.out_channels);
    s.bn_mean = get_floats(in, s.config.out_channels);
    s.bn_var = get_floats(in, s.config.out_channels);
  }
  return Network(o, std::move(stacks), running, 0);
}

const Tensor4& Activations::relu(Layer l) const {
  const auto n = static_cast<std::size_t>(l);
  if (n >= stacks.size())
    throw InvalidArgument(std::string(to_string(l)) + " was not computed");
  return stacks[n].relu;
}

namespace {

kernels::ConvWeights conv_of(const Stack& s) {
  return {s.weights, s.bias, s.config.out_channels, s.config.in_channels,
          s.config.kh, s.config.kw};
}

// Normalises z in place to xhat and fills inv_std.
void batchnorm_forward(const Network& net, const Stack& s, Tensor4& z,
                       std::vector<double>& inv_std) {
  const Shape4 sh = z.shape();
  const double count = static_cast<double>(sh.b * sh.plane());
  inv_std.assign(sh.c, 0.0);
  const auto channels = static_cast<std::ptrdiff_t>(sh.c);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t cc = 0; cc < channels; ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    double mean, var;
    if (net.use_running_stats()) {
      mean = s.bn_mean[c];
      var = s.bn_var[c];
    } else {
      double sum = 0.0;
      for (std::size_t b = 0; b < sh.b; ++b)
        for (double v : z.plane(b, c)) sum += v;
      mean = sum / count;
      double sq = 0.0;
      for (std::size_t b = 0; b < sh.b; ++b)
        for (double v : z.plane(b, c)) sq += (v - mean) * (v - mean);
      var = sq / count;
    }
    const double is = 1.0 / std::sqrt(var + net.bn_eps());
    inv_std[c] = is;
    for (std::size_t b = 0; b < sh.b; ++b)
      for (double& v : z.plane(b, c)) v = (v - mean) * is;
  }
}

}  // namespace

Activations forward(const Network& net, const Tensor4& input, int depth) {
  if (depth < 1 || depth > 3) throw InvalidArgument("forward depth must be 1..3");
  if (input.shape().c != net.in_channels())
    throw InvalidArgument("input has " + std::to_string(input.shape().c) +
                          " channels, network expects " +
                          std::to_string(net.in_channels()));
  if (!input.all_finite()) throw NumericError("network input contains non-finite values");

  Activations acts;
  acts.stacks.resize(static_cast<std::size_t>(depth));
  const Tensor4* x = &input;
  for (int n = 0; n < depth; ++n) {
    const Stack& s = net.stack(n);
    StackState& st = acts.stacks[static_cast<std::size_t>(n)];
    st.input_shape = x->shape();
    st.normalized = kernels::conv2d_same(*x, conv_of(s));
    batchnorm_forward(net, s, st.normalized, st.inv_std);

    const Shape4 sh = st.normalized.shape();
    st.relu = Tensor4(sh);
    for (std::size_t b = 0; b < sh.b; ++b)
      for (std::size_t c = 0; c < sh.c; ++c) {
        const double scale = s.bn_scale[c], shift = s.bn_shift[c];
        const auto src = st.normalized.plane(b, c);
        auto dst = st.relu.plane(b, c);
        for (std::size_t i = 0; i < src.size(); ++i)
          dst[i] = std::max(0.0, scale * src[i] + shift);
      }

    if (n + 1 == depth) break;
    const std::size_t ph = s.config.ph, pw = s.config.pw;
    const Shape4 ps{sh.b, sh.c, sh.h / ph, sh.w / pw};
    if (ps.h == 0 || ps.w == 0)
      throw InvalidArgument("input " + to_string(input.shape()) +
                            " is too small for " + std::to_string(depth) + " stacks");
    st.pooled = Tensor4(ps);
    st.argmax.assign(ps.count(), 0);
    for (std::size_t b = 0; b < sh.b; ++b)
      for (std::size_t c = 0; c < sh.c; ++c) {
        const auto src = st.relu.plane(b, c);
        auto dst = st.pooled.plane(b, c);
        std::uint32_t* arg = st.argmax.data() + (b * sh.c + c) * ps.plane();
        for (std::size_t y = 0; y < ps.h; ++y)
          for (std::size_t xo = 0; xo < ps.w; ++xo) {
            std::size_t best = (y * ph) * sh.w + xo * pw;
            for (std::size_t dy = 0; dy < ph; ++dy)
              for (std::size_t dx = 0; dx < pw; ++dx) {
                const std::size_t idx = (y * ph + dy) * sh.w + xo * pw + dx;
                if (src[idx] > src[best]) best = idx;
              }
            dst[y * ps.w + xo] = src[best];
            arg[y * ps.w + xo] = static_cast<std::uint32_t>(best);
          }
      }
    x = &st.pooled;
  }
  return acts;
}

Tensor4 backward_input(const Network& net, const Activations& acts,
                       const LayerGrads& grads) {
  int top = 0;
  for (int n = 0; n < kNumLayers; ++n)
    if (grads[static_cast<std::size_t>(n)]) top = n + 1;
  if (acts.stacks.empty()) throw InvalidArgument("backward_input: empty activations");
  if (top > acts.depth())
    throw InvalidArgument("gradient injected at a layer deeper than the forward pass");
  if (top == 0) return Tensor4(acts.stacks.front().input_shape);

  Tensor4 carried;  // gradient w.r.t. the pooled output of the current stack
  for (int n = top - 1; n >= 0; --n) {
    const auto un = static_cast<std::size_t>(n);
    const StackState& st = acts.stacks[un];
    const Stack& s = net.stack(n);
    const Shape4 sh = st.relu.shape();

    Tensor4 g(sh);
    if (n + 1 < top) {
      const Shape4 ps = st.pooled.shape();
      for (std::size_t b = 0; b < sh.b; ++b)
        for (std::size_t c = 0; c < sh.c; ++c) {
          auto dst = g.plane(b, c);
          const auto src = carried.plane(b, c);
          const std::uint32_t* arg = st.argmax.data() + (b * sh.c + c) * ps.plane();
          for (std::size_t q = 0; q < ps.plane(); ++q) dst[arg[q]] += src[q];
        }
    }
    if (const auto& inj = grads[un]) {
      if (inj->shape() != sh)
        throw InvalidArgument("gradient at " + std::string(to_string(static_cast<Layer>(n))) +
                              " has shape " + to_string(inj->shape()) + ", expected " +
                              to_string(sh));
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += inj->data()[i];
    }

    // Through ReLU (zero slope at 0) and the batchnorm affine.
    const double count = static_cast<double>(sh.b * sh.plane());
    const auto channels = static_cast<std::ptrdiff_t>(sh.c);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t cc = 0; cc < channels; ++cc) {
      const auto c = static_cast<std::size_t>(cc);
      const double scale = s.bn_scale[c];
      double sum = 0.0, dot = 0.0;
      for (std::size_t b = 0; b < sh.b; ++b) {
        auto gp = g.plane(b, c);
        const auto rp = st.relu.plane(b, c);
        const auto xp = st.normalized.plane(b, c);
        for (std::size_t i = 0; i < gp.size(); ++i) {
          gp[i] = rp[i] > 0.0 ? gp[i] * scale : 0.0;
          sum += gp[i];
          dot += gp[i] * xp[i];
        }
      }
      const double is = st.inv_std[c];
      if (net.use_running_stats()) {
        for (std::size_t b = 0; b < sh.b; ++b)
          for (double& v : g.plane(b, c)) v *= is;
      } else {
        const double mean_g = sum / count, mean_gx = dot / count;
        for (std::size_t b = 0; b < sh.b; ++b) {
          auto gp = g.plane(b, c);
          const auto xp = st.normalized.plane(b, c);
          for (std::size_t i = 0; i < gp.size(); ++i)
            gp[i] = is * (gp[i] - mean_g - xp[i] * mean_gx);
        }
      }
    }

    carried = kernels::conv2d_same_input_grad(g, conv_of(s));
  }
  return carried;
}

}  // namespace audiotex
