#include "pp/netcore.hpp"

#include <cmath>
#include <random>
#include <string>

#include "pp/bytes.hpp"
#include "pp/error.hpp"

namespace pp {

namespace {

constexpr std::string_view kModelMagic = "PPM1";

void require(bool ok, Errc code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

}  // namespace

std::size_t MLP::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.rows() * l.weights.cols() + l.bias.size();
  return n;
}

std::vector<std::size_t> MLP::widths() const {
  std::vector<std::size_t> w;
  if (layers.empty()) return w;
  w.push_back(layers.front().in_width());
  for (const auto& l : layers) w.push_back(l.out_width());
  return w;
}

std::vector<std::span<double>> MLP::parameter_blocks() {
  std::vector<std::span<double>> blocks;
  for (auto& l : layers) {
    blocks.push_back(l.weights.flat());
    blocks.emplace_back(l.bias);
  }
  return blocks;
}

std::vector<std::span<const double>> MLP::parameter_blocks() const {
  std::vector<std::span<const double>> blocks;
  for (const auto& l : layers) {
    blocks.push_back(l.weights.flat());
    blocks.emplace_back(l.bias);
  }
  return blocks;
}

void MLP::validate() const {
  require(!layers.empty(), Errc::BadWidths, "network has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    require(l.in_width() > 0 && l.out_width() > 0, Errc::BadWidths, "zero-width layer " + std::to_string(i));
    require(l.bias.size() == l.out_width(), Errc::ShapeMismatch, "bias length mismatch in layer " + std::to_string(i));
    if (i > 0)
      require(l.in_width() == layers[i - 1].out_width(), Errc::ShapeMismatch,
              "layer " + std::to_string(i) + " input width does not match previous output");
  }
}

MLP init_mlp(std::span<const std::size_t> widths, std::span<const Activation> activations, std::uint64_t seed) {
  require(widths.size() >= 2, Errc::BadWidths, "need at least input and output widths");
  require(activations.size() == widths.size() - 1, Errc::BadWidths, "one activation per layer required");
  for (auto w : widths) require(w > 0, Errc::BadWidths, "zero width");
  std::mt19937_64 rng(seed);
  MLP mlp;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    DenseLayer layer{Matrix(widths[i + 1], widths[i]), std::vector<double>(widths[i + 1], 0.0), activations[i]};
    const double limit = std::sqrt(6.0 / static_cast<double>(widths[i] + widths[i + 1]));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    for (auto& w : layer.weights.flat()) w = uniform(rng);
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

MLP init_mlp(std::span<const std::size_t> widths, std::uint64_t seed) {
  require(widths.size() >= 2, Errc::BadWidths, "need at least input and output widths");
  std::vector<Activation> acts(widths.size() - 1, Activation::Tanh);
  acts.back() = Activation::Identity;
  return init_mlp(widths, acts, seed);
}

MLP init_mlp_fan_in(std::span<const std::size_t> widths, std::uint64_t seed) {
  MLP mlp = init_mlp(widths, seed);
  std::mt19937_64 rng(seed);
  for (auto& layer : mlp.layers) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(layer.in_width()));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    for (auto& w : layer.weights.flat()) w = uniform(rng);
    for (auto& b : layer.bias) b = uniform(rng);
  }
  return mlp;
}

ForwardCache forward(const MLP& mlp, Matrix inputs, Exec exec) {
  mlp.validate();
  require(inputs.rows() == mlp.input_width(), Errc::ShapeMismatch,
          "input width " + std::to_string(inputs.rows()) + " != network input " + std::to_string(mlp.input_width()));
  ForwardCache cache;
  cache.outputs.reserve(mlp.layers.size() + 1);
  const std::size_t batch = inputs.cols();
  cache.outputs.push_back(std::move(inputs));
  for (const auto& layer : mlp.layers) {
    Matrix out(layer.out_width(), batch);
    if (exec == Exec::Serial)
      serial::dense_forward(layer.weights.view(), layer.bias, cache.outputs.back().view(), out.view(), layer.activation);
    else
      omp::dense_forward(layer.weights.view(), layer.bias, cache.outputs.back().view(), out.view(), layer.activation);
    cache.outputs.push_back(std::move(out));
  }
  return cache;
}

Gradients backward(const MLP& mlp, const ForwardCache& cache, Matrix output_grad, Exec exec) {
  mlp.validate();
  require(cache.outputs.size() == mlp.layers.size() + 1, Errc::ShapeMismatch, "cache does not match network depth");
  const std::size_t batch = cache.outputs.front().cols();
  require(output_grad.rows() == mlp.output_width() && output_grad.cols() == batch, Errc::ShapeMismatch,
          "output gradient shape mismatch");
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    require(cache.outputs[i + 1].rows() == mlp.layers[i].out_width() && cache.outputs[i + 1].cols() == batch,
            Errc::ShapeMismatch, "cache layer " + std::to_string(i) + " shape mismatch");
  }

  Gradients grads;
  grads.layers.resize(mlp.layers.size());
  Matrix upstream = std::move(output_grad);
  for (std::size_t li = mlp.layers.size(); li-- > 0;) {
    const auto& layer = mlp.layers[li];
    const Matrix& in = cache.outputs[li];
    const Matrix& out = cache.outputs[li + 1];
    LayerGrad& g = grads.layers[li];
    g.weights = Matrix(layer.out_width(), layer.in_width());
    g.bias.assign(layer.out_width(), 0.0);
    Matrix down(layer.in_width(), batch);
    if (exec == Exec::Serial) {
      serial::activation_backward(out.view(), upstream.view(), layer.activation);
      serial::dense_param_grad(upstream.view(), in.view(), g.weights.view(), g.bias);
      serial::dense_input_grad(layer.weights.view(), upstream.view(), down.view());
    } else {
      omp::activation_backward(out.view(), upstream.view(), layer.activation);
      omp::dense_param_grad(upstream.view(), in.view(), g.weights.view(), g.bias);
      omp::dense_input_grad(layer.weights.view(), upstream.view(), down.view());
    }
    upstream = std::move(down);
  }
  grads.input = std::move(upstream);
  return grads;
}

std::vector<std::span<const double>> Gradients::blocks() const {
  std::vector<std::span<const double>> out;
  for (const auto& l : layers) {
    out.push_back(l.weights.flat());
    out.emplace_back(l.bias);
  }
  return out;
}

AdamState AdamState::for_blocks(std::span<const std::span<double>> params, double lr) {
  AdamState s;
  s.lr = lr;
  for (const auto& p : params) {
    s.m.emplace_back(p.size(), 0.0);
    s.v.emplace_back(p.size(), 0.0);
  }
  return s;
}

void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state) {
  require(params.size() == grads.size() && params.size() == state.m.size() && params.size() == state.v.size(),
          Errc::ShapeMismatch, "parameter, gradient and moment block counts differ");
  for (std::size_t b = 0; b < params.size(); ++b) {
    require(params[b].size() == grads[b].size() && params[b].size() == state.m[b].size() &&
                params[b].size() == state.v[b].size(),
            Errc::ShapeMismatch, "block " + std::to_string(b) + " size mismatch");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto p = params[b];
    auto g = grads[b];
    auto& m = state.m[b];
    auto& v = state.v[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

void PPModel::validate() const {
  encoder.validate();
  decoder.validate();
  require(encoder.input_width() == 2 && encoder.output_width() == 1, Errc::ShapeMismatch,
          "encoder must map 2 inputs to 1 output");
  require(decoder.input_width() == 1 && decoder.output_width() == 1, Errc::ShapeMismatch,
          "decoder must map 1 input to 1 output");
  require(norm.tp_scale > 0.0 && norm.vimd_std > 0.0 && std::isfinite(norm.vimd_mean), Errc::BadConfig,
          "normalization scales must be positive");
}

namespace {

void put_architecture(ByteWriter& w, const MLP& mlp) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(mlp.layers.size()));
  for (const auto& l : mlp.layers) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(l.in_width()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(l.out_width()));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(l.activation));
  }
}

MLP get_architecture(ByteReader& r) {
  auto nlayers = r.get<std::uint32_t>("layer count");
  require(nlayers > 0 && nlayers <= 64, Errc::MalformedCheckpoint, "implausible layer count " + std::to_string(nlayers));
  MLP mlp;
  for (std::uint32_t i = 0; i < nlayers; ++i) {
    auto in = r.get<std::uint32_t>("layer input width");
    auto out = r.get<std::uint32_t>("layer output width");
    auto act = r.get<std::uint8_t>("activation");
    require(in > 0 && out > 0 && in <= 1u << 16 && out <= 1u << 16, Errc::MalformedCheckpoint,
            "implausible layer shape at offset " + std::to_string(r.offset()));
    require(act <= 1, Errc::MalformedCheckpoint, "unknown activation at offset " + std::to_string(r.offset()));
    mlp.layers.push_back({Matrix(out, in), std::vector<double>(out, 0.0), static_cast<Activation>(act)});
  }
  return mlp;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const PPModel& model) {
  model.validate();
  ByteWriter w;
  w.magic(kModelMagic);
  put_architecture(w, model.encoder);
  put_architecture(w, model.decoder);
  w.put<double>(model.norm.tp_scale);
  w.put<double>(model.norm.vimd_mean);
  w.put<double>(model.norm.vimd_std);
  for (const MLP* net : {&model.encoder, &model.decoder})
    for (auto block : net->parameter_blocks()) w.put_all<double>(block);
  return std::move(w.bytes());
}

PPModel parse_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, Errc::MalformedCheckpoint);
  if (!r.magic(kModelMagic)) throw Error(Errc::VersionMismatch, "checkpoint magic is not PPM1");
  PPModel model;
  model.encoder = get_architecture(r);
  model.decoder = get_architecture(r);
  model.norm.tp_scale = r.get<double>("tp_scale");
  model.norm.vimd_mean = r.get<double>("vimd_mean");
  model.norm.vimd_std = r.get<double>("vimd_std");
  for (MLP* net : {&model.encoder, &model.decoder})
    for (auto block : net->parameter_blocks()) r.get_all<double>(block, "parameters");
  require(r.remaining() == 0, Errc::MalformedCheckpoint, "trailing bytes at offset " + std::to_string(r.offset()));
  try {
    model.validate();
  } catch (const Error& e) {
    throw Error(Errc::MalformedCheckpoint, e.what());
  }
  return model;
}

void save_model(const PPModel& model, const std::filesystem::path& path) { write_file(path, serialize_model(model)); }

PPModel load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

}  // namespace pp
