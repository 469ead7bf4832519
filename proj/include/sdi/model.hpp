#pragma once

// Transformer encoder over one 30 s PSG epoch. Each channel is cut into
// fixed-size patches; patches are linearly projected, tagged with
// positional and channel embeddings, a CLS token is prepended, and pre-LN
// encoder layers run over the sequence. Two MLP heads read the encoded CLS
// token: an unbounded depth score and REM-vs-not logits.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "sdi/autodiff.hpp"
#include "sdi/epochs.hpp"
#include "sdi/error.hpp"
#include "sdi/rng.hpp"

namespace sdi {

struct ModelConfig {
  int channels = kChannels;
  int samples = kEpochSamples;
  int patch = 100;
  int dim = 64;
  int depth = 2;
  int heads = 4;
  int mlp_dim = 128;
  double dropout = 0.1;

  static ModelConfig desk() { return {}; }
  static ModelConfig paper() {
    ModelConfig c;
    c.dim = 512;
    c.depth = 6;
    c.heads = 8;
    c.mlp_dim = 2048;
    return c;
  }

  int patches_per_channel() const { return samples / patch; }
  int patch_tokens() const { return channels * patches_per_channel(); }
  int tokens() const { return patch_tokens() + 1; }
  int head_dim() const { return dim / heads; }

  void validate() const {
    if (channels <= 0 || samples <= 0 || patch <= 0 || dim <= 0 || depth <= 0 || heads <= 0 || mlp_dim <= 0)
      throw ArgumentError("ModelConfig: all sizes must be positive");
    if (samples % patch != 0) throw ArgumentError("ModelConfig: samples per epoch must be a multiple of the patch size");
    if (dim % heads != 0) throw ArgumentError("ModelConfig: embedding dim must be a multiple of the head count");
    if (dropout < 0.0 || dropout >= 1.0) throw ArgumentError("ModelConfig: dropout must be in [0, 1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"channels", c.channels}, {"samples", c.samples}, {"patch", c.patch},     {"dim", c.dim},
                     {"depth", c.depth},       {"heads", c.heads},     {"mlp_dim", c.mlp_dim}, {"dropout", c.dropout}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.channels = j.at("channels").get<int>();
  c.samples = j.at("samples").get<int>();
  c.patch = j.at("patch").get<int>();
  c.dim = j.at("dim").get<int>();
  c.depth = j.at("depth").get<int>();
  c.heads = j.at("heads").get<int>();
  c.mlp_dim = j.at("mlp_dim").get<int>();
  c.dropout = j.value("dropout", 0.1);
}

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
};

// Per-epoch, per-channel z-scoring, then channel-major patches:
// row c * patches_per_channel + k holds patch k of channel c.
template <typename T>
Tensor<T> epoch_patches(std::span<const float> epoch, const ModelConfig& cfg) {
  if (epoch.size() != static_cast<std::size_t>(cfg.channels) * static_cast<std::size_t>(cfg.samples))
    throw ArgumentError("epoch has " + std::to_string(epoch.size()) + " values, model expects " +
                        std::to_string(cfg.channels) + "x" + std::to_string(cfg.samples));
  Tensor<T> patches({cfg.patch_tokens(), cfg.patch});
  const auto L = static_cast<std::size_t>(cfg.samples);
  for (std::size_t c = 0; c < static_cast<std::size_t>(cfg.channels); ++c) {
    double mean = 0.0;
    for (std::size_t t = 0; t < L; ++t) mean += epoch[c * L + t];
    mean /= static_cast<double>(L);
    double var = 0.0;
    for (std::size_t t = 0; t < L; ++t) var += (epoch[c * L + t] - mean) * (epoch[c * L + t] - mean);
    const double sd = std::max(std::sqrt(var / static_cast<double>(L)), 1e-6);
    T* dst = patches.data() + c * L;  // patches are contiguous per channel
    for (std::size_t t = 0; t < L; ++t) dst[t] = static_cast<T>((epoch[c * L + t] - mean) / sd);
  }
  return patches;
}

template <typename T>
struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;                          // dropout masks; required when training with dropout
  std::vector<Tensor<T>>* attention = nullptr;  // receives every head's attention matrix
};

template <typename T>
struct HeadOutput {
  Var<T> raw_depth;   // 1 x 1, unbounded
  Var<T> rem_logits;  // 1 x 2, [not REM, REM]
};

template <typename T>
class SdiModel {
 public:
  struct LayerIndex {
    std::size_t ln1_gain, ln1_bias, qkv, msa, ln2_gain, ln2_bias, mlp_in, mlp_in_bias, mlp_out, mlp_out_bias;
  };
  struct HeadIndex {
    std::size_t ln_gain, ln_bias, fc1, fc1_bias, fc2, fc2_bias;
  };

  // All parameters start at zero (LayerNorm gains at one); call init().
  explicit SdiModel(ModelConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    const int D = cfg_.dim;
    patch_proj_ = add_param("patch_proj.weight", {cfg_.patch, D});
    patch_bias_ = add_param("patch_proj.bias", {D});
    pos_embed_ = add_param("pos_embed", {cfg_.tokens(), D});
    chan_embed_ = add_param("chan_embed", {cfg_.channels, D});
    cls_token_ = add_param("cls_token", {1, D});
    for (int l = 0; l < cfg_.depth; ++l) {
      const std::string p = "layers." + std::to_string(l) + ".";
      LayerIndex li{};
      li.ln1_gain = add_param(p + "ln1.gain", {D}, T(1));
      li.ln1_bias = add_param(p + "ln1.bias", {D});
      li.qkv = add_param(p + "attn.qkv", {D, 3 * cfg_.head_dim() * cfg_.heads});
      li.msa = add_param(p + "attn.out", {cfg_.heads * cfg_.head_dim(), D});
      li.ln2_gain = add_param(p + "ln2.gain", {D}, T(1));
      li.ln2_bias = add_param(p + "ln2.bias", {D});
      li.mlp_in = add_param(p + "mlp.in.weight", {D, cfg_.mlp_dim});
      li.mlp_in_bias = add_param(p + "mlp.in.bias", {cfg_.mlp_dim});
      li.mlp_out = add_param(p + "mlp.out.weight", {cfg_.mlp_dim, D});
      li.mlp_out_bias = add_param(p + "mlp.out.bias", {D});
      layers_.push_back(li);
    }
    depth_head_ = add_head("depth_head.", 1);
    rem_head_ = add_head("rem_head.", 2);
  }

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  const std::vector<LayerIndex>& layers() const { return layers_; }
  const HeadIndex& depth_head() const { return depth_head_; }
  const HeadIndex& rem_head() const { return rem_head_; }

  Tensor<T>& parameter(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return p.value;
    throw ArgumentError("unknown parameter '" + name + "'");
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  // Truncated normal (sigma 0.02, cut at 2 sigma) for weights and
  // embeddings; biases zero; LayerNorm gains one.
  void init(std::uint64_t seed) {
    Rng rng(seed, 0x1417);
    for (auto& p : params_) {
      const bool is_gain = p.name.ends_with(".gain");
      const bool is_bias = p.name.ends_with(".bias");
      for (auto& v : p.value.values()) {
        if (is_gain) {
          v = T(1);
        } else if (is_bias) {
          v = T(0);
        } else {
          double z = rng.normal();
          while (std::fabs(z) > 2.0) z = rng.normal();
          v = static_cast<T>(0.02 * z);
        }
      }
    }
  }

  template <typename U>
  SdiModel<U> cast() const {
    SdiModel<U> out(cfg_);
    for (std::size_t i = 0; i < params_.size(); ++i) out.parameters()[i].value = params_[i].value.template cast<U>();
    return out;
  }

  // One tape variable per parameter, in parameters() order.
  std::vector<Var<T>> bind(Tape<T>& tape, bool trainable = true) const {
    std::vector<Var<T>> vars;
    vars.reserve(params_.size());
    for (const auto& p : params_) vars.push_back(trainable ? tape.leaf(p.value) : tape.constant(p.value));
    return vars;
  }

  Var<T> embed(Tape<T>& tape, const std::vector<Var<T>>& w, std::span<const float> epoch,
               const ForwardOptions<T>& opts = {}) const {
    using namespace ops;
    Var<T> patches = tape.constant(epoch_patches<T>(epoch, cfg_));
    Var<T> x = add_row(matmul(patches, w[patch_proj_]), w[patch_bias_]);
    x = ops::add(x, gather_rows(w[chan_embed_], channel_index()));
    x = concat_rows<T>({w[cls_token_], x});
    x = ops::add(x, w[pos_embed_]);
    return dropout(tape, x, opts);
  }

  Var<T> encode(Tape<T>& tape, const std::vector<Var<T>>& w, Var<T> x, const ForwardOptions<T>& opts = {}) const {
    using namespace ops;
    const int D = cfg_.dim;
    const int dh = cfg_.head_dim();
    const T attn_scale = T(1) / std::sqrt(static_cast<T>(dh));
    for (const LayerIndex& li : layers_) {
      Var<T> h = layer_norm_rows(x, w[li.ln1_gain], w[li.ln1_bias]);
      Var<T> qkv = matmul(h, w[li.qkv]);
      std::vector<Var<T>> heads;
      for (int m = 0; m < cfg_.heads; ++m) {
        Var<T> q = slice_cols(qkv, m * dh, dh);
        Var<T> k = slice_cols(qkv, D + m * dh, dh);
        Var<T> v = slice_cols(qkv, 2 * D + m * dh, dh);
        Var<T> a = softmax_rows(scale(matmul(q, transpose(k)), attn_scale));
        if (opts.attention) opts.attention->push_back(a.value());
        heads.push_back(matmul(a, v));
      }
      Var<T> x_mid = ops::add(matmul(concat_cols(heads), w[li.msa]), x);
      Var<T> h2 = layer_norm_rows(x_mid, w[li.ln2_gain], w[li.ln2_bias]);
      Var<T> mlp = add_row(matmul(h2, w[li.mlp_in]), w[li.mlp_in_bias]);
      mlp = add_row(matmul(gelu(mlp), w[li.mlp_out]), w[li.mlp_out_bias]);
      x = ops::add(dropout(tape, mlp, opts), x_mid);
    }
    return x;
  }

  HeadOutput<T> heads(const std::vector<Var<T>>& w, Var<T> encoded) const {
    Var<T> cls = ops::slice_rows(encoded, 0, 1);
    return {apply_head(w, depth_head_, cls), apply_head(w, rem_head_, cls)};
  }

  HeadOutput<T> forward(Tape<T>& tape, const std::vector<Var<T>>& w, std::span<const float> epoch,
                        const ForwardOptions<T>& opts = {}) const {
    return heads(w, encode(tape, w, embed(tape, w, epoch, opts), opts));
  }

 private:
  std::size_t add_param(std::string name, std::vector<int> shape, T fill = T(0)) {
    params_.push_back({std::move(name), Tensor<T>(std::move(shape), fill)});
    return params_.size() - 1;
  }

  HeadIndex add_head(const std::string& prefix, int outputs) {
    HeadIndex h{};
    h.ln_gain = add_param(prefix + "ln.gain", {cfg_.dim}, T(1));
    h.ln_bias = add_param(prefix + "ln.bias", {cfg_.dim});
    h.fc1 = add_param(prefix + "fc1.weight", {cfg_.dim, cfg_.mlp_dim});
    h.fc1_bias = add_param(prefix + "fc1.bias", {cfg_.mlp_dim});
    h.fc2 = add_param(prefix + "fc2.weight", {cfg_.mlp_dim, outputs});
    h.fc2_bias = add_param(prefix + "fc2.bias", {outputs});
    return h;
  }

  Var<T> apply_head(const std::vector<Var<T>>& w, const HeadIndex& h, Var<T> cls) const {
    using namespace ops;
    Var<T> z = layer_norm_rows(cls, w[h.ln_gain], w[h.ln_bias]);
    z = gelu(add_row(matmul(z, w[h.fc1]), w[h.fc1_bias]));
    return add_row(matmul(z, w[h.fc2]), w[h.fc2_bias]);
  }

  std::vector<int> channel_index() const {
    std::vector<int> idx(static_cast<std::size_t>(cfg_.patch_tokens()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i) / cfg_.patches_per_channel();
    return idx;
  }

  Var<T> dropout(Tape<T>& tape, Var<T> x, const ForwardOptions<T>& opts) const {
    if (!opts.training || cfg_.dropout <= 0.0) return x;
    if (!opts.rng) throw ArgumentError("dropout in training mode needs an Rng");
    const T keep = static_cast<T>(1.0 - cfg_.dropout);
    Tensor<T> mask(x.value().shape());
    for (auto& m : mask.values()) m = opts.rng->uniform() < cfg_.dropout ? T(0) : T(1) / keep;
    return ops::mul(x, tape.constant(std::move(mask)));
  }

  ModelConfig cfg_;
  std::vector<Parameter<T>> params_;
  std::size_t patch_proj_ = 0, patch_bias_ = 0, pos_embed_ = 0, chan_embed_ = 0, cls_token_ = 0;
  std::vector<LayerIndex> layers_;
  HeadIndex depth_head_{};
  HeadIndex rem_head_{};
};

}  // namespace sdi
