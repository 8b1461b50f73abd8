#pragma once

// Three-stream glass detector: a 5-stage conv encoder feeding an interior
// stream (levels 4,5), a boundary stream (levels 1-5) and a glass stream
// (levels 1,2,5). Boundary and glass streams merge levels top-down through
// short connections; every level runs a multi-scale interactive dilation (MID)
// block. A boundary-aware fusion (BFM) injects the predicted boundary and
// interior maps into the glass features before the final prediction.

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "glasskit/losses.hpp"
#include "glasskit/parameters.hpp"

namespace glasskit::nn {

struct NetworkConfig {
  int input_size = 64;
  std::array<int, 5> encoder_channels{16, 32, 64, 128, 256};
  int decoder_width = 16;
  std::vector<int> dilation_rates{2, 4, 8, 16};
  int se_reduction = 4;
  bool enable_boundary_stream = true;
  bool enable_interior_stream = true;
  bool enable_bfm = true;
  bool enable_mid = true;

  void validate() const {
    if (input_size < 16 || input_size % 16 != 0) throw InvalidInput("net.input_size must be a positive multiple of 16");
    for (int c : encoder_channels)
      if (c < 1) throw InvalidInput("net.encoder_channels must be positive");
    if (decoder_width < 1) throw InvalidInput("net.decoder_width must be positive");
    if (dilation_rates.empty()) throw InvalidInput("net.dilation_rates must not be empty");
    for (std::size_t i = 0; i < dilation_rates.size(); ++i)
      if (dilation_rates[i] < 1 || (i && dilation_rates[i] <= dilation_rates[i - 1]))
        throw InvalidInput("net.dilation_rates must be strictly increasing positive integers");
    if (se_reduction < 1 || decoder_width < se_reduction)
      throw InvalidInput("net.se_reduction must be in [1, decoder_width]");
  }
};

inline constexpr std::size_t kGlassBranches = 3;
inline constexpr std::size_t kBoundaryBranches = 5;

/// conv -> batch norm -> ReLU, each stage optional.
template <class T>
class ConvUnit {
 public:
  struct Options {
    int kernel = 3;
    int stride = 1;
    int dilation = 1;
    bool norm = true;
    bool relu = true;
  };

  ConvUnit() = default;
  ConvUnit(ParameterStore<T>& store, const std::string& name, int in, int out, Options opt) : opt_(opt) {
    weight_ = store.normal(name + ".weight", {out, in, opt.kernel, opt.kernel}, in * opt.kernel * opt.kernel);
    if (opt.norm) {
      gamma_ = store.constant(name + ".gamma", {out}, T(1));
      beta_ = store.constant(name + ".beta", {out}, T(0));
      stats_ = &store.norm_stats(name + ".bn", out);
    } else {
      bias_ = store.constant(name + ".bias", {out}, T(0));
    }
  }

  Tensor<T> operator()(const Tensor<T>& x, bool training) const {
    const Conv2dSpec spec{opt_.stride, opt_.dilation * (opt_.kernel - 1) / 2, opt_.dilation};
    auto y = conv2d(x, weight_, bias_, spec);
    if (opt_.norm) y = batch_norm(y, gamma_, beta_, *stats_, training);
    return opt_.relu ? relu(y) : y;
  }

  const Tensor<T>& weight() const { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  Options opt_;
  Tensor<T> weight_, bias_, gamma_, beta_;
  BatchNormStats<T>* stats_ = nullptr;
};

/// Multi-scale interactive dilation. Branch 0 is a plain 3x3 conv; branch k
/// applies a rate-r_k dilated conv to conv3x3(x) plus branch k-1's output. The
/// concatenated branches are fused by a conv and added back to the input.
/// When disabled the block is a single 3x3 conv unit.
template <class T>
class Mid {
 public:
  struct Options {
    bool enabled = true;
    bool norm = true;
    bool relu = true;
  };

  Mid(ParameterStore<T>& store, const std::string& name, int width, const std::vector<int>& rates, Options opt)
      : enabled_(opt.enabled) {
    typename ConvUnit<T>::Options plain{3, 1, 1, opt.norm, opt.relu};
    if (!enabled_) {
      local_ = ConvUnit<T>(store, name + ".pass", width, width, plain);
      return;
    }
    local_ = ConvUnit<T>(store, name + ".local", width, width, plain);
    for (std::size_t k = 0; k < rates.size(); ++k) {
      const std::string b = name + ".branch" + std::to_string(k + 1);
      pre_.emplace_back(store, b + ".pre", width, width, plain);
      auto dil = plain;
      dil.dilation = rates[k];
      dilated_.emplace_back(store, b + ".dilated", width, width, dil);
    }
    fuse_ = ConvUnit<T>(store, name + ".fuse", width * static_cast<int>(rates.size() + 1), width, plain);
  }

  Tensor<T> operator()(const Tensor<T>& df, bool training) const {
    if (!enabled_) return local_(df, training);
    std::vector<Tensor<T>> branches{local_(df, training)};
    for (std::size_t k = 0; k < pre_.size(); ++k)
      branches.push_back(dilated_[k](add(pre_[k](df, training), branches.back()), training));
    return add(fuse_(concat_channels(branches), training), df);
  }

 private:
  bool enabled_;
  ConvUnit<T> local_, fuse_;
  std::vector<ConvUnit<T>> pre_, dilated_;
};

/// Squeeze-and-excitation: global pool, bottleneck MLP, sigmoid channel gate.
template <class T>
class SeBlock {
 public:
  SeBlock(ParameterStore<T>& store, const std::string& name, int channels, int reduction) : channels_(channels) {
    if (reduction < 1 || channels < reduction)
      throw InvalidInput("SE block needs channels >= reduction ratio (" + std::to_string(channels) + " < " +
                         std::to_string(reduction) + ")");
    const int hidden = channels / reduction;
    w1_ = store.normal(name + ".fc1.weight", {channels, hidden}, channels);
    b1_ = store.constant(name + ".fc1.bias", {hidden}, T(0));
    w2_ = store.normal(name + ".fc2.weight", {hidden, channels}, hidden);
    b2_ = store.constant(name + ".fc2.bias", {channels}, T(0));
  }

  /// Per-channel gate [B,C,1,1], values in (0,1).
  Tensor<T> gate(const Tensor<T>& x) const {
    if (x.rank() != 4 || x.dim(1) != channels_)
      throw InvalidInput("SE block expects " + std::to_string(channels_) + " channels, got " + to_string(x.shape()));
    const int batch = x.dim(0);
    auto squeezed = reshape(global_avg_pool(x), {batch, channels_});
    auto hidden = relu(linear(squeezed, w1_, b1_));
    return reshape(sigmoid(linear(hidden, w2_, b2_)), {batch, channels_, 1, 1});
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return mul(x, gate(x)); }

  Tensor<T>& excitation_bias() { return b2_; }

 private:
  int channels_;
  Tensor<T> w1_, b1_, w2_, b2_;
};

/// Conv3x3 unit then a 1x1 projection to one logit channel, upsampled to the
/// requested resolution.
template <class T>
class PredictBlock {
 public:
  PredictBlock(ParameterStore<T>& store, const std::string& name, int width)
      : body_(store, name + ".body", width, width, {}), head_(store, name + ".head", width, 1, {1, 1, 1, false, false}) {}

  Tensor<T> operator()(const Tensor<T>& feat, int out_h, int out_w, bool training) const {
    return bilinear_resize(head_(body_(feat, training), training), out_h, out_w);
  }

 private:
  ConvUnit<T> body_, head_;
};

/// Boundary-aware feature mosaic. Each attention map gates the glass feature,
/// is concatenated back as an extra channel, convolved and recalibrated by its
/// own SE block; both enhanced features are added to the input.
template <class T>
class Bfm {
 public:
  Bfm(ParameterStore<T>& store, const std::string& name, int width, int reduction)
      : boundary_conv_(store, name + ".boundary.conv", width + 1, width, {}),
        boundary_se_(store, name + ".boundary.se", width, reduction),
        interior_conv_(store, name + ".interior.conv", width + 1, width, {}),
        interior_se_(store, name + ".interior.se", width, reduction) {}

  Tensor<T> operator()(const Tensor<T>& glass_feat, const Tensor<T>& boundary_prob, const Tensor<T>& interior_prob,
                       bool training) const {
    const int h = glass_feat.dim(2), w = glass_feat.dim(3);
    auto enhance = [&](const Tensor<T>& prob, const ConvUnit<T>& conv, const SeBlock<T>& se) {
      if (prob.rank() != 4 || prob.dim(1) != 1 || prob.dim(0) != glass_feat.dim(0))
        throw InvalidInput("BFM attention map must be [B,1,H,W], got " + to_string(prob.shape()));
      auto att = bilinear_resize(prob, h, w);
      return se(conv(concat_channels<T>({mul(glass_feat, att), att}), training));
    };
    auto fb = enhance(boundary_prob, boundary_conv_, boundary_se_);
    auto fi = enhance(interior_prob, interior_conv_, interior_se_);
    return add(add(glass_feat, fb), fi);
  }

 private:
  ConvUnit<T> boundary_conv_;
  SeBlock<T> boundary_se_;
  ConvUnit<T> interior_conv_;
  SeBlock<T> interior_se_;
};

template <class T>
struct EncoderFeatures {
  std::array<Tensor<T>, 5> ef;  // EF_1..EF_5, strides 2..32
};

template <class T>
class Encoder {
 public:
  Encoder(ParameterStore<T>& store, const std::string& name, const std::array<int, 5>& widths) {
    int in = 3;
    for (int i = 0; i < 5; ++i) {
      const std::string s = name + ".stage" + std::to_string(i + 1);
      entry_.emplace_back(store, s + ".down", in, widths[i], typename ConvUnit<T>::Options{3, 2, 1, true, true});
      body_.emplace_back(store, s + ".conv", widths[i], widths[i], typename ConvUnit<T>::Options{});
      in = widths[i];
    }
  }

  EncoderFeatures<T> operator()(const Tensor<T>& image, bool training) const {
    if (image.rank() != 4 || image.dim(1) != 3)
      throw InvalidInput("encoder expects [B,3,H,W], got " + to_string(image.shape()));
    if (image.dim(2) % 16 != 0 || image.dim(3) % 16 != 0 || image.dim(2) < 16 || image.dim(3) < 16)
      throw InvalidInput("input extents must be positive multiples of 16, got " + to_string(image.shape()));
    EncoderFeatures<T> out;
    Tensor<T> x = image;
    for (int i = 0; i < 5; ++i) {
      x = body_[i](entry_[i](x, training), training);
      out.ef[i] = x;
    }
    return out;
  }

 private:
  std::vector<ConvUnit<T>> entry_, body_;
};

/// Short-connection decoder over a subset of encoder levels (1-based). The top
/// level is DF = Conv(EF); lower levels concatenate a 1x1 projection of EF_i with
/// every already-computed higher MF resized to level i.
template <class T>
class ShortConnectStream {
 public:
  struct Output {
    std::vector<Tensor<T>> side_logits;  // one per level, ascending level order
    std::map<int, Tensor<T>> mf;
  };

  ShortConnectStream(ParameterStore<T>& store, const std::string& name, const NetworkConfig& cfg,
                     std::vector<int> levels)
      : levels_(std::move(levels)) {
    const int d = cfg.decoder_width;
    const typename Mid<T>::Options mid_opt{cfg.enable_mid, true, true};
    for (std::size_t k = 0; k < levels_.size(); ++k) {
      const int level = levels_[k];
      const std::string l = name + ".level" + std::to_string(level);
      const int c = cfg.encoder_channels[level - 1];
      const bool top = k + 1 == levels_.size();
      Level lv;
      if (top) {
        lv.entry = std::make_unique<ConvUnit<T>>(store, l + ".entry", c, d, typename ConvUnit<T>::Options{});
      } else {
        lv.lateral = std::make_unique<ConvUnit<T>>(store, l + ".lateral", c, d, typename ConvUnit<T>::Options{1, 1, 1, true, true});
        const int operands = static_cast<int>(levels_.size() - k);
        lv.entry = std::make_unique<ConvUnit<T>>(store, l + ".merge", operands * d, d, typename ConvUnit<T>::Options{});
      }
      lv.mid = std::make_unique<Mid<T>>(store, l + ".mid", d, cfg.dilation_rates, mid_opt);
      lv.predict = std::make_unique<PredictBlock<T>>(store, l + ".predict", d);
      stages_.push_back(std::move(lv));
    }
  }

  Output operator()(const EncoderFeatures<T>& ef, int out_h, int out_w, bool training) const {
    Output out;
    out.side_logits.resize(levels_.size());
    for (int k = static_cast<int>(levels_.size()) - 1; k >= 0; --k) {
      const int level = levels_[k];
      const auto& e = ef.ef[level - 1];
      const auto& st = stages_[k];
      Tensor<T> df;
      if (!st.lateral) {
        df = (*st.entry)(e, training);
      } else {
        std::vector<Tensor<T>> parts{(*st.lateral)(e, training)};
        for (std::size_t j = k + 1; j < levels_.size(); ++j)
          parts.push_back(bilinear_resize(out.mf.at(levels_[j]), e.dim(2), e.dim(3)));
        df = (*st.entry)(concat_channels(parts), training);
      }
      auto mf = (*st.mid)(df, training);
      out.side_logits[k] = (*st.predict)(mf, out_h, out_w, training);
      out.mf.emplace(level, std::move(mf));
    }
    return out;
  }

  const std::vector<int>& levels() const { return levels_; }

 private:
  struct Level {
    std::unique_ptr<ConvUnit<T>> lateral, entry;
    std::unique_ptr<Mid<T>> mid;
    std::unique_ptr<PredictBlock<T>> predict;
  };
  std::vector<int> levels_;
  std::vector<Level> stages_;
};

/// Interior stream: EF_4 + resized EF_5 (both projected to decoder width), MID, predict.
template <class T>
class InteriorStream {
 public:
  InteriorStream(ParameterStore<T>& store, const std::string& name, const NetworkConfig& cfg)
      : lat4_(store, name + ".lateral4", cfg.encoder_channels[3], cfg.decoder_width, {1, 1, 1, true, true}),
        lat5_(store, name + ".lateral5", cfg.encoder_channels[4], cfg.decoder_width, {1, 1, 1, true, true}),
        mid_(store, name + ".mid", cfg.decoder_width, cfg.dilation_rates, {cfg.enable_mid, true, true}),
        predict_(store, name + ".predict", cfg.decoder_width) {}

  Tensor<T> operator()(const EncoderFeatures<T>& ef, int out_h, int out_w, bool training) const {
    const auto& e4 = ef.ef[3];
    auto merged = add(lat4_(e4, training), bilinear_resize(lat5_(ef.ef[4], training), e4.dim(2), e4.dim(3)));
    return predict_(mid_(merged, training), out_h, out_w, training);
  }

 private:
  ConvUnit<T> lat4_, lat5_;
  Mid<T> mid_;
  PredictBlock<T> predict_;
};

template <class T>
class GlassNet {
 public:
  GlassNet(NetworkConfig cfg, std::uint64_t init_seed) : cfg_(validated(std::move(cfg))), store_(init_seed) {
    encoder_ = std::make_unique<Encoder<T>>(store_, "encoder", cfg_.encoder_channels);
    if (cfg_.enable_interior_stream) interior_ = std::make_unique<InteriorStream<T>>(store_, "interior", cfg_);
    if (cfg_.enable_boundary_stream)
      boundary_ = std::make_unique<ShortConnectStream<T>>(store_, "boundary", cfg_, std::vector<int>{1, 2, 3, 4, 5});
    if (cfg_.enable_boundary_stream && cfg_.enable_bfm)
      boundary_fuse_ = std::make_unique<ConvUnit<T>>(store_, "boundary.fuse", static_cast<int>(kBoundaryBranches), 1,
                                                     typename ConvUnit<T>::Options{1, 1, 1, false, false});
    glass_ = std::make_unique<ShortConnectStream<T>>(store_, "glass", cfg_, std::vector<int>{1, 2, 5});
    if (cfg_.enable_bfm) bfm_ = std::make_unique<Bfm<T>>(store_, "bfm", cfg_.decoder_width, cfg_.se_reduction);
    final_ = std::make_unique<PredictBlock<T>>(store_, "final.predict", cfg_.decoder_width);
  }

  EncoderFeatures<T> encode(const Tensor<T>& image, bool training) const { return (*encoder_)(image, training); }

  PredictionBundle<T> forward(const Tensor<T>& image, bool training) const {
    const auto ef = encode(image, training);
    const int batch = image.dim(0), h = image.dim(2), w = image.dim(3);
    PredictionBundle<T> out;
    const auto ones = Tensor<T>::full({batch, 1, h, w}, T(1));

    Tensor<T> interior_prob = ones;
    if (interior_) {
      out.interior_map = (*interior_)(ef, h, w, training);
      interior_prob = sigmoid(out.interior_map);
    }
    Tensor<T> boundary_prob = ones;
    if (boundary_) {
      auto bs = (*boundary_)(ef, h, w, training);
      out.boundary_maps = bs.side_logits;
      if (boundary_fuse_) boundary_prob = sigmoid((*boundary_fuse_)(concat_channels(bs.side_logits), training));
    }
    auto gs = (*glass_)(ef, h, w, training);
    out.glass_maps = gs.side_logits;
    out.glass_feature = gs.mf.at(1);
    auto fused = bfm_ ? (*bfm_)(out.glass_feature, boundary_prob, interior_prob, training) : out.glass_feature;
    out.final_map = (*final_)(fused, h, w, training);
    return out;
  }

  std::size_t glass_branch_count() const { return kGlassBranches; }
  std::size_t boundary_branch_count() const { return boundary_ ? kBoundaryBranches : 0; }

  const NetworkConfig& config() const { return cfg_; }
  ParameterStore<T>& parameters() { return store_; }
  const ParameterStore<T>& parameters() const { return store_; }

 private:
  static NetworkConfig validated(NetworkConfig cfg) {
    cfg.validate();
    return cfg;
  }

  NetworkConfig cfg_;
  ParameterStore<T> store_;
  std::unique_ptr<Encoder<T>> encoder_;
  std::unique_ptr<InteriorStream<T>> interior_;
  std::unique_ptr<ShortConnectStream<T>> boundary_;
  std::unique_ptr<ConvUnit<T>> boundary_fuse_;
  std::unique_ptr<ShortConnectStream<T>> glass_;
  std::unique_ptr<Bfm<T>> bfm_;
  std::unique_ptr<PredictBlock<T>> final_;
};

/// Supervision targets for a bundle: [B,1,H,W] glass mask, interior and boundary maps.
template <class T>
LossBreakdown<T> network_loss(const GlassNet<T>& net, const PredictionBundle<T>& bundle, const SupervisionSet<T>& sup) {
  return total_loss(bundle, sup, net.glass_branch_count(), net.boundary_branch_count());
}

}  // namespace glasskit::nn
