#pragma once

// Siamese encoder / squeeze / fusion / Siamese decoder.
//
// Both branches run the same layer sequences against one BasicParamStore, so
// weight sharing is by reference and gradients from the two branches
// accumulate into a single GradMap entry per parameter.

#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "docs/correlation.hpp"
#include "docs/error.hpp"
#include "docs/mask.hpp"
#include "docs/ops.hpp"
#include "docs/rng.hpp"
#include "docs/tensor.hpp"

namespace docs {

enum class Topology { tiny, toy, paper };
enum class Fusion { correlation, concat };

inline std::string to_string(Topology t) {
  switch (t) {
    case Topology::tiny: return "tiny";
    case Topology::toy: return "toy";
    case Topology::paper: return "paper";
  }
  return "?";
}

inline std::string to_string(Fusion f) { return f == Fusion::correlation ? "correlation" : "concat"; }

inline Topology parse_topology(const std::string& s) {
  if (s == "tiny") return Topology::tiny;
  if (s == "toy") return Topology::toy;
  if (s == "paper") return Topology::paper;
  throw shape_error("unknown topology '" + s + "' (expected tiny, toy or paper)");
}

inline Fusion parse_fusion(const std::string& s) {
  if (s == "correlation" || s == "corr") return Fusion::correlation;
  if (s == "concat") return Fusion::concat;
  throw shape_error("unknown fusion '" + s + "' (expected correlation or concat)");
}

struct NetworkConfig {
  Topology topology = Topology::toy;
  std::size_t input_size = 64;
  // Conv widths per encoder stage; each stage ends in a 2x2 max pool.
  std::vector<std::vector<std::size_t>> enc_stages;
  // 3x3 convs after the last pool (conv6-1 / conv6-2 in the full topology).
  std::vector<std::size_t> enc_head;
  std::size_t squeeze_channels = 32;
  // Width of the first decoder block; halved for each following block.
  std::size_t dec_width = 32;
  Fusion fusion = Fusion::correlation;
  bool corr_normalize = false;

  static NetworkConfig toy() {
    NetworkConfig c;
    c.topology = Topology::toy;
    c.input_size = 64;
    c.enc_stages = {{16, 16}, {32, 32}, {64, 64}};
    c.enc_head = {64};
    c.squeeze_channels = 32;
    c.dec_width = 32;
    return c;
  }

  static NetworkConfig paper() {
    NetworkConfig c;
    c.topology = Topology::paper;
    c.input_size = 512;
    c.enc_stages = {{64, 64}, {128, 128}, {256, 256, 256}, {512, 512, 512}, {512, 512, 512}};
    c.enc_head = {1024, 1024};
    c.squeeze_channels = 512;
    c.dec_width = 512;
    return c;
  }

  // Smallest useful network, for end-to-end gradient checks.
  static NetworkConfig tiny() {
    NetworkConfig c;
    c.topology = Topology::tiny;
    c.input_size = 16;
    c.enc_stages = {{4}, {8}};
    c.enc_head = {};
    c.squeeze_channels = 4;
    c.dec_width = 8;
    return c;
  }

  static NetworkConfig preset(Topology t) {
    switch (t) {
      case Topology::tiny: return tiny();
      case Topology::toy: return toy();
      case Topology::paper: return paper();
    }
    return toy();
  }

  std::size_t pool_count() const { return enc_stages.size(); }
  std::size_t dec_blocks() const { return enc_stages.size(); }
  std::size_t feature_size() const { return input_size >> pool_count(); }
  std::size_t feature_channels() const {
    return enc_head.empty() ? enc_stages.back().back() : enc_head.back();
  }
  int patch_size() const {
    const int f = static_cast<int>(feature_size());
    return patch_size_for(f, f);
  }
  std::size_t fused_channels() const {
    const auto d = static_cast<std::size_t>(patch_size());
    return squeeze_channels + (fusion == Fusion::correlation ? d * d : squeeze_channels);
  }
  std::size_t dec_block_width(std::size_t b) const { return std::max<std::size_t>(1, dec_width >> b); }

  void validate() const {
    if (enc_stages.empty()) throw shape_error("network config: no encoder stages");
    for (const auto& s : enc_stages)
      if (s.empty()) throw shape_error("network config: empty encoder stage");
    if (input_size == 0 || input_size % (std::size_t{1} << pool_count()) != 0)
      throw shape_error("network config: input size " + std::to_string(input_size) +
                        " not divisible by 2^" + std::to_string(pool_count()));
    if (squeeze_channels == 0 || dec_width == 0) throw shape_error("network config: zero width");
  }

  std::string serialize() const {
    std::ostringstream os;
    os << "topology = " << to_string(topology) << "\n";
    os << "inputSize = " << input_size << "\n";
    os << "encStages = ";
    for (std::size_t s = 0; s < enc_stages.size(); ++s) {
      if (s) os << ";";
      for (std::size_t j = 0; j < enc_stages[s].size(); ++j) os << (j ? "," : "") << enc_stages[s][j];
    }
    os << "\nencHead = ";
    for (std::size_t j = 0; j < enc_head.size(); ++j) os << (j ? "," : "") << enc_head[j];
    os << "\nsqueezeChannels = " << squeeze_channels << "\n";
    os << "decWidth = " << dec_width << "\n";
    os << "fusion = " << to_string(fusion) << "\n";
    os << "corrNormalize = " << (corr_normalize ? 1 : 0) << "\n";
    return os.str();
  }

  // Inverse of serialize(). Missing keys keep the topology preset's value.
  static NetworkConfig deserialize(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    NetworkConfig c = preset(kv.count("topology") ? parse_topology(kv["topology"]) : Topology::toy);
    auto parse_list = [](const std::string& s) {
      std::vector<std::size_t> v;
      std::istringstream ls(s);
      std::string tok;
      while (std::getline(ls, tok, ','))
        if (!tok.empty()) v.push_back(std::stoul(tok));
      return v;
    };
    try {
      if (kv.count("inputSize")) c.input_size = std::stoul(kv["inputSize"]);
      if (kv.count("encStages")) {
        c.enc_stages.clear();
        std::istringstream ss(kv["encStages"]);
        std::string stage;
        while (std::getline(ss, stage, ';')) c.enc_stages.push_back(parse_list(stage));
      }
      if (kv.count("encHead")) c.enc_head = parse_list(kv["encHead"]);
      if (kv.count("squeezeChannels")) c.squeeze_channels = std::stoul(kv["squeezeChannels"]);
      if (kv.count("decWidth")) c.dec_width = std::stoul(kv["decWidth"]);
      if (kv.count("fusion")) c.fusion = parse_fusion(kv["fusion"]);
      if (kv.count("corrNormalize")) c.corr_normalize = kv["corrNormalize"] == "1";
    } catch (const std::logic_error& e) {
      if (dynamic_cast<const shape_error*>(&e)) throw;
      throw data_error(std::string("malformed network config: ") + e.what());
    }
    c.validate();
    return c;
  }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

// ---------------------------------------------------------------------------
// Layer sequences

enum class LayerKind { conv, deconv, relu, maxpool };

struct LayerSpec {
  LayerKind kind;
  std::string param;  // weight is param + ".w", bias is param + ".b"
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t k = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
};

namespace detail {

inline void push_conv(std::vector<LayerSpec>& seq, std::string name, std::size_t in, std::size_t out,
                      std::size_t k, bool with_relu = true) {
  seq.push_back({LayerKind::conv, std::move(name), in, out, k, 1, k / 2});
  if (with_relu) seq.push_back({LayerKind::relu, {}, 0, 0, 0, 1, 0});
}

}  // namespace detail

inline std::vector<LayerSpec> encoder_layers(const NetworkConfig& cfg) {
  std::vector<LayerSpec> seq;
  std::size_t ch = 3;
  for (std::size_t s = 0; s < cfg.enc_stages.size(); ++s) {
    for (std::size_t j = 0; j < cfg.enc_stages[s].size(); ++j) {
      const std::size_t out = cfg.enc_stages[s][j];
      detail::push_conv(seq, "enc.s" + std::to_string(s + 1) + ".conv" + std::to_string(j + 1), ch, out, 3);
      ch = out;
    }
    seq.push_back({LayerKind::maxpool, {}, 0, 0, 2, 2, 0});
  }
  for (std::size_t j = 0; j < cfg.enc_head.size(); ++j) {
    detail::push_conv(seq, "enc.head" + std::to_string(j + 1), ch, cfg.enc_head[j], 3);
    ch = cfg.enc_head[j];
  }
  return seq;
}

inline std::vector<LayerSpec> squeeze_layers(const NetworkConfig& cfg) {
  std::vector<LayerSpec> seq;
  detail::push_conv(seq, "squeeze", cfg.feature_channels(), cfg.squeeze_channels, 1);
  return seq;
}

inline std::vector<LayerSpec> decoder_layers(const NetworkConfig& cfg) {
  std::vector<LayerSpec> seq;
  std::size_t ch = cfg.fused_channels();
  for (std::size_t b = 0; b < cfg.dec_blocks(); ++b) {
    const std::size_t w = cfg.dec_block_width(b);
    const std::string base = "dec.b" + std::to_string(b + 1);
    seq.push_back({LayerKind::deconv, base + ".up", ch, w, 4, 2, 1});
    seq.push_back({LayerKind::relu, {}, 0, 0, 0, 1, 0});
    detail::push_conv(seq, base + ".conv1", w, w, 3);
    detail::push_conv(seq, base + ".conv2", w, w, 3);
    ch = w;
  }
  detail::push_conv(seq, "dec.out", ch, 2, 1, /*with_relu=*/false);
  return seq;
}

/// Deterministic He-style initialization: N(0, 2 / fan_in), zero biases.
/// Transposed convs use fan_in = inC * k * k / stride^2, the number of taps
/// feeding each output.
template <typename T = float>
BasicParamStore<T> init_params(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  BasicParamStore<T> store;
  Rng rng(mix_seed(seed, 0x1d));
  auto add_layer = [&](const LayerSpec& l) {
    Shape ws;
    double fan_in;
    if (l.kind == LayerKind::conv) {
      ws = Shape{l.out_channels, l.in_channels, l.k, l.k};
      fan_in = static_cast<double>(l.in_channels * l.k * l.k);
    } else {
      ws = Shape{l.in_channels, l.out_channels, l.k, l.k};
      fan_in = static_cast<double>(l.in_channels * l.k * l.k) / static_cast<double>(l.stride * l.stride);
    }
    const double sd = std::sqrt(2.0 / fan_in);
    BasicTensor<T> w(ws);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.normal() * sd);
    store.add(l.param + ".w", std::move(w));
    store.add(l.param + ".b", BasicTensor<T>(Shape{l.out_channels, 1, 1, 1}));
  };
  for (const auto& seq : {encoder_layers(cfg), squeeze_layers(cfg), decoder_layers(cfg)})
    for (const auto& l : seq)
      if (l.kind == LayerKind::conv || l.kind == LayerKind::deconv) add_layer(l);
  return store;
}

// ---------------------------------------------------------------------------
// Sequence execution with an optional tape for the backward pass.

template <typename T>
struct Tape {
  std::vector<BasicTensor<T>> inputs;                 // input of every layer
  std::vector<std::vector<std::uint32_t>> argmax;     // per layer, pools only
};

template <typename T>
BasicTensor<T> run_sequence(const std::vector<LayerSpec>& seq, BasicTensor<T> x,
                            const BasicParamStore<T>& params, Tape<T>* tape = nullptr) {
  if (tape) {
    tape->inputs.clear();
    tape->argmax.assign(seq.size(), {});
  }
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const LayerSpec& l = seq[i];
    BasicTensor<T> y;
    switch (l.kind) {
      case LayerKind::conv:
        y = conv2d(x, params.get(l.param + ".w"), params.get(l.param + ".b").data(), l.stride, l.pad);
        break;
      case LayerKind::deconv:
        y = transposed_conv2d(x, params.get(l.param + ".w"), params.get(l.param + ".b").data(), l.stride, l.pad);
        break;
      case LayerKind::relu:
        y = relu(x);
        break;
      case LayerKind::maxpool: {
        auto r = maxpool2d(x, l.k, l.stride);
        y = std::move(r.y);
        if (tape) tape->argmax[i] = std::move(r.argmax);
        break;
      }
    }
    if (tape) tape->inputs.push_back(std::move(x));
    x = std::move(y);
  }
  return x;
}

namespace detail {

template <typename T>
void accumulate(GradMap<T>& grads, const std::string& name, std::span<const T> g) {
  auto it = grads.find(name);
  if (it == grads.end()) throw shape_error("no gradient slot for '" + name + "'");
  auto dst = it->second.data();
  if (dst.size() != g.size()) throw shape_error("gradient size mismatch for '" + name + "'");
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

}  // namespace detail

/// Reverse pass over a recorded sequence. Parameter gradients are added
/// into `grads`; returns the gradient with respect to the sequence input
/// (empty when want_dx is false).
template <typename T>
BasicTensor<T> backprop_sequence(const std::vector<LayerSpec>& seq, const Tape<T>& tape, BasicTensor<T> dy,
                                 const BasicParamStore<T>& params, GradMap<T>& grads, bool want_dx = true) {
  for (std::size_t ii = seq.size(); ii-- > 0;) {
    const LayerSpec& l = seq[ii];
    const BasicTensor<T>& x = tape.inputs[ii];
    const bool need = want_dx || ii > 0;
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::deconv: {
        const auto& w = params.get(l.param + ".w");
        auto g = l.kind == LayerKind::conv ? conv2d_backward(x, w, dy, l.stride, l.pad, need)
                                           : transposed_conv2d_backward(x, w, dy, l.stride, l.pad, need);
        detail::accumulate<T>(grads, l.param + ".w", g.dw.data());
        detail::accumulate<T>(grads, l.param + ".b", g.db);
        dy = std::move(g.dx);
        break;
      }
      case LayerKind::relu:
        dy = relu_backward(x, dy);
        break;
      case LayerKind::maxpool:
        dy = maxpool2d_backward(x.shape(), std::span<const std::uint32_t>(tape.argmax[ii]), dy);
        break;
    }
  }
  return want_dx ? dy : BasicTensor<T>();
}

// ---------------------------------------------------------------------------
// Network stages

template <typename T>
void check_image(const BasicTensor<T>& image, const NetworkConfig& cfg) {
  const Shape& s = image.shape();
  if (s.c != 3 || s.h != cfg.input_size || s.w != cfg.input_size)
    throw shape_error("encode: expected Nx3x" + std::to_string(cfg.input_size) + "x" +
                      std::to_string(cfg.input_size) + " image, got " + s.str());
}

template <typename T>
BasicTensor<T> encode(const BasicTensor<T>& image, const BasicParamStore<T>& params, const NetworkConfig& cfg,
                      Tape<T>* tape = nullptr) {
  check_image(image, cfg);
  return run_sequence(encoder_layers(cfg), image, params, tape);
}

template <typename T>
BasicTensor<T> squeeze(const BasicTensor<T>& features, const BasicParamStore<T>& params,
                       const NetworkConfig& cfg, Tape<T>* tape = nullptr) {
  return run_sequence(squeeze_layers(cfg), features, params, tape);
}

/// Returns logits (N x 2 x S x S); apply softmax_channels for probabilities.
template <typename T>
BasicTensor<T> decode_logits(const BasicTensor<T>& fused, const BasicParamStore<T>& params,
                             const NetworkConfig& cfg, Tape<T>* tape = nullptr) {
  if (fused.shape().c != cfg.fused_channels())
    throw shape_error("decode: expected " + std::to_string(cfg.fused_channels()) + " fused channels, got " +
                      fused.shape().str());
  return run_sequence(decoder_layers(cfg), fused, params, tape);
}

template <typename T>
BasicTensor<T> decode(const BasicTensor<T>& fused, const BasicParamStore<T>& params, const NetworkConfig& cfg) {
  return softmax_channels(decode_logits(fused, params, cfg));
}

// Correlation branch including the optional cosine normalization.
template <typename T>
BasicTensor<T> correlate_features(const BasicTensor<T>& fa, const BasicTensor<T>& fb, const NetworkConfig& cfg) {
  if (cfg.corr_normalize)
    return mutual_correlate(l2_normalize_channels(fa), l2_normalize_channels(fb), cfg.patch_size()).data;
  return mutual_correlate(fa, fb, cfg.patch_size()).data;
}

template <typename T>
struct BasicProbabilityPair {
  BasicTensor<T> pa;
  BasicTensor<T> pb;
};

using ProbabilityPair = BasicProbabilityPair<float>;

/// Fused decoder inputs for both sides. Correlation fusion gives A
/// concat(squeeze(fA), C_AB) and B concat(squeeze(fB), C_BA); concat fusion
/// gives A concat(squeeze(fA), squeeze(fB)) and B the reverse.
template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> fuse(const BasicTensor<T>& fa, const BasicTensor<T>& fb,
                                               const BasicTensor<T>& sa, const BasicTensor<T>& sb,
                                               const NetworkConfig& cfg) {
  if (cfg.fusion == Fusion::correlation)
    return {concat_channels(sa, correlate_features(fa, fb, cfg)), concat_channels(sb, correlate_features(fb, fa, cfg))};
  return {concat_channels(sa, sb), concat_channels(sb, sa)};
}

template <typename T>
BasicProbabilityPair<T> forward_pair(const BasicTensor<T>& ia, const BasicTensor<T>& ib,
                                     const BasicParamStore<T>& params, const NetworkConfig& cfg) {
  const auto fa = encode(ia, params, cfg);
  const auto fb = encode(ib, params, cfg);
  const auto sa = squeeze(fa, params, cfg);
  const auto sb = squeeze(fb, params, cfg);
  auto [xa, xb] = fuse(fa, fb, sa, sb, cfg);
  return {decode(xa, params, cfg), decode(xb, params, cfg)};
}

// ---------------------------------------------------------------------------
// Training pass

/// Computes L_AB = L_A + L_B for one pair and adds dL_AB/dparams, scaled
/// by `grad_scale`, into grads.
template <typename T>
T pair_loss_and_grads(const BasicTensor<T>& ia, const BasicTensor<T>& ib, const Mask& ma, const Mask& mb,
                      const BasicParamStore<T>& params, const NetworkConfig& cfg, GradMap<T>& grads,
                      T grad_scale = T{1}) {
  const auto enc = encoder_layers(cfg);
  const auto sq = squeeze_layers(cfg);
  const auto dec = decoder_layers(cfg);

  Tape<T> te_a, te_b, ts_a, ts_b, td_a, td_b;
  const auto fa = run_sequence(enc, (check_image(ia, cfg), ia), params, &te_a);
  const auto fb = run_sequence(enc, (check_image(ib, cfg), ib), params, &te_b);
  const auto sa = run_sequence(sq, fa, params, &ts_a);
  const auto sb = run_sequence(sq, fb, params, &ts_b);

  const int D = cfg.patch_size();
  BasicTensor<T> na, nb;  // normalized features when corr_normalize
  BasicTensor<T> xa, xb;
  if (cfg.fusion == Fusion::correlation) {
    const BasicTensor<T>& ca_in = cfg.corr_normalize ? (na = l2_normalize_channels(fa)) : fa;
    const BasicTensor<T>& cb_in = cfg.corr_normalize ? (nb = l2_normalize_channels(fb)) : fb;
    xa = concat_channels(sa, mutual_correlate(ca_in, cb_in, D).data);
    xb = concat_channels(sb, mutual_correlate(cb_in, ca_in, D).data);
  } else {
    xa = concat_channels(sa, sb);
    xb = concat_channels(sb, sa);
  }
  const auto za = run_sequence(dec, xa, params, &td_a);
  const auto zb = run_sequence(dec, xb, params, &td_b);
  auto la = softmax_cross_entropy(za, ma);
  auto lb = softmax_cross_entropy(zb, mb);
  if (grad_scale != T{1}) {
    for (auto& v : la.dlogits.data()) v *= grad_scale;
    for (auto& v : lb.dlogits.data()) v *= grad_scale;
  }

  auto dxa = backprop_sequence(dec, td_a, std::move(la.dlogits), params, grads);
  auto dxb = backprop_sequence(dec, td_b, std::move(lb.dlogits), params, grads);

  const std::size_t sc = cfg.squeeze_channels;
  const std::size_t other = cfg.fused_channels() - sc;
  const std::size_t sizes[] = {sc, other};
  auto parts_a = split_channels(dxa, std::span<const std::size_t>(sizes));
  auto parts_b = split_channels(dxb, std::span<const std::size_t>(sizes));

  BasicTensor<T> dsa = std::move(parts_a[0]);
  BasicTensor<T> dsb = std::move(parts_b[0]);
  BasicTensor<T> dfa(fa.shape()), dfb(fb.shape());
  auto add_into = [](BasicTensor<T>& dst, const BasicTensor<T>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  };
  if (cfg.fusion == Fusion::correlation) {
    const BasicTensor<T>& ca_in = cfg.corr_normalize ? na : fa;
    const BasicTensor<T>& cb_in = cfg.corr_normalize ? nb : fb;
    auto gab = mutual_correlate_backward(parts_a[1], ca_in, cb_in, D);  // C_AB = corr(A, B)
    auto gba = mutual_correlate_backward(parts_b[1], cb_in, ca_in, D);  // C_BA = corr(B, A)
    BasicTensor<T> dna = std::move(gab.dfa), dnb = std::move(gab.dfb);
    add_into(dna, gba.dfb);
    add_into(dnb, gba.dfa);
    if (cfg.corr_normalize) {
      dna = l2_normalize_channels_backward(fa, dna);
      dnb = l2_normalize_channels_backward(fb, dnb);
    }
    add_into(dfa, dna);
    add_into(dfb, dnb);
  } else {
    add_into(dsa, parts_b[1]);
    add_into(dsb, parts_a[1]);
  }
  add_into(dfa, backprop_sequence(sq, ts_a, std::move(dsa), params, grads));
  add_into(dfb, backprop_sequence(sq, ts_b, std::move(dsb), params, grads));
  backprop_sequence(enc, te_a, std::move(dfa), params, grads, /*want_dx=*/false);
  backprop_sequence(enc, te_b, std::move(dfb), params, grads, /*want_dx=*/false);
  return la.loss + lb.loss;
}

/// Loss only, no gradients; used by finite-difference checks.
template <typename T>
T pair_loss(const BasicTensor<T>& ia, const BasicTensor<T>& ib, const Mask& ma, const Mask& mb,
            const BasicParamStore<T>& params, const NetworkConfig& cfg) {
  auto p = forward_pair(ia, ib, params, cfg);
  return cross_entropy_loss(p.pa, ma) + cross_entropy_loss(p.pb, mb);
}

}  // namespace docs
