#include "demoe/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "demoe/error.hpp"
#include "demoe/rng.hpp"

namespace demoe::net {

namespace {

using Init = ParamSpec::Init;
using ops::ConvMode;

std::string join(const std::string& prefix, const std::string& leaf) {
  return prefix + "." + leaf;
}

void push(std::vector<ParamSpec>& out, std::string name, Shape shape, Taxonomy tax, Init init) {
  out.push_back(ParamSpec{std::move(name), shape, tax, init});
}

void naf_specs(std::vector<ParamSpec>& out, const std::string& p, std::size_t c) {
  const std::size_t c2 = 2 * c;
  push(out, join(p, "norm1.gamma"), {1, c, 1, 1}, Taxonomy::layernorm, Init::ones);
  push(out, join(p, "norm1.beta"), {1, c, 1, 1}, Taxonomy::layernorm, Init::zeros);
  push(out, join(p, "conv1.weight"), {c2, c, 1, 1}, Taxonomy::conv1x1, Init::uniform_fan_in);
  push(out, join(p, "conv1.bias"), {1, c2, 1, 1}, Taxonomy::other, Init::zeros);
  push(out, join(p, "conv2.weight"), {c2, 1, 3, 3}, Taxonomy::conv3x3, Init::uniform_fan_in);
  push(out, join(p, "conv2.bias"), {1, c2, 1, 1}, Taxonomy::other, Init::zeros);
  push(out, join(p, "sca.weight"), {c, c, 1, 1}, Taxonomy::sca, Init::uniform_fan_in);
  push(out, join(p, "sca.bias"), {1, c, 1, 1}, Taxonomy::other, Init::zeros);
  push(out, join(p, "conv3.weight"), {c, c, 1, 1}, Taxonomy::conv1x1, Init::uniform_fan_in);
  push(out, join(p, "conv3.bias"), {1, c, 1, 1}, Taxonomy::other, Init::zeros);
  push(out, join(p, "beta"), {1, c, 1, 1}, Taxonomy::other, Init::zeros);
  push(out, join(p, "norm2.gamma"), {1, c, 1, 1}, Taxonomy::layernorm, Init::ones);
  push(out, join(p, "norm2.beta"), {1, c, 1, 1}, Taxonomy::layernorm, Init::zeros);
  push(out, join(p, "conv4.weight"), {c2, c, 1, 1}, Taxonomy::conv1x1, Init::uniform_fan_in);
  push(out, join(p, "conv4.bias"), {1, c2, 1, 1}, Taxonomy::other, Init::zeros);
  push(out, join(p, "conv5.weight"), {c, c, 1, 1}, Taxonomy::conv1x1, Init::uniform_fan_in);
  push(out, join(p, "conv5.bias"), {1, c, 1, 1}, Taxonomy::other, Init::zeros);
  push(out, join(p, "gamma"), {1, c, 1, 1}, Taxonomy::other, Init::zeros);
}

std::string enc_prefix(std::size_t level, std::size_t block) {
  return "enc." + std::to_string(level) + "." + std::to_string(block);
}

std::string dec_prefix(std::size_t level, std::size_t block) {
  return "dec." + std::to_string(level) + "." + std::to_string(block);
}

std::string expert_prefix(const std::string& block, std::size_t expert) {
  return block + ".expert." + std::to_string(expert);
}

bool starts_with(std::string_view s, std::string_view p) {
  return s.substr(0, p.size()) == p;
}

// Rewrites ".expert.<from>." to ".expert.<to>." in a decoder parameter name.
std::string rename_expert(const std::string& name, std::size_t from, std::size_t to) {
  const std::string needle = ".expert." + std::to_string(from) + ".";
  const auto pos = name.find(needle);
  if (pos == std::string::npos) return name;
  return name.substr(0, pos) + ".expert." + std::to_string(to) + "." + name.substr(pos + needle.size());
}

}  // namespace

std::vector<ParamSpec> parameter_specs(const ArchConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> out;
  const std::size_t base = cfg.base_width;
  push(out, "intro.weight", {base, 3, 1, 1}, Taxonomy::conv1x1, Init::uniform_fan_in);
  push(out, "intro.bias", {1, base, 1, 1}, Taxonomy::other, Init::zeros);
  for (std::uint32_t l = 0; l < cfg.num_levels; ++l) {
    const std::size_t c = cfg.width(l);
    for (std::uint32_t b = 0; b < cfg.enc_blocks; ++b) naf_specs(out, enc_prefix(l, b), c);
    push(out, "down." + std::to_string(l) + ".weight", {2 * c, c, 2, 2}, Taxonomy::other,
         Init::uniform_fan_in);
    push(out, "down." + std::to_string(l) + ".bias", {1, 2 * c, 1, 1}, Taxonomy::other, Init::zeros);
  }
  const std::size_t deep = cfg.deep_width();
  if (cfg.router) {
    const std::size_t e = cfg.num_experts;
    push(out, "router.proj.weight", {2 * deep, deep, 1, 1}, Taxonomy::other, Init::uniform_fan_in);
    push(out, "router.proj.bias", {1, 2 * deep, 1, 1}, Taxonomy::other, Init::zeros);
    push(out, "router.attn.weight", {deep, deep, 1, 1}, Taxonomy::other, Init::uniform_fan_in);
    push(out, "router.attn.bias", {1, deep, 1, 1}, Taxonomy::other, Init::zeros);
    push(out, "router.norm.gamma", {1, deep, 1, 1}, Taxonomy::other, Init::ones);
    push(out, "router.norm.beta", {1, deep, 1, 1}, Taxonomy::other, Init::zeros);
    push(out, "router.fc1.weight", {deep, deep, 1, 1}, Taxonomy::other, Init::uniform_fan_in);
    push(out, "router.fc1.bias", {1, deep, 1, 1}, Taxonomy::other, Init::zeros);
    push(out, "router.fc2.weight", {e, deep / 2, 1, 1}, Taxonomy::other, Init::uniform_fan_in);
    push(out, "router.fc2.bias", {1, e, 1, 1}, Taxonomy::other, Init::zeros);
  }
  for (std::uint32_t b = 0; b < cfg.mid_blocks; ++b) naf_specs(out, "mid." + std::to_string(b), deep);
  for (std::uint32_t l = cfg.num_levels; l-- > 0;) {
    const std::size_t c_in = cfg.width(l + 1);
    push(out, "up." + std::to_string(l) + ".weight", {2 * c_in, c_in, 1, 1}, Taxonomy::conv1x1,
         Init::uniform_fan_in);
    const std::size_t c = cfg.width(l);
    for (std::uint32_t b = 0; b < cfg.dec_blocks; ++b) {
      for (std::uint32_t e = 0; e < cfg.expert_slots; ++e) naf_specs(out, expert_prefix(dec_prefix(l, b), e), c);
    }
  }
  push(out, "ending.weight", {3, base, 1, 1}, Taxonomy::conv1x1, Init::uniform_fan_in);
  push(out, "ending.bias", {1, 3, 1, 1}, Taxonomy::other, Init::zeros);
  return out;
}

Checkpoint init_checkpoint(const ArchConfig& config, std::uint64_t seed) {
  Checkpoint ckpt(config, Stage::init);
  Rng rng = make_rng(seed, 0x1417);
  for (const ParamSpec& spec : parameter_specs(config)) {
    Tensor t(spec.shape);
    switch (spec.init) {
      case Init::zeros: break;
      case Init::ones: t.fill(1.0f); break;
      case Init::uniform_fan_in: {
        const double fan_in = static_cast<double>(spec.shape.c * spec.shape.h * spec.shape.w);
        const double bound = 1.0 / std::sqrt(fan_in);
        for (float& v : t.data()) v = static_cast<float>(uniform(rng, -bound, bound));
        break;
      }
    }
    ckpt.add(ParamRecord{spec.name, spec.taxonomy, std::move(t)});
  }
  return ckpt;
}

void check_architecture(const Checkpoint& ckpt) {
  const auto specs = parameter_specs(ckpt.config());
  if (specs.size() != ckpt.size()) {
    throw ArgumentError("checkpoint has " + std::to_string(ckpt.size()) +
                        " parameters, architecture defines " + std::to_string(specs.size()));
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const ParamRecord& r = ckpt.records()[i];
    if (r.name != specs[i].name) {
      throw ArgumentError("parameter " + std::to_string(i) + " is '" + r.name + "', expected '" +
                          specs[i].name + "'");
    }
    if (!(r.value.shape() == specs[i].shape)) {
      throw ArgumentError("parameter '" + r.name + "' has shape " + r.value.shape().str() +
                          ", expected " + specs[i].shape.str());
    }
    if (r.taxonomy != specs[i].taxonomy) {
      throw ArgumentError("parameter '" + r.name + "' is tagged " + to_string(r.taxonomy) +
                          ", expected " + to_string(specs[i].taxonomy));
    }
  }
}

bool is_encoder_param(std::string_view name) {
  return starts_with(name, "intro.") || starts_with(name, "enc.") || starts_with(name, "down.");
}

bool is_router_param(std::string_view name) {
  return starts_with(name, "router.");
}

ParamBinder::ParamBinder(ad::Tape& tape, const Checkpoint& ckpt, const Predicate& trainable)
    : tape_(&tape), ckpt_(&ckpt) {
  vars_.reserve(ckpt.size());
  for (const ParamRecord& r : ckpt.records()) {
    const bool grad = trainable ? trainable(r.name) : false;
    vars_.push_back(tape.leaf(r.value, grad));
  }
}

ad::Var ParamBinder::operator()(std::string_view name) const {
  return vars_[ckpt_->index_of(name)];
}

ExpertSelection select_top_k(std::span<const float> w, std::size_t k) {
  if (k == 0 || k > w.size()) {
    throw ArgumentError("top-k: k = " + std::to_string(k) + " outside [1, " + std::to_string(w.size()) + "]");
  }
  std::vector<std::size_t> order(w.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  ExpertSelection sel;
  sel.mode = ExpertSelection::Mode::automatic;
  double mass = 0.0;
  for (std::size_t i : order) mass += w[i];
  for (std::size_t i : order) {
    sel.indices.push_back(i);
    sel.weights.push_back(mass > 0.0 ? static_cast<float>(w[i] / mass) : 1.0f / static_cast<float>(k));
  }
  return sel;
}

ExpertSelection select_manual(std::size_t expert, std::size_t num_experts) {
  if (expert >= num_experts) {
    throw ArgumentError("expert override " + std::to_string(expert) + " outside [0, " +
                        std::to_string(num_experts) + ")");
  }
  return ExpertSelection{ExpertSelection::Mode::manual, {expert}, {1.0f}};
}

ad::Var naf_block_forward(ad::Var h, const ParamBinder& p, const std::string& prefix) {
  using ad::Var;
  const auto P = [&](const char* leaf) { return p(join(prefix, leaf)); };
  const std::size_t c = P("norm1.gamma").shape().c;
  if (h.shape().c != c) {
    throw ShapeError("naf block '" + prefix + "': input " + h.shape().str() + " has " +
                     std::to_string(h.shape().c) + " channels, block expects " + std::to_string(c));
  }
  Var x = ad::layer_norm_channels(h, P("norm1.gamma"), P("norm1.beta"));
  x = ad::conv2d(x, P("conv1.weight"), P("conv1.bias"), ConvMode::pointwise_1x1);
  x = ad::conv2d(x, P("conv2.weight"), P("conv2.bias"), ConvMode::depthwise_3x3);
  x = ad::simple_gate(x);
  x = ad::simplified_channel_attention(x, P("sca.weight"), P("sca.bias"));
  x = ad::conv2d(x, P("conv3.weight"), P("conv3.bias"), ConvMode::pointwise_1x1);
  const Var y = ad::add(h, ad::mul(x, P("beta")));

  x = ad::layer_norm_channels(y, P("norm2.gamma"), P("norm2.beta"));
  x = ad::conv2d(x, P("conv4.weight"), P("conv4.bias"), ConvMode::pointwise_1x1);
  x = ad::simple_gate(x);
  x = ad::conv2d(x, P("conv5.weight"), P("conv5.bias"), ConvMode::pointwise_1x1);
  return ad::add(y, ad::mul(x, P("gamma")));
}

EncoderOutput encoder_forward(ad::Var image, const ParamBinder& p) {
  const ArchConfig& cfg = p.checkpoint().config();
  const Shape& s = image.shape();
  const std::size_t factor = std::size_t{1} << cfg.num_levels;
  if (s.c != 3) throw ShapeError("encoder: expected 3-channel input, got " + s.str());
  if (s.h == 0 || s.w == 0 || s.h % factor != 0 || s.w % factor != 0) {
    throw ShapeError("encoder: spatial extents of " + s.str() + " must be positive multiples of " +
                     std::to_string(factor));
  }
  EncoderOutput out;
  ad::Var x = ad::conv2d(image, p("intro.weight"), p("intro.bias"), ConvMode::pointwise_1x1);
  for (std::uint32_t l = 0; l < cfg.num_levels; ++l) {
    for (std::uint32_t b = 0; b < cfg.enc_blocks; ++b) x = naf_block_forward(x, p, enc_prefix(l, b));
    out.skips.push_back(x);
    const std::string d = "down." + std::to_string(l);
    x = ad::conv2d(x, p(d + ".weight"), p(d + ".bias"), ConvMode::strided_2x2_down);
  }
  out.deep = x;
  return out;
}

ad::Var router_forward(ad::Var deep, const ParamBinder& p, const Tensor* logit_noise) {
  ad::Var a = ad::conv2d(deep, p("router.proj.weight"), p("router.proj.bias"), ConvMode::pointwise_1x1);
  a = ad::simple_gate(a);
  a = ad::simplified_channel_attention(a, p("router.attn.weight"), p("router.attn.bias"));
  ad::Var z = ad::global_avg_pool(a);
  z = ad::layer_norm_channels(z, p("router.norm.gamma"), p("router.norm.beta"));
  z = ad::conv2d(z, p("router.fc1.weight"), p("router.fc1.bias"), ConvMode::pointwise_1x1);
  z = ad::simple_gate(z);
  z = ad::conv2d(z, p("router.fc2.weight"), p("router.fc2.bias"), ConvMode::pointwise_1x1);
  if (logit_noise != nullptr) z = ad::add(z, p.tape().leaf(*logit_noise));
  return ad::softmax_channels(z);
}

GateBatch make_gates(const Tensor& probs, const Gating& gating, std::size_t slots) {
  const Shape& s = probs.shape();
  const std::size_t e = s.c;
  GateBatch out;
  out.gates = Tensor({s.n, slots, 1, 1});
  out.mask.assign(s.n, std::vector<bool>(slots, false));
  for (std::size_t n = 0; n < s.n; ++n) {
    const std::span<const float> w(probs.ptr() + n * e, e);
    ExpertSelection sel;
    switch (gating.kind) {
      case Gating::Kind::soft:
        sel.mode = ExpertSelection::Mode::automatic;
        for (std::size_t i = 0; i < e; ++i) {
          sel.indices.push_back(i);
          sel.weights.push_back(w[i]);
        }
        break;
      case Gating::Kind::top_k: sel = select_top_k(w, gating.k); break;
      case Gating::Kind::manual: sel = select_manual(gating.expert, e); break;
    }
    if (slots == e) {
      for (std::size_t j = 0; j < sel.indices.size(); ++j) {
        out.gates[n * slots + sel.indices[j]] = sel.weights[j];
        out.mask[n][sel.indices[j]] = true;
      }
    } else {
      out.gates[n * slots] = 1.0f;
      out.mask[n][0] = true;
    }
    out.selections.push_back(std::move(sel));
  }
  return out;
}

ad::Var moe_block_forward(ad::Var h, std::optional<ad::Var> gates,
                          const std::vector<std::vector<bool>>& mask, const ParamBinder& p,
                          const std::string& prefix, std::size_t slots, FusionMode fusion) {
  ad::Var s;
  if (slots == 1) {
    s = naf_block_forward(h, p, expert_prefix(prefix, 0));
  } else {
    if (!gates) throw ArgumentError("moe block '" + prefix + "': multi-expert block needs gates");
    if (mask.size() != h.shape().n) throw ShapeError("moe block: selection batch size mismatch");
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < slots; ++i) {
      if (std::any_of(mask.begin(), mask.end(), [i](const auto& row) { return row.at(i); })) active.push_back(i);
    }
    if (active.empty()) throw ArgumentError("moe block '" + prefix + "': empty expert selection");
    std::vector<ad::Var> experts;
    for (std::size_t i : active) experts.push_back(naf_block_forward(h, p, expert_prefix(prefix, i)));
    if (active.size() == slots) {
      s = ad::gated_sum(experts, *gates, mask);
    } else {
      // Inactive experts are skipped; the gate for the active subset is a constant.
      const Tensor& g = gates->value();
      const std::size_t batch = h.shape().n;
      Tensor sub({batch, active.size(), 1, 1});
      std::vector<std::vector<bool>> sub_mask(batch, std::vector<bool>(active.size()));
      for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t j = 0; j < active.size(); ++j) {
          sub[n * active.size() + j] = g[n * slots + active[j]];
          sub_mask[n][j] = mask[n][active[j]];
        }
      }
      if (p.tape().requires_grad(*gates)) {
        throw ArgumentError("moe block: sparse selection with differentiable gates is unsupported");
      }
      s = ad::gated_sum(experts, p.tape().leaf(std::move(sub)), sub_mask);
    }
  }
  switch (fusion) {
    case FusionMode::weighted_sum: return s;
    case FusionMode::addition_residual: return ad::add(h, s);
    case FusionMode::attention_connection: return ad::mul(h, s);
  }
  return s;
}

ForwardResult demoe_forward(ad::Var image, const ParamBinder& p, const Gating& gating,
                            const Tensor* logit_noise) {
  const ArchConfig& cfg = p.checkpoint().config();
  if (gating.kind == Gating::Kind::manual && gating.expert >= cfg.num_experts) {
    throw ArgumentError("expert override " + std::to_string(gating.expert) + " outside [0, " +
                        std::to_string(cfg.num_experts) + ")");
  }
  if (gating.kind == Gating::Kind::top_k && (gating.k == 0 || gating.k > cfg.num_experts)) {
    throw ArgumentError("k = " + std::to_string(gating.k) + " outside [1, " +
                        std::to_string(cfg.num_experts) + "]");
  }
  const EncoderOutput enc = encoder_forward(image, p);
  ForwardResult result;
  std::optional<ad::Var> gates;
  std::vector<std::vector<bool>> mask;
  const std::size_t slots = cfg.expert_slots;
  if (cfg.router) {
    result.router = router_forward(enc.deep, p, logit_noise);
    GateBatch gb = make_gates(result.router->value(), gating, slots);
    result.selections = std::move(gb.selections);
    mask = std::move(gb.mask);
    if (slots > 1) {
      gates = gating.kind == Gating::Kind::soft ? *result.router : p.tape().leaf(std::move(gb.gates));
    }
  } else if (slots > 1) {
    throw ArgumentError("multi-expert decoder without a router");
  }

  ad::Var x = enc.deep;
  for (std::uint32_t b = 0; b < cfg.mid_blocks; ++b) x = naf_block_forward(x, p, "mid." + std::to_string(b));
  for (std::uint32_t l = cfg.num_levels; l-- > 0;) {
    x = ad::conv2d(x, p("up." + std::to_string(l) + ".weight"), ConvMode::pointwise_1x1);
    x = ad::pixel_shuffle(x, ops::ShuffleDirection::up, 2);
    x = ad::add(x, enc.skips[l]);
    for (std::uint32_t b = 0; b < cfg.dec_blocks; ++b) {
      x = moe_block_forward(x, gates, mask, p, dec_prefix(l, b), slots, cfg.fusion);
    }
  }
  x = ad::conv2d(x, p("ending.weight"), p("ending.bias"), ConvMode::pointwise_1x1);
  result.restored = ad::add(image, x);
  return result;
}

Inference demoe_infer(const Checkpoint& ckpt, const Tensor& image, std::size_t k,
                      std::optional<std::size_t> override_expert) {
  ad::Tape tape(false);
  const ParamBinder params(tape, ckpt);
  const ad::Var x = tape.leaf(image);
  const Gating gating = override_expert ? Gating::manual_expert(*override_expert) : Gating::top(k);
  const ForwardResult fr = demoe_forward(x, params, gating);
  Inference out;
  out.restored = fr.restored.value();
  if (fr.router) {
    const Tensor& w = fr.router->value();
    const std::size_t e = w.shape().c;
    for (std::size_t n = 0; n < w.shape().n; ++n) {
      out.weights.push_back(RouterWeights{std::vector<float>(w.ptr() + n * e, w.ptr() + (n + 1) * e)});
    }
  }
  out.selections = fr.selections;
  return out;
}

Checkpoint extract_expert(const Checkpoint& ckpt, std::size_t expert) {
  const ArchConfig& src = ckpt.config();
  if (expert >= src.expert_slots) {
    throw ArgumentError("cannot extract expert " + std::to_string(expert) + " from a checkpoint with " +
                        std::to_string(src.expert_slots) + " expert slot(s)");
  }
  ArchConfig cfg = src;
  cfg.router = false;
  cfg.expert_slots = 1;
  cfg.top_k = 1;
  Checkpoint out(cfg, Stage::baseline);
  for (const ParamSpec& spec : parameter_specs(cfg)) {
    const std::string from = starts_with(spec.name, "dec.") ? rename_expert(spec.name, 0, expert) : spec.name;
    const ParamRecord& r = ckpt.at(from);
    out.add(ParamRecord{spec.name, r.taxonomy, r.value});
  }
  return out;
}

Checkpoint replicate_experts(const Checkpoint& single, std::size_t num_experts) {
  const ArchConfig& src = single.config();
  if (src.expert_slots != 1) throw ArgumentError("replicate_experts: source must have one expert slot");
  if (num_experts != src.num_experts) {
    throw ArgumentError("replicate_experts: router has " + std::to_string(src.num_experts) +
                        " outputs, asked for " + std::to_string(num_experts) + " experts");
  }
  ArchConfig cfg = src;
  cfg.expert_slots = static_cast<std::uint32_t>(num_experts);
  Checkpoint out(cfg, single.stage());
  for (const ParamSpec& spec : parameter_specs(cfg)) {
    std::string from = spec.name;
    if (starts_with(spec.name, "dec.")) {
      for (std::size_t e = 0; e < num_experts; ++e) {
        const std::string renamed = rename_expert(spec.name, e, 0);
        if (renamed != spec.name) {
          from = renamed;
          break;
        }
      }
    }
    const ParamRecord& r = single.at(from);
    out.add(ParamRecord{spec.name, r.taxonomy, r.value});
  }
  return out;
}

}  // namespace demoe::net
