#include "couple/model/params.hpp"

#include <cmath>
#include <random>

#include "couple/errors.hpp"
#include "couple/numerics/rng.hpp"

namespace couple::model {

using numerics::Shape;

void ModelConfig::validate() const {
  if (dim == 0) throw ValidationError("model: dim must be positive");
  if (heads == 0) throw ValidationError("model: heads must be positive");
  if (max_len == 0) throw ValidationError("model: max_len must be positive");
  if (max_tags == 0) throw ValidationError("model: max_tags must be positive");
  tree.validate();
  if (top_k == 0 || top_k > tree.leaves()) {
    throw ValidationError("model: top_k must lie in [1, " + std::to_string(tree.leaves()) + "]");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("model: dropout must lie in [0, 1)");
}

std::vector<std::pair<std::string, Shape>> CoupleParams::layout(const ModelConfig& c,
                                                                std::size_t tag_count,
                                                                std::size_t domain_count) {
  c.validate();
  if (tag_count == 0) throw ValidationError("model: tag vocabulary is empty");
  if (domain_count == 0) throw ValidationError("model: domain count is zero");
  const std::size_t d = c.dim;
  std::vector<std::pair<std::string, Shape>> out;
  out.emplace_back("tag_table", Shape{tag_count, d});
  out.emplace_back("domain_table", Shape{domain_count, d});
  if (c.positions) out.emplace_back("position_table", Shape{c.max_len, d});
  for (const char* kind : {"query", "key", "value"}) {
    for (std::size_t h = 0; h < c.heads; ++h) {
      out.emplace_back("attn." + std::string(kind) + "." + std::to_string(h), Shape{d, d});
    }
  }
  out.emplace_back("ln.gain", Shape{d});
  out.emplace_back("ln.bias", Shape{d});
  out.emplace_back("ffn.w1", Shape{d, d});
  out.emplace_back("ffn.b1", Shape{d});
  out.emplace_back("ffn.w2", Shape{d, d});
  out.emplace_back("ffn.b2", Shape{d});
  out.emplace_back("wa.heads", Shape{d, d});
  out.emplace_back("wa.fusion", Shape{d, d});
  if (c.use_content) {
    out.emplace_back("freq.w", Shape{d, d});
    out.emplace_back("freq.b", Shape{d});
  }
  if (c.use_group) {
    for (std::size_t i = 1; i < c.tree.layers.size(); ++i) {
      out.emplace_back("tree.layer" + std::to_string(i), Shape{c.tree.layers[i], d});
    }
  }
  return out;
}

CoupleParams CoupleParams::init(const ModelConfig& config, std::size_t tag_count,
                                std::size_t domain_count, std::uint64_t seed) {
  const auto shapes = layout(config, tag_count, domain_count);
  // Tag rows and the normalized history state both start near unit norm so
  // no fused branch dominates the dot-product logits at step 0.
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(config.dim));
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& [name, shape] = shapes[i];
    Tensor t(shape);
    if (name == "ln.gain") {
      for (double& x : t.data()) x = inv_sqrt_d;
    } else if (shape.size() == 2) {
      double bound = inv_sqrt_d;
      if (name == "tag_table") {
        bound = std::sqrt(3.0) * inv_sqrt_d;
      } else if (name.starts_with("tree.")) {
        // Glorot bound. At 1/sqrt(d) a square slot matrix starts near
        // singular and a tall one far from orthonormal.
        bound = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      }
      auto gen = numerics::make_stream(seed, numerics::Stream::kInit, i);
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& x : t.data()) x = u(gen);
    }
    names.push_back(name);
    tensors.push_back(std::move(t));
  }
  return from_tensors(config, tag_count, domain_count, std::move(names), std::move(tensors));
}

CoupleParams CoupleParams::from_tensors(const ModelConfig& config, std::size_t tag_count,
                                        std::size_t domain_count, std::vector<std::string> names,
                                        std::vector<Tensor> tensors) {
  const auto shapes = layout(config, tag_count, domain_count);
  if (names.size() != shapes.size() || tensors.size() != shapes.size()) {
    throw ValidationError("model parameters: expected " + std::to_string(shapes.size()) + " tensors, got " +
                          std::to_string(tensors.size()));
  }
  CoupleParams p;
  p.config_ = config;
  p.tag_count_ = tag_count;
  p.domain_count_ = domain_count;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (names[i] != shapes[i].first) {
      throw ValidationError("model parameters: expected '" + shapes[i].first + "' at position " +
                            std::to_string(i) + ", got '" + names[i] + "'");
    }
    if (tensors[i].shape() != shapes[i].second) {
      throw ShapeError("model parameter '" + names[i] + "' has shape " +
                       numerics::shape_string(tensors[i].shape()) + ", expected " +
                       numerics::shape_string(shapes[i].second));
    }
    p.index_.emplace(names[i], i);
  }
  p.names_ = std::move(names);
  p.tensors_ = std::move(tensors);
  return p;
}

std::size_t CoupleParams::index(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown model parameter '" + name + "'");
  return it->second;
}

std::vector<Var> record(numerics::Tape& tape, const CoupleParams& params, bool differentiable) {
  std::vector<Var> out;
  out.reserve(params.size());
  for (const Tensor& t : params.tensors()) out.push_back(differentiable ? tape.leaf(t) : tape.constant(t));
  return out;
}

ModelVars bind_vars(const CoupleParams& params, std::span<const Var> vars) {
  if (vars.size() != params.size()) throw ValidationError("bind: handle count does not match parameters");
  const auto at = [&](const std::string& name) { return vars[params.index(name)]; };
  const ModelConfig& c = params.config();
  ModelVars m;
  m.embedding.tag_table = at("tag_table");
  m.embedding.domain_table = at("domain_table");
  if (c.positions) m.positions = at("position_table");
  for (std::size_t h = 0; h < c.heads; ++h) {
    m.attention.query.push_back(at("attn.query." + std::to_string(h)));
    m.attention.key.push_back(at("attn.key." + std::to_string(h)));
    m.attention.value.push_back(at("attn.value." + std::to_string(h)));
  }
  m.attention.ln_gain = at("ln.gain");
  m.attention.ln_bias = at("ln.bias");
  m.attention.ffn_w1 = at("ffn.w1");
  m.attention.ffn_b1 = at("ffn.b1");
  m.attention.ffn_w2 = at("ffn.w2");
  m.attention.ffn_b2 = at("ffn.b2");
  m.wa_heads = at("wa.heads");
  m.wa_fusion = at("wa.fusion");
  if (c.use_content) {
    m.freq_w = at("freq.w");
    m.freq_b = at("freq.b");
  }
  if (c.use_group) {
    for (std::size_t i = 1; i < c.tree.layers.size(); ++i) m.tree.push_back(at("tree.layer" + std::to_string(i)));
  }
  return m;
}

}  // namespace couple::model
