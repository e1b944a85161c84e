#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "couple/encoder/encoder.hpp"
#include "couple/memtree/memtree.hpp"
#include "couple/numerics/tape.hpp"

namespace couple::model {

using numerics::Tensor;
using numerics::Var;

struct ModelConfig {
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t max_len = 5;    // l
  std::size_t max_tags = 15;  // n
  memtree::TreeShape tree;    // {1, 32, 512}
  std::size_t top_k = 8;
  double dropout = 0.2;
  bool positions = true;
  // Branch switches for ablations; the history branch is always on.
  bool use_content = true;
  bool use_group = true;

  void validate() const;
};

// Every learnable array of the model under a unique name, in a fixed order.
class CoupleParams {
 public:
  CoupleParams() = default;

  // Uniform(-1/sqrt(d), 1/sqrt(d)) for projections and the domain and
  // position tables; uniform(-sqrt(3/d), sqrt(3/d)) for tag rows; Glorot
  // uniform sqrt(6/(rows+d)) for tree slots; layer norm gain 1/sqrt(d) and all
  // biases 0.
  static CoupleParams init(const ModelConfig& config, std::size_t tag_count,
                           std::size_t domain_count, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::size_t tag_count() const { return tag_count_; }
  std::size_t domain_count() const { return domain_count_; }

  std::size_t size() const { return tensors_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index(const std::string& name) const;
  const Tensor& get(const std::string& name) const { return tensors_[index(name)]; }
  Tensor& get(const std::string& name) { return tensors_[index(name)]; }

  // Expected names and shapes for a configuration, in storage order.
  static std::vector<std::pair<std::string, numerics::Shape>> layout(const ModelConfig& config,
                                                                     std::size_t tag_count,
                                                                     std::size_t domain_count);
  // Rebuilds from stored tensors, checking them against layout().
  static CoupleParams from_tensors(const ModelConfig& config, std::size_t tag_count,
                                   std::size_t domain_count, std::vector<std::string> names,
                                   std::vector<Tensor> tensors);

 private:
  ModelConfig config_;
  std::size_t tag_count_ = 0;
  std::size_t domain_count_ = 0;
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Parameter handles on one tape, grouped by component.
struct ModelVars {
  encoder::EmbeddingVars embedding;
  std::optional<Var> positions;
  encoder::AttentionVars attention;
  Var wa_heads;
  Var wa_fusion;
  std::optional<Var> freq_w, freq_b;
  std::vector<Var> tree;  // slot matrices, root excluded
};

// Records every parameter on the tape (as leaves or constants) in storage order.
std::vector<Var> record(numerics::Tape& tape, const CoupleParams& params, bool differentiable);

// Groups handles given in storage order.
ModelVars bind_vars(const CoupleParams& params, std::span<const Var> vars);

}  // namespace couple::model
