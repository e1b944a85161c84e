#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "couple/datakit/catalog.hpp"

namespace couple::datakit {

// Two-domain generator with planted user groups. Domain 0 is the dense
// source, domain 1 the sparse target.
struct SyntheticConfig {
  std::size_t groups = 4;
  std::size_t users_per_group = 500;
  std::size_t items_per_domain = 1500;
  std::size_t tag_vocab = 200;
  double shared_fraction = 0.6;
  std::size_t tags_per_item = 4;
  std::size_t interactions_per_user = 32;
  double noise = 0.1;
  std::uint64_t seed = 7;

  // Source events per target event.
  double source_ratio = 3.0;
  // Probability that each tag after the first is drawn from the item's group
  // profile rather than the whole domain vocabulary.
  double tag_bias = 0.8;
  // Per-user favourite tags taken from the group's shared block, and the
  // probability a non-noise pick is restricted to items carrying one.
  std::size_t favorite_tags = 2;
  double favorite_bias = 0.7;
};

// Throws ValidationError naming the first offending field.
void validate(const SyntheticConfig& config);

// Tag names, in generator order: shared tags first, then domain 0's specific
// tags, then domain 1's.
std::vector<std::string> synthetic_tag_names(const SyntheticConfig& config);

// Tag names making up group g's preferred block in a domain: block g of the
// shared tags plus block g of that domain's specific tags.
std::vector<std::string> group_profile(const SyntheticConfig& config, std::size_t group,
                                       std::size_t domain);

struct SyntheticData {
  ItemCatalog catalog;
  InteractionLog log;
  std::vector<std::size_t> user_group;  // by user index in `log`
  std::vector<std::size_t> item_group;  // by catalog index
};

SyntheticData synth_generate(const SyntheticConfig& config);

}  // namespace couple::datakit
