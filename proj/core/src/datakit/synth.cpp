#include "couple/datakit/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

#include "couple/errors.hpp"
#include "couple/numerics/rng.hpp"

namespace couple::datakit {

namespace {

using numerics::make_stream;
using numerics::Stream;

struct Layout {
  std::size_t shared = 0;
  std::size_t specific[2] = {0, 0};

  std::size_t specific_begin(std::size_t domain) const {
    return shared + (domain == 0 ? 0 : specific[0]);
  }
};

Layout layout_of(const SyntheticConfig& c) {
  Layout l;
  l.shared = static_cast<std::size_t>(
      std::llround(c.shared_fraction * static_cast<double>(c.tag_vocab)));
  const std::size_t rest = c.tag_vocab - l.shared;
  l.specific[0] = (rest + 1) / 2;
  l.specific[1] = rest / 2;
  return l;
}

// [begin, end) of block g when `count` entries are cut into `groups` blocks.
std::pair<std::size_t, std::size_t> block(std::size_t g, std::size_t groups, std::size_t count) {
  return {g * count / groups, (g + 1) * count / groups};
}

std::vector<std::size_t> shared_block(const SyntheticConfig& c, const Layout& l, std::size_t g) {
  std::vector<std::size_t> out;
  const auto [b, e] = block(g, c.groups, l.shared);
  for (std::size_t t = b; t < e; ++t) out.push_back(t);
  return out;
}

std::vector<std::size_t> profile_indices(const SyntheticConfig& c, const Layout& l, std::size_t g,
                                         std::size_t domain) {
  auto out = shared_block(c, l, g);
  const auto [b, e] = block(g, c.groups, l.specific[domain]);
  for (std::size_t t = b; t < e; ++t) out.push_back(l.specific_begin(domain) + t);
  return out;
}

std::vector<std::size_t> domain_vocab(const Layout& l, std::size_t domain) {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < l.shared; ++t) out.push_back(t);
  for (std::size_t t = 0; t < l.specific[domain]; ++t) out.push_back(l.specific_begin(domain) + t);
  return out;
}

std::string tag_name(std::size_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "tag%04zu", t);
  return buf;
}

std::string padded(const char* prefix, std::size_t i) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s%05zu", prefix, i);
  return buf;
}

std::pair<std::size_t, std::size_t> per_user_counts(const SyntheticConfig& c) {
  const double total = static_cast<double>(c.interactions_per_user);
  auto target = static_cast<std::size_t>(std::llround(total / (1.0 + c.source_ratio)));
  target = std::clamp<std::size_t>(target, 1, c.interactions_per_user - 1);
  return {c.interactions_per_user - target, target};
}

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& gen) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(gen)];
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError("synthetic config: " + what);
}

}  // namespace

void validate(const SyntheticConfig& c) {
  require(c.groups > 0, "groups must be positive");
  require(c.users_per_group > 0, "users_per_group must be positive");
  require(c.items_per_domain > 0, "items_per_domain must be positive");
  require(c.tag_vocab > 0, "tag_vocab must be positive");
  require(c.tags_per_item > 0, "tags_per_item must be positive");
  require(c.interactions_per_user >= 2, "interactions_per_user must be at least 2");
  require(c.shared_fraction >= 0.0 && c.shared_fraction <= 1.0, "shared_fraction must lie in [0, 1]");
  require(c.noise >= 0.0 && c.noise <= 1.0, "noise must lie in [0, 1]");
  require(c.tag_bias >= 0.0 && c.tag_bias <= 1.0, "tag_bias must lie in [0, 1]");
  require(c.favorite_bias >= 0.0 && c.favorite_bias <= 1.0, "favorite_bias must lie in [0, 1]");
  require(c.source_ratio > 0.0 && std::isfinite(c.source_ratio), "source_ratio must be positive");
  require(c.tag_vocab >= c.groups, "tag_vocab (" + std::to_string(c.tag_vocab) +
                                       ") is smaller than groups (" + std::to_string(c.groups) + ")");
  require(c.items_per_domain >= c.groups, "items_per_domain is smaller than groups");
  const Layout l = layout_of(c);
  for (std::size_t d = 0; d < 2; ++d) {
    require(l.shared + l.specific[d] >= c.tags_per_item,
            "domain " + std::to_string(d) + " vocabulary is smaller than tags_per_item");
    for (std::size_t g = 0; g < c.groups; ++g) {
      require(!profile_indices(c, l, g, d).empty(),
              "group " + std::to_string(g) + " has no preferred tags in domain " + std::to_string(d));
    }
  }
  const auto [n_source, n_target] = per_user_counts(c);
  require(n_source <= c.items_per_domain && n_target <= c.items_per_domain,
          "interactions_per_user exceeds the items available per domain");
}

std::vector<std::string> synthetic_tag_names(const SyntheticConfig& config) {
  std::vector<std::string> out;
  for (std::size_t t = 0; t < config.tag_vocab; ++t) out.push_back(tag_name(t));
  return out;
}

std::vector<std::string> group_profile(const SyntheticConfig& config, std::size_t group,
                                       std::size_t domain) {
  validate(config);
  if (group >= config.groups || domain > 1) throw ValidationError("group_profile: index out of range");
  std::vector<std::string> out;
  for (auto t : profile_indices(config, layout_of(config), group, domain)) out.push_back(tag_name(t));
  return out;
}

SyntheticData synth_generate(const SyntheticConfig& c) {
  validate(c);
  const Layout l = layout_of(c);
  SyntheticData out;

  // items_by[d][g]: catalog indices of group g's items in domain d.
  std::vector<std::vector<std::size_t>> items_by[2];
  std::vector<std::size_t> domain_items[2];
  // Generator tag indices per catalog item. The catalog interns names in
  // first-seen order, as loading a written catalog does.
  std::vector<std::vector<std::size_t>> item_tags;
  auto gen = make_stream(c.seed, Stream::kSynth, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t d = 0; d < 2; ++d) {
    items_by[d].resize(c.groups);
    const auto vocab = domain_vocab(l, d);
    for (std::size_t i = 0; i < c.items_per_domain; ++i) {
      const std::size_t g = i % c.groups;
      const auto profile = profile_indices(c, l, g, d);
      std::vector<std::size_t> tags{pick(profile, gen)};
      while (tags.size() < c.tags_per_item) {
        const bool biased = unit(gen) < c.tag_bias &&
                            std::any_of(profile.begin(), profile.end(), [&](std::size_t t) {
                              return std::find(tags.begin(), tags.end(), t) == tags.end();
                            });
        const std::size_t t = biased ? pick(profile, gen) : pick(vocab, gen);
        if (std::find(tags.begin(), tags.end(), t) == tags.end()) tags.push_back(t);
      }
      std::vector<std::string> names;
      for (auto t : tags) names.push_back(tag_name(t));
      const std::size_t idx = out.catalog.add_item(padded(d == 0 ? "src" : "tgt", i), d, names);
      item_tags.push_back(std::move(tags));
      items_by[d][g].push_back(idx);
      domain_items[d].push_back(idx);
      out.item_group.push_back(g);
    }
  }

  const auto [n_source, n_target] = per_user_counts(c);
  std::vector<bool> used(out.catalog.size(), false);
  const std::size_t n_users = c.groups * c.users_per_group;
  for (std::size_t u = 0; u < n_users; ++u) {
    auto ug = make_stream(c.seed, Stream::kSynth, u + 1);
    const std::size_t g = u % c.groups;
    const std::size_t user = out.log.intern_user(padded("user", u));
    out.user_group.push_back(g);

    auto pool = shared_block(c, l, g);
    if (pool.empty()) pool = profile_indices(c, l, g, 0);
    std::shuffle(pool.begin(), pool.end(), ug);
    pool.resize(std::min(pool.size(), c.favorite_tags));

    std::vector<std::size_t> favored[2];
    for (std::size_t d = 0; d < 2; ++d) {
      for (auto it : items_by[d][g]) {
        const auto& tags = item_tags[it];
        const bool hit = std::any_of(tags.begin(), tags.end(), [&](std::size_t t) {
          return std::find(pool.begin(), pool.end(), t) != pool.end();
        });
        if (hit) favored[d].push_back(it);
      }
    }

    std::vector<std::size_t> domains(n_source, 0);
    domains.insert(domains.end(), n_target, 1);
    std::shuffle(domains.begin(), domains.end(), ug);

    std::vector<std::size_t> chosen;
    std::int64_t ts = std::uniform_int_distribution<std::int64_t>(0, 999'999)(ug);
    for (std::size_t d : domains) {
      const std::vector<std::size_t>* source = &items_by[d][g];
      if (unit(ug) < c.noise) {
        source = &domain_items[d];
      } else if (!favored[d].empty() && unit(ug) < c.favorite_bias) {
        source = &favored[d];
      }
      std::size_t item = 0;
      bool found = false;
      for (int attempt = 0; attempt < 64 && !found; ++attempt) {
        item = pick(*source, ug);
        found = !used[item];
      }
      const std::array<const std::vector<std::size_t>*, 3> fallbacks{source, &items_by[d][g], &domain_items[d]};
      for (const auto* fallback : fallbacks) {
        for (std::size_t k = 0; k < fallback->size() && !found; ++k) {
          item = (*fallback)[k];
          found = !used[item];
        }
      }
      used[item] = true;
      chosen.push_back(item);
      ts += std::uniform_int_distribution<std::int64_t>(1, 3600)(ug);
      out.log.add(user, item, ts);
    }
    for (auto it : chosen) used[it] = false;
  }
  return out;
}

}  // namespace couple::datakit
