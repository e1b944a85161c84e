#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace couple::datakit {

struct Item {
  std::string id;
  std::size_t domain = 0;
  std::vector<std::size_t> tags;  // dense tag indices, at least one
};

// Items with their tag lists and domain labels. Tag strings are interned to
// dense indices in first-seen order; the domain count is max(domain) + 1.
class ItemCatalog {
 public:
  std::size_t add_item(std::string id, std::size_t domain, const std::vector<std::string>& tags);
  std::size_t add_item_indexed(std::string id, std::size_t domain, std::vector<std::size_t> tags);
  std::size_t intern_tag(const std::string& name);

  std::size_t size() const { return items_.size(); }
  const Item& item(std::size_t index) const { return items_.at(index); }
  const std::vector<Item>& items() const { return items_; }
  std::optional<std::size_t> find(std::string_view id) const;
  std::size_t index_of(std::string_view id) const;  // throws ValidationError

  std::size_t tag_count() const { return tag_names_.size(); }
  std::size_t domain_count() const { return domain_count_; }
  const std::vector<std::string>& tag_names() const { return tag_names_; }
  std::vector<std::size_t> items_in_domain(std::size_t domain) const;

  friend bool operator==(const ItemCatalog& a, const ItemCatalog& b) {
    return a.tag_names_ == b.tag_names_ && a.domain_count_ == b.domain_count_ &&
           a.items_.size() == b.items_.size() && a.same_items(b);
  }

 private:
  bool same_items(const ItemCatalog& other) const;

  std::vector<Item> items_;
  std::unordered_map<std::string, std::size_t> item_index_;
  std::vector<std::string> tag_names_;
  std::unordered_map<std::string, std::size_t> tag_index_;
  std::size_t domain_count_ = 0;
};

struct Event {
  std::size_t user = 0;
  std::size_t item = 0;
  std::int64_t timestamp = 0;
};

// Timestamped user-item events. Users are interned in first-seen order.
class InteractionLog {
 public:
  std::size_t intern_user(const std::string& name);
  void add(std::size_t user, std::size_t item, std::int64_t timestamp);

  std::size_t user_count() const { return user_names_.size(); }
  const std::vector<std::string>& user_names() const { return user_names_; }
  const std::string& user_name(std::size_t u) const { return user_names_.at(u); }
  std::optional<std::size_t> find_user(std::string_view name) const;
  const std::vector<Event>& events() const { return events_; }
  bool empty() const { return events_.empty(); }

  // Same user table, no events.
  InteractionLog with_same_users() const;

  // Per-user event lists sorted by (timestamp, item id).
  std::vector<std::vector<Event>> sequences(const ItemCatalog& catalog) const;

  // Interaction count per catalog item.
  std::vector<std::size_t> item_counts(std::size_t catalog_size) const;

 private:
  std::vector<std::string> user_names_;
  std::unordered_map<std::string, std::size_t> user_index_;
  std::vector<Event> events_;
};

// `item_id<TAB>domain_id<TAB>tag1,tag2,...`; '#' lines are comments.
ItemCatalog load_catalog(const std::filesystem::path& path);
// `comments` are written first, one `# ` line each.
void write_catalog(const ItemCatalog& catalog, const std::filesystem::path& path,
                   const std::vector<std::string>& comments = {});

// `user_id<TAB>item_id<TAB>timestamp` with non-negative integer timestamps.
InteractionLog load_interactions(const std::filesystem::path& path, const ItemCatalog& catalog);
void write_interactions(const InteractionLog& log, const ItemCatalog& catalog,
                        const std::filesystem::path& path,
                        const std::vector<std::string>& comments = {});

}  // namespace couple::datakit
