#include "couple/datakit/catalog.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>

#include "couple/errors.hpp"

namespace couple::datakit {

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <class Int>
bool parse_int(std::string_view s, Int& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, out);
  return res.ec == std::errc() && res.ptr == end;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

[[noreturn]] void parse_fail(const std::filesystem::path& path, std::size_t line,
                             const std::string& what) {
  throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + what);
}

bool skippable(std::string_view line) {
  const auto t = trim(line);
  return t.empty() || t.front() == '#';
}

}  // namespace

std::size_t ItemCatalog::intern_tag(const std::string& name) {
  const auto [it, inserted] = tag_index_.try_emplace(name, tag_names_.size());
  if (inserted) tag_names_.push_back(name);
  return it->second;
}

std::size_t ItemCatalog::add_item(std::string id, std::size_t domain,
                                  const std::vector<std::string>& tags) {
  if (item_index_.count(id)) throw ValidationError("duplicate item id '" + id + "'");
  std::vector<std::size_t> idx;
  idx.reserve(tags.size());
  for (const auto& t : tags) idx.push_back(intern_tag(t));
  return add_item_indexed(std::move(id), domain, std::move(idx));
}

std::size_t ItemCatalog::add_item_indexed(std::string id, std::size_t domain,
                                          std::vector<std::size_t> tags) {
  if (tags.empty()) throw ValidationError("item '" + id + "' has an empty tag list");
  for (auto t : tags) {
    if (t >= tag_names_.size()) {
      throw ValidationError("item '" + id + "' references unknown tag index " + std::to_string(t));
    }
  }
  if (item_index_.count(id)) throw ValidationError("duplicate item id '" + id + "'");
  item_index_.emplace(id, items_.size());
  items_.push_back(Item{std::move(id), domain, std::move(tags)});
  domain_count_ = std::max(domain_count_, domain + 1);
  return items_.size() - 1;
}

std::optional<std::size_t> ItemCatalog::find(std::string_view id) const {
  const auto it = item_index_.find(std::string(id));
  if (it == item_index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ItemCatalog::index_of(std::string_view id) const {
  const auto found = find(id);
  if (!found) throw ValidationError("unknown item id '" + std::string(id) + "'");
  return *found;
}

std::vector<std::size_t> ItemCatalog::items_in_domain(std::size_t domain) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].domain == domain) out.push_back(i);
  }
  return out;
}

bool ItemCatalog::same_items(const ItemCatalog& other) const {
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const Item& a = items_[i];
    const Item& b = other.items_[i];
    if (a.id != b.id || a.domain != b.domain || a.tags != b.tags) return false;
  }
  return true;
}

std::size_t InteractionLog::intern_user(const std::string& name) {
  const auto [it, inserted] = user_index_.try_emplace(name, user_names_.size());
  if (inserted) user_names_.push_back(name);
  return it->second;
}

void InteractionLog::add(std::size_t user, std::size_t item, std::int64_t timestamp) {
  if (user >= user_names_.size()) throw ValidationError("event for unknown user index");
  events_.push_back(Event{user, item, timestamp});
}

std::optional<std::size_t> InteractionLog::find_user(std::string_view name) const {
  const auto it = user_index_.find(std::string(name));
  if (it == user_index_.end()) return std::nullopt;
  return it->second;
}

InteractionLog InteractionLog::with_same_users() const {
  InteractionLog out;
  out.user_names_ = user_names_;
  out.user_index_ = user_index_;
  return out;
}

std::vector<std::vector<Event>> InteractionLog::sequences(const ItemCatalog& catalog) const {
  std::vector<std::vector<Event>> seq(user_names_.size());
  for (const Event& e : events_) seq[e.user].push_back(e);
  for (auto& s : seq) {
    std::stable_sort(s.begin(), s.end(), [&](const Event& a, const Event& b) {
      if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
      return catalog.item(a.item).id < catalog.item(b.item).id;
    });
  }
  return seq;
}

std::vector<std::size_t> InteractionLog::item_counts(std::size_t catalog_size) const {
  std::vector<std::size_t> counts(catalog_size, 0);
  for (const Event& e : events_) ++counts.at(e.item);
  return counts;
}

ItemCatalog load_catalog(const std::filesystem::path& path) {
  auto in = open_input(path);
  ItemCatalog catalog;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skippable(line)) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 3) {
      parse_fail(path, lineno, "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    }
    const std::string id(trim(fields[0]));
    if (id.empty()) parse_fail(path, lineno, "empty item id");
    std::size_t domain = 0;
    if (!parse_int(fields[1], domain)) {
      parse_fail(path, lineno, "malformed domain id '" + std::string(fields[1]) + "'");
    }
    std::vector<std::string> tags;
    for (auto t : split(fields[2], ',')) {
      t = trim(t);
      if (!t.empty()) tags.emplace_back(t);
    }
    if (tags.empty()) parse_fail(path, lineno, "item '" + id + "' has an empty tag list");
    if (catalog.find(id)) parse_fail(path, lineno, "duplicate item id '" + id + "'");
    catalog.add_item(id, domain, tags);
  }
  return catalog;
}

void write_catalog(const ItemCatalog& catalog, const std::filesystem::path& path,
                   const std::vector<std::string>& comments) {
  auto out = open_output(path);
  for (const auto& c : comments) out << "# " << c << '\n';
  for (const Item& item : catalog.items()) {
    out << item.id << '\t' << item.domain << '\t';
    for (std::size_t i = 0; i < item.tags.size(); ++i) {
      if (i) out << ',';
      out << catalog.tag_names()[item.tags[i]];
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

InteractionLog load_interactions(const std::filesystem::path& path, const ItemCatalog& catalog) {
  auto in = open_input(path);
  InteractionLog log;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skippable(line)) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 3) {
      parse_fail(path, lineno, "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    }
    const std::string user(trim(fields[0]));
    const std::string item(trim(fields[1]));
    if (user.empty()) parse_fail(path, lineno, "empty user id");
    const auto idx = catalog.find(item);
    if (!idx) parse_fail(path, lineno, "unknown item id '" + item + "'");
    std::int64_t ts = 0;
    if (!parse_int(fields[2], ts) || ts < 0) {
      parse_fail(path, lineno, "malformed timestamp '" + std::string(fields[2]) + "'");
    }
    log.add(log.intern_user(user), *idx, ts);
  }
  return log;
}

void write_interactions(const InteractionLog& log, const ItemCatalog& catalog,
                        const std::filesystem::path& path,
                        const std::vector<std::string>& comments) {
  auto out = open_output(path);
  for (const auto& c : comments) out << "# " << c << '\n';
  for (const Event& e : log.events()) {
    out << log.user_name(e.user) << '\t' << catalog.item(e.item).id << '\t' << e.timestamp << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace couple::datakit
