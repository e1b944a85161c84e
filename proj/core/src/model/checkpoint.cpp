#include "couple/model/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>

namespace couple::model {

namespace {

using json = nlohmann::ordered_json;
using numerics::Shape;

constexpr std::array<char, 8> kMagic{'C', 'P', 'L', 'K', 'I', 'T', '0', '1'};
constexpr int kFormatVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

json model_json(const CoupleParams& p) {
  const ModelConfig& c = p.config();
  json j;
  j["dim"] = c.dim;
  j["heads"] = c.heads;
  j["max_len"] = c.max_len;
  j["max_tags"] = c.max_tags;
  j["tree"] = c.tree.layers;
  j["top_k"] = c.top_k;
  j["dropout"] = c.dropout;
  j["positions"] = c.positions;
  j["use_content"] = c.use_content;
  j["use_group"] = c.use_group;
  j["tag_count"] = p.tag_count();
  j["domain_count"] = p.domain_count();
  return j;
}

ModelConfig model_from(const json& j) {
  ModelConfig c;
  c.dim = j.at("dim").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.max_tags = j.at("max_tags").get<std::size_t>();
  c.tree.layers = j.at("tree").get<std::vector<std::size_t>>();
  c.top_k = j.at("top_k").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.positions = j.at("positions").get<bool>();
  c.use_content = j.at("use_content").get<bool>();
  c.use_group = j.at("use_group").get<bool>();
  return c;
}

json train_json(const TrainConfig& t) {
  json j;
  j["batch_size"] = t.batch_size;
  j["epochs"] = t.epochs;
  j["max_steps"] = t.max_steps;
  j["lr"] = t.lr;
  j["omega"] = t.omega;
  j["lambda"] = t.lambda;
  j["queue_capacity"] = t.queue_capacity;
  j["in_batch_negatives"] = t.in_batch_negatives;
  j["power_iters"] = t.power_iters;
  j["anneal"] = {{"rate", t.anneal.rate},
                 {"interval", t.anneal.interval},
                 {"floor", t.anneal.floor},
                 {"scale", t.anneal.scale}};
  j["seed"] = t.seed;
  return j;
}

TrainConfig train_from(const json& j) {
  TrainConfig t;
  t.batch_size = j.at("batch_size").get<std::size_t>();
  t.epochs = j.at("epochs").get<std::size_t>();
  t.max_steps = j.at("max_steps").get<std::uint64_t>();
  t.lr = j.at("lr").get<double>();
  t.omega = j.at("omega").get<double>();
  t.lambda = j.at("lambda").get<double>();
  t.queue_capacity = j.at("queue_capacity").get<std::size_t>();
  t.in_batch_negatives = j.at("in_batch_negatives").get<bool>();
  t.power_iters = j.at("power_iters").get<int>();
  const json& a = j.at("anneal");
  t.anneal.rate = a.at("rate").get<double>();
  t.anneal.interval = a.at("interval").get<std::uint64_t>();
  t.anneal.floor = a.at("floor").get<double>();
  t.anneal.scale = a.at("scale").get<double>();
  t.seed = j.at("seed").get<std::uint64_t>();
  return t;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const CoupleParams& p = ck.params;
  if (ck.adam.m.size() != p.size() || ck.adam.v.size() != p.size()) {
    throw ManifestMismatchError("checkpoint: optimizer moments do not match the parameters");
  }
  std::vector<std::pair<std::string, const numerics::Tensor*>> blobs;
  for (std::size_t i = 0; i < p.size(); ++i) blobs.emplace_back("param/" + p.names()[i], &p.tensors()[i]);
  for (std::size_t i = 0; i < p.size(); ++i) blobs.emplace_back("adam.m/" + p.names()[i], &ck.adam.m[i]);
  for (std::size_t i = 0; i < p.size(); ++i) blobs.emplace_back("adam.v/" + p.names()[i], &ck.adam.v[i]);
  std::optional<numerics::Tensor> queue_rows;
  if (!ck.queue.empty()) {
    queue_rows = ck.queue.contents();
    blobs.emplace_back("queue", &*queue_rows);
  }

  json m;
  m["format_version"] = kFormatVersion;
  m["step"] = ck.step;
  m["rng"] = {{"seed", ck.train.seed}, {"step", ck.step}};
  m["model"] = model_json(p);
  m["train"] = train_json(ck.train);
  m["adam"] = {{"step", ck.adam.step},
               {"lr", ck.adam.lr},
               {"beta1", ck.adam.beta1},
               {"beta2", ck.adam.beta2},
               {"epsilon", ck.adam.epsilon}};
  m["queue"] = {{"capacity", ck.queue.capacity()}, {"dim", ck.queue.dim()}, {"fill", ck.queue.size()}};
  json cfg = json::object();
  for (const auto& [k, v] : ck.config) cfg[k] = v;
  m["config"] = cfg;
  json tensors = json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : blobs) {
    tensors[name] = {{"shape", t->shape()}, {"offset", offset}};
    offset += 8 * t->size();
  }
  m["tensors"] = tensors;

  const std::string manifest = m.dump();
  std::string bytes(kMagic.begin(), kMagic.end());
  const auto len = static_cast<std::uint32_t>(manifest.size());
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  bytes += manifest;
  bytes.reserve(bytes.size() + offset);
  for (const auto& blob : blobs) {
    for (double x : blob.second->data()) put_u64(bytes, std::bit_cast<std::uint64_t>(x));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = "checkpoint " + path.string() + ": ";

  if (bytes.size() < kMagic.size() || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw BadMagicError(where + "bad magic bytes (expected CPLKIT01)");
  }
  if (bytes.size() < kMagic.size() + 4) throw TruncatedCheckpointError(where + "truncated header");
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  const std::size_t payload_begin = 12 + static_cast<std::size_t>(len);
  if (bytes.size() < payload_begin) throw TruncatedCheckpointError(where + "truncated manifest");

  json m;
  try {
    m = json::parse(bytes.begin() + 12, bytes.begin() + static_cast<std::ptrdiff_t>(payload_begin));
  } catch (const json::exception& e) {
    throw ManifestMismatchError(where + "unreadable manifest: " + e.what());
  }

  Checkpoint ck;
  try {
    if (m.at("format_version").get<int>() != kFormatVersion) {
      throw ManifestMismatchError(where + "unsupported format_version");
    }
    const json& tensors = m.at("tensors");
    std::uint64_t expected = 0;
    for (const auto& [name, info] : tensors.items()) {
      if (info.at("offset").get<std::uint64_t>() != expected) {
        throw ManifestMismatchError(where + "tensor '" + name + "' is not at the next payload offset");
      }
      expected += 8 * numerics::shape_size(info.at("shape").get<Shape>());
    }
    if (bytes.size() < payload_begin + expected) {
      throw TruncatedCheckpointError(where + "truncated payload (" + std::to_string(bytes.size() - payload_begin) +
                                     " of " + std::to_string(expected) + " bytes)");
    }
    if (bytes.size() > payload_begin + expected) {
      throw ManifestMismatchError(where + "payload is longer than the manifest describes");
    }
    const auto read = [&](const std::string& name) {
      if (!tensors.contains(name)) throw ManifestMismatchError(where + "missing tensor '" + name + "'");
      const json& info = tensors.at(name);
      const Shape shape = info.at("shape").get<Shape>();
      const char* p = bytes.data() + payload_begin + info.at("offset").get<std::uint64_t>();
      std::vector<double> data(numerics::shape_size(shape));
      for (std::size_t i = 0; i < data.size(); ++i) data[i] = std::bit_cast<double>(get_u64(p + 8 * i));
      return numerics::Tensor(shape, std::move(data));
    };

    const json& mj = m.at("model");
    const ModelConfig mc = model_from(mj);
    const auto tag_count = mj.at("tag_count").get<std::size_t>();
    const auto domain_count = mj.at("domain_count").get<std::size_t>();
    const auto layout = CoupleParams::layout(mc, tag_count, domain_count);
    std::vector<std::string> names;
    std::vector<numerics::Tensor> values;
    for (const auto& entry : layout) {
      names.push_back(entry.first);
      values.push_back(read("param/" + entry.first));
    }
    try {
      ck.params = CoupleParams::from_tensors(mc, tag_count, domain_count, names, std::move(values));
    } catch (const ValidationError& e) {
      throw ManifestMismatchError(where + e.what());
    }

    const json& aj = m.at("adam");
    ck.adam.step = aj.at("step").get<std::uint64_t>();
    ck.adam.lr = aj.at("lr").get<double>();
    ck.adam.beta1 = aj.at("beta1").get<double>();
    ck.adam.beta2 = aj.at("beta2").get<double>();
    ck.adam.epsilon = aj.at("epsilon").get<double>();
    for (std::size_t i = 0; i < names.size(); ++i) {
      ck.adam.m.push_back(read("adam.m/" + names[i]));
      ck.adam.v.push_back(read("adam.v/" + names[i]));
      if (ck.adam.m.back().shape() != ck.params.tensors()[i].shape() ||
          ck.adam.v.back().shape() != ck.params.tensors()[i].shape()) {
        throw ManifestMismatchError(where + "optimizer moment shape mismatch for '" + names[i] + "'");
      }
    }

    const json& qj = m.at("queue");
    const auto fill = qj.at("fill").get<std::size_t>();
    std::optional<numerics::Tensor> rows;
    if (fill > 0) {
      rows = read("queue");
      if (rows->rows() != fill) throw ManifestMismatchError(where + "queue fill disagrees with payload");
    }
    ck.queue = NegativeQueue::restore(qj.at("capacity").get<std::size_t>(), qj.at("dim").get<std::size_t>(),
                                      rows ? &*rows : nullptr);
    ck.train = train_from(m.at("train"));
    ck.step = m.at("step").get<std::uint64_t>();
    for (const auto& [k, v] : m.at("config").items()) ck.config[k] = v.get<std::string>();
  } catch (const json::exception& e) {
    throw ManifestMismatchError(where + "malformed manifest: " + e.what());
  }
  return ck;
}

}  // namespace couple::model
