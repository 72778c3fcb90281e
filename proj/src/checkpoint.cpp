// SPDX-License-Identifier: Apache-2.0
#include "deltaspike/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "deltaspike/error.hpp"
#include "deltaspike/learn.hpp"
#include "params.hpp"

namespace deltaspike::checkpoint {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'D', 'S', 'P', 'K'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string32(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& in, const std::string& path) : in_(in), path_(path) {}

  template <typename T>
  T get() {
    T v{};
    read(&v, sizeof(T));
    return v;
  }
  std::string string(std::uint64_t n) {
    if (n > (1ULL << 32)) throw DataError(path_ + ": implausible string length");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  void read(void* dst, std::uint64_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in_) throw DataError(path_ + ": truncated container");
  }

 private:
  std::istream& in_;
  const std::string& path_;
};

}  // namespace

const Tensor* Container::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.tensor;
  }
  return nullptr;
}

void write_container(const std::string& path, const Container& c) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(tmp, "cannot open for writing");
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kFormatVersion);
    put_string32(out, c.kind);
    put<std::uint64_t>(out, c.metadata.size());
    out.write(c.metadata.data(), static_cast<std::streamsize>(c.metadata.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(c.tensors.size()));
    for (const auto& t : c.tensors) {
      put_string32(out, t.name);
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.tensor.rank()));
      for (std::size_t d : t.tensor.shape()) put<std::uint64_t>(out, d);
      out.write(reinterpret_cast<const char*>(t.tensor.data()),
                static_cast<std::streamsize>(t.tensor.size() * sizeof(double)));
    }
    if (!out) throw IoError(tmp, "write failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw IoError(path, "cannot move container into place");
  }
}

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open");
  Reader r(in, path);
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw DataError(path + ": bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion) {
    throw DataError(path + ": unsupported container version " + std::to_string(version));
  }
  Container c;
  c.kind = r.string(r.get<std::uint32_t>());
  c.metadata = r.string(r.get<std::uint64_t>());
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.string(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw DataError(path + ": implausible tensor rank");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    const std::size_t n = Tensor::count(shape);
    if (n > (1ULL << 31)) throw DataError(path + ": implausible tensor size");
    std::vector<double> values(n);
    r.read(values.data(), n * sizeof(double));
    t.tensor = Tensor(std::move(shape), std::move(values));
    c.tensors.push_back(std::move(t));
  }
  return c;
}

void save_checkpoint(const std::string& path, const net::ModelConfig& model,
                     const net::NetworkParams& params, const std::string& extra) {
  Container c;
  c.kind = "checkpoint";
  nlohmann::json meta;
  meta["model"] = nlohmann::json::parse(net::to_json(model));
  meta["extra"] = nlohmann::json::parse(extra);
  c.metadata = meta.dump();
  for (const auto& slot : learn::detail::parameter_spans(params)) {
    c.tensors.push_back(
        {slot.name, Tensor(slot.shape, std::vector<double>(slot.values.begin(), slot.values.end()))});
  }
  write_container(path, c);
}

Checkpoint load_checkpoint(const std::string& path) {
  const Container c = read_container(path);
  if (c.kind != "checkpoint") throw DataError(path + ": not a checkpoint (" + c.kind + ")");
  Checkpoint ck;
  try {
    const auto meta = nlohmann::json::parse(c.metadata);
    ck.model = net::model_config_from_json(meta.at("model").dump());
    ck.extra = meta.value("extra", nlohmann::json::object()).dump();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad metadata: " + e.what());
  }
  ck.params = net::init_network(ck.model, 0);
  for (auto& slot : learn::detail::parameter_spans(ck.params)) {
    const Tensor* t = c.find(slot.name);
    if (!t) throw DataError(path + ": missing tensor " + slot.name);
    if (t->shape() != slot.shape) {
      throw DataError(path + ": tensor " + slot.name + " is " +
                      shape_string(t->shape()) + ", model expects " +
                      shape_string(slot.shape));
    }
    std::copy(t->values().begin(), t->values().end(), slot.values.begin());
  }
  return ck;
}

}  // namespace deltaspike::checkpoint
