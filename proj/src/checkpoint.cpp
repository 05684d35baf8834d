#include "idenbat/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "idenbat/io.hpp"

namespace idenbat {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'I', 'D', 'B', 'T', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& name) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError(name + ": truncated checkpoint");
  return v;
}

}  // namespace

void save_tensors(const TensorMap& tensors, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
      for (Index e : t.shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(e));
      out.write(reinterpret_cast<const char*>(t.ptr()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

TensorMap load_tensors(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError(path.string() + ": not a checkpoint");
  const std::string name = path.string();
  const auto count = get<std::uint32_t>(in, name);
  TensorMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in, name);
    std::string key(len, '\0');
    if (!in.read(key.data(), len)) throw IoError(name + ": truncated checkpoint");
    const auto rank = get<std::uint32_t>(in, name);
    Shape shape;
    for (std::uint32_t a = 0; a < rank; ++a) shape.push_back(static_cast<Index>(get<std::uint64_t>(in, name)));
    Tensor<double> t(shape);
    if (!in.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(double))))
      throw IoError(name + ": truncated checkpoint");
    out.emplace(std::move(key), std::move(t));
  }
  return out;
}

template <typename S>
void export_registry(const Registry<S>& reg, TensorMap& out, const std::string& prefix) {
  for (const auto& [name, var] : reg.params) out[prefix + name] = var->value().template cast<double>();
  for (const auto& [name, st] : reg.norms) {
    const Index C = st->running_mean.size();
    out[prefix + name + ".running_mean"] = Tensor<double>(Shape{C}, st->running_mean.array());
    out[prefix + name + ".running_var"] = Tensor<double>(Shape{C}, st->running_var.array());
  }
}

template <typename S>
void import_registry(Registry<S>& reg, const TensorMap& in, const std::string& prefix) {
  auto fetch = [&](const std::string& key, const Shape& shape) -> const Tensor<double>& {
    auto it = in.find(prefix + key);
    if (it == in.end()) throw IoError("checkpoint lacks tensor " + prefix + key);
    if (it->second.shape() != shape)
      throw ShapeError("checkpoint tensor " + prefix + key + " has shape " +
                       shape_string(it->second.shape()) + ", model expects " + shape_string(shape));
    return it->second;
  };
  for (auto& [name, var] : reg.params) var->value() = fetch(name, var->shape()).template cast<S>();
  for (auto& [name, st] : reg.norms) {
    const Shape s{st->running_mean.size()};
    st->running_mean = fetch(name + ".running_mean", s).data().matrix();
    st->running_var = fetch(name + ".running_var", s).data().matrix();
  }
}

CheckpointFiles CheckpointFiles::from(const fs::path& path) {
  fs::path stem = path;
  if (stem.extension() == ".ckpt" || stem.extension() == ".json") stem.replace_extension();
  return {fs::path(stem.string() + ".ckpt"), fs::path(stem.string() + ".json")};
}

void write_checkpoint(const fs::path& path, const TensorMap& tensors, const nlohmann::json& metadata) {
  const auto files = CheckpointFiles::from(path);
  save_tensors(tensors, files.tensors);
  std::ofstream out(files.metadata);
  if (!out) throw IoError("cannot write " + files.metadata.string());
  out << metadata.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + files.metadata.string());
}

std::pair<TensorMap, nlohmann::json> read_checkpoint(const fs::path& path) {
  const auto files = CheckpointFiles::from(path);
  std::ifstream in(files.metadata);
  if (!in) throw IoError("cannot open checkpoint metadata " + files.metadata.string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(files.metadata.string() + ": " + e.what());
  }
  return {load_tensors(files.tensors), std::move(meta)};
}

template void export_registry(const Registry<float>&, TensorMap&, const std::string&);
template void export_registry(const Registry<double>&, TensorMap&, const std::string&);
template void import_registry(Registry<float>&, const TensorMap&, const std::string&);
template void import_registry(Registry<double>&, const TensorMap&, const std::string&);

}  // namespace idenbat
