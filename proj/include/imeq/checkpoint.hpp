#pragma once

// Checkpoint file format: a one-line JSON manifest mapping tensor name ->
// {shape, dtype, byte_offset}, a newline, then the raw little-endian
// buffers back to back. Offsets are relative to the end of the manifest
// line. Save/load round-trips are bit-exact.

#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "imeq/common.hpp"
#include "imeq/tensor.hpp"

namespace imeq {

namespace checkpoint_detail {

template <class T>
const char* dtype_tag();
template <>
inline const char* dtype_tag<float>() {
  return "f32";
}
template <>
inline const char* dtype_tag<double>() {
  return "f64";
}

}  // namespace checkpoint_detail

template <class T>
void save_checkpoint(
    const std::string& path,
    const std::vector<std::pair<std::string, const TensorT<T>*>>& tensors) {
  static_assert(sizeof(float) == 4 && sizeof(double) == 8);
  nlohmann::json manifest;
  std::size_t offset = 0;
  for (const auto& [name, t] : tensors) {
    manifest[name] = {{"shape", t->shape},
                      {"dtype", checkpoint_detail::dtype_tag<T>()},
                      {"byte_offset", offset}};
    offset += t->numel() * sizeof(T);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << manifest.dump() << '\n';
  for (const auto& [name, t] : tensors)
    out.write(reinterpret_cast<const char*>(t->ptr()),
              static_cast<std::streamsize>(t->numel() * sizeof(T)));
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

// Loads into pre-shaped tensors; names, shapes and dtype must match the
// manifest exactly.
template <class T>
void load_checkpoint(
    const std::string& path,
    const std::vector<std::pair<std::string, TensorT<T>*>>& tensors) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("missing manifest: " + path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad manifest in " + path + ": " + e.what());
  }
  const std::streampos base = in.tellg();
  for (const auto& [name, t] : tensors) {
    if (!manifest.contains(name))
      throw IoError("checkpoint " + path + " lacks tensor '" + name + "'");
    const nlohmann::json& entry = manifest.at(name);
    auto shape = entry.at("shape").get<std::vector<int>>();
    if (shape != t->shape)
      throw IoError("checkpoint tensor '" + name + "' has shape " +
                    shape_str(shape) + ", expected " + shape_str(t->shape));
    if (entry.at("dtype").get<std::string>() !=
        checkpoint_detail::dtype_tag<T>())
      throw IoError("checkpoint tensor '" + name + "' has dtype " +
                    entry.at("dtype").get<std::string>() + ", expected " +
                    checkpoint_detail::dtype_tag<T>());
    in.seekg(base + std::streampos(entry.at("byte_offset").get<std::size_t>()));
    in.read(reinterpret_cast<char*>(t->ptr()),
            static_cast<std::streamsize>(t->numel() * sizeof(T)));
    if (!in) throw IoError("truncated checkpoint: " + path);
  }
}

// Lists the tensor names present in a checkpoint (manifest order).
inline std::vector<std::string> checkpoint_names(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("missing manifest: " + path);
  nlohmann::json manifest = nlohmann::json::parse(line);
  std::vector<std::string> names;
  for (auto it = manifest.begin(); it != manifest.end(); ++it)
    names.push_back(it.key());
  return names;
}

}  // namespace imeq
