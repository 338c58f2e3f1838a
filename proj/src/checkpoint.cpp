// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latentformer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "latentformer/error.hpp"

namespace latentformer {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kCheckpointVersion = 1;

void put_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

}  // namespace

void save_checkpoint(const std::string& dir, const Model& model, const json& extra) {
  ensure_dir(dir);
  json params = json::array();
  std::string blob;
  std::size_t offset = 0;
  for (const auto& [name, tensor] : model.params().entries()) {
    params.push_back({{"name", name}, {"shape", tensor.shape()}, {"offset", offset}});
    for (double v : tensor.data()) put_le(blob, v);
    offset += tensor.numel() * sizeof(double);
  }
  json manifest{{"format", kCheckpointFormat},
                {"version", kCheckpointVersion},
                {"model_kind", kModelKindLatentFormer},
                {"model", to_json(model.config())},
                {"blob", kParamsFile},
                {"blob_bytes", blob.size()},
                {"params", params},
                {"run", extra}};
  write_file(fs::path(dir) / kParamsFile, blob);
  write_file(fs::path(dir) / kManifestFile, manifest.dump(2) + "\n");
}

void save_oracle_checkpoint(const std::string& dir, std::size_t modes, std::size_t tau,
                            std::size_t horizon) {
  ensure_dir(dir);
  json manifest{{"format", kCheckpointFormat},
                {"version", kCheckpointVersion},
                {"model_kind", kModelKindOracle},
                {"modes", modes},
                {"tau", tau},
                {"horizon", horizon}};
  write_file(fs::path(dir) / kManifestFile, manifest.dump(2) + "\n");
}

json read_manifest(const std::string& dir) {
  const fs::path path = fs::path(dir) / kManifestFile;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint manifest '" + path.string() + "'");
  json m;
  try {
    m = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (m.value("format", std::string{}) != kCheckpointFormat) {
    throw FormatError("'" + path.string() + "' is not a latentformer checkpoint");
  }
  if (m.value("version", 0) != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + m.value("version", json()).dump());
  }
  return m;
}

void load_params(const std::string& dir, Model& model) {
  const json m = read_manifest(dir);
  const auto& entries = model.params().entries();
  const auto& listed = m.at("params");
  if (listed.size() != entries.size()) {
    throw FormatError("checkpoint lists " + std::to_string(listed.size()) +
                      " tensors, model has " + std::to_string(entries.size()));
  }
  const fs::path blob_path = fs::path(dir) / m.value("blob", std::string(kParamsFile));
  std::ifstream in(blob_path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + blob_path.string() + "'");
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, tensor] = entries[i];
    const auto& e = listed[i];
    if (e.at("name").get<std::string>() != name) {
      throw FormatError("checkpoint tensor " + std::to_string(i) + " is '" +
                        e.at("name").get<std::string>() + "', model expects '" + name + "'");
    }
    if (e.at("shape").get<Shape>() != tensor.shape()) {
      throw FormatError("checkpoint tensor '" + name + "' has shape " +
                        shape_str(e.at("shape").get<Shape>()) + ", model expects " +
                        shape_str(tensor.shape()));
    }
    const std::size_t offset = e.at("offset").get<std::size_t>();
    if (offset + tensor.numel() * sizeof(double) > blob.size()) {
      throw FormatError("checkpoint blob is truncated at tensor '" + name + "'");
    }
    Tensor handle = tensor;
    auto dst = handle.mutable_data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = get_le(blob.data() + offset + j * 8);
  }
}

std::unique_ptr<Model> load_model(const std::string& dir) {
  const json m = read_manifest(dir);
  if (m.value("model_kind", std::string{}) != kModelKindLatentFormer) {
    throw FormatError("checkpoint '" + dir + "' does not hold a LatentFormer model");
  }
  const ModelConfig cfg = model_config_from_json(m.at("model"), ModelConfig{});
  auto model = std::make_unique<Model>(cfg, 0);
  load_params(dir, *model);
  return model;
}

}  // namespace latentformer
