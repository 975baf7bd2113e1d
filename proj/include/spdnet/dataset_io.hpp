#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "spdnet/data.hpp"
#include "spdnet/serialize.hpp"
#include "spdnet/symfun.hpp"

namespace spdnet {

// ---------------------------------------------------------------------------
// Dataset directory format: manifest.json describing both splits plus one
// little-endian float64 blob per split (row-major n x n per item). Loading
// validates sizes, symmetry and definiteness, and reports malformed content
// as FormatError with the byte position inside the offending file.
// ---------------------------------------------------------------------------

struct Dataset {
  Eigen::Index dim = 0;
  int num_classes = 0;
  SPDBatch train;
  SPDBatch test;
  nlohmann::json generator;  // provenance of synthetic data; null otherwise
};

namespace detail {

inline std::string batch_blob(const SPDBatch& batch, Eigen::Index dim) {
  std::string bytes;
  bytes.reserve(batch.size() * static_cast<std::size_t>(dim * dim) * 8);
  for (const SPDMatrix& p : batch.items) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      for (Eigen::Index j = 0; j < dim; ++j) append_f64_le(bytes, p(i, j));
    }
  }
  return bytes;
}

inline std::vector<int> json_int_list(const nlohmann::json& j) {
  std::vector<int> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(v.get<int>());
  return out;
}

inline SPDBatch parse_batch_blob(const std::string& bytes, const std::string& file,
                                 Eigen::Index dim, std::size_t count,
                                 std::vector<int> labels) {
  const std::size_t item_bytes = static_cast<std::size_t>(dim * dim) * 8;
  if (bytes.size() != count * item_bytes) {
    throw FormatError(file + ": blob holds " + std::to_string(bytes.size()) +
                          " bytes, manifest expects " + std::to_string(count * item_bytes),
                      bytes.size());
  }
  SPDBatch batch;
  batch.items.reserve(count);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t k = 0; k < count; ++k) {
    const std::uint64_t item_off = k * item_bytes;
    Matrix m(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      for (Eigen::Index j = 0; j < dim; ++j) {
        m(i, j) = read_f64_le(p + item_off + static_cast<std::uint64_t>(i * dim + j) * 8);
      }
    }
    if (!m.allFinite()) {
      throw FormatError(file + ": item " + std::to_string(k) + " has non-finite entries",
                        item_off);
    }
    // Items are written symmetrized, so any asymmetry means corruption.
    if ((m.array() != m.transpose().array()).any()) {
      throw FormatError(file + ": item " + std::to_string(k) + " is not symmetric",
                        item_off);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success || !(es.eigenvalues()(0) > 0.0)) {
      throw FormatError(file + ": item " + std::to_string(k) + " is not positive definite",
                        item_off);
    }
    batch.items.emplace_back(SymMatrix(m));
  }
  batch.labels = std::move(labels);
  return batch;
}

inline std::vector<int> class_counts(const std::vector<int>& labels, int num_classes) {
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) counts[static_cast<std::size_t>(y)]++;
  return counts;
}

}  // namespace detail

inline void save_dataset(const Dataset& ds, const std::string& dir) {
  if (ds.dim < 1) throw InvalidInput("save_dataset: dim must be >= 1");
  if (ds.num_classes < 1) throw InvalidInput("save_dataset: num_classes must be >= 1");
  ds.train.validate(ds.num_classes);
  ds.test.validate(ds.num_classes);
  if (ds.train.dim() != ds.dim || ds.test.dim() != ds.dim) {
    throw InvalidInput("save_dataset: split dimension differs from dataset dim");
  }
  if (!ds.train.has_labels() || !ds.test.has_labels()) {
    throw InvalidInput("save_dataset: both splits need labels");
  }

  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["dim"] = ds.dim;
  manifest["num_classes"] = ds.num_classes;
  manifest["generator"] = ds.generator;

  const struct {
    const char* name;
    const SPDBatch& batch;
  } splits[] = {{"train", ds.train}, {"test", ds.test}};
  for (const auto& s : splits) {
    const std::string file = std::string(s.name) + ".f64";
    const std::string blob = detail::batch_blob(s.batch, ds.dim);
    write_file_bytes((std::filesystem::path(dir) / file).string(), blob);
    nlohmann::json entry;
    entry["file"] = file;
    entry["count"] = s.batch.size();
    entry["bytes"] = blob.size();
    entry["labels"] = s.batch.labels;
    entry["class_counts"] = detail::class_counts(s.batch.labels, ds.num_classes);
    manifest["splits"][s.name] = entry;
  }
  write_file_bytes((std::filesystem::path(dir) / "manifest.json").string(),
                   manifest.dump(2) + "\n");
}

inline Dataset load_dataset(const std::string& dir) {
  const std::string manifest_path = (std::filesystem::path(dir) / "manifest.json").string();
  const std::string manifest_bytes = read_file_bytes(manifest_path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("manifest.json: " + std::string(e.what()),
                      e.byte > 0 ? e.byte - 1 : 0);
  }

  Dataset ds;
  try {
    if (manifest.at("version").get<int>() != 1) {
      throw FormatError("manifest.json: unsupported version", 0);
    }
    ds.dim = manifest.at("dim").get<Eigen::Index>();
    ds.num_classes = manifest.at("num_classes").get<int>();
    if (ds.dim < 1 || ds.num_classes < 1) {
      throw FormatError("manifest.json: non-positive dim or num_classes", 0);
    }
    ds.generator = manifest.value("generator", nlohmann::json());

    const struct {
      const char* name;
      SPDBatch& batch;
    } splits[] = {{"train", ds.train}, {"test", ds.test}};
    for (const auto& s : splits) {
      const nlohmann::json& entry = manifest.at("splits").at(s.name);
      const std::string file = entry.at("file").get<std::string>();
      const auto count = entry.at("count").get<std::size_t>();
      const auto bytes = entry.at("bytes").get<std::size_t>();
      if (bytes != count * static_cast<std::size_t>(ds.dim * ds.dim) * 8) {
        throw FormatError("manifest.json: split '" + std::string(s.name) +
                              "' byte count inconsistent with count x dim^2 x 8",
                          0);
      }
      std::vector<int> labels = detail::json_int_list(entry.at("labels"));
      if (labels.size() != count) {
        throw FormatError("manifest.json: split '" + std::string(s.name) +
                              "' label count differs from item count",
                          0);
      }
      for (int y : labels) {
        if (y < 0 || y >= ds.num_classes) {
          throw FormatError("manifest.json: label out of range in split '" +
                                std::string(s.name) + "'",
                            0);
        }
      }
      const std::string blob =
          read_file_bytes((std::filesystem::path(dir) / file).string());
      s.batch = detail::parse_batch_blob(blob, file, ds.dim, count, std::move(labels));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()), 0);
  }
  return ds;
}

}  // namespace spdnet
