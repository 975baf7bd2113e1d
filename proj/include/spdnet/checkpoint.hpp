#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "spdnet/layers.hpp"
#include "spdnet/serialize.hpp"

namespace spdnet {

// ---------------------------------------------------------------------------
// Checkpoint format: 4-byte magic, u64 header length, JSON header (network
// shape, hyperparameters, seed, epoch, blob table), then the parameter blobs
// as raw little-endian float64 in declaration order. Blob offsets in the
// header are relative to the start of the blob section.
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[4] = {'S', 'P', 'D', 'C'};

struct CheckpointMeta {
  std::uint64_t seed = 0;
  int epoch = 0;
  double lr = 0.0;
  double momentum = 0.0;
};

namespace detail {

struct BlobRef {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

/// Parameter blobs in declaration order: per block W, then (G, running mean)
/// when RBN is on; finally the head weight and bias.
inline std::vector<BlobRef> blob_layout(const NetworkSpec& spec) {
  std::vector<BlobRef> blobs;
  for (Eigen::Index l = 0; l < spec.depth(); ++l) {
    const std::string tag = std::to_string(l);
    blobs.push_back({"bimap_" + tag, spec.dims[static_cast<std::size_t>(l)],
                     spec.dims[static_cast<std::size_t>(l) + 1]});
    if (spec.use_rbn) {
      const Eigen::Index n = spec.dims[static_cast<std::size_t>(l) + 1];
      blobs.push_back({"rbn_bias_" + tag, n, n});
      blobs.push_back({"rbn_running_mean_" + tag, n, n});
    }
  }
  blobs.push_back({"head_weight", spec.num_classes, spec.feature_dim()});
  blobs.push_back({"head_bias", spec.num_classes, 1});
  return blobs;
}

inline void append_matrix_blob(std::string& bytes, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) append_f64_le(bytes, m(i, j));
  }
}

inline Matrix read_matrix_blob(const unsigned char* p, Eigen::Index rows,
                               Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      m(i, j) = read_f64_le(p + static_cast<std::uint64_t>(i * cols + j) * 8);
    }
  }
  return m;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Network& net,
                            const CheckpointMeta& meta) {
  const NetworkSpec& spec = net.spec();
  const std::vector<detail::BlobRef> layout = detail::blob_layout(spec);

  std::string blob_bytes;
  nlohmann::json blob_table = nlohmann::json::array();
  std::size_t offset = 0;
  std::size_t next = 0;
  auto put = [&](const Matrix& m) {
    const detail::BlobRef& ref = layout[next++];
    nlohmann::json entry;
    entry["name"] = ref.name;
    entry["rows"] = ref.rows;
    entry["cols"] = ref.cols;
    entry["offset"] = offset;
    entry["bytes"] = static_cast<std::size_t>(ref.rows * ref.cols) * 8;
    blob_table.push_back(entry);
    detail::append_matrix_blob(blob_bytes, m);
    offset = blob_bytes.size();
  };
  for (Eigen::Index l = 0; l < spec.depth(); ++l) {
    const std::size_t li = static_cast<std::size_t>(l);
    put(net.bimap_layers()[li].weight());
    if (spec.use_rbn) {
      put(net.rbn_layers()[li].bias().mat());
      put(net.rbn_layers()[li].running_mean().mat());
    }
  }
  put(net.head().weight());
  put(Matrix(net.head().bias()));

  nlohmann::json header;
  header["version"] = 1;
  header["dims"] = spec.dims;
  header["num_classes"] = spec.num_classes;
  header["use_rbn"] = spec.use_rbn;
  header["reeig_eps"] = spec.reeig_eps;
  header["eta"] = spec.eta;
  header["karcher_max_iters"] = spec.karcher.max_iters;
  header["karcher_step_tol"] = spec.karcher.step_tol;
  header["rbn_unroll"] = spec.rbn_unroll;
  header["seed"] = meta.seed;
  header["epoch"] = meta.epoch;
  header["lr"] = meta.lr;
  header["momentum"] = meta.momentum;
  header["blobs"] = blob_table;
  const std::string header_bytes = header.dump();

  std::string bytes(kCheckpointMagic, 4);
  detail::append_u64_le(bytes, header_bytes.size());
  bytes += header_bytes;
  bytes += blob_bytes;
  write_file_bytes(path, bytes);
}

struct LoadedCheckpoint {
  Network net;
  CheckpointMeta meta;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.size() < 12) throw FormatError(path + ": truncated header", bytes.size());
  if (bytes.compare(0, 4, kCheckpointMagic, 4) != 0) {
    throw FormatError(path + ": bad magic", 0);
  }
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t header_len = detail::read_u64_le(raw + 4);
  if (12 + header_len > bytes.size()) {
    throw FormatError(path + ": header extends past end of file", bytes.size());
  }

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(12, header_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": header: " + std::string(e.what()),
                      12 + (e.byte > 0 ? e.byte - 1 : 0));
  }

  NetworkSpec spec;
  CheckpointMeta meta;
  std::vector<nlohmann::json> blob_table;
  try {
    if (header.at("version").get<int>() != 1) {
      throw FormatError(path + ": unsupported version", 12);
    }
    spec.dims = header.at("dims").get<std::vector<Eigen::Index>>();
    spec.num_classes = header.at("num_classes").get<Eigen::Index>();
    spec.use_rbn = header.at("use_rbn").get<bool>();
    spec.reeig_eps = header.at("reeig_eps").get<double>();
    spec.eta = header.at("eta").get<double>();
    spec.karcher.max_iters = header.at("karcher_max_iters").get<int>();
    spec.karcher.step_tol = header.at("karcher_step_tol").get<double>();
    spec.rbn_unroll = header.at("rbn_unroll").get<int>();
    meta.seed = header.at("seed").get<std::uint64_t>();
    meta.epoch = header.at("epoch").get<int>();
    meta.lr = header.at("lr").get<double>();
    meta.momentum = header.at("momentum").get<double>();
    for (const auto& e : header.at("blobs")) blob_table.push_back(e);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": header: " + std::string(e.what()), 12);
  }

  try {
    spec.validate();
  } catch (const Error& e) {
    throw FormatError(path + ": header: " + std::string(e.what()), 12);
  }

  // The blob table must describe exactly the expected layout.
  const std::vector<detail::BlobRef> layout = detail::blob_layout(spec);
  if (blob_table.size() != layout.size()) {
    throw FormatError(path + ": blob table has " + std::to_string(blob_table.size()) +
                          " entries, expected " + std::to_string(layout.size()),
                      12);
  }
  const std::size_t blob_start = 12 + header_len;
  std::size_t expect_offset = 0;
  std::vector<Matrix> blobs;
  try {
    for (std::size_t b = 0; b < layout.size(); ++b) {
      const detail::BlobRef& ref = layout[b];
      const nlohmann::json& entry = blob_table[b];
      const std::size_t nbytes = static_cast<std::size_t>(ref.rows * ref.cols) * 8;
      if (entry.at("name").get<std::string>() != ref.name ||
          entry.at("rows").get<Eigen::Index>() != ref.rows ||
          entry.at("cols").get<Eigen::Index>() != ref.cols ||
          entry.at("offset").get<std::size_t>() != expect_offset ||
          entry.at("bytes").get<std::size_t>() != nbytes) {
        throw FormatError(path + ": blob table entry '" + ref.name +
                              "' inconsistent with network shape",
                          12);
      }
      if (blob_start + expect_offset + nbytes > bytes.size()) {
        throw FormatError(path + ": blob '" + ref.name + "' extends past end of file",
                          bytes.size());
      }
      blobs.push_back(detail::read_matrix_blob(raw + blob_start + expect_offset,
                                               ref.rows, ref.cols));
      if (!blobs.back().allFinite()) {
        throw FormatError(path + ": blob '" + ref.name + "' has non-finite entries",
                          blob_start + expect_offset);
      }
      expect_offset += nbytes;
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": blob table: " + std::string(e.what()), 12);
  }
  if (blob_start + expect_offset != bytes.size()) {
    throw FormatError(path + ": trailing bytes after blob section",
                      blob_start + expect_offset);
  }

  LoadedCheckpoint out{Network(spec, meta.seed), meta};
  std::size_t b = 0;
  try {
    for (Eigen::Index l = 0; l < spec.depth(); ++l) {
      const std::size_t li = static_cast<std::size_t>(l);
      out.net.bimap_layers()[li].set_weight(blobs[b++]);
      if (spec.use_rbn) {
        out.net.rbn_layers()[li].set_bias(SPDMatrix(SymMatrix(blobs[b++])));
        out.net.rbn_layers()[li].set_running_mean(SPDMatrix(SymMatrix(blobs[b++])));
      }
    }
    out.net.head().set_params(blobs[b], Vector(blobs[b + 1].col(0)));
  } catch (const Error& e) {
    throw FormatError(path + ": parameter blob rejected: " + std::string(e.what()),
                      blob_start);
  }
  return out;
}

}  // namespace spdnet
