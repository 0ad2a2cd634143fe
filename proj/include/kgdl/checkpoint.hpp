#pragma once

#include "kgdl/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace kgdl {

/// Model checkpoint: magic "KGDL1", little-endian u64 manifest length, JSON
/// manifest (meta + tensor table), then row-major little-endian f64 payload.
namespace checkpoint {

constexpr char kMagic[5] = {'K', 'G', 'D', 'L', '1'};

namespace detail {

struct TensorRef {
  std::string name;
  const Mat* mat = nullptr;
  const Vec* vec = nullptr;
};

inline std::vector<TensorRef> tensor_table(const ModelParams& p) {
  return {
      {"embedding.vectors", &p.embedding.vectors, nullptr},
      {"embedding.biases", nullptr, &p.embedding.biases},
      {"encoder.W", &p.enc.W, nullptr},
      {"encoder.U", &p.enc.U, nullptr},
      {"encoder.b", nullptr, &p.enc.b},
      {"decoder.W", &p.dec.W, nullptr},
      {"decoder.U", &p.dec.U, nullptr},
      {"decoder.b", nullptr, &p.dec.b},
      {"attention.W", &p.W_att, nullptr},
      {"attention.v", nullptr, &p.v_att},
      {"output.W", &p.W_out, nullptr},
      {"output.b", nullptr, &p.b_out},
      {"intent.W_in", &p.W_int_in, nullptr},
      {"intent.W_out", &p.W_int_out, nullptr},
  };
}

inline void append_row_major(std::string& payload, const Mat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      char buf[sizeof(double)];
      std::memcpy(buf, &v, sizeof(double));
      payload.append(buf, sizeof(double));
    }
}

}  // namespace detail

inline void save(const ModelParams& p, const std::string& path) {
  p.check_consistent();
  nlohmann::json manifest;
  manifest["meta"] = {{"hidden", p.hidden},
                      {"n_intents", p.n_intents},
                      {"vocab_size", p.vocab_size()},
                      {"dim", p.embedding.dim()},
                      {"intent_per_step", p.intent_per_step}};
  nlohmann::json tensors = nlohmann::json::array();
  std::string payload;
  for (const auto& t : detail::tensor_table(p)) {
    const auto offset = static_cast<std::uint64_t>(payload.size());
    if (t.mat) {
      tensors.push_back({{"name", t.name},
                         {"rows", t.mat->rows()},
                         {"cols", t.mat->cols()},
                         {"offset", offset}});
      detail::append_row_major(payload, *t.mat);
    } else {
      tensors.push_back(
          {{"name", t.name}, {"rows", t.vec->size()}, {"cols", 1}, {"offset", offset}});
      for (Eigen::Index i = 0; i < t.vec->size(); ++i) {
        const double v = (*t.vec)(i);
        char buf[sizeof(double)];
        std::memcpy(buf, &v, sizeof(double));
        payload.append(buf, sizeof(double));
      }
    }
  }
  manifest["tensors"] = std::move(tensors);
  const std::string mtext = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArtifactError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof kMagic);
  const auto mlen = static_cast<std::uint64_t>(mtext.size());
  char lenbuf[8];
  for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<char>((mlen >> (8 * i)) & 0xff);
  out.write(lenbuf, 8);
  out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw ArtifactError("failed writing checkpoint: " + path);
}

inline ModelParams load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof kMagic + 8 ||
      std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw ParseError("bad checkpoint magic: " + path);
  std::uint64_t mlen = 0;
  for (int i = 0; i < 8; ++i)
    mlen |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[sizeof kMagic + i]))
            << (8 * i);
  const std::size_t mstart = sizeof kMagic + 8;
  if (mstart + mlen > bytes.size()) throw ParseError("truncated checkpoint manifest: " + path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(mstart, mlen));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("bad checkpoint manifest in " + path + ": " + e.what());
  }
  const std::size_t pstart = mstart + mlen;

  ModelParams p;
  try {
    const auto& meta = manifest.at("meta");
    p.hidden = meta.at("hidden").get<int>();
    p.n_intents = meta.at("n_intents").get<int>();
    p.intent_per_step = meta.value("intent_per_step", false);
    const int V = meta.at("vocab_size").get<int>();
    const int d = meta.at("dim").get<int>();
    p.embedding = EmbeddingMatrix(V, d);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad checkpoint meta in " + path + ": " + e.what());
  }

  auto read_into = [&](const nlohmann::json& entry, Mat* mat, Vec* vec) {
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const auto count = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    if (pstart + offset + count * sizeof(double) > bytes.size())
      throw ParseError("checkpoint payload out of bounds for " +
                       entry.at("name").get<std::string>() + " in " + path);
    const char* src = bytes.data() + pstart + offset;
    if (mat) {
      *mat = Mat(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
          double v;
          std::memcpy(&v, src, sizeof(double));
          src += sizeof(double);
          (*mat)(r, c) = v;
        }
    } else {
      if (cols != 1) throw ParseError("vector tensor with cols != 1 in " + path);
      *vec = Vec(rows);
      for (Eigen::Index r = 0; r < rows; ++r) {
        double v;
        std::memcpy(&v, src, sizeof(double));
        src += sizeof(double);
        (*vec)(r) = v;
      }
    }
  };

  auto table = detail::tensor_table(p);
  const auto& tensors = manifest.at("tensors");
  if (!tensors.is_array() || tensors.size() != table.size())
    throw ParseError("checkpoint tensor table mismatch in " + path);
  for (std::size_t k = 0; k < table.size(); ++k) {
    const auto& entry = tensors[k];
    if (entry.at("name").get<std::string>() != table[k].name)
      throw ParseError("unexpected tensor \"" + entry.at("name").get<std::string>() + "\" in " +
                       path);
    read_into(entry, const_cast<Mat*>(table[k].mat), const_cast<Vec*>(table[k].vec));
  }
  try {
    p.check_consistent();
  } catch (const DimensionError& e) {
    throw ParseError("inconsistent checkpoint tensors in " + path + ": " + e.what());
  }
  return p;
}

}  // namespace checkpoint
}  // namespace kgdl
