#include "qda/embed_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "qda/error.hpp"
#include "text_util.hpp"

namespace qda::embed {
namespace {

static_assert(std::endian::native == std::endian::little, "QDAE I/O assumes a little-endian host");

constexpr char kMagic[4] = {'Q', 'D', 'A', 'E'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kFixedHeader = 4 + 4 + 8 + 4 + 2;

template <typename T>
void put(std::string& buf, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T get(const std::string& buf, std::size_t& pos) {
  T value;
  std::memcpy(&value, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

void check_row(std::span<const float> row, std::size_t i) {
  for (float x : row) {
    if (!std::isfinite(x)) throw FormatError("invalid vector at row " + std::to_string(i));
  }
}

template <typename T>
double cosine_impl(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) throw DomainError("cosine_similarity: length mismatch");
  double dot = 0.0;
  double nu = 0.0;
  double nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<double>(u[i]) * static_cast<double>(v[i]);
    nu += static_cast<double>(u[i]) * static_cast<double>(u[i]);
    nv += static_cast<double>(v[i]) * static_cast<double>(v[i]);
  }
  if (nu == 0.0 || nv == 0.0) throw DomainError("cosine_similarity: zero-norm vector");
  const double c = dot / (std::sqrt(nu) * std::sqrt(nv));
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t cols, std::vector<float> data, std::string model_tag)
    : rows_(rows), cols_(cols), data_(std::move(data)), model_tag_(std::move(model_tag)) {
  if (cols_ < 2) throw FormatError("embedding dimension must be >= 2");
  if (data_.size() != rows_ * cols_) throw FormatError("embedding payload does not match n x d");
  for (std::size_t i = 0; i < rows_; ++i) check_row(row(i), i);
}

void write_qdae(const std::filesystem::path& path, const EmbeddingMatrix& m) {
  if (m.model_tag().size() > UINT16_MAX) throw FormatError("model tag too long");
  std::string buf;
  buf.reserve(kFixedHeader + m.model_tag().size() + m.data().size() * sizeof(float));
  buf.append(kMagic, 4);
  put<std::uint32_t>(buf, kVersion);
  put<std::uint64_t>(buf, m.rows());
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(m.cols()));
  put<std::uint16_t>(buf, static_cast<std::uint16_t>(m.model_tag().size()));
  buf += m.model_tag();
  buf.append(reinterpret_cast<const char*>(m.data().data()), m.data().size() * sizeof(float));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError("error while writing " + path.string());
}

EmbeddingMatrix parse_csv(const std::string& text, std::string model_tag) {
  std::vector<float> data;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (detail::trim(line).empty()) continue;
    std::size_t count = 0;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      const std::string value(detail::trim(cell));
      char* end = nullptr;
      const float x = std::strtof(value.c_str(), &end);
      if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(x)) {
        throw FormatError("invalid vector at row " + std::to_string(rows));
      }
      data.push_back(x);
      ++count;
    }
    if (rows == 0) cols = count;
    if (count != cols) throw FormatError("invalid vector at row " + std::to_string(rows) + ": ragged row");
    ++rows;
  }
  if (rows == 0) throw FormatError("not an embedding file: empty CSV");
  return EmbeddingMatrix(rows, cols, std::move(data), std::move(model_tag));
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw FormatError("embedding file not found: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read embedding file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();

  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    if (path.extension() == ".csv") return parse_csv(buf, path.stem().string());
    throw FormatError("not an embedding file: " + path.string());
  }
  if (buf.size() < kFixedHeader) throw FormatError("truncated file: " + path.string());
  std::size_t pos = 4;
  const auto version = get<std::uint32_t>(buf, pos);
  if (version != kVersion) throw FormatError("unsupported QDAE version " + std::to_string(version));
  const auto n = get<std::uint64_t>(buf, pos);
  const auto d = get<std::uint32_t>(buf, pos);
  const auto tag_len = get<std::uint16_t>(buf, pos);
  if (buf.size() < pos + tag_len) throw FormatError("truncated file: " + path.string());
  std::string tag = buf.substr(pos, tag_len);
  pos += tag_len;

  if (d < 2) throw FormatError("not an embedding file: dimension " + std::to_string(d));
  const std::size_t payload = buf.size() - pos;
  if (n > payload / (sizeof(float) * d) || payload < n * d * sizeof(float)) {
    throw FormatError("truncated file: " + path.string());
  }
  if (payload > n * d * sizeof(float)) throw FormatError("trailing bytes after payload: " + path.string());
  std::vector<float> data(n * d);
  std::memcpy(data.data(), buf.data() + pos, payload);
  return EmbeddingMatrix(n, d, std::move(data), std::move(tag));
}

void validate_alignment(std::size_t sentence_count, const EmbeddingMatrix& m) {
  if (sentence_count == 0) throw FormatError("empty corpus: no sentences to align embeddings with");
  if (m.rows() != sentence_count) {
    throw FormatError("embedding rows " + std::to_string(m.rows()) + " ≠ sentences " + std::to_string(sentence_count));
  }
}

double cosine_similarity(std::span<const float> u, std::span<const float> v) { return cosine_impl(u, v); }
double cosine_similarity(std::span<const double> u, std::span<const double> v) { return cosine_impl(u, v); }

}  // namespace qda::embed
