#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace qda::embed {

// Row-major n x d float32 matrix of sentence vectors. Immutable once loaded.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  // Throws FormatError if data.size() != rows * cols, d < 2 or a value is non-finite.
  EmbeddingMatrix(std::size_t rows, std::size_t cols, std::vector<float> data, std::string model_tag = {});

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const std::string& model_tag() const { return model_tag_; }

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<const float> data() const { return data_; }

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
  std::string model_tag_;
};

// QDAE v1 layout, all integers little endian:
//   "QDAE" | u32 version=1 | u64 n | u32 d | u16 tag_len | tag bytes | n*d f32
void write_qdae(const std::filesystem::path& path, const EmbeddingMatrix& m);

// Reads QDAE, or CSV when the file does not start with the QDAE magic and has
// a .csv extension. Errors: "embedding file not found", "not an embedding
// file", "truncated file", "invalid vector at row i".
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);

EmbeddingMatrix parse_csv(const std::string& text, std::string model_tag = {});

// Throws FormatError("embedding rows R ≠ sentences S") on mismatch or when
// the corpus is empty.
void validate_alignment(std::size_t sentence_count, const EmbeddingMatrix& m);

// Throws DomainError on length mismatch or a zero-norm argument.
double cosine_similarity(std::span<const float> u, std::span<const float> v);
double cosine_similarity(std::span<const double> u, std::span<const double> v);

}  // namespace qda::embed
