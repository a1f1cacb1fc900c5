#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "emn/tensor.hpp"

namespace emn {

/// Lowercased token -> fixed-dimension vector.
class EmbeddingTable {
public:
    explicit EmbeddingTable(std::size_t dim = 0) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    /// Inserts a row; a token already present keeps its first vector and
    /// false is returned. Throws DimensionError on a length mismatch.
    bool add(std::string_view token, Tensor vector);
    /// nullptr when absent.
    const Tensor* find(std::string_view token) const;

private:
    std::size_t dim_;
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, Tensor> rows_;
};

/// Reads the GloVe text format: one token followed by `expected_dim`
/// space-separated floats per line.
EmbeddingTable load_embeddings(std::istream& in, std::size_t expected_dim);
EmbeddingTable load_embeddings(const std::string& path, std::size_t expected_dim);

}  // namespace emn
