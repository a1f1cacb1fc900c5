#include "emn/embeddings.hpp"

#include <fstream>
#include <sstream>

#include "emn/config.hpp"
#include "emn/corpus.hpp"

namespace emn {

bool EmbeddingTable::add(std::string_view token, Tensor vector) {
    if (!vector.is_vector() || vector.size() != dim_)
        throw DimensionError("embedding for '" + std::string(token) + "' has shape " + vector.shape_string() +
                             ", expected [" + std::to_string(dim_) + "]");
    std::string key = lowercase(token);
    if (rows_.contains(key)) return false;
    tokens_.push_back(key);
    rows_.emplace(std::move(key), std::move(vector));
    return true;
}

const Tensor* EmbeddingTable::find(std::string_view token) const {
    auto it = rows_.find(std::string(token));
    return it == rows_.end() ? nullptr : &it->second;
}

EmbeddingTable load_embeddings(std::istream& in, std::size_t expected_dim) {
    if (expected_dim == 0) throw Error("embedding dimension must be positive");
    EmbeddingTable table(expected_dim);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::istringstream fields(line);
        std::string token;
        fields >> token;
        std::vector<double> values;
        values.reserve(expected_dim);
        std::string number;
        while (fields >> number) values.push_back(parse_double(number, "embedding '" + token + "'"));
        if (values.size() != expected_dim)
            throw DimensionError("embedding line " + std::to_string(line_no) + " for token '" + token + "' has " +
                                 std::to_string(values.size()) + " values, expected " +
                                 std::to_string(expected_dim));
        table.add(token, Tensor::from(std::move(values)));
    }
    return table;
}

EmbeddingTable load_embeddings(const std::string& path, std::size_t expected_dim) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read embeddings file '" + path + "'");
    return load_embeddings(in, expected_dim);
}

}  // namespace emn
