#include "emn/vocabulary.hpp"

#include "emn/tensor.hpp"

namespace emn {

Vocabulary::Vocabulary() {
    add("<pad>");
    add("<unk>");
    add("<eos>");
}

WordId Vocabulary::add(std::string_view token) {
    if (token.empty()) throw Error("vocabulary tokens must be nonempty");
    auto it = ids_.find(std::string(token));
    if (it != ids_.end()) return it->second;
    const WordId id = tokens_.size();
    tokens_.emplace_back(token);
    ids_.emplace(tokens_.back(), id);
    return id;
}

WordId Vocabulary::id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

const std::string& Vocabulary::token(WordId id) const {
    if (id >= tokens_.size()) throw Error("word id " + std::to_string(id) + " outside vocabulary");
    return tokens_[id];
}

std::vector<WordId> Vocabulary::encode(const std::vector<std::string>& tokens, std::size_t* unknown) const {
    std::vector<WordId> out;
    out.reserve(tokens.size());
    for (const std::string& t : tokens) {
        const WordId id = this->id(t);
        if (id == kUnkId && unknown) ++*unknown;
        out.push_back(id);
    }
    return out;
}

}  // namespace emn
