#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace emn {

using WordId = std::size_t;

inline constexpr WordId kPadId = 0;
inline constexpr WordId kUnkId = 1;
inline constexpr WordId kEosId = 2;

/// Word <-> id mapping with the reserved ids pad=0, unk=1, eos=2.
class Vocabulary {
public:
    Vocabulary();

    /// Returns the id of `token`, inserting it if new.
    WordId add(std::string_view token);
    /// Id of `token`, or kUnkId when absent.
    WordId id(std::string_view token) const;
    bool contains(std::string_view token) const;
    const std::string& token(WordId id) const;
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    /// Maps tokens to ids; unknown tokens become kUnkId and bump `unknown`.
    std::vector<WordId> encode(const std::vector<std::string>& tokens, std::size_t* unknown = nullptr) const;

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, WordId> ids_;
};

}  // namespace emn
