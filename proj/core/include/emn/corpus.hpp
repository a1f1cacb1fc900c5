#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace emn {

/// A declarative sentence of a story, tokens lowercased.
struct Statement {
    std::vector<std::string> tokens;
    /// Distinct entity tokens in first-mention order.
    std::vector<std::string> entities;
    /// 1-based bAbI line number within the story.
    std::size_t line = 0;

    friend bool operator==(const Statement&, const Statement&) = default;
};

struct Question {
    std::vector<std::string> tokens;
    std::vector<std::string> answers;
    /// Line numbers of the supporting statements.
    std::vector<std::size_t> supporting;
    /// Entities of the supporting statements; empty for unannotated data.
    std::vector<std::string> related;
    /// Number of statements that precede the question.
    std::size_t position = 0;
    std::size_t line = 0;

    friend bool operator==(const Question&, const Question&) = default;
};

struct Story {
    std::string id;
    std::vector<Statement> statements;
    std::vector<Question> questions;

    friend bool operator==(const Story&, const Story&) = default;
};

/// Nouns and pronouns treated as entities.
class Lexicon {
public:
    /// Simulator names and places plus a list of common nouns and pronouns.
    static Lexicon builtin();
    /// One word per line; blank lines and `#` comments ignored.
    static Lexicon from_file(const std::string& path);

    void add(std::string_view word);
    void merge(const Lexicon& other);
    bool contains(std::string_view word) const;
    std::size_t size() const { return words_.size(); }

private:
    std::unordered_set<std::string> words_;
};

std::string lowercase(std::string_view text);

/// Splits on whitespace and separates punctuation into its own tokens.
/// Case is preserved so that entity annotation can see capitals.
std::vector<std::string> tokenize(std::string_view text);

/// Distinct lowercased tokens, in first-mention order, that are in the
/// lexicon or are capitalised away from the sentence start.
std::vector<std::string> annotate_entities(const std::vector<std::string>& tokens, const Lexicon& lexicon);

/// Builds a statement from raw text or tokens (annotation sees the case).
Statement make_statement(const std::vector<std::string>& raw_tokens, const Lexicon& lexicon, std::size_t line);

/// bAbI text: `<n> <sentence>` or `<n> <question>\t<answer>\t<ids>`.
/// Numbering restarts at 1 for each story. Throws Error naming the line on
/// malformed input or a numbering gap.
std::vector<Story> parse_babi(std::istream& in, const Lexicon& lexicon);
std::vector<Story> parse_babi(std::string_view text, const Lexicon& lexicon);
std::vector<Story> read_babi_file(const std::string& path, const Lexicon& lexicon);

void write_babi(std::ostream& out, const std::vector<Story>& stories);
std::string write_babi(const std::vector<Story>& stories);

struct CorpusStats {
    std::size_t stories = 0;
    std::size_t statements = 0;
    std::size_t questions = 0;
};
CorpusStats corpus_stats(const std::vector<Story>& stories);

/// Replaces the single wh-word of a question with the alternative and drops
/// question marks. Throws Error when the question has zero or several.
std::vector<std::string> convert_mc(const std::vector<std::string>& question,
                                    const std::vector<std::string>& alternative);

inline constexpr std::string_view kOpinionQuestion = "what is the opinion ?";

/// A review as a story: one statement per period-terminated sentence and a
/// single question asking for the opinion, answered with the label.
Story wrap_sentiment(const std::vector<std::string>& review, std::string_view label, const Lexicon& lexicon,
                     std::string id = "1");

/// Text-adventure world for where-is questions.
struct WorldConfig {
    std::vector<std::string> agents{"mary", "john", "daniel", "sandra"};
    std::vector<std::string> locations{"bathroom", "hallway", "garden", "office", "kitchen", "bedroom"};
    std::size_t stories = 100;
    std::size_t moves_per_story = 6;
    std::size_t questions_per_story = 2;
    std::vector<std::string> question_kinds{"where_is"};
    std::uint64_t seed = 7;

    void validate() const;
    /// Applies recognised keys (agents/locations are comma lists).
    void set(std::string_view key, std::string_view value, bool* known = nullptr);
};

/// Generates stories; fully determined by the config (including seed).
std::vector<Story> simulate(const WorldConfig& cfg);

/// Synthetic reviews whose class is carried by one opinion word.
struct PolarityConfig {
    std::size_t stories_per_class = 500;
    std::vector<std::string> positive_words{"great"};
    std::vector<std::string> negative_words{"awful"};
    std::vector<std::string> nouns{"movie", "film", "plot", "acting", "ending", "music"};
    std::size_t min_sentences = 2;
    std::size_t max_sentences = 4;
    std::uint64_t seed = 11;
};

std::vector<Story> simulate_polarity(const PolarityConfig& cfg);

/// One MCTest-style multiple-choice story.
struct McQuestion {
    std::string text;
    std::vector<std::string> alternatives;
    std::size_t correct = 0;
};

struct McStory {
    std::string id;
    std::string text;
    std::vector<McQuestion> questions;
};

/// MCTest tab-separated stories plus the matching answer-letter file.
std::vector<McStory> read_mctest(std::istream& tsv, std::istream& answers);

struct ConversionSummary {
    std::size_t converted = 0;
    std::size_t skipped = 0;
};

/// One declarative item per alternative, answered true/false.
Story convert_mc_story(const McStory& story, const Lexicon& lexicon, ConversionSummary& summary);

struct Review {
    std::string label;
    std::string text;
    std::string source;
};

/// Walks a directory tree of one-review-per-file text files; the label is
/// taken from the nearest `pos`/`positive` or `neg`/`negative` directory.
/// When `per_class` is nonzero, a seeded sample of that many per label.
std::vector<Review> read_review_tree(const std::string& root, std::size_t per_class, std::uint64_t seed);

}  // namespace emn
