#include "emn/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "emn/config.hpp"
#include "emn/rng.hpp"
#include "emn/tensor.hpp"

namespace emn {

namespace {

// Simulator vocabulary first, then common nouns and pronouns.
constexpr std::string_view kBuiltinLexicon[] = {
    "mary", "john", "daniel", "sandra", "fred", "bill", "julie", "jeff", "emily", "jason",
    "bathroom", "hallway", "garden", "office", "kitchen", "bedroom", "cinema", "park", "school", "cellar",
    "movie", "film", "plot", "acting", "actor", "actress", "story", "ending", "music", "director",
    "script", "cast", "scene", "scenes", "character", "characters", "show", "series", "book", "review",
    "i", "me", "you", "he", "him", "she", "it", "we", "us", "they", "them", "myself", "yourself",
    "himself", "herself", "itself", "ourselves", "themselves", "someone", "somebody", "everyone",
    "everybody", "anyone", "nobody", "something", "everything", "nothing", "anything",
    "man", "woman", "boy", "girl", "child", "children", "kid", "kids", "baby", "friend", "friends",
    "mother", "father", "mom", "dad", "brother", "sister", "family", "teacher", "student", "doctor",
    "people", "person", "king", "queen", "dog", "cat", "bird", "fish", "horse", "cow", "pig", "sheep",
    "mouse", "wolf", "lion", "rabbit", "frog", "duck", "bear", "animal", "animals",
    "apple", "football", "milk", "ball", "box", "toy", "toys", "food", "water", "cake", "bread",
    "cookie", "cookies", "candy", "pizza", "sandwich", "lunch", "dinner", "breakfast", "egg", "eggs",
    "house", "home", "room", "door", "window", "table", "chair", "bed", "car", "bus", "train", "boat",
    "bike", "tree", "trees", "flower", "flowers", "grass", "river", "lake", "sea", "beach", "forest",
    "farm", "town", "city", "store", "shop", "market", "library", "church", "hospital", "zoo",
    "street", "road", "world", "country", "sky", "sun", "moon", "star", "rain", "snow",
    "day", "night", "morning", "afternoon", "evening", "week", "year", "time", "summer", "winter",
    "birthday", "party", "game", "games", "picture", "pictures", "letter", "phone", "money", "hat",
    "shirt", "shoes", "coat", "bag", "key", "pen", "paper", "song", "name", "idea", "place", "thing",
    "things", "way", "job", "work", "class", "team", "group", "gift", "present", "treasure",
};

bool is_punct(unsigned char c) {
    return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':' || c == '"' || c == '(' ||
           c == ')' || c == '[' || c == ']' || c == '{' || c == '}';
}

bool sentence_end(std::string_view tok) { return tok == "." || tok == "!" || tok == "?"; }

bool is_capitalised(std::string_view tok) {
    return !tok.empty() && std::isupper(static_cast<unsigned char>(tok[0]));
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string s;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) s += sep;
        s += parts[i];
    }
    return s;
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::vector<std::string> lower_all(const std::vector<std::string>& tokens) {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(lowercase(t));
    return out;
}

[[noreturn]] void parse_error(std::size_t line_no, const std::string& what) {
    throw Error("bAbI line " + std::to_string(line_no) + ": " + what);
}

// Splits a token stream into sentences ending at ., ! or ?.
std::vector<std::vector<std::string>> sentences_of(const std::vector<std::string>& tokens) {
    std::vector<std::vector<std::string>> out;
    std::vector<std::string> current;
    for (const auto& t : tokens) {
        current.push_back(t);
        if (sentence_end(t)) {
            out.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

}  // namespace

Lexicon Lexicon::builtin() {
    Lexicon lex;
    for (std::string_view w : kBuiltinLexicon) lex.add(w);
    return lex;
}

Lexicon Lexicon::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read lexicon file '" + path + "'");
    Lexicon lex;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream words(line);
        std::string w;
        while (words >> w) lex.add(w);
    }
    return lex;
}

void Lexicon::add(std::string_view word) {
    if (!word.empty()) words_.insert(lowercase(word));
}

void Lexicon::merge(const Lexicon& other) { words_.insert(other.words_.begin(), other.words_.end()); }

bool Lexicon::contains(std::string_view word) const { return words_.contains(lowercase(word)); }

std::string lowercase(std::string_view text) {
    std::string s(text);
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) out.push_back(std::move(current));
        current.clear();
    };
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            flush();
        } else if (is_punct(c)) {
            flush();
            out.emplace_back(1, static_cast<char>(c));
        } else {
            current.push_back(static_cast<char>(c));
        }
    }
    flush();
    return out;
}

std::vector<std::string> annotate_entities(const std::vector<std::string>& tokens, const Lexicon& lexicon) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::string& tok = tokens[i];
        const bool proper = i > 0 && !sentence_end(tokens[i - 1]) && is_capitalised(tok);
        if (!proper && !lexicon.contains(tok)) continue;
        std::string low = lowercase(tok);
        if (std::find(out.begin(), out.end(), low) == out.end()) out.push_back(std::move(low));
    }
    return out;
}

Statement make_statement(const std::vector<std::string>& raw_tokens, const Lexicon& lexicon, std::size_t line) {
    return {lower_all(raw_tokens), annotate_entities(raw_tokens, lexicon), line};
}

std::vector<Story> parse_babi(std::istream& in, const Lexicon& lexicon) {
    std::vector<Story> stories;
    std::map<std::size_t, std::size_t> statement_at_line;  // line id -> statement index
    std::size_t expected = 1;
    std::size_t line_no = 0;
    std::string raw;
    while (std::getline(in, raw)) {
        ++line_no;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        if (raw.find_first_not_of(" \t") == std::string::npos) continue;

        std::size_t pos = 0;
        while (pos < raw.size() && std::isdigit(static_cast<unsigned char>(raw[pos]))) ++pos;
        if (pos == 0 || pos >= raw.size() || raw[pos] != ' ')
            parse_error(line_no, "expected '<number> <text>'");
        const std::size_t id = static_cast<std::size_t>(parse_uint(std::string_view(raw).substr(0, pos), "line id"));

        if (id == 1) {
            stories.push_back(Story{std::to_string(stories.size() + 1), {}, {}});
            statement_at_line.clear();
            expected = 1;
        } else if (stories.empty() || id != expected) {
            parse_error(line_no, "line number " + std::to_string(id) + " where " + std::to_string(expected) +
                                     " was expected");
        }
        expected = id + 1;
        Story& story = stories.back();

        const std::vector<std::string> fields = split(std::string_view(raw).substr(pos + 1), '\t');
        if (fields.size() == 1) {
            const auto tokens = tokenize(fields[0]);
            if (tokens.empty()) parse_error(line_no, "empty statement");
            statement_at_line[id] = story.statements.size();
            story.statements.push_back(make_statement(tokens, lexicon, id));
            continue;
        }
        if (fields.size() > 3) parse_error(line_no, "too many tab-separated fields");

        Question q;
        q.tokens = lower_all(tokenize(fields[0]));
        if (q.tokens.empty()) parse_error(line_no, "empty question");
        for (auto& a : split(fields[1], ',')) {
            std::string ans = lowercase(a);
            ans.erase(0, ans.find_first_not_of(' '));
            ans.erase(ans.find_last_not_of(' ') + 1);
            if (ans.empty()) parse_error(line_no, "empty answer");
            q.answers.push_back(std::move(ans));
        }
        if (fields.size() == 3) {
            std::istringstream ids(fields[2]);
            std::string s;
            while (ids >> s) {
                std::size_t ref = 0;
                try {
                    ref = static_cast<std::size_t>(parse_uint(s, "supporting id"));
                } catch (const Error&) {
                    parse_error(line_no, "bad supporting id '" + s + "'");
                }
                auto it = statement_at_line.find(ref);
                if (it == statement_at_line.end())
                    parse_error(line_no, "supporting id " + s + " is not an earlier statement");
                q.supporting.push_back(ref);
                for (const auto& e : story.statements[it->second].entities)
                    if (std::find(q.related.begin(), q.related.end(), e) == q.related.end()) q.related.push_back(e);
            }
        }
        q.position = story.statements.size();
        q.line = id;
        story.questions.push_back(std::move(q));
    }
    return stories;
}

std::vector<Story> parse_babi(std::string_view text, const Lexicon& lexicon) {
    std::istringstream in{std::string(text)};
    return parse_babi(in, lexicon);
}

std::vector<Story> read_babi_file(const std::string& path, const Lexicon& lexicon) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read data file '" + path + "'");
    return parse_babi(in, lexicon);
}

void write_babi(std::ostream& out, const std::vector<Story>& stories) {
    for (const Story& story : stories) {
        std::size_t s = 0;
        std::size_t q = 0;
        while (s < story.statements.size() || q < story.questions.size()) {
            const bool take_statement =
                q == story.questions.size() ||
                (s < story.statements.size() && story.statements[s].line < story.questions[q].line);
            if (take_statement) {
                const Statement& st = story.statements[s++];
                out << st.line << ' ' << join(st.tokens, " ") << '\n';
            } else {
                const Question& qu = story.questions[q++];
                out << qu.line << ' ' << join(qu.tokens, " ") << '\t' << join(qu.answers, ",") << '\t';
                for (std::size_t i = 0; i < qu.supporting.size(); ++i) out << (i ? " " : "") << qu.supporting[i];
                out << '\n';
            }
        }
    }
}

std::string write_babi(const std::vector<Story>& stories) {
    std::ostringstream out;
    write_babi(out, stories);
    return out.str();
}

CorpusStats corpus_stats(const std::vector<Story>& stories) {
    CorpusStats st;
    st.stories = stories.size();
    for (const Story& s : stories) {
        st.statements += s.statements.size();
        st.questions += s.questions.size();
    }
    return st;
}

std::vector<std::string> convert_mc(const std::vector<std::string>& question,
                                    const std::vector<std::string>& alternative) {
    static constexpr std::string_view wh[] = {"who", "what", "where", "when", "which", "why", "how"};
    std::size_t found = 0;
    std::size_t at = 0;
    for (std::size_t i = 0; i < question.size(); ++i) {
        const std::string low = lowercase(question[i]);
        if (std::find(std::begin(wh), std::end(wh), low) != std::end(wh)) {
            ++found;
            at = i;
        }
    }
    if (found != 1)
        throw Error("question must contain exactly one wh-word, found " + std::to_string(found) + ": '" +
                    join(question, " ") + "'");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < question.size(); ++i) {
        if (i == at) {
            out.insert(out.end(), alternative.begin(), alternative.end());
        } else if (question[i] != "?") {
            out.push_back(question[i]);
        }
    }
    return out;
}

Story wrap_sentiment(const std::vector<std::string>& review, std::string_view label, const Lexicon& lexicon,
                     std::string id) {
    if (label != "positive" && label != "negative")
        throw Error("sentiment label must be 'positive' or 'negative', got '" + std::string(label) + "'");
    if (review.empty()) throw Error("cannot wrap an empty review");
    Story story;
    story.id = std::move(id);
    std::vector<std::string> current;
    auto flush = [&] {
        if (current.empty()) return;
        story.statements.push_back(make_statement(current, lexicon, story.statements.size() + 1));
        current.clear();
    };
    for (const auto& tok : review) {
        current.push_back(tok);
        if (tok == ".") flush();
    }
    flush();
    Question q;
    q.tokens = tokenize(kOpinionQuestion);
    q.answers = {std::string(label)};
    q.position = story.statements.size();
    q.line = story.statements.size() + 1;
    story.questions.push_back(std::move(q));
    return story;
}

void WorldConfig::validate() const {
    if (agents.empty()) throw Error("world needs at least one agent");
    if (locations.size() < 2) throw Error("world needs at least two locations");
    for (const auto& k : question_kinds)
        if (k != "where_is") throw Error("unsupported question kind '" + k + "'");
    if (questions_per_story > 0 && moves_per_story == 0)
        throw Error("questions need at least one move per story");
}

void WorldConfig::set(std::string_view key, std::string_view value, bool* known) {
    auto list = [&](std::vector<std::string>& field) {
        field.clear();
        for (auto& item : split(value, ',')) {
            std::string w = lowercase(item);
            w.erase(0, w.find_first_not_of(' '));
            w.erase(w.find_last_not_of(' ') + 1);
            if (!w.empty()) field.push_back(std::move(w));
        }
    };
    bool hit = true;
    if (key == "agents") list(agents);
    else if (key == "locations") list(locations);
    else if (key == "stories") stories = static_cast<std::size_t>(parse_uint(value, key));
    else if (key == "moves_per_story") moves_per_story = static_cast<std::size_t>(parse_uint(value, key));
    else if (key == "questions_per_story") questions_per_story = static_cast<std::size_t>(parse_uint(value, key));
    else if (key == "question_kinds") list(question_kinds);
    else if (key == "world_seed") seed = parse_uint(value, key);
    else hit = false;
    if (known) *known = hit;
}

std::vector<Story> simulate(const WorldConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    Lexicon lexicon;
    for (const auto& a : cfg.agents) lexicon.add(a);
    for (const auto& l : cfg.locations) lexicon.add(l);

    constexpr std::size_t kNowhere = static_cast<std::size_t>(-1);
    std::vector<Story> stories;
    for (std::size_t k = 0; k < cfg.stories; ++k) {
        Story story;
        story.id = std::to_string(k + 1);
        std::vector<std::size_t> where(cfg.agents.size(), kNowhere);
        std::vector<std::size_t> last_move_line(cfg.agents.size(), 0);

        std::vector<std::size_t> ask_after(cfg.questions_per_story);
        for (auto& slot : ask_after) slot = rng.index(cfg.moves_per_story);
        std::sort(ask_after.begin(), ask_after.end());

        std::size_t line = 0;
        std::size_t next_question = 0;
        for (std::size_t m = 0; m < cfg.moves_per_story; ++m) {
            const std::size_t agent = rng.index(cfg.agents.size());
            std::size_t loc;
            if (where[agent] == kNowhere) {
                loc = rng.index(cfg.locations.size());
            } else {
                loc = rng.index(cfg.locations.size() - 1);
                if (loc >= where[agent]) ++loc;
            }
            where[agent] = loc;
            const std::string& name = cfg.agents[agent];
            const std::string& place = cfg.locations[loc];
            std::vector<std::string> tokens;
            switch (rng.index(3)) {
                case 0: tokens = {name, "moved", "to", "the", place, "."}; break;
                case 1: tokens = {name, "went", "to", "the", place, "."}; break;
                default: tokens = {name, "went", "back", "to", "the", place, "."}; break;
            }
            last_move_line[agent] = ++line;
            story.statements.push_back(make_statement(tokens, lexicon, line));

            while (next_question < ask_after.size() && ask_after[next_question] == m) {
                ++next_question;
                std::vector<std::size_t> moved;
                for (std::size_t a = 0; a < cfg.agents.size(); ++a)
                    if (where[a] != kNowhere) moved.push_back(a);
                const std::size_t who = moved[rng.index(moved.size())];
                Question q;
                q.tokens = {"where", "is", cfg.agents[who], "?"};
                q.answers = {cfg.locations[where[who]]};
                q.supporting = {last_move_line[who]};
                q.related = {cfg.agents[who], cfg.locations[where[who]]};
                q.position = story.statements.size();
                q.line = ++line;
                story.questions.push_back(std::move(q));
            }
        }
        stories.push_back(std::move(story));
    }
    return stories;
}

std::vector<Story> simulate_polarity(const PolarityConfig& cfg) {
    if (cfg.positive_words.empty() || cfg.negative_words.empty() || cfg.nouns.empty())
        throw Error("polarity generator needs opinion words and nouns");
    if (cfg.min_sentences < 1 || cfg.max_sentences < cfg.min_sentences)
        throw Error("polarity generator needs 1 <= min_sentences <= max_sentences");
    Rng rng(cfg.seed);
    Lexicon lexicon = Lexicon::builtin();
    for (const auto& n : cfg.nouns) lexicon.add(n);

    auto pick = [&rng](const std::vector<std::string>& v) -> const std::string& { return v[rng.index(v.size())]; };
    std::vector<Story> stories;
    for (std::size_t k = 0; k < 2 * cfg.stories_per_class; ++k) {
        const bool positive = k % 2 == 0;
        const std::size_t n = cfg.min_sentences + rng.index(cfg.max_sentences - cfg.min_sentences + 1);
        const std::size_t opinion_at = rng.index(n);
        std::vector<std::string> review;
        for (std::size_t s = 0; s < n; ++s) {
            const std::string& noun = pick(cfg.nouns);
            std::vector<std::string> sentence;
            if (s == opinion_at) {
                sentence = {"the", noun, "was", pick(positive ? cfg.positive_words : cfg.negative_words), "."};
            } else {
                switch (rng.index(3)) {
                    case 0: sentence = {"i", "watched", "the", noun, "yesterday", "."}; break;
                    case 1: sentence = {"the", noun, "was", "long", "."}; break;
                    default: sentence = {"my", "friend", "saw", "the", noun, "."}; break;
                }
            }
            review.insert(review.end(), sentence.begin(), sentence.end());
        }
        stories.push_back(wrap_sentiment(review, positive ? "positive" : "negative", lexicon,
                                         std::to_string(k + 1)));
    }
    rng.shuffle(stories);
    for (std::size_t k = 0; k < stories.size(); ++k) stories[k].id = std::to_string(k + 1);
    return stories;
}

std::vector<McStory> read_mctest(std::istream& tsv, std::istream& answers) {
    std::vector<McStory> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(tsv, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split(line, '\t');
        if (fields.size() < 3 || (fields.size() - 3) % 5 != 0)
            throw Error("MC line " + std::to_string(line_no) + ": expected id, properties, story and 5 fields per question");
        McStory story;
        story.id = fields[0];
        story.text = fields[2];
        for (std::string_view marker : {"\\newline", "\\tab"}) {
            for (auto p = story.text.find(marker); p != std::string::npos; p = story.text.find(marker))
                story.text.replace(p, marker.size(), " ");
        }
        for (std::size_t f = 3; f < fields.size(); f += 5) {
            McQuestion q;
            q.text = fields[f];
            if (auto colon = q.text.find(':'); colon != std::string::npos &&
                                                (q.text.starts_with("one") || q.text.starts_with("multiple")))
                q.text = q.text.substr(colon + 1);
            for (std::size_t a = 1; a <= 4; ++a) q.alternatives.push_back(fields[f + a]);
            story.questions.push_back(std::move(q));
        }
        std::string letters;
        if (!std::getline(answers, letters))
            throw Error("MC answers: missing line for story '" + story.id + "'");
        const auto keys = split(letters, '\t');
        if (keys.size() < story.questions.size())
            throw Error("MC answers: too few answers for story '" + story.id + "'");
        for (std::size_t i = 0; i < story.questions.size(); ++i) {
            std::string key = keys[i];
            key.erase(key.find_last_not_of(" \r") + 1);
            if (key.size() != 1 || key[0] < 'A' || key[0] > 'D')
                throw Error("MC answers: bad answer letter '" + key + "' for story '" + story.id + "'");
            story.questions[i].correct = static_cast<std::size_t>(key[0] - 'A');
        }
        out.push_back(std::move(story));
    }
    return out;
}

Story convert_mc_story(const McStory& mc, const Lexicon& lexicon, ConversionSummary& summary) {
    Story story;
    story.id = mc.id;
    std::size_t line = 0;
    for (const auto& sentence : sentences_of(tokenize(mc.text)))
        story.statements.push_back(make_statement(sentence, lexicon, ++line));
    for (const McQuestion& q : mc.questions) {
        const auto q_tokens = tokenize(q.text);
        std::vector<Question> items;
        try {
            for (std::size_t a = 0; a < q.alternatives.size(); ++a) {
                Question item;
                item.tokens = lower_all(convert_mc(q_tokens, tokenize(q.alternatives[a])));
                if (item.tokens.empty()) throw Error("empty declarative item");
                item.answers = {a == q.correct ? "true" : "false"};
                item.position = story.statements.size();
                items.push_back(std::move(item));
            }
        } catch (const Error&) {
            ++summary.skipped;
            continue;
        }
        for (auto& item : items) {
            item.line = ++line;
            story.questions.push_back(std::move(item));
        }
        ++summary.converted;
    }
    return story;
}

std::vector<Review> read_review_tree(const std::string& root, std::size_t per_class, std::uint64_t seed) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw Error("review directory '" + root + "' does not exist");
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<Review> positive;
    std::vector<Review> negative;
    for (const auto& path : files) {
        std::string label;
        for (fs::path dir = path.parent_path(); !dir.empty() && dir != dir.parent_path(); dir = dir.parent_path()) {
            const std::string name = lowercase(dir.filename().string());
            if (name == "pos" || name == "positive") label = "positive";
            else if (name == "neg" || name == "negative") label = "negative";
            if (!label.empty()) break;
        }
        if (label.empty()) continue;
        std::ifstream in(path);
        std::stringstream ss;
        ss << in.rdbuf();
        std::string text = ss.str();
        for (auto p = text.find("<br />"); p != std::string::npos; p = text.find("<br />")) text.replace(p, 6, " ");
        (label == "positive" ? positive : negative).push_back({label, std::move(text), path.string()});
    }
    if (per_class > 0) {
        Rng rng(seed);
        for (auto* group : {&positive, &negative}) {
            rng.shuffle(*group);
            if (group->size() > per_class) group->resize(per_class);
            std::sort(group->begin(), group->end(),
                      [](const Review& a, const Review& b) { return a.source < b.source; });
        }
    }
    std::vector<Review> all = std::move(positive);
    all.insert(all.end(), negative.begin(), negative.end());
    std::sort(all.begin(), all.end(), [](const Review& a, const Review& b) { return a.source < b.source; });
    return all;
}

}  // namespace emn
