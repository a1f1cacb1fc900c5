#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "emn/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kDomainError = 1;
constexpr int kUsageError = 2;

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string data;
    std::string out;
    std::string checkpoint;
    std::string lexicon;
    std::string predictions;
    std::string mode;
    std::string answers;
    std::size_t per_class = 0;
    double threshold = 0.0;
    std::map<std::string, std::string> overrides;
};

std::vector<std::string> train_config_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, v] : emn::parse_key_values(emn::TrainConfig{}.to_text())) keys.push_back(k);
    return keys;
}

// Both configs share one file; a key must belong to one of them.
void load_configs(const Options& o, emn::TrainConfig& train, emn::DataConfig& data) {
    if (!o.config.empty()) {
        for (const auto& [k, v] : emn::read_key_values(o.config)) {
            const bool known_train = train.set(k, v);
            const bool known_data = data.set(k, v);
            if (!known_train && !known_data) throw emn::Error("unknown config key '" + k + "' in " + o.config);
        }
    }
    for (const auto& [k, v] : o.overrides) train.set(k, v);
    if (o.seed) {
        train.seed = *o.seed;
        data.world.seed = *o.seed;
        data.polarity.seed = *o.seed;
    }
}

emn::Lexicon lexicon_for(const Options& o) {
    emn::Lexicon lex = emn::Lexicon::builtin();
    if (!o.lexicon.empty()) lex.merge(emn::Lexicon::from_file(o.lexicon));
    return lex;
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw emn::Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw emn::Error("failed writing '" + path.string() + "'");
}

void print_stats(const char* split, const std::vector<emn::Story>& stories) {
    const emn::CorpusStats s = emn::corpus_stats(stories);
    std::cout << split << ": " << s.stories << " stories, " << s.statements << " statements, " << s.questions
              << " questions\n";
}

int cmd_gendata(const Options& o) {
    emn::TrainConfig train;
    emn::DataConfig data;
    load_configs(o, train, data);
    const emn::GeneratedData gen = emn::generate(data);
    if (gen.train.empty()) std::cerr << "warning: configuration generates no stories\n";
    write_file(fs::path(o.out) / "train.txt", emn::write_babi(gen.train));
    write_file(fs::path(o.out) / "test.txt", emn::write_babi(gen.test));
    print_stats("train", gen.train);
    print_stats("test", gen.test);
    return 0;
}

int cmd_train(const Options& o) {
    emn::TrainConfig cfg;
    emn::DataConfig unused;
    load_configs(o, cfg, unused);
    const auto stories = emn::read_babi_file(o.data, lexicon_for(o));
    std::vector<emn::MetricRow> rows;
    const emn::Model model = emn::train_pipeline(stories, cfg, &rows, &std::cerr);
    fs::create_directories(o.out);
    emn::save_checkpoint((fs::path(o.out) / "checkpoint.txt").string(), model);
    write_file(fs::path(o.out) / "metrics.csv", emn::metrics_csv(rows));
    std::cout << "wrote " << (fs::path(o.out) / "checkpoint.txt").string() << " and "
              << (fs::path(o.out) / "metrics.csv").string() << '\n';
    return 0;
}

int cmd_eval(const Options& o) {
    const emn::Model model = emn::load_checkpoint(o.checkpoint);
    const auto stories = emn::read_babi_file(o.data, lexicon_for(o));
    const emn::EvalReport report = emn::evaluate_model(model, stories);
    if (!o.predictions.empty()) {
        std::string text;
        for (emn::WordId id : report.metrics.predictions) text += model.vocab.token(id) + '\n';
        write_file(o.predictions, text);
    }
    nlohmann::ordered_json j;
    j["accuracy"] = report.metrics.accuracy;
    j["n"] = report.metrics.n;
    j["correct"] = report.metrics.correct;
    j["mean_hops"] = report.metrics.mean_hops;
    j["related_entity_hit_rate"] = report.metrics.related_hit_rate;
    j["unknown_tokens"] = report.unknown;
    std::cout << j.dump() << '\n';
    return 0;
}

int cmd_gradcheck(const Options& o) {
    emn::TrainConfig cfg;
    emn::DataConfig unused;
    load_configs(o, cfg, unused);
    bool ok = true;
    for (const auto& e : emn::run_gradchecks(cfg.seed, o.threshold)) {
        char line[200];
        std::snprintf(line, sizeof line, "%-12s max_rel_error=%.3e threshold=%.1e coordinates=%zu %s", e.name.c_str(),
                      e.result.max_rel_error, e.threshold, e.result.coordinates, e.passed ? "PASS" : "FAIL");
        std::cout << line << '\n';
        ok = ok && e.passed;
    }
    return ok ? 0 : kDomainError;
}

int cmd_convert(const Options& o) {
    const emn::Lexicon lex = lexicon_for(o);
    std::vector<emn::Story> stories;
    emn::ConversionSummary summary;
    if (o.mode == "mc") {
        std::string answers = o.answers;
        if (answers.empty()) answers = fs::path(o.data).replace_extension(".ans").string();
        std::ifstream tsv(o.data), ans(answers);
        if (!tsv) throw emn::Error("cannot read '" + o.data + "'");
        if (!ans) throw emn::Error("cannot read '" + answers + "'");
        for (const auto& mc : emn::read_mctest(tsv, ans)) {
            emn::Story s = emn::convert_mc_story(mc, lex, summary);
            if (!s.questions.empty()) stories.push_back(std::move(s));
        }
    } else {
        for (const auto& review : emn::read_review_tree(o.data, o.per_class, o.seed.value_or(1))) {
            try {
                stories.push_back(emn::wrap_sentiment(emn::tokenize(review.text), review.label, lex,
                                                      std::to_string(stories.size() + 1)));
                ++summary.converted;
            } catch (const emn::Error& e) {
                std::cerr << "skipped " << review.source << ": " << e.what() << '\n';
                ++summary.skipped;
            }
        }
    }
    write_file(o.out, emn::write_babi(stories));
    std::cout << summary.converted << " converted, " << summary.skipped << " skipped\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Entity-based memory network for question answering"};
    app.require_subcommand(1);
    Options o;

    auto seed_opt = [&](CLI::App* c) {
        c->add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { o.seed = s; }, "RNG seed override");
    };
    auto config_opt = [&](CLI::App* c) {
        c->add_option("--config", o.config, "key=value configuration file")->check(CLI::ExistingFile);
    };
    auto lexicon_opt = [&](CLI::App* c) {
        c->add_option("--lexicon", o.lexicon, "extra entity words, one per line")->check(CLI::ExistingFile);
    };

    auto* gendata = app.add_subcommand("gendata", "generate synthetic train/test splits in bAbI format");
    config_opt(gendata);
    seed_opt(gendata);
    gendata->add_option("--out", o.out, "output directory (train.txt, test.txt)")->required();

    auto* train = app.add_subcommand("train", "staged training: autoencoder, generalization, QA");
    config_opt(train);
    seed_opt(train);
    lexicon_opt(train);
    train->add_option("--data", o.data, "training stories (bAbI format)")->required()->check(CLI::ExistingFile);
    train->add_option("--out", o.out, "output directory (checkpoint.txt, metrics.csv)")->required();
    for (const auto& key : train_config_keys()) {
        if (key == "seed") continue;
        train->add_option_function<std::string>("--" + key, [&o, key](const std::string& v) { o.overrides[key] = v; },
                                                "override config field " + key);
    }

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint; prints JSON metrics");
    lexicon_opt(eval);
    eval->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    eval->add_option("--data", o.data, "evaluation stories (bAbI format)")->required()->check(CLI::ExistingFile);
    eval->add_option("--predictions", o.predictions, "write one predicted answer per line");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    config_opt(gradcheck);
    seed_opt(gradcheck);
    gradcheck->add_option("--threshold", o.threshold, "override every check's threshold")
        ->check(CLI::PositiveNumber);

    auto* convert = app.add_subcommand("convert", "convert multiple-choice or review data to bAbI format");
    lexicon_opt(convert);
    seed_opt(convert);
    convert->add_option("--mode", o.mode, "mc or sentiment")->required()->check(CLI::IsMember({"mc", "sentiment"}));
    convert->add_option("--in,--data", o.data, "MC .tsv file or review directory")->required()->check(CLI::ExistingPath);
    convert->add_option("--answers", o.answers, "MC answer file (default: input with .ans extension)");
    convert->add_option("--per-class", o.per_class, "sample this many reviews per label (0 keeps all)");
    convert->add_option("--out", o.out, "output file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsageError;
    }

    try {
        if (*gendata) return cmd_gendata(o);
        if (*train) return cmd_train(o);
        if (*eval) return cmd_eval(o);
        if (*gradcheck) return cmd_gradcheck(o);
        if (*convert) return cmd_convert(o);
    } catch (const emn::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDomainError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDomainError;
    }
    return kUsageError;
}
