#include "emn/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace emn {

Model Model::create(const TrainConfig& config, Vocabulary vocab, Rng& rng) {
    config.validate();
    Model m;
    m.config = config;
    m.vocab = std::move(vocab);
    const std::size_t v = m.vocab.size();
    m.f1 = LstmParams::random(v, config.d_ent, config.d_sent, rng);
    m.f2 = F2Params::random(config.d_ent, config.d_sent, rng);
    m.qa = QAModel::random(v, config.d_ent, config.d_sent, config.d_ent, rng);
    return m;
}

void Model::collect(ParamView& view) {
    f1.collect(view, "f1.");
    f2.collect(view, "f2.");
    qa.collect(view);
}

Vocabulary build_vocabulary(const std::vector<Story>& stories) {
    Vocabulary vocab;
    for (const Story& s : stories) {
        for (const Statement& st : s.statements)
            for (const auto& t : st.tokens) vocab.add(t);
        for (const Question& q : s.questions) {
            for (const auto& t : q.tokens) vocab.add(t);
            for (const auto& a : q.answers) vocab.add(a);
        }
    }
    return vocab;
}

std::vector<std::vector<WordId>> autoencoder_corpus(const std::vector<Story>& stories, const Vocabulary& vocab) {
    std::vector<std::vector<WordId>> out;
    std::set<std::vector<WordId>> seen;
    auto push = [&](const std::vector<std::string>& tokens) {
        if (tokens.empty()) return;
        std::vector<WordId> ids = vocab.encode(tokens);
        if (seen.insert(ids).second) out.push_back(std::move(ids));
    };
    for (const Story& s : stories) {
        for (const Statement& st : s.statements) push(st.tokens);
        for (const Question& q : s.questions) push(q.tokens);
    }
    return out;
}

PreparedData prepare(const std::vector<Story>& stories, const Vocabulary& vocab) {
    PreparedData data;
    for (const Story& s : stories) {
        F2Story f2{s.id, {}};
        for (const Statement& st : s.statements)
            f2.statements.push_back({vocab.encode(st.tokens, &data.unknown), st.entities});
        for (const Question& q : s.questions) {
            QAExample ex;
            ex.story_id = s.id;
            const std::size_t n = std::min(q.position, f2.statements.size());
            ex.statements.assign(f2.statements.begin(), f2.statements.begin() + static_cast<std::ptrdiff_t>(n));
            ex.question = vocab.encode(q.tokens, &data.unknown);
            if (!q.answers.empty()) {
                ex.answer = vocab.id(q.answers.front());
                if (!vocab.contains(q.answers.front())) ++data.unknown;
            }
            ex.related = q.related;
            data.examples.push_back(std::move(ex));
        }
        data.f2_stories.push_back(std::move(f2));
    }
    return data;
}

EmbeddingTable table_from_embedding(const Vocabulary& vocab, const Tensor& embedding) {
    EmbeddingTable table(embedding.cols());
    for (WordId id = kEosId + 1; id < vocab.size(); ++id) table.add(vocab.token(id), embedding.row(id));
    return table;
}

EmbeddingTable entity_table(const Model& model) {
    if (!model.config.embeddings.empty()) return load_embeddings(model.config.embeddings, model.config.d_ent);
    return table_from_embedding(model.vocab, model.f1.embedding);
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
    std::string s = "epoch,stage,loss,accuracy\n";
    for (const MetricRow& r : rows)
        s += std::to_string(r.epoch) + "," + r.stage + "," + format_double(r.loss) + "," + format_double(r.accuracy) +
             "\n";
    return s;
}

namespace {

template <class Fn>
auto run_stage(const char* stage, Fn&& fn) {
    try {
        return fn();
    } catch (const NumericError& e) {
        throw NumericError(std::string(stage) + " stage diverged: " + e.what());
    }
}

}  // namespace

Model train_pipeline(const std::vector<Story>& train, const TrainConfig& cfg, std::vector<MetricRow>* rows,
                     std::ostream* log) {
    cfg.validate();
    if (train.empty()) throw Error("training data holds no stories");
    Rng rng(cfg.seed);
    Model m = Model::create(cfg, build_vocabulary(train), rng);

    if (!cfg.embeddings.empty()) {
        const EmbeddingTable glove = load_embeddings(cfg.embeddings, cfg.d_ent);
        for (WordId id = kEosId + 1; id < m.vocab.size(); ++id)
            if (const Tensor* row = glove.find(m.vocab.token(id)))
                for (std::size_t k = 0; k < row->size(); ++k) m.f1.embedding(id, k) = (*row)[k];
    }

    auto recorder = [&](const char* stage) {
        return [&, stage](std::size_t epoch, double loss, double accuracy) {
            if (rows) rows->push_back({epoch + 1, stage, loss, accuracy});
            if (log)
                *log << stage << " epoch " << epoch + 1 << " loss " << format_double(loss) << " accuracy "
                     << format_double(accuracy) << '\n';
        };
    };

    const auto corpus = autoencoder_corpus(train, m.vocab);
    m.f1 = run_stage("autoencoder", [&] {
               return pretrain_autoencoder(corpus, std::move(m.f1), cfg, rng, recorder("autoencoder"));
           }).params;

    const PreparedData data = prepare(train, m.vocab);
    const EmbeddingTable table = entity_table(m);
    m.f2 = run_stage("generalization", [&] {
               return train_f2(data.f2_stories, m.f1, std::move(m.f2), table, cfg, recorder("generalization"));
           }).params;

    const Reader reader{&m.f1, &m.f2, &table, cfg};
    m.qa = run_stage("qa", [&] { return train_qa(data.examples, reader, std::move(m.qa), rng, recorder("qa")); })
               .model;
    return m;
}

EvalReport evaluate_model(const Model& model, const std::vector<Story>& data) {
    const PreparedData prepared = prepare(data, model.vocab);
    const EmbeddingTable table = entity_table(model);
    const Reader reader{&model.f1, &model.f2, &table, model.config};
    return {evaluate(prepared.examples, model.qa, reader), prepared.unknown};
}

// Checkpoint format:
//   ENTMEMNN 1
//   config <n>        followed by n key=value lines
//   vocab <n>         followed by n tokens, one per line
//   tensors <n>       followed by n blocks:
//     tensor <name> <rank> <dims...>
//     one line of values per row (a single line for vectors)
//   end

void save_checkpoint(std::ostream& out, const Model& model) {
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    const std::string cfg = model.config.to_text();
    out << "config " << std::count(cfg.begin(), cfg.end(), '\n') << '\n' << cfg;
    out << "vocab " << model.vocab.size() << '\n';
    for (const auto& t : model.vocab.tokens()) out << t << '\n';

    ParamView view;
    const_cast<Model&>(model).collect(view);
    out << "tensors " << view.size() << '\n';
    for (const auto& [name, tensor] : view) {
        out << "tensor " << name << ' ' << tensor->rank();
        for (std::size_t d : tensor->shape()) out << ' ' << d;
        out << '\n';
        const std::size_t cols = tensor->is_matrix() ? tensor->cols() : tensor->size();
        for (std::size_t i = 0; i < tensor->size(); ++i) {
            out << format_double((*tensor)[i]);
            out << ((i + 1) % cols == 0 ? '\n' : ' ');
        }
    }
    out << "end\n";
}

std::string checkpoint_text(const Model& model) {
    std::ostringstream ss;
    save_checkpoint(ss, model);
    return ss.str();
}

void save_checkpoint(const std::string& path, const Model& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint '" + path + "'");
    save_checkpoint(out, model);
    if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

namespace {

class Lines {
public:
    explicit Lines(std::istream& in) : in_(in) {}

    std::string need(const std::string& block) {
        std::string line;
        if (!std::getline(in_, line))
            throw CheckpointError("checkpoint: unexpected end in block '" + block + "'");
        ++number_;
        return line;
    }

    [[noreturn]] void fail(const std::string& message) const {
        throw CheckpointError("checkpoint line " + std::to_string(number_) + ": " + message);
    }

private:
    std::istream& in_;
    std::size_t number_ = 0;
};

std::vector<std::string> fields(const std::string& line) {
    std::istringstream ss(line);
    std::vector<std::string> out;
    for (std::string f; ss >> f;) out.push_back(f);
    return out;
}

std::size_t header_count(Lines& lines, const std::string& block) {
    const auto f = fields(lines.need(block));
    if (f.size() != 2 || f[0] != block) lines.fail("expected '" + block + " <count>'");
    try {
        return static_cast<std::size_t>(parse_uint(f[1], block));
    } catch (const Error& e) {
        lines.fail(e.what());
    }
}

}  // namespace

Model load_checkpoint(std::istream& in) {
    Lines lines(in);
    const auto head = fields(lines.need("header"));
    if (head.size() != 2 || head[0] != kCheckpointMagic) lines.fail("not a checkpoint (bad header)");
    if (head[1] != std::to_string(kCheckpointVersion))
        lines.fail("unsupported checkpoint version '" + head[1] + "', expected " + std::to_string(kCheckpointVersion));

    std::string cfg_text;
    for (std::size_t i = 0, n = header_count(lines, "config"); i < n; ++i) cfg_text += lines.need("config") + '\n';
    TrainConfig cfg;
    try {
        cfg = TrainConfig::from_text(cfg_text);
    } catch (const Error& e) {
        lines.fail(e.what());
    }

    const std::size_t vocab_size = header_count(lines, "vocab");
    Vocabulary vocab;
    for (std::size_t i = 0; i < vocab_size; ++i) {
        const std::string token = lines.need("vocab");
        if (i < vocab.size()) {
            if (vocab.token(i) != token) lines.fail("reserved token '" + vocab.token(i) + "' expected");
        } else if (vocab.add(token) != i) {
            lines.fail("duplicate vocabulary token '" + token + "'");
        }
    }
    if (vocab.size() != vocab_size) lines.fail("vocabulary is missing reserved tokens");

    Rng rng(0);
    Model model = Model::create(cfg, std::move(vocab), rng);
    ParamView view;
    model.collect(view);
    if (header_count(lines, "tensors") != view.size())
        lines.fail("expected " + std::to_string(view.size()) + " tensors for this configuration");

    for (const auto& [name, tensor] : view) {
        const std::string block = "tensor " + name;
        const auto f = fields(lines.need(block));
        if (f.size() < 3 || f[0] != "tensor" || f[1] != name) lines.fail("expected block '" + block + "'");
        std::vector<std::size_t> shape;
        for (std::size_t k = 3; k < f.size(); ++k) shape.push_back(static_cast<std::size_t>(parse_uint(f[k], block)));
        if (f[2] != std::to_string(shape.size()) || shape != tensor->shape())
            lines.fail(block + ": shape does not match " + tensor->shape_string());
        const std::size_t row_count = tensor->is_matrix() ? tensor->rows() : 1;
        const std::size_t cols = tensor->size() / row_count;
        for (std::size_t r = 0; r < row_count; ++r) {
            const auto values = fields(lines.need(block));
            if (values.size() != cols)
                lines.fail(block + ": expected " + std::to_string(cols) + " values, found " +
                           std::to_string(values.size()));
            for (std::size_t c = 0; c < cols; ++c) {
                try {
                    (*tensor)[r * cols + c] = parse_double(values[c], block);
                } catch (const Error& e) {
                    lines.fail(e.what());
                }
            }
        }
    }
    if (lines.need("end") != "end") lines.fail("expected 'end'");
    return model;
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read checkpoint '" + path + "'");
    return load_checkpoint(in);
}

namespace {

void fill_uniform(const ParamView& view, Rng& rng, double scale) {
    for (const auto& [name, tensor] : view)
        for (double& v : tensor->values()) v = rng.uniform(-scale, scale);
}

GradCheckEntry finish(std::string name, const GradCheckResult& r, double fallback, double threshold) {
    const double limit = threshold > 0.0 ? threshold : fallback;
    return {std::move(name), r, limit, r.max_rel_error < limit};
}

constexpr double kCheckEps = 1e-5;
constexpr double kInitRange = 0.5;

GradCheckEntry check_gru(Rng& rng, double threshold) {
    GruParams p = GruParams::zeros(6, 5);
    ParamSet inputs;
    inputs.add("h0", Tensor::zeros(5));
    for (int k = 0; k < 3; ++k) inputs.add("x" + std::to_string(k), Tensor::zeros(6));
    ParamView view;
    p.collect(view, "gru.");
    view.append(ParamView::of(inputs));
    fill_uniform(view, rng, kInitRange);
    const Tensor probe = rng.uniform_vector(5, -1.0, 1.0);

    const Objective fn = [&](Tape& t) {
        GruVars g = GruVars::bind(t, p);
        Var h = t.param(inputs.at("h0"));
        for (int k = 0; k < 3; ++k) h = gru_step(t, g, h, t.param(inputs.at("x" + std::to_string(k))));
        return t.dot(h, t.constant(probe));
    };
    return finish("gru_step", grad_check(fn, view, kCheckEps), 1e-4, threshold);
}

GradCheckEntry check_lstm(Rng& rng, double threshold) {
    LstmCellParams p = LstmCellParams::zeros(4, 5);
    ParamSet inputs;
    inputs.add("h0", Tensor::zeros(5));
    inputs.add("c0", Tensor::zeros(5));
    for (int k = 0; k < 3; ++k) inputs.add("x" + std::to_string(k), Tensor::zeros(4));
    ParamView view;
    p.collect(view, "lstm.");
    view.append(ParamView::of(inputs));
    fill_uniform(view, rng, kInitRange);
    const Tensor probe_h = rng.uniform_vector(5, -1.0, 1.0);
    const Tensor probe_c = rng.uniform_vector(5, -1.0, 1.0);

    const Objective fn = [&](Tape& t) {
        LstmCellVars c = LstmCellVars::bind(t, p);
        LstmStateVars s{t.param(inputs.at("h0")), t.param(inputs.at("c0"))};
        for (int k = 0; k < 3; ++k) s = lstm_step(t, c, s, t.param(inputs.at("x" + std::to_string(k))));
        return t.add(t.dot(s.h, t.constant(probe_h)), t.dot(s.c, t.constant(probe_c)));
    };
    return finish("lstm_step", grad_check(fn, view, kCheckEps), 1e-4, threshold);
}

GradCheckEntry check_reconstruct(Rng& rng, double threshold) {
    F2Params p{GruParams::zeros(4, 6), Tensor::zeros(6)};
    ParamSet states;
    for (int k = 0; k < 3; ++k) states.add("e" + std::to_string(k), Tensor::zeros(4));
    ParamView view;
    p.collect(view, "f2.");
    view.append(ParamView::of(states));
    fill_uniform(view, rng, kInitRange);
    const Tensor target = rng.uniform_vector(6, -0.9, 0.9);

    const Objective fn = [&](Tape& t) {
        F2Vars f2 = F2Vars::bind(t, p);
        std::vector<Var> vars;
        for (int k = 0; k < 3; ++k) vars.push_back(t.param(states.at("e" + std::to_string(k))));
        return t.sqnorm(t.sub(reconstruct(t, f2, vars), t.constant(target)));
    };
    return finish("reconstruct", grad_check(fn, view, kCheckEps), 1e-4, threshold);
}

// Smallest gap between the best and second-best score over every hop, so
// that the finite-difference probes cannot flip a selection.
double selection_gap(const MemoryPool& pool, const Tensor& q, const RetrievalParams& p, std::size_t hops) {
    std::vector<bool> chosen(pool.size(), false);
    Tensor query = q;
    double gap = 1.0;
    for (std::size_t j = 0; j < hops; ++j) {
        std::vector<std::pair<double, std::size_t>> scored;
        for (std::size_t k = 0; k < pool.size(); ++k)
            if (!chosen[k]) scored.emplace_back(score_entity(p, pool.slot(k).state, query), k);
        std::sort(scored.rbegin(), scored.rend());
        if (scored.size() > 1) gap = std::min(gap, scored[0].first - scored[1].first);
        const std::size_t best = scored[0].second;
        chosen[best] = true;
        Tape t;
        GruVars g = GruVars::freeze(t, p.q_gru);
        query = t.value(t.tanh(gru_step(t, g, t.constant(query), t.constant(pool.slot(best).state))));
    }
    return gap;
}

GradCheckEntry check_loss_full(Rng& rng, double threshold) {
    constexpr std::size_t d_ent = 4, d_sent = 5, vocab = 6, hops = 3;
    // gamma above the largest possible score difference keeps every hinge
    // strictly active, away from its kink.
    constexpr double gamma = 1.5, lambda = 1e-4, tiny_eps = 1e-12;
    QAModel model{RetrievalParams::zeros(d_ent, d_sent), ResponseParams::zeros(vocab, d_sent, d_ent)};
    ParamView view;
    model.collect(view);
    MemoryPool pool("check");
    Tensor query;
    for (int attempt = 0;; ++attempt) {
        fill_uniform(view, rng, kInitRange);
        pool.reset("check");
        for (const char* token : {"mary", "kitchen", "john", "garden"})
            pool.insert({token, rng.uniform_vector(d_ent, -1.0, 1.0), 0});
        query = rng.uniform_vector(d_sent, -1.0, 1.0);
        if (selection_gap(pool, query, model.retrieval, hops) > 1e-3) break;
        if (attempt > 100) throw Error("gradient check: no tie-free retrieval instance found");
    }
    const std::vector<std::string> related{"mary", "kitchen"};

    const Objective fn = [&](Tape& t) {
        RetrievalVars rv = RetrievalVars::bind(t, model.retrieval);
        ResponseVars sv = ResponseVars::bind(t, model.response);
        std::vector<Var> theta = rv.all();
        for (Var v : sv.all()) theta.push_back(v);
        FeatureResult f = output_feature(t, rv, pool, t.constant(query), hops, tiny_eps);
        Var dist = answer_word(t, sv, f.output);
        return loss_full(t, related, f.entity_scores, dist, 3, {}, gamma, lambda, theta);
    };
    return finish("loss_full", grad_check(fn, view, kCheckEps), 1e-3, threshold);
}

}  // namespace

std::vector<GradCheckEntry> run_gradchecks(std::uint64_t seed, double threshold) {
    Rng rng(seed);
    std::vector<GradCheckEntry> out;
    out.push_back(check_gru(rng, threshold));
    out.push_back(check_lstm(rng, threshold));
    out.push_back(check_reconstruct(rng, threshold));
    out.push_back(check_loss_full(rng, threshold));
    return out;
}

bool DataConfig::set(std::string_view key, std::string_view value) {
    bool known = false;
    world.set(key, value, &known);
    if (known) return true;
    auto words = [&](std::vector<std::string>& field) {
        field.clear();
        std::istringstream ss{std::string(value)};
        for (std::string w; std::getline(ss, w, ',');) {
            w = lowercase(w);
            w.erase(0, w.find_first_not_of(' '));
            w.erase(w.find_last_not_of(' ') + 1);
            if (!w.empty()) field.push_back(w);
        }
    };
    auto size = [&] { return static_cast<std::size_t>(parse_uint(value, key)); };
    if (key == "task") task = std::string(value);
    else if (key == "test_stories") test_stories = size();
    else if (key == "stories_per_class") polarity.stories_per_class = size();
    else if (key == "test_per_class") test_per_class = size();
    else if (key == "positive_words") words(polarity.positive_words);
    else if (key == "negative_words") words(polarity.negative_words);
    else if (key == "polarity_nouns") words(polarity.nouns);
    else if (key == "min_sentences") polarity.min_sentences = size();
    else if (key == "max_sentences") polarity.max_sentences = size();
    else if (key == "polarity_seed") polarity.seed = parse_uint(value, key);
    else return false;
    return true;
}

void DataConfig::validate() const {
    if (task == "where_is") world.validate();
    else if (task != "polarity") throw Error("unknown task '" + task + "' (expected where_is or polarity)");
}

namespace {

constexpr std::uint64_t kTestSeedMix = 0x9e3779b97f4a7c15ULL;

}  // namespace

GeneratedData generate(const DataConfig& cfg) {
    cfg.validate();
    GeneratedData out;
    if (cfg.task == "where_is") {
        out.train = simulate(cfg.world);
        WorldConfig test = cfg.world;
        test.stories = cfg.test_stories;
        test.seed = cfg.world.seed ^ kTestSeedMix;
        out.test = simulate(test);
    } else {
        out.train = simulate_polarity(cfg.polarity);
        PolarityConfig test = cfg.polarity;
        test.stories_per_class = cfg.test_per_class;
        test.seed = cfg.polarity.seed ^ kTestSeedMix;
        out.test = simulate_polarity(test);
    }
    return out;
}

}  // namespace emn
