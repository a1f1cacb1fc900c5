#include "emn/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "emn/tensor.hpp"

namespace emn {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

bool parse_bool(std::string_view text, std::string_view what) {
    if (text == "1" || text == "true" || text == "yes") return true;
    if (text == "0" || text == "false" || text == "no") return false;
    throw Error("invalid boolean for " + std::string(what) + ": '" + std::string(text) + "'");
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
    KeyValues out;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw Error("config line " + std::to_string(line_no) + ": expected key=value");
        const std::string key(trim(line.substr(0, eq)));
        if (key.empty()) throw Error("config line " + std::to_string(line_no) + ": empty key");
        out[key] = std::string(trim(line.substr(eq + 1)));
    }
    return out;
}

KeyValues read_key_values(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_key_values(ss.str());
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(std::string_view text, std::string_view what) {
    const std::string s(text);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v))
        throw Error("invalid number for " + std::string(what) + ": '" + s + "'");
    return v;
}

std::uint64_t parse_uint(std::string_view text, std::string_view what) {
    const std::string s(text);
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (s.empty() || s[0] == '-' || end != s.c_str() + s.size() || errno == ERANGE)
        throw Error("invalid integer for " + std::string(what) + ": '" + s + "'");
    return v;
}

void TrainConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0)) throw Error(std::string("config: ") + name + " must be positive");
    };
    if (d_sent < 1 || d_ent < 1) throw Error("config: dimensions must be at least 1");
    if (max_hops < 1) throw Error("config: max_hops must be at least 1");
    positive(eps, "eps");
    positive(gamma, "gamma");
    positive(mem_lr, "mem_lr");
    positive(qa_lr, "qa_lr");
    positive(ae_lr, "ae_lr");
    positive(f2_lr, "f2_lr");
    if (lambda < 0.0) throw Error("config: lambda must be non-negative");
    if (ae_clip < 0.0) throw Error("config: ae_clip must be non-negative");
}

bool TrainConfig::set(std::string_view key, std::string_view value) {
    auto size = [&](std::size_t& field) { field = static_cast<std::size_t>(parse_uint(value, key)); };
    auto real = [&](double& field) { field = parse_double(value, key); };
    if (key == "d_sent") size(d_sent);
    else if (key == "d_ent") size(d_ent);
    else if (key == "max_hops") size(max_hops);
    else if (key == "eps") real(eps);
    else if (key == "gamma") real(gamma);
    else if (key == "lambda") real(lambda);
    else if (key == "mem_steps") size(mem_steps);
    else if (key == "mem_lr") real(mem_lr);
    else if (key == "qa_lr") real(qa_lr);
    else if (key == "ae_lr") real(ae_lr);
    else if (key == "f2_lr") real(f2_lr);
    else if (key == "ae_epochs") size(ae_epochs);
    else if (key == "f2_epochs") size(f2_epochs);
    else if (key == "qa_epochs") size(qa_epochs);
    else if (key == "ae_clip") real(ae_clip);
    else if (key == "ae_target_accuracy") real(ae_target_accuracy);
    else if (key == "full_supervision") full_supervision = parse_bool(value, key);
    else if (key == "seed") seed = parse_uint(value, key);
    else if (key == "embeddings") embeddings = std::string(value);
    else return false;
    return true;
}

void TrainConfig::apply(const KeyValues& values) {
    for (const auto& [k, v] : values) set(k, v);
}

std::string TrainConfig::to_text() const {
    std::string s;
    auto line = [&s](const char* key, const std::string& value) {
        s += key;
        s += '=';
        s += value;
        s += '\n';
    };
    line("d_sent", std::to_string(d_sent));
    line("d_ent", std::to_string(d_ent));
    line("max_hops", std::to_string(max_hops));
    line("eps", format_double(eps));
    line("gamma", format_double(gamma));
    line("lambda", format_double(lambda));
    line("mem_steps", std::to_string(mem_steps));
    line("mem_lr", format_double(mem_lr));
    line("qa_lr", format_double(qa_lr));
    line("ae_lr", format_double(ae_lr));
    line("f2_lr", format_double(f2_lr));
    line("ae_epochs", std::to_string(ae_epochs));
    line("f2_epochs", std::to_string(f2_epochs));
    line("qa_epochs", std::to_string(qa_epochs));
    line("ae_clip", format_double(ae_clip));
    line("ae_target_accuracy", format_double(ae_target_accuracy));
    line("full_supervision", full_supervision ? "true" : "false");
    line("seed", std::to_string(seed));
    line("embeddings", embeddings);
    return s;
}

TrainConfig TrainConfig::from_text(std::string_view text) {
    TrainConfig cfg;
    for (const auto& [k, v] : parse_key_values(text)) {
        if (!cfg.set(k, v)) throw Error("unknown config key '" + k + "'");
    }
    return cfg;
}

}  // namespace emn
