#include "nmt/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "nmt/data.hpp"
#include "nmt/error.hpp"
#include "nmt/init.hpp"
#include "nmt/metrics.hpp"
#include "nmt/subword.hpp"

namespace nmt {

namespace {

using C = ExperimentConfig;

struct Field {
    std::string section;
    std::string key;
    std::function<void(C&, const std::string&)> set;
    std::function<std::optional<std::string>(const C&)> get;  // nullopt: not set
};

std::string fmt_double(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

// Shortest round-trip digits without an exponent: 0.0004 rather than 4e-04.
std::string fmt_fixed(double v) {
    char buf[512];
    auto r = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed);
    return std::string(buf, r.ptr);
}

std::int64_t parse_int(const std::string& v) {
    std::int64_t out = 0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size())
        throw ConfigError("expected an integer, got '" + v + "'");
    return out;
}

double parse_double(const std::string& v) {
    double out = 0.0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size())
        throw ConfigError("expected a number, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "True" || v == "true") return true;
    if (v == "False" || v == "false") return false;
    throw ConfigError("expected True or False, got '" + v + "'");
}

Field str_field(std::string section, std::string key, std::string C::*m,
                std::function<void(const std::string&)> check = nullptr) {
    return {section, key,
            [m, check](C& c, const std::string& v) {
                if (check) check(v);
                c.*m = v;
            },
            [m](const C& c) { return std::optional<std::string>(c.*m); }};
}

Field int_field(std::string section, std::string key, std::int64_t C::*m, std::int64_t min_value) {
    return {section, key,
            [m, min_value](C& c, const std::string& v) {
                const auto x = parse_int(v);
                if (x < min_value) throw ConfigError("must be >= " + std::to_string(min_value) + ", got " + v);
                c.*m = x;
            },
            [m](const C& c) { return std::optional<std::string>(std::to_string(c.*m)); }};
}

Field uint_field(std::string section, std::string key, std::uint64_t C::*m) {
    return {section, key,
            [m](C& c, const std::string& v) {
                const auto x = parse_int(v);
                if (x < 0) throw ConfigError("must be >= 0, got " + v);
                c.*m = static_cast<std::uint64_t>(x);
            },
            [m](const C& c) { return std::optional<std::string>(std::to_string(c.*m)); }};
}

Field dbl_field(std::string section, std::string key, double C::*m, double lo, double hi, bool hi_open = false) {
    return {section, key,
            [m, lo, hi, hi_open](C& c, const std::string& v) {
                const double x = parse_double(v);
                if (!(x >= lo) || (hi_open ? !(x < hi) : !(x <= hi)))
                    throw ConfigError("out of range: " + v);
                c.*m = x;
            },
            [m](const C& c) { return std::optional<std::string>(fmt_double(c.*m)); }};
}

Field bool_field(std::string section, std::string key, bool C::*m) {
    return {section, key, [m](C& c, const std::string& v) { c.*m = parse_bool(v); },
            [m](const C& c) { return std::optional<std::string>(c.*m ? "True" : "False"); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        const double inf = std::numeric_limits<double>::infinity();
        const std::string T = "training", M = "model", D = "model.dicts", A = "model.data";
        std::vector<Field> f;
        f.push_back(str_field(T, "model_type", &C::model_type, [](const std::string& v) {
            if (v.empty()) throw ConfigError("must not be empty");
        }));
        f.push_back(int_field(T, "patience", &C::patience, 0));
        f.push_back(int_field(T, "valid_freq", &C::valid_freq, 0));
        f.push_back(str_field(T, "valid_metric", &C::valid_metric, [](const std::string& v) {
            if (v != "meteor") parse_metric(v);
        }));
        f.push_back(int_field(T, "valid_start", &C::valid_start, 0));
        f.push_back(int_field(T, "valid_beam", &C::valid_beam, 1));
        f.push_back(int_field(T, "valid_njobs", &C::valid_njobs, 1));
        f.push_back(bool_field(T, "valid_save_hyp", &C::valid_save_hyp));
        f.push_back(dbl_field(T, "decay_c", &C::decay_c, 0.0, inf));
        f.push_back(dbl_field(T, "clip_c", &C::clip_c, 0.0, inf));
        f.push_back(uint_field(T, "seed", &C::seed));
        f.push_back(int_field(T, "save_best_n", &C::save_best_n, 1));
        f.push_back(str_field(T, "device_id", &C::device_id));
        f.push_back(int_field(T, "snapshot_freq", &C::snapshot_freq, 0));
        f.push_back(int_field(T, "max_epochs", &C::max_epochs, 1));
        f.push_back(int_field(T, "max_updates", &C::max_updates, 0));
        f.push_back(int_field(T, "disp_freq", &C::disp_freq, 0));
        f.push_back(dbl_field(T, "grad_noise_eta", &C::grad_noise_eta, 0.0, inf));
        f.push_back(dbl_field(T, "grad_noise_gamma", &C::grad_noise_gamma, 0.0, inf));

        f.push_back(str_field(M, "tied_emb", &C::tied_emb, [](const std::string& v) { parse_tied_emb(v); }));
        f.push_back(bool_field(M, "layer_norm", &C::layer_norm));
        f.push_back(str_field(M, "shuffle_mode", &C::shuffle_mode, [](const std::string& v) { parse_shuffle_mode(v); }));
        f.push_back(str_field(M, "filter", &C::filter, [](const std::string& v) { parse_filters(v); }));
        f.push_back(int_field(M, "n_words_src", &C::n_words_src, 0));
        f.push_back(int_field(M, "n_words_trg", &C::n_words_trg, 0));
        f.push_back(str_field(M, "save_path", &C::save_path));
        f.push_back(int_field(M, "rnn_dim", &C::rnn_dim, 1));
        f.push_back(int_field(M, "embedding_dim", &C::embedding_dim, 1));
        f.push_back(str_field(M, "weight_init", &C::weight_init, [](const std::string& v) { parse_init_method(v); }));
        f.push_back(str_field(M, "recurrent_init", &C::recurrent_init,
                              [](const std::string& v) { parse_init_method(v); }));
        f.push_back(int_field(M, "batch_size", &C::batch_size, 1));
        f.push_back(str_field(M, "optimizer", &C::optimizer, [](const std::string& v) { parse_optimizer(v); }));
        f.push_back({M, "lrate",
                     [](C& c, const std::string& v) {
                         const double x = parse_double(v);
                         if (!(x > 0.0)) throw ConfigError("must be > 0, got " + v);
                         c.lrate = x;
                     },
                     [](const C& c) {
                         return c.lrate ? std::optional<std::string>(fmt_double(*c.lrate)) : std::nullopt;
                     }});
        f.push_back(dbl_field(M, "emb_dropout", &C::emb_dropout, 0.0, 1.0, true));
        f.push_back(dbl_field(M, "ctx_dropout", &C::ctx_dropout, 0.0, 1.0, true));
        f.push_back(dbl_field(M, "out_dropout", &C::out_dropout, 0.0, 1.0, true));
        f.push_back(int_field(M, "n_enc_layers", &C::n_enc_layers, 0));
        f.push_back(str_field(M, "init_cgru", &C::init_cgru, [](const std::string& v) { parse_init_cgru(v); }));
        f.push_back(int_field(M, "max_seq_len", &C::max_seq_len, 0));
        f.push_back(str_field(M, "pretrained", &C::pretrained));

        f.push_back(str_field(D, "src", &C::dict_src));
        f.push_back(str_field(D, "trg", &C::dict_trg));

        f.push_back(str_field(A, "train_src", &C::train_src));
        f.push_back(str_field(A, "train_trg", &C::train_trg));
        f.push_back(str_field(A, "valid_src", &C::valid_src));
        f.push_back(str_field(A, "valid_trg", &C::valid_trg));
        f.push_back(str_field(A, "valid_trg_orig", &C::valid_trg_orig));
        return f;
    }();
    return table;
}

const Field* find_field(const std::string& section, const std::string& key) {
    for (const auto& f : fields())
        if (f.key == key && (section.empty() || f.section == section)) return &f;
    return nullptr;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

void note_device(C& c) {
    if (c.device_id != "auto" && c.device_id != "cpu")
        c.warnings.push_back("device_id '" + c.device_id + "' ignored: CPU-only build");
}

}  // namespace

double ExperimentConfig::effective_lrate() const {
    return lrate ? *lrate : default_lrate(parse_optimizer(optimizer));
}

ModelOptions ExperimentConfig::model_options() const {
    ModelOptions o;
    o.model_type = model_type;
    o.embedding_dim = static_cast<std::size_t>(embedding_dim);
    o.rnn_dim = static_cast<std::size_t>(rnn_dim);
    o.n_enc_layers = static_cast<std::size_t>(n_enc_layers);
    o.layer_norm = layer_norm;
    o.init_cgru = parse_init_cgru(init_cgru);
    o.tied_emb = parse_tied_emb(tied_emb);
    o.emb_dropout = emb_dropout;
    o.ctx_dropout = ctx_dropout;
    o.out_dropout = out_dropout;
    o.decay_c = decay_c;
    o.weight_init = parse_init_method(weight_init);
    o.recurrent_init = parse_init_method(recurrent_init);
    return o;
}

OptimizerOptions ExperimentConfig::optimizer_options() const {
    OptimizerOptions o = OptimizerOptions::defaults(parse_optimizer(optimizer));
    o.lrate = effective_lrate();
    return o;
}

std::map<std::string, std::map<std::string, std::string>> ExperimentConfig::to_map() const {
    std::map<std::string, std::map<std::string, std::string>> out;
    for (const auto& f : fields())
        if (auto v = f.get(*this)) out[f.section][f.key] = *v;
    return out;
}

ExperimentConfig ExperimentConfig::from_map(const std::map<std::string, std::map<std::string, std::string>>& m) {
    ExperimentConfig c;
    for (const auto& [section, kv] : m)
        for (const auto& [key, value] : kv) {
            const Field* f = find_field(section, key);
            if (!f) throw ConfigError("unknown option '" + key + "' in section [" + section + "]");
            try {
                f->set(c, value);
            } catch (const ConfigError& e) {
                throw ConfigError("option '" + key + "': " + e.what());
            }
        }
    return c;
}

std::string ExperimentConfig::to_ini() const {
    std::string out;
    for (const auto& [section, kv] : to_map()) {
        out += "[" + section + "]\n";
        for (const auto& [k, v] : kv) out += k + ": " + v + "\n";
    }
    return out;
}

void ExperimentConfig::validate() const {
    parse_metric(valid_metric);
    if (!model_registered(model_type)) throw ConfigError("model_type '" + model_type + "' is not a registered model");
    const auto tie = parse_tied_emb(tied_emb);
    if (tie == TiedEmb::three_way && dict_src != dict_trg)
        throw ConfigError("tied_emb 3way requires a shared vocabulary (dicts src and trg must be the same file)");
    if (grad_noise_eta > 0.0 && parse_optimizer(optimizer) != OptimizerKind::adam)
        throw ConfigError("gradient noise is only supported with the adam optimizer");
}

ExperimentConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides,
                                   const std::string& source_name) {
    ExperimentConfig c;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    std::size_t line_no = 0;
    std::map<std::string, bool> seen_sections;
    std::map<std::string, std::size_t> seen_keys;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string where = source_name + ":" + std::to_string(line_no) + ": ";
        std::string line = raw;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + "malformed section header '" + line + "'");
            section = trim(line.substr(1, line.size() - 2));
            bool known = false;
            for (const auto& f : fields()) known = known || f.section == section;
            if (!known) throw ConfigError(where + "unknown section [" + section + "]");
            seen_sections[section] = true;
            continue;
        }
        const auto colon = line.find(':');
        if (colon == std::string::npos) throw ConfigError(where + "expected 'key: value', got '" + line + "'");
        if (section.empty()) throw ConfigError(where + "option outside of any section");
        const std::string key = trim(line.substr(0, colon));
        const std::string value = trim(line.substr(colon + 1));
        const Field* f = find_field(section, key);
        if (!f) throw ConfigError(where + "unknown option '" + key + "' in section [" + section + "]");
        if (auto it = seen_keys.find(key); it != seen_keys.end())
            throw ConfigError(where + "option '" + key + "' already set on line " + std::to_string(it->second));
        seen_keys[key] = line_no;
        try {
            f->set(c, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + "option '" + key + "': " + e.what());
        }
    }
    for (const char* required : {"training", "model"})
        if (!seen_sections.contains(required))
            throw ConfigError(source_name + ": missing mandatory section [" + std::string(required) + "]");

    for (const auto& ov : overrides) {
        const auto colon = ov.find(':');
        if (colon == std::string::npos) throw ConfigError("override '" + ov + "' is not of the form key:value");
        const std::string key = trim(ov.substr(0, colon));
        const Field* f = find_field("", key);
        if (!f) throw ConfigError("override '" + ov + "': unknown option '" + key + "'");
        try {
            f->set(c, trim(ov.substr(colon + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError("override '" + ov + "': " + e.what());
        }
    }
    if (!model_registered(c.model_type))
        throw ConfigError("model_type '" + c.model_type + "' is not a registered model");
    note_device(c);
    return c;
}

ExperimentConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open configuration file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), overrides, path.string());
}

std::filesystem::path expand_path(const std::string& p) {
    if (p.rfind("~/", 0) == 0 || p == "~") {
        const char* home = std::getenv("HOME");
        if (home) return std::filesystem::path(home) / p.substr(p.size() > 1 ? 2 : 1);
    }
    return p;
}

std::uint64_t config_hash(const ExperimentConfig& config) {
    const std::string text = config.to_ini();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string checkpoint_name(const ExperimentConfig& config) {
    char hash[9];
    std::snprintf(hash, sizeof(hash), "%08x", static_cast<unsigned>(config_hash(config) & 0xffffffffu));
    std::string name = config.model_type + "-e" + std::to_string(config.embedding_dim) + "-r" +
                       std::to_string(config.rnn_dim) + "-" + config.optimizer + "_" +
                       fmt_fixed(config.effective_lrate()) + "-" + hash;
    for (auto& ch : name) {
        const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') ||
                        ch == '.' || ch == '_' || ch == '-';
        if (!ok) ch = '_';
    }
    return name;
}

}  // namespace nmt
