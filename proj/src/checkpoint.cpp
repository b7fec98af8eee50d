#include "nmt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fnmatch.h>
#include <fstream>
#include <set>

#include "json.hpp"
#include "nmt/error.hpp"

namespace nmt {

using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'N', 'M', 'T', 'K', 'I', 'T', '0', '1'};
constexpr int kFormatVersion = 1;

std::string kind_name(ParamKind k) {
    switch (k) {
        case ParamKind::weight: return "weight";
        case ParamKind::bias: return "bias";
        case ParamKind::gain: return "gain";
    }
    return "weight";
}

ParamKind parse_kind(const std::string& s) {
    if (s == "weight") return ParamKind::weight;
    if (s == "bias") return ParamKind::bias;
    if (s == "gain") return ParamKind::gain;
    throw DataError("unknown parameter kind '" + s + "'");
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

std::size_t elem_bytes(ArrayDtype d) { return d == ArrayDtype::f64 ? 8 : 4; }

void append_array(std::string& blob, const Tensor& t, ArrayDtype d) {
    for (double x : t.values()) {
        if (d == ArrayDtype::f64) {
            put_u64(blob, std::bit_cast<std::uint64_t>(x));
        } else {
            const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(x));
            for (int i = 0; i < 4; ++i) blob.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
        }
    }
}

Tensor read_array(const std::string& blob, std::size_t offset, const Shape& shape, ArrayDtype d,
                  const std::string& name) {
    const std::size_t n = shape_size(shape);
    if (offset + n * elem_bytes(d) > blob.size())
        throw DataError("array '" + name + "' extends past the end of the file");
    Tensor t(shape);
    const auto* p = reinterpret_cast<const unsigned char*>(blob.data()) + offset;
    for (std::size_t i = 0; i < n; ++i) {
        if (d == ArrayDtype::f64) {
            t[i] = std::bit_cast<double>(get_u64(p + 8 * i));
        } else {
            std::uint32_t u = 0;
            for (int b = 3; b >= 0; --b) u = (u << 8) | p[4 * i + static_cast<std::size_t>(b)];
            t[i] = static_cast<double>(std::bit_cast<float>(u));
        }
    }
    return t;
}

// Appends arrays to blob and returns their manifest.
json pack(std::string& blob, const std::vector<NamedArray>& arrays, ArrayDtype d) {
    json manifest = json::array();
    for (const auto& a : arrays) {
        manifest.push_back({{"name", a.name},
                            {"shape", a.value.shape()},
                            {"offset", blob.size()},
                            {"kind", kind_name(a.kind)}});
        append_array(blob, a.value, d);
    }
    return manifest;
}

std::vector<NamedArray> unpack(const std::string& blob, const json& manifest, ArrayDtype d) {
    std::vector<NamedArray> out;
    for (const auto& m : manifest) {
        NamedArray a;
        a.name = m.at("name").get<std::string>();
        a.kind = parse_kind(m.value("kind", "weight"));
        a.value = read_array(blob, m.at("offset").get<std::size_t>(), m.at("shape").get<Shape>(), d, a.name);
        out.push_back(std::move(a));
    }
    return out;
}

void write_container(const std::filesystem::path& path, const json& header, const std::string& blob) {
    const std::string head = header.dump();
    std::string out(kMagic, sizeof(kMagic));
    put_u64(out, head.size());
    out += head;
    // Write to a sibling temp file first so a crash never leaves a truncated checkpoint.
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot write " + path.string());
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
        if (!f) throw DataError("write failed for " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

std::pair<json, std::string> read_container(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint " + path.string());
    std::string all((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (all.size() < 16 || std::memcmp(all.data(), kMagic, sizeof(kMagic)) != 0)
        throw DataError(path.string() + ": not an nmtkit checkpoint");
    const std::uint64_t len = get_u64(reinterpret_cast<const unsigned char*>(all.data()) + 8);
    if (16 + len > all.size()) throw DataError(path.string() + ": truncated header");
    json header;
    try {
        header = json::parse(all.substr(16, len));
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": corrupt header: " + e.what());
    }
    if (header.value("version", 0) > kFormatVersion)
        throw DataError(path.string() + ": unsupported checkpoint version");
    return {std::move(header), all.substr(16 + len)};
}

json options_json(const ModelOptions& o) {
    return {{"model_type", o.model_type},
            {"embedding_dim", o.embedding_dim},
            {"rnn_dim", o.rnn_dim},
            {"n_enc_layers", o.n_enc_layers},
            {"layer_norm", o.layer_norm},
            {"init_cgru", to_string(o.init_cgru)},
            {"tied_emb", to_string(o.tied_emb)},
            {"emb_dropout", o.emb_dropout},
            {"ctx_dropout", o.ctx_dropout},
            {"out_dropout", o.out_dropout},
            {"decay_c", o.decay_c},
            {"weight_init", to_string(o.weight_init)},
            {"recurrent_init", to_string(o.recurrent_init)}};
}

ModelOptions options_from_json(const json& j) {
    ModelOptions o;
    o.model_type = j.at("model_type").get<std::string>();
    o.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    o.rnn_dim = j.at("rnn_dim").get<std::size_t>();
    o.n_enc_layers = j.at("n_enc_layers").get<std::size_t>();
    o.layer_norm = j.at("layer_norm").get<bool>();
    o.init_cgru = parse_init_cgru(j.at("init_cgru").get<std::string>());
    o.tied_emb = parse_tied_emb(j.at("tied_emb").get<std::string>());
    o.emb_dropout = j.at("emb_dropout").get<double>();
    o.ctx_dropout = j.at("ctx_dropout").get<double>();
    o.out_dropout = j.at("out_dropout").get<double>();
    o.decay_c = j.at("decay_c").get<double>();
    o.weight_init = parse_init_method(j.at("weight_init").get<std::string>());
    o.recurrent_init = parse_init_method(j.value("recurrent_init", std::string("orthogonal")));
    return o;
}

std::vector<NamedArray> model_arrays(const Model& model) {
    std::vector<NamedArray> out;
    for (const Parameter* p : model.params().list()) out.push_back({p->name, p->value, p->kind});
    return out;
}

}  // namespace

ArrayDtype parse_dtype(const std::string& name) {
    if (name == "f64" || name == "float64") return ArrayDtype::f64;
    if (name == "f32" || name == "float32") return ArrayDtype::f32;
    throw ConfigError("unknown array dtype '" + name + "' (expected f64, f32)");
}

std::string to_string(ArrayDtype d) { return d == ArrayDtype::f64 ? "f64" : "f32"; }

void save_checkpoint(const std::filesystem::path& path, const Model& model, const ExperimentConfig& config,
                     const SnapshotState* snapshot, ArrayDtype dtype) {
    // Resuming must be exact, so snapshots always carry full precision.
    if (snapshot) dtype = ArrayDtype::f64;
    std::string blob;
    json header;
    header["format"] = "nmtkit-checkpoint";
    header["version"] = kFormatVersion;
    header["dtype"] = to_string(dtype);
    header["config"] = config.to_map();
    header["model_options"] = options_json(model.options());
    header["src_vocab"] = json::parse(model.src_vocab().to_json());
    header["trg_vocab"] = json::parse(model.trg_vocab().to_json());
    header["params"] = pack(blob, model_arrays(model), dtype);
    if (snapshot) {
        std::vector<NamedArray> slots;
        for (const auto& [name, t] : snapshot->optimizer_slots) slots.push_back({name, t, ParamKind::weight});
        json s;
        s["optimizer_steps"] = snapshot->optimizer_steps;
        s["optimizer_slots"] = pack(blob, slots, dtype);
        s["trainer_state"] = json::parse(snapshot->trainer_state.empty() ? "{}" : snapshot->trainer_state);
        s["iterator_epoch"] = snapshot->iterator_epoch;
        s["iterator_position"] = snapshot->iterator_position;
        s["dropout_rng_counter"] = snapshot->dropout_rng_counter;
        s["noise_rng_counter"] = snapshot->noise_rng_counter;
        header["snapshot"] = std::move(s);
    }
    write_container(path, header, blob);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    auto [header, blob] = read_container(path);
    if (header.value("format", "") != "nmtkit-checkpoint")
        throw DataError(path.string() + ": not a model checkpoint (bare array archive?)");
    try {
        const ArrayDtype dtype = parse_dtype(header.at("dtype").get<std::string>());
        Checkpoint c;
        c.config = ExperimentConfig::from_map(
            header.at("config").get<std::map<std::string, std::map<std::string, std::string>>>());
        c.model_options = options_from_json(header.at("model_options"));
        c.src_vocab = Vocabulary::from_json(header.at("src_vocab").dump());
        c.trg_vocab = Vocabulary::from_json(header.at("trg_vocab").dump());
        c.arrays = unpack(blob, header.at("params"), dtype);
        if (header.contains("snapshot")) {
            const json& s = header["snapshot"];
            SnapshotState st;
            st.optimizer_steps = s.at("optimizer_steps").get<std::uint64_t>();
            for (auto& a : unpack(blob, s.at("optimizer_slots"), dtype))
                st.optimizer_slots.emplace(a.name, std::move(a.value));
            st.trainer_state = s.at("trainer_state").dump();
            st.iterator_epoch = s.at("iterator_epoch").get<std::size_t>();
            st.iterator_position = s.at("iterator_position").get<std::size_t>();
            st.dropout_rng_counter = s.at("dropout_rng_counter").get<std::uint64_t>();
            st.noise_rng_counter = s.at("noise_rng_counter").get<std::uint64_t>();
            c.snapshot = std::move(st);
        }
        return c;
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": malformed checkpoint header: " + e.what());
    }
}

void assign_parameters(Model& model, const std::vector<NamedArray>& arrays) {
    std::set<std::string> have;
    for (const auto& a : arrays) have.insert(a.name);
    std::vector<std::string> missing, extra;
    for (const auto& n : model.params().names())
        if (!have.contains(n)) missing.push_back(n);
    for (const auto& a : arrays)
        if (!model.params().find(a.name)) extra.push_back(a.name);
    if (!missing.empty() || !extra.empty()) {
        std::string msg = "parameter set mismatch;";
        auto list = [&msg](const char* label, const std::vector<std::string>& v) {
            if (v.empty()) return;
            msg += std::string(" ") + label + ":";
            for (const auto& n : v) msg += " " + n;
            msg += ";";
        };
        list("missing", missing);
        list("extra", extra);
        msg.pop_back();
        throw DataError(msg);
    }
    for (const auto& a : arrays) {
        Parameter& p = model.params().get(a.name);
        if (p.value.shape() != a.value.shape())
            throw DataError("parameter " + a.name + ": shape " + shape_str(a.value.shape()) + " does not match " +
                            shape_str(p.value.shape()));
        p.value = a.value;
    }
}

std::unique_ptr<Model> instantiate(const Checkpoint& ckpt) {
    auto model = create_model(ckpt.model_options, ckpt.src_vocab, ckpt.trg_vocab, ckpt.config.seed);
    assign_parameters(*model, ckpt.arrays);
    return model;
}

std::unique_ptr<Model> load_model(const std::filesystem::path& path) { return instantiate(load_checkpoint(path)); }

void save_arrays(const std::filesystem::path& path, const std::vector<NamedArray>& arrays, ArrayDtype dtype) {
    std::string blob;
    json header;
    header["format"] = "nmtkit-arrays";
    header["version"] = kFormatVersion;
    header["dtype"] = to_string(dtype);
    header["params"] = pack(blob, arrays, dtype);
    write_container(path, header, blob);
}

std::vector<NamedArray> load_arrays(const std::filesystem::path& path) {
    auto [header, blob] = read_container(path);
    try {
        return unpack(blob, header.at("params"), parse_dtype(header.at("dtype").get<std::string>()));
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": malformed header: " + e.what());
    }
}

std::vector<NamedArray> select_arrays(const std::vector<NamedArray>& arrays, const std::vector<std::string>& patterns) {
    if (patterns.empty()) throw DataError("no parameter patterns given");
    std::vector<NamedArray> out;
    for (const auto& a : arrays) {
        for (const auto& p : patterns) {
            const std::string suffix = "*." + p;
            if (fnmatch(p.c_str(), a.name.c_str(), 0) == 0 || fnmatch(suffix.c_str(), a.name.c_str(), 0) == 0) {
                out.push_back(a);
                break;
            }
        }
    }
    if (out.empty()) {
        std::string msg = "no parameter matches";
        for (const auto& p : patterns) msg += " '" + p + "'";
        throw DataError(msg);
    }
    return out;
}

void extract_weights(const std::filesystem::path& checkpoint, const std::vector<std::string>& patterns,
                     const std::filesystem::path& out, ArrayDtype dtype) {
    save_arrays(out, select_arrays(load_checkpoint(checkpoint).arrays, patterns), dtype);
}

std::size_t load_pretrained(Model& model, const std::vector<NamedArray>& arrays) {
    for (const auto& a : arrays) {
        Parameter* p = model.params().find(a.name);
        if (!p) throw DataError("pre-trained array '" + a.name + "' does not name a parameter of this model");
        if (p->value.shape() != a.value.shape())
            throw DataError("pre-trained array '" + a.name + "': shape " + shape_str(a.value.shape()) +
                            " does not match " + shape_str(p->value.shape()));
    }
    for (const auto& a : arrays) model.params().get(a.name).value = a.value;
    return arrays.size();
}

}  // namespace nmt
