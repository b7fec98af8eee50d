#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "nmt/checkpoint.hpp"
#include "nmt/config.hpp"
#include "nmt/decode.hpp"
#include "nmt/error.hpp"
#include "nmt/metrics.hpp"
#include "nmt/subword.hpp"
#include "nmt/trainer.hpp"

namespace py = pybind11;

namespace {

py::array_t<double> to_numpy(const nmt::Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> a(shape);
    std::copy(t.values().begin(), t.values().end(), a.mutable_data());
    return a;
}

// A model plus the configuration it is saved with.
struct PyModel {
    std::unique_ptr<nmt::Model> model;
    nmt::ExperimentConfig config;

    static PyModel load(const std::filesystem::path& path) {
        auto ckpt = nmt::load_checkpoint(path);
        PyModel m;
        m.model = nmt::instantiate(ckpt);
        m.config = ckpt.config;
        return m;
    }

    static PyModel create(const std::string& model_type, const nmt::Vocabulary& src, const nmt::Vocabulary& trg,
                          std::int64_t embedding_dim, std::int64_t rnn_dim, std::uint64_t seed,
                          const std::vector<std::string>& options) {
        std::string text = "[training]\nmodel_type: " + model_type + "\nseed: " + std::to_string(seed) +
                           "\n[model]\nembedding_dim: " + std::to_string(embedding_dim) +
                           "\nrnn_dim: " + std::to_string(rnn_dim) + "\n";
        PyModel m;
        m.config = nmt::parse_config_text(text, options, "<python>");
        m.model = nmt::create_model(m.config.model_options(), src, trg, seed);
        return m;
    }

    py::list translate(const std::vector<std::string>& lines, std::size_t beam, std::size_t n_best,
                       std::size_t workers) const {
        std::vector<std::vector<int>> sources;
        for (const auto& l : lines) sources.push_back(model->src_vocab().encode_line(l));
        nmt::TranslateOptions opts;
        opts.beam.beam_size = beam;
        opts.beam.n_best = n_best;
        opts.workers = workers;
        const nmt::Model* models[] = {model.get()};
        std::vector<nmt::Translation> out;
        {
            py::gil_scoped_release release;
            out = nmt::translate_all(models, sources, opts);
        }
        py::list result;
        for (const auto& t : out) {
            py::list nbest;
            for (const auto& h : t.nbest) nbest.append(py::make_tuple(nmt::hypothesis_text(h, model->trg_vocab()), h.score));
            result.append(nbest);
        }
        return result;
    }

    std::vector<double> rescore(const std::vector<std::string>& sources, const std::vector<std::string>& hyps) {
        std::vector<nmt::RescoreItem> items;
        for (std::size_t i = 0; i < hyps.size(); ++i) items.push_back({i, hyps[i], false, ""});
        nmt::Model* models[] = {model.get()};
        return nmt::rescore(models, sources, items);
    }

    py::dict parameters() const {
        py::dict d;
        for (const auto* p : model->params().list()) d[py::str(p->name)] = to_numpy(p->value);
        return d;
    }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Attentive GRU sequence-to-sequence toolkit";

    py::register_exception<nmt::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<nmt::DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<nmt::ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<nmt::NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<nmt::Vocabulary>(m, "Vocabulary")
        .def(py::init<>())
        .def_static("from_lines", &nmt::build_vocab_from_lines, py::arg("lines"), py::arg("n_words") = 0)
        .def_static("from_tokens", &nmt::Vocabulary::from_tokens, py::arg("tokens"),
                    py::arg("freqs") = std::vector<std::uint64_t>{})
        .def_static("load", &nmt::Vocabulary::load)
        .def("save", &nmt::Vocabulary::save)
        .def("__len__", &nmt::Vocabulary::size)
        .def("__contains__", [](const nmt::Vocabulary& v, const std::string& t) { return v.contains(t); })
        .def("id", [](const nmt::Vocabulary& v, const std::string& t) { return v.id(t); })
        .def("token", &nmt::Vocabulary::token)
        .def_property_readonly("tokens", &nmt::Vocabulary::tokens)
        .def("encode", [](const nmt::Vocabulary& v, const std::string& line) { return v.encode_line(line); })
        .def("decode", [](const nmt::Vocabulary& v, const std::vector<int>& ids) { return v.decode_line(ids); })
        .def("to_json", &nmt::Vocabulary::to_json)
        .def("__eq__", &nmt::Vocabulary::operator==);

    py::class_<nmt::BpeModel>(m, "BpeModel")
        .def_static("learn", &nmt::bpe_learn, py::arg("lines"), py::arg("num_merges"), py::arg("min_frequency") = 2)
        .def_static("from_text", &nmt::BpeModel::from_text)
        .def_static("load", &nmt::BpeModel::load)
        .def("save", &nmt::BpeModel::save)
        .def("to_text", &nmt::BpeModel::to_text)
        .def("apply", &nmt::BpeModel::apply)
        .def("segment", &nmt::BpeModel::segment)
        .def_property_readonly("merges", &nmt::BpeModel::merges)
        .def("__len__", &nmt::BpeModel::size);

    m.def(
        "apply_filters",
        [](const std::string& spec, const std::string& line) { return nmt::apply_filters(nmt::parse_filters(spec), line); },
        py::arg("spec"), py::arg("line"));

    m.def(
        "bleu",
        [](const std::vector<std::string>& hyps, const std::vector<std::string>& refs, const std::string& variant,
           bool lowercase) {
            if (variant != "multi_bleu" && variant != "v13a")
                throw nmt::ConfigError("unknown BLEU variant '" + variant + "' (expected multi_bleu, v13a)");
            const auto v = variant == "v13a" ? nmt::BleuVariant::v13a : nmt::BleuVariant::multi_bleu;
            return nmt::bleu_corpus(hyps, refs, v, lowercase).value;
        },
        py::arg("hypotheses"), py::arg("references"), py::arg("variant") = "multi_bleu", py::arg("lowercase") = false);
    m.def("tokenize_v13a", [](const std::string& s) { return nmt::tokenize_v13a(s); });
    m.def(
        "perplexity", [](double total_nll, double n_tokens) { return nmt::perplexity(total_nll, n_tokens).value; },
        py::arg("total_nll"), py::arg("n_tokens"));

    m.def(
        "parse_config",
        [](const std::string& text, const std::vector<std::string>& overrides) {
            return nmt::parse_config_text(text, overrides).to_map();
        },
        py::arg("text"), py::arg("overrides") = std::vector<std::string>{});
    m.def(
        "checkpoint_name",
        [](const std::string& text, const std::vector<std::string>& overrides) {
            return nmt::checkpoint_name(nmt::parse_config_text(text, overrides));
        },
        py::arg("text"), py::arg("overrides") = std::vector<std::string>{});
    m.def("registered_models", &nmt::registered_models);

    py::class_<PyModel>(m, "Model")
        .def_static("load", &PyModel::load, py::arg("path"))
        .def_static("create", &PyModel::create, py::arg("model_type"), py::arg("src_vocab"), py::arg("trg_vocab"),
                    py::arg("embedding_dim") = 16, py::arg("rnn_dim") = 16, py::arg("seed") = 1234,
                    py::arg("options") = std::vector<std::string>{})
        .def("save", [](const PyModel& self, const std::filesystem::path& path) {
            nmt::save_checkpoint(path, *self.model, self.config);
        })
        .def_property_readonly("src_vocab", [](const PyModel& self) { return self.model->src_vocab(); })
        .def_property_readonly("trg_vocab", [](const PyModel& self) { return self.model->trg_vocab(); })
        .def("parameters", &PyModel::parameters)
        .def("translate", &PyModel::translate, py::arg("sentences"), py::arg("beam_size") = 12, py::arg("n_best") = 1,
             py::arg("workers") = 1)
        .def("rescore", &PyModel::rescore, py::arg("sources"), py::arg("hypotheses"))
        .def("perplexity", [](const PyModel& self, const std::vector<std::string>& src,
                              const std::vector<std::string>& trg) {
            const auto corpus = self.model->uses_source()
                                    ? nmt::make_parallel_corpus(src, trg, self.model->src_vocab(), self.model->trg_vocab())
                                    : nmt::make_monolingual_corpus(trg, self.model->trg_vocab());
            return nmt::validate_perplexity(*self.model, corpus, 32).value;
        });

    m.def(
        "train",
        [](const std::filesystem::path& config, const std::vector<std::string>& overrides) {
            const auto cfg = nmt::parse_config(config, overrides);
            nmt::TrainingReport r;
            {
                py::gil_scoped_release release;
                r = nmt::run_training(cfg);
            }
            py::dict d;
            d["run_name"] = r.run_name;
            d["updates"] = r.updates;
            d["stop_reason"] = nmt::to_string(r.reason);
            d["best"] = r.best ? py::cast(r.best->value) : py::none();
            d["best_checkpoint"] = r.best_checkpoint;
            d["losses"] = r.losses;
            return d;
        },
        py::arg("config"), py::arg("overrides") = std::vector<std::string>{});
}
