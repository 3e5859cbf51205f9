// Python bindings for the core red-teaming operations.
//
// Matrices and vectors cross the boundary as plain lists (not numpy arrays):
// the toolchain's pybind11 predates numpy 2 support and its Eigen casters
// are unsafe against the installed numpy.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "p4d/harness.hpp"
#include "p4d/optimizer.hpp"
#include "p4d/runner.hpp"
#include "p4d/toy_world.hpp"

namespace py = pybind11;
using namespace p4d;

namespace {

std::vector<double> to_list(const Vec& v) {
    return {v.data(), v.data() + v.size()};
}

Vec to_vec(const std::vector<double>& v) {
    Vec out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = v[i];
    return out;
}

std::vector<std::vector<double>> to_lists(const Mat& m) {
    std::vector<std::vector<double>> out(m.rows());
    for (int r = 0; r < m.rows(); ++r) {
        out[r].resize(m.cols());
        for (int c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
    }
    return out;
}

Mat to_mat(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return Mat(0, 0);
    Mat m(rows.size(), rows.front().size());
    for (size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows.front().size())
            throw std::invalid_argument("ragged matrix");
        for (size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
    }
    return m;
}

}  // namespace

PYBIND11_MODULE(_p4d, m) {
    m.doc() = "Red-teaming toolkit for text-to-image safety mechanisms";

    py::class_<Vocabulary, std::shared_ptr<Vocabulary>>(m, "Vocabulary")
        .def_static("load", &Vocabulary::load)
        .def("save", &Vocabulary::save)
        .def("size", &Vocabulary::size)
        .def("dim", &Vocabulary::dim)
        .def("token", &Vocabulary::token)
        .def("id_of", &Vocabulary::id_of)
        .def("content_ids", &Vocabulary::content_ids)
        .def("embedding",
             [](const Vocabulary& v, int id) { return to_list(v.embedding(id)); });

    py::class_<SoftPrompt>(m, "SoftPrompt")
        .def(py::init<>())
        .def_property(
            "embeddings",
            [](const SoftPrompt& s) { return to_lists(s.embeddings); },
            [](SoftPrompt& s, const std::vector<std::vector<double>>& rows) {
                s.embeddings = to_mat(rows);
            })
        .def_readwrite("trainable", &SoftPrompt::trainable)
        .def("length", &SoftPrompt::length);

    py::class_<HardPrompt>(m, "HardPrompt")
        .def(py::init<>())
        .def_readwrite("token_ids", &HardPrompt::token_ids)
        .def_readwrite("text", &HardPrompt::text)
        .def_readwrite("source", &HardPrompt::source)
        .def_property_readonly(
            "embeddings", [](const HardPrompt& h) { return to_lists(h.embeddings); })
        .def("to_json", [](const HardPrompt& h) { return h.to_json().dump(); });

    py::class_<Encoding>(m, "Encoding")
        .def_readonly("token_ids", &Encoding::token_ids)
        .def_readonly("truncated", &Encoding::truncated)
        .def_property_readonly(
            "embeddings", [](const Encoding& e) { return to_lists(e.embeddings); })
        .def("content_ids", &Encoding::content_ids);

    m.def("encode_text", &encode_text, py::arg("prompt"), py::arg("vocab"),
          py::arg("context_limit"));
    m.def("project", &project);
    m.def("decode_ids", &decode_ids);
    m.def("init_p4d_n", &init_p4d_n);
    m.def("init_p4d_k",
          [](const std::vector<std::vector<double>>& base, int k,
             const Vocabulary& vocab, uint64_t seed, int context_limit) {
              return init_p4d_k(to_mat(base), k, vocab, seed, context_limit);
          });

    py::class_<GeneratedImage>(m, "GeneratedImage")
        .def_property_readonly(
            "pixels", [](const GeneratedImage& g) { return to_list(g.pixels); })
        .def_readonly("safety_active", &GeneratedImage::safety_active);

    py::class_<GeneratorHandle>(m, "GeneratorHandle")
        .def_readonly("model_id", &GeneratorHandle::model_id)
        .def_readonly("context_length", &GeneratorHandle::context_length);

    m.def("generate", &generate, py::arg("handle"), py::arg("prompt"),
          py::arg("seed"), py::arg("steps"), py::arg("guidance_scale"));
    m.def("predict_noise",
          [](const GeneratorHandle& h, const std::vector<double>& z_t,
             const std::vector<std::vector<double>>& cond, int t) {
              return to_list(predict_noise(h, to_vec(z_t), to_mat(cond), t));
          });
    m.def("forward_diffuse",
          [](const GeneratorHandle& h, const std::vector<double>& z, int t,
             const std::vector<double>& eps) {
              return to_list(forward_diffuse(h, to_vec(z), t, to_vec(eps)).z_t);
          });
    m.def("encode_image", [](const GeneratorHandle& h, const std::vector<double>& img) {
        return to_list(encode_image(h, to_vec(img)));
    });
    m.def("predict_noise_grad",
          [](const GeneratorHandle& h, const std::vector<double>& z_t,
             const std::vector<std::vector<double>>& cond, int t,
             const std::vector<double>& upstream) {
              Mat cond_grad;
              Vec eps = predict_noise_grad(h, to_vec(z_t), to_mat(cond), t,
                                           to_vec(upstream), cond_grad);
              return py::make_tuple(to_list(eps), to_lists(cond_grad));
          });

    py::class_<ToyWorldConfig>(m, "ToyWorldConfig")
        .def(py::init<>())
        .def_readwrite("embed_dim", &ToyWorldConfig::embed_dim)
        .def_readwrite("latent_dim", &ToyWorldConfig::latent_dim)
        .def_readwrite("max_timestep", &ToyWorldConfig::max_timestep)
        .def_readwrite("vocab_size", &ToyWorldConfig::vocab_size)
        .def_readwrite("context_length", &ToyWorldConfig::context_length)
        .def_readwrite("concept_tokens", &ToyWorldConfig::concept_tokens)
        .def_readwrite("rare_tokens", &ToyWorldConfig::rare_tokens)
        .def_readwrite("rare_norm", &ToyWorldConfig::rare_norm)
        .def_readwrite("concept_gain", &ToyWorldConfig::concept_gain)
        .def_readwrite("leak_gain", &ToyWorldConfig::leak_gain)
        .def_readwrite("base_scale", &ToyWorldConfig::base_scale)
        .def_readwrite("data_noise", &ToyWorldConfig::data_noise)
        .def_readwrite("train_steps", &ToyWorldConfig::train_steps)
        .def_readwrite("train_batch", &ToyWorldConfig::train_batch)
        .def_readwrite("train_lr", &ToyWorldConfig::train_lr)
        .def_readwrite("erase_steps", &ToyWorldConfig::erase_steps)
        .def_readwrite("erase_lr", &ToyWorldConfig::erase_lr)
        .def_readwrite("erase_eta", &ToyWorldConfig::erase_eta)
        .def_readwrite("erase_anchor", &ToyWorldConfig::erase_anchor)
        .def_readwrite("hidden", &ToyWorldConfig::hidden)
        .def_readwrite("sld_max_strength", &ToyWorldConfig::sld_max_strength)
        .def_readwrite("sld_strong_strength", &ToyWorldConfig::sld_strong_strength)
        .def_readwrite("negp_strength", &ToyWorldConfig::negp_strength)
        .def_readwrite("sample_steps", &ToyWorldConfig::sample_steps)
        .def_readwrite("default_guidance", &ToyWorldConfig::default_guidance);

    py::class_<ToyWorld>(m, "ToyWorld")
        .def_readonly("concept_text", &ToyWorld::concept_text)
        .def_readonly("final_train_loss", &ToyWorld::final_train_loss)
        .def_property_readonly("vocab",
                               [](const ToyWorld& w) { return w.vocab; })
        .def("standard_handle", &ToyWorld::standard_handle)
        .def("safe_handle", &ToyWorld::safe_handle)
        .def("unsafe_score",
             [](const ToyWorld& w, const std::vector<double>& image) {
                 return w.classifier.score(to_vec(image));
             })
        .def("save", &ToyWorld::save)
        .def_static("load", &ToyWorld::load);

    m.def("build_toy_world", &build_toy_world, py::arg("seed"),
          py::arg("config") = ToyWorldConfig{});

    py::class_<PromptRecord>(m, "PromptRecord")
        .def(py::init<>())
        .def_readwrite("id", &PromptRecord::id)
        .def_readwrite("prompt", &PromptRecord::prompt)
        .def_readwrite("seed", &PromptRecord::seed)
        .def_readwrite("guidance_scale", &PromptRecord::guidance_scale)
        .def_readwrite("category", &PromptRecord::category);

    m.def("baseline_random_n", &baseline_random_n);
    m.def("baseline_random_k", &baseline_random_k);
    m.def("baseline_shuffle", &baseline_shuffle);
    m.def("load_dataset", &load_dataset);
    m.def("save_dataset", &save_dataset);
    m.def("make_toy_dataset", &make_toy_dataset);
    m.def("failure_rate", &failure_rate);

    py::class_<OptimizerConfig>(m, "OptimizerConfig")
        .def(py::init<>())
        .def_readwrite("n", &OptimizerConfig::n)
        .def_readwrite("k", &OptimizerConfig::k)
        .def_readwrite("total_steps", &OptimizerConfig::total_steps)
        .def_readwrite("eval_interval", &OptimizerConfig::eval_interval)
        .def_readwrite("learning_rate", &OptimizerConfig::learning_rate)
        .def_readwrite("weight_decay", &OptimizerConfig::weight_decay)
        .def_readwrite("seed", &OptimizerConfig::seed)
        .def_readwrite("text_filter_active", &OptimizerConfig::text_filter_active)
        .def_readwrite("resample_noise", &OptimizerConfig::resample_noise)
        .def_readwrite("sample_steps", &OptimizerConfig::sample_steps)
        .def_property(
            "variant",
            [](const OptimizerConfig& c) { return to_string(c.variant); },
            [](OptimizerConfig& c, const std::string& s) {
                c.variant = variant_from_string(s);
            });

    py::class_<OptimizationResult>(m, "OptimizationResult")
        .def_readonly("best", &OptimizationResult::best)
        .def_readonly("best_score", &OptimizationResult::best_score)
        .def_readonly("loss_trace", &OptimizationResult::loss_trace)
        .def_readonly("steps", &OptimizationResult::steps)
        .def_readonly("aborted", &OptimizationResult::aborted)
        .def("to_json",
             [](const OptimizationResult& r) { return r.to_json().dump(); });

    m.def("debug_prompt", &debug_prompt, py::arg("record"), py::arg("standard"),
          py::arg("safe"), py::arg("config"),
          py::call_guard<py::gil_scoped_release>());
}
