#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "invp/bank.hpp"
#include "invp/data.hpp"
#include "invp/discovery.hpp"
#include "invp/encoder.hpp"
#include "invp/error.hpp"
#include "invp/eval.hpp"
#include "invp/mining.hpp"
#include "invp/neighbors.hpp"
#include "invp/trainer.hpp"

namespace py = pybind11;
using namespace invp;

namespace {

std::span<const double> as_span(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

py::tuple dataset_tuple(const Dataset& d) {
    if (d.labels) return py::make_tuple(d.inputs, *d.labels);
    return py::make_tuple(d.inputs, py::none());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Invariance propagation core";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<BoundsError>(m, "BoundsError", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());
    py::register_exception<ContractError>(m, "ContractError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<MiningError>(m, "MiningError", base.ptr());
    py::register_exception<CheckpointError>(m, "CheckpointError", base.ptr());
    py::register_exception<GenerationError>(m, "GenerationError", base.ptr());
    py::register_exception<ComparisonError>(m, "ComparisonError", base.ptr());

    py::class_<EmbeddingBank>(m, "Bank")
        .def_static("random", &EmbeddingBank::random, py::arg("n"), py::arg("dim"), py::arg("seed"), py::arg("momentum") = 0.5)
        .def_static("from_rows", &EmbeddingBank::from_rows, py::arg("rows"), py::arg("momentum") = 0.5)
        .def_static("load", &EmbeddingBank::load)
        .def_property_readonly("size", &EmbeddingBank::size)
        .def_property_readonly("dim", &EmbeddingBank::dim)
        .def_property_readonly("momentum", &EmbeddingBank::momentum)
        .def_property_readonly("vectors", &EmbeddingBank::vectors)
        .def("update", [](EmbeddingBank& b, Index i, const Vector& v) { return b.update_entry(i, as_span(v)); })
        .def("save", &EmbeddingBank::save, py::arg("path"), py::arg("version") = 1);

    py::class_<NeighborTable>(m, "NeighborTable")
        .def_static("from_lists", &NeighborTable::from_lists, py::arg("lists"), py::arg("epoch_stamp") = 0)
        .def_property_readonly("size", &NeighborTable::size)
        .def_property_readonly("k_max", &NeighborTable::k_max)
        .def("neighbors", [](const NeighborTable& t, Index anchor) {
            std::vector<std::pair<Index, double>> out;
            for (const auto& nb : t.neighbors(anchor)) out.emplace_back(nb.index, nb.similarity);
            return out;
        });

    m.def("topk_all", &topk_all, py::arg("bank"), py::arg("k_max"), py::arg("epoch_stamp") = 0);
    m.def("propagate", [](const NeighborTable& t, Index anchor, Index k, Index l) { return propagate(t, anchor, k, l).members; },
          py::arg("table"), py::arg("anchor"), py::arg("k"), py::arg("l"));
    m.def("reachability_oracle", &reachability_oracle, py::arg("table"), py::arg("anchor"), py::arg("k"), py::arg("l"));
    m.def("knn_baseline", [](const NeighborTable& t, Index anchor, Index K) { return knn_baseline(t, anchor, K).members; },
          py::arg("table"), py::arg("anchor"), py::arg("K"));
    m.def(
        "hard_positives",
        [](const EmbeddingBank& bank, Index anchor, std::vector<Index> members, Index P) {
            PositiveSet pos;
            pos.anchor = anchor;
            std::sort(members.begin(), members.end());
            pos.members = std::move(members);
            return hard_positives(bank, anchor, pos, P);
        },
        py::arg("bank"), py::arg("anchor"), py::arg("members"), py::arg("P"));

    py::class_<EncoderState>(m, "Encoder")
        .def_static("load", &load_encoder)
        .def_property_readonly("widths", &EncoderState::widths)
        .def("encode", [](const EncoderState& e, const Matrix& x) { return encode(e, x); })
        .def("save", [](const EncoderState& e, const std::filesystem::path& p, std::uint32_t v) { save_encoder(p, e, v); },
             py::arg("path"), py::arg("version") = 1);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("k", &TrainConfig::k)
        .def_readwrite("l", &TrainConfig::l)
        .def_readwrite("P", &TrainConfig::P)
        .def_readwrite("M", &TrainConfig::M)
        .def_readwrite("tau", &TrainConfig::tau)
        .def_readwrite("lambda_inv", &TrainConfig::lambda_inv)
        .def_readwrite("T_ramp", &TrainConfig::T_ramp)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("bank_momentum", &TrainConfig::bank_momentum)
        .def_readwrite("knn_K", &TrainConfig::knn_K)
        .def_readwrite("embedding_dim", &TrainConfig::embedding_dim)
        .def_readwrite("hidden", &TrainConfig::hidden)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_property(
            "learning_rate", [](const TrainConfig& c) { return c.optimizer.learning_rate; },
            [](TrainConfig& c, double lr) { c.optimizer.learning_rate = lr; })
        .def_property(
            "strategy", [](const TrainConfig& c) { return to_string(c.strategy); },
            [](TrainConfig& c, const std::string& s) { c.strategy = parse_strategy(s); });

    m.def(
        "train",
        [](const Matrix& inputs, const TrainConfig& config) {
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = train(inputs, config);
            }
            py::list reports;
            for (const auto& rep : r.reports) reports.append(py::module_::import("json").attr("loads")(metrics_record(rep)));
            return py::make_tuple(r.encoder, r.bank, reports);
        },
        py::arg("inputs"), py::arg("config"), "Returns (encoder, bank, per-epoch metric dicts).");

    m.def(
        "gaussian_mixture",
        [](Index classes, Index per_class, Index dim, double separation, std::uint64_t seed) {
            return dataset_tuple(gen_gaussian_mixture(classes, per_class, dim, separation, seed));
        },
        py::arg("classes"), py::arg("per_class"), py::arg("dim"), py::arg("separation") = 3.0, py::arg("seed") = 0);
    m.def(
        "two_manifolds",
        [](Index per_class, Index dim, double gap, double noise, std::uint64_t seed) {
            return dataset_tuple(gen_two_manifolds(per_class, dim, gap, noise, seed));
        },
        py::arg("per_class"), py::arg("dim"), py::arg("gap") = 0.3, py::arg("noise") = 0.03, py::arg("seed") = 0);
    m.def("load_idx", [](const std::filesystem::path& p) { return dataset_tuple(load_idx(p)); });

    m.def(
        "knn_classify",
        [](const Matrix& train, const std::vector<int>& train_labels, const Matrix& test, const std::vector<int>& test_labels,
           Index K) { return knn_classify(train, train_labels, test, test_labels, K); },
        py::arg("train"), py::arg("train_labels"), py::arg("test"), py::arg("test_labels"), py::arg("K") = 20);
    m.def(
        "linear_probe",
        [](const Matrix& train, const std::vector<int>& train_labels, const Matrix& test, const std::vector<int>& test_labels,
           long epochs, std::uint64_t seed) {
            ProbeConfig c;
            c.epochs = epochs;
            c.seed = seed;
            const auto r = linear_probe(train, train_labels, test, test_labels, c);
            return py::make_tuple(r.train_accuracy, r.test_accuracy);
        },
        py::arg("train"), py::arg("train_labels"), py::arg("test"), py::arg("test_labels"), py::arg("epochs") = 100,
        py::arg("seed") = 0);
}
