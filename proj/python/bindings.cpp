#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "stylevec/analysis.hpp"
#include "stylevec/cli.hpp"
#include "stylevec/error.hpp"
#include "stylevec/fixtures.hpp"
#include "stylevec/lora.hpp"
#include "stylevec/merge.hpp"
#include "stylevec/parallel.hpp"
#include "stylevec/taskvector.hpp"

namespace py = pybind11;
using namespace stylevec;

namespace {

Dtype dtype_arg(const std::string& name) {
    if (auto d = parse_dtype(name)) return *d;
    throw Error(ErrorCode::InvalidArgument, "unknown dtype '" + name + "'");
}

LayerClass class_arg(const std::string& name) {
    if (auto c = parse_layer_class(name)) return *c;
    throw Error(ErrorCode::InvalidArgument, "unknown layer class '" + name + "'");
}

py::array_t<float> to_numpy(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<float> out(shape);
    auto values = t.to_floats();
    std::copy(values.begin(), values.end(), out.mutable_data());
    return out;
}

Tensor from_numpy(const py::array_t<float, py::array::c_style | py::array::forcecast>& a, const std::string& dtype) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor::from_floats(std::span<const float>(a.data(), static_cast<std::size_t>(a.size())), shape,
                               dtype_arg(dtype));
}

py::object cosine_obj(const Cosine& c) { return c ? py::cast(*c) : py::none(); }

py::list matrix_obj(const CosineMatrix& m) {
    py::list rows;
    for (const auto& row : m) {
        py::list r;
        for (const auto& c : row) r.append(cosine_obj(c));
        rows.append(r);
    }
    return rows;
}

MergeInput merge_input(const py::handle& source, double coefficient, InputRole role) {
    MergeInput in;
    if (py::isinstance<LoraAdapter>(source)) {
        in.source = source.cast<LoraAdapter>();
    } else {
        in.source = source.cast<TaskVector>();
    }
    in.coefficient = coefficient;
    in.role = role;
    return in;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Task-vector, E-Vector and LoRA algebra on safetensors checkpoints";

    static auto* error_type = new py::exception<Error>(m, "StylevecError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object err = py::handle(*error_type)(e.what());
            err.attr("code") = std::string(error_code_name(e.code()));
            PyErr_SetObject(error_type->ptr(), err.ptr());
        }
    });

    py::class_<Tensor>(m, "Tensor")
        .def(py::init(&from_numpy), py::arg("values"), py::arg("dtype") = "F32")
        .def_property_readonly("dtype", [](const Tensor& t) { return std::string(dtype_name(t.dtype())); })
        .def_property_readonly("shape", [](const Tensor& t) { return t.shape(); })
        .def_property_readonly("numel", &Tensor::numel)
        .def("numpy", &to_numpy, "Values widened to float32")
        .def("tobytes", [](const Tensor& t) {
            auto b = t.bytes();
            return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
        })
        .def("bit_equal", &Tensor::bit_equal)
        .def("__repr__", [](const Tensor& t) {
            std::ostringstream os;
            os << "Tensor(" << dtype_name(t.dtype()) << ", [";
            for (std::size_t i = 0; i < t.shape().size(); ++i) os << (i ? ", " : "") << t.shape()[i];
            os << "])";
            return os.str();
        });

    py::class_<Checkpoint>(m, "Checkpoint")
        .def(py::init<>())
        .def_readwrite("entries", &Checkpoint::entries)
        .def_readwrite("metadata", &Checkpoint::metadata)
        .def("keys", &Checkpoint::keys)
        .def("parameter_count", &Checkpoint::parameter_count)
        .def("bit_equal", &Checkpoint::bit_equal)
        .def("__len__", [](const Checkpoint& c) { return c.entries.size(); })
        .def("__contains__", [](const Checkpoint& c, const std::string& k) { return c.contains(k); })
        .def("__getitem__", [](const Checkpoint& c, const std::string& k) { return c.at(k); })
        .def("__setitem__", [](Checkpoint& c, const std::string& k, const Tensor& t) {
            validate_tensor_key(k);
            c.entries[k] = t;
        })
        .def("to_bytes", [](const Checkpoint& c) {
            const auto b = serialize_checkpoint(c);
            return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
        })
        .def_static("from_bytes", [](const py::bytes& data) {
            const std::string_view s = data;
            return parse_checkpoint(std::span(reinterpret_cast<const std::byte*>(s.data()), s.size()));
        });

    m.def("read_checkpoint", &read_checkpoint, py::arg("path"));
    m.def("write_checkpoint", &write_checkpoint, py::arg("checkpoint"), py::arg("path"));

    py::class_<TaskVector>(m, "TaskVector")
        .def(py::init<>())
        .def_readwrite("delta", &TaskVector::delta)
        .def("id", &TaskVector::id)
        .def("to_checkpoint", [](const TaskVector& t) { return to_checkpoint(t); })
        .def_static("from_checkpoint", &task_vector_from_checkpoint);

    py::class_<EVector>(m, "EVector")
        .def_readonly("vector", &EVector::vector)
        .def_readonly("coefficient", &EVector::coefficient)
        .def("to_checkpoint", [](const EVector& e) { return to_checkpoint(e); });

    m.def(
        "build_task_vector",
        [](const Checkpoint& ft, const Checkpoint& base, const std::string& policy) {
            if (policy != "strict" && policy != "intersect") {
                throw Error(ErrorCode::InvalidArgument, "policy must be 'strict' or 'intersect'");
            }
            return build_task_vector(ft, base, policy == "strict" ? KeyAlignment::Strict : KeyAlignment::Intersect);
        },
        py::arg("finetuned"), py::arg("base"), py::arg("policy") = "strict");
    m.def(
        "scale",
        [](const TaskVector& tau, double coefficient, bool emotion, double beta_max) {
            return scale_task_vector(tau, coefficient, {.emotion_mode = emotion, .beta_max = beta_max});
        },
        py::arg("tau"), py::arg("coefficient"), py::arg("emotion") = false, py::arg("beta_max") = 3.0);
    m.def("apply", &apply_evector, py::arg("base"), py::arg("evector"));
    m.def(
        "combine_linear",
        [](const std::vector<std::pair<TaskVector, double>>& terms) {
            std::vector<EVector> evs;
            for (const auto& [t, c] : terms) evs.push_back({t, c});
            return combine_linear(evs);
        },
        py::arg("terms"));

    py::class_<LoraEntry>(m, "LoraEntry")
        .def(py::init([](const Tensor& a, const Tensor& b) {
                 LoraEntry e{a, b};
                 e.validate();
                 return e;
             }),
             py::arg("a"), py::arg("b"))
        .def_readonly("a", &LoraEntry::a_factor)
        .def_readonly("b", &LoraEntry::b_factor)
        .def_property_readonly("rank", &LoraEntry::rank)
        .def("materialize", &materialize_delta);

    py::class_<LoraAdapter>(m, "LoraAdapter")
        .def(py::init<>())
        .def_readwrite("entries", &LoraAdapter::entries)
        .def_readwrite("metadata", &LoraAdapter::metadata)
        .def("to_checkpoint", [](const LoraAdapter& a) { return to_checkpoint(a); })
        .def_static("from_checkpoint", &lora_from_checkpoint);

    m.def("apply_lora", &apply_lora, py::arg("base"), py::arg("adapter"), py::arg("alpha"));
    m.def("extract_lora", &extract_lora, py::arg("tau"), py::arg("rank"), py::arg("targets"));
    m.def(
        "rank_targets_by_variation",
        [](const TaskVector& tau, const Checkpoint& base) {
            py::list out;
            for (const auto& e : rank_targets_by_variation(tau, base)) out.append(py::make_tuple(e.key, e.relative_change));
            return out;
        },
        py::arg("tau"), py::arg("base"));

    m.def(
        "merge_full",
        [](const Checkpoint& base, const std::vector<std::pair<py::object, double>>& inputs) {
            std::vector<MergeInput> ins;
            for (const auto& [src, c] : inputs) ins.push_back(merge_input(src, c, InputRole::Generic));
            return merge_full(base, std::move(ins));
        },
        py::arg("base"), py::arg("inputs"));
    m.def(
        "merge_hierarchical",
        [](const Checkpoint& base, const py::object& dialect, double alpha, const py::object& emotion, double beta,
           int n_blocks, std::optional<int> split_index) {
            auto topo = ModelTopology::with_blocks(n_blocks);
            topo.split_index = split_index;
            auto r = merge_hierarchical(base, merge_input(dialect, alpha, InputRole::Dialect),
                                        merge_input(emotion, beta, InputRole::Emotion), topo);
            py::list dropped;
            for (const auto& d : r.dropped) dropped.append(py::make_tuple(d.input, d.key));
            return py::make_tuple(std::move(r.checkpoint), dropped);
        },
        py::arg("base"), py::arg("dialect"), py::arg("alpha"), py::arg("emotion"), py::arg("beta"),
        py::arg("n_blocks"), py::arg("split_index") = py::none());
    m.def(
        "classify_layer",
        [](const std::string& key, int n_blocks, std::optional<int> split_index) {
            auto topo = ModelTopology::with_blocks(n_blocks);
            topo.split_index = split_index;
            return std::string(layer_class_name(classify_layer(key, topo)));
        },
        py::arg("key"), py::arg("n_blocks"), py::arg("split_index") = py::none());

    m.def(
        "direction_consistency",
        [](const std::vector<TaskVector>& vectors) { return matrix_obj(direction_consistency(vectors).cosine); },
        py::arg("vectors"), "Pairwise cosines; None where a vector has zero norm");
    m.def(
        "perturb",
        [](const Checkpoint& ckpt, std::vector<TensorKey> keys, double sigma, std::uint64_t seed) {
            return perturb(ckpt, {.target_keys = std::move(keys), .sigma = sigma, .seed = seed});
        },
        py::arg("checkpoint"), py::arg("keys"), py::arg("sigma"), py::arg("seed") = 0);
    m.def(
        "linearity_probe",
        [](const Checkpoint& base, const std::vector<Checkpoint>& trajectory) {
            py::list steps;
            for (const auto& s : linearity_probe(base, trajectory).steps) {
                py::dict d;
                d["index"] = s.index;
                d["norm"] = s.norm;
                d["cosine"] = cosine_obj(s.cosine);
                d["residual"] = s.residual;
                steps.append(d);
            }
            return steps;
        },
        py::arg("base"), py::arg("trajectory"));
    m.def(
        "per_layer_stats",
        [](const TaskVector& tau, const Checkpoint& base) {
            py::dict out;
            for (const auto& s : per_layer_stats(tau, base).layers) out[py::str(s.key)] = py::make_tuple(s.abs_norm, s.rel_norm);
            return out;
        },
        py::arg("tau"), py::arg("base"));

    m.def(
        "gen_base",
        [](int n_blocks, const std::string& dtype, std::uint64_t seed, int embed, int hidden, int heads) {
            return gen_base({.n_blocks = n_blocks,
                             .dims = {.embed = embed, .hidden = hidden, .heads = heads},
                             .dtype = dtype_arg(dtype),
                             .seed = seed});
        },
        py::arg("n_blocks") = 4, py::arg("dtype") = "F32", py::arg("seed") = 0, py::arg("embed") = 8,
        py::arg("hidden") = 16, py::arg("heads") = 2);
    m.def(
        "gen_styled_variant",
        [](const Checkpoint& base, const std::vector<std::string>& classes, const std::vector<std::string>& keys,
           double magnitude, std::uint64_t seed) {
            PlantTargets targets;
            for (const auto& c : classes) targets.classes.push_back(class_arg(c));
            targets.keys = keys;
            auto [variant, ledger] = gen_styled_variant(base, targets, magnitude, seed);
            return py::make_tuple(std::move(variant), std::move(ledger.deltas));
        },
        py::arg("base"), py::arg("classes") = std::vector<std::string>{}, py::arg("keys") = std::vector<std::string>{},
        py::arg("magnitude") = 1.0, py::arg("seed") = 0);

    m.def("set_thread_count", &set_thread_count, py::arg("n"));
    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out;
            std::ostringstream err;
            const int code = cli::run(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the command line in-process; returns (exit_code, stdout, stderr)");
}
