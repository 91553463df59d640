#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "gpm/ablation.hpp"
#include "gpm/config.hpp"
#include "gpm/dataset.hpp"
#include "gpm/errors.hpp"
#include "gpm/eval.hpp"
#include "gpm/losses.hpp"
#include "gpm/model.hpp"
#include "gpm/sampler.hpp"
#include "gpm/trainer.hpp"

namespace py = pybind11;
using namespace gpm;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IdArray = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(const Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

Matrix from_numpy(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-d array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

std::vector<std::int64_t> ids_from(const IdArray& a) {
  if (a.ndim() != 1) throw DimensionError("expected a 1-d id array");
  return {a.data(), a.data() + a.shape(0)};
}

py::dict recall_dict(const RecallReport& r) {
  py::dict d;
  for (const auto& [k, v] : r.recall_at) d[py::int_(k)] = v;
  return d;
}

py::dict epoch_dict(const EpochRecord& e) {
  py::dict d;
  d["epoch"] = e.epoch;
  d["learning_rate"] = e.learning_rate;
  d["plan_mode"] = std::string(to_string(e.plan_mode));
  d["n_tuples"] = e.n_tuples;
  d["n_steps"] = e.n_steps;
  d["loss"] = e.mean_loss;
  d["pair_fraction"] = e.pair_fraction;
  d["triplet_fraction"] = e.triplet_fraction;
  d["recall"] = e.recall ? py::object(recall_dict(*e.recall)) : py::none();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Global proxy-based hard mining: C++ core bindings";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<DegenerateInputError>(m, "DegenerateInputError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());

  py::class_<RunConfig>(m, "Config")
      .def(py::init([](const std::string& preset) { return RunConfig::preset(preset); }),
           py::arg("preset") = "desk")
      .def("set", [](RunConfig& c, const std::string& k, py::object v) {
        c.set(k, py::str(v).cast<std::string>());
      })
      .def("get", [](const RunConfig& c, const std::string& k) { return c.get(k); })
      .def("set_seed", &RunConfig::set_seed)
      .def("validate", &RunConfig::validate)
      .def_static("keys", &RunConfig::keys)
      .def("to_text", [](const RunConfig& c) {
        std::ostringstream os;
        c.save(os);
        return os.str();
      })
      .def_static("from_text", [](const std::string& text) {
        RunConfig c;
        std::istringstream is(text);
        c.load(is);
        return c;
      });

  py::class_<PlaceDataset>(m, "Dataset")
      .def_property_readonly("n_places", [](const PlaceDataset& d) { return d.places.size(); })
      .def_property_readonly("n_images", &PlaceDataset::n_images)
      .def_property_readonly("feature_dim", [](const PlaceDataset& d) { return d.feature_dim; })
      .def("place_ids", &PlaceDataset::place_ids)
      .def("archetypes", [](const PlaceDataset& d) {
        std::vector<std::int64_t> out;
        for (const Place& p : d.places) out.push_back(p.archetype);
        return out;
      })
      .def("images", [](const PlaceDataset& d, PlaceId id) { return to_numpy(d.places.at(d.index_of(id)).images); })
      .def("save", [](const PlaceDataset& d, const std::string& path) { save(d, path); })
      .def("__eq__", [](const PlaceDataset& a, const PlaceDataset& b) { return a == b; });

  m.def("generate", [](const RunConfig& c) { return generate(c.data); }, py::arg("config"),
        "Synthetic place dataset from the config's data.* keys.");
  m.def("load_dataset", [](const std::string& path) { return load(path); });

  py::class_<TwoBranchModel>(m, "Model")
      .def(py::init([](const RunConfig& c) { return TwoBranchModel(c.model); }))
      .def_static("load", &TwoBranchModel::load)
      .def("save", &TwoBranchModel::save)
      .def("forward", [](const TwoBranchModel& model, const Array& features) {
        const ForwardPass pass = model.forward(from_numpy(features));
        return py::make_tuple(to_numpy(pass.x()), to_numpy(pass.z()));
      }, "Returns (embeddings, proxy-head outputs), both row-normalized.")
      .def("__eq__", [](const TwoBranchModel& a, const TwoBranchModel& b) { return a == b; });

  m.def("pairwise_similarity", [](const Array& emb) { return to_numpy(pairwise_similarity(from_numpy(emb))); });

  m.def("compute_loss", [](const Array& sim, const IdArray& labels, const RunConfig& c) {
    const auto l = ids_from(labels);
    const LossOutput out = compute_loss(from_numpy(sim), l, c.loss);
    py::dict d;
    d["value"] = out.value;
    d["grad_sim"] = to_numpy(out.grad_sim);
    d["candidates"] = out.stats.candidates;
    d["informative"] = out.stats.informative;
    return d;
  }, py::arg("sim"), py::arg("labels"), py::arg("config"),
     "Loss of kind config.loss.kind (OHM per loss.ohm) on a similarity matrix.");

  m.def("compute_place_proxy", [](const Array& z_rows) {
    const Vector v = compute_place_proxy(from_numpy(z_rows));
    return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
  });

  m.def("knn_search", [](const Array& proxies, const IdArray& ids, const Array& query, std::size_t k) {
    const Matrix p = from_numpy(proxies);
    const auto id = ids_from(ids);
    if (id.size() != p.rows()) throw DimensionError("knn_search: one id per proxy row");
    std::vector<ProxyRef> refs;
    for (std::size_t i = 0; i < p.rows(); ++i) refs.push_back({id[i], p.row(i)});
    const std::span<const double> q(query.data(), static_cast<std::size_t>(query.size()));
    return knn_search(refs, q, k);
  }, py::arg("proxies"), py::arg("ids"), py::arg("query"), py::arg("k"));

  m.def("build_batch_plan", [](const Array& proxies, const IdArray& ids, std::size_t places_per_batch,
                               std::uint64_t seed) {
    const Matrix p = from_numpy(proxies);
    const auto id = ids_from(ids);
    if (id.size() != p.rows()) throw DimensionError("build_batch_plan: one id per proxy row");
    MemoryBank bank;
    for (std::size_t i = 0; i < p.rows(); ++i) bank.update(id[i], p.row(i), 0);
    return build_batch_plan(bank, places_per_batch, seed).tuples;
  }, py::arg("proxies"), py::arg("ids"), py::arg("places_per_batch"), py::arg("seed") = 0);

  m.def("random_plan", [](const IdArray& ids, std::size_t places_per_batch, std::uint64_t seed) {
    const auto id = ids_from(ids);
    return random_plan(id, places_per_batch, seed).tuples;
  }, py::arg("ids"), py::arg("places_per_batch"), py::arg("seed") = 0);

  m.def("recall_at_k", [](const Array& q, const IdArray& qp, const Array& r, const IdArray& rp,
                          const std::vector<int>& ks) {
    const auto qpl = ids_from(qp);
    const auto rpl = ids_from(rp);
    return recall_dict(recall_at_k(from_numpy(q), qpl, from_numpy(r), rpl, ks));
  }, py::arg("query"), py::arg("query_places"), py::arg("reference"), py::arg("reference_places"),
     py::arg("ks") = kDefaultRecallKs);

  m.def("bank_bytes", &bank_bytes, py::arg("n_places"), py::arg("proxy_dim"), py::arg("bytes_per_float") = 4);

  m.def("train", [](const RunConfig& c) {
    TrainResult r;
    {
      py::gil_scoped_release release;
      r = run_experiment(c, nullptr);
    }
    py::dict d;
    d["recall"] = recall_dict(r.final_recall);
    py::list epochs;
    for (const EpochRecord& e : r.epochs) epochs.append(epoch_dict(e));
    d["epochs"] = epochs;
    d["bank_size"] = r.bank.size();
    d["model"] = py::cast(std::move(r.model));
    return d;
  }, py::arg("config"), "Generate (or load) data, hold out queries, train and evaluate.");
}
