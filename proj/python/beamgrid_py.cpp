#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "beamgrid/error.hpp"
#include "beamgrid/losses.hpp"
#include "beamgrid/metrics.hpp"
#include "beamgrid/predictor.hpp"
#include "beamgrid/scene.hpp"

namespace py = pybind11;
using namespace beamgrid;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array grid_array(const Grid<double>& g) {
  Array out({g.rows(), g.cols()});
  std::copy(g.data().begin(), g.data().end(), out.mutable_data());
  return out;
}

Grid<double> array_grid(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  Grid<double> g(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), g.data().begin());
  return g;
}

py::dict scene_dict(const HeightMap& map) {
  py::dict d;
  d["building"] = grid_array(map.building);
  d["vegetation"] = grid_array(map.vegetation);
  d["resolution_m"] = map.resolution_m;
  return d;
}

HeightMap dict_scene(const py::dict& d) {
  HeightMap m;
  m.building = array_grid(d["building"].cast<Array>());
  m.vegetation = d.contains("vegetation") ? array_grid(d["vegetation"].cast<Array>())
                                          : Grid<double>(m.building.rows(), m.building.cols());
  m.resolution_m = d.contains("resolution_m") ? d["resolution_m"].cast<double>() : 1.0;
  return m;
}

TxSite dict_tx(const py::dict& d) {
  TxSite tx;
  const auto px = d["pixel"].cast<std::pair<int, int>>();
  tx.pixel = {px.first, px.second};
  tx.height_m = d["height_m"].cast<double>();
  tx.frame.boresight_azimuth = d["boresight_azimuth"].cast<double>();
  tx.frame.downtilt = d["downtilt"].cast<double>();
  return tx;
}

py::dict tx_dict(const TxSite& tx) {
  py::dict d;
  d["pixel"] = py::make_tuple(tx.pixel.row, tx.pixel.col);
  d["height_m"] = tx.height_m;
  d["boresight_azimuth"] = tx.frame.boresight_azimuth;
  d["downtilt"] = tx.frame.downtilt;
  return d;
}

// Tensors as (rows, cols, na, ne, nr) plus a boolean mask.
py::tuple tensor_arrays(const TensorMap& t) {
  const BeamDims& d = t.dims();
  Array values({t.rows(), t.cols(), d.na, d.ne, d.nr});
  std::copy(t.values().begin(), t.values().end(), values.mutable_data());
  py::array_t<bool> mask({t.rows(), t.cols()});
  for (std::size_t i = 0; i < t.mask().size(); ++i) mask.mutable_data()[i] = t.mask().data()[i] != 0;
  return py::make_tuple(values, mask);
}

TensorMap trace_scene(const py::dict& scene, const py::dict& tx_d, int downscale) {
  const HeightMap map = dict_scene(scene);
  const TxSite tx = dict_tx(tx_d);
  const TensorMap t = tensorize(trace_paths(map, tx, SceneConfig{}), Codebook::dft(8, 4, 4), tx.frame);
  return downscale > 1 ? downscale_tensor_map(t, downscale) : t;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["k"] = r.k;
  d["accuracy"] = r.accuracy;
  d["tpr"] = r.tpr;
  d["samples"] = r.samples;
  d["excluded"] = r.excluded;
  return d;
}

}  // namespace

PYBIND11_MODULE(_beamgrid, m) {
  static py::exception<Error> error(m, "BeamgridError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  m.def("generate_city", [](int rows, int cols, std::uint64_t seed) { return scene_dict(generate_city(rows, cols, seed)); },
        py::arg("rows"), py::arg("cols"), py::arg("seed") = 1);
  m.def("place_tx", [](const py::dict& scene, std::uint64_t seed, double mast_m) {
    return tx_dict(place_tx(dict_scene(scene), seed, mast_m));
  }, py::arg("scene"), py::arg("seed") = 1, py::arg("mast_m") = 3.0);
  m.def("tensorize", [](const py::dict& scene, const py::dict& tx, int downscale) {
    return tensor_arrays(trace_scene(scene, tx, downscale));
  }, py::arg("scene"), py::arg("tx"), py::arg("downscale") = 1,
        "Trace the scene and return per-pixel effective channel tensors and the validity mask.");
  m.def("evaluate_oracle", [](const py::dict& scene, const py::dict& tx, std::vector<int> k_list) {
    const TensorMap t = trace_scene(scene, tx, 1);
    return report_dict(evaluate(t, candidates(oracle_predictor(t), 128), k_list, LinkBudget{}));
  }, py::arg("scene"), py::arg("tx"), py::arg("k_list") = std::vector<int>{1, 2, 4, 8, 16, 32});
  m.def("evaluate_geometric", [](const py::dict& scene, const py::dict& tx, std::vector<int> k_list) {
    const HeightMap map = dict_scene(scene);
    const TxSite site = dict_tx(tx);
    const TensorMap t = trace_scene(scene, tx, 1);
    const PredictionMap pred = geometric_predictor(map, site, Codebook::dft(8, 4, 4));
    return report_dict(evaluate(t, candidates(pred, 128), k_list, LinkBudget{}));
  }, py::arg("scene"), py::arg("tx"), py::arg("k_list") = std::vector<int>{1, 2, 4, 8, 16, 32});

  m.def("softmax", [](std::vector<double> z) { return softmax(z); });
  m.def("ce_loss", [](std::vector<double> logits, std::tuple<int, int, int> target) {
    const auto [a, e, r] = target;
    const LossResult res = ce_loss(Logits::joint(std::move(logits)), BeamIndex{a, e, r}, BeamDims{8, 4, 4});
    return py::make_tuple(res.loss, res.grad);
  }, py::arg("logits"), py::arg("target"));
  m.def("ws_loss", [](std::vector<double> logits, int target, double epsilon_scale) {
    const BeamDistanceMatrix dist(BeamDims{8, 4, 4});
    const LossResult res = ws_loss(Logits::joint(std::move(logits)), target, dist, epsilon_scale * dist.max());
    return py::make_tuple(res.loss, res.grad);
  }, py::arg("logits"), py::arg("target"), py::arg("epsilon_scale") = kDefaultEpsilonScale);
}
