// Python bindings for the main operations: dataset generators, trainers,
// evaluation metrics and checkpoint IO. Arrays cross the boundary as numpy
// float64; models stay opaque handles.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sosvae/checkpoint.hpp"
#include "sosvae/metrics.hpp"
#include "sosvae/runconfig.hpp"
#include "sosvae/second_order.hpp"

namespace py = pybind11;
using namespace sosvae;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  std::vector<double> data(a.data(), a.data() + a.size());
  if (a.ndim() == 1) return Tensor::vec(std::move(data));
  if (a.ndim() == 2)
    return Tensor::matrix(static_cast<std::size_t>(a.shape(0)),
                          static_cast<std::size_t>(a.shape(1)), std::move(data));
  throw std::invalid_argument("expected a 1-D or 2-D float array");
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  if (t.rank() == 2) {
    py::array_t<double> out({t.rows(), t.cols()});
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
  }
  py::array_t<double> out(t.size());
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

LabeledDataset dataset_from_arrays(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& X,
    const std::vector<int>& y, int classes, double value_range) {
  LabeledDataset d;
  d.X = tensor_from_array(X);
  d.y = y;
  if (d.X.rank() != 2 || d.X.rows() != d.y.size())
    throw std::invalid_argument("X must be (N, p) with N labels");
  d.classes = classes;
  d.value_range = value_range;
  d.name = "ndarray";
  return d;
}

TrainConfig config_from_kwargs(const std::string& method, double lambda, double mu, double alpha,
                               double beta, int epochs, int batch, int latent, int hidden,
                               const std::string& decoder, const std::string& likelihood,
                               std::uint64_t seed, bool second_order, int inner_updates) {
  TrainConfig c;
  c.method = parse_method(method);
  c.lambda = lambda;
  c.mu = mu;
  c.alpha = alpha;
  c.beta = beta;
  c.epochs = epochs;
  c.batch = batch;
  c.latent = latent;
  c.hidden = hidden;
  c.decoder = decoder == "nmf" ? DecoderKind::Nmf : DecoderKind::Mlp;
  c.head = likelihood == "bernoulli" ? Likelihood::Bernoulli : Likelihood::Gaussian;
  c.seed = seed;
  c.second_order = second_order;
  c.inner_updates = inner_updates;
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_sosvae, m) {
  m.doc() = "supervised VAEs with second-order decoder supervision";

  py::class_<LabeledDataset>(m, "Dataset")
      .def(py::init(&dataset_from_arrays), py::arg("X"), py::arg("y"), py::arg("classes"),
           py::arg("value_range") = 1.0)
      .def_property_readonly("X", [](const LabeledDataset& d) { return array_from_tensor(d.X); })
      .def_readonly("y", &LabeledDataset::y)
      .def_readonly("classes", &LabeledDataset::classes)
      .def("__len__", &LabeledDataset::size)
      .def("split", [](const LabeledDataset& d, double fraction) {
        return split_dataset(d, fraction);
      });

  py::class_<LinearGaussianSpec>(m, "LinearGaussianSpec")
      .def_property_readonly("A",
                             [](const LinearGaussianSpec& s) { return array_from_tensor(s.A); })
      .def_readonly("sigma", &LinearGaussianSpec::sigma)
      .def_readonly("classes", &LinearGaussianSpec::classes);

  py::class_<ModelBundle>(m, "Model")
      .def_property_readonly("method",
                             [](const ModelBundle& b) { return method_name(b.method); })
      .def_property_readonly("history", [](const ModelBundle& b) {
        py::list out;
        for (const auto& r : b.history) {
          py::dict row;
          row["epoch"] = r.epoch;
          row["recon"] = r.recon;
          row["prior_kl"] = r.prior_kl;
          row["supervised"] = r.supervised;
          row["coupling_kl"] = r.coupling_kl;
          row["objective"] = r.objective;
          out.append(row);
        }
        return out;
      });

  m.def("make_biased_spec", &make_biased_spec, py::arg("p"), py::arg("l_true"),
        py::arg("classes"), py::arg("nuisance_ratio"), py::arg("sigma"), py::arg("label_noise"),
        py::arg("seed"));
  m.def("gen_linear_gaussian", &gen_linear_gaussian, py::arg("spec"), py::arg("n"),
        py::arg("seed"));
  m.def(
      "gen_spectral_surrogate",
      [](int p, int classes, std::size_t n, std::uint64_t seed) {
        SurrogateData s = gen_spectral_surrogate(p, classes, n, seed);
        return py::make_tuple(s.data, s.layout.to_json());
      },
      py::arg("p"), py::arg("classes"), py::arg("n"), py::arg("seed"));
  m.def("load_idx", &load_idx, py::arg("images"), py::arg("labels"));

  m.def("train", &train, py::arg("data"), py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def("config", &config_from_kwargs, py::arg("method"), py::arg("lambda_") = 0.0,
        py::arg("mu") = 0.0, py::arg("alpha") = 1e-3, py::arg("beta") = -1.0,
        py::arg("epochs") = 10, py::arg("batch") = 128, py::arg("latent") = 20,
        py::arg("hidden") = 512, py::arg("decoder") = "mlp", py::arg("likelihood") = "gaussian",
        py::arg("seed") = 0, py::arg("second_order") = true, py::arg("inner_updates") = 1);
  py::class_<TrainConfig>(m, "TrainConfig");

  m.def(
      "predict",
      [](const ModelBundle& b, const py::array_t<double, py::array::c_style>& X) {
        return predict_labels(b, tensor_from_array(X));
      },
      py::arg("model"), py::arg("X"));
  m.def(
      "predict_proba",
      [](const ModelBundle& b, const py::array_t<double, py::array::c_style>& X) {
        return array_from_tensor(predict_probs(b, tensor_from_array(X)));
      },
      py::arg("model"), py::arg("X"));
  m.def(
      "reconstruct",
      [](const ModelBundle& b, const py::array_t<double, py::array::c_style>& X) {
        return array_from_tensor(reconstruct(b, tensor_from_array(X)));
      },
      py::arg("model"), py::arg("X"));

  m.def("accuracy", &accuracy);
  m.def(
      "auc_macro",
      [](const py::array_t<double, py::array::c_style>& scores, const std::vector<int>& y) {
        return auc_macro(tensor_from_array(scores), y);
      },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "psnr",
      [](const py::array_t<double, py::array::c_style>& x,
         const py::array_t<double, py::array::c_style>& y, double max_value) {
        return psnr(tensor_from_array(x), tensor_from_array(y), max_value);
      },
      py::arg("x"), py::arg("x_hat"), py::arg("max_value") = 1.0);
  m.def(
      "ssim",
      [](const py::array_t<double, py::array::c_style>& x,
         const py::array_t<double, py::array::c_style>& y, double range) {
        return ssim(tensor_from_array(x), tensor_from_array(y), range);
      },
      py::arg("x"), py::arg("x_hat"), py::arg("dynamic_range") = 1.0);
  m.def("scientific_utility", &scientific_utility, py::arg("model"), py::arg("data"),
        py::arg("refit_epochs") = -1, py::arg("t") = 0,
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "coupling_kl",
      [](const ModelBundle& b, const py::array_t<double, py::array::c_style>& X) {
        return coupling_kl(b, tensor_from_array(X));
      },
      py::arg("model"), py::arg("X"));
  m.def(
      "aligned_posterior_kl",
      [](const ModelBundle& b, const LinearGaussianSpec& spec,
         const py::array_t<double, py::array::c_style>& X) {
        return aligned_posterior_kl(b.pred_enc.at(0), spec, tensor_from_array(X));
      },
      py::arg("model"), py::arg("spec"), py::arg("X"));

  m.def(
      "kl_between",
      [](const py::array_t<double, py::array::c_style>& m1,
         const py::array_t<double, py::array::c_style>& lv1,
         const py::array_t<double, py::array::c_style>& m2,
         const py::array_t<double, py::array::c_style>& lv2) {
        DiagGaussian a{tensor_from_array(m1), tensor_from_array(lv1)};
        DiagGaussian b{tensor_from_array(m2), tensor_from_array(lv2)};
        return kl_between(a, b);
      },
      py::arg("mean1"), py::arg("log_var1"), py::arg("mean2"), py::arg("log_var2"));
  m.def(
      "kl_to_standard",
      [](const py::array_t<double, py::array::c_style>& mean,
         const py::array_t<double, py::array::c_style>& log_var) {
        return kl_to_standard(DiagGaussian{tensor_from_array(mean), tensor_from_array(log_var)});
      },
      py::arg("mean"), py::arg("log_var"));

  m.def("save_checkpoint", &save_checkpoint, py::arg("model"), py::arg("path"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
  m.def("method_names", &method_names);
}
