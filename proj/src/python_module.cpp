#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "svae/checkpoint.hpp"
#include "svae/data.hpp"
#include "svae/errors.hpp"
#include "svae/image_io.hpp"
#include "svae/latent.hpp"
#include "svae/model.hpp"
#include "svae/parzen.hpp"
#include "svae/selfcheck.hpp"
#include "svae/train.hpp"

namespace py = pybind11;
using namespace svae;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<double> to_vector(const Array& a) { return {a.data(), a.data() + a.size()}; }

ModelConfig preset(const std::string& name, VariantKind v, std::size_t d, std::size_t n_maps,
                   std::size_t latent_dim) {
  if (name == "mnist") return mnist_config(v, d, n_maps, latent_dim);
  if (name == "cifar10") return cifar10_config(v, d, n_maps, latent_dim);
  if (name == "folder") return folder_config(v, d, n_maps, latent_dim);
  if (name == "tiny") return tiny_config(v, d, n_maps, latent_dim);
  throw ContractError("unknown preset '" + name + "' (mnist, cifar10, folder, tiny)");
}

Dataset as_dataset(const Array& images) {
  if (images.ndim() != 4) throw DimensionError("images must be [n, C, H, W]");
  Dataset ds;
  ds.images = to_tensor(images);
  ds.name = "array";
  ds.validate();
  return ds;
}

py::dict report_dict(const EpochReport& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["mean_elbo"] = r.mean_elbo;
  d["mean_recon"] = r.mean_recon;
  d["mean_kl"] = r.mean_kl;
  d["wall_seconds"] = r.wall_seconds;
  return d;
}

}  // namespace

PYBIND11_MODULE(_svae, m) {
  m.doc() = "Spatial VAEs with matrix-variate normal latents";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("variants", [] {
    std::vector<std::string> out;
    for (auto v : kAllVariants) out.push_back(to_string(v));
    return out;
  });
  m.def("param_count",
        [](const std::string& variant, std::size_t d, std::size_t n_maps, std::size_t latent_dim) {
          return param_count(parse_variant(variant), d, n_maps, latent_dim);
        },
        py::arg("variant"), py::arg("d") = 3, py::arg("n_maps") = 64, py::arg("latent_dim") = 81);
  m.def("kron_diag", [](const Array& a, const Array& b) {
    const auto out = kron_diag(to_vector(a), to_vector(b));
    return to_array(Tensor(Shape{out.size()}, out));
  });
  m.def("kl_to_standard_normal", [](const Array& mean, const Array& log_var) {
    return kl_to_standard_normal(to_vector(mean), to_vector(log_var));
  });
  m.def("parzen_log_density",
        [](const Array& x, const Array& samples, double sigma) {
          return parzen_log_density(to_vector(x), to_tensor(samples), sigma);
        },
        py::arg("x"), py::arg("samples"), py::arg("sigma"));
  m.def("log_spaced_grid", &log_spaced_grid, py::arg("lo"), py::arg("hi"), py::arg("count"));

  m.def("load_mnist",
        [](const std::filesystem::path& dir, const std::string& split) {
          const Dataset ds = load_mnist_dir(dir, split == "test" ? Split::test : Split::train);
          return py::make_tuple(to_array(ds.images), ds.labels);
        },
        py::arg("dir"), py::arg("split") = "train");
  m.def("save_png_grid",
        [](const Array& images, std::size_t rows, const std::filesystem::path& path) {
          save_png_grid(to_tensor(images), rows, path);
        },
        py::arg("images"), py::arg("rows"), py::arg("path"));

  m.def("self_check", [](const std::string& inject_fault, std::uint64_t seed) {
    SelfCheckOptions opts;
    opts.inject_fault = inject_fault;
    opts.seed = seed;
    py::list out;
    for (const auto& r : run_self_check(opts)) {
      py::dict d;
      d["name"] = r.name;
      d["passed"] = r.passed;
      d["metric"] = r.metric;
      d["tolerance"] = r.tolerance;
      d["detail"] = r.detail;
      out.append(d);
    }
    return out;
  }, py::arg("inject_fault") = "", py::arg("seed") = 1);

  py::class_<Model>(m, "Model")
      .def(py::init([](const std::string& variant, const std::string& preset_name, std::size_t d,
                       std::size_t n_maps, std::size_t latent_dim, double likelihood_sigma,
                       std::uint64_t seed) {
             ModelConfig cfg = preset(preset_name, parse_variant(variant), d, n_maps, latent_dim);
             cfg.likelihood_sigma = likelihood_sigma;
             cfg.validate();
             return Model(cfg, seed);
           }),
           py::arg("variant") = "lowrank-mvn", py::arg("preset") = "mnist", py::arg("d") = 3,
           py::arg("n_maps") = 64, py::arg("latent_dim") = 81, py::arg("likelihood_sigma") = 1.0,
           py::arg("seed") = 0)
      .def_static("load", [](const std::filesystem::path& path) { return model_from_checkpoint(read_checkpoint(path)); })
      .def("save", [](const Model& self, const std::filesystem::path& path) {
        write_checkpoint(path, model_checkpoint(self));
      })
      .def_property_readonly("variant", [](const Model& self) { return to_string(self.config().variant); })
      .def_property_readonly("head_width", [](const Model& self) { return self.config().head_width(); })
      .def_property_readonly("latent_shape", [](const Model& self) { return self.config().latent_shape(); })
      .def_property_readonly("image_shape", [](const Model& self) {
        const auto& s = self.config().image;
        return py::make_tuple(s.channels, s.height, s.width);
      })
      .def_property_readonly("encoder_parameters", &Model::encoder_parameter_count)
      .def_property_readonly("decoder_parameters", &Model::decoder_parameter_count)
      .def_property_readonly("encode_calls", &Model::encode_calls)
      .def("generate",
           [](const Model& self, std::size_t count, std::uint64_t seed) {
             NoGradGuard guard;
             Rng rng(seed);
             return to_array(self.generate(count, rng));
           },
           py::arg("count"), py::arg("seed") = 0)
      .def("decode",
           [](const Model& self, const Array& z) {
             NoGradGuard guard;
             return to_array(self.decode(to_tensor(z)));
           })
      .def("encode_head",
           [](const Model& self, const Array& x) {
             NoGradGuard guard;
             return to_array(self.encode(to_tensor(x)).head);
           })
      .def("elbo",
           [](const Model& self, const Array& x, std::uint64_t seed) {
             NoGradGuard guard;
             Rng rng(seed);
             const auto b = breakdown(self.elbo(to_tensor(x), rng));
             py::dict d;
             d["elbo"] = b.elbo;
             d["reconstruction"] = b.reconstruction;
             d["kl"] = b.kl;
             return d;
           },
           py::arg("x"), py::arg("seed") = 0)
      .def("reconstruction_mse",
           [](const Model& self, const Array& images, std::uint64_t seed) {
             return reconstruction_mse(self, as_dataset(images), seed);
           },
           py::arg("images"), py::arg("seed") = 0);

  m.def("train",
        [](Model& model, const Array& images, std::size_t epochs, std::size_t batch_size,
           double learning_rate, std::uint64_t seed) {
          TrainConfig cfg;
          cfg.epochs = epochs;
          cfg.batch_size = batch_size;
          cfg.learning_rate = learning_rate;
          cfg.seed = seed;
          cfg.validate();
          py::list out;
          for (const auto& r : train(model, as_dataset(images), cfg)) out.append(report_dict(r));
          return out;
        },
        py::arg("model"), py::arg("images"), py::arg("epochs") = 1, py::arg("batch_size") = 64,
        py::arg("learning_rate") = 1e-3, py::arg("seed") = 0);

  m.def("evaluate_parzen",
        [](const Model& model, const Array& valid, const Array& test, std::size_t n_model_samples,
           std::vector<double> sigma_grid, std::uint64_t seed) {
          ParzenConfig cfg;
          cfg.n_model_samples = n_model_samples;
          if (!sigma_grid.empty()) cfg.sigma_grid = std::move(sigma_grid);
          cfg.seed = seed;
          auto flat = [](const Array& a) {
            Tensor t = to_tensor(a);
            const std::size_t n = t.dim(0);
            return Tensor(Shape{n, t.numel() / n}, t.values());
          };
          const ParzenReport r = evaluate_parzen(model, flat(valid), flat(test), cfg);
          py::dict d;
          d["chosen_sigma"] = r.chosen_sigma;
          d["mean_log_likelihood"] = r.mean_log_likelihood;
          d["std_error"] = r.std_error;
          d["n_test"] = r.n_test;
          d["n_model_samples"] = r.n_model_samples;
          return d;
        },
        py::arg("model"), py::arg("valid"), py::arg("test"), py::arg("n_model_samples") = 10000,
        py::arg("sigma_grid") = std::vector<double>{}, py::arg("seed") = 0);
}
