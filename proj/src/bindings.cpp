#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "xmdg/dataset.hpp"
#include "xmdg/digest.hpp"
#include "xmdg/evaluation.hpp"
#include "xmdg/signal.hpp"
#include "xmdg/training.hpp"

namespace py = pybind11;
using namespace xmdg;

namespace {

Array array_from_numpy(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  Array out;
  out.dims.reserve(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i)
    out.dims.push_back(static_cast<std::uint32_t>(a.shape(i)));
  out.data.assign(a.data(), a.data() + a.size());
  return out;
}

py::array_t<float> numpy_from_array(const Array& a) {
  std::vector<py::ssize_t> shape(a.dims.begin(), a.dims.end());
  py::array_t<float> out(shape);
  std::copy(a.data.begin(), a.data.end(), out.mutable_data());
  return out;
}

py::array_t<double> numpy_from_spectrogram(const signal::Spectrogram& s) {
  py::array_t<double> out({static_cast<py::ssize_t>(s.n_bins),
                           static_cast<py::ssize_t>(s.n_frames)});
  std::copy(s.values.begin(), s.values.end(), out.mutable_data());
  return out;
}

signal::Spectrogram spectrogram_from_numpy(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
    signal::SpecScale scale) {
  if (a.ndim() != 2) throw std::invalid_argument("spectrogram must be 2-D");
  signal::Spectrogram s(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), scale);
  std::copy(a.data(), a.data() + a.size(), s.values.begin());
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cross-modal texture/vibration generation core";

  // ----- array container I/O
  m.def("save_array",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
           const std::string& path) { save_array(array_from_numpy(a), path); },
        py::arg("array"), py::arg("path"));
  m.def("load_array",
        [](const std::string& path) { return numpy_from_array(load_array(path)); },
        py::arg("path"));

  m.def("sha256_hex", [](const std::string& s) { return sha256_hex(s); }, py::arg("text"));

  // ----- signal pipeline
  py::class_<signal::StftConfig>(m, "StftConfig")
      .def(py::init([](int window_len, int hop) {
             signal::StftConfig c;
             c.window_len = window_len;
             c.hop = hop;
             return c;
           }),
           py::arg("window_len") = 512, py::arg("hop") = 128)
      .def_readwrite("window_len", &signal::StftConfig::window_len)
      .def_readwrite("hop", &signal::StftConfig::hop)
      .def("n_bins", &signal::StftConfig::n_bins);

  m.def("compute_spectrogram",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& samples,
           const signal::StftConfig& cfg, int sample_rate_hz) {
          signal::AccelerationTrace t;
          t.samples.assign(samples.data(), samples.data() + samples.size());
          t.sample_rate_hz = sample_rate_hz;
          return numpy_from_spectrogram(signal::compute_spectrogram(t, cfg));
        },
        py::arg("samples"), py::arg("config") = signal::StftConfig{},
        py::arg("sample_rate_hz") = 10000);

  m.def("log_scale",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
          return numpy_from_spectrogram(
              signal::log_scale(spectrogram_from_numpy(a, signal::SpecScale::amplitude)));
        },
        py::arg("amplitude"));
  m.def("unlog_scale",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
          return numpy_from_spectrogram(
              signal::unlog_scale(spectrogram_from_numpy(a, signal::SpecScale::log)));
        },
        py::arg("log_spec"));

  m.def("invert_spectrogram",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const signal::StftConfig& cfg, int n_iters, std::uint64_t seed) {
          auto res = signal::invert_spectrogram(
              spectrogram_from_numpy(a, signal::SpecScale::amplitude), cfg, n_iters, seed);
          py::array_t<double> samples(static_cast<py::ssize_t>(res.trace.samples.size()));
          std::copy(res.trace.samples.begin(), res.trace.samples.end(),
                    samples.mutable_data());
          return py::make_tuple(samples, res.consistency);
        },
        py::arg("amplitude"), py::arg("config") = signal::StftConfig{},
        py::arg("n_iters") = 60, py::arg("seed") = 0);

  // ----- dataset
  m.def("prepare_synthetic_dataset",
        [](const std::string& out_dir, int classes, int originals, int reps, int image_size,
           std::uint64_t seed) {
          data::PrepareConfig cfg;
          cfg.reps = reps;
          cfg.image_size = image_size;
          cfg.seed = seed;
          // Keep spectrogram payloads square: 2*size - 2 gives `size` bins.
          const int window = 2 * image_size - 2;
          cfg.stft = signal::StftConfig{window, std::min(64, window)};
          auto [visual, tactile] =
              data::synth_corpus(classes, originals, image_size, seed, out_dir);
          auto manifest = data::prepare_dataset(visual, tactile, cfg, out_dir);
          return py::make_tuple(manifest.pairs.size(), data::manifest_digest(manifest));
        },
        py::arg("out_dir"), py::arg("classes") = 3, py::arg("originals") = 4,
        py::arg("reps") = 3, py::arg("image_size") = 64, py::arg("seed") = 0);

  m.def("manifest_pair_count", [](const std::string& path) {
    return data::load_manifest(path).pairs.size();
  });

  // ----- training / inference
  m.def("pretrain_classifier",
        [](const std::string& dataset_dir, const std::string& modality, int epochs,
           std::uint64_t seed, const std::string& out_path) {
          double val = 0.0, test = 0.0;
          {
            // The autograd engine must not run while holding the GIL.
            py::gil_scoped_release no_gil;
            auto manifest = data::load_manifest(dataset_dir + "/manifest.txt");
            auto art = train::pretrain_classifier(
                modality == "visual" ? data::Modality::visual : data::Modality::tactile,
                manifest, epochs, seed);
            train::save_classifier(art, out_path);
            val = art.val_accuracy;
            test = art.test_accuracy;
          }
          return py::make_tuple(val, test);
        },
        py::arg("dataset_dir"), py::arg("modality"), py::arg("epochs"), py::arg("seed"),
        py::arg("out_path"));

  m.def("train_gan",
        [](const std::string& dataset_dir, const std::string& classifier_path,
           const std::string& run_dir, const std::string& direction, const std::string& variant,
           int steps, int batch, std::uint64_t seed, bool overwrite, bool resume) {
          int steps_done = 0;
          std::string ckpt;
          {
            py::gil_scoped_release no_gil;
            auto manifest = data::load_manifest(dataset_dir + "/manifest.txt");
            auto classifier = train::load_classifier(classifier_path);
            train::TrainConfig cfg;
            cfg.direction = train::direction_from_string(direction);
            cfg.variant = train::variant_from_string(variant);
            cfg.apply_direction_defaults();
            cfg.steps = steps;
            cfg.batch_size = batch;
            cfg.seed = seed;
            auto art = train::train_gan(cfg, manifest, classifier, run_dir, overwrite, resume);
            steps_done = art.steps_done;
            ckpt = art.final_generator_checkpoint;
          }
          return py::make_tuple(steps_done, ckpt);
        },
        py::arg("dataset_dir"), py::arg("classifier_path"), py::arg("run_dir"),
        py::arg("direction") = "t2v", py::arg("variant") = "E", py::arg("steps") = 10,
        py::arg("batch") = 2, py::arg("seed") = 0, py::arg("overwrite") = false,
        py::arg("resume") = false);

  m.def("generate",
        [](const std::string& run_dir,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& input) {
          const Array in = array_from_numpy(input);
          train::GenerateOutput out;
          {
            py::gil_scoped_release no_gil;
            out = train::generate_from_run(run_dir, in);
          }
          return py::make_tuple(numpy_from_array(out.payload), out.out_of_distribution,
                                out.max_softmax);
        },
        py::arg("run_dir"), py::arg("input"));

  m.def("evaluate_run",
        [](const std::string& run_dir, const std::string& dataset_dir,
           const std::string& classifier_path) {
          double accuracy = 0.0, fid_value = 0.0, noise_fid = 0.0;
          {
            py::gil_scoped_release no_gil;
            auto manifest = data::load_manifest(dataset_dir + "/manifest.txt");
            auto classifier = train::load_classifier(classifier_path);
            auto res = train::evaluate_run(run_dir, manifest, classifier);
            accuracy = res.report.accuracy;
            fid_value = res.report.fid;
            noise_fid = res.noise_baseline_fid;
          }
          return py::make_tuple(accuracy, fid_value, noise_fid);
        },
        py::arg("run_dir"), py::arg("dataset_dir"), py::arg("classifier_path"));

  // ----- evaluation metrics
  m.def("fid", &eval::fid, py::arg("features_real"), py::arg("features_gen"));
  m.def("dtw_distance",
        [](const std::vector<double>& a, const std::vector<double>& b) {
          return eval::dtw_distance(a, b);
        },
        py::arg("a"), py::arg("b"));
  m.def("intra_class_variance", &eval::intra_class_variance, py::arg("class_samples"));
}
