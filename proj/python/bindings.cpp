#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lipsync/audio.hpp"
#include "lipsync/error.hpp"
#include "lipsync/eval.hpp"
#include "lipsync/features.hpp"
#include "lipsync/mesh.hpp"
#include "lipsync/model.hpp"
#include "lipsync/synthdata.hpp"
#include "lipsync/training.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace lipsync;

namespace {

Waveform make_wave(std::vector<double> samples, int rate) {
  Waveform w;
  w.samples = std::move(samples);
  w.sample_rate = rate;
  return w;
}

FeatureSequence make_features(const Mat<double>& data) {
  FeatureSequence f;
  f.data = data.cast<float>();
  return f;
}

TemplateMesh make_mesh(const Vertices& vertices, const std::vector<Landmark>& landmarks) {
  TemplateMesh m;
  m.vertices = vertices;
  m.landmarks = landmarks;
  return m;
}

DisplacementSequence make_displacements(const Mat<double>& frames) {
  DisplacementSequence d;
  d.frames = frames.cast<float>();
  d.vertices = static_cast<int>(frames.cols() / 3);
  return d;
}

Trajectories make_traj(const Eigen::MatrixXd& points) { return {points}; }

py::dict history_dict(const EpochMetrics& m) {
  py::dict d("epoch"_a = m.epoch, "train_lp"_a = m.train.position, "train_lv"_a = m.train.velocity,
             "train_total"_a = m.train.total, "clipped_steps"_a = m.clipped_steps);
  if (m.has_validation) {
    d["val_lp"] = m.validation.position;
    d["val_lv"] = m.validation.velocity;
    d["val_total"] = m.validation.total;
  }
  return d;
}

py::dict report_dict(const EvalReport& r) {
  return py::dict("pos_err_all"_a = r.pos_err_all, "pos_err_lip"_a = r.pos_err_lip,
                  "vel_err_all"_a = r.vel_err_all, "vel_err_lip"_a = r.vel_err_lip);
}

}  // namespace

PYBIND11_MODULE(lipsync, m) {
  m.doc() = "Speech-driven lip-sync network: audio features, training and evaluation";

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error.ptr(), (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  m.attr("VIDEO_FPS") = kVideoFps;
  m.attr("CHARACTER_CLASSES") = kCharacterClasses;

  // audio / features
  m.def("load_wav", [](const std::filesystem::path& p) {
    Waveform w = load_wav(p);
    return py::make_tuple(w.samples, w.sample_rate);
  }, "path"_a, "Returns (samples, sample_rate).");
  m.def("save_wav", [](const std::filesystem::path& p, std::vector<double> s, int rate) {
    save_wav(make_wave(std::move(s), rate), p);
  }, "path"_a, "samples"_a, "sample_rate"_a);
  m.def("resample", [](std::vector<double> s, int rate, int target) {
    return resample(make_wave(std::move(s), rate), target).samples;
  }, "samples"_a, "sample_rate"_a, "target_rate"_a);
  m.def("mfcc", [](std::vector<double> s, int rate) -> RowMatrix {
    return mfcc(make_wave(std::move(s), rate)).frames;
  }, "samples"_a, "sample_rate"_a = kCanonicalSampleRate);
  m.def("speech_features", [](std::vector<double> s, int rate, std::uint64_t seed) -> Mat<double> {
    return to_matrix(features_from_waveform(make_wave(std::move(s), rate), SurrogateProvider::from_seed(seed)));
  }, "samples"_a, "sample_rate"_a, "seed"_a = 7, "Surrogate character probabilities at 60 fps.");
  m.def("resample_features", [](const Eigen::MatrixXd& data, double rate, double fps) {
    return resample_features(data, rate, fps);
  }, "data"_a, "source_rate"_a, "target_fps"_a = 60.0);
  m.def("synth_speech", [](double duration, std::uint64_t seed) { return synth_speech(duration, seed).samples; },
        "duration"_a, "seed"_a);

  // network
  py::class_<NetworkParams>(m, "Network")
      .def_static("init", [](int vertices, std::uint64_t seed, const std::string& arch) {
        return init_params(arch == "lstm" ? NetworkConfig::lstm_only(vertices) : NetworkConfig::standard(vertices), seed);
      }, "vertices"_a, "seed"_a = 7, "arch"_a = "conv-lstm")
      .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); })
      .def("save", [](const NetworkParams& n, const std::filesystem::path& p) { save_checkpoint(n, p); })
      .def("forward", [](const NetworkParams& n, const Mat<double>& features) {
        return forward(n, features);
      }, "features"_a, "frames x 29 features -> frames x 3V displacements")
      .def_property_readonly("vertices", [](const NetworkParams& n) { return n.config.vertices; })
      .def_property_readonly("parameter_count", &NetworkParams::parameter_count);

  // losses
  m.def("loss_position", [](const Mat<double>& p, const Mat<double>& t) { return loss_position(p, t); });
  m.def("loss_velocity", [](const Mat<double>& p, const Mat<double>& t) { return loss_velocity(p, t); });
  m.def("loss_total", [](const Mat<double>& p, const Mat<double>& t, double w_pos, double w_vel) {
    const LossValue v = loss_total(p, t, {w_pos, w_vel, Reduction::kMeanPerFrame});
    return py::make_tuple(v.total, v.position, v.velocity, v.gradient);
  }, "pred"_a, "truth"_a, "w_pos"_a = 1.0, "w_vel"_a = 0.5);

  // mesh
  py::class_<Landmark>(m, "Landmark")
      .def(py::init<>())
      .def_readwrite("index", &Landmark::index)
      .def_readwrite("lip", &Landmark::lip);
  m.def("make_head", [](int vertices, std::uint64_t seed) {
    const TemplateMesh h = make_head(vertices, seed);
    return py::dict("vertices"_a = Vertices(h.vertices), "faces"_a = h.faces, "landmarks"_a = h.landmarks);
  }, "vertices"_a, "seed"_a = 7);

  // eval
  m.def("project_landmarks", [](const Vertices& vertices, const std::vector<Landmark>& landmarks,
                                const Mat<double>& displacements, double px_per_unit) {
    const TemplateMesh mesh = make_mesh(vertices, landmarks);
    return project_landmarks(mesh, make_displacements(displacements), mesh.landmark_indices(),
                             {px_per_unit, 0.0, 0.0}).points;
  }, "vertices"_a, "landmarks"_a, "displacements"_a, "px_per_unit"_a = 100.0);
  m.def("positional_error", [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return positional_error(make_traj(a), make_traj(b));
  });
  m.def("velocity_error", [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return velocity_error(make_traj(a), make_traj(b));
  });

  // corpus / training pipeline
  m.def("generate_corpus", [](const std::filesystem::path& out, int sentences, int vertices,
                              std::uint64_t seed, double min_duration, double max_duration) {
    const TemplateMesh mesh = make_head(vertices, seed);
    const CorpusManifest man = generate_corpus({sentences, min_duration, max_duration, seed}, mesh,
                                              SurrogateProvider::from_seed(seed),
                                              OracleArticulator::for_mesh(mesh, seed), out);
    return out / "manifest.jsonl";
  }, "out_dir"_a, "sentences"_a = 20, "vertices"_a = 100, "seed"_a = 7, "min_duration"_a = 1.0,
     "max_duration"_a = 3.0);
  m.def("train", [](const std::filesystem::path& manifest, int epochs, double lr, double w_pos,
                    double w_vel, std::uint64_t seed, const std::string& arch) {
    const Corpus corpus = load_corpus(load_manifest(manifest));
    if (corpus.train.empty()) fail(ErrorKind::kData, "manifest has no training items");
    const int v = corpus.train.front().displacements.vertices;
    TrainConfig tc;
    tc.epochs = epochs;
    tc.learning_rate = lr;
    tc.seed = seed;
    TrainResult r;
    {
      py::gil_scoped_release release;
      r = train(corpus, init_params(arch == "lstm" ? NetworkConfig::lstm_only(v) : NetworkConfig::standard(v), seed),
                {w_pos, w_vel, Reduction::kMeanPerFrame}, tc);
    }
    py::list history;
    for (const auto& h : r.history) history.append(history_dict(h));
    return py::make_tuple(std::move(r.params), history);
  }, "manifest"_a, "epochs"_a = 10, "lr"_a = 1e-4, "w_pos"_a = 1.0, "w_vel"_a = 0.5, "seed"_a = 7,
     "arch"_a = "conv-lstm");
  m.def("evaluate", [](const NetworkParams& net, const std::filesystem::path& manifest_path,
                       const std::string& split, double px_per_unit) {
    const CorpusManifest manifest = load_manifest(manifest_path);
    const TemplateMesh mesh = load_obj(manifest.resolve("head.obj"), manifest.resolve("head.landmarks"));
    return report_dict(evaluate(net, load_samples(manifest, parse_split(split)), mesh, {px_per_unit, 0.0, 0.0}));
  }, "network"_a, "manifest"_a, "split"_a = "test", "px_per_unit"_a = 100.0);
}
