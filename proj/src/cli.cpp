#include "lipsync/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "lipsync/audio.hpp"
#include "lipsync/error.hpp"
#include "lipsync/eval.hpp"
#include "lipsync/features.hpp"
#include "lipsync/mesh.hpp"
#include "lipsync/model.hpp"
#include "lipsync/synthdata.hpp"
#include "lipsync/training.hpp"

namespace lipsync::cli {
namespace {

namespace fs = std::filesystem;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

[[noreturn]] void usage(const std::string& message) { fail(ErrorKind::kUsage, message); }

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

// Features either from a WAV through the surrogate front-end or from a file.
FeatureSequence input_features(const std::string& wav, const std::string& features,
                               std::uint64_t seed) {
  if (!wav.empty() == !features.empty()) usage("give exactly one of --wav or --features");
  if (!features.empty()) return load_features(features);
  return features_from_waveform(load_wav(wav), SurrogateProvider::from_seed(seed));
}

TemplateMesh load_template(const std::string& obj, const std::string& landmarks) {
  std::optional<fs::path> lm;
  if (!landmarks.empty()) {
    lm = landmarks;
  } else {
    fs::path guess = fs::path(obj).replace_extension(".landmarks");
    if (fs::exists(guess)) lm = guess;
  }
  return load_obj(obj, lm);
}

struct Options {
  std::uint64_t seed = 7;
  // gen-corpus
  std::string out;
  int sentences = 20;
  int vertices = 100;
  double min_duration = 1.0;
  double max_duration = 3.0;
  // features
  std::string wav;
  std::string kind = "surrogate";
  // train
  std::string manifest;
  std::string config;
  std::string metrics;
  std::string best_out;
  std::string arch = "conv-lstm";
  int epochs = 10;
  double lr = 1e-4;
  double w_pos = 1.0;
  double w_vel = 0.5;
  int checkpoint_every = 0;
  // infer / eval / export / traj
  std::string checkpoint;
  std::string features;
  std::string anim;
  std::string template_obj;
  std::string landmarks;
  std::string split = "test";
  double px_per_unit = 100.0;
  bool self_test = false;
  int landmark = -1;
};

void cmd_gen_corpus(const Options& o) {
  if (o.out.empty()) usage("gen-corpus: --out is required");
  CorpusSpec spec;
  spec.sentences = o.sentences;
  spec.min_duration = o.min_duration;
  spec.max_duration = o.max_duration;
  spec.seed = o.seed;
  const TemplateMesh mesh = make_head(o.vertices, o.seed);
  const OracleArticulator oracle = OracleArticulator::for_mesh(mesh, o.seed);
  const CorpusManifest m =
      generate_corpus(spec, mesh, SurrogateProvider::from_seed(o.seed), oracle, o.out);
  const SplitSizes sizes = split_sizes(o.sentences);
  std::cout << "wrote " << m.items.size() << " sentences (" << sizes.train << "/" << sizes.validation
            << "/" << sizes.test << ") to " << o.out << "\n";
}

void cmd_features(const Options& o) {
  if (o.wav.empty() || o.out.empty()) usage("features: --wav and --out are required");
  const Waveform wave = load_wav(o.wav);
  FeatureSequence f;
  if (o.kind == "surrogate") {
    f = features_from_waveform(wave, SurrogateProvider::from_seed(o.seed));
  } else if (o.kind == "mfcc") {
    MfccFrames frames = mfcc(resample(wave, kCanonicalSampleRate));
    frames.source_duration = wave.duration();
    f = mfcc_features(frames);
  } else {
    usage("features: --kind must be surrogate or mfcc");
  }
  save_features(f, o.out);
  std::cout << o.out << ": " << f.frames() << " frames x " << f.dim() << " (" << to_string(f.kind)
            << ")\n";
}

void cmd_train(const Options& o, const CLI::App& app) {
  if (o.manifest.empty() || o.out.empty()) usage("train: --manifest and --out are required");
  TrainConfig tc;
  LossConfig lc;
  if (!o.config.empty()) apply_key_values(parse_key_values(read_text(o.config), o.config), tc, lc);
  if (app.count("--epochs")) tc.epochs = o.epochs;
  if (app.count("--lr")) tc.learning_rate = o.lr;
  if (app.count("--w-pos")) lc.position_weight = o.w_pos;
  if (app.count("--w-vel")) lc.velocity_weight = o.w_vel;
  if (app.count("--seed")) tc.seed = o.seed;
  if (app.count("--checkpoint-every")) tc.checkpoint_every = o.checkpoint_every;
  if (tc.epochs < 1) usage("train: --epochs must be >= 1");
  if (tc.learning_rate <= 0.0) usage("train: --lr must be > 0");
  if (lc.position_weight < 0.0 || lc.velocity_weight < 0.0) usage("train: loss weights must be >= 0");
  if (o.arch != "conv-lstm" && o.arch != "lstm") usage("train: --arch must be conv-lstm or lstm");
  if (tc.checkpoint_every > 0 && tc.checkpoint_dir.empty()) {
    tc.checkpoint_dir = fs::path(o.out).parent_path();
    if (tc.checkpoint_dir.empty()) tc.checkpoint_dir = ".";
  }

  const CorpusManifest manifest = load_manifest(o.manifest);
  const Corpus corpus = load_corpus(manifest);
  if (corpus.train.empty()) fail(ErrorKind::kData, "train: manifest has no training items");
  const int vertices = corpus.train.front().displacements.vertices;
  NetworkConfig nc = o.arch == "lstm" ? NetworkConfig::lstm_only(vertices) : NetworkConfig::standard(vertices);
  nc.input_dim = corpus.train.front().features.dim();

  const TrainResult result = train(corpus, init_params(nc, tc.seed), lc, tc, [](const EpochMetrics& m) {
    std::cerr << "epoch " << m.epoch << "  train lp " << format_number(m.train.position) << " lv "
              << format_number(m.train.velocity);
    if (m.has_validation) {
      std::cerr << "  val lp " << format_number(m.validation.position) << " lv "
                << format_number(m.validation.velocity);
    }
    if (m.clipped_steps > 0) std::cerr << "  (clipped " << m.clipped_steps << " steps)";
    std::cerr << "\n";
  });
  save_checkpoint(result.params, o.out);
  if (!o.best_out.empty()) save_checkpoint(result.best_params, o.best_out);
  if (!o.metrics.empty()) write_metrics_csv(result.history, o.metrics);
}

void cmd_infer(const Options& o) {
  if (o.checkpoint.empty() || o.out.empty()) usage("infer: --checkpoint and --out are required");
  const NetworkParams params = load_checkpoint(o.checkpoint);
  const FeatureSequence f = input_features(o.wav, o.features, o.seed);
  const DisplacementSequence d = forward(params, f);
  save_anim(d, o.out);
  std::cout << o.out << ": " << d.frame_count() << " frames, " << d.vertices << " vertices\n";
}

void cmd_eval(const Options& o) {
  if (o.manifest.empty()) usage("eval: --manifest is required");
  if (!o.self_test && o.checkpoint.empty()) usage("eval: --checkpoint or --self-test is required");
  const CorpusManifest manifest = load_manifest(o.manifest);
  const std::string obj = o.template_obj.empty() ? manifest.resolve("head.obj").string() : o.template_obj;
  const TemplateMesh mesh = load_template(obj, o.landmarks);
  const std::vector<Sample> test = load_samples(manifest, parse_split(o.split));
  ProjectionConfig pc;
  pc.px_per_unit = o.px_per_unit;
  EvalReport report;
  std::string name;
  if (o.self_test) {
    std::vector<std::string> ids;
    std::vector<DisplacementSequence> truths;
    for (const auto& s : test) {
      ids.push_back(s.id);
      truths.push_back(s.displacements);
    }
    report = evaluate_sequences(mesh, ids, truths, truths, pc);
    name = "ground-truth";
  } else {
    report = evaluate(load_checkpoint(o.checkpoint), test, mesh, pc);
    name = fs::path(o.checkpoint).stem().string();
  }
  std::cout << format_table({{name, report}});
  if (!o.out.empty()) write_text(o.out, report.to_json());
}

void cmd_export(const Options& o) {
  if (o.checkpoint.empty() || o.template_obj.empty() || o.out.empty()) {
    usage("export-obj-seq: --checkpoint, --template and --out are required");
  }
  const NetworkParams params = load_checkpoint(o.checkpoint);
  const TemplateMesh mesh = load_template(o.template_obj, o.landmarks);
  require_same_topology(mesh, params.config.vertices, "checkpoint");
  const FeatureSequence f = input_features(o.wav, o.features, o.seed);
  const auto frames = apply_displacements(mesh, forward(params, f));
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + o.out);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05zu.obj", t);
    save_obj(frames[t], mesh.faces, fs::path(o.out) / name);
  }
  std::cout << "wrote " << frames.size() << " OBJ frames to " << o.out << "\n";
}

void cmd_traj(const Options& o) {
  if (o.template_obj.empty() || o.out.empty()) usage("traj: --template and --out are required");
  const TemplateMesh mesh = load_template(o.template_obj, o.landmarks);
  DisplacementSequence d;
  if (!o.anim.empty()) {
    d = load_anim(o.anim);
  } else {
    if (o.checkpoint.empty()) usage("traj: give --anim or --checkpoint with --wav/--features");
    d = forward(load_checkpoint(o.checkpoint), input_features(o.wav, o.features, o.seed));
  }
  ProjectionConfig pc;
  pc.px_per_unit = o.px_per_unit;
  const Trajectories traj = project_landmarks(mesh, d, mesh.landmark_indices(), pc);
  const int landmark = o.landmark >= 0 ? o.landmark : default_lip_landmark(mesh);
  write_lip_trajectory_csv(traj, mesh, landmark, o.out);
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Speech-driven lip-sync: features, training, inference and evaluation"};
  app.require_subcommand(1, 1);
  Options o;
  auto seed_opt = [&](CLI::App* sub) { sub->add_option("--seed", o.seed, "RNG seed"); };

  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic paired corpus");
  gen->add_option("--out", o.out, "Output directory");
  gen->add_option("--sentences", o.sentences, "Number of sentences");
  gen->add_option("--vertices", o.vertices, "Head mesh vertex count");
  gen->add_option("--min-duration", o.min_duration, "Shortest sentence (s)");
  gen->add_option("--max-duration", o.max_duration, "Longest sentence (s)");
  seed_opt(gen);

  auto* feat = app.add_subcommand("features", "Compute speech features for a WAV file");
  feat->add_option("--wav", o.wav, "Input WAV");
  feat->add_option("--out", o.out, "Output LSF1 file");
  feat->add_option("--kind", o.kind, "surrogate or mfcc");
  seed_opt(feat);

  auto* tr = app.add_subcommand("train", "Train a network on a manifest");
  tr->add_option("--manifest", o.manifest, "Corpus manifest (JSON lines)");
  tr->add_option("--out", o.out, "Output checkpoint (LSN1)");
  tr->add_option("--best-out", o.best_out, "Best-validation checkpoint");
  tr->add_option("--config", o.config, "key=value training config file");
  tr->add_option("--metrics", o.metrics, "Per-epoch metrics CSV");
  tr->add_option("--epochs", o.epochs, "Training epochs");
  tr->add_option("--lr", o.lr, "Adam learning rate");
  tr->add_option("--w-pos", o.w_pos, "Reconstruction loss weight");
  tr->add_option("--w-vel", o.w_vel, "Velocity loss weight");
  tr->add_option("--arch", o.arch, "conv-lstm or lstm");
  tr->add_option("--checkpoint-every", o.checkpoint_every, "Checkpoint interval (epochs)");
  seed_opt(tr);

  auto* inf = app.add_subcommand("infer", "Predict vertex displacements for a clip");
  inf->add_option("--checkpoint", o.checkpoint, "Network checkpoint");
  inf->add_option("--wav", o.wav, "Input WAV");
  inf->add_option("--features", o.features, "Input LSF1 features");
  inf->add_option("--out", o.out, "Output LSA1 animation");
  seed_opt(inf);

  auto* ev = app.add_subcommand("eval", "Landmark position/velocity errors on a split");
  ev->add_option("--manifest", o.manifest, "Corpus manifest");
  ev->add_option("--checkpoint", o.checkpoint, "Network checkpoint");
  ev->add_option("--template", o.template_obj, "Template OBJ (default: head.obj next to manifest)");
  ev->add_option("--landmarks", o.landmarks, "Landmark sidecar");
  ev->add_option("--split", o.split, "train, val or test");
  ev->add_option("--px-per-unit", o.px_per_unit, "Projection scale");
  ev->add_option("--out", o.out, "Report JSON");
  ev->add_flag("--self-test", o.self_test, "Compare ground truth with itself");
  seed_opt(ev);

  auto* ex = app.add_subcommand("export-obj-seq", "Write one OBJ per predicted frame");
  ex->add_option("--checkpoint", o.checkpoint, "Network checkpoint");
  ex->add_option("--wav", o.wav, "Input WAV");
  ex->add_option("--features", o.features, "Input LSF1 features");
  ex->add_option("--template", o.template_obj, "Template OBJ");
  ex->add_option("--landmarks", o.landmarks, "Landmark sidecar");
  ex->add_option("--out", o.out, "Output directory");
  seed_opt(ex);

  auto* tj = app.add_subcommand("traj", "Export the vertical lip landmark curve as CSV");
  tj->add_option("--checkpoint", o.checkpoint, "Network checkpoint");
  tj->add_option("--wav", o.wav, "Input WAV");
  tj->add_option("--features", o.features, "Input LSF1 features");
  tj->add_option("--anim", o.anim, "LSA1 animation instead of inference");
  tj->add_option("--template", o.template_obj, "Template OBJ");
  tj->add_option("--landmarks", o.landmarks, "Landmark sidecar");
  tj->add_option("--landmark", o.landmark, "Lip landmark vertex index (default: upper lip middle)");
  tj->add_option("--px-per-unit", o.px_per_unit, "Projection scale");
  tj->add_option("--out", o.out, "Output CSV");
  seed_opt(tj);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen) cmd_gen_corpus(o);
    else if (*feat) cmd_features(o);
    else if (*tr) cmd_train(o, *tr);
    else if (*inf) cmd_infer(o);
    else if (*ev) cmd_eval(o);
    else if (*ex) cmd_export(o);
    else if (*tj) cmd_traj(o);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return e.kind() == ErrorKind::kUsage ? kExitUsage : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}

}  // namespace lipsync::cli
