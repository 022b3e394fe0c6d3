#include "lipsync/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>

#include "json.hpp"

#include "lipsync/error.hpp"
#include "lipsync/rng.hpp"

namespace lipsync {
namespace {

constexpr double kAxisX = 0.8;
constexpr double kAxisY = 1.0;
constexpr double kAxisZ = 0.9;
constexpr double kMouthHeight = -0.45;  // y / kAxisY at the mouth centre
constexpr double kBandWidth = 0.35;     // polar width of the dense mouth band
constexpr double kPi = std::numbers::pi;

Eigen::RowVector3d surface_point(double polar, double azimuth) {
  return {kAxisX * std::sin(polar) * std::sin(azimuth), kAxisY * std::cos(polar),
          kAxisZ * std::sin(polar) * std::cos(azimuth)};
}

double mouth_polar() { return std::acos(kMouthHeight); }

double band(double polar) {
  const double d = (polar - mouth_polar()) / kBandWidth;
  return std::exp(-d * d);
}

// Ring polar angles with density 1 + 2 * band(polar), inverted numerically.
std::vector<double> ring_polars(int rings) {
  constexpr int kGrid = 4096;
  std::vector<double> cdf(kGrid + 1, 0.0);
  for (int i = 1; i <= kGrid; ++i) {
    const double th = kPi * (i - 0.5) / kGrid;
    cdf[i] = cdf[i - 1] + 1.0 + 2.0 * band(th);
  }
  std::vector<double> out;
  for (int r = 0; r < rings; ++r) {
    const double target = cdf[kGrid] * (r + 1.0) / (rings + 1.0);
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), target);
    const auto i = static_cast<int>(it - cdf.begin());
    const double frac = (target - cdf[i - 1]) / (cdf[i] - cdf[i - 1]);
    out.push_back(kPi * (i - 1 + frac) / kGrid);
  }
  return out;
}

// Split `total` into integer parts proportional to `weights`, each >= minimum.
std::vector<int> apportion(const std::vector<double>& weights, int total, int minimum) {
  const int n = static_cast<int>(weights.size());
  std::vector<int> out(n, minimum);
  int left = total - minimum * n;
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (int i = 0; i < n; ++i) {
    const double share = left * weights[i] / sum;
    const int whole = static_cast<int>(std::floor(share));
    out[i] += whole;
    assigned += whole;
    remainders.emplace_back(share - whole, i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int k = 0; k < left - assigned; ++k) ++out[remainders[k % n].second];
  return out;
}

// Triangulates the band between two closed rings whose azimuths ascend from 0.
void stitch(const std::vector<int>& a, const std::vector<double>& pa, const std::vector<int>& b,
            const std::vector<double>& pb, std::vector<Triangle>& faces) {
  const std::size_t na = a.size(), nb = b.size();
  auto angle = [](const std::vector<double>& p, std::size_t i) {
    return i < p.size() ? p[i] : p[i - p.size()] + 2.0 * kPi;
  };
  std::size_t i = 0, j = 0;
  while (i < na || j < nb) {
    const bool advance_a = j >= nb || (i < na && angle(pa, i + 1) <= angle(pb, j + 1));
    if (advance_a) {
      faces.push_back({a[i % na], b[j % nb], a[(i + 1) % na]});
      ++i;
    } else {
      faces.push_back({a[i % na], b[j % nb], b[(j + 1) % nb]});
      ++j;
    }
  }
}

struct Target {
  double polar;
  double azimuth;
  bool lip;
};

std::vector<Target> landmark_targets() {
  const double m = mouth_polar();
  const double dp = 0.12, da = 0.35;
  std::vector<Target> t = {
      {m - dp, 0.0, true},                // upper lip middle
      {m + dp, 0.0, true},                // lower lip middle
      {m, -da, true},                     // mouth corners
      {m, da, true},
      {m - 0.7 * dp, -0.7 * da, true},    // upper lip sides
      {m - 0.7 * dp, 0.7 * da, true},
      {m + 0.7 * dp, -0.7 * da, true},    // lower lip sides
      {m + 0.7 * dp, 0.7 * da, true},
  };
  const double eye = std::acos(0.25), brow = std::acos(0.42);
  for (double side : {-1.0, 1.0}) {
    t.push_back({eye, side * 0.45, false});
    t.push_back({eye, side * 0.22, false});
    t.push_back({brow, side * 0.35, false});
    t.push_back({std::acos(-0.2), side * 0.75, false});  // cheek
  }
  t.push_back({std::acos(0.05), 0.0, false});   // nose bridge
  t.push_back({std::acos(-0.2), 0.0, false});   // nose tip
  t.push_back({std::acos(-0.78), 0.0, false});  // chin
  t.push_back({std::acos(0.7), 0.0, false});    // forehead
  return t;
}

}  // namespace

TemplateMesh make_head(int vertex_target, std::uint64_t seed) {
  if (vertex_target < kHeadLandmarks) {
    fail(ErrorKind::kUsage, "make_head: need at least " + std::to_string(kHeadLandmarks) + " vertices");
  }
  Rng rng(derive_seed(seed, 0x4ead));
  const int ring_vertices = vertex_target - 2;
  const int rings = std::clamp(static_cast<int>(std::lround(std::sqrt(ring_vertices / 2.0))), 2,
                               ring_vertices / 3);
  const std::vector<double> polars = ring_polars(rings);
  std::vector<double> weights;
  for (double th : polars) weights.push_back(std::sin(th) * (1.0 + 2.0 * band(th)));
  const std::vector<int> counts = apportion(weights, ring_vertices, 3);

  TemplateMesh mesh;
  mesh.vertices.resize(vertex_target, 3);
  Eigen::Index next = 0;
  const int top = static_cast<int>(next);
  mesh.vertices.row(next++) = surface_point(0.0, 0.0);
  std::vector<std::vector<int>> ring_ids(rings);
  std::vector<std::vector<double>> ring_az(rings);
  for (int r = 0; r < rings; ++r) {
    // Azimuth warp u - beta sin u crowds vertices towards the front (u = 0).
    const double beta = 0.6 * band(polars[r]);
    const double jitter = 0.15 * (rng.uniform() - 0.5) / counts[r];
    for (int k = 0; k < counts[r]; ++k) {
      const double u = 2.0 * kPi * (k + (k == 0 ? 0.0 : jitter)) / counts[r];
      const double az = u - beta * std::sin(u);
      ring_ids[r].push_back(static_cast<int>(next));
      ring_az[r].push_back(az);
      mesh.vertices.row(next++) = surface_point(polars[r], az);
    }
  }
  const int bottom = static_cast<int>(next);
  mesh.vertices.row(next++) = surface_point(kPi, 0.0);

  for (std::size_t k = 0; k < ring_ids.front().size(); ++k) {
    const auto& ring = ring_ids.front();
    mesh.faces.push_back({top, ring[(k + 1) % ring.size()], ring[k]});
  }
  for (int r = 0; r + 1 < rings; ++r) stitch(ring_ids[r], ring_az[r], ring_ids[r + 1], ring_az[r + 1], mesh.faces);
  for (std::size_t k = 0; k < ring_ids.back().size(); ++k) {
    const auto& ring = ring_ids.back();
    mesh.faces.push_back({bottom, ring[k], ring[(k + 1) % ring.size()]});
  }

  std::set<int> used;
  for (const Target& t : landmark_targets()) {
    const Eigen::RowVector3d p = surface_point(t.polar, t.azimuth);
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int v = 0; v < vertex_target; ++v) {
      if (used.count(v)) continue;
      const double d = (mesh.vertices.row(v) - p).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = v;
      }
    }
    used.insert(best);
    mesh.landmarks.push_back({best, t.lip});
  }
  mesh.validate();
  return mesh;
}

std::vector<bool> mouth_region(const TemplateMesh& mesh) {
  const std::vector<int> lips = mesh.lip_landmark_indices();
  std::vector<bool> out(static_cast<std::size_t>(mesh.vertex_count()), false);
  if (lips.empty()) return out;
  Eigen::RowVector3d centre = Eigen::RowVector3d::Zero();
  for (int v : lips) centre += mesh.vertices.row(v);
  centre /= static_cast<double>(lips.size());
  double spread = 0.0;
  for (int v : lips) spread = std::max(spread, (mesh.vertices.row(v) - centre).norm());
  const double radius = 1.6 * spread + 1e-9;
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    out[static_cast<std::size_t>(v)] = (mesh.vertices.row(v) - centre).norm() <= radius;
  }
  for (int v : lips) out[static_cast<std::size_t>(v)] = true;
  return out;
}

OracleArticulator OracleArticulator::for_mesh(const TemplateMesh& mesh, std::uint64_t seed,
                                              int feature_dim, int codes, double smoothing,
                                              double readout_scale) {
  const int v_count = mesh.vertex_count();
  const std::vector<bool> mouth = mouth_region(mesh);
  Eigen::RowVector3d centre = Eigen::RowVector3d::Zero();
  int n_mouth = 0;
  for (int v = 0; v < v_count; ++v) {
    if (mouth[v]) {
      centre += mesh.vertices.row(v);
      ++n_mouth;
    }
  }
  centre /= std::max(1, n_mouth);
  double radius = 1e-9;
  for (int v = 0; v < v_count; ++v) {
    if (mouth[v]) radius = std::max(radius, (mesh.vertices.row(v) - centre).norm());
  }

  OracleArticulator o;
  o.seed = seed;
  o.smoothing = smoothing;
  o.basis.resize(3 * v_count, codes);
  Rng rng(derive_seed(seed, 0xa271));
  for (int k = 0; k < codes; ++k) {
    for (int v = 0; v < v_count; ++v) {
      Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
      dir /= std::max(dir.norm(), 1e-12);
      const double d = (mesh.vertices.row(v) - centre).norm() / radius;
      const double weight = mouth[v] ? 0.5 + 0.5 * std::exp(-d * d) : 0.02 * std::exp(-d * d);
      o.basis.block(3 * v, k, 3, 1) = weight * dir;
    }
    o.basis.col(k).normalize();
  }
  o.readout.resize(codes, feature_dim);
  for (Eigen::Index i = 0; i < o.readout.size(); ++i) o.readout.data()[i] = readout_scale * rng.normal();
  return o;
}

DisplacementSequence articulate(const OracleArticulator& oracle, const FeatureSequence& features) {
  if (features.dim() != oracle.readout.cols()) {
    fail(ErrorKind::kShape, "articulate: feature dim " + std::to_string(features.dim()) +
                                " != readout dim " + std::to_string(oracle.readout.cols()));
  }
  const double a = oracle.smoothing;
  DisplacementSequence d;
  d.vertices = oracle.vertices();
  d.fps = features.fps;
  d.frames.resize(features.frames(), oracle.basis.rows());
  Eigen::VectorXd code = Eigen::VectorXd::Zero(oracle.readout.rows());
  for (int t = 0; t < features.frames(); ++t) {
    const Eigen::VectorXd f = features.data.row(t).transpose().cast<double>();
    code = a * code + (1.0 - a) * (oracle.readout * f);
    d.frames.row(t) = (oracle.basis * code).transpose().cast<float>();
  }
  return d;
}

Waveform synth_speech(double duration_seconds, std::uint64_t seed, int sample_rate) {
  constexpr double kSyllableRate = 4.0;
  Rng rng(derive_seed(seed, 0x5bee));
  const auto n = static_cast<std::size_t>(std::llround(duration_seconds * sample_rate));
  const int carriers = 2 + static_cast<int>(rng.below(4));
  const auto syllables = static_cast<int>(std::ceil(duration_seconds * kSyllableRate)) + 1;

  struct Carrier {
    bool noise;
    double freq;
    std::vector<double> gain;  // per syllable
    std::vector<double> bend;  // per-syllable frequency factor
  };
  std::vector<Carrier> parts;
  for (int c = 0; c < carriers; ++c) {
    Carrier car;
    car.noise = rng.uniform() < 0.3;
    car.freq = 150.0 * std::pow(3500.0 / 150.0, rng.uniform());
    for (int s = 0; s < syllables; ++s) {
      car.gain.push_back(rng.uniform() < 0.35 ? 0.0 : rng.uniform(0.2, 1.0));
      car.bend.push_back(std::pow(2.0, rng.uniform(-0.5, 0.5)));
    }
    parts.push_back(std::move(car));
  }

  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(n, 0.0);
  for (auto& car : parts) {
    double phase = 2.0 * kPi * rng.uniform();
    Rng noise(derive_seed(seed, 0x9015e + static_cast<std::uint64_t>(car.freq)));
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / sample_rate;
      const double pos = t * kSyllableRate;
      const auto s = static_cast<int>(pos);
      const double env = std::pow(std::sin(kPi * (pos - s)), 2.0);
      const double gain = car.gain[s] * env;
      phase += 2.0 * kPi * car.freq * car.bend[s] / sample_rate;
      const double carrier = car.noise ? noise.uniform(-1.0, 1.0) : std::sin(phase);
      w.samples[i] += gain * carrier;
    }
  }
  Rng floor(derive_seed(seed, 0xf100));
  double peak = 1e-12;
  for (double v : w.samples) peak = std::max(peak, std::abs(v));
  for (double& v : w.samples) v = 0.7 * v / peak + 1e-3 * floor.uniform(-1.0, 1.0);
  return w;
}

const char* to_string(Split split) noexcept {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kValidation;
  if (name == "test") return Split::kTest;
  fail(ErrorKind::kFormat, "unknown split '" + name + "'");
}

std::vector<std::string> CorpusManifest::ids(Split split) const {
  std::vector<std::string> out;
  for (const auto& item : items) {
    if (item.split == split) out.push_back(item.id);
  }
  return out;
}

SplitSizes split_sizes(int sentences) {
  if (sentences < 3) fail(ErrorKind::kUsage, "corpus needs at least 3 sentences (one per split)");
  const int held = std::max(1, sentences / 20);
  return {sentences - 2 * held, held, held};
}

CorpusManifest generate_corpus(const CorpusSpec& spec, const TemplateMesh& mesh,
                               const SurrogateProvider& provider, const OracleArticulator& oracle,
                               const std::filesystem::path& out_dir) {
  const SplitSizes sizes = split_sizes(spec.sentences);
  if (spec.min_duration <= 0.0 || spec.max_duration < spec.min_duration) {
    fail(ErrorKind::kUsage, "generate_corpus: bad duration range");
  }
  require_same_topology(mesh, oracle.vertices(), "oracle articulator");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    fail(ErrorKind::kIo, "cannot create corpus directory " + out_dir.string());
  }

  CorpusManifest manifest;
  manifest.base_dir = out_dir;
  Rng rng(derive_seed(spec.seed, 0xc0de));
  for (int i = 0; i < spec.sentences; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "s%04d", i);
    // Durations quantized to whole video frames.
    const double raw = rng.uniform(spec.min_duration, spec.max_duration);
    const double duration = std::round(raw * kVideoFps) / kVideoFps;
    const Waveform wave = synth_speech(duration, derive_seed(spec.seed, 1000 + i));
    const FeatureSequence features = features_from_waveform(wave, provider);
    const DisplacementSequence anim = articulate(oracle, features);

    ManifestItem item;
    item.id = id;
    item.wav = item.id + ".wav";
    item.features = item.id + ".lsf1";
    item.anim = item.id + ".lsa1";
    item.duration = wave.duration();
    item.split = i < sizes.train ? Split::kTrain
                 : i < sizes.train + sizes.validation ? Split::kValidation
                                                      : Split::kTest;
    save_wav(wave, out_dir / item.wav);
    save_features(features, out_dir / item.features);
    save_anim(anim, out_dir / item.anim);
    manifest.items.push_back(std::move(item));
  }
  save_obj(mesh, out_dir / "head.obj");
  save_landmarks(mesh.landmarks, out_dir / "head.landmarks");
  save_manifest(manifest, out_dir / "manifest.jsonl");
  return manifest;
}

std::string encode_manifest(const CorpusManifest& manifest) {
  std::string out;
  for (const auto& item : manifest.items) {
    nlohmann::json j = {{"id", item.id},
                        {"features", item.features.generic_string()},
                        {"anim", item.anim.generic_string()},
                        {"wav", item.wav.generic_string()},
                        {"duration", item.duration},
                        {"split", to_string(item.split)}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << encode_manifest(manifest);
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open manifest " + path.string());
  CorpusManifest manifest;
  manifest.base_dir = path.parent_path();
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestItem item;
      item.id = j.at("id").get<std::string>();
      item.features = j.at("features").get<std::string>();
      item.anim = j.at("anim").get<std::string>();
      item.wav = j.value("wav", std::string());
      item.duration = j.at("duration").get<double>();
      item.split = parse_split(j.at("split").get<std::string>());
      if (!seen.insert(item.id).second) fail(ErrorKind::kData, where + ": duplicate id '" + item.id + "'");
      for (const auto* p : {&item.features, &item.anim}) {
        if (!std::filesystem::exists(manifest.resolve(*p))) {
          fail(ErrorKind::kData, where + ": missing file " + p->generic_string());
        }
      }
      manifest.items.push_back(std::move(item));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kFormat, where + ": " + e.what());
    }
  }
  return manifest;
}

std::vector<Sample> load_samples(const CorpusManifest& manifest, Split split) {
  std::vector<Sample> out;
  for (const auto& item : manifest.items) {
    if (item.split != split) continue;
    Sample s;
    s.id = item.id;
    s.features = load_features(manifest.resolve(item.features));
    s.displacements = load_anim(manifest.resolve(item.anim));
    if (s.features.frames() != s.displacements.frame_count()) {
      fail(ErrorKind::kData, "item '" + item.id + "': feature and displacement frame counts differ");
    }
    out.push_back(std::move(s));
  }
  return out;
}

Corpus load_corpus(const CorpusManifest& manifest) {
  return {load_samples(manifest, Split::kTrain), load_samples(manifest, Split::kValidation)};
}

}  // namespace lipsync
