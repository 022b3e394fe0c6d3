#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lipsync/audio.hpp"
#include "lipsync/features.hpp"
#include "lipsync/mesh.hpp"
#include "lipsync/training.hpp"

namespace lipsync {

inline constexpr int kHeadLandmarks = 20;
inline constexpr int kHeadLipLandmarks = 8;

// Procedural ellipsoid head (face towards +z, up +y) with vertex density
// concentrated around the mouth. Exactly `vertex_target` vertices; 20
// landmarks, the first 8 of which are lip landmarks starting with the
// middle of the upper lip.
TemplateMesh make_head(int vertex_target, std::uint64_t seed);

// Vertices belonging to the mouth region: within a radius of the lip
// landmark centroid proportional to the lip landmark spread.
std::vector<bool> mouth_region(const TemplateMesh& mesh);

// Ground-truth generator: a smooth causal linear map from features to
// vertex offsets.
//   code_t = a * code_{t-1} + (1 - a) * readout * f_t,  code_{-1} = 0
//   frame_t = basis * code_t
struct OracleArticulator {
  Eigen::MatrixXd basis;    // 3V x K, unit-norm columns, mouth weighted
  Eigen::MatrixXd readout;  // K x D
  double smoothing = 0.6;
  std::uint64_t seed = 0;

  int vertices() const { return static_cast<int>(basis.rows() / 3); }

  static OracleArticulator for_mesh(const TemplateMesh& mesh, std::uint64_t seed,
                                    int feature_dim = kCharacterClasses, int codes = 8,
                                    double smoothing = 0.6, double readout_scale = 0.15);
};

DisplacementSequence articulate(const OracleArticulator& oracle, const FeatureSequence& features);

// Speech-like test signal: 2-5 sine or noise carriers gated per syllable by
// a 4 Hz envelope.
Waveform synth_speech(double duration_seconds, std::uint64_t seed,
                      int sample_rate = kCanonicalSampleRate);

enum class Split { kTrain, kValidation, kTest };
const char* to_string(Split split) noexcept;
Split parse_split(const std::string& name);

struct ManifestItem {
  std::string id;
  std::filesystem::path features;  // relative to the manifest directory
  std::filesystem::path anim;
  std::filesystem::path wav;
  double duration = 0.0;
  Split split = Split::kTrain;
};

struct CorpusManifest {
  std::vector<ManifestItem> items;
  std::filesystem::path base_dir;

  std::vector<std::string> ids(Split split) const;
  std::filesystem::path resolve(const std::filesystem::path& p) const { return base_dir / p; }
};

struct SplitSizes {
  int train = 0;
  int validation = 0;
  int test = 0;
};
// 18:1:1 with at least one item in each held-out split.
SplitSizes split_sizes(int sentences);

struct CorpusSpec {
  int sentences = 20;
  double min_duration = 1.0;
  double max_duration = 3.0;
  std::uint64_t seed = 7;
};

// Writes <id>.wav/.lsf1/.lsa1 per sentence, head.obj, head.landmarks and
// manifest.jsonl into out_dir.
CorpusManifest generate_corpus(const CorpusSpec& spec, const TemplateMesh& mesh,
                               const SurrogateProvider& provider, const OracleArticulator& oracle,
                               const std::filesystem::path& out_dir);

// JSON lines: {"id", "features", "anim", "wav", "duration", "split"}
std::string encode_manifest(const CorpusManifest& manifest);
void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);
CorpusManifest load_manifest(const std::filesystem::path& path);

std::vector<Sample> load_samples(const CorpusManifest& manifest, Split split);
Corpus load_corpus(const CorpusManifest& manifest);

}  // namespace lipsync
