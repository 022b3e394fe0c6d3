#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lipsync/audio.hpp"

namespace lipsync {

inline constexpr int kVideoFps = 60;
inline constexpr int kCharacterClasses = 29;  // 26 letters, apostrophe, space, blank

enum class FeatureKind : std::uint8_t {
  kCharProbSurrogate = 0,
  kMfccRaw = 1,
  kExternal = 2,
};

const char* to_string(FeatureKind kind) noexcept;

using FrameMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Per-video-frame speech features, frames x dim.
struct FeatureSequence {
  FrameMatrix data;
  int fps = kVideoFps;
  FeatureKind kind = FeatureKind::kCharProbSurrogate;

  int frames() const { return static_cast<int>(data.rows()); }
  int dim() const { return static_cast<int>(data.cols()); }
};

// Fixed random affine + softmax over context-averaged, utterance-normalized
// MFCCs. Stands in for a pre-trained character recognizer.
struct SurrogateProvider {
  Eigen::MatrixXd projection;  // mfcc_dim x classes
  Eigen::VectorXd bias;        // classes
  int context = 2;             // frames averaged on each side
  std::uint64_t seed = 0;

  static SurrogateProvider from_seed(std::uint64_t seed, int context = 2,
                                     int mfcc_dim = 13, int classes = kCharacterClasses,
                                     double weight_scale = 1.0);
};

// round(fps * duration)
int video_frame_count(double duration_seconds, double fps = kVideoFps);

// Linear interpolation in time: source row i sits at i / source_rate, output
// row k at k / target_fps; queries beyond the last source row clamp to it.
Eigen::MatrixXd resample_features(const Eigen::MatrixXd& data, double source_rate,
                                  double target_fps, int out_frames);
// Output length round(target_fps * rows / source_rate).
Eigen::MatrixXd resample_features(const Eigen::MatrixXd& data, double source_rate,
                                  double target_fps = kVideoFps);

FeatureSequence surrogate_features(const MfccFrames& mfcc, const SurrogateProvider& provider,
                                   double target_fps = kVideoFps);
FeatureSequence mfcc_features(const MfccFrames& mfcc, double target_fps = kVideoFps);

// Resample to 16 kHz, MFCC, surrogate projection.
FeatureSequence features_from_waveform(const Waveform& wave, const SurrogateProvider& provider);

// "LSF1" | u32 frames | u32 dim | u32 fps | u8 kind | f32 payload (row-major, LE)
std::vector<std::uint8_t> encode_features(const FeatureSequence& features);
FeatureSequence decode_features(std::span<const std::uint8_t> bytes,
                                const std::string& source = "<memory>");
void save_features(const FeatureSequence& features, const std::filesystem::path& path);
FeatureSequence load_features(const std::filesystem::path& path);

}  // namespace lipsync
