#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace lipsync {

inline constexpr int kCanonicalSampleRate = 16000;

struct Waveform {
  std::vector<double> samples;  // normalized to [-1, 1]
  int sample_rate = kCanonicalSampleRate;

  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// RIFF/WAVE, 16-bit PCM, mono or stereo. Stereo is averaged to mono.
Waveform load_wav(const std::filesystem::path& path);
Waveform decode_wav(std::span<const std::uint8_t> bytes,
                    const std::string& source = "<memory>");

// Writes 16-bit mono PCM; samples outside [-1, 1] are clipped.
void save_wav(const Waveform& wave, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_wav(const Waveform& wave);

// Kaiser-windowed sinc interpolation. Output length is
// round(n * target_rate / sample_rate).
Waveform resample(const Waveform& wave, int target_rate);

struct MfccConfig {
  int sample_rate = kCanonicalSampleRate;
  int window_length = 400;  // 25 ms
  int hop_length = 160;     // 10 ms
  int fft_size = 512;
  int mel_filters = 26;
  int coefficients = 13;
  double preemphasis = 0.97;
  double low_hz = 0.0;
  double high_hz = 8000.0;
  double log_floor = 1e-10;

  double frame_rate() const {
    return static_cast<double>(sample_rate) / hop_length;
  }
  std::uint64_t fingerprint() const;
};

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct MfccFrames {
  RowMatrix frames;  // frames x coefficients
  double frame_rate = 100.0;
  std::uint64_t config_fingerprint = 0;
  double source_duration = 0.0;  // seconds of audio the frames came from

  int count() const { return static_cast<int>(frames.rows()); }
};

// floor((samples - window) / hop) + 1, or 0 when shorter than one window.
std::size_t mfcc_frame_count(std::size_t samples, const MfccConfig& config);

MfccFrames mfcc(const Waveform& wave, const MfccConfig& config = {});

}  // namespace lipsync
