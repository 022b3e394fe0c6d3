#include "lipsync/audio.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include <unsupported/Eigen/FFT>

#include "binary_io.hpp"
#include "lipsync/error.hpp"

namespace lipsync {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

struct WavFormat {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits = 0;
};

WavFormat parse_fmt(detail::ByteReader& in, std::uint32_t size) {
  if (size < 16) in.error("fmt chunk too small (" + std::to_string(size) + " bytes)");
  const std::size_t start = in.offset();
  WavFormat fmt;
  fmt.format = in.u16("fmt.format");
  fmt.channels = in.u16("fmt.channels");
  fmt.sample_rate = in.u32("fmt.sample_rate");
  in.u32("fmt.byte_rate");
  fmt.block_align = in.u16("fmt.block_align");
  fmt.bits = in.u16("fmt.bits_per_sample");
  if (fmt.format == kFormatExtensible && size >= 40) {
    in.u16("fmt.cb_size");
    in.u16("fmt.valid_bits");
    in.u32("fmt.channel_mask");
    fmt.format = in.u16("fmt.subformat");
    in.skip(14, "fmt.subformat_guid");
  }
  const std::size_t consumed = in.offset() - start;
  in.skip(size - consumed, "fmt.extension");
  return fmt;
}

// Kaiser-windowed sinc kernel sampled on a fine grid.
class SincTable {
 public:
  static constexpr int kZeroCrossings = 16;
  static constexpr int kResolution = 512;  // samples per zero crossing
  static constexpr double kBeta = 8.6;

  SincTable() : values_(kZeroCrossings * kResolution + 2) {
    const double norm = std::cyl_bessel_i(0.0, kBeta);
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const double x = static_cast<double>(i) / kResolution;  // in zero crossings
      const double r = std::min(1.0, x / kZeroCrossings);
      const double window = std::cyl_bessel_i(0.0, kBeta * std::sqrt(1.0 - r * r)) / norm;
      const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      values_[i] = x >= kZeroCrossings ? 0.0 : sinc * window;
    }
  }

  // x measured in zero crossings of the lowpass.
  double operator()(double x) const {
    x = std::abs(x);
    if (x >= kZeroCrossings) return 0.0;
    const double pos = x * kResolution;
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return values_[i] + frac * (values_[i + 1] - values_[i]);
  }

 private:
  std::vector<double> values_;
};

const SincTable& sinc_table() {
  static const SincTable table;
  return table;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// filters x (fft_size/2 + 1)
Eigen::MatrixXd mel_filterbank(const MfccConfig& c) {
  const int bins = c.fft_size / 2 + 1;
  Eigen::MatrixXd bank = Eigen::MatrixXd::Zero(c.mel_filters, bins);
  const double lo = hz_to_mel(c.low_hz);
  const double hi = hz_to_mel(c.high_hz);
  std::vector<double> edges(c.mel_filters + 2);
  for (int i = 0; i < c.mel_filters + 2; ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * i / (c.mel_filters + 1));
  }
  for (int m = 0; m < c.mel_filters; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * c.sample_rate / c.fft_size;
      if (f > left && f < center) {
        bank(m, k) = (f - left) / (center - left);
      } else if (f >= center && f < right) {
        bank(m, k) = (right - f) / (right - center);
      }
    }
  }
  return bank;
}

// Orthonormal DCT-II rows 0..coefficients-1.
Eigen::MatrixXd dct_matrix(int coefficients, int inputs) {
  Eigen::MatrixXd dct(coefficients, inputs);
  for (int j = 0; j < coefficients; ++j) {
    const double scale = j == 0 ? std::sqrt(1.0 / inputs) : std::sqrt(2.0 / inputs);
    for (int m = 0; m < inputs; ++m) {
      dct(j, m) = scale * std::cos(std::numbers::pi * j * (m + 0.5) / inputs);
    }
  }
  return dct;
}

}  // namespace

Waveform decode_wav(std::span<const std::uint8_t> bytes, const std::string& source) {
  detail::ByteReader in(bytes, source);
  if (in.bytes(4, "RIFF magic") != "RIFF") in.error("missing RIFF magic");
  in.u32("RIFF size");
  if (in.bytes(4, "WAVE tag") != "WAVE") in.error("missing WAVE tag");

  bool have_fmt = false;
  WavFormat fmt;
  while (in.remaining() > 0) {
    const std::string id = in.bytes(4, "chunk id");
    const std::uint32_t size = in.u32("chunk size");
    if (id == "fmt ") {
      fmt = parse_fmt(in, size);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) in.error("data chunk before fmt chunk");
      if (fmt.format != kFormatPcm) {
        fail(ErrorKind::kUnsupported,
             source + ": unsupported WAVE codec " + std::to_string(fmt.format) + " (PCM only)");
      }
      if (fmt.bits != 16) {
        fail(ErrorKind::kUnsupported,
             source + ": unsupported sample width " + std::to_string(fmt.bits) + " bits");
      }
      if (fmt.channels != 1 && fmt.channels != 2) {
        fail(ErrorKind::kUnsupported,
             source + ": unsupported channel count " + std::to_string(fmt.channels));
      }
      if (fmt.sample_rate == 0) in.error("zero sample rate");
      if (size == 0) fail(ErrorKind::kEmptyInput, source + ": empty data chunk");
      const std::size_t frame_bytes = 2u * fmt.channels;
      in.need(size, "data payload");
      const std::size_t frames = size / frame_bytes;
      if (frames == 0) fail(ErrorKind::kEmptyInput, source + ": data chunk holds no whole frame");
      Waveform wave;
      wave.sample_rate = static_cast<int>(fmt.sample_rate);
      wave.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (int ch = 0; ch < fmt.channels; ++ch) acc += in.i16("sample") / 32768.0;
        wave.samples[i] = acc / fmt.channels;
      }
      return wave;
    } else {
      in.skip(size, "chunk " + id);
    }
    if (size % 2 == 1 && in.remaining() > 0) in.skip(1, "chunk pad");
  }
  in.error(have_fmt ? "missing data chunk" : "missing fmt chunk");
}

Waveform load_wav(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return decode_wav(bytes, path.string());
}

std::vector<std::uint8_t> encode_wav(const Waveform& wave) {
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  detail::ByteWriter out;
  out.bytes("RIFF");
  out.u32(36 + data_bytes);
  out.bytes("WAVE");
  out.bytes("fmt ");
  out.u32(16);
  out.u16(kFormatPcm);
  out.u16(1);
  out.u32(static_cast<std::uint32_t>(wave.sample_rate));
  out.u32(static_cast<std::uint32_t>(wave.sample_rate) * 2);
  out.u16(2);
  out.u16(16);
  out.bytes("data");
  out.u32(data_bytes);
  for (double s : wave.samples) {
    const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
    out.i16(static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0)));
  }
  return std::move(out.buffer());
}

void save_wav(const Waveform& wave, const std::filesystem::path& path) {
  detail::write_file(path, encode_wav(wave));
}

Waveform resample(const Waveform& wave, int target_rate) {
  if (target_rate <= 0) fail(ErrorKind::kUsage, "resample: target rate must be positive");
  if (wave.sample_rate <= 0) fail(ErrorKind::kUsage, "resample: source rate must be positive");
  if (target_rate == wave.sample_rate) return wave;

  const auto n_in = static_cast<std::ptrdiff_t>(wave.samples.size());
  const double ratio = static_cast<double>(target_rate) / wave.sample_rate;
  const auto n_out = static_cast<std::ptrdiff_t>(std::llround(static_cast<double>(n_in) * ratio));
  // Cutoff at the lower of the two Nyquist rates, relative to the source.
  const double cutoff = std::min(1.0, ratio);
  const double half_width = SincTable::kZeroCrossings / cutoff;  // source samples
  const SincTable& kernel = sinc_table();

  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<std::size_t>(n_out));
  for (std::ptrdiff_t n = 0; n < n_out; ++n) {
    const double t = static_cast<double>(n) / ratio;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(t - half_width)));
    const auto hi = std::min<std::ptrdiff_t>(n_in - 1, static_cast<std::ptrdiff_t>(std::floor(t + half_width)));
    double acc = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
      acc += wave.samples[static_cast<std::size_t>(k)] * kernel(cutoff * (t - static_cast<double>(k)));
    }
    out.samples[static_cast<std::size_t>(n)] = cutoff * acc;
  }
  return out;
}

std::uint64_t MfccConfig::fingerprint() const {
  std::ostringstream key;
  key.precision(17);
  key << "mfcc/v1 sr=" << sample_rate << " win=" << window_length << " hop=" << hop_length
      << " nfft=" << fft_size << " mel=" << mel_filters << " ncep=" << coefficients
      << " pre=" << preemphasis << " lo=" << low_hz << " hi=" << high_hz
      << " floor=" << log_floor << " window=hann";
  std::uint64_t hash = 0xCBF29CE484222325ULL;  // FNV-1a
  for (unsigned char ch : key.str()) {
    hash ^= ch;
    hash *= 0x100000001B3ULL;
  }
  return hash;
}

std::size_t mfcc_frame_count(std::size_t samples, const MfccConfig& config) {
  const auto win = static_cast<std::size_t>(config.window_length);
  if (samples < win) return 0;
  return (samples - win) / static_cast<std::size_t>(config.hop_length) + 1;
}

MfccFrames mfcc(const Waveform& wave, const MfccConfig& config) {
  if (wave.sample_rate != config.sample_rate) {
    fail(ErrorKind::kUsage, "mfcc: waveform rate " + std::to_string(wave.sample_rate) +
                                " Hz, expected " + std::to_string(config.sample_rate) + " Hz");
  }
  const std::size_t frames = mfcc_frame_count(wave.samples.size(), config);
  if (frames == 0) {
    fail(ErrorKind::kEmptyInput, "mfcc: audio shorter than one analysis window (" +
                                     std::to_string(wave.samples.size()) + " samples)");
  }

  std::vector<double> emphasized(wave.samples.size());
  emphasized[0] = wave.samples[0];
  for (std::size_t i = 1; i < wave.samples.size(); ++i) {
    emphasized[i] = wave.samples[i] - config.preemphasis * wave.samples[i - 1];
  }

  const int win = config.window_length;
  std::vector<double> hann(win);
  for (int i = 0; i < win; ++i) {
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (win - 1));
  }
  const Eigen::MatrixXd bank = mel_filterbank(config);
  const Eigen::MatrixXd dct = dct_matrix(config.coefficients, config.mel_filters);
  const int bins = config.fft_size / 2 + 1;

  MfccFrames out;
  out.frames.resize(static_cast<Eigen::Index>(frames), config.coefficients);
  out.frame_rate = config.frame_rate();
  out.config_fingerprint = config.fingerprint();
  out.source_duration = wave.duration();

  Eigen::FFT<double> fft;
  std::vector<double> buffer(config.fft_size, 0.0);
  std::vector<std::complex<double>> spectrum;
  Eigen::VectorXd power(bins);
  Eigen::VectorXd log_mel(config.mel_filters);
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t start = f * static_cast<std::size_t>(config.hop_length);
    std::fill(buffer.begin(), buffer.end(), 0.0);
    for (int i = 0; i < win; ++i) buffer[i] = emphasized[start + i] * hann[i];
    fft.fwd(spectrum, buffer);
    for (int k = 0; k < bins; ++k) power[k] = std::norm(spectrum[k]);
    const Eigen::VectorXd energies = bank * power;
    for (int m = 0; m < config.mel_filters; ++m) {
      log_mel[m] = std::log(std::max(energies[m], config.log_floor));
    }
    out.frames.row(static_cast<Eigen::Index>(f)) = (dct * log_mel).transpose();
  }
  return out;
}

}  // namespace lipsync
