#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meta4/core/tensor.hpp"

namespace meta4::audio {

inline constexpr int kSampleRate = 16000;
inline constexpr size_t kWindowSamples = 400;  // 25 ms
inline constexpr size_t kHopSamples = 160;     // 10 ms
inline constexpr size_t kFftSize = 1024;       // smallest pow2 that keeps
                                               // every low mel filter nonempty
inline constexpr size_t kNumMels = 128;
inline constexpr double kFreqMin = 0.0;
inline constexpr double kFreqMax = 8000.0;
inline constexpr double kLogFloor = 1e-10;

struct Waveform {
    std::vector<double> samples;  // [-1, 1]
    int sample_rate = kSampleRate;
};

struct MelSpectrogram {
    size_t frames = 0;
    std::vector<double> data;  // frames x 128, row-major
    double frame_hop_seconds = 0.01;
    int source_rate = kSampleRate;

    double at(size_t t, size_t m) const { return data[t * kNumMels + m]; }
};

// In-place radix-2 FFT; sizes must be a power of two.
void fft_radix2(std::vector<double>& re, std::vector<double>& im);

// 128 triangular filters on the HTK mel scale over [0, 8000] Hz, applied to
// a one-sided power spectrum of kFftSize/2 + 1 bins.
struct MelFilterbank {
    size_t n_filters = 0;
    size_t n_bins = 0;
    std::vector<double> weights;     // n_filters x n_bins
    std::vector<double> center_hz;   // peak frequency of each triangle

    double weight(size_t filter, size_t bin) const {
        return weights[filter * n_bins + bin];
    }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);
const MelFilterbank& mel_filterbank();

size_t frame_count(size_t n_samples);

// Hann-windowed STFT -> power spectrum -> mel filterbank -> natural log
// with floor 1e-10.
MelSpectrogram compute_mel(const Waveform& w);

// Overlapping patches on a (time, mel) grid, flattened row-major
// (time offset major, mel offset minor), one patch per tensor row.
// Time axis: ceil((T - patch)/stride) + 1 starts, tail zero-padded, so
// every frame lands in a patch. Mel axis: floor((128 - patch)/stride) + 1
// starts (12 for the defaults), trailing bins dropped as in a strided
// convolution.
inline constexpr size_t kPatchSize = 16;
inline constexpr size_t kPatchStride = 10;

Tensor patchify(const MelSpectrogram& m, size_t patch = kPatchSize,
                size_t stride = kPatchStride);

size_t patch_grid_time(size_t frames, size_t patch = kPatchSize,
                       size_t stride = kPatchStride);
size_t patch_grid_mel(size_t patch = kPatchSize,
                      size_t stride = kPatchStride);

// RIFF/WAVE readers and writer. Load accepts PCM 16-bit and 32-bit float,
// mono or stereo (downmixed by channel mean); save writes 16-bit PCM.
Waveform load_wav(const std::string& path);
void save_wav(const std::string& path, const Waveform& w);

}  // namespace meta4::audio
