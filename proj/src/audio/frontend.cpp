#include "meta4/audio/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace meta4::audio {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace

void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
    size_t n = re.size();
    require(im.size() == n, "fft: re/im length mismatch");
    require(is_pow2(n), "fft size must be a power of two, got ", n);

    // Bit-reversal permutation.
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * kPi / static_cast<double>(len);
        double wr = std::cos(ang), wi = std::sin(ang);
        for (size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (size_t j = 0; j < len / 2; ++j) {
                size_t a = i + j, b = i + j + len / 2;
                double tr = re[b] * cr - im[b] * ci;
                double ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
    return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

const MelFilterbank& mel_filterbank() {
    static const MelFilterbank fb = [] {
        MelFilterbank f;
        f.n_filters = kNumMels;
        f.n_bins = kFftSize / 2 + 1;
        f.weights.assign(f.n_filters * f.n_bins, 0.0);
        f.center_hz.resize(f.n_filters);

        // 130 edge points uniform in mel; filter m spans edges m-1..m+1.
        std::vector<double> edge_hz(kNumMels + 2);
        double mel_lo = hz_to_mel(kFreqMin), mel_hi = hz_to_mel(kFreqMax);
        for (size_t i = 0; i < edge_hz.size(); ++i) {
            double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(kNumMels + 1);
            edge_hz[i] = mel_to_hz(mel);
        }
        double bin_hz =
            static_cast<double>(kSampleRate) / static_cast<double>(kFftSize);
        for (size_t m = 0; m < kNumMels; ++m) {
            double lo = edge_hz[m], mid = edge_hz[m + 1], hi = edge_hz[m + 2];
            f.center_hz[m] = mid;
            for (size_t k = 0; k < f.n_bins; ++k) {
                double hz = bin_hz * static_cast<double>(k);
                double w = 0.0;
                if (hz > lo && hz < mid) {
                    w = (hz - lo) / (mid - lo);
                } else if (hz == mid) {
                    w = 1.0;
                } else if (hz > mid && hz < hi) {
                    w = (hi - hz) / (hi - mid);
                }
                f.weights[m * f.n_bins + k] = w;
            }
        }
        return f;
    }();
    return fb;
}

size_t frame_count(size_t n_samples) {
    require(n_samples >= kWindowSamples,
            "waveform too short: ", n_samples, " samples, need at least ",
            kWindowSamples);
    return (n_samples - kWindowSamples) / kHopSamples + 1;
}

MelSpectrogram compute_mel(const Waveform& w) {
    require(w.sample_rate == kSampleRate, "unsupported sample rate ",
            w.sample_rate, ", expected ", kSampleRate);
    size_t frames = frame_count(w.samples.size());

    // Periodic Hann window.
    std::vector<double> window(kWindowSamples);
    for (size_t i = 0; i < kWindowSamples; ++i) {
        window[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) /
                                          static_cast<double>(kWindowSamples)));
    }
    const MelFilterbank& fb = mel_filterbank();

    MelSpectrogram out;
    out.frames = frames;
    out.data.assign(frames * kNumMels, 0.0);
    out.frame_hop_seconds =
        static_cast<double>(kHopSamples) / static_cast<double>(kSampleRate);
    out.source_rate = w.sample_rate;

#pragma omp parallel for schedule(static)
    for (long long t = 0; t < static_cast<long long>(frames); ++t) {
        std::vector<double> re(kFftSize, 0.0), im(kFftSize, 0.0);
        size_t off = static_cast<size_t>(t) * kHopSamples;
        for (size_t i = 0; i < kWindowSamples; ++i) {
            re[i] = w.samples[off + i] * window[i];
        }
        fft_radix2(re, im);
        std::vector<double> power(fb.n_bins);
        for (size_t k = 0; k < fb.n_bins; ++k) {
            power[k] = re[k] * re[k] + im[k] * im[k];
        }
        for (size_t m = 0; m < kNumMels; ++m) {
            double acc = 0.0;
            const double* wrow = fb.weights.data() + m * fb.n_bins;
            for (size_t k = 0; k < fb.n_bins; ++k) acc += wrow[k] * power[k];
            out.data[static_cast<size_t>(t) * kNumMels + m] =
                std::log(std::max(acc, kLogFloor));
        }
    }
    for (double v : out.data) {
        require(std::isfinite(v), "mel spectrogram contains non-finite values");
    }
    return out;
}

size_t patch_grid_time(size_t frames, size_t patch, size_t stride) {
    require(frames >= patch, "too few frames to patchify: ", frames,
            " < patch size ", patch);
    return (frames - patch + stride - 1) / stride + 1;
}

size_t patch_grid_mel(size_t patch, size_t stride) {
    return (kNumMels - patch) / stride + 1;
}

Tensor patchify(const MelSpectrogram& m, size_t patch, size_t stride) {
    require(patch > 0 && stride > 0 && patch <= kNumMels,
            "bad patch geometry: patch ", patch, ", stride ", stride);
    size_t nt = patch_grid_time(m.frames, patch, stride);
    size_t nm = patch_grid_mel(patch, stride);
    size_t patch_len = patch * patch;

    std::vector<double> out(nt * nm * patch_len, 0.0);
    for (size_t pt = 0; pt < nt; ++pt) {
        for (size_t pm = 0; pm < nm; ++pm) {
            double* dst = out.data() + (pt * nm + pm) * patch_len;
            size_t t0 = pt * stride, m0 = pm * stride;
            for (size_t r = 0; r < patch; ++r) {
                size_t t = t0 + r;
                if (t >= m.frames) break;  // zero-padded tail
                for (size_t c = 0; c < patch; ++c) {
                    dst[r * patch + c] = m.at(t, m0 + c);
                }
            }
        }
    }
    return Tensor::from_data({nt * nm, patch_len}, std::move(out));
}

// ---- WAV ----------------------------------------------------------------

namespace {

struct ByteReader {
    const std::vector<char>& buf;
    size_t pos = 0;
    const std::string& path;

    void need(size_t n) const {
        require(pos + n <= buf.size(), path, ": truncated WAV file");
    }
    uint32_t u32() {
        need(4);
        uint32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    uint16_t u16() {
        need(2);
        uint16_t v;
        std::memcpy(&v, buf.data() + pos, 2);
        pos += 2;
        return v;
    }
    std::string tag() {
        need(4);
        std::string s(buf.data() + pos, 4);
        pos += 4;
        return s;
    }
};

}  // namespace

Waveform load_wav(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.is_open(), "cannot open ", path);
    std::vector<char> buf((std::istreambuf_iterator<char>(is)),
                          std::istreambuf_iterator<char>());
    ByteReader r{buf, 0, path};

    require(r.tag() == "RIFF", path, ": not a RIFF file");
    (void)r.u32();  // RIFF size
    require(r.tag() == "WAVE", path, ": not a WAVE file");

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    bool have_fmt = false;
    const char* data_ptr = nullptr;
    size_t data_len = 0;

    while (r.pos + 8 <= buf.size()) {
        std::string id = r.tag();
        uint32_t size = r.u32();
        if (id == "fmt ") {
            require(size >= 16, path, ": malformed fmt chunk");
            format = r.u16();
            channels = r.u16();
            rate = r.u32();
            (void)r.u32();  // byte rate
            (void)r.u16();  // block align
            bits = r.u16();
            r.need(size - 16);
            r.pos += size - 16;
            have_fmt = true;
        } else if (id == "data") {
            r.need(size);
            data_ptr = buf.data() + r.pos;
            data_len = size;
            r.pos += size;
        } else {
            r.need(size);
            r.pos += size;
        }
        if (size % 2 == 1 && r.pos < buf.size()) ++r.pos;  // chunk padding
    }
    require(have_fmt, path, ": missing fmt chunk");
    require(data_ptr != nullptr, path, ": missing data chunk");
    require(channels >= 1, path, ": zero channels");
    bool pcm16 = format == 1 && bits == 16;
    bool f32 = format == 3 && bits == 32;
    require(pcm16 || f32, path, ": unsupported codec (format ", format,
            ", ", bits, " bits); expected 16-bit PCM or 32-bit float");

    size_t bytes_per = bits / 8;
    size_t n_frames = data_len / (bytes_per * channels);
    Waveform w;
    w.sample_rate = static_cast<int>(rate);
    w.samples.resize(n_frames);
    for (size_t i = 0; i < n_frames; ++i) {
        double acc = 0.0;
        for (size_t c = 0; c < channels; ++c) {
            const char* p = data_ptr + (i * channels + c) * bytes_per;
            if (pcm16) {
                int16_t s;
                std::memcpy(&s, p, 2);
                acc += static_cast<double>(s) / 32768.0;
            } else {
                float s;
                std::memcpy(&s, p, 4);
                acc += static_cast<double>(s);
            }
        }
        w.samples[i] = acc / static_cast<double>(channels);
    }
    return w;
}

void save_wav(const std::string& path, const Waveform& w) {
    require(w.sample_rate > 0, "save_wav: bad sample rate");
    std::ofstream os(path, std::ios::binary);
    require(os.is_open(), "cannot open ", path, " for writing");

    auto put_u32 = [&](uint32_t v) {
        os.write(reinterpret_cast<const char*>(&v), 4);
    };
    auto put_u16 = [&](uint16_t v) {
        os.write(reinterpret_cast<const char*>(&v), 2);
    };
    uint32_t data_len = static_cast<uint32_t>(w.samples.size() * 2);
    uint32_t rate = static_cast<uint32_t>(w.sample_rate);

    os.write("RIFF", 4);
    put_u32(36 + data_len);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    put_u32(16);
    put_u16(1);   // PCM
    put_u16(1);   // mono
    put_u32(rate);
    put_u32(rate * 2);  // byte rate
    put_u16(2);   // block align
    put_u16(16);  // bits
    os.write("data", 4);
    put_u32(data_len);
    for (double v : w.samples) {
        // Scale by 32768 and clamp: load_wav divides by 32768, which makes
        // save -> load -> save an exact fixed point.
        double scaled = std::nearbyint(v * 32768.0);
        scaled = std::clamp(scaled, -32768.0, 32767.0);
        int16_t s = static_cast<int16_t>(scaled);
        os.write(reinterpret_cast<const char*>(&s), 2);
    }
    require(static_cast<bool>(os), "write to ", path, " failed");
}

}  // namespace meta4::audio
