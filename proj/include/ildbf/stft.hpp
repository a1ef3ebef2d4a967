// stft.hpp
// Square-root-Hann STFT analysis/synthesis with 50% overlap and zero-padded
// FFT frames.

#pragma once

#include <cmath>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "ildbf/common.hpp"

namespace ildbf::stft {

struct StftConfig {
    double sample_rate = 16000.0;
    int frame_len = 200;
    int fft_size = 256;
    int hop = 100;

    int num_bins() const { return fft_size / 2 + 1; }
    double bin_frequency(int k) const { return k * sample_rate / fft_size; }

    void validate() const {
        if (!(sample_rate > 0.0)) throw InputError("stft: sample rate must be positive");
        if (frame_len <= 0 || frame_len % 2 != 0)
            throw InputError("stft: frame length must be positive and even");
        if (hop * 2 != frame_len) throw InputError("stft: hop must be half the frame length");
        if (fft_size < frame_len || fft_size % 2 != 0)
            throw InputError("stft: fft size must be even and at least the frame length");
    }

    bool operator==(const StftConfig&) const = default;
};

// 12.5 ms frames at 16 kHz zero-padded to a 256-point FFT.
inline StftConfig default_config(double sample_rate = 16000.0) {
    StftConfig c;
    c.sample_rate = sample_rate;
    c.frame_len = static_cast<int>(std::lround(0.0125 * sample_rate));
    if (c.frame_len % 2) ++c.frame_len;
    c.hop = c.frame_len / 2;
    c.fft_size = 256;
    while (c.fft_size < c.frame_len) c.fft_size *= 2;
    return c;
}

// Periodic square-root Hann window; its square overlap-adds to exactly 1 at
// 50% overlap.
inline RVector sqrt_hann(int frame_len) {
    RVector w(frame_len);
    for (int n = 0; n < frame_len; ++n)
        w(n) = std::sqrt(0.5 * (1.0 - std::cos(2.0 * kPi * n / frame_len)));
    return w;
}

// Per-bin multichannel frames: bins[k] is channels x frames.
struct StftFrames {
    int fft_size = 0;
    int num_channels = 0;
    int num_frames = 0;
    std::vector<CMatrix> bins;

    int num_bins() const { return static_cast<int>(bins.size()); }
    CVector frame(int k, int l) const { return bins[k].col(l); }
};

inline StftFrames zero_frames(int fft_size, int num_channels, int num_frames) {
    StftFrames f;
    f.fft_size = fft_size;
    f.num_channels = num_channels;
    f.num_frames = num_frames;
    f.bins.assign(fft_size / 2 + 1, CMatrix::Zero(num_channels, num_frames));
    return f;
}

inline int frame_count(const StftConfig& config, Eigen::Index num_samples) {
    if (num_samples < config.frame_len) return 0;
    return static_cast<int>((num_samples - config.frame_len) / config.hop) + 1;
}

// signal: channels x samples.
inline StftFrames analyze(const StftConfig& config, const RMatrix& signal) {
    config.validate();
    if (signal.rows() == 0 || signal.cols() == 0) throw InputError("stft: empty signal");
    if (signal.cols() < config.frame_len)
        throw InputError("stft: signal shorter than one frame");
    const int channels = static_cast<int>(signal.rows());
    const int frames = frame_count(config, signal.cols());
    StftFrames out = zero_frames(config.fft_size, channels, frames);
    const RVector window = sqrt_hann(config.frame_len);

    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<double> buf(config.fft_size, 0.0);
    std::vector<cplx> spec;
    for (int ch = 0; ch < channels; ++ch) {
        for (int l = 0; l < frames; ++l) {
            const Eigen::Index start = static_cast<Eigen::Index>(l) * config.hop;
            std::fill(buf.begin(), buf.end(), 0.0);
            for (int n = 0; n < config.frame_len; ++n) buf[n] = window(n) * signal(ch, start + n);
            fft.fwd(spec, buf);
            for (int k = 0; k < config.num_bins(); ++k) out.bins[k](ch, l) = spec[k];
        }
    }
    return out;
}

// Overlap-add with the synthesis window. Output length covers every frame.
inline RMatrix synthesize(const StftConfig& config, const StftFrames& frames) {
    config.validate();
    if (frames.fft_size != config.fft_size || frames.num_bins() != config.num_bins())
        throw InputError("stft: frames do not match the synthesis configuration");
    for (const CMatrix& b : frames.bins)
        if (b.rows() != frames.num_channels || b.cols() != frames.num_frames)
            throw InputError("stft: inconsistent frame matrix shape");
    const Eigen::Index length =
        frames.num_frames == 0 ? 0
                               : static_cast<Eigen::Index>(frames.num_frames - 1) * config.hop +
                                     config.frame_len;
    RMatrix out = RMatrix::Zero(frames.num_channels, length);
    const RVector window = sqrt_hann(config.frame_len);

    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<cplx> spec(config.num_bins());
    std::vector<double> buf;
    for (int ch = 0; ch < frames.num_channels; ++ch) {
        for (int l = 0; l < frames.num_frames; ++l) {
            for (int k = 0; k < config.num_bins(); ++k) spec[k] = frames.bins[k](ch, l);
            // The inverse of a real signal needs real DC and Nyquist bins.
            spec.front() = spec.front().real();
            spec.back() = spec.back().real();
            fft.inv(buf, spec, config.fft_size);
            const Eigen::Index start = static_cast<Eigen::Index>(l) * config.hop;
            for (int n = 0; n < config.frame_len; ++n) out(ch, start + n) += window(n) * buf[n];
        }
    }
    return out;
}

// Samples [first, last) unaffected by the half-frame edges.
struct Interior {
    Eigen::Index first = 0;
    Eigen::Index last = 0;
};

inline Interior interior(const StftConfig& config, Eigen::Index length) {
    Interior in;
    in.first = config.hop;
    in.last = std::max<Eigen::Index>(in.first, length - config.hop);
    return in;
}

}  // namespace ildbf::stft
