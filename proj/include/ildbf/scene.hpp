// scene.hpp
// Acoustic scene description, sphere-model acoustic transfer functions,
// time-domain mixing and noise CPSD construction.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "ildbf/common.hpp"
#include "ildbf/sphere.hpp"
#include "ildbf/stft.hpp"

namespace ildbf::scene {

// Microphones on the sphere surface. Index 0 is the right reference and index
// M-1 the left reference; microphone j mirrors microphone M-1-j.
struct MicArrayConfig {
    std::vector<double> azimuths_deg;
    double head_radius = 0.0875;

    int num_mics() const { return static_cast<int>(azimuths_deg.size()); }
    int left_ref() const { return num_mics() - 1; }
    int right_ref() const { return 0; }

    void validate() const {
        const int m = num_mics();
        if (m < 2 || m % 2 != 0)
            throw GeometryError("microphone count must be even and at least 2");
        if (!(head_radius > 0.0)) throw GeometryError("head radius must be positive");
        for (double az : azimuths_deg)
            if (!(az > -180.0 && az <= 180.0))
                throw GeometryError("microphone azimuths must lie in (-180, 180]");
    }

    // M/2 behind-the-ear microphones per side spread over 5 degrees around
    // the ears at -100 (left) and +100 (right).
    static MicArrayConfig behind_the_ear(int num_mics, double ear_azimuth_deg = 100.0,
                                         double spread_deg = 5.0) {
        if (num_mics < 2 || num_mics % 2 != 0)
            throw GeometryError("microphone count must be even and at least 2");
        MicArrayConfig cfg;
        const int per_side = num_mics / 2;
        cfg.azimuths_deg.assign(num_mics, 0.0);
        for (int t = 0; t < per_side; ++t) {
            double offset = per_side == 1 ? 0.0 : -spread_deg / 2.0 + spread_deg * t / (per_side - 1);
            cfg.azimuths_deg[t] = ear_azimuth_deg + offset;
            cfg.azimuths_deg[num_mics - 1 - t] = -(ear_azimuth_deg + offset);
        }
        return cfg;
    }
};

enum class SourceRole { target, interferer };

struct SourceSpec {
    SourceRole role = SourceRole::interferer;
    double azimuth_deg = 0.0;  // 0 = mid-sagittal, clockwise (to the right) positive
    double distance_m = 1.0;
    std::string signal;        // WAV path or synth:... specification
    double gain_db = 0.0;
};

struct Scene {
    MicArrayConfig mic_array = MicArrayConfig::behind_the_ear(4);
    std::vector<SourceSpec> sources;
    double sample_rate = 16000.0;
    int fft_size = 256;
    int frame_len = 200;
    double self_noise_snr_db = 50.0;
    double cutoff_hz = 800.0;
    sphere::SphereParams sphere;

    int num_interferers() const {
        return static_cast<int>(std::count_if(sources.begin(), sources.end(), [](const SourceSpec& s) {
            return s.role == SourceRole::interferer;
        }));
    }
    // Largest interferer count that leaves the JBLCMV one degree of freedom.
    int max_interferers() const { return 2 * mic_array.num_mics() - 3; }

    int target_index() const {
        for (std::size_t i = 0; i < sources.size(); ++i)
            if (sources[i].role == SourceRole::target) return static_cast<int>(i);
        throw InputError("scene has no target source");
    }
    std::vector<int> interferer_indices() const {
        std::vector<int> idx;
        for (std::size_t i = 0; i < sources.size(); ++i)
            if (sources[i].role == SourceRole::interferer) idx.push_back(static_cast<int>(i));
        return idx;
    }

    stft::StftConfig stft_config() const {
        stft::StftConfig c;
        c.sample_rate = sample_rate;
        c.frame_len = frame_len;
        c.hop = frame_len / 2;
        c.fft_size = fft_size;
        return c;
    }

    sphere::SphereParams sphere_params() const {
        sphere::SphereParams p = sphere;
        p.radius = mic_array.head_radius;
        return p;
    }

    void validate() const {
        mic_array.validate();
        int targets = 0;
        for (const SourceSpec& s : sources) {
            if (s.role == SourceRole::target) ++targets;
            if (!(s.distance_m > mic_array.head_radius)) {
                std::ostringstream os;
                os << "source at azimuth " << s.azimuth_deg << " lies inside the head (distance "
                   << s.distance_m << " m)";
                throw GeometryError(os.str());
            }
            if (!(s.azimuth_deg > -180.0 && s.azimuth_deg <= 180.0))
                throw GeometryError("source azimuths must lie in (-180, 180]");
        }
        if (targets != 1) throw InputError("scene must contain exactly one target source");
        if (num_interferers() > max_interferers()) {
            std::ostringstream os;
            os << "scene has " << num_interferers() << " interferers; at most " << max_interferers()
               << " are supported with " << mic_array.num_mics() << " microphones";
            throw InputError(os.str());
        }
        if (!(sample_rate > 0.0)) throw InputError("sample rate must be positive");
        if (!(cutoff_hz > 0.0)) throw InputError("cutoff frequency must be positive");
        stft_config().validate();
    }
};

// Per-bin steering vectors for the target and each interferer.
struct AtfSet {
    std::vector<double> freqs_hz;
    std::vector<CVector> target;                     // [bin]
    std::vector<std::vector<CVector>> interferers;   // [interferer][bin]

    int num_bins() const { return static_cast<int>(freqs_hz.size()); }
    int num_mics() const { return target.empty() ? 0 : static_cast<int>(target.front().size()); }
    int num_interferers() const { return static_cast<int>(interferers.size()); }

    // source_id 0 is the target, 1..r the interferers.
    const CVector& source(int source_id, int bin) const {
        return source_id == 0 ? target.at(bin) : interferers.at(source_id - 1).at(bin);
    }
    CVector& source(int source_id, int bin) {
        return source_id == 0 ? target.at(bin) : interferers.at(source_id - 1).at(bin);
    }

    void validate() const {
        const int k = num_bins();
        const int m = num_mics();
        if (k == 0 || m == 0) throw InputError("ATF set is empty");
        auto check = [&](const std::vector<CVector>& v) {
            if (static_cast<int>(v.size()) != k) throw InputError("ATF bin count mismatch");
            for (const CVector& x : v) {
                if (x.size() != m) throw InputError("ATF vector length differs from microphone count");
                if (x.squaredNorm() == 0.0) throw InputError("ATF vector is identically zero");
            }
        };
        check(target);
        for (const auto& b : interferers) check(b);
    }
};

// Real-valued steering vectors at DC and Nyquist keep the FIR realisation real.
inline cplx realify(cplx v) { return {std::copysign(std::abs(v), v.real()), 0.0}; }

// Sphere pressure normalised by (ka)^2 so the far-field low-frequency response
// is unity. DC uses the 1 Hz limit.
inline cplx normalized_pressure(const sphere::SphereParams& params, double f_hz, double theta_deg,
                                double r) {
    const double f = f_hz > 0.0 ? f_hz : 1.0;
    const double ka = params.wavenumber(f) * params.radius;
    return sphere::sphere_pressure(params, f, theta_deg, r) / (ka * ka);
}

inline CVector steering_vector(const sphere::SphereParams& params, const MicArrayConfig& mics,
                               const SourceSpec& src, double f_hz, bool real_bin) {
    CVector v(mics.num_mics());
    for (int j = 0; j < mics.num_mics(); ++j) {
        const double theta = azimuth_separation_deg(src.azimuth_deg, mics.azimuths_deg[j]);
        cplx p;
        try {
            p = normalized_pressure(params, f_hz, theta, src.distance_m);
        } catch (const NumericError& e) {
            std::ostringstream os;
            os << e.what() << " [source azimuth " << src.azimuth_deg << ", f = " << f_hz << " Hz]";
            throw NumericError(os.str());
        }
        v(j) = real_bin ? realify(p) : p;
    }
    return v;
}

inline AtfSet build_atfs(const Scene& scene) {
    scene.validate();
    const sphere::SphereParams params = scene.sphere_params();
    const stft::StftConfig cfg = scene.stft_config();
    AtfSet atfs;
    const int bins = cfg.num_bins();
    for (int k = 0; k < bins; ++k) atfs.freqs_hz.push_back(cfg.bin_frequency(k));
    const int t = scene.target_index();
    const std::vector<int> interf = scene.interferer_indices();
    atfs.interferers.resize(interf.size());
    for (int k = 0; k < bins; ++k) {
        const bool real_bin = (k == 0 || k == bins - 1);
        const double f = atfs.freqs_hz[k];
        atfs.target.push_back(steering_vector(params, scene.mic_array, scene.sources[t], f, real_bin));
        for (std::size_t i = 0; i < interf.size(); ++i)
            atfs.interferers[i].push_back(
                steering_vector(params, scene.mic_array, scene.sources[interf[i]], f, real_bin));
    }
    return atfs;
}

// Noise CPSDs per bin; target and per-interferer images are optional.
struct CpsdSet {
    std::vector<CMatrix> noise;
    std::vector<CMatrix> target;
    std::vector<std::vector<CMatrix>> interferers;

    int num_bins() const { return static_cast<int>(noise.size()); }
};

struct SourcePsds {
    RVector target;                    // may be empty
    std::vector<RVector> interferers;  // [interferer](bin)
    RVector self_noise;                // (bin)
};

inline CpsdSet oracle_cpsd(const AtfSet& atfs, const SourcePsds& psds) {
    const int bins = atfs.num_bins();
    const int m = atfs.num_mics();
    if (static_cast<int>(psds.interferers.size()) != atfs.num_interferers())
        throw InputError("oracle_cpsd: interferer PSD count mismatch");
    if (psds.self_noise.size() != bins) throw InputError("oracle_cpsd: self-noise bin count mismatch");
    for (const RVector& p : psds.interferers)
        if (p.size() != bins) throw InputError("oracle_cpsd: interferer PSD bin count mismatch");
    const bool with_target = psds.target.size() > 0;
    if (with_target && psds.target.size() != bins)
        throw InputError("oracle_cpsd: target PSD bin count mismatch");

    CpsdSet out;
    out.interferers.resize(atfs.num_interferers());
    for (int k = 0; k < bins; ++k) {
        CMatrix pn = psds.self_noise(k) * CMatrix::Identity(m, m);
        for (int i = 0; i < atfs.num_interferers(); ++i) {
            const CVector& b = atfs.interferers[i][k];
            CMatrix pi = psds.interferers[i](k) * (b * b.adjoint());
            pn += pi;
            out.interferers[i].push_back(std::move(pi));
        }
        out.noise.push_back(std::move(pn));
        if (with_target) {
            const CVector& a = atfs.target[k];
            out.target.push_back(psds.target(k) * (a * a.adjoint()));
        }
    }
    return out;
}

struct CpsdEstimate {
    CpsdSet cpsd;
    bool too_few_frames = false;  // fewer than 2M frames per bin
};

// Sample-average estimate from noise-only STFT frames.
inline CpsdEstimate estimate_cpsd(const stft::StftFrames& noise_frames) {
    if (noise_frames.num_frames == 0 || noise_frames.bins.empty())
        throw InputError("estimate_cpsd: no frames");
    CpsdEstimate est;
    est.too_few_frames = noise_frames.num_frames < 2 * noise_frames.num_channels;
    for (const CMatrix& y : noise_frames.bins) {
        CMatrix p = (y * y.adjoint()) / static_cast<double>(y.cols());
        est.cpsd.noise.push_back(0.5 * (p + p.adjoint()));
    }
    return est;
}

// Real FIR whose DFT at the STFT bin grid equals atf(k) * exp(-i 2 pi k delay / N).
inline RVector atf_fir(const std::vector<cplx>& half_spectrum, int fft_size, int delay) {
    std::vector<cplx> spec(half_spectrum.size());
    for (std::size_t k = 0; k < spec.size(); ++k) {
        cplx v = half_spectrum[k] * std::polar(1.0, -2.0 * kPi * static_cast<double>(k) * delay / fft_size);
        spec[k] = v;
    }
    spec.front() = spec.front().real();
    spec.back() = spec.back().real();
    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<double> taps;
    fft.inv(taps, spec, fft_size);
    return Eigen::Map<RVector>(taps.data(), static_cast<Eigen::Index>(taps.size()));
}

// Linear convolution truncated to the input length.
inline RVector fft_convolve(const RVector& signal, const RVector& fir) {
    const Eigen::Index n = signal.size();
    if (n == 0) return RVector();
    Eigen::Index size = 1;
    while (size < n + fir.size() - 1) size *= 2;
    std::vector<double> a(size, 0.0), b(size, 0.0);
    std::copy(signal.data(), signal.data() + n, a.begin());
    std::copy(fir.data(), fir.data() + fir.size(), b.begin());
    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<cplx> fa, fb;
    fft.fwd(fa, a);
    fft.fwd(fb, b);
    for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
    std::vector<double> out;
    fft.inv(out, fa, size);
    return Eigen::Map<RVector>(out.data(), n);
}

struct MixResult {
    RMatrix y;                         // mics x samples
    RMatrix x;                         // target image
    std::vector<RMatrix> interferers;  // interferer images
    RMatrix v;                         // self noise
    std::vector<RVector> dry;          // scaled source signals, target first
    std::vector<double> interferer_scale;
    double self_noise_variance = 0.0;
    int delay_samples = 0;

    RMatrix noise() const {
        RMatrix n = v;
        for (const RMatrix& ni : interferers) n += ni;
        return n;
    }
};

inline double reference_power(const RMatrix& image, const MicArrayConfig& mics) {
    const double pl = image.row(mics.left_ref()).squaredNorm();
    const double pr = image.row(mics.right_ref()).squaredNorm();
    return 0.5 * (pl + pr) / static_cast<double>(image.cols());
}

// Renders every source through its ATF. Interferers are scaled to the target
// power at the mean of the reference microphones (then offset by gain_db);
// white Gaussian self noise is added at self_noise_snr_db below the target
// (an infinite SNR disables it). source_signals follow scene.sources.
inline MixResult mix(const Scene& scene, const AtfSet& atfs,
                     const std::vector<std::vector<double>>& source_signals, double duration_s,
                     std::uint64_t seed) {
    scene.validate();
    atfs.validate();
    if (source_signals.size() != scene.sources.size())
        throw InputError("mix: one signal is required per source");
    const Eigen::Index n = static_cast<Eigen::Index>(std::llround(duration_s * scene.sample_rate));
    if (n <= 0) throw InputError("mix: duration must be positive");
    for (std::size_t s = 0; s < source_signals.size(); ++s)
        if (static_cast<Eigen::Index>(source_signals[s].size()) < n) {
            std::ostringstream os;
            os << "mix: signal for source " << s << " has " << source_signals[s].size()
               << " samples, " << n << " required";
            throw InputError(os.str());
        }
    const int m = atfs.num_mics();
    if (m != scene.mic_array.num_mics()) throw InputError("mix: ATF microphone count mismatch");
    const int delay = scene.fft_size / 8;

    auto render = [&](const std::vector<double>& sig, int source_id, double scale, RVector& dry) {
        dry = scale * Eigen::Map<const RVector>(sig.data(), n);
        RMatrix img(m, n);
        for (int j = 0; j < m; ++j) {
            std::vector<cplx> half(atfs.num_bins());
            for (int k = 0; k < atfs.num_bins(); ++k) half[k] = atfs.source(source_id, k)(j);
            img.row(j) = fft_convolve(dry, atf_fir(half, scene.fft_size, delay)).transpose();
        }
        return img;
    };

    MixResult out;
    out.delay_samples = delay;
    const int t = scene.target_index();
    const std::vector<int> interf = scene.interferer_indices();
    out.dry.resize(1 + interf.size());

    // The target component is rendered at unit gain and scaled afterwards so
    // gains act exactly linearly on each component.
    RVector unit;
    RMatrix x0 = render(source_signals[t], 0, 1.0, unit);
    const double gt = std::pow(10.0, scene.sources[t].gain_db / 20.0);
    out.x = gt * x0;
    out.dry[0] = gt * unit;
    const double px = reference_power(out.x, scene.mic_array);
    if (!(px > 0.0)) throw InputError("mix: target signal has zero power");

    for (std::size_t i = 0; i < interf.size(); ++i) {
        RVector d;
        RMatrix img = render(source_signals[interf[i]], static_cast<int>(i) + 1, 1.0, d);
        const double pi = reference_power(img, scene.mic_array);
        if (!(pi > 0.0)) throw InputError("mix: interferer signal has zero power");
        const double scale = std::sqrt(px / pi) * std::pow(10.0, scene.sources[interf[i]].gain_db / 20.0);
        out.interferer_scale.push_back(scale);
        out.interferers.push_back(scale * img);
        out.dry[i + 1] = scale * d;
    }

    out.v = RMatrix::Zero(m, n);
    if (std::isfinite(scene.self_noise_snr_db)) {
        out.self_noise_variance = px / from_db10(scene.self_noise_snr_db);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, std::sqrt(out.self_noise_variance));
        for (Eigen::Index s = 0; s < n; ++s)
            for (int j = 0; j < m; ++j) out.v(j, s) = gauss(rng);
    }

    out.y = out.x;
    for (const RMatrix& ni : out.interferers) out.y += ni;
    out.y += out.v;
    return out;
}

// Per-bin source powers measured from the scaled dry signals; self-noise power
// follows from the window energy.
inline SourcePsds psds_from_mix(const stft::StftConfig& cfg, const MixResult& mixed) {
    auto bin_power = [&](const RVector& sig) {
        RMatrix row = sig.transpose();
        stft::StftFrames f = stft::analyze(cfg, row);
        RVector p(f.num_bins());
        for (int k = 0; k < f.num_bins(); ++k) p(k) = f.bins[k].row(0).squaredNorm() / f.num_frames;
        return p;
    };
    SourcePsds psds;
    psds.target = bin_power(mixed.dry.at(0));
    for (std::size_t i = 1; i < mixed.dry.size(); ++i) psds.interferers.push_back(bin_power(mixed.dry[i]));
    const double window_energy = stft::sqrt_hann(cfg.frame_len).squaredNorm();
    psds.self_noise = RVector::Constant(cfg.num_bins(), mixed.self_noise_variance * window_energy);
    return psds;
}

}  // namespace ildbf::scene
