// io.hpp
// 16-bit PCM WAV files, synthetic source signals, JSON scene configs and the
// ATF / PSD CSV formats.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ildbf/common.hpp"
#include "ildbf/scene.hpp"

namespace ildbf::io {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// WAV

inline constexpr double kPcmScale = 32768.0;

inline std::int16_t quantize(double x) {
    const long v = std::lround(x * kPcmScale);
    return static_cast<std::int16_t>(std::clamp<long>(v, -32768, 32767));
}

namespace detail {
inline void put_u32(std::ostream& o, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) o.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::ostream& o, std::uint16_t v) {
    o.put(static_cast<char>(v & 0xff));
    o.put(static_cast<char>((v >> 8) & 0xff));
}
inline std::uint32_t get_u32(const unsigned char* p) {
    return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t get_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
}  // namespace detail

// channels x samples, full scale at +-1. Returns the number of clipped samples.
inline long write_wav(const fs::path& path, const RMatrix& data, int sample_rate) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    const auto channels = static_cast<std::uint16_t>(data.rows());
    const auto frames = static_cast<std::uint32_t>(data.cols());
    const std::uint32_t bytes = frames * channels * 2u;
    out.write("RIFF", 4);
    detail::put_u32(out, 36u + bytes);
    out.write("WAVEfmt ", 8);
    detail::put_u32(out, 16);
    detail::put_u16(out, 1);
    detail::put_u16(out, channels);
    detail::put_u32(out, static_cast<std::uint32_t>(sample_rate));
    detail::put_u32(out, static_cast<std::uint32_t>(sample_rate) * channels * 2u);
    detail::put_u16(out, static_cast<std::uint16_t>(channels * 2));
    detail::put_u16(out, 16);
    out.write("data", 4);
    detail::put_u32(out, bytes);
    long clipped = 0;
    for (std::uint32_t n = 0; n < frames; ++n)
        for (std::uint16_t c = 0; c < channels; ++c) {
            const double x = data(c, n);
            if (std::abs(x * kPcmScale) > 32767.5) ++clipped;
            detail::put_u16(out, static_cast<std::uint16_t>(quantize(x)));
        }
    if (!out) throw IoError("failed writing " + path.string());
    return clipped;
}

struct Wav {
    int sample_rate = 0;
    RMatrix data;  // channels x samples
};

inline Wav read_wav(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 12 || std::string(buf.begin(), buf.begin() + 4) != "RIFF" ||
        std::string(buf.begin() + 8, buf.begin() + 12) != "WAVE")
        throw IoError(path.string() + ": not a RIFF/WAVE file");
    Wav w;
    int channels = 0, bits = 0, format = 0;
    std::size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const std::string id(buf.begin() + pos, buf.begin() + pos + 4);
        const std::uint32_t size = detail::get_u32(&buf[pos + 4]);
        const std::size_t body = pos + 8;
        if (body + size > buf.size()) throw IoError(path.string() + ": truncated chunk '" + id + "'");
        if (id == "fmt ") {
            format = detail::get_u16(&buf[body]);
            channels = detail::get_u16(&buf[body + 2]);
            w.sample_rate = static_cast<int>(detail::get_u32(&buf[body + 4]));
            bits = detail::get_u16(&buf[body + 14]);
        } else if (id == "data") {
            if (format != 1 || bits != 16 || channels <= 0)
                throw IoError(path.string() + ": only 16-bit PCM WAV is supported");
            const std::size_t frames = size / (2u * static_cast<std::size_t>(channels));
            w.data.resize(channels, static_cast<Eigen::Index>(frames));
            for (std::size_t n = 0; n < frames; ++n)
                for (int c = 0; c < channels; ++c) {
                    const auto v = static_cast<std::int16_t>(detail::get_u16(&buf[body + 2 * (n * channels + c)]));
                    w.data(c, static_cast<Eigen::Index>(n)) = v / kPcmScale;
                }
            return w;
        }
        pos = body + size + (size & 1u);
    }
    throw IoError(path.string() + ": no data chunk");
}

// ---------------------------------------------------------------------------
// Source signals

// synth:<kind>[:key=value,...] with kinds
//   tone      freq (Hz)
//   noise     seed
//   bursts    on, off (s), seed: gated white noise
//   harmonic  f0 (Hz), harmonics, rate (Hz): amplitude-modulated harmonic complex
// Every synthetic signal is scaled to an RMS of 0.05.
inline std::vector<double> synth_signal(const std::string& spec, double sample_rate, Eigen::Index n,
                                        std::uint64_t default_seed) {
    if (spec.rfind("synth:", 0) != 0) throw InputError("not a synth signal: " + spec);
    std::string rest = spec.substr(6);
    std::string kind = rest.substr(0, rest.find(':'));
    std::map<std::string, double> kv;
    if (rest.find(':') != std::string::npos) {
        std::stringstream ss(rest.substr(rest.find(':') + 1));
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto eq = item.find('=');
            if (eq == std::string::npos) throw InputError("synth parameter without value: " + item);
            try {
                kv[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
            } catch (const std::exception&) {
                throw InputError("invalid synth parameter: " + item);
            }
        }
    }
    auto get = [&](const std::string& k, double dflt) { return kv.count(k) ? kv[k] : dflt; };
    const auto seed = static_cast<std::uint64_t>(get("seed", static_cast<double>(default_seed)));
    std::vector<double> x(static_cast<std::size_t>(n), 0.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    if (kind == "tone") {
        const double f = get("freq", 440.0);
        for (Eigen::Index i = 0; i < n; ++i) x[i] = std::sin(2.0 * kPi * f * i / sample_rate);
    } else if (kind == "noise") {
        for (double& v : x) v = gauss(rng);
    } else if (kind == "bursts") {
        const auto on = static_cast<Eigen::Index>(get("on", 0.3) * sample_rate);
        const auto off = static_cast<Eigen::Index>(get("off", 0.2) * sample_rate);
        if (on <= 0 || off < 0) throw InputError("synth bursts: on must be positive and off non-negative");
        for (Eigen::Index i = 0; i < n; ++i) {
            const double g = gauss(rng);
            x[i] = (i % (on + off)) < on ? g : 0.0;
        }
    } else if (kind == "harmonic") {
        const double f0 = get("f0", 140.0);
        const int harmonics = static_cast<int>(get("harmonics", 20));
        const double rate = get("rate", 4.0);
        std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
        std::vector<double> ph(static_cast<std::size_t>(harmonics));
        for (double& p : ph) p = phase(rng);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double t = i / sample_rate;
            double v = 0.0;
            for (int h = 1; h <= harmonics && h * f0 < sample_rate / 2; ++h)
                v += std::sin(2.0 * kPi * h * f0 * t + ph[h - 1]) / h;
            x[i] = v * (0.6 + 0.4 * std::sin(2.0 * kPi * rate * t));
        }
    } else {
        throw InputError("unknown synth kind '" + kind + "'");
    }
    double rms = 0.0;
    for (double v : x) rms += v * v;
    rms = std::sqrt(rms / std::max<Eigen::Index>(n, 1));
    if (rms > 0.0)
        for (double& v : x) v *= 0.05 / rms;
    return x;
}

// A synth spec or a mono WAV path (relative to base_dir).
inline std::vector<double> load_signal(const std::string& spec, double sample_rate, Eigen::Index n,
                                       const fs::path& base_dir, std::uint64_t default_seed) {
    if (spec.rfind("synth:", 0) == 0) return synth_signal(spec, sample_rate, n, default_seed);
    const fs::path p = fs::path(spec).is_absolute() ? fs::path(spec) : base_dir / spec;
    if (!fs::exists(p)) throw IoError("missing signal file: " + p.string());
    const Wav w = read_wav(p);
    if (w.data.rows() != 1) throw InputError(p.string() + ": source signals must be mono");
    if (w.sample_rate != static_cast<int>(sample_rate)) throw InputError(p.string() + ": sample rate mismatch");
    if (w.data.cols() < n) {
        std::ostringstream os;
        os << p.string() << ": " << w.data.cols() << " samples, " << n << " required";
        throw InputError(os.str());
    }
    return std::vector<double>(w.data.data(), w.data.data() + n);
}

// ---------------------------------------------------------------------------
// Scene configuration

struct SimulationConfig {
    scene::Scene scene;
    double duration_s = 5.0;
};

inline scene::SourceRole role_from_string(const std::string& s) {
    if (s == "target") return scene::SourceRole::target;
    if (s == "interferer") return scene::SourceRole::interferer;
    throw InputError("unknown source role '" + s + "'");
}

inline SimulationConfig config_from_json(const json& j) {
    SimulationConfig cfg;
    scene::Scene& sc = cfg.scene;
    try {
        cfg.duration_s = j.value("duration_s", cfg.duration_s);
        sc.sample_rate = j.value("sample_rate", sc.sample_rate);
        sc.fft_size = j.value("fft_size", sc.fft_size);
        sc.frame_len = j.value("frame_len", sc.frame_len);
        sc.cutoff_hz = j.value("cutoff_hz", sc.cutoff_hz);
        if (j.contains("self_noise_snr_db")) {
            const json& v = j.at("self_noise_snr_db");
            sc.self_noise_snr_db = v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>();
        }
        if (j.contains("mic_array")) {
            const json& m = j.at("mic_array");
            const double radius = m.value("head_radius", 0.0875);
            if (m.contains("azimuths_deg")) {
                sc.mic_array.azimuths_deg = m.at("azimuths_deg").get<std::vector<double>>();
            } else {
                sc.mic_array = scene::MicArrayConfig::behind_the_ear(m.value("num_mics", 4), m.value("ear_azimuth_deg", 100.0),
                                                                     m.value("spread_deg", 5.0));
            }
            sc.mic_array.head_radius = radius;
        }
        if (j.contains("sphere")) {
            const json& s = j.at("sphere");
            sc.sphere.speed_of_sound = s.value("speed_of_sound", sc.sphere.speed_of_sound);
            sc.sphere.ear_azimuth_deg = s.value("ear_azimuth_deg", sc.sphere.ear_azimuth_deg);
            sc.sphere.series_tolerance = s.value("series_tolerance", sc.sphere.series_tolerance);
            sc.sphere.max_terms = s.value("max_terms", sc.sphere.max_terms);
        }
        for (const json& s : j.at("sources")) {
            scene::SourceSpec src;
            src.role = role_from_string(s.at("role").get<std::string>());
            src.azimuth_deg = s.at("azimuth_deg").get<double>();
            src.distance_m = s.value("distance_m", 1.0);
            src.signal = s.value("signal", std::string("synth:noise"));
            src.gain_db = s.value("gain_db", 0.0);
            sc.sources.push_back(src);
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("scene config: ") + e.what());
    }
    sc.validate();
    if (!(cfg.duration_s > 0.0)) throw InputError("scene config: duration must be positive");
    return cfg;
}

inline json config_to_json(const SimulationConfig& cfg) {
    const scene::Scene& sc = cfg.scene;
    json j;
    j["duration_s"] = cfg.duration_s;
    j["sample_rate"] = sc.sample_rate;
    j["fft_size"] = sc.fft_size;
    j["frame_len"] = sc.frame_len;
    j["cutoff_hz"] = sc.cutoff_hz;
    j["self_noise_snr_db"] = std::isfinite(sc.self_noise_snr_db) ? json(sc.self_noise_snr_db) : json(nullptr);
    j["mic_array"] = {{"azimuths_deg", sc.mic_array.azimuths_deg}, {"head_radius", sc.mic_array.head_radius}};
    j["sphere"] = {{"speed_of_sound", sc.sphere.speed_of_sound},
                   {"ear_azimuth_deg", sc.sphere.ear_azimuth_deg},
                   {"series_tolerance", sc.sphere.series_tolerance},
                   {"max_terms", sc.sphere.max_terms}};
    j["sources"] = json::array();
    for (const scene::SourceSpec& s : sc.sources)
        j["sources"].push_back({{"role", s.role == scene::SourceRole::target ? "target" : "interferer"},
                                {"azimuth_deg", s.azimuth_deg},
                                {"distance_m", s.distance_m},
                                {"signal", s.signal},
                                {"gain_db", s.gain_db}});
    return j;
}

inline json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// ATF and PSD tables

inline void write_atf_csv(std::ostream& out, const scene::AtfSet& atfs) {
    out << "bin,f_hz,source_id,mic_index,re,im\n" << std::setprecision(17);
    for (int k = 0; k < atfs.num_bins(); ++k)
        for (int s = 0; s <= atfs.num_interferers(); ++s)
            for (int j = 0; j < atfs.num_mics(); ++j) {
                const cplx v = atfs.source(s, k)(j);
                out << k << ',' << atfs.freqs_hz[k] << ',' << s << ',' << j << ',' << v.real() << ',' << v.imag()
                    << '\n';
            }
}

namespace detail {
inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    return cells;
}
}  // namespace detail

// source_id 0 is the target.
inline scene::AtfSet read_atf_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("bin,f_hz,source_id,mic_index,re,im", 0) != 0)
        throw InputError("ATF CSV: missing header");
    struct Row {
        int k, s, j;
        double f;
        cplx v;
    };
    std::vector<Row> rows;
    int kmax = -1, smax = -1, jmax = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c = detail::split_csv(line);
        if (c.size() != 6) throw InputError("ATF CSV: malformed row '" + line + "'");
        Row r{std::stoi(c[0]), std::stoi(c[2]), std::stoi(c[3]), std::stod(c[1]), cplx(std::stod(c[4]), std::stod(c[5]))};
        kmax = std::max(kmax, r.k);
        smax = std::max(smax, r.s);
        jmax = std::max(jmax, r.j);
        rows.push_back(r);
    }
    if (rows.size() != static_cast<std::size_t>((kmax + 1) * (smax + 1) * (jmax + 1)))
        throw InputError("ATF CSV: incomplete grid");
    scene::AtfSet atfs;
    atfs.freqs_hz.assign(kmax + 1, 0.0);
    atfs.target.assign(kmax + 1, CVector::Zero(jmax + 1));
    atfs.interferers.assign(smax, std::vector<CVector>(kmax + 1, CVector::Zero(jmax + 1)));
    for (const Row& r : rows) {
        atfs.freqs_hz[r.k] = r.f;
        atfs.source(r.s, r.k)(r.j) = r.v;
    }
    atfs.validate();
    return atfs;
}

inline void write_psd_csv(std::ostream& out, const scene::SourcePsds& p, const std::vector<double>& freqs) {
    out << "bin,f_hz,source,power_linear\n" << std::setprecision(17);
    for (std::size_t k = 0; k < freqs.size(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        out << k << ',' << freqs[k] << ",target," << p.target(kk) << '\n';
        for (std::size_t i = 0; i < p.interferers.size(); ++i)
            out << k << ',' << freqs[k] << ",interferer_" << i + 1 << ',' << p.interferers[i](kk) << '\n';
        out << k << ',' << freqs[k] << ",self_noise," << p.self_noise(kk) << '\n';
    }
}

inline scene::SourcePsds read_psd_csv(std::istream& in, int num_bins, int num_interferers) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("bin,f_hz,source,power_linear", 0) != 0)
        throw InputError("PSD CSV: missing header");
    scene::SourcePsds p;
    p.target = RVector::Constant(num_bins, std::numeric_limits<double>::quiet_NaN());
    p.self_noise = p.target;
    p.interferers.assign(num_interferers, p.target);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c = detail::split_csv(line);
        if (c.size() != 4) throw InputError("PSD CSV: malformed row '" + line + "'");
        const int k = std::stoi(c[0]);
        if (k < 0 || k >= num_bins) throw InputError("PSD CSV: bin out of range");
        const double v = std::stod(c[3]);
        if (c[2] == "target") p.target(k) = v;
        else if (c[2] == "self_noise") p.self_noise(k) = v;
        else if (c[2].rfind("interferer_", 0) == 0) {
            const int i = std::stoi(c[2].substr(11)) - 1;
            if (i < 0 || i >= num_interferers) throw InputError("PSD CSV: interferer index out of range");
            p.interferers[i](k) = v;
        } else {
            throw InputError("PSD CSV: unknown source '" + c[2] + "'");
        }
    }
    auto complete = [](const RVector& v) { return v.allFinite(); };
    if (!complete(p.target) || !complete(p.self_noise) ||
        !std::all_of(p.interferers.begin(), p.interferers.end(), complete))
        throw InputError("PSD CSV: incomplete table");
    return p;
}

}  // namespace ildbf::io
