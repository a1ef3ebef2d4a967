// cli.hpp
// Pipeline commands behind the ildbf executable: dvf-table, simulate,
// beamform and evaluate. Each command reads and writes files in a run
// directory and returns the list of artifacts it could not produce.

#pragma once

#include <cstdint>
#include <iomanip>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ildbf/beamform.hpp"
#include "ildbf/common.hpp"
#include "ildbf/io.hpp"
#include "ildbf/metrics.hpp"
#include "ildbf/scene.hpp"
#include "ildbf/sphere.hpp"
#include "ildbf/stft.hpp"

namespace ildbf::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kBeamformManifest = "beamform.json";

struct CommandResult {
    std::vector<std::string> written;
    std::vector<std::string> missing;  // "artifact: reason"
    bool ok() const { return missing.empty(); }
};

inline std::string to_csv(const std::function<void(std::ostream&)>& fn) {
    std::ostringstream os;
    fn(os);
    return os.str();
}

// ---------------------------------------------------------------------------
// dvf-table

struct DvfTableArgs {
    std::optional<fs::path> config;
    std::vector<double> distances{0.2, 0.4, 0.6, 0.8, 1.0};
    double fmax_hz = 800.0;
    double azimuth_step_deg = 5.0;
    double far_distance_m = 1.0;
    fs::path out = "dvf_table.csv";
};

// Frequencies are the STFT bin centres of the scene (default 16 kHz / 256)
// from the first bin up to fmax.
inline sphere::DvfTable build_dvf_table(const DvfTableArgs& args) {
    scene::Scene sc;
    if (args.config) sc = io::config_from_json(io::read_json(*args.config)).scene;
    if (args.fmax_hz > sphere::kDvfTableMaxHz) {
        std::ostringstream os;
        os << "--fmax " << args.fmax_hz << " exceeds the " << sphere::kDvfTableMaxHz << " Hz table cap";
        throw RangeError(os.str());
    }
    if (!(args.azimuth_step_deg > 0.0) || args.azimuth_step_deg > 180.0)
        throw RangeError("azimuth step must lie in (0, 180] degrees");
    const stft::StftConfig cfg = sc.stft_config();
    std::vector<double> freqs;
    for (int k = 1; k < cfg.num_bins() && cfg.bin_frequency(k) <= args.fmax_hz; ++k) freqs.push_back(cfg.bin_frequency(k));
    if (freqs.empty()) throw RangeError("--fmax is below the first frequency bin");
    return sphere::dvf_ild_table(sc.sphere_params(), freqs, sphere::linear_grid(-180.0, 180.0, args.azimuth_step_deg),
                                 args.distances, args.far_distance_m);
}

inline CommandResult cmd_dvf_table(const DvfTableArgs& args) {
    const sphere::DvfTable t = build_dvf_table(args);
    if (args.out.has_parent_path()) fs::create_directories(args.out.parent_path());
    io::write_text(args.out, to_csv([&](std::ostream& o) { t.write_csv(o); }));
    return {{args.out.string()}, {}};
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
    fs::path config;
    fs::path out;
    std::uint64_t seed = 1;
    std::optional<double> duration_s;
};

struct Simulation {
    io::SimulationConfig config;
    scene::AtfSet atfs;
    scene::MixResult mix;
    scene::SourcePsds psds;
};

inline Simulation simulate(const io::SimulationConfig& cfg, const fs::path& base_dir, std::uint64_t seed) {
    Simulation sim;
    sim.config = cfg;
    const scene::Scene& sc = cfg.scene;
    sim.atfs = scene::build_atfs(sc);
    const auto n = static_cast<Eigen::Index>(std::llround(cfg.duration_s * sc.sample_rate));
    std::vector<std::vector<double>> signals;
    std::vector<std::string> missing;
    for (std::size_t s = 0; s < sc.sources.size(); ++s) {
        try {
            signals.push_back(io::load_signal(sc.sources[s].signal, sc.sample_rate, n, base_dir, seed * 1000 + s + 1));
        } catch (const IoError& e) {
            missing.push_back(e.what());
        }
    }
    if (!missing.empty()) {
        std::string msg = "missing signal files:";
        for (const std::string& m : missing) msg += "\n  " + m;
        throw IoError(msg);
    }
    sim.mix = scene::mix(sc, sim.atfs, signals, cfg.duration_s, seed);
    sim.psds = scene::psds_from_mix(sc.stft_config(), sim.mix);
    return sim;
}

inline scene::CpsdSet oracle_cpsd(const Simulation& sim) { return scene::oracle_cpsd(sim.atfs, sim.psds); }

inline CommandResult cmd_simulate(const SimulateArgs& args) {
    io::SimulationConfig cfg = io::config_from_json(io::read_json(args.config));
    if (args.duration_s) cfg.duration_s = *args.duration_s;
    if (!(cfg.duration_s > 0.0)) throw InputError("duration must be positive");
    const Simulation sim = simulate(cfg, args.config.parent_path(), args.seed);
    fs::create_directories(args.out);
    CommandResult res;

    const double peak = sim.mix.y.cwiseAbs().maxCoeff();
    const double gain = peak > 0.0 ? 0.5 / peak : 1.0;
    const int fsr = static_cast<int>(sim.config.scene.sample_rate);
    json files = json::object();
    auto wav = [&](const std::string& name, const RMatrix& data) {
        io::write_wav(args.out / name, gain * data, fsr);
        res.written.push_back(name);
    };
    files["mixture"] = json::array();
    for (int j = 0; j < sim.mix.y.rows(); ++j) {
        const std::string name = "mixture_mic" + std::to_string(j) + ".wav";
        wav(name, sim.mix.y.row(j));
        files["mixture"].push_back(name);
    }
    wav("target.wav", sim.mix.x);
    files["target"] = "target.wav";
    files["interferers"] = json::array();
    for (std::size_t i = 0; i < sim.mix.interferers.size(); ++i) {
        const std::string name = "interferer_" + std::to_string(i + 1) + ".wav";
        wav(name, sim.mix.interferers[i]);
        files["interferers"].push_back(name);
    }
    wav("self_noise.wav", sim.mix.v);
    files["self_noise"] = "self_noise.wav";

    io::write_text(args.out / "atfs.csv", to_csv([&](std::ostream& o) { io::write_atf_csv(o, sim.atfs); }));
    io::write_text(args.out / "psds.csv",
                   to_csv([&](std::ostream& o) { io::write_psd_csv(o, sim.psds, sim.atfs.freqs_hz); }));
    res.written.push_back("atfs.csv");
    res.written.push_back("psds.csv");
    files["atfs"] = "atfs.csv";
    files["psds"] = "psds.csv";

    json m;
    m["tool_version"] = kToolVersion;
    m["config"] = fs::absolute(args.config).lexically_normal().string();
    m["seed"] = args.seed;
    m["wav_gain"] = gain;
    m["scene"] = io::config_to_json(sim.config);
    m["files"] = files;
    io::write_text(args.out / kManifest, m.dump(2) + "\n");
    res.written.push_back(kManifest);
    return res;
}

// ---------------------------------------------------------------------------
// Run directory access

struct Run {
    fs::path dir;
    json manifest;
    io::SimulationConfig config;
    scene::AtfSet atfs;
    scene::SourcePsds psds;
    double wav_gain = 1.0;

    RMatrix read_multichannel(const std::string& name) const {
        return io::read_wav(dir / name).data / wav_gain;
    }
    RMatrix mixture() const {
        RMatrix y;
        const json& names = manifest.at("files").at("mixture");
        for (std::size_t j = 0; j < names.size(); ++j) {
            const RMatrix ch = read_multichannel(names[j].get<std::string>());
            if (j == 0) y.resize(static_cast<Eigen::Index>(names.size()), ch.cols());
            y.row(static_cast<Eigen::Index>(j)) = ch.row(0);
        }
        return y;
    }
    RMatrix noise() const {
        RMatrix n = read_multichannel(manifest.at("files").at("self_noise").get<std::string>());
        for (const json& f : manifest.at("files").at("interferers")) n += read_multichannel(f.get<std::string>());
        return n;
    }
};

inline Run open_run(const fs::path& dir) {
    Run r;
    r.dir = dir;
    if (!fs::exists(dir / kManifest)) throw IoError("missing " + (dir / kManifest).string() + " (run simulate first)");
    r.manifest = io::read_json(dir / kManifest);
    r.config = io::config_from_json(r.manifest.at("scene"));
    r.wav_gain = r.manifest.at("wav_gain").get<double>();
    std::ifstream a(dir / "atfs.csv");
    if (!a) throw IoError("missing " + (dir / "atfs.csv").string());
    r.atfs = io::read_atf_csv(a);
    std::ifstream p(dir / "psds.csv");
    if (!p) throw IoError("missing " + (dir / "psds.csv").string());
    r.psds = io::read_psd_csv(p, r.atfs.num_bins(), r.atfs.num_interferers());
    return r;
}

// ---------------------------------------------------------------------------
// beamform

struct BeamformArgs {
    fs::path run_dir;
    std::vector<std::string> methods{"bmvdr", "jblcmv", "ild_0.2", "ild_0.6", "ild_1.0"};
    std::optional<double> cutoff_hz;
};

inline std::string filter_file(const std::string& method) { return "filter_" + method + ".csv"; }
inline std::string diagnostics_file(const std::string& method) { return "diagnostics_" + method + ".csv"; }
inline std::string output_file(const std::string& method) { return "output_" + method + ".wav"; }

inline CommandResult cmd_beamform(const BeamformArgs& args) {
    Run run = open_run(args.run_dir);
    scene::Scene& sc = run.config.scene;
    if (args.cutoff_hz) {
        if (!(*args.cutoff_hz > 0.0)) throw RangeError("--cutoff-hz must be positive");
        sc.cutoff_hz = *args.cutoff_hz;
    }
    const scene::CpsdSet cpsds = scene::oracle_cpsd(run.atfs, run.psds);
    const stft::StftConfig cfg = sc.stft_config();
    const stft::StftFrames frames = stft::analyze(cfg, run.mixture());
    CommandResult res;
    json done = json::array();
    for (const std::string& name : args.methods) {
        try {
            const beamform::MethodSpec spec = beamform::MethodSpec::parse(name);
            const beamform::StackedFilter f = beamform::design(spec, name, sc, run.atfs, cpsds);
            const RMatrix out = stft::synthesize(cfg, beamform::apply(f, frames));
            io::write_wav(run.dir / output_file(name), run.wav_gain * out, static_cast<int>(sc.sample_rate));
            io::write_text(run.dir / filter_file(name),
                           to_csv([&](std::ostream& o) { beamform::write_filter_csv(o, f); }));
            res.written.push_back(output_file(name));
            res.written.push_back(filter_file(name));
            json entry = {{"method", name}, {"filter", filter_file(name)}, {"output", output_file(name)}};
            if (f.has_diagnostics()) {
                io::write_text(run.dir / diagnostics_file(name),
                               to_csv([&](std::ostream& o) { beamform::write_diagnostics_csv(o, f); }));
                res.written.push_back(diagnostics_file(name));
                entry["diagnostics"] = diagnostics_file(name);
            }
            json status = json::object();
            for (int k = 0; k < f.num_bins(); ++k) status[beamform::to_string(f.status[k])] = status.value(beamform::to_string(f.status[k]), 0) + 1;
            entry["bin_status"] = status;
            done.push_back(entry);
        } catch (const Error& e) {
            res.missing.push_back(name + ": " + e.what());
        }
    }
    json bm = {{"tool_version", kToolVersion}, {"cutoff_hz", sc.cutoff_hz}, {"methods", done}};
    io::write_text(run.dir / kBeamformManifest, bm.dump(2) + "\n");
    res.written.push_back(kBeamformManifest);
    return res;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
    fs::path run_dir;
};

inline CommandResult cmd_evaluate(const EvaluateArgs& args) {
    Run run = open_run(args.run_dir);
    if (!fs::exists(run.dir / kBeamformManifest))
        throw IoError("missing " + (run.dir / kBeamformManifest).string() + " (run beamform first)");
    const json bm = io::read_json(run.dir / kBeamformManifest);
    scene::Scene& sc = run.config.scene;
    sc.cutoff_hz = bm.at("cutoff_hz").get<double>();
    const sdp::RefMics refs = beamform::refs_of(sc.mic_array);
    const scene::CpsdSet cpsds = scene::oracle_cpsd(run.atfs, run.psds);
    const stft::StftFrames noise = stft::analyze(sc.stft_config(), run.noise());

    std::ostringstream report, per_bin;
    metrics::write_report_header(report);
    per_bin << "method,bin,f_hz,output_noise_db\n" << std::setprecision(17);
    CommandResult res;
    for (const json& entry : bm.at("methods")) {
        const std::string name = entry.at("method").get<std::string>();
        const fs::path fpath = run.dir / entry.at("filter").get<std::string>();
        std::ifstream in(fpath);
        if (!in) {
            res.missing.push_back(name + ": missing " + fpath.string());
            continue;
        }
        try {
            beamform::StackedFilter f = beamform::read_filter_csv(in);
            f.method = name;
            const beamform::MethodSpec spec = beamform::MethodSpec::parse(name);
            f.c = beamform::ild_targets(sc, run.atfs, spec.kind == beamform::Method::ild ? spec.distance_m : std::nullopt,
                                        nullptr);
            const metrics::CueTable cues = metrics::compute_cues(f, run.atfs, refs);
            metrics::write_report_rows(report, metrics::lower_band_summary(cues, f, sc.cutoff_hz));
            metrics::write_noise_row(report, name, "lower", metrics::output_noise_power(f, noise, refs, 1e-9, sc.cutoff_hz));
            metrics::write_noise_row(report, name, "full", metrics::output_noise_power(f, noise, refs));
            const std::vector<double> ratio = metrics::output_noise_ratio_per_bin(f, cpsds, refs);
            for (int k = 0; k < f.num_bins(); ++k)
                per_bin << name << ',' << k << ',' << f.freqs_hz[k] << ',' << metrics::to_db_floor(ratio[k]) << '\n';
        } catch (const Error& e) {
            res.missing.push_back(name + ": " + e.what());
        }
    }
    io::write_text(run.dir / "metrics.csv", report.str());
    io::write_text(run.dir / "noise_per_bin.csv", per_bin.str());
    res.written = {"metrics.csv", "noise_per_bin.csv"};
    return res;
}

}  // namespace ildbf::cli
