// ildbf command-line tool: dvf-table, simulate, beamform, evaluate.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ildbf/cli.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<double> parse_doubles(const std::string& s) {
    std::vector<double> out;
    for (const std::string& item : split_list(s)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ildbf::RangeError("invalid number '" + item + "'");
        }
    }
    return out;
}

int report(const ildbf::cli::CommandResult& r) {
    for (const std::string& w : r.written) std::cout << "wrote " << w << '\n';
    if (r.ok()) return 0;
    std::cerr << "missing artifacts:\n";
    for (const std::string& m : r.missing) std::cerr << "  " << m << '\n';
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    namespace cli = ildbf::cli;
    CLI::App app{"Binaural ILD-enhancing beamformer pipeline"};
    app.require_subcommand(1);
    app.set_version_flag("--version", cli::kToolVersion);

    cli::DvfTableArgs dvf;
    std::string dvf_config, distances = "0.2,0.4,0.6,0.8,1.0";
    auto* c_dvf = app.add_subcommand("dvf-table", "Tabulate the distance-variation ILD scaling factor");
    c_dvf->add_option("--config", dvf_config, "Scene config supplying sample rate, FFT size and head model");
    c_dvf->add_option("--distances", distances, "Comma-separated source distances in metres");
    c_dvf->add_option("--fmax", dvf.fmax_hz, "Highest frequency in Hz (at most 800)");
    c_dvf->add_option("--azimuth-step", dvf.azimuth_step_deg, "Azimuth spacing in degrees");
    c_dvf->add_option("--far", dvf.far_distance_m, "Far-field reference distance in metres");
    c_dvf->add_option("--out", dvf.out, "Output CSV path");

    cli::SimulateArgs sim;
    double duration = 0.0;
    auto* c_sim = app.add_subcommand("simulate", "Render a scene to per-microphone WAV files");
    c_sim->add_option("--config", sim.config, "Scene config (JSON)")->required()->check(CLI::ExistingFile);
    c_sim->add_option("--out", sim.out, "Run directory")->required();
    c_sim->add_option("--seed", sim.seed, "Random seed");
    c_sim->add_option("--duration", duration, "Override the signal duration in seconds");

    cli::BeamformArgs bf;
    std::string methods = "bmvdr,jblcmv,ild_0.2,ild_0.6,ild_1.0";
    double bf_cutoff = 0.0;
    auto* c_bf = app.add_subcommand("beamform", "Design and apply binaural filters for a simulated run");
    c_bf->add_option("--out", bf.run_dir, "Run directory written by simulate")->required();
    c_bf->add_option("--methods", methods, "Comma-separated: bmvdr, jblcmv, ild_<d>, ildp2_<d>, ild_natural");
    c_bf->add_option("--cutoff-hz", bf_cutoff, "Override the band-split cut-off frequency in Hz");

    cli::EvaluateArgs ev;
    auto* c_ev = app.add_subcommand("evaluate", "Compute cue errors and output noise power");
    c_ev->add_option("--out", ev.run_dir, "Run directory written by beamform")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*c_dvf) {
            if (!dvf_config.empty()) dvf.config = dvf_config;
            dvf.distances = parse_doubles(distances);
            return report(cli::cmd_dvf_table(dvf));
        }
        if (*c_sim) {
            if (duration > 0.0) sim.duration_s = duration;
            return report(cli::cmd_simulate(sim));
        }
        if (*c_bf) {
            bf.methods = split_list(methods);
            if (bf_cutoff != 0.0) bf.cutoff_hz = bf_cutoff;
            return report(cli::cmd_beamform(bf));
        }
        if (*c_ev) return report(cli::cmd_evaluate(ev));
    } catch (const ildbf::RangeError& e) {
        std::cerr << "range error: " << e.what() << '\n';
        return 2;
    } catch (const ildbf::InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 2;
    } catch (const ildbf::GeometryError& e) {
        std::cerr << "geometry error: " << e.what() << '\n';
        return 2;
    } catch (const ildbf::IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return 3;
    } catch (const ildbf::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
