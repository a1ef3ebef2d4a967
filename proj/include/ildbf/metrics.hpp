// metrics.hpp
// Interaural transfer functions, ILD/IPD/ITD cues at the input and output of
// a stacked filter, lower-band error summaries and output noise power.

#pragma once

#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ildbf/beamform.hpp"
#include "ildbf/common.hpp"
#include "ildbf/scene.hpp"
#include "ildbf/stft.hpp"

namespace ildbf::metrics {

using sdp::RefMics;

inline constexpr double kFloorDb = -300.0;

// num / den, or nothing when the denominator vanishes.
inline std::optional<cplx> itf(cplx num, cplx den) {
    if (!(std::abs(den) > 1e-300)) return std::nullopt;
    return num / den;
}

// | |ITF_out|^2 - c |ITF_in|^2 |
inline double ild_err(cplx itf_out, cplx itf_in, double c = 1.0) {
    return std::abs(std::norm(itf_out) - c * std::norm(itf_in));
}

// |wrap(arg ITF_out - arg ITF_in)| / pi, in [0, 1].
inline double ipd_err(cplx itf_out, cplx itf_in) {
    return std::abs(wrap_pi(std::arg(itf_out) - std::arg(itf_in))) / kPi;
}

inline double to_db_floor(double v) {
    if (!(v > 0.0)) return kFloorDb;
    return std::max(kFloorDb, db10(v));
}

struct BinauralCues {
    bool defined = false;  // both ITFs exist
    cplx itf_in;
    cplx itf_out;
    double ild_in = 0.0, ild_out = 0.0;  // linear power ratios
    double ipd_in = 0.0, ipd_out = 0.0;  // radians, (-pi, pi]
    double itd_in = 0.0, itd_out = 0.0;  // seconds; 0 at DC
};

inline BinauralCues cues_for(const CVector& w_l, const CVector& w_r, const CVector& atf, RefMics refs, double f_hz) {
    BinauralCues c;
    const auto in = itf(atf(refs.left), atf(refs.right));
    const auto out = itf(w_l.dot(atf), w_r.dot(atf));
    if (!in || !out) return c;
    c.defined = true;
    c.itf_in = *in;
    c.itf_out = *out;
    c.ild_in = std::norm(*in);
    c.ild_out = std::norm(*out);
    c.ipd_in = wrap_pi(std::arg(*in));
    c.ipd_out = wrap_pi(std::arg(*out));
    if (f_hz > 0.0) {
        c.itd_in = c.ipd_in / (2.0 * kPi * f_hz);
        c.itd_out = c.ipd_out / (2.0 * kPi * f_hz);
    }
    return c;
}

// cues[source][bin]; source 0 is the target.
using CueTable = std::vector<std::vector<BinauralCues>>;

inline CueTable compute_cues(const beamform::StackedFilter& f, const scene::AtfSet& atfs, RefMics refs) {
    if (f.num_bins() != atfs.num_bins() || f.num_mics != atfs.num_mics())
        throw InputError("compute_cues: filter does not match the ATF grid");
    CueTable t(1 + atfs.num_interferers());
    for (int s = 0; s <= atfs.num_interferers(); ++s)
        for (int k = 0; k < atfs.num_bins(); ++k)
            t[s].push_back(cues_for(f.w_left(k), f.w_right(k), atfs.source(s, k), refs, atfs.freqs_hz[k]));
    return t;
}

struct SourceError {
    int source = 0;             // 0 target, i >= 1 interferer i
    double ild_err_db = kFloorDb;
    double ipd_err_db = kFloorDb;
    double ild_err_mean = 0.0;  // linear mean before dB conversion
    double ipd_err_mean = 0.0;
    int bins_included = 0;
    int bins_excluded = 0;      // lower-band bins not solved by the method
    int bins_undefined = 0;     // lower-band bins with a vanishing ITF denominator
};

struct ErrorReport {
    std::string method;
    bool empty = true;  // no lower-band bin qualified
    std::vector<SourceError> sources;
};

// Bins with 0 < f < cutoff whose status is a solved method solution. Both
// errors are converted with 10 log10 of the mean.
inline ErrorReport lower_band_summary(const CueTable& cues, const beamform::StackedFilter& f, double cutoff_hz) {
    ErrorReport rep;
    rep.method = f.method;
    for (std::size_t s = 0; s < cues.size(); ++s) {
        SourceError e;
        e.source = static_cast<int>(s);
        double ild_sum = 0.0, ipd_sum = 0.0;
        for (int k = 0; k < f.num_bins(); ++k) {
            if (!(f.freqs_hz[k] > 0.0 && f.freqs_hz[k] < cutoff_hz)) continue;
            if (!beamform::is_solved(f.status[k])) {
                ++e.bins_excluded;
                continue;
            }
            const BinauralCues& c = cues[s][static_cast<std::size_t>(k)];
            if (!c.defined) {
                ++e.bins_undefined;
                ++e.bins_excluded;
                continue;
            }
            const double ci = s == 0 ? 1.0 : f.c.at(k).at(s - 1);
            ild_sum += ild_err(c.itf_out, c.itf_in, ci);
            ipd_sum += ipd_err(c.itf_out, c.itf_in);
            ++e.bins_included;
        }
        if (e.bins_included > 0) {
            rep.empty = false;
            e.ild_err_mean = ild_sum / e.bins_included;
            e.ipd_err_mean = ipd_sum / e.bins_included;
            e.ild_err_db = to_db_floor(e.ild_err_mean);
            e.ipd_err_db = to_db_floor(e.ipd_err_mean);
        }
        rep.sources.push_back(e);
    }
    return rep;
}

// Per-bin output noise power w^H P~ w over the input power at the two
// reference microphones (linear ratio).
inline std::vector<double> output_noise_ratio_per_bin(const beamform::StackedFilter& f, const scene::CpsdSet& cpsds,
                                                      RefMics refs) {
    if (cpsds.num_bins() != f.num_bins()) throw InputError("output noise: bin count mismatch");
    std::vector<double> out;
    for (int k = 0; k < f.num_bins(); ++k) {
        const CMatrix& p = cpsds.noise[k];
        const double in = p(refs.left, refs.left).real() + p(refs.right, refs.right).real();
        out.push_back(beamform::joint_objective(p, f.w[k]) / in);
    }
    return out;
}

struct NoisePower {
    double output_db = 0.0;  // relative to the reference-microphone input
    double output_power = 0.0;
    double input_power = 0.0;
    int bins = 0;
};

// Mean |w_L^H n|^2 + |w_R^H n|^2 over noise-only frames and the bins in
// [f_lo, f_hi), relative to |n_L|^2 + |n_R|^2.
inline NoisePower output_noise_power(const beamform::StackedFilter& f, const stft::StftFrames& noise, RefMics refs,
                                     double f_lo = 0.0, double f_hi = std::numeric_limits<double>::infinity()) {
    if (noise.num_bins() != f.num_bins() || noise.num_channels != f.num_mics)
        throw InputError("output noise: frames do not match the filter");
    NoisePower np;
    for (int k = 0; k < f.num_bins(); ++k) {
        if (!(f.freqs_hz[k] >= f_lo && f.freqs_hz[k] < f_hi)) continue;
        const CMatrix& y = noise.bins[k];
        np.output_power += (f.w_left(k).adjoint() * y).squaredNorm() + (f.w_right(k).adjoint() * y).squaredNorm();
        np.input_power += y.row(refs.left).squaredNorm() + y.row(refs.right).squaredNorm();
        ++np.bins;
    }
    np.output_db = np.input_power > 0.0 ? to_db_floor(np.output_power / np.input_power) : kFloorDb;
    return np;
}

inline std::string source_label(int s) { return s == 0 ? "target" : "interferer_" + std::to_string(s); }

inline void write_report_header(std::ostream& out) {
    out << "method,source,band,metric,value_db,bins_included,bins_excluded\n";
}

inline void write_report_rows(std::ostream& out, const ErrorReport& rep) {
    out << std::setprecision(17);
    for (const SourceError& e : rep.sources) {
        out << rep.method << ',' << source_label(e.source) << ",lower,ild_err," << e.ild_err_db << ','
            << e.bins_included << ',' << e.bins_excluded << '\n';
        out << rep.method << ',' << source_label(e.source) << ",lower,ipd_err," << e.ipd_err_db << ','
            << e.bins_included << ',' << e.bins_excluded << '\n';
    }
}

inline void write_noise_row(std::ostream& out, const std::string& method, const std::string& band,
                            const NoisePower& np) {
    out << std::setprecision(17) << method << ",noise," << band << ",output_noise_power," << np.output_db << ','
        << np.bins << ",0\n";
}

}  // namespace ildbf::metrics
