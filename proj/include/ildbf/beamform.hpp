// beamform.hpp
// Binaural beamformers on stacked filters w = (w_L; w_R): closed-form BMVDR
// and JBLCMV, the SDP-based ILD-enhancing beamformer and the band-split
// composite that uses it below the cut-off frequency.

#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ildbf/common.hpp"
#include "ildbf/scene.hpp"
#include "ildbf/sdp.hpp"
#include "ildbf/sphere.hpp"
#include "ildbf/stft.hpp"

namespace ildbf::beamform {

using sdp::RefMics;

inline RefMics refs_of(const scene::MicArrayConfig& mics) { return {mics.left_ref(), mics.right_ref()}; }

// P_N + 1e-8 trace(P_N)/M I.
inline CMatrix regularize(const CMatrix& p_n) {
    const double m = static_cast<double>(p_n.rows());
    const double tr = p_n.trace().real();
    CMatrix out = 0.5 * (p_n + p_n.adjoint());
    out.diagonal().array() += 1e-8 * tr / m;
    return out;
}

inline double joint_objective(const CMatrix& p_n, const CVector& w) {
    const Eigen::Index m = p_n.rows();
    return (w.head(m).adjoint() * p_n * w.head(m))(0).real() + (w.tail(m).adjoint() * p_n * w.tail(m))(0).real();
}

// Linear constraints w^H L = f^H on the stacked filter.
struct ConstraintSet {
    CMatrix lambda;  // 2M x (2 + r)
    CVector f;       // 2 + r

    int num_interferers() const { return static_cast<int>(lambda.cols()) - 2; }
    CMatrix lambda_a() const { return lambda.leftCols(2); }
    CMatrix lambda_b() const { return lambda.rightCols(lambda.cols() - 2); }
    CVector f_a() const { return f.head(2); }
    CVector f_b() const { return f.tail(f.size() - 2); }
};

// Target block blockdiag(a, a) with f_a = (a_L^*, a_R^*); interferer column
// (b b_R; -s b b_L) with f entry 0 asks for an output ITF of s b_L/b_R.
// The default s = 1 preserves the interferer ITF.
inline ConstraintSet constraint_set(const CVector& a, RefMics refs, const std::vector<CVector>& b,
                                    const std::vector<double>& itf_scale = {}) {
    const Eigen::Index m = a.size();
    const Eigen::Index r = static_cast<Eigen::Index>(b.size());
    if (!itf_scale.empty() && itf_scale.size() != b.size())
        throw InputError("constraint_set: one ITF scale per interferer");
    ConstraintSet cs;
    cs.lambda = CMatrix::Zero(2 * m, 2 + r);
    cs.lambda.col(0).head(m) = a;
    cs.lambda.col(1).tail(m) = a;
    cs.f = CVector::Zero(2 + r);
    cs.f(0) = std::conj(a(refs.left));
    cs.f(1) = std::conj(a(refs.right));
    for (Eigen::Index i = 0; i < r; ++i) {
        const CVector& bi = b[static_cast<std::size_t>(i)];
        if (bi.size() != m) throw InputError("constraint_set: interferer ATF length mismatch");
        const double s = itf_scale.empty() ? 1.0 : itf_scale[static_cast<std::size_t>(i)];
        cs.lambda.col(2 + i).head(m) = bi * bi(refs.right);
        cs.lambda.col(2 + i).tail(m) = -s * bi * bi(refs.left);
    }
    return cs;
}

// Generic LCMV on the stacked problem: argmin w^H P~ w s.t. w^H L = f^H,
// followed by a minimum-norm correction of the constraint residual.
inline CVector lcmv(const CMatrix& p_tilde, const CMatrix& lambda, const CVector& f) {
    Eigen::LDLT<CMatrix> pl(p_tilde);
    if (pl.info() != Eigen::Success) throw NumericError("lcmv: noise CPSD factorisation failed");
    const CMatrix pl_l = pl.solve(lambda);
    const CMatrix g = lambda.adjoint() * pl_l;
    Eigen::FullPivLU<CMatrix> glu(g);
    if (!glu.isInvertible()) throw NumericError("lcmv: constraint Gram matrix is singular");
    CVector w = pl_l * glu.solve(f);
    for (int it = 0; it < 2; ++it) {
        const CVector res = f - lambda.adjoint() * w;
        w += lambda * (lambda.adjoint() * lambda).ldlt().solve(res);
    }
    if (!w.allFinite()) throw NumericError("lcmv: non-finite filter");
    return w;
}

// Columns of L that are (numerically) linear combinations of the others.
inline std::vector<int> dependent_columns(const CMatrix& lambda, double tol = 1e-10) {
    std::vector<int> out;
    Eigen::JacobiSVD<CMatrix> full(lambda);
    const double smax = full.singularValues()(0);
    const double smin = full.singularValues()(full.singularValues().size() - 1);
    if (smin > tol * smax) return out;
    for (Eigen::Index j = 0; j < lambda.cols(); ++j) {
        CMatrix rest(lambda.rows(), lambda.cols() - 1);
        rest << lambda.leftCols(j), lambda.rightCols(lambda.cols() - j - 1);
        Eigen::JacobiSVD<CMatrix> sv(rest);
        const double s = sv.singularValues()(sv.singularValues().size() - 1);
        // Removing a dependent column restores full rank.
        if (s > tol * smax) out.push_back(static_cast<int>(j));
    }
    return out;
}

inline CVector jblcmv(const CMatrix& p_n, const ConstraintSet& cs) {
    const Eigen::Index m2 = cs.lambda.rows();
    if (cs.lambda.cols() > m2) {
        std::ostringstream os;
        os << "jblcmv: " << cs.lambda.cols() << " constraints exceed the " << m2 << " filter coefficients";
        throw ConstraintError(os.str());
    }
    const std::vector<int> dep = dependent_columns(cs.lambda);
    if (!dep.empty() || cs.lambda.cols() == 0) {
        std::ostringstream os;
        os << "jblcmv: constraint matrix is rank deficient; dependent columns:";
        for (int j : dep) os << ' ' << j;
        throw ConstraintError(os.str());
    }
    return lcmv(sdp::stack_blockdiag(regularize(p_n)), cs.lambda, cs.f);
}

inline CVector bmvdr(const CMatrix& p_n, const CVector& a, RefMics refs) {
    if (a.squaredNorm() == 0.0) throw InputError("bmvdr: zero target ATF");
    const CMatrix p = regularize(p_n);
    Eigen::LDLT<CMatrix> pl(p);
    if (pl.info() != Eigen::Success) throw NumericError("bmvdr: noise CPSD is singular");
    const CVector pa = pl.solve(a);
    const cplx denom = a.dot(pa);
    if (!(std::abs(denom) > 0.0) || !pa.allFinite()) throw NumericError("bmvdr: noise CPSD is singular");
    const Eigen::Index m = a.size();
    CVector w(2 * m);
    w.head(m) = pa * std::conj(a(refs.left)) / denom;
    w.tail(m) = pa * std::conj(a(refs.right)) / denom;
    return w;
}

// Minimum-norm correction onto w^H L_a = f_a^H.
inline CVector project_distortionless(const CVector& w, const CMatrix& lambda_a, const CVector& f_a) {
    const CVector res = f_a - lambda_a.adjoint() * w;
    return w + lambda_a * (lambda_a.adjoint() * lambda_a).ldlt().solve(res);
}

enum class BinStatus {
    closed_form,          // BMVDR / JBLCMV
    sdp_rank1,            // certified rank-1 SDP solution
    fallback_rank,        // SDP solved, not rank-1: JBLCMV used
    fallback_numeric,     // SDP numeric failure: JBLCMV used
    fallback_infeasible,  // SDP infeasible: JBLCMV used
    degenerate            // JBLCMV constraints degenerate: BMVDR used
};

inline const char* to_string(BinStatus s) {
    switch (s) {
        case BinStatus::closed_form: return "closed-form";
        case BinStatus::sdp_rank1: return "sdp-rank1";
        case BinStatus::fallback_rank: return "fallback-rank";
        case BinStatus::fallback_numeric: return "fallback-numeric";
        case BinStatus::fallback_infeasible: return "fallback-infeasible";
        case BinStatus::degenerate: return "degenerate";
    }
    return "unknown";
}

inline BinStatus bin_status_from_string(const std::string& s) {
    for (BinStatus b : {BinStatus::closed_form, BinStatus::sdp_rank1, BinStatus::fallback_rank,
                        BinStatus::fallback_numeric, BinStatus::fallback_infeasible, BinStatus::degenerate})
        if (s == to_string(b)) return b;
    throw InputError("unknown bin status '" + s + "'");
}

// Bins whose filter is the method's own solution.
inline bool is_solved(BinStatus s) { return s == BinStatus::closed_form || s == BinStatus::sdp_rank1; }

struct IldResult {
    CVector w;
    sdp::LiftedSolution solution;
    BinStatus status = BinStatus::fallback_numeric;
};

struct IldOptions {
    sdp::Variant variant = sdp::Variant::problem3;
    sdp::SolverOptions solver;
    sdp::Rank1Thresholds rank1;
};

inline IldResult ild_enhancing(const CMatrix& p_n, const CVector& a, RefMics refs, const std::vector<CVector>& b,
                               const std::vector<double>& c, const IldOptions& opt = {}) {
    for (double ci : c)
        if (!(ci > 0.0)) throw DomainError("ild_enhancing: scaling factors must be positive");
    const CMatrix p = regularize(p_n);
    const sdp::LiftedProblem pb = sdp::build_problem(p, a, refs, b, c, opt.variant);
    IldResult out;
    out.solution = sdp::solve(pb, opt.solver);
    if (sdp::certify_rank1(out.solution, opt.rank1)) {
        out.w = project_distortionless(out.solution.w, pb.lambda_a, pb.f_a);
        out.status = BinStatus::sdp_rank1;
        return out;
    }
    switch (out.solution.status) {
        case sdp::SolveStatus::solved: out.status = BinStatus::fallback_rank; break;
        case sdp::SolveStatus::infeasible: out.status = BinStatus::fallback_infeasible; break;
        case sdp::SolveStatus::numeric_failure: out.status = BinStatus::fallback_numeric; break;
    }
    out.w = jblcmv(p_n, constraint_set(a, refs, b));
    return out;
}

// Per-bin SDP diagnostics; NaN marks quantities that were not computed.
struct BinDiagnostics {
    double objective_bmvdr = std::numeric_limits<double>::quiet_NaN();
    double objective_p2 = std::numeric_limits<double>::quiet_NaN();
    double objective_p3 = std::numeric_limits<double>::quiet_NaN();
    double objective_jblcmv = std::numeric_limits<double>::quiet_NaN();
    double oracle_upper = std::numeric_limits<double>::quiet_NaN();
    double rank1_gap = std::numeric_limits<double>::quiet_NaN();
    std::string solver_status = "none";
    int iterations = 0;
};

struct StackedFilter {
    std::string method;
    int num_mics = 0;
    std::vector<double> freqs_hz;
    std::vector<CVector> w;                  // [bin], length 2M
    std::vector<BinStatus> status;           // [bin]
    std::vector<std::vector<double>> c;      // [bin][interferer] ILD scaling targets
    std::vector<BinDiagnostics> diagnostics; // [bin]; empty unless the method uses the SDP

    int num_bins() const { return static_cast<int>(w.size()); }
    CVector w_left(int k) const { return w[k].head(num_mics); }
    CVector w_right(int k) const { return w[k].tail(num_mics); }
    bool has_diagnostics() const { return !diagnostics.empty(); }
};

enum class Method { bmvdr, jblcmv, ild };

struct MethodSpec {
    Method kind = Method::bmvdr;
    std::optional<double> distance_m;  // ild only; nullopt keeps c = 1
    sdp::Variant variant = sdp::Variant::problem3;

    // bmvdr, jblcmv, ild_<d> (problem 3) or ildp2_<d> (problem 2); ild_natural
    // keeps c = 1 without a table lookup.
    static MethodSpec parse(const std::string& name) {
        MethodSpec m;
        if (name == "bmvdr") return m;
        if (name == "jblcmv") {
            m.kind = Method::jblcmv;
            return m;
        }
        std::string rest;
        if (name.rfind("ildp2_", 0) == 0) {
            m.variant = sdp::Variant::problem2;
            rest = name.substr(6);
        } else if (name.rfind("ild_", 0) == 0) {
            rest = name.substr(4);
        } else {
            throw InputError("unknown method '" + name + "'");
        }
        m.kind = Method::ild;
        if (rest == "natural") return m;
        try {
            std::size_t used = 0;
            const double d = std::stod(rest, &used);
            if (used != rest.size() || !(d > 0.0)) throw InputError("");
            m.distance_m = d;
        } catch (const std::exception&) {
            throw InputError("invalid enhancement distance in method '" + name + "'");
        }
        return m;
    }
};

struct BandSplitOptions {
    IldOptions ild;
    bool diagnostics_both_variants = true;  // also solve the other relaxation for reporting
    bool oracle = false;                    // brute-force upper bound (M <= 3, r <= 2 only)
    int oracle_starts = 64;
};

namespace detail {

inline std::vector<CVector> interferers_at(const scene::AtfSet& atfs, int k) {
    std::vector<CVector> b;
    for (int i = 0; i < atfs.num_interferers(); ++i) b.push_back(atfs.interferers[i][k]);
    return b;
}

inline void check_inputs(const scene::AtfSet& atfs, const scene::CpsdSet& cpsds) {
    atfs.validate();
    if (cpsds.num_bins() != atfs.num_bins()) throw InputError("CPSD and ATF bin counts differ");
    for (const CMatrix& p : cpsds.noise)
        if (p.rows() != atfs.num_mics() || p.cols() != atfs.num_mics())
            throw InputError("CPSD shape differs from the microphone count");
}

inline StackedFilter empty_filter(const std::string& method, const scene::AtfSet& atfs) {
    StackedFilter f;
    f.method = method;
    f.num_mics = atfs.num_mics();
    f.freqs_hz = atfs.freqs_hz;
    f.w.resize(atfs.num_bins());
    f.status.assign(atfs.num_bins(), BinStatus::closed_form);
    f.c.assign(atfs.num_bins(), std::vector<double>(atfs.num_interferers(), 1.0));
    return f;
}

// JBLCMV with a BMVDR fallback for degenerate constraint sets.
inline std::pair<CVector, BinStatus> jblcmv_or_bmvdr(const CMatrix& p_n, const CVector& a, RefMics refs,
                                                     const std::vector<CVector>& b) {
    try {
        return {jblcmv(p_n, constraint_set(a, refs, b)), BinStatus::closed_form};
    } catch (const ConstraintError&) {
        return {bmvdr(p_n, a, refs), BinStatus::degenerate};
    }
}

}  // namespace detail

inline StackedFilter bmvdr_filter(const scene::Scene& sc, const scene::AtfSet& atfs, const scene::CpsdSet& cpsds) {
    detail::check_inputs(atfs, cpsds);
    StackedFilter f = detail::empty_filter("bmvdr", atfs);
    for (int k = 0; k < atfs.num_bins(); ++k) f.w[k] = bmvdr(cpsds.noise[k], atfs.target[k], refs_of(sc.mic_array));
    return f;
}

inline StackedFilter jblcmv_filter(const scene::Scene& sc, const scene::AtfSet& atfs, const scene::CpsdSet& cpsds) {
    detail::check_inputs(atfs, cpsds);
    StackedFilter f = detail::empty_filter("jblcmv", atfs);
    for (int k = 0; k < atfs.num_bins(); ++k) {
        auto [w, st] = detail::jblcmv_or_bmvdr(cpsds.noise[k], atfs.target[k], refs_of(sc.mic_array),
                                               detail::interferers_at(atfs, k));
        f.w[k] = std::move(w);
        f.status[k] = st;
    }
    return f;
}

// Scaling factors c_i per lower-band bin for an enhancement distance; the
// table must hold the bin frequencies and interferer azimuths (a table is
// built on demand when none is given).
inline std::vector<std::vector<double>> ild_targets(const scene::Scene& sc, const scene::AtfSet& atfs,
                                                    std::optional<double> distance_m,
                                                    const sphere::DvfTable* table) {
    std::vector<std::vector<double>> c(atfs.num_bins(), std::vector<double>(atfs.num_interferers(), 1.0));
    if (!distance_m) return c;
    const std::vector<int> idx = sc.interferer_indices();
    std::vector<double> freqs;
    for (int k = 1; k < atfs.num_bins(); ++k)
        if (atfs.freqs_hz[k] < sc.cutoff_hz) freqs.push_back(atfs.freqs_hz[k]);
    if (freqs.empty()) return c;
    std::optional<sphere::DvfTable> own;
    if (!table) {
        std::vector<double> az;
        for (int i : idx)
            if (std::find(az.begin(), az.end(), sc.sources[i].azimuth_deg) == az.end())
                az.push_back(sc.sources[i].azimuth_deg);
        own = sphere::dvf_ild_table(sc.sphere_params(), freqs, az, {*distance_m});
        table = &*own;
    }
    for (int k = 1; k < atfs.num_bins(); ++k) {
        if (!(atfs.freqs_hz[k] < sc.cutoff_hz)) continue;
        for (std::size_t i = 0; i < idx.size(); ++i)
            c[k][i] = table->query(atfs.freqs_hz[k], sc.sources[idx[i]].azimuth_deg, *distance_m);
    }
    return c;
}

// ILD enhancement below the cut-off, JBLCMV at and above it (and at DC).
inline StackedFilter band_split(const scene::Scene& sc, const scene::AtfSet& atfs, const scene::CpsdSet& cpsds,
                                std::optional<double> enhancement_distance_m, const sphere::DvfTable* table = nullptr,
                                const BandSplitOptions& opt = {}, const std::string& method_name = "") {
    detail::check_inputs(atfs, cpsds);
    std::string name = method_name;
    if (name.empty()) {
        std::ostringstream os;
        os << (opt.ild.variant == sdp::Variant::problem2 ? "ildp2_" : "ild_");
        if (enhancement_distance_m) os << *enhancement_distance_m;
        else os << "natural";
        name = os.str();
    }
    StackedFilter f = detail::empty_filter(name, atfs);
    f.c = ild_targets(sc, atfs, enhancement_distance_m, table);
    f.diagnostics.assign(atfs.num_bins(), BinDiagnostics{});
    const RefMics refs = refs_of(sc.mic_array);
    const int last = atfs.num_bins() - 1;
    for (int k = 0; k < atfs.num_bins(); ++k) {
        const CVector& a = atfs.target[k];
        const CMatrix& p = cpsds.noise[k];
        const std::vector<CVector> b = detail::interferers_at(atfs, k);
        BinDiagnostics& dg = f.diagnostics[k];
        const CVector wb = bmvdr(p, a, refs);
        dg.objective_bmvdr = joint_objective(regularize(p), wb);
        auto [wj, jst] = detail::jblcmv_or_bmvdr(p, a, refs, b);
        if (jst == BinStatus::closed_form) dg.objective_jblcmv = joint_objective(regularize(p), wj);

        const bool lower = k > 0 && k < last && atfs.freqs_hz[k] < sc.cutoff_hz;
        if (!lower) {
            f.w[k] = wj;
            f.status[k] = jst;
            continue;
        }
        IldResult res = ild_enhancing(p, a, refs, b, f.c[k], opt.ild);
        f.w[k] = res.w;
        f.status[k] = res.status;
        dg.rank1_gap = res.solution.rank1_gap;
        dg.solver_status = sdp::to_string(res.solution.status);
        dg.iterations = res.solution.iterations;
        const bool p3 = opt.ild.variant == sdp::Variant::problem3;
        (p3 ? dg.objective_p3 : dg.objective_p2) = res.solution.objective;
        const CMatrix preg = regularize(p);
        if (opt.diagnostics_both_variants) {
            const sdp::LiftedProblem other =
                sdp::build_problem(preg, a, refs, b, f.c[k], p3 ? sdp::Variant::problem2 : sdp::Variant::problem3);
            const sdp::LiftedSolution s = sdp::solve(other, opt.ild.solver);
            if (s.status == sdp::SolveStatus::solved) (p3 ? dg.objective_p2 : dg.objective_p3) = s.objective;
        }
        if (opt.oracle && atfs.num_mics() <= 3 && atfs.num_interferers() <= 2) {
            const sdp::LiftedProblem pb = sdp::build_problem(preg, a, refs, b, f.c[k], sdp::Variant::problem2);
            sdp::OracleOptions oo;
            oo.starts = opt.oracle_starts;
            oo.seed = static_cast<std::uint64_t>(k) + 1;
            oo.seeds = {wb, wj, f.w[k]};
            std::vector<double> sq;
            for (double ci : f.c[k]) sq.push_back(std::sqrt(ci));
            try {
                oo.seeds.push_back(jblcmv(p, constraint_set(a, refs, b, sq)));
            } catch (const ConstraintError&) {
            }
            const sdp::OracleResult orc = sdp::qcqp_oracle(pb, oo);
            if (orc.feasible) dg.oracle_upper = orc.objective;
        }
    }
    return f;
}

inline StackedFilter design(const MethodSpec& spec, const std::string& name, const scene::Scene& sc,
                            const scene::AtfSet& atfs, const scene::CpsdSet& cpsds,
                            const sphere::DvfTable* table = nullptr, BandSplitOptions opt = {}) {
    StackedFilter f;
    switch (spec.kind) {
        case Method::bmvdr: f = bmvdr_filter(sc, atfs, cpsds); break;
        case Method::jblcmv: f = jblcmv_filter(sc, atfs, cpsds); break;
        case Method::ild:
            opt.ild.variant = spec.variant;
            f = band_split(sc, atfs, cpsds, spec.distance_m, table, opt, name);
            break;
    }
    f.method = name;
    return f;
}

// Binaural output frames: row 0 left, row 1 right.
inline stft::StftFrames apply(const StackedFilter& filter, const stft::StftFrames& frames) {
    if (frames.num_bins() != filter.num_bins()) throw InputError("apply: filter and frame bin counts differ");
    if (frames.num_channels != filter.num_mics) throw InputError("apply: filter and frame channel counts differ");
    stft::StftFrames out = stft::zero_frames(frames.fft_size, 2, frames.num_frames);
    for (int k = 0; k < filter.num_bins(); ++k) {
        out.bins[k].row(0) = filter.w_left(k).adjoint() * frames.bins[k];
        out.bins[k].row(1) = filter.w_right(k).adjoint() * frames.bins[k];
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV export

inline void write_filter_csv(std::ostream& out, const StackedFilter& f) {
    out << "bin,f_hz,side,mic_index,re,im,method,status\n" << std::setprecision(17);
    for (int k = 0; k < f.num_bins(); ++k)
        for (int side = 0; side < 2; ++side)
            for (int j = 0; j < f.num_mics; ++j) {
                const cplx v = f.w[k](side * f.num_mics + j);
                out << k << ',' << f.freqs_hz[k] << ',' << (side == 0 ? "L" : "R") << ',' << j << ',' << v.real()
                    << ',' << v.imag() << ',' << f.method << ',' << to_string(f.status[k]) << '\n';
            }
}

inline StackedFilter read_filter_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("bin,f_hz,side,mic_index,re,im", 0) != 0)
        throw InputError("filter CSV: missing header");
    struct Entry {
        int k, side, j;
        double f;
        cplx v;
        std::string method, status;
    };
    std::vector<Entry> rows;
    int max_k = -1, max_j = -1;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != 8 || (cells[2] != "L" && cells[2] != "R")) {
            std::ostringstream os;
            os << "filter CSV: malformed row at line " << lineno;
            throw InputError(os.str());
        }
        Entry e{std::stoi(cells[0]), cells[2] == "L" ? 0 : 1, std::stoi(cells[3]), std::stod(cells[1]),
                cplx(std::stod(cells[4]), std::stod(cells[5])), cells[6], cells[7]};
        max_k = std::max(max_k, e.k);
        max_j = std::max(max_j, e.j);
        rows.push_back(std::move(e));
    }
    if (rows.empty()) throw InputError("filter CSV: no rows");
    StackedFilter f;
    f.num_mics = max_j + 1;
    f.method = rows.front().method;
    f.freqs_hz.assign(max_k + 1, 0.0);
    f.w.assign(max_k + 1, CVector::Zero(2 * f.num_mics));
    f.status.assign(max_k + 1, BinStatus::closed_form);
    if (rows.size() != static_cast<std::size_t>((max_k + 1) * 2 * f.num_mics))
        throw InputError("filter CSV: incomplete coefficient grid");
    for (const Entry& e : rows) {
        f.freqs_hz[e.k] = e.f;
        f.w[e.k](e.side * f.num_mics + e.j) = e.v;
        f.status[e.k] = bin_status_from_string(e.status);
    }
    return f;
}

inline void write_diagnostics_csv(std::ostream& out, const StackedFilter& f) {
    out << "bin,f_hz,objective_bmvdr,objective_p2,objective_p3,objective_jblcmv,oracle_upper,rank1_gap,"
           "solver_status,bin_status,iterations\n"
        << std::setprecision(17);
    for (int k = 0; k < f.num_bins(); ++k) {
        const BinDiagnostics& d = f.diagnostics.at(k);
        out << k << ',' << f.freqs_hz[k] << ',' << d.objective_bmvdr << ',' << d.objective_p2 << ','
            << d.objective_p3 << ',' << d.objective_jblcmv << ',' << d.oracle_upper << ',' << d.rank1_gap << ','
            << d.solver_status << ',' << to_string(f.status[k]) << ',' << d.iterations << '\n';
    }
}

}  // namespace ildbf::beamform
