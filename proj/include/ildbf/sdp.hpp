// sdp.hpp
// Lifted semidefinite relaxations of the ILD-enhancing beamformer QCQP.
//
// The filter w (length 2M) and its lift W are collected in the Hermitian
// matrix Z = [[W, w], [w^H, 1]] of order n = 2M + 1. Every constraint is a
// linear functional Tr(A Z) = rhs. Problem 2 keeps the distortionless and ILD
// constraints plus Z >= 0; problem 3 adds the RLT products W L_a = w f_a^H and
// the trace form of the squared distortionless residual.
//
// solve() presolves (facial reduction on zero-rhs semidefinite constraints,
// removal of dependent rows), embeds the Hermitian program into a real
// symmetric one and runs a Mehrotra predictor-corrector primal-dual
// interior-point method with the HKM search direction.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ildbf/common.hpp"

namespace ildbf::sdp {

enum class Variant { problem2, problem3 };

inline const char* to_string(Variant v) { return v == Variant::problem2 ? "problem2" : "problem3"; }

struct RefMics {
    int left = 0;
    int right = 0;
};

// Tr(A Z) = rhs over the lifted matrix Z.
struct LiftedConstraint {
    enum class Kind { homogenizing, distortionless, ild, rlt_product, rlt_trace };
    Kind kind;
    CMatrix a;
    cplx rhs;
    bool real_valued;  // A Hermitian and rhs real
};

struct LiftedProblem {
    CMatrix p_tilde;             // blockdiag(P_N, P_N)
    CMatrix lambda_a;            // blockdiag(a, a), 2M x 2
    CVector f_a;                 // (a_L^*, a_R^*)
    std::vector<CMatrix> m;      // ILD constraint matrices
    bool rlt_enabled = false;    // problem 3

    int dim() const { return static_cast<int>(p_tilde.rows()); }
    int lifted_dim() const { return dim() + 1; }
    Variant variant() const { return rlt_enabled ? Variant::problem3 : Variant::problem2; }

    CMatrix objective_matrix() const {
        CMatrix c = CMatrix::Zero(lifted_dim(), lifted_dim());
        c.topLeftCorner(dim(), dim()) = p_tilde;
        return c;
    }

    std::vector<LiftedConstraint> constraints() const {
        using Kind = LiftedConstraint::Kind;
        const int d = dim();
        const int n = lifted_dim();
        std::vector<LiftedConstraint> out;

        CMatrix h = CMatrix::Zero(n, n);
        h(d, d) = 1.0;
        out.push_back({Kind::homogenizing, h, {1.0, 0.0}, true});

        // w^H L_a = f_a^H: conj(w_p) = Z(d, p), so A(p, d) = L_a(p, q).
        for (int q = 0; q < 2; ++q) {
            CMatrix a = CMatrix::Zero(n, n);
            for (int p = 0; p < d; ++p) a(p, d) = lambda_a(p, q);
            out.push_back({Kind::distortionless, a, std::conj(f_a(q)), false});
        }

        for (const CMatrix& mi : m) {
            CMatrix a = CMatrix::Zero(n, n);
            a.topLeftCorner(d, d) = mi;
            out.push_back({Kind::ild, a, {0.0, 0.0}, true});
        }

        if (rlt_enabled) {
            // (W L_a - w f_a^H)(p, q) = sum_j Z(p, j) L_a(j, q) - Z(p, d) conj(f_a(q)).
            for (int q = 0; q < 2; ++q) {
                for (int p = 0; p < d; ++p) {
                    CMatrix a = CMatrix::Zero(n, n);
                    for (int j = 0; j < d; ++j) a(j, p) = lambda_a(j, q);
                    a(d, p) = -std::conj(f_a(q));
                    out.push_back({Kind::rlt_product, a, {0.0, 0.0}, false});
                }
            }
            // Tr(W L L^H) - w^H L f - f^H L^H w + f^H f Z(d, d) = Tr(V V^H Z), V = [L; -f^H].
            CMatrix v(n, 2);
            v.topRows(d) = lambda_a;
            v.row(d) = -f_a.adjoint();
            out.push_back({Kind::rlt_trace, v * v.adjoint(), {0.0, 0.0}, true});
        }
        return out;
    }

    struct Counts {
        int complex_equalities = 0;
        int real_equalities = 0;
    };
    Counts constraint_counts() const {
        Counts c;
        for (const LiftedConstraint& k : constraints()) (k.real_valued ? c.real_equalities : c.complex_equalities)++;
        return c;
    }
};

// blockdiag(b b^H |b_R|^2, -c b b^H |b_L|^2): w^H M w = 0 iff the output ILD of
// the source is c times its input ILD.
inline CMatrix build_mi(const CVector& b, double c, RefMics refs) {
    if (b.size() == 0 || b.squaredNorm() == 0.0) throw InputError("build_mi: zero interferer ATF");
    if (!(c > 0.0)) throw DomainError("build_mi: scaling factor must be positive");
    const double bl2 = std::norm(b(refs.left));
    const double br2 = std::norm(b(refs.right));
    if (bl2 == 0.0 && br2 == 0.0)
        throw InputError("build_mi: interferer vanishes at both reference microphones");
    const int m = static_cast<int>(b.size());
    CMatrix out = CMatrix::Zero(2 * m, 2 * m);
    const CMatrix bb = b * b.adjoint();
    out.topLeftCorner(m, m) = bb * br2;
    out.bottomRightCorner(m, m) = -c * bl2 * bb;
    return out;
}

inline CMatrix stack_blockdiag(const CMatrix& p) {
    const Eigen::Index m = p.rows();
    CMatrix out = CMatrix::Zero(2 * m, 2 * m);
    out.topLeftCorner(m, m) = p;
    out.bottomRightCorner(m, m) = p;
    return out;
}

inline LiftedProblem build_problem(const CMatrix& p_n, const CVector& a, RefMics refs,
                                   const std::vector<CVector>& b, const std::vector<double>& c,
                                   Variant variant) {
    const Eigen::Index m = a.size();
    if (p_n.rows() != m || p_n.cols() != m) throw InputError("build_problem: CPSD shape mismatch");
    if (b.size() != c.size()) throw InputError("build_problem: one scaling factor per interferer");
    if (refs.left < 0 || refs.left >= m || refs.right < 0 || refs.right >= m)
        throw InputError("build_problem: reference microphone out of range");
    LiftedProblem pb;
    pb.p_tilde = stack_blockdiag(p_n);
    pb.lambda_a = CMatrix::Zero(2 * m, 2);
    pb.lambda_a.col(0).head(m) = a;
    pb.lambda_a.col(1).tail(m) = a;
    pb.f_a.resize(2);
    pb.f_a << std::conj(a(refs.left)), std::conj(a(refs.right));
    for (std::size_t i = 0; i < b.size(); ++i) {
        if (b[i].size() != m) throw InputError("build_problem: interferer ATF length mismatch");
        pb.m.push_back(build_mi(b[i], c[i], refs));
    }
    pb.rlt_enabled = variant == Variant::problem3;
    return pb;
}

// Lifted point for a filter w.
inline CMatrix lift(const CVector& w) {
    CVector z(w.size() + 1);
    z.head(w.size()) = w;
    z(w.size()) = 1.0;
    return z * z.adjoint();
}

inline cplx evaluate(const LiftedConstraint& c, const CMatrix& z) { return (c.a * z).trace(); }

// ---------------------------------------------------------------------------
// Hermitian form and real embedding

// Tr(H Z) = rhs with H Hermitian and rhs real.
struct HermitianConstraint {
    CMatrix h;
    double rhs;
};

// Complex constraints split into real and imaginary parts:
// Re Tr(A Z) = Tr((A + A^H)/2 Z), Im Tr(A Z) = Tr((A - A^H)/(2i) Z).
inline std::vector<HermitianConstraint> hermitian_constraints(const LiftedProblem& pb) {
    std::vector<HermitianConstraint> out;
    for (const LiftedConstraint& c : pb.constraints()) {
        if (c.real_valued) {
            out.push_back({0.5 * (c.a + c.a.adjoint()), c.rhs.real()});
        } else {
            out.push_back({0.5 * (c.a + c.a.adjoint()), c.rhs.real()});
            out.push_back({(c.a - c.a.adjoint()) / cplx(0.0, 2.0), c.rhs.imag()});
        }
    }
    return out;
}

// H -> [[Re H, -Im H], [Im H, Re H]]. Tr(emb(H) emb(Z)) = 2 Tr(H Z), so every
// embedded constraint carries 2 * rhs and the embedded objective is twice the
// Hermitian one.
inline RMatrix embed(const CMatrix& h) {
    const Eigen::Index n = h.rows();
    RMatrix out(2 * n, 2 * n);
    out.topLeftCorner(n, n) = h.real();
    out.topRightCorner(n, n) = -h.imag();
    out.bottomLeftCorner(n, n) = h.imag();
    out.bottomRightCorner(n, n) = h.real();
    return out;
}

// Inverse of embed() on the J-invariant part of X.
inline CMatrix unembed(const RMatrix& x) {
    const Eigen::Index n = x.rows() / 2;
    const RMatrix re = 0.5 * (x.topLeftCorner(n, n) + x.bottomRightCorner(n, n));
    const RMatrix im = 0.5 * (x.bottomLeftCorner(n, n) - x.topRightCorner(n, n));
    CMatrix out(n, n);
    out.real() = re;
    out.imag() = im;
    return 0.5 * (out + out.adjoint());
}

inline constexpr double kEmbeddingFactor = 2.0;

// min <C, X> s.t. <A_k, X> = b_k, X >= 0 over real symmetric X.
struct RealSdp {
    RMatrix c;
    std::vector<RMatrix> a;
    RVector b;
};

inline RealSdp embed_program(const CMatrix& objective, const std::vector<HermitianConstraint>& cons) {
    RealSdp out;
    out.c = embed(objective);
    out.b.resize(static_cast<Eigen::Index>(cons.size()));
    for (std::size_t k = 0; k < cons.size(); ++k) {
        out.a.push_back(embed(cons[k].h));
        out.b(static_cast<Eigen::Index>(k)) = kEmbeddingFactor * cons[k].rhs;
    }
    return out;
}

inline RealSdp complex_to_real_embedding(const LiftedProblem& pb) {
    return embed_program(pb.objective_matrix(), hermitian_constraints(pb));
}

// ---------------------------------------------------------------------------
// Presolve

struct Presolved {
    CMatrix basis;                          // Z = basis Y basis^H
    CMatrix objective;                      // basis^H C basis
    std::vector<HermitianConstraint> cons;  // reduced, linearly independent
    bool infeasible = false;
    int facial_reductions = 0;
};

inline RVector hermitian_vec(const CMatrix& h) {
    const Eigen::Index n = h.rows();
    RVector v(n * n);
    Eigen::Index t = 0;
    const double s2 = std::sqrt(2.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        v(t++) = h(i, i).real();
        for (Eigen::Index j = i + 1; j < n; ++j) {
            v(t++) = s2 * h(i, j).real();
            v(t++) = s2 * h(i, j).imag();
        }
    }
    return v;
}

inline Presolved presolve(const CMatrix& objective, const std::vector<HermitianConstraint>& cons) {
    const Eigen::Index n = objective.rows();
    Presolved ps;
    ps.basis = CMatrix::Identity(n, n);

    // A zero-rhs semidefinite constraint Tr(H Z) = 0 with Z >= 0 forces
    // H Z = 0: restrict Z to the null space of H.
    std::vector<bool> used(cons.size(), false);
    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t k = 0; k < cons.size(); ++k) {
            if (used[k] || cons[k].rhs != 0.0) continue;
            CMatrix hr = ps.basis.adjoint() * cons[k].h * ps.basis;
            hr = (0.5 * (hr + hr.adjoint())).eval();
            Eigen::SelfAdjointEigenSolver<CMatrix> es(hr);
            const RVector& ev = es.eigenvalues();
            const double scale = ev.cwiseAbs().maxCoeff();
            if (scale <= 1e-14 * cons[k].h.norm()) continue;
            const double tol = 1e-10 * scale;
            const bool psd = ev.minCoeff() >= -tol;
            const bool nsd = ev.maxCoeff() <= tol;
            if (!psd && !nsd) continue;
            std::vector<Eigen::Index> keep;
            for (Eigen::Index i = 0; i < ev.size(); ++i)
                if (std::abs(ev(i)) <= tol) keep.push_back(i);
            CMatrix nb(hr.rows(), static_cast<Eigen::Index>(keep.size()));
            for (std::size_t i = 0; i < keep.size(); ++i) nb.col(static_cast<Eigen::Index>(i)) = es.eigenvectors().col(keep[i]);
            ps.basis = ps.basis * nb;
            used[k] = true;
            ++ps.facial_reductions;
            changed = true;
            if (ps.basis.cols() == 0) {
                ps.infeasible = true;
                return ps;
            }
        }
    }

    const CMatrix& u = ps.basis;
    ps.objective = u.adjoint() * objective * u;
    ps.objective = (0.5 * (ps.objective + ps.objective.adjoint())).eval();

    std::vector<HermitianConstraint> reduced;
    for (const HermitianConstraint& c : cons) {
        CMatrix hr = u.adjoint() * c.h * u;
        hr = (0.5 * (hr + hr.adjoint())).eval();
        const double hn = c.h.norm();
        if (hr.norm() <= 1e-11 * std::max(hn, 1e-300)) {
            if (std::abs(c.rhs) > 1e-9 * std::max(1.0, hn)) {
                ps.infeasible = true;
                return ps;
            }
            continue;
        }
        reduced.push_back({hr, c.rhs});
    }
    if (reduced.empty()) return ps;

    // Keep a maximal independent subset; dropped rows must be consistent.
    const Eigen::Index len = reduced.front().h.rows() * reduced.front().h.rows();
    RMatrix cols(len, static_cast<Eigen::Index>(reduced.size()));
    RVector rhs(static_cast<Eigen::Index>(reduced.size()));
    for (std::size_t k = 0; k < reduced.size(); ++k) {
        const RVector v = hermitian_vec(reduced[k].h);
        const double nv = v.norm();
        cols.col(static_cast<Eigen::Index>(k)) = v / nv;
        rhs(static_cast<Eigen::Index>(k)) = reduced[k].rhs / nv;
    }
    Eigen::ColPivHouseholderQR<RMatrix> qr(cols);
    qr.setThreshold(1e-10);
    const Eigen::Index rank = qr.rank();
    const auto perm = qr.colsPermutation().indices();
    RMatrix basis_cols(len, rank);
    RVector basis_rhs(rank);
    for (Eigen::Index i = 0; i < rank; ++i) {
        basis_cols.col(i) = cols.col(perm(i));
        basis_rhs(i) = rhs(perm(i));
        ps.cons.push_back(reduced[static_cast<std::size_t>(perm(i))]);
    }
    if (rank < static_cast<Eigen::Index>(reduced.size())) {
        Eigen::ColPivHouseholderQR<RMatrix> bqr(basis_cols);
        for (Eigen::Index i = rank; i < static_cast<Eigen::Index>(reduced.size()); ++i) {
            const RVector coef = bqr.solve(cols.col(perm(i)));
            const double predicted = coef.dot(basis_rhs);
            if (std::abs(predicted - rhs(perm(i))) > 1e-7 * (1.0 + std::abs(rhs(perm(i))))) {
                ps.infeasible = true;
                return ps;
            }
        }
    }
    return ps;
}

// ---------------------------------------------------------------------------
// Real symmetric interior-point solver

enum class SolveStatus { solved, infeasible, numeric_failure };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::solved: return "solved";
        case SolveStatus::infeasible: return "infeasible";
        case SolveStatus::numeric_failure: return "numeric-failure";
    }
    return "unknown";
}

struct SolverOptions {
    double target_gap = 1e-11;  // stop once gap and residuals reach this
    double accept_gap = 1e-7;   // worst accuracy still reported as solved
    int max_iterations = 120;
    std::ostream* trace = nullptr;  // per-iteration log
};

struct IpmResult {
    RMatrix x;
    RVector y;
    RMatrix s;
    SolveStatus status = SolveStatus::numeric_failure;
    int iterations = 0;
    double primal_objective = 0.0;
    double dual_objective = 0.0;
    double relative_gap = 1.0;
    double primal_infeasibility = 1.0;
    double dual_infeasibility = 1.0;
};

namespace detail {

inline double inner(const RMatrix& a, const RMatrix& b) { return a.cwiseProduct(b).sum(); }

inline RMatrix sym(const RMatrix& a) { return 0.5 * (a + a.transpose()); }

// Largest step t <= 1/(-lambda_min(L^-1 D L^-T)) keeping X + t D >= 0.
inline double max_step(const Eigen::LLT<RMatrix>& chol, const RMatrix& d) {
    const RMatrix linv_d = chol.matrixL().solve(d);
    const RMatrix m = chol.matrixL().solve(linv_d.transpose());
    Eigen::SelfAdjointEigenSolver<RMatrix> es(sym(m), Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    return lmin >= 0.0 ? std::numeric_limits<double>::infinity() : -1.0 / lmin;
}

}  // namespace detail

inline IpmResult solve_real_sdp(const RealSdp& prob, const SolverOptions& opt = {}) {
    using detail::inner;
    using detail::sym;
    const Eigen::Index n = prob.c.rows();
    const Eigen::Index m = static_cast<Eigen::Index>(prob.a.size());

    // Orthonormalised copy of the constraints: A = Q R, b -> R^-T b.
    std::vector<RMatrix> a(prob.a.size());
    RVector b(m);
    {
        RMatrix vecs(n * n, m);
        for (Eigen::Index k = 0; k < m; ++k) vecs.col(k) = prob.a[static_cast<std::size_t>(k)].reshaped();
        Eigen::HouseholderQR<RMatrix> qr(vecs);
        const RMatrix q = qr.householderQ() * RMatrix::Identity(n * n, m);
        const RMatrix r = q.transpose() * vecs;
        b = r.transpose().triangularView<Eigen::Lower>().solve(prob.b);
        for (Eigen::Index k = 0; k < m; ++k) a[static_cast<std::size_t>(k)] = sym(q.col(k).reshaped(n, n));
    }
    const RMatrix& c = prob.c;

    auto apply_a = [&](const RMatrix& x) {
        RVector v(m);
        for (Eigen::Index k = 0; k < m; ++k) v(k) = inner(a[static_cast<std::size_t>(k)], x);
        return v;
    };
    auto apply_at = [&](const RVector& y) {
        RMatrix out = RMatrix::Zero(n, n);
        for (Eigen::Index k = 0; k < m; ++k) out += y(k) * a[static_cast<std::size_t>(k)];
        return out;
    };

    double xi = std::max<double>(10.0, std::sqrt(static_cast<double>(n)));
    for (Eigen::Index k = 0; k < m; ++k) xi = std::max(xi, static_cast<double>(n) * (1.0 + std::abs(b(k))) / 2.0);
    const double eta = std::max<double>({10.0, std::sqrt(static_cast<double>(n)), c.norm()});
    IpmResult res;
    RMatrix x = xi * RMatrix::Identity(n, n);
    RMatrix s = eta * RMatrix::Identity(n, n);
    RVector y = RVector::Zero(m);
    const double bnorm = b.norm();

    auto finish = [&](SolveStatus st) {
        res.status = st;
        res.x = x;
        res.y = y;
        res.s = s;
        res.primal_objective = inner(c, x);
        res.dual_objective = b.dot(y);
        return res;
    };

    // Best iterate so far; the final iterate can drift once the gap stalls
    // at the limit of double precision.
    IpmResult best;
    double best_err = std::numeric_limits<double>::infinity();
    int since_best = 0;
    int stall = 0;
    for (int it = 0; it < opt.max_iterations; ++it) {
        res.iterations = it;
        const RVector rp = b - apply_a(x);
        const RMatrix rd = c - apply_at(y) - s;
        const double gap = inner(x, s);
        const double mu = gap / static_cast<double>(n);
        const double pobj = inner(c, x);
        const double dobj = b.dot(y);
        res.relative_gap = std::max(std::abs(gap), std::abs(pobj - dobj)) / (1.0 + std::abs(pobj) + std::abs(dobj));
        res.primal_infeasibility = rp.norm() / (1.0 + bnorm);
        res.dual_infeasibility = rd.norm() / (1.0 + c.norm());
        const double err = std::max({res.relative_gap, res.primal_infeasibility, res.dual_infeasibility});
        if (opt.trace)
            *opt.trace << "it " << it << " pobj " << pobj << " dobj " << dobj << " gap " << res.relative_gap
                       << " pinf " << res.primal_infeasibility << " dinf " << res.dual_infeasibility << '\n';
        if (err < opt.target_gap) return finish(SolveStatus::solved);
        if (err < best_err) {
            best_err = err;
            best = finish(SolveStatus::numeric_failure);
            since_best = 0;
        } else if (++since_best >= 10) {
            break;
        }
        // Primal infeasibility certificate: a dual ray with b^T y -> infinity.
        if (res.dual_infeasibility < 1e-6 && res.primal_infeasibility > 1e-6 && dobj > 1e10 * (1.0 + std::abs(pobj)))
            return finish(SolveStatus::infeasible);

        Eigen::LLT<RMatrix> sl(s);
        Eigen::LLT<RMatrix> xl(x);
        if (sl.info() != Eigen::Success || xl.info() != Eigen::Success) break;
        const RMatrix sinv = sl.solve(RMatrix::Identity(n, n));

        // Schur complement H(k, l) = <A_k, X A_l S^-1>.
        std::vector<RMatrix> g(a.size());
        for (Eigen::Index l = 0; l < m; ++l) g[static_cast<std::size_t>(l)] = x * a[static_cast<std::size_t>(l)] * sinv;
        RMatrix h(m, m);
        for (Eigen::Index k = 0; k < m; ++k)
            for (Eigen::Index l = 0; l < m; ++l) h(k, l) = inner(a[static_cast<std::size_t>(k)], g[static_cast<std::size_t>(l)]);
        h = sym(h);
        Eigen::LLT<RMatrix> hl(h);
        Eigen::LDLT<RMatrix> hldlt;
        const bool use_llt = hl.info() == Eigen::Success;
        if (!use_llt) hldlt.compute(h + 1e-14 * h.diagonal().cwiseAbs().maxCoeff() * RMatrix::Identity(m, m));
        auto solve_h = [&](const RVector& r) -> RVector { return use_llt ? RVector(hl.solve(r)) : RVector(hldlt.solve(r)); };

        const RVector a_x_rd = apply_a(x * rd * sinv);
        const RVector a_x = apply_a(x);
        const RVector a_sinv = apply_a(sinv);

        // Predictor.
        RVector dy = solve_h(rp + a_x + a_x_rd);
        RMatrix ds = rd - apply_at(dy);
        RMatrix dx = sym(-x - x * ds * sinv);
        const double ap = std::min(1.0, detail::max_step(xl, dx));
        const double ad = std::min(1.0, detail::max_step(sl, ds));
        const double mu_aff = inner(x + ap * dx, s + ad * ds) / static_cast<double>(n);
        double sigma = std::pow(std::max(0.0, mu_aff) / mu, 3.0);
        sigma = std::clamp(sigma, 0.0, 1.0);

        // Corrector.
        const RMatrix second = dx * ds * sinv;
        RVector dy2 = solve_h(rp - sigma * mu * a_sinv + a_x + apply_a(second) + a_x_rd);
        RMatrix ds2 = rd - apply_at(dy2);
        RMatrix dx2 = sym(sigma * mu * sinv - x - second - x * ds2 * sinv);

        const double gamma = 0.9 + 0.09 * std::min(ap, ad);
        const double alpha = std::min(1.0, gamma * detail::max_step(xl, dx2));
        const double beta = std::min(1.0, gamma * detail::max_step(sl, ds2));
        if (alpha < 1e-12 && beta < 1e-12) {
            if (++stall >= 3) break;
        } else {
            stall = 0;
        }
        x = sym(x + alpha * dx2);
        y = y + beta * dy2;
        s = sym(s + beta * ds2);
    }
    if (!std::isfinite(best_err)) return finish(SolveStatus::numeric_failure);
    best.iterations = res.iterations;
    best.status = best_err <= opt.accept_gap ? SolveStatus::solved : SolveStatus::numeric_failure;
    return best;
}

// ---------------------------------------------------------------------------
// Lifted solve

struct LiftedSolution {
    CVector w;
    CMatrix W;
    double objective = 0.0;   // Tr(W P~)
    double rank1_gap = 1.0;   // lambda_2(W) / lambda_1(W)
    SolveStatus status = SolveStatus::numeric_failure;
    int iterations = 0;
    double relative_gap = 1.0;
    double max_residual = 0.0;  // worst original constraint residual, relative
    int facial_reductions = 0;
};

inline double rank1_gap(const CMatrix& w_lift) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (w_lift + w_lift.adjoint()), Eigen::EigenvaluesOnly);
    const RVector& ev = es.eigenvalues();  // ascending
    const Eigen::Index n = ev.size();
    if (n == 0 || ev(n - 1) <= 0.0) return 1.0;
    if (n == 1) return 0.0;
    return std::max(0.0, ev(n - 2)) / ev(n - 1);
}

inline double rank1_gap(const LiftedSolution& sol) { return rank1_gap(sol.W); }

struct Rank1Thresholds {
    double eigen_ratio = 1e-6;
    double frobenius = 1e-5;
};

// W is numerically w w^H.
inline bool certify_rank1(const LiftedSolution& sol, const Rank1Thresholds& th = {}) {
    if (sol.status != SolveStatus::solved) return false;
    const double wn = sol.W.norm();
    if (wn == 0.0) return false;
    const double dev = (sol.W - sol.w * sol.w.adjoint()).norm() / wn;
    return rank1_gap(sol.W) <= th.eigen_ratio && dev <= th.frobenius;
}

// Minimum-norm filter meeting L^H w = f.
inline CVector min_norm_solution(const CMatrix& lambda, const CVector& f) {
    return lambda * (lambda.adjoint() * lambda).ldlt().solve(f);
}

// Joint minimum-variance distortionless filter for the problem's P~.
inline CVector reference_filter(const LiftedProblem& pb) {
    Eigen::LDLT<CMatrix> pl(pb.p_tilde);
    const CMatrix pl_l = pl.solve(pb.lambda_a);
    const CMatrix g = pb.lambda_a.adjoint() * pl_l;
    return pl_l * g.ldlt().solve(pb.f_a);
}

inline LiftedSolution solve(const LiftedProblem& pb, const SolverOptions& opt = {}) {
    const int d = pb.dim();
    const int n = pb.lifted_dim();

    // Whitening change of variables w = T v with T = sqrt(p_ref) P~^{-1/2},
    // p_ref the joint minimum-variance objective: the objective becomes
    // Tr(V) >= 1 and the lifted matrix is O(1).
    Eigen::SelfAdjointEigenSolver<CMatrix> pes(0.5 * (pb.p_tilde + pb.p_tilde.adjoint()));
    const RVector& pev = pes.eigenvalues();
    const double floor = std::max(pev.maxCoeff(), 1e-300) * 1e-14;
    const RVector inv_sqrt = pev.cwiseMax(floor).cwiseSqrt().cwiseInverse();
    CMatrix t = pes.eigenvectors() * inv_sqrt.asDiagonal() * pes.eigenvectors().adjoint();
    CVector wref = reference_filter(pb);
    if (!wref.allFinite() || wref.norm() == 0.0) wref = min_norm_solution(pb.lambda_a, pb.f_a);
    double pref = (wref.adjoint() * pb.p_tilde * wref)(0).real();
    if (!(pref > 0.0) || !std::isfinite(pref)) pref = 1.0;
    t *= std::sqrt(pref);
    CMatrix tfull = CMatrix::Zero(n, n);
    tfull.topLeftCorner(d, d) = t;
    tfull(d, d) = 1.0;
    auto congruence = [&](const CMatrix& a) {
        CMatrix r = tfull.adjoint() * a * tfull;
        return CMatrix(0.5 * (r + r.adjoint()));
    };

    std::vector<HermitianConstraint> cons = hermitian_constraints(pb);
    for (HermitianConstraint& c : cons) c.h = congruence(c.h);
    const CMatrix obj = congruence(pb.objective_matrix()) / pref;

    LiftedSolution sol;
    Presolved ps = presolve(obj, cons);
    sol.facial_reductions = ps.facial_reductions;
    if (ps.infeasible) {
        sol.status = SolveStatus::infeasible;
        return sol;
    }
    IpmResult ipm = solve_real_sdp(embed_program(ps.objective, ps.cons), opt);
    sol.status = ipm.status;
    sol.iterations = ipm.iterations;
    sol.relative_gap = ipm.relative_gap;

    const CMatrix y = unembed(ipm.x);
    const CMatrix zb = ps.basis * y * ps.basis.adjoint();
    CMatrix z = tfull * zb * tfull.adjoint();
    z = (0.5 * (z + z.adjoint())).eval();
    sol.w = z.col(d).head(d);
    sol.W = z.topLeftCorner(d, d);
    sol.objective = (pb.p_tilde * sol.W).trace().real();
    sol.rank1_gap = rank1_gap(sol.W);

    double worst = 0.0;
    for (const LiftedConstraint& c : pb.constraints()) {
        const double scale = c.a.norm() * z.norm() + std::abs(c.rhs);
        worst = std::max(worst, std::abs(evaluate(c, z) - c.rhs) / std::max(scale, 1e-300));
    }
    sol.max_residual = worst;
    return sol;
}

// ---------------------------------------------------------------------------
// Brute-force oracle for the un-relaxed problem on small instances

struct OracleOptions {
    int starts = 64;
    std::uint64_t seed = 1;
    int descent_iterations = 400;
    double feasibility_tolerance = 1e-6;
    std::vector<CVector> seeds;  // extra starting filters (projected onto the linear constraints)
};

struct OracleResult {
    CVector w;
    double objective = std::numeric_limits<double>::infinity();  // upper bound on p1*
    double residual = std::numeric_limits<double>::infinity();
    bool feasible = false;
    int feasible_starts = 0;
};

namespace detail {

// Real quadratic q(x) = z^H Q z + 2 Re(g^H z) + k over z = x_re + i x_im.
struct RealQuadratic {
    CMatrix q;
    CVector g;
    double k = 0.0;

    double value(const CVector& z) const { return (z.adjoint() * q * z)(0).real() + 2.0 * g.dot(z).real() + k; }
    // Gradient with respect to (Re z, Im z).
    RVector gradient(const CVector& z) const {
        const CVector gc = 2.0 * (q * z + g);
        RVector out(2 * z.size());
        out << gc.real(), gc.imag();
        return out;
    }
    // Hessian with respect to (Re z, Im z).
    RMatrix hessian() const { return embed(q + q.adjoint()); }
};

inline CVector to_complex(const RVector& x) {
    const Eigen::Index d = x.size() / 2;
    CVector z(d);
    z.real() = x.head(d);
    z.imag() = x.tail(d);
    return z;
}
inline RVector to_real(const CVector& z) {
    RVector x(2 * z.size());
    x << z.real(), z.imag();
    return x;
}

inline RealQuadratic restrict_quadratic(const CMatrix& h, const CVector& wp, const CMatrix& nb) {
    RealQuadratic rq;
    rq.q = nb.adjoint() * h * nb;
    rq.q = (0.5 * (rq.q + rq.q.adjoint())).eval();
    rq.g = nb.adjoint() * (0.5 * (h + h.adjoint())) * wp;
    rq.k = (wp.adjoint() * h * wp)(0).real();
    return rq;
}

}  // namespace detail

inline double oracle_residual(const LiftedProblem& pb, const CVector& w) {
    double res = (pb.lambda_a.adjoint() * w - pb.f_a).norm() / std::max(pb.f_a.norm(), 1e-300);
    const double wn2 = w.squaredNorm();
    for (const CMatrix& mi : pb.m) {
        const double mnorm = Eigen::SelfAdjointEigenSolver<CMatrix>(mi, Eigen::EigenvaluesOnly).eigenvalues().cwiseAbs().maxCoeff();
        res = std::max(res, std::abs((w.adjoint() * mi * w)(0).real()) / std::max(wn2 * mnorm, 1e-300));
    }
    return res;
}

// Multistart local descent over the null space of the distortionless
// constraints, restricted to the quadratic equality manifold.
inline OracleResult qcqp_oracle(const LiftedProblem& pb, const OracleOptions& opt = {}) {
    using detail::RealQuadratic;
    const int d2 = pb.dim();
    if (d2 > 6 || pb.m.size() > 2)
        throw InputError("qcqp_oracle: only instances with M <= 3 and r <= 2 are supported");
    const int r = static_cast<int>(pb.m.size());

    const CVector wp = min_norm_solution(pb.lambda_a, pb.f_a);
    Eigen::JacobiSVD<CMatrix> svd(pb.lambda_a, Eigen::ComputeFullU);
    const CMatrix nb = svd.matrixU().rightCols(d2 - 2);
    const Eigen::Index dim = 2 * nb.cols();

    const RealQuadratic fobj = detail::restrict_quadratic(pb.p_tilde, wp, nb);
    std::vector<RealQuadratic> qs;
    for (const CMatrix& mi : pb.m) qs.push_back(detail::restrict_quadratic(mi, wp, nb));

    auto filter_of = [&](const RVector& x) -> CVector { return wp + nb * detail::to_complex(x); };
    auto constraint_values = [&](const RVector& x) {
        RVector q(r);
        const CVector z = detail::to_complex(x);
        for (int i = 0; i < r; ++i) q(i) = qs[static_cast<std::size_t>(i)].value(z);
        return q;
    };
    auto jacobian = [&](const RVector& x) {
        RMatrix j(r, dim);
        const CVector z = detail::to_complex(x);
        for (int i = 0; i < r; ++i) j.row(i) = qs[static_cast<std::size_t>(i)].gradient(z).transpose();
        return j;
    };
    auto qscale = [&](const RVector& x) {
        const double wn2 = filter_of(x).squaredNorm();
        double s = 0.0;
        for (const CMatrix& mi : pb.m) s = std::max(s, mi.norm());
        return std::max(wn2 * s, 1e-300);
    };
    // Gauss-Newton projection onto q(x) = 0.
    auto project = [&](RVector x) -> std::optional<RVector> {
        if (r == 0) return x;
        for (int it = 0; it < 60; ++it) {
            const RVector q = constraint_values(x);
            if (q.cwiseAbs().maxCoeff() <= 1e-15 * qscale(x)) return x;
            const RMatrix j = jacobian(x);
            const RMatrix jjt = j * j.transpose();
            Eigen::LDLT<RMatrix> f(jjt);
            if (f.info() != Eigen::Success || jjt.norm() == 0.0) return std::nullopt;
            x -= j.transpose() * f.solve(q);
            if (!x.allFinite()) return std::nullopt;
        }
        const RVector q = constraint_values(x);
        if (q.cwiseAbs().maxCoeff() <= 1e-12 * qscale(x)) return x;
        return std::nullopt;
    };
    auto tangent = [&](const RVector& x, const RVector& g) -> RVector {
        if (r == 0) return g;
        const RMatrix j = jacobian(x);
        const RMatrix jjt = j * j.transpose();
        return g - j.transpose() * jjt.ldlt().solve(j * g);
    };
    auto objective = [&](const RVector& x) { return fobj.value(detail::to_complex(x)); };

    // Projected gradient descent with Armijo backtracking, then Newton on the
    // KKT system (all functions are quadratics, so the Lagrangian Hessian is
    // constant for a fixed multiplier).
    auto local_descent = [&](RVector x) -> std::optional<RVector> {
        auto px = project(x);
        if (!px) return std::nullopt;
        x = *px;
        double fx = objective(x);
        double step = 1.0 / std::max(fobj.hessian().norm(), 1e-300);
        for (int it = 0; it < opt.descent_iterations; ++it) {
            const RVector g = tangent(x, fobj.gradient(detail::to_complex(x)));
            const double gn2 = g.squaredNorm();
            if (gn2 <= 1e-26 * (1.0 + fx * fx)) break;
            bool accepted = false;
            for (int ls = 0; ls < 40; ++ls) {
                auto cand = project(x - step * g);
                if (cand) {
                    const double fc = objective(*cand);
                    if (fc <= fx - 1e-4 * step * gn2) {
                        x = *cand;
                        fx = fc;
                        accepted = true;
                        step *= 2.0;
                        break;
                    }
                }
                step *= 0.5;
            }
            if (!accepted) break;
        }
        // KKT Newton polish.
        RVector lam = RVector::Zero(r);
        if (r > 0) {
            const RMatrix j = jacobian(x);
            lam = -(j * j.transpose()).ldlt().solve(j * fobj.gradient(detail::to_complex(x)));
        }
        for (int it = 0; it < 30; ++it) {
            const CVector z = detail::to_complex(x);
            RMatrix hl = fobj.hessian();
            for (int i = 0; i < r; ++i) hl += lam(i) * qs[static_cast<std::size_t>(i)].hessian();
            const RMatrix j = jacobian(x);
            RMatrix kkt = RMatrix::Zero(dim + r, dim + r);
            kkt.topLeftCorner(dim, dim) = hl;
            kkt.topRightCorner(dim, r) = j.transpose();
            kkt.bottomLeftCorner(r, dim) = j;
            RVector rhs(dim + r);
            rhs.head(dim) = -(fobj.gradient(z) + j.transpose() * lam);
            rhs.tail(r) = -constraint_values(x);
            if (rhs.norm() <= 1e-14 * (1.0 + std::abs(fx))) break;
            const RVector step_kkt = kkt.fullPivLu().solve(rhs);
            if (!step_kkt.allFinite()) break;
            auto cand = project(x + step_kkt.head(dim));
            if (!cand) break;
            const double fc = objective(*cand);
            if (fc > fx + 1e-12 * (1.0 + std::abs(fx))) break;
            x = *cand;
            fx = fc;
            lam += step_kkt.tail(r);
        }
        return x;
    };

    std::vector<RVector> starts;
    for (const CVector& s : opt.seeds) {
        if (s.size() != d2) continue;
        starts.push_back(detail::to_real(nb.adjoint() * (s - wp)));
    }
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double spread = std::max(reference_filter(pb).norm(), wp.norm());
    for (int s = 0; s < opt.starts; ++s) {
        RVector x(dim);
        for (Eigen::Index i = 0; i < dim; ++i) x(i) = gauss(rng);
        // Mix of scales so starts explore both near and far from the origin.
        starts.push_back(x * spread * std::pow(4.0, (s % 4) - 1.5));
    }

    OracleResult best;
    for (const RVector& x0 : starts) {
        auto x = local_descent(x0);
        if (!x) continue;
        const CVector w = filter_of(*x);
        const double resid = oracle_residual(pb, w);
        const double obj = (w.adjoint() * pb.p_tilde * w)(0).real();
        if (resid < opt.feasibility_tolerance) {
            ++best.feasible_starts;
            if (!best.feasible || obj < best.objective) {
                best.w = w;
                best.objective = obj;
                best.residual = resid;
                best.feasible = true;
            }
        } else if (!best.feasible && resid < best.residual) {
            best.w = w;
            best.residual = resid;
        }
    }
    return best;
}

}  // namespace ildbf::sdp
