// sphere.hpp
// Rigid-sphere head model: spherical Hankel/Legendre series for the surface
// pressure, the distance variation function (DVF) and the near-field ILD
// scaling factor derived from it.

#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ildbf/common.hpp"

namespace ildbf::sphere {

struct SphereParams {
    double radius = 0.0875;           // m
    double speed_of_sound = 343.0;    // m/s
    double ear_azimuth_deg = 100.0;   // ears at -ear (left) and +ear (right)
    double series_tolerance = 1e-12;
    int max_terms = 200;

    void validate() const {
        if (!(radius > 0.0)) throw DomainError("sphere radius must be positive");
        if (!(speed_of_sound > 0.0)) throw DomainError("speed of sound must be positive");
        if (!(series_tolerance > 0.0 && series_tolerance < 1e-6))
            throw DomainError("series tolerance must lie in (0, 1e-6)");
        if (max_terms < 50) throw DomainError("max_terms must be at least 50");
    }

    double wavenumber(double f_hz) const { return 2.0 * kPi * f_hz / speed_of_sound; }
};

// Legendre polynomial P_m(x) by the three-term recurrence.
inline double legendre(int m, double x) {
    if (m < 0) throw DomainError("legendre: negative degree");
    if (!(std::abs(x) <= 1.0)) throw DomainError("legendre: |x| > 1");
    if (m == 0) return 1.0;
    double p_prev = 1.0, p = x;
    for (int n = 1; n < m; ++n) {
        double next = ((2.0 * n + 1.0) * x * p - n * p_prev) / (n + 1.0);
        p_prev = p;
        p = next;
    }
    return p;
}

// Spherical Bessel functions j_0..j_n. Upward recurrence is only stable while
// the order stays below the argument, so larger orders use Miller's downward
// recurrence normalised with sum (2m+1) j_m^2 = 1.
inline std::vector<double> spherical_bessel_j_sequence(double x, int n) {
    if (!(x > 0.0)) throw DomainError("spherical Bessel: argument must be positive");
    std::vector<double> j(static_cast<std::size_t>(n) + 1, 0.0);
    j[0] = std::sin(x) / x;
    if (n == 0) return j;
    const double j1 = std::sin(x) / (x * x) - std::cos(x) / x;
    if (n <= x) {
        j[1] = j1;
        for (int m = 1; m < n; ++m) j[m + 1] = (2.0 * m + 1.0) / x * j[m] - j[m - 1];
        return j;
    }
    const int start = n + 20 + static_cast<int>(std::sqrt(40.0 * n));
    double above = 0.0, cur = 1.0;
    std::vector<double> tmp(static_cast<std::size_t>(start) + 1, 0.0);
    tmp[start] = cur;
    for (int m = start; m > 0; --m) {
        double below = (2.0 * m + 1.0) / x * cur - above;
        above = cur;
        cur = below;
        tmp[m - 1] = cur;
        if (std::abs(cur) > 1e100) {
            for (int q = m - 1; q <= start; ++q) tmp[q] *= 1e-100;
            above *= 1e-100;
            cur *= 1e-100;
        }
    }
    double norm = 0.0;
    for (int m = start; m >= 0; --m) norm += (2.0 * m + 1.0) * tmp[m] * tmp[m];
    double scale = 1.0 / std::sqrt(norm);
    // Fix the sign against whichever closed form is better conditioned.
    if (std::abs(j[0]) >= std::abs(j1)) {
        if ((tmp[0] < 0) != (j[0] < 0)) scale = -scale;
    } else if ((tmp[1] < 0) != (j1 < 0)) {
        scale = -scale;
    }
    for (int m = 0; m <= n; ++m) j[m] = tmp[m] * scale;
    return j;
}

// Spherical Hankel functions of the first kind and their derivatives for
// orders 0..n. The neumann part grows without bound as the order exceeds the
// argument; the sequence is truncated at the first order that overflows and
// `overflow_order` records it (-1 if none).
struct HankelSequence {
    std::vector<cplx> h;
    std::vector<cplx> dh;
    int overflow_order = -1;
};

inline HankelSequence hankel1_sequence(double x, int n) {
    if (!(x > 0.0)) throw DomainError("spherical Hankel: argument must be positive");
    HankelSequence seq;
    const int top = n + 1;  // one extra order for the derivative recurrence
    std::vector<double> j = spherical_bessel_j_sequence(x, top);
    std::vector<double> y(static_cast<std::size_t>(top) + 1, 0.0);
    y[0] = -std::cos(x) / x;
    y[1] = -std::cos(x) / (x * x) - std::sin(x) / x;
    int valid = top;
    for (int m = 1; m < top; ++m) {
        y[m + 1] = (2.0 * m + 1.0) / x * y[m] - y[m - 1];
        if (!std::isfinite(y[m + 1])) {
            valid = m;
            seq.overflow_order = m + 1;
            break;
        }
    }
    // h'_m = h_{m-1} - (m+1)/x h_m, h'_0 = -h_1.
    const int last = std::min(n, valid);
    seq.h.reserve(static_cast<std::size_t>(last) + 1);
    seq.dh.reserve(static_cast<std::size_t>(last) + 1);
    for (int m = 0; m <= last; ++m) {
        cplx hm(j[m], y[m]);
        cplx dhm = (m == 0) ? -cplx(j[1], y[1])
                            : cplx(j[m - 1], y[m - 1]) - (m + 1.0) / x * hm;
        if (!std::isfinite(dhm.imag())) {
            seq.overflow_order = m;
            break;
        }
        seq.h.push_back(hm);
        seq.dh.push_back(dhm);
    }
    if (static_cast<int>(seq.h.size()) < n + 1 && seq.overflow_order < 0)
        seq.overflow_order = static_cast<int>(seq.h.size());
    return seq;
}

struct HankelValue {
    cplx value;
    cplx derivative;
};

inline HankelValue spherical_hankel1(int m, double x) {
    if (m < 0) throw DomainError("spherical Hankel: negative order");
    HankelSequence seq = hankel1_sequence(x, m);
    if (static_cast<int>(seq.h.size()) <= m) {
        std::ostringstream os;
        os << "spherical Hankel overflow at order " << seq.overflow_order << " for x = " << x;
        throw NumericError(os.str());
    }
    return {seq.h[m], seq.dh[m]};
}

// Surface pressure on a rigid sphere for a point source at distance r and
// angular separation theta (degrees) from the observation point:
//   p = -kr sum_m (2m+1) h_m(kr) / h'_m(ka) P_m(cos theta) e^{-ikr}
// Summation stops once two consecutive terms (bounded with |P_m| <= 1) fall
// below series_tolerance relative to the partial sum, past order ka.
inline cplx sphere_pressure(const SphereParams& params, double f_hz, double theta_deg,
                            double r) {
    params.validate();
    if (!(r > params.radius))
        throw GeometryError("sphere_pressure: source distance must exceed the head radius");
    if (!(f_hz > 0.0)) throw DomainError("sphere_pressure: frequency must be positive");
    const double k = params.wavenumber(f_hz);
    const double kr = k * r;
    const double ka = k * params.radius;
    const double x = std::cos(theta_deg * kPi / 180.0);
    const int n = params.max_terms - 1;
    HankelSequence far = hankel1_sequence(kr, n);
    HankelSequence surf = hankel1_sequence(ka, n);
    const int available = static_cast<int>(std::min(far.h.size(), surf.h.size()));

    cplx sum(0.0, 0.0);
    double p_prev = 0.0, p = 1.0;
    int small_run = 0;
    double last_ratio = 1.0;
    for (int m = 0; m < available; ++m) {
        if (m == 1) {
            p_prev = 1.0;
            p = x;
        } else if (m > 1) {
            double next = ((2.0 * m - 1.0) * x * p - (m - 1.0) * p_prev) / m;
            p_prev = p;
            p = next;
        }
        cplx coeff = (2.0 * m + 1.0) * far.h[m] / surf.dh[m];
        sum += coeff * p;
        double mag = std::abs(sum);
        last_ratio = mag > 0.0 ? std::abs(coeff) / mag : 1.0;
        small_run = (last_ratio < params.series_tolerance && m > ka) ? small_run + 1 : 0;
        if (small_run >= 2) return -kr * sum * std::exp(cplx(0.0, -kr));
    }
    std::ostringstream os;
    os << "sphere_pressure: series did not converge (f = " << f_hz << " Hz, r = " << r
       << " m, terms = " << available << ", achieved relative term " << last_ratio << ")";
    if (available < params.max_terms) os << "; Hankel overflow at order " << available;
    throw NumericError(os.str());
}

// Ratio of near-field to far-field surface pressure.
inline cplx dvf(const SphereParams& params, double f_hz, double theta_deg, double d_near,
                double d_far) {
    if (!(d_near > params.radius) || !(d_far > params.radius))
        throw GeometryError("dvf: distances must exceed the head radius");
    if (d_near == d_far) return {1.0, 0.0};
    cplx pn = sphere_pressure(params, f_hz, theta_deg, d_near);
    cplx pf = sphere_pressure(params, f_hz, theta_deg, d_far);
    if (std::abs(pf) < 1e-300) throw NumericError("dvf: far-field pressure vanishes");
    return pn / pf;
}

// Angular separation of a source from the left (-ear) and right (+ear) ears.
inline double left_ear_angle(const SphereParams& params, double source_azimuth_deg) {
    return azimuth_separation_deg(source_azimuth_deg, -params.ear_azimuth_deg);
}
inline double right_ear_angle(const SphereParams& params, double source_azimuth_deg) {
    return azimuth_separation_deg(source_azimuth_deg, params.ear_azimuth_deg);
}

// Near-field ILD scaling factor |DVF_L|^2 / |DVF_R|^2 (linear power ratio).
inline double dvf_ild(const SphereParams& params, double f_hz, double source_azimuth_deg,
                      double d_near, double d_far) {
    const double theta_l = left_ear_angle(params, source_azimuth_deg);
    const double theta_r = right_ear_angle(params, source_azimuth_deg);
    if (theta_l == theta_r || d_near == d_far) return 1.0;
    cplx dl = dvf(params, f_hz, theta_l, d_near, d_far);
    cplx dr = dvf(params, f_hz, theta_r, d_near, d_far);
    return std::norm(dl) / std::norm(dr);
}

// Interaural level difference (dB, left over right) predicted by the sphere
// model for a source at the given azimuth and distance.
inline double sphere_ild_db(const SphereParams& params, double f_hz, double source_azimuth_deg,
                            double r) {
    cplx pl = sphere_pressure(params, f_hz, left_ear_angle(params, source_azimuth_deg), r);
    cplx pr = sphere_pressure(params, f_hz, right_ear_angle(params, source_azimuth_deg), r);
    return db10(std::norm(pl) / std::norm(pr));
}

// Dense DVF_ILD table over (frequency, azimuth, distance). Queries are
// bilinear in (azimuth, frequency) at one of the tabulated distances.
struct DvfTable {
    std::vector<double> freqs_hz;
    std::vector<double> azimuths_deg;
    std::vector<double> distances_m;
    double far_distance_m = 1.0;
    std::vector<double> values;  // [f][azimuth][distance], linear power ratio

    double& at(std::size_t fi, std::size_t ai, std::size_t di) {
        return values[(fi * azimuths_deg.size() + ai) * distances_m.size() + di];
    }
    double at(std::size_t fi, std::size_t ai, std::size_t di) const {
        return values[(fi * azimuths_deg.size() + ai) * distances_m.size() + di];
    }

    std::size_t distance_index(double d) const {
        for (std::size_t i = 0; i < distances_m.size(); ++i)
            if (std::abs(distances_m[i] - d) <= 1e-9 * std::max(1.0, d)) return i;
        std::ostringstream os;
        os << "DVF table has no entry for distance " << d << " m";
        throw RangeError(os.str());
    }

    double query(double f_hz, double azimuth_deg, double distance_m) const {
        const std::size_t di = distance_index(distance_m);
        auto bracket = [](const std::vector<double>& grid, double x, const char* what) {
            if (grid.empty() || x < grid.front() - 1e-9 || x > grid.back() + 1e-9) {
                std::ostringstream os;
                os << "DVF table query outside the " << what << " range: " << x;
                throw RangeError(os.str());
            }
            if (grid.size() == 1) return std::pair<std::size_t, double>{0, 0.0};
            auto it = std::upper_bound(grid.begin(), grid.end(), x);
            std::size_t hi = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - grid.begin(), 1), grid.size() - 1);
            const std::size_t lo = hi - 1;
            const double t = std::clamp((x - grid[lo]) / (grid[hi] - grid[lo]), 0.0, 1.0);
            return std::pair<std::size_t, double>{lo, t};
        };
        const auto [fi, tf] = bracket(freqs_hz, f_hz, "frequency");
        const auto [ai, ta] = bracket(azimuths_deg, azimuth_deg, "azimuth");
        const std::size_t fj = std::min(fi + 1, freqs_hz.size() - 1);
        const std::size_t aj = std::min(ai + 1, azimuths_deg.size() - 1);
        // Exact node values are returned untouched.
        auto lerp = [](double a, double b, double t) { return t == 0.0 ? a : (t == 1.0 ? b : a + t * (b - a)); };
        const double v0 = lerp(at(fi, ai, di), at(fi, aj, di), ta);
        const double v1 = lerp(at(fj, ai, di), at(fj, aj, di), ta);
        return lerp(v0, v1, tf);
    }

    void write_csv(std::ostream& out) const {
        out << "f_hz,azimuth_deg,distance_m,c_linear,c_db\n";
        out << std::setprecision(17);
        for (std::size_t fi = 0; fi < freqs_hz.size(); ++fi)
            for (std::size_t ai = 0; ai < azimuths_deg.size(); ++ai)
                for (std::size_t di = 0; di < distances_m.size(); ++di) {
                    const double v = at(fi, ai, di);
                    out << freqs_hz[fi] << ',' << azimuths_deg[ai] << ',' << distances_m[di] << ',' << v << ','
                        << db10(v) << '\n';
                }
    }

    // Rebuilds a table from write_csv output. The grid is recovered from the
    // distinct coordinates in file order.
    static DvfTable read_csv(std::istream& in, double far_distance_m = 1.0) {
        std::string line;
        if (!std::getline(in, line) || line.rfind("f_hz,azimuth_deg,distance_m,c_linear", 0) != 0)
            throw InputError("DVF table CSV: missing header");
        struct Row {
            double f, az, d, c;
        };
        std::vector<Row> rows;
        auto push_unique = [](std::vector<double>& v, double x) {
            if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
        };
        DvfTable t;
        t.far_distance_m = far_distance_m;
        int lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::istringstream ls(line);
            Row r{};
            char c1 = 0, c2 = 0, c3 = 0;
            if (!(ls >> r.f >> c1 >> r.az >> c2 >> r.d >> c3 >> r.c) || c1 != ',' || c2 != ',' || c3 != ',') {
                std::ostringstream os;
                os << "DVF table CSV: malformed row at line " << lineno;
                throw InputError(os.str());
            }
            rows.push_back(r);
            push_unique(t.freqs_hz, r.f);
            push_unique(t.azimuths_deg, r.az);
            push_unique(t.distances_m, r.d);
        }
        std::sort(t.freqs_hz.begin(), t.freqs_hz.end());
        std::sort(t.azimuths_deg.begin(), t.azimuths_deg.end());
        if (rows.size() != t.freqs_hz.size() * t.azimuths_deg.size() * t.distances_m.size())
            throw InputError("DVF table CSV: grid is incomplete");
        t.values.assign(rows.size(), 0.0);
        auto index_of = [](const std::vector<double>& v, double x) {
            return static_cast<std::size_t>(std::find(v.begin(), v.end(), x) - v.begin());
        };
        for (const Row& r : rows) {
            if (!(r.c > 0.0)) throw InputError("DVF table CSV: non-positive scaling factor");
            t.at(index_of(t.freqs_hz, r.f), index_of(t.azimuths_deg, r.az), index_of(t.distances_m, r.d)) = r.c;
        }
        return t;
    }
};

inline constexpr double kDvfTableMaxHz = 800.0;

inline DvfTable dvf_ild_table(const SphereParams& params, std::vector<double> freqs_hz,
                              std::vector<double> azimuths_deg, std::vector<double> distances_m,
                              double far_distance_m = 1.0, double max_freq_hz = kDvfTableMaxHz) {
    params.validate();
    if (freqs_hz.empty() || azimuths_deg.empty() || distances_m.empty())
        throw RangeError("DVF table: empty grid");
    std::sort(freqs_hz.begin(), freqs_hz.end());
    std::sort(azimuths_deg.begin(), azimuths_deg.end());
    if (freqs_hz.front() <= 0.0) throw RangeError("DVF table: frequencies must be positive");
    if (freqs_hz.back() > max_freq_hz) {
        std::ostringstream os;
        os << "DVF table: frequency " << freqs_hz.back() << " Hz exceeds the " << max_freq_hz << " Hz cap";
        throw RangeError(os.str());
    }
    if (std::adjacent_find(freqs_hz.begin(), freqs_hz.end()) != freqs_hz.end() ||
        std::adjacent_find(azimuths_deg.begin(), azimuths_deg.end()) != azimuths_deg.end())
        throw RangeError("DVF table: duplicate grid points");
    for (double d : distances_m)
        if (!(d > params.radius)) throw GeometryError("DVF table: distances must exceed the head radius");
    if (!(far_distance_m > params.radius)) throw GeometryError("DVF table: far distance must exceed the head radius");

    DvfTable t;
    t.freqs_hz = std::move(freqs_hz);
    t.azimuths_deg = std::move(azimuths_deg);
    t.distances_m = std::move(distances_m);
    t.far_distance_m = far_distance_m;
    t.values.assign(t.freqs_hz.size() * t.azimuths_deg.size() * t.distances_m.size(), 1.0);
    for (std::size_t fi = 0; fi < t.freqs_hz.size(); ++fi)
        for (std::size_t ai = 0; ai < t.azimuths_deg.size(); ++ai)
            for (std::size_t di = 0; di < t.distances_m.size(); ++di)
                t.at(fi, ai, di) = dvf_ild(params, t.freqs_hz[fi], t.azimuths_deg[ai], t.distances_m[di], far_distance_m);
    return t;
}

// Evenly spaced grid lo, lo + step, ..., up to hi inclusive.
inline std::vector<double> linear_grid(double lo, double hi, double step) {
    std::vector<double> g;
    const long n = std::lround(std::floor((hi - lo) / step + 1e-9));
    for (long i = 0; i <= n; ++i) g.push_back(lo + step * static_cast<double>(i));
    return g;
}

}  // namespace ildbf::sphere
