// Binaural cue errors and output noise power.

#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "ildbf/metrics.hpp"

using namespace ildbf;
using namespace ildbf::metrics;

namespace {

CVector random_vector(int m, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    CVector v(m);
    for (int j = 0; j < m; ++j) v(j) = cplx(g(rng), g(rng));
    return v;
}

beamform::StackedFilter filter_with(int m, const std::vector<double>& freqs, const CVector& w, int r = 0) {
    beamform::StackedFilter f;
    f.method = "test";
    f.num_mics = m;
    f.freqs_hz = freqs;
    f.w.assign(freqs.size(), w);
    f.status.assign(freqs.size(), beamform::BinStatus::closed_form);
    f.c.assign(freqs.size(), std::vector<double>(r, 1.0));
    return f;
}

// Passes the left reference to the left output and the right reference to
// the right output.
CVector pass_through(int m, RefMics refs) {
    CVector w = CVector::Zero(2 * m);
    w(refs.left) = 1.0;
    w(m + refs.right) = 1.0;
    return w;
}

}  // namespace

TEST(CueErrors, WorkedValues) {
    EXPECT_DOUBLE_EQ(ild_err(cplx(2.0, 0.0), cplx(1.0, 0.0)), 3.0);
    EXPECT_DOUBLE_EQ(ild_err(cplx(2.0, 0.0), cplx(1.0, 0.0), 4.0), 0.0);
    EXPECT_DOUBLE_EQ(ipd_err(cplx(0.0, 1.0), cplx(1.0, 0.0)), 0.5);
    EXPECT_NEAR(ipd_err(std::polar(1.0, kPi - 0.01), std::polar(1.0, -kPi + 0.01)), 0.02 / kPi, 1e-12);
    EXPECT_NEAR(ipd_err(std::polar(1.0, 3.0), std::polar(1.0, -3.0)), (2.0 * kPi - 6.0) / kPi, 1e-12);
    EXPECT_NEAR(ipd_err(std::polar(1.0, kPi / 2), std::polar(1.0, -kPi / 2)), 1.0, 1e-12);
}

TEST(CueErrors, SymmetricInArguments) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 100; ++t) {
        const CVector v = random_vector(2, rng);
        EXPECT_NEAR(ild_err(v(0), v(1)), ild_err(v(1), v(0)), 1e-12 * (1.0 + std::norm(v(0)) + std::norm(v(1))));
        EXPECT_NEAR(ipd_err(v(0), v(1)), ipd_err(v(1), v(0)), 1e-12);
        EXPECT_GE(ipd_err(v(0), v(1)), 0.0);
        EXPECT_LE(ipd_err(v(0), v(1)), 1.0);
    }
}

TEST(CueErrors, CommonRotationInvariance) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-kPi, kPi);
    for (int t = 0; t < 100; ++t) {
        const CVector v = random_vector(2, rng);
        const cplx rot = std::polar(1.0, u(rng));
        EXPECT_NEAR(ipd_err(v(0) * rot, v(1) * rot), ipd_err(v(0), v(1)), 1e-12);
        EXPECT_NEAR(ild_err(v(0) * rot, v(1) * rot), ild_err(v(0), v(1)), 1e-12 * (1.0 + std::norm(v(0))));
    }
}

TEST(CueErrors, DecibelConversionAndFloor) {
    EXPECT_EQ(to_db_floor(0.0), kFloorDb);
    EXPECT_EQ(to_db_floor(-1.0), kFloorDb);
    EXPECT_EQ(to_db_floor(1e-40), kFloorDb);
    EXPECT_NEAR(to_db_floor(0.01), -20.0, 1e-12);
    EXPECT_FALSE(itf(1.0, 0.0));
    EXPECT_EQ(*itf(cplx(2.0, 2.0), cplx(0.0, 2.0)), cplx(1.0, -1.0));
}

TEST(Cues, ItdMatchesIpdOverFrequency) {
    std::mt19937_64 rng(3);
    const RefMics refs{3, 0};
    const CVector atf = random_vector(4, rng), w = random_vector(8, rng);
    for (double f : {62.5, 437.5, 3000.0}) {
        const BinauralCues c = cues_for(w.head(4), w.tail(4), atf, refs, f);
        ASSERT_TRUE(c.defined);
        EXPECT_NEAR(c.itd_in * 2.0 * kPi * f, c.ipd_in, 1e-12);
        EXPECT_NEAR(c.itd_out * 2.0 * kPi * f, c.ipd_out, 1e-12);
        EXPECT_NEAR(c.ild_in, std::norm(atf(3) / atf(0)), 1e-12 * c.ild_in);
    }
    EXPECT_EQ(cues_for(w.head(4), w.tail(4), atf, refs, 0.0).itd_in, 0.0);
}

TEST(Summary, PassThroughHasZeroErrorAtFloor) {
    std::mt19937_64 rng(4);
    const RefMics refs{1, 0};
    const std::vector<double> freqs{0.0, 250.0, 500.0, 750.0, 1000.0};
    scene::AtfSet atfs;
    atfs.freqs_hz = freqs;
    atfs.interferers.resize(1);
    for (std::size_t k = 0; k < freqs.size(); ++k) {
        atfs.target.push_back(random_vector(2, rng));
        atfs.interferers[0].push_back(random_vector(2, rng));
    }
    const beamform::StackedFilter f = filter_with(2, freqs, pass_through(2, refs), 1);
    const ErrorReport rep = lower_band_summary(compute_cues(f, atfs, refs), f, 800.0);
    ASSERT_EQ(rep.sources.size(), 2u);
    for (const SourceError& e : rep.sources) {
        EXPECT_EQ(e.ild_err_db, kFloorDb);
        EXPECT_EQ(e.ipd_err_db, kFloorDb);
        EXPECT_EQ(e.bins_included, 3);
    }
    EXPECT_FALSE(rep.empty);
}

TEST(Summary, OnlySolvedLowerBandBinsCount) {
    std::mt19937_64 rng(5);
    const RefMics refs{1, 0};
    const std::vector<double> freqs{0.0, 250.0, 500.0, 750.0, 1000.0};
    scene::AtfSet atfs;
    atfs.freqs_hz = freqs;
    for (std::size_t k = 0; k < freqs.size(); ++k) atfs.target.push_back(random_vector(2, rng));
    // Left output doubled: ILD error 3|ITF_in|^2 per bin, IPD error 0.
    CVector w = pass_through(2, refs);
    w(refs.left) = 2.0;
    beamform::StackedFilter f = filter_with(2, freqs, w);
    f.status[2] = beamform::BinStatus::fallback_rank;
    const CueTable cues = compute_cues(f, atfs, refs);
    const ErrorReport rep = lower_band_summary(cues, f, 800.0);
    const SourceError& e = rep.sources[0];
    EXPECT_EQ(e.bins_included, 2);
    EXPECT_EQ(e.bins_excluded, 1);
    const double expected = 0.5 * (3.0 * std::norm(atfs.target[1](1) / atfs.target[1](0)) +
                                   3.0 * std::norm(atfs.target[3](1) / atfs.target[3](0)));
    EXPECT_NEAR(e.ild_err_mean, expected, 1e-12 * expected);
    EXPECT_NEAR(e.ild_err_db, 10.0 * std::log10(expected), 1e-10);
    EXPECT_EQ(e.ipd_err_db, kFloorDb);
}

TEST(Summary, UndefinedCuesAreExcluded) {
    const RefMics refs{1, 0};
    const std::vector<double> freqs{0.0, 250.0, 500.0};
    scene::AtfSet atfs;
    atfs.freqs_hz = freqs;
    atfs.target.assign(3, CVector::Ones(2));
    CVector w = pass_through(2, refs);
    beamform::StackedFilter f = filter_with(2, freqs, w);
    f.w[1](2) = 0.0;  // right output of bin 1 vanishes
    const ErrorReport rep = lower_band_summary(compute_cues(f, atfs, refs), f, 800.0);
    EXPECT_EQ(rep.sources[0].bins_undefined, 1);
    EXPECT_EQ(rep.sources[0].bins_included, 1);
}

TEST(Summary, EmptyWhenNoBinQualifies) {
    const RefMics refs{1, 0};
    scene::AtfSet atfs;
    atfs.freqs_hz = {0.0, 1000.0};
    atfs.target.assign(2, CVector::Ones(2));
    const beamform::StackedFilter f = filter_with(2, atfs.freqs_hz, pass_through(2, refs));
    EXPECT_TRUE(lower_band_summary(compute_cues(f, atfs, refs), f, 800.0).empty);
}

TEST(NoisePowerTest, PassThroughIsZeroDb) {
    std::mt19937_64 rng(6);
    const RefMics refs{3, 0};
    const std::vector<double> freqs{0.0, 100.0, 200.0};
    stft::StftFrames fr = stft::zero_frames(4, 4, 10);
    for (CMatrix& b : fr.bins)
        for (int l = 0; l < 10; ++l) b.col(l) = random_vector(4, rng);
    const beamform::StackedFilter f = filter_with(4, freqs, pass_through(4, refs));
    const NoisePower np = output_noise_power(f, fr, refs);
    EXPECT_NEAR(np.output_db, 0.0, 1e-12);
    EXPECT_EQ(np.bins, 3);
    EXPECT_EQ(output_noise_power(f, fr, refs, 50.0, 150.0).bins, 1);
}

TEST(NoisePowerTest, HalvedFilterIsMinusSixDbAndOrdersMethods) {
    std::mt19937_64 rng(7);
    const RefMics refs{1, 0};
    const std::vector<double> freqs{0.0, 100.0, 200.0};
    stft::StftFrames fr = stft::zero_frames(4, 2, 20);
    scene::CpsdSet cp;
    for (CMatrix& b : fr.bins) {
        for (int l = 0; l < 20; ++l) b.col(l) = random_vector(2, rng);
        cp.noise.push_back(b * b.adjoint() / 20.0);
    }
    const beamform::StackedFilter full = filter_with(2, freqs, pass_through(2, refs));
    const beamform::StackedFilter half = filter_with(2, freqs, 0.5 * pass_through(2, refs));
    EXPECT_NEAR(output_noise_power(half, fr, refs).output_db, 10.0 * std::log10(0.25), 1e-12);
    const auto rf = output_noise_ratio_per_bin(full, cp, refs);
    const auto rh = output_noise_ratio_per_bin(half, cp, refs);
    for (std::size_t k = 0; k < rf.size(); ++k) {
        EXPECT_NEAR(rf[k], 1.0, 1e-12);
        EXPECT_LT(rh[k], rf[k]);
    }
}

TEST(NoisePowerTest, ShapeMismatchIsAnError) {
    const beamform::StackedFilter f = filter_with(2, {0.0, 100.0}, CVector::Ones(4));
    EXPECT_THROW(output_noise_power(f, stft::zero_frames(4, 2, 3), {1, 0}), InputError);
}

TEST(Report, RowsAndHeader) {
    ErrorReport rep;
    rep.method = "bmvdr";
    SourceError e;
    e.source = 2;
    e.ild_err_db = -20.0;
    e.bins_included = 12;
    rep.sources.push_back(e);
    std::ostringstream os;
    write_report_header(os);
    write_report_rows(os, rep);
    EXPECT_EQ(os.str(),
              "method,source,band,metric,value_db,bins_included,bins_excluded\n"
              "bmvdr,interferer_2,lower,ild_err,-20,12,0\n"
              "bmvdr,interferer_2,lower,ipd_err,-300,12,0\n");
}
