// Scenes, ATFs, mixing, CPSDs and the file formats around them.

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "ildbf/io.hpp"
#include "ildbf/scene.hpp"

using namespace ildbf;
using namespace ildbf::scene;
namespace fs = std::filesystem;

namespace {

Scene make_scene(std::vector<double> interferer_az, int mics = 4, double target_az = 0.0) {
    Scene sc;
    sc.mic_array = MicArrayConfig::behind_the_ear(mics);
    sc.sources.push_back({SourceRole::target, target_az, 1.0, "synth:noise", 0.0});
    for (double az : interferer_az) sc.sources.push_back({SourceRole::interferer, az, 1.0, "synth:noise", 0.0});
    return sc;
}

std::vector<double> noise(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<double> x(n);
    for (double& v : x) v = g(rng);
    return x;
}

std::vector<std::vector<double>> signals_for(const Scene& sc, std::size_t n) {
    std::vector<std::vector<double>> s;
    for (std::size_t i = 0; i < sc.sources.size(); ++i) s.push_back(noise(n, 100 + static_cast<unsigned>(i)));
    return s;
}

CVector random_vector(int m, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    CVector v(m);
    for (int j = 0; j < m; ++j) v(j) = cplx(g(rng), g(rng));
    return v;
}

// Pressure from the standard-library special functions, summed to fixed order.
cplx reference_pressure(const sphere::SphereParams& p, double f, double theta_deg, double r) {
    const double k = p.wavenumber(f), kr = k * r, ka = k * p.radius;
    auto h = [](int m, double x) { return cplx(std::sph_bessel(m, x), std::sph_neumann(m, x)); };
    cplx sum = 0.0;
    for (int m = 0; m <= 60; ++m) {
        const cplx dh = (m / ka) * h(m, ka) - h(m + 1, ka);
        sum += (2.0 * m + 1.0) * h(m, kr) / dh * std::legendre(m, std::cos(theta_deg * kPi / 180.0));
    }
    return -kr * sum * std::exp(cplx(0.0, -kr));
}

fs::path temp_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("ildbf_scene_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST(MicArray, BehindTheEarLayout) {
    const MicArrayConfig m = MicArrayConfig::behind_the_ear(4);
    EXPECT_EQ(m.azimuths_deg, (std::vector<double>{97.5, 102.5, -102.5, -97.5}));
    EXPECT_EQ(m.left_ref(), 3);
    EXPECT_EQ(m.right_ref(), 0);
    EXPECT_THROW(MicArrayConfig::behind_the_ear(3), GeometryError);
}

TEST(SceneValidation, Invariants) {
    Scene two_targets = make_scene({20.0});
    two_targets.sources[1].role = SourceRole::target;
    EXPECT_THROW(two_targets.validate(), InputError);

    Scene inside = make_scene({20.0});
    inside.sources[1].distance_m = 0.05;
    EXPECT_THROW(inside.validate(), GeometryError);

    EXPECT_NO_THROW(make_scene({-20, 20, -40, 40, 60}).validate());
    EXPECT_THROW(make_scene({-20, 20, -40, 40, 60, -60}).validate(), InputError);
    EXPECT_EQ(make_scene({}).max_interferers(), 5);
    EXPECT_EQ(make_scene({}).cutoff_hz, 800.0);
}

TEST(BuildAtfs, MidSagittalTargetIsSymmetric) {
    const AtfSet atfs = build_atfs(make_scene({30.0}));
    for (int k = 0; k < atfs.num_bins(); ++k)
        EXPECT_NEAR(std::abs(atfs.target[k](3)), std::abs(atfs.target[k](0)), 1e-12 * std::abs(atfs.target[k](0)));
}

TEST(BuildAtfs, DeterministicAndRealAtEdges) {
    const AtfSet a = build_atfs(make_scene({-40.0, 25.0}));
    const AtfSet b = build_atfs(make_scene({-40.0, 25.0}));
    ASSERT_EQ(a.num_bins(), 129);
    for (int k = 0; k < a.num_bins(); ++k)
        for (int s = 0; s <= 2; ++s) EXPECT_EQ(a.source(s, k), b.source(s, k));
    for (int s = 0; s <= 2; ++s) {
        EXPECT_EQ(a.source(s, 0).imag().norm(), 0.0);
        EXPECT_EQ(a.source(s, 128).imag().norm(), 0.0);
    }
}

// The rigid sphere gives about 12.4 dB here (measured heads show more).
TEST(BuildAtfs, NearFieldIldMatchesIndependentSeries) {
    Scene sc = make_scene({90.0}, 2);
    sc.sources[1].distance_m = 0.2;
    const AtfSet atfs = build_atfs(sc);
    const int k = 8;  // 500 Hz
    ASSERT_DOUBLE_EQ(atfs.freqs_hz[k], 500.0);
    const CVector& b = atfs.interferers[0][k];
    const double ild = db10(std::norm(b(1) / b(0)));
    const sphere::SphereParams p = sc.sphere_params();
    const double ref = db10(std::norm(reference_pressure(p, 500.0, 170.0, 0.2) / reference_pressure(p, 500.0, 10.0, 0.2)));
    EXPECT_NEAR(ild, ref, 1e-8);
    EXPECT_NEAR(ild, -12.36, 0.01);
}

TEST(BuildAtfs, RejectsSourceInsideHead) {
    Scene sc = make_scene({20.0});
    sc.sources[1].distance_m = 0.08;
    EXPECT_THROW(build_atfs(sc), GeometryError);
}

TEST(AtfFir, DftReproducesAtfWithDelay) {
    const AtfSet atfs = build_atfs(make_scene({45.0}));
    std::vector<cplx> half;
    for (int k = 0; k < atfs.num_bins(); ++k) half.push_back(atfs.interferers[0][k](1));
    const int n = 256, delay = 32;
    const RVector h = atf_fir(half, n, delay);
    ASSERT_EQ(h.size(), n);
    for (int k : {0, 5, 40, 128}) {
        cplx dft = 0.0;
        for (int t = 0; t < n; ++t) dft += h(t) * std::exp(cplx(0.0, -2.0 * kPi * k * t / n));
        const cplx expect = half[k] * std::polar(1.0, -2.0 * kPi * k * delay / n);
        EXPECT_LT(std::abs(dft - expect), 1e-12) << k;
    }
}

TEST(Mix, DegenerateSceneEqualsTarget) {
    Scene sc = make_scene({});
    sc.self_noise_snr_db = std::numeric_limits<double>::infinity();
    const AtfSet atfs = build_atfs(sc);
    const MixResult m = mix(sc, atfs, signals_for(sc, 8000), 0.5, 1);
    EXPECT_EQ(m.y, m.x);
    EXPECT_EQ(m.v.norm(), 0.0);
}

TEST(Mix, ComponentsSumToMixture) {
    const Scene sc = make_scene({-20.0, 40.0});
    const MixResult m = mix(sc, build_atfs(sc), signals_for(sc, 8000), 0.5, 3);
    RMatrix sum = m.x + m.v;
    for (const RMatrix& i : m.interferers) sum += i;
    EXPECT_LT((sum - m.y).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Mix, InterferersAtZeroDb) {
    const Scene sc = make_scene({-20.0, 60.0});
    const MixResult m = mix(sc, build_atfs(sc), signals_for(sc, 16000), 1.0, 3);
    const double px = reference_power(m.x, sc.mic_array);
    for (const RMatrix& i : m.interferers) EXPECT_NEAR(db10(reference_power(i, sc.mic_array) / px), 0.0, 1e-9);
}

TEST(Mix, SelfNoiseSnr) {
    Scene sc = make_scene({});
    sc.self_noise_snr_db = 50.0;
    const MixResult m = mix(sc, build_atfs(sc), signals_for(sc, 160000), 10.0, 5);
    const double px = reference_power(m.x, sc.mic_array);
    const double pv = reference_power(m.v, sc.mic_array);
    EXPECT_NEAR(db10(px / pv), 50.0, 0.5);
}

TEST(Mix, GainActsLinearly) {
    Scene sc = make_scene({30.0});
    const AtfSet atfs = build_atfs(sc);
    const auto sig = signals_for(sc, 8000);
    const MixResult base = mix(sc, atfs, sig, 0.5, 9);
    sc.sources[1].gain_db = 6.0;
    const MixResult loud = mix(sc, atfs, sig, 0.5, 9);
    const double g = std::pow(10.0, 6.0 / 20.0);
    EXPECT_LT((loud.interferers[0] - g * base.interferers[0]).norm(), 1e-12 * loud.interferers[0].norm());
    EXPECT_EQ(loud.x, base.x);
}

TEST(Mix, ShortSignalIsAnError) {
    const Scene sc = make_scene({30.0});
    EXPECT_THROW(mix(sc, build_atfs(sc), signals_for(sc, 100), 0.5, 1), InputError);
}

TEST(OracleCpsd, Trivial) {
    const AtfSet none = build_atfs(make_scene({}));
    SourcePsds p;
    p.self_noise = RVector::Ones(none.num_bins());
    const CpsdSet c = oracle_cpsd(none, p);
    for (const CMatrix& n : c.noise) EXPECT_EQ(n, CMatrix::Identity(4, 4));

    const AtfSet one = build_atfs(make_scene({50.0}));
    SourcePsds q;
    q.self_noise = RVector::Zero(one.num_bins());
    q.interferers = {RVector::Ones(one.num_bins())};
    const CpsdSet c1 = oracle_cpsd(one, q);
    for (int k = 1; k < one.num_bins(); k += 16) {
        const CVector& b = one.interferers[0][k];
        EXPECT_LT((c1.noise[k] - b * b.adjoint()).norm(), 1e-14);
        Eigen::SelfAdjointEigenSolver<CMatrix> es(c1.noise[k]);
        EXPECT_LT(es.eigenvalues()(2), 1e-12 * es.eigenvalues()(3));
    }
}

TEST(OracleCpsd, EigenvaluesMatchExplicitSum) {
    std::mt19937_64 rng(11);
    AtfSet atfs;
    atfs.freqs_hz = {0.0, 100.0};
    atfs.target = {random_vector(4, rng), random_vector(4, rng)};
    atfs.interferers = {{random_vector(4, rng), random_vector(4, rng)}, {random_vector(4, rng), random_vector(4, rng)}};
    SourcePsds p;
    p.interferers = {RVector::Constant(2, 0.7), RVector::Constant(2, 1.9)};
    p.self_noise = RVector::Constant(2, 0.01);
    const CpsdSet c = oracle_cpsd(atfs, p);
    for (int k = 0; k < 2; ++k) {
        CMatrix ref = 0.01 * CMatrix::Identity(4, 4);
        ref += 0.7 * atfs.interferers[0][k] * atfs.interferers[0][k].adjoint();
        ref += 1.9 * atfs.interferers[1][k] * atfs.interferers[1][k].adjoint();
        const RVector a = Eigen::SelfAdjointEigenSolver<CMatrix>(c.noise[k]).eigenvalues();
        const RVector b = Eigen::SelfAdjointEigenSolver<CMatrix>(ref).eigenvalues();
        EXPECT_LT((a - b).norm(), 1e-12 * b.norm());
        EXPECT_GE(a.minCoeff(), -1e-10 * c.noise[k].trace().real());
        EXPECT_LT((c.noise[k] - c.noise[k].adjoint()).norm(), 1e-12 * c.noise[k].norm());
    }
}

TEST(OracleCpsd, ShapeMismatch) {
    const AtfSet atfs = build_atfs(make_scene({50.0}));
    SourcePsds p;
    p.self_noise = RVector::Ones(atfs.num_bins());
    EXPECT_THROW(oracle_cpsd(atfs, p), InputError);
}

TEST(EstimateCpsd, ConstantFramesGiveOuterProduct) {
    std::mt19937_64 rng(2);
    const CVector u = random_vector(3, rng);
    stft::StftFrames f = stft::zero_frames(8, 3, 10);
    for (CMatrix& b : f.bins) b = u.replicate(1, 10);
    const CpsdEstimate e = estimate_cpsd(f);
    EXPECT_FALSE(e.too_few_frames);
    for (const CMatrix& p : e.cpsd.noise) EXPECT_LT((p - u * u.adjoint()).norm(), 1e-13);
}

TEST(EstimateCpsd, EmptyAndShort) {
    EXPECT_THROW(estimate_cpsd(stft::zero_frames(8, 2, 0)), InputError);
    EXPECT_TRUE(estimate_cpsd(stft::zero_frames(8, 4, 3)).too_few_frames);
}

TEST(EstimateCpsd, ConvergesToKnownCovariance) {
    std::mt19937_64 rng(21);
    const int m = 4;
    CMatrix l = CMatrix::Zero(m, m);
    for (int i = 0; i < m; ++i) l.col(i) = random_vector(m, rng);
    const CMatrix cov = l * l.adjoint();
    std::normal_distribution<double> g(0.0, std::sqrt(0.5));
    double prev = 1e9;
    double offdiag_prev = 1e9;
    for (int frames : {100, 1000, 10000}) {
        stft::StftFrames f = stft::zero_frames(2, m, frames);
        CMatrix white(m, frames);
        for (Eigen::Index i = 0; i < white.size(); ++i) white.data()[i] = cplx(g(rng), g(rng));
        f.bins[0] = l * white;
        f.bins[1] = white;
        const CpsdSet est = estimate_cpsd(f).cpsd;
        const double err = (est.noise[0] - cov).norm() / cov.norm();
        if (frames == 100 * m || frames == 1000) EXPECT_LT(err, 0.1);
        EXPECT_LT(err, prev);
        prev = err;
        CMatrix off = est.noise[1];
        off.diagonal().setZero();
        EXPECT_LT(off.cwiseAbs().maxCoeff(), 5.0 / std::sqrt(frames));
        EXPECT_LT(off.cwiseAbs().maxCoeff(), offdiag_prev);
        offdiag_prev = off.cwiseAbs().maxCoeff();
    }
}

TEST(Wav, RoundTripWithinOneLsb) {
    const fs::path d = temp_dir("wav");
    RMatrix x(2, 1000);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-0.9, 0.9);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
    x(0, 0) = 1.5;
    EXPECT_EQ(io::write_wav(d / "a.wav", x, 16000), 1);
    const io::Wav w = io::read_wav(d / "a.wav");
    EXPECT_EQ(w.sample_rate, 16000);
    ASSERT_EQ(w.data.rows(), 2);
    ASSERT_EQ(w.data.cols(), 1000);
    x(0, 0) = 32767.0 / 32768.0;
    EXPECT_LE((w.data - x).cwiseAbs().maxCoeff(), 0.5 / 32768.0 + 1e-15);
    EXPECT_THROW(io::read_wav(d / "missing.wav"), IoError);
    fs::remove_all(d);
}

TEST(SynthSignal, DeterministicAndScaled) {
    for (const std::string spec : {"synth:tone:freq=440", "synth:noise:seed=3", "synth:bursts:on=0.1,off=0.1,seed=2",
                                   "synth:harmonic:f0=120,harmonics=10,rate=2"}) {
        const auto a = io::synth_signal(spec, 16000.0, 16000, 7);
        const auto b = io::synth_signal(spec, 16000.0, 16000, 7);
        EXPECT_EQ(a, b) << spec;
        double rms = 0.0;
        for (double v : a) rms += v * v;
        EXPECT_NEAR(std::sqrt(rms / a.size()), 0.05, 1e-12) << spec;
    }
    EXPECT_THROW(io::synth_signal("synth:chirp", 16000.0, 10, 1), InputError);
}

TEST(LoadSignal, MissingFileNamesThePath) {
    try {
        io::load_signal("no_such_signal.wav", 16000.0, 100, "/tmp", 1);
        FAIL();
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("no_such_signal.wav"), std::string::npos);
    }
}

TEST(Config, JsonRoundTrip) {
    const io::json j = io::json::parse(R"({
      "duration_s": 2.5, "self_noise_snr_db": null, "cutoff_hz": 700,
      "mic_array": {"num_mics": 6},
      "sources": [
        {"role": "target", "azimuth_deg": 0},
        {"role": "interferer", "azimuth_deg": -40, "distance_m": 0.5, "signal": "synth:tone:freq=300", "gain_db": -3}
      ]})");
    const io::SimulationConfig c = io::config_from_json(j);
    EXPECT_EQ(c.duration_s, 2.5);
    EXPECT_TRUE(std::isinf(c.scene.self_noise_snr_db));
    EXPECT_EQ(c.scene.mic_array.num_mics(), 6);
    EXPECT_EQ(c.scene.cutoff_hz, 700.0);
    EXPECT_EQ(c.scene.sources[1].gain_db, -3.0);
    const io::SimulationConfig back = io::config_from_json(io::config_to_json(c));
    EXPECT_EQ(io::config_to_json(back), io::config_to_json(c));
}

TEST(Config, InvalidScenesAreRejected) {
    EXPECT_THROW(io::config_from_json(io::json::parse(R"({"sources": [
        {"role": "target", "azimuth_deg": 0}, {"role": "target", "azimuth_deg": 10}]})")),
                 InputError);
    EXPECT_THROW(io::config_from_json(io::json::parse(R"({"sources": [{"role": "speaker", "azimuth_deg": 0}]})")),
                 InputError);
    EXPECT_THROW(io::config_from_json(io::json::parse(R"({"mic_array": {"num_mics": 4}})")), InputError);
}

TEST(AtfCsv, RoundTripIsExact) {
    const AtfSet atfs = build_atfs(make_scene({-20.0, 35.0}));
    std::stringstream ss;
    io::write_atf_csv(ss, atfs);
    const AtfSet back = io::read_atf_csv(ss);
    ASSERT_EQ(back.num_bins(), atfs.num_bins());
    ASSERT_EQ(back.num_interferers(), 2);
    EXPECT_EQ(back.freqs_hz, atfs.freqs_hz);
    for (int k = 0; k < atfs.num_bins(); ++k)
        for (int s = 0; s <= 2; ++s) EXPECT_EQ(back.source(s, k), atfs.source(s, k));
}

TEST(PsdCsv, RoundTripIsExact) {
    const Scene sc = make_scene({-20.0});
    const MixResult m = mix(sc, build_atfs(sc), signals_for(sc, 8000), 0.5, 2);
    const SourcePsds p = psds_from_mix(sc.stft_config(), m);
    std::vector<double> freqs;
    for (int k = 0; k < 129; ++k) freqs.push_back(k * 62.5);
    std::stringstream ss;
    io::write_psd_csv(ss, p, freqs);
    const SourcePsds back = io::read_psd_csv(ss, 129, 1);
    EXPECT_EQ(back.target, p.target);
    EXPECT_EQ(back.interferers[0], p.interferers[0]);
    EXPECT_EQ(back.self_noise, p.self_noise);
    std::stringstream partial("bin,f_hz,source,power_linear\n0,0,target,1\n");
    EXPECT_THROW(io::read_psd_csv(partial, 1, 0), InputError);
}

// Oracle CPSD from measured PSDs matches a long-run sample estimate.
TEST(PsdsFromMix, OracleAgreesWithEstimate) {
    const Scene sc = make_scene({-30.0});
    const AtfSet atfs = build_atfs(sc);
    const MixResult m = mix(sc, atfs, signals_for(sc, 160000), 10.0, 4);
    const CpsdSet oracle = oracle_cpsd(atfs, psds_from_mix(sc.stft_config(), m));
    const CpsdSet est = estimate_cpsd(stft::analyze(sc.stft_config(), m.noise())).cpsd;
    for (int k : {4, 10, 40, 90}) EXPECT_LT((oracle.noise[k] - est.noise[k]).norm() / oracle.noise[k].norm(), 0.05) << k;
}
