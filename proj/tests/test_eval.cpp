#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "neurodiff/error.hpp"
#include "neurodiff/features.hpp"
#include "neurodiff/frechet.hpp"
#include "neurodiff/ks.hpp"
#include "neurodiff/manifest.hpp"
#include "neurodiff/nn_search.hpp"
#include "neurodiff/rng.hpp"
#include "oracles.hpp"

using namespace neurodiff;

namespace {

FeatureMatrix matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    FeatureMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.values = std::move(values);
    return m;
}

FeatureStats stats(std::vector<double> mu, std::vector<double> sigma) {
    FeatureStats s;
    s.mu = std::move(mu);
    s.sigma = std::move(sigma);
    s.n = 10;
    return s;
}

Eigen::MatrixXd random_psd(int d, Rng& rng) {
    Eigen::MatrixXd g(d, d + 2);
    for (int i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    return g * g.transpose() / static_cast<double>(d);
}

std::vector<double> to_vec(const Eigen::MatrixXd& m) {
    std::vector<double> v(static_cast<std::size_t>(m.size()));
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    return v;
}

Manifest demo_manifest() {
    Manifest m;
    for (int s = 0; s < 100; ++s) m.push_back({"A" + std::to_string(s), "a/" + std::to_string(s) + ".nii", "ADNI", {}, true, {}, {}});
    for (int v = 0; v < 5; ++v) m.push_back({"A7", "a/7_" + std::to_string(v) + ".nii", "ADNI", {}, true, {}, {}});
    for (int s = 0; s < 20; ++s) m.push_back({"S" + std::to_string(s), "s/" + std::to_string(s) + ".nii", "SLEEP", {}, true, {}, {}});
    m.push_back({"B1", "b/1.nii", "OASIS", {}, false, std::string("Motion artifacts"), {}});
    return m;
}

}  // namespace

TEST_CASE("subject-level split") {
    const Manifest in = demo_manifest();
    const Manifest out = split_subjects(in, SplitOptions{0.10, {"AIBL", "SLEEP"}, 3});
    CHECK(out.size() == in.size() - 1);
    std::map<std::string, std::set<Split>> by_subject;
    std::set<std::string> adni_test;
    for (const auto& r : out) {
        REQUIRE(r.split.has_value());
        by_subject[r.subject].insert(*r.split);
        if (r.dataset == "ADNI" && *r.split == Split::TestInternal) adni_test.insert(r.subject);
        if (r.dataset == "SLEEP") CHECK(*r.split == Split::TestExternal);
        CHECK(r.qa_pass);
    }
    for (const auto& [subject, splits] : by_subject) CHECK(splits.size() == 1);
    CHECK(adni_test.size() == 10);
    CHECK(split_subjects(in, SplitOptions{0.10, {"AIBL", "SLEEP"}, 3}).size() == out.size());
}

TEST_CASE("manifest json-lines round trip") {
    Manifest m = demo_manifest();
    m[0].mask_path = "masks/0.nii";
    m[0].split = Split::Train;
    std::stringstream ss;
    write_manifest(ss, m);
    const Manifest back = parse_manifest(ss);
    REQUIRE(back.size() == m.size());
    CHECK(back[0].mask_path == m[0].mask_path);
    CHECK(back[0].split == Split::Train);
    CHECK(back.back().qa_reason == std::string("Motion artifacts"));
    CHECK_FALSE(back.back().qa_pass);
    std::istringstream bad("{\"subject\": 1}\n");
    CHECK_THROWS_AS(parse_manifest(bad), Error);
    CHECK(parse_split("test-external") == Split::TestExternal);
}

TEST_CASE("features") {
    const Slice2D zero{16, 16, std::vector<float>(256, 0.0f)};
    Rng rng(1);
    Slice2D noise{16, 12, std::vector<float>(192)};
    for (float& x : noise.data) x = static_cast<float>(rng.uniform());
    Slice2D big{64, 40, std::vector<float>(64 * 40)};
    for (float& x : big.data) x = static_cast<float>(rng.uniform());

    SUBCASE("identical slices and zero slices") {
        const FeatureMatrix f = extract_features({noise, zero, noise}, projection_extractor_id, 5);
        REQUIRE(f.rows == 3);
        REQUIRE(f.cols == 64);
        for (std::size_t c = 0; c < 64; ++c) {
            CHECK(f.at(0, c) == f.at(2, c));
            CHECK(f.at(1, c) == 0.0);
        }
    }
    SUBCASE("one-hot patch matches a plain matrix product") {
        Slice2D hot{16, 16, std::vector<float>(256, 0.0f)};
        // cell (x=5, y=2) spans x in [10, 12), y in [4, 6)
        for (std::size_t y = 4; y < 6; ++y)
            for (std::size_t x = 10; x < 12; ++x) hot.data[y * 16 + x] = 1.0f;
        const auto pooled = pool_slice(hot);
        for (std::size_t i = 0; i < 64; ++i) CHECK(pooled[i] == (i == 2 * 8 + 5 ? 1.0 : 0.0));
        const auto proj = projection_matrix(9);
        REQUIRE(proj.size() == 64 * 64);
        const FeatureMatrix f = extract_features({hot}, projection_extractor_id, 9);
        for (std::size_t o = 0; o < 64; ++o) CHECK(f.at(0, o) == doctest::Approx(proj[o * 64 + 21]).epsilon(1e-15));
    }
    SUBCASE("pooling averages cells") {
        const auto pooled = pool_slice(big);
        double expect = 0.0;
        for (std::size_t y = 5; y < 10; ++y)
            for (std::size_t x = 8; x < 16; ++x) expect += big.at(x, y);
        CHECK(pooled[1 * 8 + 1] == doctest::Approx(expect / 40.0).epsilon(1e-12));
    }
    SUBCASE("projection scale") {
        const auto p = projection_matrix(2);
        const double ss = std::inner_product(p.begin(), p.end(), p.begin(), 0.0);
        CHECK(std::abs(ss / 4096.0 - 1.0 / 64.0) < 0.1 / 64.0);
        CHECK(projection_matrix(2) == p);
        CHECK(projection_matrix(3) != p);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(extract_features({noise}, "inception", 0), Error);
        CHECK_THROWS_AS(extract_features({Slice2D{4, 4, std::vector<float>(16)}}, projection_extractor_id, 0), Error);
    }
    SUBCASE("feature file round trip") {
        const FeatureMatrix f = extract_features({noise, big.width == 64 ? noise : zero}, projection_extractor_id, 4);
        const auto path = std::filesystem::temp_directory_path() / "neurodiff_features.bin";
        write_feature_file(path, f);
        const FeatureMatrix g = read_feature_file(path);
        CHECK(g.values == f.values);
        CHECK(g.extractor == f.extractor);
    }
}

TEST_CASE("fit_stats") {
    const FeatureMatrix two = matrix(2, 3, {1.0, 2.0, 3.0, 3.0, -2.0, 4.0});
    const FeatureStats s = fit_stats(two);
    CHECK(s.mu == std::vector<double>{2.0, 0.0, 3.5});
    const std::vector<double> diff{-1.0, 2.0, -0.5};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) CHECK(s.sigma[r * 3 + c] == doctest::Approx(2.0 * diff[r] * diff[c]));

    Rng rng(4);
    std::vector<double> vals(40 * 5);
    rng.fill_normal(vals);
    const FeatureMatrix m = matrix(40, 5, vals);
    const FeatureStats fs = fit_stats(m);
    // naive two-pass oracle
    for (std::size_t a = 0; a < 5; ++a)
        for (std::size_t b = 0; b < 5; ++b) {
            double acc = 0.0;
            for (std::size_t r = 0; r < 40; ++r) acc += (m.at(r, a) - fs.mu[a]) * (m.at(r, b) - fs.mu[b]);
            CHECK(fs.sigma[a * 5 + b] == doctest::Approx(acc / 39.0).epsilon(1e-12));
        }
    std::vector<double> permuted;
    for (std::size_t r = 40; r-- > 0;) permuted.insert(permuted.end(), vals.begin() + r * 5, vals.begin() + r * 5 + 5);
    const FeatureStats ps = fit_stats(matrix(40, 5, permuted));
    for (std::size_t i = 0; i < 25; ++i) CHECK(ps.sigma[i] == doctest::Approx(fs.sigma[i]).epsilon(1e-12));

    const FeatureStats same = fit_stats(matrix(3, 2, {1, 2, 1, 2, 1, 2}));
    CHECK(same.sigma == std::vector<double>(4, 0.0));
    CHECK_THROWS_AS(fit_stats(matrix(1, 2, {1, 2})), Error);
}

TEST_CASE("frechet distance") {
    Rng rng(8);
    SUBCASE("identical stats") {
        const Eigen::MatrixXd a = random_psd(6, rng);
        const FeatureStats s = stats(std::vector<double>(6, 0.3), to_vec(a));
        CHECK(std::abs(frechet_distance(s, s)) < 1e-8);
    }
    SUBCASE("scalar closed form") {
        const double d = frechet_distance(stats({1.5}, {0.25}), stats({-0.5}, {4.0}));
        CHECK(std::abs(d - (4.0 + (0.5 - 2.0) * (0.5 - 2.0))) < 1e-10);
    }
    SUBCASE("identity covariances") {
        const std::vector<double> eye{1, 0, 0, 0, 1, 0, 0, 0, 1};
        CHECK(frechet_distance(stats({0, 0, 0}, eye), stats({1, -2, 2}, eye)) == doctest::Approx(9.0).epsilon(1e-12));
    }
    SUBCASE("random 4x4 pairs against a Denman-Beavers square root") {
        for (int trial = 0; trial < 20; ++trial) {
            const Eigen::MatrixXd a = random_psd(4, rng);
            const Eigen::MatrixXd b = random_psd(4, rng);
            std::vector<double> ma(4), mb(4);
            rng.fill_normal(ma);
            rng.fill_normal(mb);
            double mean_term = 0.0;
            for (int i = 0; i < 4; ++i) mean_term += (ma[i] - mb[i]) * (ma[i] - mb[i]);
            const double expect = mean_term + a.trace() + b.trace() - 2.0 * oracle::trace_sqrt_product(a, b);
            const FeatureStats sa = stats(ma, to_vec(a));
            const FeatureStats sb = stats(mb, to_vec(b));
            CHECK(std::abs(frechet_distance(sa, sb) - expect) < 1e-8);
            CHECK(std::abs(frechet_distance(sa, sb) - frechet_distance(sb, sa)) < 1e-8);
            CHECK(frechet_distance(sa, sb) >= 0.0);
        }
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(frechet_distance(stats({0}, {1}), stats({0, 0}, {1, 0, 0, 1})), Error);
        CHECK_THROWS_AS(frechet_distance(stats({0, 0}, {1, 0, 0, -1}), stats({0, 0}, {1, 0, 0, 1})), Error);
    }
}

TEST_CASE("ks statistic") {
    const std::vector<double> a{0.0, 1.0};
    const std::vector<double> b{2.0, 3.0};
    CHECK(ks_statistic(a, a) == 0.0);
    CHECK(ks_statistic(a, b) == 1.0);
    const std::vector<double> c{1.0, 2.0, 3.0};
    const std::vector<double> e{1.5, 2.5};
    CHECK(ks_statistic(c, e) == doctest::Approx(oracle::ks_bruteforce(c, e)).epsilon(1e-15));
    CHECK_THROWS_AS(ks_statistic(std::vector<double>{}, a), Error);

    Rng rng(9);
    for (int pair = 0; pair < 200; ++pair) {
        std::vector<double> x(1 + rng.below(40)), y(1 + rng.below(40));
        for (double& v : x) v = std::round(rng.normal() * 4.0) / 4.0;  // ties on purpose
        for (double& v : y) v = std::round((rng.normal() + 0.3) * 4.0) / 4.0;
        std::sort(x.begin(), x.end());
        std::sort(y.begin(), y.end());
        const double d = ks_statistic(x, y);
        CHECK(d == doctest::Approx(oracle::ks_bruteforce(x, y)).epsilon(1e-14));
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
        std::vector<double> ex(x.size()), ey(y.size());
        std::transform(x.begin(), x.end(), ex.begin(), [](double v) { return std::exp(v); });
        std::transform(y.begin(), y.end(), ey.begin(), [](double v) { return std::exp(v); });
        CHECK(ks_statistic(ex, ey) == d);
    }
}

TEST_CASE("kolmogorov survival function") {
    CHECK(kolmogorov_q(1.0) == doctest::Approx(0.2699996716773545212).epsilon(1e-14));
    CHECK(kolmogorov_q(0.5) == doctest::Approx(0.96394524366487509439).epsilon(1e-14));
    CHECK(kolmogorov_q(0.8) == doctest::Approx(0.54414241157419807674).epsilon(1e-14));
    CHECK(kolmogorov_q(1.2) == doctest::Approx(0.11224966667072498483).epsilon(1e-14));
    CHECK(kolmogorov_q(1.5) == doctest::Approx(0.022217962616525128721).epsilon(1e-13));
    for (double lambda : {0.3, 0.9, 1.1, 1.18, 1.19, 2.0, 3.0}) {
        CHECK(kolmogorov_q(lambda) == doctest::Approx(oracle::kolmogorov_series(lambda)).epsilon(1e-12));
    }
    CHECK(ks_pvalue(0.0, 10, 10) == 1.0);
    CHECK(ks_pvalue(1.0, 1000, 1000) < 1e-12);
    // sqrt(nm/(n+m)) D = 1 with n = m = 200, D = 0.1
    CHECK(ks_pvalue(0.1, 200, 200) == doctest::Approx(0.2699996716773545).epsilon(1e-12));
}

TEST_CASE("permutation protocol") {
    auto population = [](std::size_t n, double shift, std::uint64_t seed) {
        Rng rng(seed);
        std::vector<RegionalVolumes> out(n);
        for (auto& r : out) r["thalamus"] = 7000.0 + 400.0 * rng.normal() + shift;
        return out;
    };
    SUBCASE("null calibration") {
        PermutationOptions opt;
        opt.repetitions = 1000;
        opt.subsample = 1000;
        opt.seed = 17;
        const KsReport rep = permutation_protocol(population(100000, 0.0, 1), population(100000, 0.0, 2), opt);
        REQUIRE(rep.structures.size() == 1);
        CHECK(rep.structures[0].structure == "thalamus");
        CHECK(rep.structures[0].fraction_not_significant >= 0.92);
        CHECK(rep.structures[0].fraction_not_significant <= 0.98);
        CHECK_FALSE(rep.small_sample);
        const KsReport again = permutation_protocol(population(100000, 0.0, 1), population(100000, 0.0, 2), opt);
        CHECK(again.structures[0].fraction_not_significant == rep.structures[0].fraction_not_significant);
        CHECK(again.structures[0].median_p == rep.structures[0].median_p);
    }
    SUBCASE("separated populations") {
        PermutationOptions opt;
        opt.repetitions = 50;
        opt.subsample = 200;
        const KsReport rep = permutation_protocol(population(400, 0.0, 3), population(300, 2000.0, 4), opt);
        CHECK(rep.structures[0].fraction_not_significant == 0.0);
    }
    SUBCASE("not enough real data") {
        PermutationOptions opt;
        opt.subsample = 500;
        try {
            permutation_protocol(population(100, 0.0, 3), population(100, 0.0, 4), opt);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::insufficient_real_data);
        }
    }
    SUBCASE("small samples are flagged and reports serialize") {
        PermutationOptions opt;
        opt.repetitions = 10;
        opt.subsample = 20;
        const KsReport rep = permutation_protocol(population(40, 0.0, 5), population(25, 0.0, 6), opt);
        CHECK(rep.small_sample);
        std::ostringstream os;
        write_ks_csv(os, rep);
        CHECK(os.str().rfind("structure,", 0) == 0);
        CHECK(ks_report_json(rep).find("\"thalamus\"") != std::string::npos);
    }
}

TEST_CASE("regional csv") {
    std::istringstream in("volume_id,structure,mm3\nv1,thalamus,7000\nv2,thalamus,7100.5\nv1,putamen,5000\n");
    const RegionalTable t = parse_regional_csv(in);
    REQUIRE(t.volume_ids == std::vector<std::string>{"v1", "v2"});
    CHECK(t.volumes[0].at("putamen") == 5000.0);
    CHECK(t.volumes[1].at("thalamus") == 7100.5);
    std::istringstream neg("volume_id,structure,mm3\nv1,thalamus,-3\n");
    CHECK_THROWS_AS(parse_regional_csv(neg), Error);
}

TEST_CASE("nearest-neighbour search") {
    Rng rng(12);
    auto random_volume = [&rng] {
        Volume v(Dims{8, 8, 8});
        for (float& x : v.data()) x = static_cast<float>(rng.uniform());
        return v;
    };
    std::vector<Volume> pool;
    for (int i = 0; i < 50; ++i) pool.push_back(random_volume());
    pool.push_back(pool[7]);  // exact tie with index 7

    SUBCASE("self query") {
        const auto nn = nn_search(pool[23], InMemorySource(pool));
        REQUIRE(nn.size() == 2);
        CHECK(nn[0].index == 23);
        CHECK(nn[0].mse == 0.0);
        const auto tie = nn_search(pool[7], InMemorySource(pool));
        CHECK(tie[0].index == 7);
        CHECK(tie[1].index == 50);
    }
    SUBCASE("constant offsets") {
        const Volume q = pool[0];
        std::vector<Volume> cands;
        for (float c : {0.5f, 0.25f, 1.0f}) {
            Volume v = q;
            for (float& x : v.data()) x += c;
            cands.push_back(v);
        }
        const auto nn = nn_search(q, InMemorySource(cands));
        CHECK(nn[0].index == 1);
        CHECK(nn[0].mse == doctest::Approx(0.0625).epsilon(1e-6));
        CHECK(nn[1].index == 0);
        CHECK(nn[1].mse == doctest::Approx(0.25).epsilon(1e-6));
    }
    SUBCASE("matches a full sort") {
        for (int q = 0; q < 50; ++q) {
            const Volume query = q % 5 == 0 ? pool[static_cast<std::size_t>(q)] : random_volume();
            std::vector<Neighbor> all;
            for (std::size_t i = 0; i < pool.size(); ++i) all.push_back({i, mean_squared_error(query, pool[i])});
            std::stable_sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) { return a.mse < b.mse; });
            const auto nn = nn_search(query, InMemorySource(pool), 3);
            REQUIRE(nn.size() == 3);
            for (int k = 0; k < 3; ++k) {
                CHECK(nn[k].index == all[k].index);
                CHECK(nn[k].mse == all[k].mse);
            }
        }
    }
    SUBCASE("errors") {
        const std::vector<Volume> none;
        CHECK_THROWS_AS(nn_search(pool[0], InMemorySource(none)), Error);
        const std::vector<Volume> odd{Volume(Dims{4, 4, 4})};
        CHECK_THROWS_AS(nn_search(pool[0], InMemorySource(odd)), Error);
    }
}
