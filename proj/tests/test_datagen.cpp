// Synthetic conditional dataset: AR(1) token structure, mode assignment,
// and the file format.

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cadiff/datagen.hpp"
#include "cadiff/error.hpp"
#include "cadiff/matrix.hpp"

using namespace cadiff;

namespace {

SynthConfig base_cfg() {
    SynthConfig cfg;
    cfg.K = 3;
    cfg.n = 120;
    cfg.l = 6;
    cfg.d_token = 5;
    cfg.rho = 0.5;
    cfg.sigma = 1.0;
    cfg.cl = 2;
    cfg.seed = 11;
    return cfg;
}

// Lag-1 autocorrelation of the residuals u_i = token_i - center, pooled over
// samples and dimensions.
double lag1_residual_corr(const Dataset& ds) {
    double num = 0.0, den = 0.0;
    for (const DataRecord& rec : ds.records) {
        for (int c = 0; c < ds.config.d_token; ++c) {
            const double mu = ds.centers.at(rec.mode, c);
            for (int r = 0; r + 1 < ds.config.l; ++r) {
                const double u0 = rec.x0.at(r, c) - mu;
                const double u1 = rec.x0.at(r + 1, c) - mu;
                num += u0 * u1;
                den += u0 * u0;
            }
        }
    }
    return num / den;
}

}  // namespace

TEST_SUITE("datagen") {

TEST_CASE("config validation") {
    SynthConfig cfg = base_cfg();
    cfg.validate();
    cfg.K = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = base_cfg();
    cfg.rho = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = base_cfg();
    cfg.sigma = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("dataset shapes and determinism") {
    const SynthConfig cfg = base_cfg();
    const Dataset a = gen_dataset(cfg);
    REQUIRE(static_cast<int>(a.records.size()) == cfg.n);
    CHECK(a.centers.rows == cfg.K);
    CHECK(a.centers.cols == cfg.d_token);
    CHECK(a.cond_proj.rows == cfg.K);
    for (const DataRecord& rec : a.records) {
        CHECK(rec.x0.rows == cfg.l);
        CHECK(rec.x0.cols == cfg.d_token);
        CHECK(rec.cond.rows == cfg.cl);
        CHECK(rec.cond.cols == cfg.d_token);
        CHECK(rec.mode >= 0);
        CHECK(rec.mode < cfg.K);
    }

    const Dataset b = gen_dataset(cfg);
    CHECK(a.centers.data == b.centers.data);
    for (size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].x0.data == b.records[i].x0.data);
        CHECK(a.records[i].mode == b.records[i].mode);
    }
}

TEST_CASE("rho=0 residuals are serially uncorrelated") {
    SynthConfig cfg = base_cfg();
    cfg.rho = 0.0;
    cfg.n = 12500;
    cfg.l = 8;
    cfg.d_token = 1;
    cfg.seed = 21;
    const Dataset ds = gen_dataset(cfg);
    CHECK(std::abs(lag1_residual_corr(ds)) < 0.05);
}

TEST_CASE("rho=0.9 residuals carry the configured lag-1 correlation") {
    SynthConfig cfg = base_cfg();
    cfg.rho = 0.9;
    cfg.n = 12500;
    cfg.l = 8;
    cfg.d_token = 1;
    cfg.seed = 22;
    const Dataset ds = gen_dataset(cfg);
    CHECK(std::abs(lag1_residual_corr(ds) - 0.9) < 0.05);
}

TEST_CASE("residual variance is stationary at sigma^2") {
    SynthConfig cfg = base_cfg();
    cfg.rho = 0.7;
    cfg.sigma = 2.0;
    cfg.n = 6000;
    cfg.l = 8;
    cfg.d_token = 2;
    cfg.seed = 23;
    const Dataset ds = gen_dataset(cfg);
    // Pool the variance of u at every position; the AR(1) innovation scaling
    // keeps it sigma^2 at each step, not just the first.
    for (int r : {0, 3, 7}) {
        double acc = 0.0;
        int count = 0;
        for (const DataRecord& rec : ds.records) {
            for (int c = 0; c < cfg.d_token; ++c) {
                const double u = rec.x0.at(r, c) - ds.centers.at(rec.mode, c);
                acc += u * u;
                ++count;
            }
        }
        CHECK(acc / count == doctest::Approx(4.0).epsilon(0.08));
    }
}

TEST_CASE("tiny sigma pins every sequence to its center") {
    SynthConfig cfg = base_cfg();
    cfg.sigma = 1e-6;
    cfg.n = 300;
    cfg.seed = 24;
    const Dataset ds = gen_dataset(cfg);
    for (const DataRecord& rec : ds.records) {
        CHECK(assign_mode({rec.x0}, ds.centers) == rec.mode);
    }
}

TEST_CASE("mode balance stays within the binomial envelope") {
    const SynthConfig cfg = [] {
        SynthConfig c = base_cfg();
        c.n = 4000;
        c.K = 4;
        c.seed = 25;
        return c;
    }();
    const Dataset ds = gen_dataset(cfg);
    std::vector<int> counts(cfg.K, 0);
    for (const DataRecord& rec : ds.records) counts[rec.mode]++;
    const double bound =
        3.0 * std::sqrt(static_cast<double>(cfg.n) * (cfg.K - 1) / (cfg.K * cfg.K));
    for (int k = 0; k < cfg.K; ++k) {
        CHECK(std::abs(counts[k] - cfg.n / static_cast<double>(cfg.K)) <= bound);
    }
}

TEST_CASE("separated centers make generation labels recoverable") {
    SynthConfig cfg = base_cfg();
    cfg.min_center_dist = 10.0;  // 10 sigma at sigma=1
    cfg.n = 1000;
    cfg.seed = 26;
    const Dataset ds = gen_dataset(cfg);
    // Pairwise center distances honor the floor.
    for (int a = 0; a < cfg.K; ++a) {
        for (int b = a + 1; b < cfg.K; ++b) {
            double d2 = 0.0;
            for (int c = 0; c < cfg.d_token; ++c) {
                const double diff = ds.centers.at(a, c) - ds.centers.at(b, c);
                d2 += diff * diff;
            }
            CHECK(std::sqrt(d2) >= cfg.min_center_dist);
        }
    }
    int agree = 0;
    for (const DataRecord& rec : ds.records) {
        agree += (assign_mode({rec.x0}, ds.centers) == rec.mode);
    }
    CHECK(agree >= 990);
}

TEST_CASE("assign_mode picks the nearest center, lowest index on ties") {
    Matrix centers(2, 2);
    centers.at(0, 0) = 1.0;
    centers.at(1, 0) = -1.0;
    Matrix x(3, 2);
    x.at(0, 0) = 0.9;
    x.at(1, 0) = 1.1;
    x.at(2, 0) = 1.0;
    CHECK(assign_mode({x}, centers) == 0);
    for (int r = 0; r < 3; ++r) x.at(r, 0) = -2.0;
    CHECK(assign_mode({x}, centers) == 1);
    // Token mean exactly between the centers: both squared distances equal.
    for (int r = 0; r < 3; ++r) x.at(r, 0) = 0.0;
    CHECK(assign_mode({x}, centers) == 0);
}

TEST_CASE("conditions sit near the projection row for their mode") {
    const SynthConfig cfg = base_cfg();
    const Dataset ds = gen_dataset(cfg);
    for (const DataRecord& rec : ds.records) {
        for (int r = 0; r < cfg.cl; ++r) {
            for (int c = 0; c < cfg.d_token; ++c) {
                // Conditions are the projection row plus 0.1-stddev noise.
                CHECK(std::abs(rec.cond.at(r, c) - ds.cond_proj.at(rec.mode, c)) < 1.0);
            }
        }
    }
    const ConditionSequence canon = condition_for_mode(ds, 1);
    REQUIRE(canon.tokens.rows == cfg.cl);
    CHECK(!canon.is_null);
    for (int r = 0; r < cfg.cl; ++r) {
        for (int c = 0; c < cfg.d_token; ++c) {
            CHECK(canon.tokens.at(r, c) == ds.cond_proj.at(1, c));
        }
    }
    CHECK_THROWS_AS(condition_for_mode(ds, cfg.K), ContractError);
}

TEST_CASE("to_train_samples preserves pairing") {
    const SynthConfig cfg = base_cfg();
    const Dataset ds = gen_dataset(cfg);
    const std::vector<TrainSample> samples = to_train_samples(ds);
    REQUIRE(samples.size() == ds.records.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        CHECK(samples[i].x0.data == ds.records[i].x0.data);
        CHECK(samples[i].cond.tokens.data == ds.records[i].cond.data);
        CHECK(!samples[i].cond.is_null);
    }
}

TEST_CASE("dataset file round trip is lossless and byte-stable") {
    const SynthConfig cfg = base_cfg();
    const Dataset ds = gen_dataset(cfg);
    const auto dir = std::filesystem::temp_directory_path();
    const std::string p1 = (dir / "cadiff_test_data1.jsonl").string();
    const std::string p2 = (dir / "cadiff_test_data2.jsonl").string();
    write_dataset(p1, ds);
    write_dataset(p2, ds);

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    CHECK(!b1.empty());

    const Dataset back = read_dataset(p1);
    CHECK(back.config.K == cfg.K);
    CHECK(back.config.rho == cfg.rho);
    CHECK(back.centers.data == ds.centers.data);
    CHECK(back.cond_proj.data == ds.cond_proj.data);
    REQUIRE(back.records.size() == ds.records.size());
    for (size_t i = 0; i < ds.records.size(); ++i) {
        CHECK(back.records[i].x0.data == ds.records[i].x0.data);
        CHECK(back.records[i].cond.data == ds.records[i].cond.data);
        CHECK(back.records[i].mode == ds.records[i].mode);
    }
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST_CASE("read_dataset rejects malformed input") {
    const auto dir = std::filesystem::temp_directory_path();
    const std::string path = (dir / "cadiff_test_data_bad.jsonl").string();
    {
        std::ofstream f(path);
        f << "{\"not\":\"a header\"}\n";
    }
    CHECK_THROWS_AS(read_dataset(path), IoError);
    std::filesystem::remove(path);
}

TEST_CASE("unreachable center separation fails loudly") {
    SynthConfig cfg = base_cfg();
    cfg.min_center_dist = 1e6;
    CHECK_THROWS_AS(gen_dataset(cfg), ConfigError);
}

}  // TEST_SUITE
