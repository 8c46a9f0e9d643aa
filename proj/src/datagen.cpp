#include "cadiff/datagen.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "cadiff/config.hpp"

namespace cadiff {

using nlohmann::json;

void SynthConfig::validate() const {
    if (K < 2) throw ConfigError("data.K: must be >= 2");
    if (n < 1) throw ConfigError("data.n: must be >= 1");
    if (l < 1) throw ConfigError("data.l: must be >= 1");
    if (d_token < 1) throw ConfigError("data.d_token: must be >= 1");
    if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("data.rho: must be in [0,1)");
    if (!(sigma > 0.0)) throw ConfigError("data.sigma: must be positive");
    if (cl < 1) throw ConfigError("data.cl: must be >= 1");
    if (!(min_center_dist >= 0.0)) throw ConfigError("data.min_center_dist: must be >= 0");
}

namespace {

double min_pairwise_dist(const Matrix& centers) {
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a < centers.rows; ++a) {
        for (int b = a + 1; b < centers.rows; ++b) {
            double d2 = 0.0;
            for (int c = 0; c < centers.cols; ++c) {
                const double diff = centers.at(a, c) - centers.at(b, c);
                d2 += diff * diff;
            }
            best = std::min(best, std::sqrt(d2));
        }
    }
    return best;
}

Matrix draw_centers(const SynthConfig& cfg, const Rng& root) {
    for (uint64_t attempt = 0;; ++attempt) {
        Rng r = root.child("centers", attempt);
        const Matrix centers = Matrix::gaussian(cfg.K, cfg.d_token, r, 2.0);
        if (cfg.min_center_dist <= 0.0 || min_pairwise_dist(centers) >= cfg.min_center_dist) {
            return centers;
        }
        if (attempt == 9999) {
            throw ConfigError("data.min_center_dist: no center set found after 10000 draws");
        }
    }
}

}  // namespace

Dataset gen_dataset(const SynthConfig& cfg) {
    cfg.validate();
    const Rng root(cfg.seed);

    Dataset ds;
    ds.config = cfg;
    ds.centers = draw_centers(cfg, root);
    {
        Rng r = root.child("proj");
        ds.cond_proj = Matrix::gaussian(cfg.K, cfg.d_token, r);
    }

    const double innov = std::sqrt(1.0 - cfg.rho * cfg.rho);
    ds.records.reserve(cfg.n);
    for (int i = 0; i < cfg.n; ++i) {
        Rng r = root.child("sample", static_cast<uint64_t>(i));
        DataRecord rec;
        rec.mode = static_cast<int>(r.below(static_cast<uint64_t>(cfg.K)));

        rec.x0 = Matrix(cfg.l, cfg.d_token);
        std::vector<double> u(cfg.d_token);
        for (int row = 0; row < cfg.l; ++row) {
            for (int c = 0; c < cfg.d_token; ++c) {
                const double step = cfg.sigma * r.normal();
                u[c] = (row == 0) ? step : cfg.rho * u[c] + innov * step;
                rec.x0.at(row, c) = ds.centers.at(rec.mode, c) + u[c];
            }
        }

        rec.cond = Matrix(cfg.cl, cfg.d_token);
        for (int row = 0; row < cfg.cl; ++row) {
            for (int c = 0; c < cfg.d_token; ++c) {
                rec.cond.at(row, c) = ds.cond_proj.at(rec.mode, c) + 0.1 * r.normal();
            }
        }
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

int assign_mode(const LatentSequence& x, const Matrix& centers) {
    if (centers.rows < 1) throw ContractError("assign_mode: empty center set");
    if (x.tokens.rows < 1 || x.tokens.cols != centers.cols) {
        throw ShapeError("assign_mode: tokens " + shape_str(x.tokens) + " vs centers " +
                         shape_str(centers));
    }
    std::vector<double> mean(centers.cols, 0.0);
    for (int r = 0; r < x.tokens.rows; ++r) {
        for (int c = 0; c < x.tokens.cols; ++c) mean[c] += x.tokens.at(r, c);
    }
    for (double& m : mean) m /= x.tokens.rows;

    int best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int k = 0; k < centers.rows; ++k) {
        double d2 = 0.0;
        for (int c = 0; c < centers.cols; ++c) {
            const double diff = mean[c] - centers.at(k, c);
            d2 += diff * diff;
        }
        if (d2 < best_d2) {
            best_d2 = d2;
            best = k;
        }
    }
    return best;
}

ConditionSequence condition_for_mode(const Dataset& ds, int k) {
    if (k < 0 || k >= ds.config.K) throw ContractError("condition_for_mode: mode out of range");
    Matrix cond(ds.config.cl, ds.config.d_token);
    for (int r = 0; r < cond.rows; ++r) {
        for (int c = 0; c < cond.cols; ++c) cond.at(r, c) = ds.cond_proj.at(k, c);
    }
    return {std::move(cond), false};
}

std::vector<TrainSample> to_train_samples(const Dataset& ds) {
    std::vector<TrainSample> out;
    out.reserve(ds.records.size());
    for (const DataRecord& rec : ds.records) {
        out.push_back({ConditionSequence{rec.cond, false}, rec.x0});
    }
    return out;
}

namespace {

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (int r = 0; r < m.rows; ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols; ++c) row.push_back(m.at(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j, int rows, int cols, const std::string& what) {
    if (!j.is_array() || static_cast<int>(j.size()) != rows) {
        throw IoError("dataset: " + what + " must have " + std::to_string(rows) + " rows");
    }
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        if (!j[r].is_array() || static_cast<int>(j[r].size()) != cols) {
            throw IoError("dataset: " + what + " row " + std::to_string(r) + " must have " +
                          std::to_string(cols) + " entries");
        }
        for (int c = 0; c < cols; ++c) m.at(r, c) = j[r][c].get<double>();
    }
    return m;
}

}  // namespace

void write_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("dataset: cannot open " + path + " for writing");
    json header;
    header["centers"] = matrix_to_json(ds.centers);
    header["cond_proj"] = matrix_to_json(ds.cond_proj);
    header["config"] = synth_config_to_json(ds.config);
    out << header.dump() << "\n";
    for (const DataRecord& rec : ds.records) {
        json line;
        line["cond"] = matrix_to_json(rec.cond);
        line["x0"] = matrix_to_json(rec.x0);
        line["mode"] = rec.mode;
        out << line.dump() << "\n";
    }
    if (!out) throw IoError("dataset: write failed on " + path);
}

Dataset read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("dataset: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("dataset: missing header in " + path);
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw IoError("dataset: malformed header: " + std::string(e.what()));
    }

    Dataset ds;
    try {
        ds.config = synth_config_from_json(header.at("config"), "data");
        ds.config.validate();
        ds.centers =
            matrix_from_json(header.at("centers"), ds.config.K, ds.config.d_token, "centers");
        ds.cond_proj =
            matrix_from_json(header.at("cond_proj"), ds.config.K, ds.config.d_token, "cond_proj");
    } catch (const json::exception& e) {
        throw IoError("dataset: malformed header: " + std::string(e.what()));
    }

    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError("dataset: malformed record at line " + std::to_string(line_no) + ": " +
                          e.what());
        }
        DataRecord dr;
        try {
            dr.cond = matrix_from_json(rec.at("cond"), ds.config.cl, ds.config.d_token, "cond");
            dr.x0 = matrix_from_json(rec.at("x0"), ds.config.l, ds.config.d_token, "x0");
            dr.mode = rec.at("mode").get<int>();
        } catch (const json::exception& e) {
            throw IoError("dataset: malformed record at line " + std::to_string(line_no) + ": " +
                          e.what());
        }
        if (dr.mode < 0 || dr.mode >= ds.config.K) {
            throw IoError("dataset: mode out of range at line " + std::to_string(line_no));
        }
        ds.records.push_back(std::move(dr));
    }
    return ds;
}

}  // namespace cadiff
