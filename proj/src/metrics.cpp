#include "cadiff/metrics.hpp"

#include <cmath>

namespace cadiff {

double MetricReport::overall() const {
    double sum = 0.0;
    int n = 0;
    for (const auto& field : {similarity, novelty, diversity, validity, uniqueness,
                              mode_accuracy}) {
        if (field) {
            sum += *field;
            ++n;
        }
    }
    if (n == 0) throw ContractError("metrics: no fields present, overall undefined");
    return sum / n;
}

double cos_sim(const LatentSequence& a, const LatentSequence& b) {
    if (!a.tokens.same_shape(b.tokens)) {
        throw ShapeError("cos_sim: shapes differ, " + shape_str(a.tokens) + " vs " +
                         shape_str(b.tokens));
    }
    const double na = frobenius_norm(a.tokens);
    const double nb = frobenius_norm(b.tokens);
    if (na == 0.0 || nb == 0.0) throw MetricError("cos_sim: zero-norm input");
    return frobenius_dot(a.tokens, b.tokens) / (na * nb);
}

double similarity_rate(const std::vector<LatentSequence>& gen,
                       const std::vector<LatentSequence>& refs) {
    if (gen.size() != refs.size()) {
        throw ContractError("similarity_rate: gen and refs must pair up");
    }
    if (gen.empty()) throw ContractError("similarity_rate: empty sample set");
    int hits = 0;
    for (size_t i = 0; i < gen.size(); ++i) {
        if (cos_sim(gen[i], refs[i]) > 0.5) ++hits;
    }
    return static_cast<double>(hits) / gen.size();
}

double novelty_rate(const std::vector<LatentSequence>& gen,
                    const std::vector<LatentSequence>& train, double tau_nov) {
    if (gen.empty()) throw ContractError("novelty_rate: empty sample set");
    if (train.empty()) throw ContractError("novelty_rate: empty training set");
    int novel = 0;
    for (const LatentSequence& g : gen) {
        double max_cos = -1.0;
        for (const LatentSequence& t : train) {
            max_cos = std::max(max_cos, cos_sim(g, t));
        }
        if (max_cos < tau_nov) ++novel;
    }
    return static_cast<double>(novel) / gen.size();
}

double diversity_mean(const std::vector<LatentSequence>& gen) {
    if (gen.size() < 2) return 0.0;
    double sum = 0.0;
    size_t pairs = 0;
    for (size_t i = 0; i < gen.size(); ++i) {
        for (size_t j = i + 1; j < gen.size(); ++j) {
            sum += 1.0 - cos_sim(gen[i], gen[j]);
            ++pairs;
        }
    }
    return sum / static_cast<double>(pairs);
}

double uniqueness_rate(const std::vector<LatentSequence>& gen, double tau_uni) {
    if (gen.empty()) throw ContractError("uniqueness_rate: empty sample set");
    int unique = 0;
    for (size_t i = 0; i < gen.size(); ++i) {
        bool dup = false;
        for (size_t j = 0; j < i && !dup; ++j) {
            dup = cos_sim(gen[i], gen[j]) >= tau_uni;
        }
        if (!dup) ++unique;
    }
    return static_cast<double>(unique) / gen.size();
}

double validity_rate(const std::vector<LatentSequence>& gen, double token_norm_bound) {
    if (gen.empty()) throw ContractError("validity_rate: empty sample set");
    if (!(token_norm_bound > 0.0)) throw ContractError("validity_rate: bound must be positive");
    int valid = 0;
    for (const LatentSequence& g : gen) {
        bool ok = g.tokens.all_finite();
        for (int r = 0; ok && r < g.tokens.rows; ++r) {
            double n2 = 0.0;
            for (int c = 0; c < g.tokens.cols; ++c) n2 += g.tokens.at(r, c) * g.tokens.at(r, c);
            ok = std::sqrt(n2) < token_norm_bound;
        }
        if (ok) ++valid;
    }
    return static_cast<double>(valid) / gen.size();
}

double data_token_rms(const Dataset& ds) {
    if (ds.records.empty()) throw ContractError("eval: dataset has no records");
    double sum2 = 0.0;
    size_t tokens = 0;
    for (const DataRecord& rec : ds.records) {
        for (int r = 0; r < rec.x0.rows; ++r) {
            for (int c = 0; c < rec.x0.cols; ++c) sum2 += rec.x0.at(r, c) * rec.x0.at(r, c);
            ++tokens;
        }
    }
    return std::sqrt(sum2 / static_cast<double>(tokens));
}

MetricReport evaluate(const std::vector<SampleRecord>& samples, const Dataset& ds) {
    if (samples.empty()) throw ContractError("eval: no samples");
    std::vector<LatentSequence> gen;
    gen.reserve(samples.size());
    for (const SampleRecord& s : samples) {
        if (s.cond_mode >= ds.config.K) {
            throw ContractError("eval: sample cond_mode " + std::to_string(s.cond_mode) +
                                " outside the dataset's " + std::to_string(ds.config.K) +
                                " modes");
        }
        if (s.tokens.rows != ds.config.l || s.tokens.cols != ds.config.d_token) {
            throw ContractError("eval: sample tokens are " + shape_str(s.tokens) +
                                ", dataset sequences are [" + std::to_string(ds.config.l) + "x" +
                                std::to_string(ds.config.d_token) + "]");
        }
        gen.push_back({s.tokens});
    }

    MetricReport report;
    report.validity = validity_rate(gen, 10.0 * data_token_rms(ds));
    report.uniqueness = uniqueness_rate(gen, 0.99);
    report.diversity = diversity_mean(gen) / 2.0;

    report.mode_shares.assign(ds.config.K, 0.0);
    for (const LatentSequence& g : gen) {
        report.mode_shares[assign_mode(g, ds.centers)] += 1.0;
    }
    for (double& share : report.mode_shares) share /= static_cast<double>(gen.size());

    std::vector<LatentSequence> qualified;
    bool any_conditional = false;
    {
        std::vector<LatentSequence> cond_gen, cond_refs;
        int mode_hits = 0;
        for (size_t i = 0; i < samples.size(); ++i) {
            const int k = samples[i].cond_mode;
            if (k < 0) continue;
            any_conditional = true;
            Matrix ref(ds.config.l, ds.config.d_token);
            for (int r = 0; r < ref.rows; ++r) {
                for (int c = 0; c < ref.cols; ++c) ref.at(r, c) = ds.centers.at(k, c);
            }
            LatentSequence ref_seq{std::move(ref)};
            if (cos_sim(gen[i], ref_seq) > 0.5) qualified.push_back(gen[i]);
            if (assign_mode(gen[i], ds.centers) == k) ++mode_hits;
            cond_gen.push_back(gen[i]);
            cond_refs.push_back(std::move(ref_seq));
        }
        if (any_conditional) {
            report.similarity = similarity_rate(cond_gen, cond_refs);
            report.mode_accuracy = static_cast<double>(mode_hits) / cond_gen.size();
        }
    }
    if (!any_conditional) qualified = gen;

    if (!qualified.empty()) {
        std::vector<LatentSequence> train;
        train.reserve(ds.records.size());
        for (const DataRecord& rec : ds.records) train.push_back({rec.x0});
        report.novelty = novelty_rate(qualified, train, 0.8);
    }
    return report;
}

}  // namespace cadiff
