#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cadiff/config.hpp"
#include "cadiff/datagen.hpp"
#include "cadiff/denoiser.hpp"
#include "cadiff/diffusion.hpp"
#include "cadiff/metrics.hpp"
#include "cadiff/sampler.hpp"
#include "cadiff/threadpool.hpp"

namespace {

using namespace cadiff;
using nlohmann::json;

std::string fmt_g(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::vector<int> parse_int_list(const std::string& csv, const std::string& what) {
    std::vector<int> out;
    size_t start = 0;
    while (start <= csv.size()) {
        const size_t comma = csv.find(',', start);
        const std::string tok =
            csv.substr(start, comma == std::string::npos ? comma : comma - start);
        try {
            size_t used = 0;
            const int v = std::stoi(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            out.push_back(v);
        } catch (...) {
            throw ConfigError(what + ": '" + tok + "' is not an integer");
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, CommonOpts& c) {
    sub->add_option("--config", c.config_path, "JSON config file (defaults apply when omitted)");
    sub->add_option("--set", c.overrides, "override a config field, key.path=value (repeatable)")
        ->type_size(1);
}

int cmd_gen_data(const CommonOpts& common, const std::string& out_path) {
    const RunConfig rc = load_run_config(common.config_path, common.overrides);
    const Dataset ds = gen_dataset(rc.data);
    write_dataset(out_path, ds);
    std::printf("wrote %s: n=%d K=%d l=%d d_token=%d\n", out_path.c_str(), rc.data.n, rc.data.K,
                rc.data.l, rc.data.d_token);
    return 0;
}

int cmd_train(const CommonOpts& common, const std::string& data_path,
              const std::string& out_path, std::string log_path, int threads) {
    const RunConfig rc = load_run_config(common.config_path, common.overrides);
    const Dataset ds = read_dataset(data_path);
    if (rc.model.l != ds.config.l) {
        throw ConfigError("model.l: must match the dataset (l=" + std::to_string(ds.config.l) +
                          ")");
    }
    if (rc.model.d_token != ds.config.d_token) {
        throw ConfigError("model.d_token: must match the dataset (d_token=" +
                          std::to_string(ds.config.d_token) + ")");
    }
    if (rc.model.cl != ds.config.cl) {
        throw ConfigError("model.cl: must match the dataset (cl=" + std::to_string(ds.config.cl) +
                          ")");
    }
    if (log_path.empty()) log_path = out_path + ".log.csv";

    std::ofstream log(log_path, std::ios::trunc);
    if (!log) throw IoError("train: cannot open " + log_path + " for writing");
    log << "# config: " << run_config_to_json(rc).dump() << "\n";
    log << "step,epoch,loss\n";

    const int n_threads = resolve_threads(threads);
    const TrainResult tr =
        train(to_train_samples(ds), rc.train, rc.model, rc.seed, n_threads,
              [&log](const TrainLogEntry& e) {
                  log << e.step << "," << e.epoch << "," << fmt_g(e.loss) << "\n";
              });
    if (!log) throw IoError("train: write failed on " + log_path);
    log.close();

    save_checkpoint(out_path, tr.checkpoint);
    const double final_loss = tr.log.empty() ? 0.0 : tr.log.back().loss;
    std::printf("wrote %s: steps=%zu final_loss=%s log=%s\n", out_path.c_str(), tr.log.size(),
                fmt_g(final_loss).c_str(), log_path.c_str());
    return 0;
}

int cmd_sample(const CommonOpts& common, const std::string& ckpt_path,
               const std::string& data_path, int n, const std::string& plan_csv,
               const std::string& out_path) {
    RunConfig rc = load_run_config(common.config_path, common.overrides);
    if (n < 1) throw ConfigError("sample.n: must be >= 1");
    Checkpoint ck = load_checkpoint(ckpt_path);
    const Denoiser den(ck.model, std::move(ck.params));
    const DenoiserPredictor pred(den);
    const NoiseSchedule s = ck.train.make_schedule();

    const bool conditional = !data_path.empty();
    Dataset ds;
    if (conditional) {
        ds = read_dataset(data_path);
        if (ds.config.l != ck.model.l || ds.config.d_token != ck.model.d_token ||
            ds.config.cl != ck.model.cl) {
            throw ConfigError("data: dataset layout does not match the checkpoint model");
        }
    }

    SampleConfig sc = rc.sample;
    sc.S_T = sc.resolved_S_T(conditional);
    sc.validate(ck.train.T);
    rc.sample = sc;

    ArPlan explicit_plan;
    const bool has_plan = !plan_csv.empty();
    if (has_plan) {
        explicit_plan = plan_from_sizes(parse_int_list(plan_csv, "--plan"));
        if (explicit_plan.l() != ck.model.l) {
            throw ConfigError("--plan: sizes must sum to l=" + std::to_string(ck.model.l));
        }
    }

    const Rng root(sc.seed);
    std::vector<SampleRecord> recs;
    recs.reserve(n);
    for (int i = 0; i < n; ++i) {
        const Rng ri = root.child("sample", static_cast<uint64_t>(i));
        const int mode = conditional ? i % ds.config.K : -1;
        const ConditionSequence cond =
            conditional ? condition_for_mode(ds, mode) : ConditionSequence{Matrix(), true};
        LatentSequence x;
        if (sc.mode == SampleMode::single) {
            x = sample_single(pred, s, cond, sc, ri);
        } else {
            ArPlan plan = explicit_plan;
            if (!has_plan) {
                Rng pr = ri.child("plan");
                plan = generate_ar_steps(ck.model.l, ck.train.gamma, pr);
            }
            x = sample_ar(pred, s, cond, plan, sc, ri);
        }
        SampleRecord rec;
        rec.tokens = std::move(x.tokens);
        rec.cond_mode = mode;
        rec.seed = root.derive_seed("sample", static_cast<uint64_t>(i));
        recs.push_back(std::move(rec));
    }

    json echo;
    echo["run"] = run_config_to_json(rc);
    echo["checkpoint"] = {{"model", denoiser_config_to_json(ck.model)},
                          {"train", train_config_to_json(ck.train)},
                          {"seed", ck.seed},
                          {"epoch", ck.epoch}};
    echo["n"] = n;
    echo["conditional"] = conditional;
    if (has_plan) echo["plan"] = explicit_plan.sizes;
    write_samples(out_path, recs, echo.dump());
    std::printf("wrote %s: n=%d mode=%s S_T=%d w=%s %s\n", out_path.c_str(), n,
                sc.mode == SampleMode::single ? "single" : "ar", sc.S_T, fmt_g(sc.w).c_str(),
                conditional ? "conditional" : "unconditional");
    return 0;
}

json report_to_json(const MetricReport& rep) {
    const auto field = [](const std::optional<double>& f) {
        return f ? json(*f) : json(nullptr);
    };
    json j;
    j["similarity"] = field(rep.similarity);
    j["novelty"] = field(rep.novelty);
    j["diversity"] = field(rep.diversity);
    j["validity"] = field(rep.validity);
    j["uniqueness"] = field(rep.uniqueness);
    j["mode_accuracy"] = field(rep.mode_accuracy);
    j["mode_shares"] = rep.mode_shares;
    j["overall"] = rep.overall();
    return j;
}

int cmd_eval(const CommonOpts& common, const std::string& samples_path,
             const std::string& data_path, const std::string& out_path) {
    const RunConfig rc = load_run_config(common.config_path, common.overrides);
    std::string samples_echo;
    const std::vector<SampleRecord> samples = read_samples(samples_path, &samples_echo);
    const Dataset ds = read_dataset(data_path);
    const MetricReport rep = evaluate(samples, ds);

    json out;
    out["metrics"] = report_to_json(rep);
    out["config"] = {{"eval", run_config_to_json(rc)},
                     {"samples", json::parse(samples_echo)}};
    std::ofstream f(out_path, std::ios::trunc);
    if (!f) throw IoError("eval: cannot open " + out_path + " for writing");
    f << out.dump(2) << "\n";
    if (!f) throw IoError("eval: write failed on " + out_path);
    std::printf("wrote %s: overall=%s\n", out_path.c_str(), fmt_g(rep.overall()).c_str());
    return 0;
}

int cmd_mask_dump(const std::string& sizes_csv, int l, double gamma, uint64_t seed, int cl,
                  const std::string& variant_str, const std::string& csv_path) {
    ArPlan plan;
    if (!sizes_csv.empty()) {
        plan = plan_from_sizes(parse_int_list(sizes_csv, "--sizes"));
    } else {
        Rng rng(seed);
        plan = generate_ar_steps(l, gamma, rng);
    }
    const MaskVariant variant =
        variant_str == "full" ? MaskVariant::full : MaskVariant::partial;
    const AttnMask mask = build_mask(plan, cl, variant);

    std::string sizes;
    for (size_t i = 0; i < plan.sizes.size(); ++i) {
        sizes += (i ? "," : "") + std::to_string(plan.sizes[i]);
    }
    std::printf("plan=[%s] cl=%d v=%d l=%d seq=%d variant=%s\n", sizes.c_str(), mask.cl, mask.v,
                mask.l, mask.seq, variant_str.c_str());
    for (int r = 0; r < mask.seq; ++r) {
        std::string row(mask.seq, '.');
        for (int c = 0; c < mask.seq; ++c) {
            if (mask.blocked(r, c)) row[c] = '#';
        }
        std::printf("%s\n", row.c_str());
    }

    const std::vector<MaskViolation> violations = verify_mask(mask, plan, cl, variant);
    if (!violations.empty()) {
        std::fprintf(stderr, "error: mask verification found %zu violating cells\n",
                     violations.size());
        return 1;
    }
    std::printf("verify: ok\n");

    if (!csv_path.empty()) {
        std::ofstream f(csv_path, std::ios::trunc);
        if (!f) throw IoError("mask-dump: cannot open " + csv_path + " for writing");
        for (int r = 0; r < mask.seq; ++r) {
            for (int c = 0; c < mask.seq; ++c) {
                f << (mask.blocked(r, c) ? '1' : '0') << (c + 1 < mask.seq ? "," : "");
            }
            f << "\n";
        }
        if (!f) throw IoError("mask-dump: write failed on " + csv_path);
    }
    return 0;
}

int cmd_schedule_dump(int T, double beta_start, double beta_end, const std::string& out_path) {
    const NoiseSchedule s = linear_schedule(T, beta_start, beta_end);
    std::ostringstream csv;
    csv << "t,beta,alpha_bar\n";
    for (int t = 1; t <= s.T; ++t) {
        csv << t << "," << fmt_g(beta(s, t)) << "," << fmt_g(alpha_bar(s, t)) << "\n";
    }
    if (out_path.empty()) {
        std::printf("%s", csv.str().c_str());
    } else {
        std::ofstream f(out_path, std::ios::trunc);
        if (!f) throw IoError("schedule-dump: cannot open " + out_path + " for writing");
        f << csv.str();
        if (!f) throw IoError("schedule-dump: write failed on " + out_path);
        std::printf("wrote %s\n", out_path.c_str());
    }
    return 0;
}

int cmd_plan_dump(int l, double gamma, int n, uint64_t seed, const std::string& out_path) {
    if (n < 1) throw ConfigError("--n: must be >= 1");
    const Rng root(seed);
    json plans = json::array();
    std::vector<int> hist(static_cast<size_t>(l) + 1, 0);
    for (int i = 0; i < n; ++i) {
        Rng ri = root.child("plan", static_cast<uint64_t>(i));
        const ArPlan p = generate_ar_steps(l, gamma, ri);
        plans.push_back(json{{"sizes", p.sizes}, {"cumsum", p.cumsum}});
        hist[static_cast<size_t>(p.steps())] += 1;
    }
    json out;
    out["l"] = l;
    out["gamma"] = gamma;
    out["n"] = n;
    out["seed"] = seed;
    out["plans"] = std::move(plans);
    out["step_histogram"] = std::vector<int>(hist.begin() + 1, hist.end());
    out["step_pmf"] = step_count_pmf(l, gamma);
    if (out_path.empty()) {
        std::printf("%s\n", out.dump(2).c_str());
    } else {
        std::ofstream f(out_path, std::ios::trunc);
        if (!f) throw IoError("plan-dump: cannot open " + out_path + " for writing");
        f << out.dump(2) << "\n";
        if (!f) throw IoError("plan-dump: write failed on " + out_path);
        std::printf("wrote %s\n", out_path.c_str());
    }
    return 0;
}

int cmd_grad_check(const CommonOpts& common, double eps, double tol) {
    const RunConfig rc = load_run_config(common.config_path, common.overrides);
    const double err = denoiser_grad_check(rc.model, rc.seed, eps);
    const bool ok = err < tol;
    std::printf("grad_check max_rel_err=%s eps=%s tol=%s status=%s\n", fmt_g(err).c_str(),
                fmt_g(eps).c_str(), fmt_g(tol).c_str(), ok ? "ok" : "fail");
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "cadiff: autoregressive diffusion over latent token sequences.\n"
        "Seeds: gen-data uses data.seed, train uses the top-level seed, sample uses\n"
        "sample.seed. CADIFF_THREADS caps internal parallelism."};
    app.require_subcommand(1);

    CommonOpts gen_common;
    std::string gen_out;
    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset (JSONL)");
    add_common(gen, gen_common);
    gen->add_option("--out", gen_out, "output dataset path")->required();

    CommonOpts train_common;
    std::string train_data, train_out, train_log;
    int train_threads = 0;
    CLI::App* tr = app.add_subcommand("train", "train a denoiser on a dataset");
    add_common(tr, train_common);
    tr->add_option("--data", train_data, "dataset path")->required();
    tr->add_option("--out", train_out, "output checkpoint path")->required();
    tr->add_option("--log", train_log, "loss log CSV path (default: <out>.log.csv)");
    tr->add_option("--threads", train_threads, "worker threads (0 = auto)");

    CommonOpts sample_common;
    std::string sample_ckpt, sample_data, sample_plan, sample_out;
    int sample_n = 400;
    CLI::App* sa = app.add_subcommand(
        "sample", "draw samples from a checkpoint; conditional when --data is given "
                  "(modes cycle round-robin), unconditional otherwise");
    add_common(sa, sample_common);
    sa->add_option("--ckpt", sample_ckpt, "checkpoint path")->required();
    sa->add_option("--data", sample_data, "dataset path providing mode conditions");
    sa->add_option("--n", sample_n, "number of samples");
    sa->add_option("--plan", sample_plan, "explicit AR block sizes, e.g. 2,2,4 (ar mode)");
    sa->add_option("--out", sample_out, "output samples path")->required();

    CommonOpts eval_common;
    std::string eval_samples, eval_data, eval_out;
    CLI::App* ev = app.add_subcommand("eval", "score a samples file against a dataset");
    add_common(ev, eval_common);
    ev->add_option("--samples", eval_samples, "samples path")->required();
    ev->add_option("--data", eval_data, "dataset path")->required();
    ev->add_option("--out", eval_out, "output report JSON path")->required();

    std::string mask_sizes, mask_variant = "partial", mask_csv;
    int mask_l = 8, mask_cl = 1;
    double mask_gamma = 0.5;
    uint64_t mask_seed = 0;
    CLI::App* mk = app.add_subcommand("mask-dump", "print an attention mask (. attends, # blocked)");
    mk->add_option("--sizes", mask_sizes, "explicit block sizes, e.g. 2,2,3");
    mk->add_option("--l", mask_l, "token count when drawing a plan");
    mk->add_option("--gamma", mask_gamma, "step-count decay when drawing a plan");
    mk->add_option("--seed", mask_seed, "plan draw seed");
    mk->add_option("--cl", mask_cl, "condition token count");
    mk->add_option("--variant", mask_variant, "partial|full")
        ->check(CLI::IsMember({"partial", "full"}));
    mk->add_option("--csv", mask_csv, "also write the grid as 0/1 CSV");

    int sched_T = 100;
    double sched_b0 = 1e-4, sched_b1 = 0.02;
    std::string sched_out;
    CLI::App* sd = app.add_subcommand("schedule-dump", "print t, beta_t, alpha_bar_t as CSV");
    sd->add_option("--T", sched_T, "timestep count");
    sd->add_option("--beta-start", sched_b0, "first beta");
    sd->add_option("--beta-end", sched_b1, "last beta");
    sd->add_option("--out", sched_out, "output CSV path (stdout when omitted)");

    int plan_l = 8, plan_n = 1000;
    double plan_gamma = 0.5;
    uint64_t plan_seed = 0;
    std::string plan_out;
    CLI::App* pl = app.add_subcommand("plan-dump", "draw AR plans and histogram the step counts");
    pl->add_option("--l", plan_l, "token count");
    pl->add_option("--gamma", plan_gamma, "step-count decay");
    pl->add_option("--n", plan_n, "number of draws");
    pl->add_option("--seed", plan_seed, "draw seed");
    pl->add_option("--out", plan_out, "output JSON path (stdout when omitted)");

    CommonOpts gc_common;
    double gc_eps = 1e-5, gc_tol = 1e-5;
    CLI::App* gc = app.add_subcommand(
        "grad-check", "finite-difference sweep over every model parameter entry; "
                      "meant for small models, e.g. --set model.d_model=8");
    add_common(gc, gc_common);
    gc->add_option("--eps", gc_eps, "central-difference step");
    gc->add_option("--tol", gc_tol, "max relative error to accept");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(gen_common, gen_out);
        if (tr->parsed()) {
            return cmd_train(train_common, train_data, train_out, train_log, train_threads);
        }
        if (sa->parsed()) {
            return cmd_sample(sample_common, sample_ckpt, sample_data, sample_n, sample_plan,
                              sample_out);
        }
        if (ev->parsed()) return cmd_eval(eval_common, eval_samples, eval_data, eval_out);
        if (mk->parsed()) {
            return cmd_mask_dump(mask_sizes, mask_l, mask_gamma, mask_seed, mask_cl, mask_variant,
                                 mask_csv);
        }
        if (sd->parsed()) return cmd_schedule_dump(sched_T, sched_b0, sched_b1, sched_out);
        if (pl->parsed()) return cmd_plan_dump(plan_l, plan_gamma, plan_n, plan_seed, plan_out);
        if (gc->parsed()) return cmd_grad_check(gc_common, gc_eps, gc_tol);
    } catch (const cadiff::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
