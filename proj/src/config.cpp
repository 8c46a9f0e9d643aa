#include "cadiff/config.hpp"

#include <fstream>
#include <set>

namespace cadiff {

using nlohmann::json;

namespace {

std::string joined(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

// Wraps one JSON object, hands out typed fields with defaults, and rejects
// any key nobody asked for.
class Section {
public:
    Section(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) {
            throw ConfigError((prefix_.empty() ? std::string("config") : prefix_) +
                              ": must be a JSON object");
        }
    }

    int get_int(const std::string& key, int dflt) {
        const json* v = find(key);
        if (!v) return dflt;
        if (!v->is_number_integer()) fail(key, "an integer");
        return v->get<int>();
    }

    uint64_t get_u64(const std::string& key, uint64_t dflt) {
        const json* v = find(key);
        if (!v) return dflt;
        if (!(v->is_number_unsigned() || (v->is_number_integer() && v->get<int64_t>() >= 0))) {
            fail(key, "a non-negative integer");
        }
        return v->get<uint64_t>();
    }

    double get_double(const std::string& key, double dflt) {
        const json* v = find(key);
        if (!v) return dflt;
        if (!v->is_number()) fail(key, "a number");
        return v->get<double>();
    }

    bool get_bool(const std::string& key, bool dflt) {
        const json* v = find(key);
        if (!v) return dflt;
        if (!v->is_boolean()) fail(key, "a boolean");
        return v->get<bool>();
    }

    std::string get_enum(const std::string& key, const std::string& dflt,
                         const std::set<std::string>& allowed) {
        const json* v = find(key);
        if (!v) return dflt;
        if (!v->is_string() || !allowed.count(v->get<std::string>())) {
            std::string opts;
            for (const std::string& a : allowed) opts += (opts.empty() ? "" : "|") + a;
            fail(key, "one of " + opts);
        }
        return v->get<std::string>();
    }

    json get_object(const std::string& key) {
        const json* v = find(key);
        if (!v) return json::object();
        if (!v->is_object()) fail(key, "an object");
        return *v;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) {
                throw ConfigError(joined(prefix_, it.key()) + ": unknown key");
            }
        }
    }

private:
    const json* find(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    [[noreturn]] void fail(const std::string& key, const std::string& want) const {
        throw ConfigError(joined(prefix_, key) + ": must be " + want);
    }

    const json& j_;
    std::string prefix_;
    std::set<std::string> seen_;
};

}  // namespace

json synth_config_to_json(const SynthConfig& c) {
    return json{{"K", c.K},         {"n", c.n},
                {"l", c.l},         {"d_token", c.d_token},
                {"rho", c.rho},     {"sigma", c.sigma},
                {"cl", c.cl},       {"min_center_dist", c.min_center_dist},
                {"seed", c.seed}};
}

json denoiser_config_to_json(const DenoiserConfig& c) {
    return json{{"d_token", c.d_token}, {"d_model", c.d_model}, {"n_heads", c.n_heads},
                {"n_blocks", c.n_blocks}, {"l", c.l},           {"cl", c.cl},
                {"T", c.T},             {"d_ff", c.d_ff}};
}

json train_config_to_json(const TrainConfig& c) {
    return json{{"T", c.T},
                {"beta_start", c.beta_start},
                {"beta_end", c.beta_end},
                {"gamma", c.gamma},
                {"cfg_dropout", c.cfg_dropout},
                {"lr", c.lr},
                {"adam_beta1", c.adam_beta1},
                {"adam_beta2", c.adam_beta2},
                {"adam_eps", c.adam_eps},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"variant", c.variant == MaskVariant::partial ? "partial" : "full"},
                {"loss_scope",
                 c.loss_scope == LossScope::all_noisy ? "all_noisy" : "current_step"},
                {"shared_t", c.shared_t}};
}

json sample_config_to_json(const SampleConfig& c) {
    return json{{"S_T", c.S_T},
                {"w", c.w},
                {"mode", c.mode == SampleMode::single ? "single" : "ar"},
                {"seed", c.seed}};
}

json run_config_to_json(const RunConfig& c) {
    return json{{"seed", c.seed},
                {"data", synth_config_to_json(c.data)},
                {"model", denoiser_config_to_json(c.model)},
                {"train", train_config_to_json(c.train)},
                {"sample", sample_config_to_json(c.sample)}};
}

SynthConfig synth_config_from_json(const json& j, const std::string& prefix) {
    Section s(j, prefix);
    SynthConfig c;
    c.K = s.get_int("K", c.K);
    c.n = s.get_int("n", c.n);
    c.l = s.get_int("l", c.l);
    c.d_token = s.get_int("d_token", c.d_token);
    c.rho = s.get_double("rho", c.rho);
    c.sigma = s.get_double("sigma", c.sigma);
    c.cl = s.get_int("cl", c.cl);
    c.min_center_dist = s.get_double("min_center_dist", c.min_center_dist);
    c.seed = s.get_u64("seed", c.seed);
    s.finish();
    return c;
}

DenoiserConfig denoiser_config_from_json(const json& j, const std::string& prefix) {
    Section s(j, prefix);
    DenoiserConfig c;
    c.d_token = s.get_int("d_token", c.d_token);
    c.d_model = s.get_int("d_model", c.d_model);
    c.n_heads = s.get_int("n_heads", c.n_heads);
    c.n_blocks = s.get_int("n_blocks", c.n_blocks);
    c.l = s.get_int("l", c.l);
    c.cl = s.get_int("cl", c.cl);
    c.T = s.get_int("T", c.T);
    c.d_ff = s.get_int("d_ff", c.d_ff);
    s.finish();
    return c;
}

TrainConfig train_config_from_json(const json& j, const std::string& prefix) {
    Section s(j, prefix);
    TrainConfig c;
    c.T = s.get_int("T", c.T);
    c.beta_start = s.get_double("beta_start", c.beta_start);
    c.beta_end = s.get_double("beta_end", c.beta_end);
    c.gamma = s.get_double("gamma", c.gamma);
    c.cfg_dropout = s.get_double("cfg_dropout", c.cfg_dropout);
    c.lr = s.get_double("lr", c.lr);
    c.adam_beta1 = s.get_double("adam_beta1", c.adam_beta1);
    c.adam_beta2 = s.get_double("adam_beta2", c.adam_beta2);
    c.adam_eps = s.get_double("adam_eps", c.adam_eps);
    c.epochs = s.get_int("epochs", c.epochs);
    c.batch_size = s.get_int("batch_size", c.batch_size);
    c.variant = s.get_enum("variant", c.variant == MaskVariant::partial ? "partial" : "full",
                           {"partial", "full"}) == "partial"
                    ? MaskVariant::partial
                    : MaskVariant::full;
    c.loss_scope = s.get_enum("loss_scope",
                              c.loss_scope == LossScope::all_noisy ? "all_noisy" : "current_step",
                              {"all_noisy", "current_step"}) == "all_noisy"
                       ? LossScope::all_noisy
                       : LossScope::current_step;
    c.shared_t = s.get_bool("shared_t", c.shared_t);
    s.finish();
    return c;
}

SampleConfig sample_config_from_json(const json& j, const std::string& prefix) {
    Section s(j, prefix);
    SampleConfig c;
    c.S_T = s.get_int("S_T", c.S_T);
    c.w = s.get_double("w", c.w);
    c.mode = s.get_enum("mode", c.mode == SampleMode::single ? "single" : "ar",
                        {"single", "ar"}) == "single"
                 ? SampleMode::single
                 : SampleMode::ar;
    c.seed = s.get_u64("seed", c.seed);
    s.finish();
    if (c.S_T < 0) throw ConfigError(joined(prefix, "S_T") + ": must be >= 0");
    if (!(c.w >= 0.0)) throw ConfigError(joined(prefix, "w") + ": must be >= 0");
    return c;
}

RunConfig run_config_from_json(const json& j) {
    Section s(j, "");
    RunConfig c;
    c.seed = s.get_u64("seed", c.seed);
    c.data = synth_config_from_json(s.get_object("data"), "data");
    c.model = denoiser_config_from_json(s.get_object("model"), "model");
    c.train = train_config_from_json(s.get_object("train"), "train");
    c.sample = sample_config_from_json(s.get_object("sample"), "sample");
    s.finish();
    c.data.validate();
    c.model.validate();
    c.train.validate();
    return c;
}

void apply_override(json& tree, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "': expected key.path=value");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    json* node = &tree;
    size_t start = 0;
    while (true) {
        const size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) {
            throw ConfigError("override '" + assignment + "': empty key segment");
        }
        if (dot == std::string::npos) {
            json value = json::parse(raw, nullptr, false);
            if (value.is_discarded()) value = raw;
            (*node)[key] = std::move(value);
            return;
        }
        json& next = (*node)[key];
        if (next.is_null()) next = json::object();
        if (!next.is_object()) {
            throw ConfigError("override '" + assignment + "': " + key + " is not a section");
        }
        node = &next;
        start = dot + 1;
    }
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
    json tree = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw IoError("config: cannot open " + path);
        try {
            tree = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError("config: malformed JSON in " + path + ": " + e.what());
        }
    }
    for (const std::string& assignment : overrides) apply_override(tree, assignment);
    return run_config_from_json(tree);
}

}  // namespace cadiff
