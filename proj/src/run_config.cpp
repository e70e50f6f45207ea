#include "vqs/run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>

#include "vqs/errors.hpp"

namespace vqs {

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct KeySpec {
    ConfigKey key;
    Getter get;
    Setter set;
};

[[noreturn]] void bad(const std::string& value, const std::string& expected) {
    throw ValidationError("'" + value + "' is not " + expected);
}

std::uint64_t parse_u64(const std::string& v, std::uint64_t lo, std::uint64_t hi) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || p != v.data() + v.size()) bad(v, "a non-negative integer");
    if (out < lo || out > hi) {
        bad(v, hi == std::numeric_limits<std::uint64_t>::max() ? "an integer >= " + std::to_string(lo)
                                                                : "an integer in [" + std::to_string(lo) + ", " +
                                                                      std::to_string(hi) + "]");
    }
    return out;
}

double parse_real(const std::string& v) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) bad(v, "a finite number");
    return out;
}

constexpr std::uint64_t kMaxWidth = 1u << 20;
constexpr std::uint64_t kAny = std::numeric_limits<std::uint64_t>::max();

KeySpec count_key(std::string name, std::string desc, std::size_t TrainConfig::*field, std::uint64_t lo,
                  std::uint64_t hi) {
    return {{std::move(name), std::move(desc)},
            [field](const RunConfig& c) { return std::to_string(c.train.*field); },
            [field, lo, hi](RunConfig& c, const std::string& v) { c.train.*field = parse_u64(v, lo, hi); }};
}

KeySpec real_key(std::string name, std::string desc, double TrainConfig::*field,
                 std::function<bool(double)> ok, std::string expected) {
    return {{std::move(name), std::move(desc)},
            [field](const RunConfig& c) { return format_double(c.train.*field); },
            [field, ok, expected](RunConfig& c, const std::string& v) {
                const double x = parse_real(v);
                if (!ok(x)) bad(v, expected);
                c.train.*field = x;
            }};
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

const std::vector<KeySpec>& specs() {
    static const std::vector<KeySpec> table = [] {
        std::vector<KeySpec> t;
        t.push_back(count_key("hidden1", "width of the first hidden layer", &TrainConfig::hidden1, 1, kMaxWidth));
        t.push_back(count_key("hidden2", "width of the second hidden layer", &TrainConfig::hidden2, 1, kMaxWidth));
        t.push_back(count_key("latent_dim", "latent width D", &TrainConfig::latent_dim, 1, kMaxWidth));
        t.push_back(count_key("codebook_size", "number of codebook entries K", &TrainConfig::codebook_size, 1,
                              kMaxWidth));
        t.push_back({{"activation", "hidden activation: relu or tanh"},
                     [](const RunConfig& c) { return to_string(c.train.activation); },
                     [](RunConfig& c, const std::string& v) { c.train.activation = parse_activation(v); }});
        t.push_back(count_key("batch_size", "samples per step", &TrainConfig::batch_size, 1, kMaxWidth));
        t.push_back(count_key("steps", "total optimisation steps", &TrainConfig::steps, 0, kAny));
        t.push_back(real_key("learning_rate", "Adam step size", &TrainConfig::learning_rate,
                             [](double x) { return x > 0.0; }, "a number > 0"));
        t.push_back(real_key("adam_beta1", "Adam first-moment decay", &TrainConfig::adam_beta1,
                             [](double x) { return x >= 0.0 && x < 1.0; }, "a number in [0, 1)"));
        t.push_back(real_key("adam_beta2", "Adam second-moment decay", &TrainConfig::adam_beta2,
                             [](double x) { return x >= 0.0 && x < 1.0; }, "a number in [0, 1)"));
        t.push_back(real_key("adam_eps", "Adam denominator offset", &TrainConfig::adam_eps,
                             [](double x) { return x > 0.0; }, "a number > 0"));
        t.push_back(real_key("commitment", "commitment weight beta", &TrainConfig::commitment,
                             [](double x) { return x >= 0.0; }, "a number >= 0"));
        t.push_back({{"codebook_mode", "codebook update: ema or loss"},
                     [](const RunConfig& c) { return to_string(c.train.codebook_mode); },
                     [](RunConfig& c, const std::string& v) { c.train.codebook_mode = parse_codebook_mode(v); }});
        t.push_back(real_key("ema_decay", "EMA decay gamma", &TrainConfig::ema_decay,
                             [](double x) { return x > 0.0 && x < 1.0; }, "a number in (0, 1)"));
        t.push_back(real_key("ema_epsilon", "Laplace smoothing of EMA counts", &TrainConfig::ema_epsilon,
                             [](double x) { return x > 0.0; }, "a number > 0"));
        t.push_back({{"seed", "seed for every random draw"},
                     [](const RunConfig& c) { return std::to_string(c.train.seed); },
                     [](RunConfig& c, const std::string& v) { c.train.seed = parse_u64(v, 0, kAny); }});
        t.push_back(count_key("smoothing_window", "moving-average window for smoothed metrics",
                              &TrainConfig::smoothing_window, 1, kAny));
        t.push_back(count_key("checkpoint_interval", "steps between checkpoints, 0 = only at the end",
                              &TrainConfig::checkpoint_interval, 0, kAny));
        t.push_back({{"impute_k", "neighbours for k-NN imputation"},
                     [](const RunConfig& c) { return std::to_string(c.impute_k); },
                     [](RunConfig& c, const std::string& v) { c.impute_k = parse_u64(v, 1, kMaxWidth); }});
        t.push_back({{"platforms", "comma-separated hiseq|array per input file, mRNA files first"},
                     [](const RunConfig& c) {
                         std::string s;
                         for (std::size_t i = 0; i < c.platforms.size(); ++i) {
                             if (i) s += ',';
                             s += to_string(c.platforms[i]);
                         }
                         return s;
                     },
                     [](RunConfig& c, const std::string& v) {
                         c.platforms.clear();
                         std::size_t start = 0;
                         while (start <= v.size() && !v.empty()) {
                             const auto comma = v.find(',', start);
                             const auto item = trim(v.substr(start, comma == std::string::npos ? comma : comma - start));
                             c.platforms.push_back(parse_platform(item));
                             if (comma == std::string::npos) break;
                             start = comma + 1;
                         }
                     }});
        t.push_back({{"exclude", "file of feature ids to drop before intersection"},
                     [](const RunConfig& c) { return c.exclude ? c.exclude->string() : std::string(); },
                     [](RunConfig& c, const std::string& v) {
                         if (v.empty()) bad(v, "a path");
                         c.exclude = v;
                     }});
        t.push_back({{"kmeans_restarts", "k-means++ restarts"},
                     [](const RunConfig& c) { return std::to_string(c.kmeans_restarts); },
                     [](RunConfig& c, const std::string& v) { c.kmeans_restarts = parse_u64(v, 1, 100000); }});
        t.push_back({{"pca_components", "principal components computed for evaluation"},
                     [](const RunConfig& c) { return std::to_string(c.pca_components); },
                     [](RunConfig& c, const std::string& v) { c.pca_components = parse_u64(v, 2, kMaxWidth); }});
        return t;
    }();
    return table;
}

const KeySpec& spec_for(const std::string& key) {
    for (const auto& s : specs())
        if (s.key.name == key) return s;
    throw UsageError("unknown config key '" + key + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        for (const auto& s : specs()) k.push_back(s.key);
        return k;
    }();
    return keys;
}

std::string flag_for_key(const std::string& key) {
    std::string f = "--" + key;
    for (auto& c : f)
        if (c == '_') c = '-';
    return f;
}

std::string config_value(const RunConfig& cfg, const std::string& key) { return spec_for(key).get(cfg); }

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value, const std::string& origin) {
    const auto& spec = spec_for(key);
    try {
        spec.set(cfg, value);
    } catch (const Error& e) {
        throw ValidationError(origin + ": " + key + ": " + e.what());
    }
}

void apply_config_file(RunConfig& cfg, std::istream& in, const std::string& source_name) {
    std::string line;
    std::size_t line_no = 0;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        const auto body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ParseError(source_name, line_no, "expected 'key = value'");
        const auto key = trim(body.substr(0, eq));
        const auto value = trim(body.substr(eq + 1));
        bool known = false;
        for (const auto& k : config_keys()) known = known || k.name == key;
        if (!known) throw ParseError(source_name, line_no, "unknown key '" + key + "'");
        if (!seen.insert(key).second) throw ParseError(source_name, line_no, "key '" + key + "' set twice");
        try {
            spec_for(key).set(cfg, value);
        } catch (const Error& e) {
            throw ParseError(source_name, line_no, key + ": " + e.what());
        }
    }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    apply_config_file(cfg, in, path.string());
}

RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
    RunConfig cfg;
    if (file) apply_config_file(cfg, *file);
    for (const auto& [key, value] : overrides) set_config_value(cfg, key, value, flag_for_key(key));
    return cfg;
}

}  // namespace vqs
