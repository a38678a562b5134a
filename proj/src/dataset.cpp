#include "ctsat/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "ctsat/error.hpp"
#include "ctsat/io.hpp"

namespace ctsat {

namespace {

std::vector<double> arange(double start, double stop, double step) {
    std::vector<double> v;
    const auto n = static_cast<std::size_t>(std::llround((stop - start) / step)) + 1;
    for (std::size_t i = 0; i < n; ++i) v.push_back(start + static_cast<double>(i) * step);
    return v;
}

std::vector<double> degrees(double start, double stop, double step) {
    auto v = arange(start, stop, step);
    for (double& d : v) d = d * std::numbers::pi / 180.0;
    return v;
}

constexpr int kSchemaVersion = 1;

}  // namespace

TraversalGrid TraversalGrid::table2() {
    TraversalGrid g;
    g.t1_values = arange(0.05, 0.30, 0.01);
    g.theta_values = degrees(0.0, 330.0, 15.0);
    g.severity_values = {20.0, 15.0, 8.0, 3.0, 1.5};
    g.t2_values = arange(0.5, 2.0, 0.25);
    g.remanence_values = {-0.8, -0.4, -0.2, 0.0, 0.2, 0.4, 0.8};
    return g;
}

TraversalGrid TraversalGrid::desk() {
    TraversalGrid g;
    g.t1_values = {0.05, 0.1, 0.2, 0.3};
    g.theta_values = degrees(0.0, 345.0, 15.0);
    g.severity_values = {20.0, 15.0, 8.0, 3.0, 1.5};
    g.t2_values = {0.5, 1.0, 2.0};
    g.remanence_values = {-0.8, 0.0, 0.8};
    return g;
}

TraversalGrid TraversalGrid::small() {
    TraversalGrid g;
    g.t1_values = {0.1, 0.3};
    g.theta_values = degrees(0.0, 90.0, 90.0);
    g.severity_values = {20.0, 3.0};
    g.t2_values = {1.0};
    g.remanence_values = {0.0, 0.8};
    return g;
}

TraversalGrid TraversalGrid::by_name(const std::string& name) {
    if (name == "table2") return table2();
    if (name == "desk") return desk();
    if (name == "small") return small();
    throw InputError("unknown grid '" + name + "' (expected table2, desk or small)");
}

std::size_t TraversalGrid::size() const {
    return t1_values.size() * theta_values.size() * severity_values.size() * t2_values.size() *
           remanence_values.size();
}

GridPoint TraversalGrid::point(std::size_t index) const {
    if (index >= size()) throw InputError("grid index out of range");
    GridPoint p;
    std::size_t i = index;
    p.remanence = remanence_values[i % remanence_values.size()];
    i /= remanence_values.size();
    p.t2 = t2_values[i % t2_values.size()];
    i /= t2_values.size();
    p.severity = severity_values[i % severity_values.size()];
    i /= severity_values.size();
    p.theta = theta_values[i % theta_values.size()];
    i /= theta_values.size();
    p.t1 = t1_values[i];
    return p;
}

void TraversalGrid::validate() const {
    if (t1_values.empty() || theta_values.empty() || severity_values.empty() || t2_values.empty() ||
        remanence_values.empty())
        throw InputError("every grid axis needs at least one value");
}

bool LabeledSample::saturated() const {
    return std::any_of(target.begin(), target.end(), [](double v) { return v > 0.5; });
}

FaultScenario scenario_for(const GridPoint& p, const DatabaseConfig& cfg) {
    return FaultScenario::make(p.severity * cfg.rated_peak, p.theta, p.t1);
}

CtParameters ct_for(const GridPoint& p, const CtParameters& base) {
    CtParameters c = base.with_time_constant(p.t2);
    c.remanence_fraction = p.remanence;
    return c;
}

std::vector<double> normalize(std::span<const double> values) {
    double peak = 0.0;
    for (double v : values) peak = std::max(peak, std::abs(v));
    if (!(peak > 0.0)) throw UndefinedNormalizer("cannot normalize an all-zero waveform");
    std::vector<double> out(values.begin(), values.end());
    for (double& v : out) v /= peak;
    return out;
}

std::vector<double> normalize(const SampledWaveform& secondary) { return normalize(std::span<const double>(secondary.values)); }

Database build_database(const TraversalGrid& grid, const CtParameters& ct_base, const DatabaseConfig& cfg) {
    grid.validate();
    const std::size_t n = grid.size();
    std::vector<LabeledSample> slots(n);
    std::vector<std::string> errors(n);
    const long long count = static_cast<long long>(n);

#pragma omp parallel for schedule(dynamic, 16)
    for (long long i = 0; i < count; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        try {
            const GridPoint p = grid.point(idx);
            const FaultScenario sc = scenario_for(p, cfg);
            const CtParameters ct = ct_for(p, ct_base);
            SimulationOptions opt;
            opt.zeta = cfg.zeta;
            const auto r = simulate(sc, ct, cfg.sample_rate, cfg.duration, opt);
            LabeledSample s;
            s.input = normalize(r.secondary);
            s.target.assign(r.mask.flags.begin(), r.mask.flags.end());
            s.meta.scenario = sc;
            s.meta.ct = ct;
            s.meta.window_ms = cfg.duration * 1e3;
            s.meta.grid_index = idx;
            slots[idx] = std::move(s);
        } catch (const std::exception& e) {
            errors[idx] = e.what();
        }
    }

    Database db;
    db.raw_count = n;
    std::vector<LabeledSample> kept;
    kept.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!errors[i].empty()) {
            db.skipped.push_back({i, errors[i]});
            continue;
        }
        kept.push_back(std::move(slots[i]));
    }
    if (cfg.balance) kept = balance(std::move(kept), cfg.balance_ratio, cfg.seed);
    for (const auto& s : kept) (s.saturated() ? db.saturated_count : db.unsaturated_count)++;
    db.samples = std::move(kept);
    return db;
}

std::vector<LabeledSample> balance(std::vector<LabeledSample> samples, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0)) throw InputError("balance ratio must be > 0");
    std::vector<std::size_t> sat, unsat;
    for (std::size_t i = 0; i < samples.size(); ++i) (samples[i].saturated() ? sat : unsat).push_back(i);
    const auto limit = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(sat.size()) + 1e-9));
    if (unsat.size() <= limit) return samples;
    std::mt19937_64 rng(mix_seed(seed, 0xba1a'0ce5ULL));
    std::shuffle(unsat.begin(), unsat.end(), rng);
    unsat.resize(limit);
    std::vector<char> keep(samples.size(), 0);
    for (auto i : sat) keep[i] = 1;
    for (auto i : unsat) keep[i] = 1;
    std::vector<LabeledSample> out;
    out.reserve(sat.size() + limit);
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (keep[i]) out.push_back(std::move(samples[i]));
    return out;
}

std::vector<AugmentKind> parse_augment_kinds(const std::string& csv) {
    std::vector<AugmentKind> kinds;
    if (csv.empty() || csv == "none") return kinds;
    for (const auto& tok : io::split_csv_line(csv)) {
        if (tok == "polarity") kinds.push_back(AugmentKind::Polarity);
        else if (tok == "noise") kinds.push_back(AugmentKind::Noise);
        else if (tok == "window") kinds.push_back(AugmentKind::Window);
        else throw InputError("unknown augmentation '" + tok + "' (expected polarity, noise, window)");
    }
    return kinds;
}

std::string to_string(AugmentKind kind) {
    switch (kind) {
        case AugmentKind::Polarity: return "polarity";
        case AugmentKind::Noise: return "noise";
        case AugmentKind::Window: return "window";
    }
    return "unknown";
}

std::vector<double> add_noise(std::span<const double> x, double snr_db, std::mt19937_64& rng) {
    double power = 0.0;
    for (double v : x) power += v * v;
    power /= static_cast<double>(x.size());
    const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
    std::normal_distribution<double> gauss(0.0, sigma);
    std::vector<double> out(x.begin(), x.end());
    for (double& v : out) v += gauss(rng);
    return out;
}

std::vector<LabeledSample> augment(const LabeledSample& sample, const AugmentConfig& cfg, std::mt19937_64& rng) {
    std::vector<LabeledSample> out{sample};
    auto pick_snr = [&] {
        std::uniform_int_distribution<std::size_t> d(0, cfg.snr_db.size() - 1);
        return cfg.snr_db[d(rng)];
    };
    auto noisy = [&](LabeledSample& s) {
        s.input = add_noise(s.input, pick_snr(), rng);
        s.meta.augmentations.push_back("noise");
    };
    for (AugmentKind kind : cfg.kinds) {
        LabeledSample s = sample;
        if (kind == AugmentKind::Polarity) {
            for (double& v : s.input) v = -v;
            s.meta.augmentations.push_back("polarity");
            if (cfg.stack_noise) noisy(s);
        } else if (kind == AugmentKind::Noise) {
            noisy(s);
        } else {
            std::vector<std::size_t> lengths;
            for (double ms : cfg.window_ms) {
                const auto len = static_cast<std::size_t>(std::llround(ms * 1e-3 * cfg.sample_rate));
                if (len >= 1 && len < sample.input.size()) lengths.push_back(len);
            }
            if (lengths.empty()) continue;
            std::uniform_int_distribution<std::size_t> d(0, lengths.size() - 1);
            const std::size_t len = lengths[d(rng)];
            s.input.resize(len);
            s.target.resize(len);
            s.meta.window_ms = static_cast<double>(len) / cfg.sample_rate * 1e3;
            s.meta.augmentations.push_back("window");
            // a prefix is presented to the detector after its own max-abs scaling
            try {
                s.input = normalize(s.input);
            } catch (const UndefinedNormalizer&) {
                continue;
            }
            if (cfg.stack_noise) noisy(s);
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<LabeledSample> augment_all(const std::vector<LabeledSample>& samples, const AugmentConfig& cfg,
                                       std::uint64_t seed) {
    std::vector<std::vector<LabeledSample>> parts(samples.size());
    const long long n = static_cast<long long>(samples.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
        parts[static_cast<std::size_t>(i)] = augment(samples[static_cast<std::size_t>(i)], cfg, rng);
    }
    std::vector<LabeledSample> out;
    for (auto& p : parts)
        for (auto& s : p) out.push_back(std::move(s));
    return out;
}

std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> split(std::vector<LabeledSample> samples,
                                                                        double ratio, std::uint64_t seed) {
    if (samples.empty()) throw InputError("cannot split an empty sample set");
    if (!(ratio > 0.0 && ratio < 1.0)) throw InputError("split ratio must lie in (0, 1)");
    std::mt19937_64 rng(mix_seed(seed, 0x5b117ULL));
    for (std::size_t i = samples.size() - 1; i > 0; --i) {
        std::uniform_int_distribution<std::size_t> d(0, i);
        std::swap(samples[i], samples[d(rng)]);
    }
    const auto ntrain = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(samples.size())));
    std::vector<LabeledSample> train(std::make_move_iterator(samples.begin()),
                                     std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(ntrain)));
    std::vector<LabeledSample> test(std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(ntrain)),
                                    std::make_move_iterator(samples.end()));
    return {std::move(train), std::move(test)};
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

nlohmann::json to_json(const TraversalGrid& g) {
    return {{"t1_values", g.t1_values},
            {"theta_values", g.theta_values},
            {"severity_values", g.severity_values},
            {"t2_values", g.t2_values},
            {"remanence_values", g.remanence_values}};
}

TraversalGrid grid_from_json(const nlohmann::json& j) {
    TraversalGrid g;
    try {
        g.t1_values = j.at("t1_values").get<std::vector<double>>();
        g.theta_values = j.at("theta_values").get<std::vector<double>>();
        g.severity_values = j.at("severity_values").get<std::vector<double>>();
        g.t2_values = j.at("t2_values").get<std::vector<double>>();
        g.remanence_values = j.at("remanence_values").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("grid JSON: ") + e.what());
    }
    g.validate();
    return g;
}

nlohmann::json to_json(const LabeledSample& s) {
    std::vector<int> target(s.target.size());
    for (std::size_t i = 0; i < target.size(); ++i) target[i] = s.target[i] > 0.5 ? 1 : 0;
    return {{"input", s.input},
            {"target", target},
            {"meta",
             {{"scenario", to_json(s.meta.scenario)},
              {"ct", to_json(s.meta.ct)},
              {"window_ms", s.meta.window_ms},
              {"augmentations", s.meta.augmentations},
              {"grid_index", s.meta.grid_index}}}};
}

LabeledSample sample_from_json(const nlohmann::json& j) {
    LabeledSample s;
    try {
        s.input = j.at("input").get<std::vector<double>>();
        s.target = j.at("target").get<std::vector<double>>();
        if (j.contains("meta")) {
            const auto& m = j.at("meta");
            s.meta.scenario = scenario_from_json(m.at("scenario"));
            s.meta.ct = ct_from_json(m.at("ct"));
            s.meta.window_ms = m.value("window_ms", 0.0);
            s.meta.augmentations = m.value("augmentations", std::vector<std::string>{});
            s.meta.grid_index = m.value("grid_index", std::size_t{0});
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("sample JSON: ") + e.what());
    }
    if (s.input.size() != s.target.size() || s.input.empty())
        throw InputError("sample input and target lengths differ or are empty");
    return s;
}

namespace {

std::string shard_name(const std::string& prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s-%04zu.jsonl", prefix.c_str(), i);
    return buf;
}

nlohmann::json write_shards(const std::filesystem::path& dir, const std::string& prefix,
                            const std::vector<LabeledSample>& samples, std::size_t shard_size) {
    nlohmann::json list = nlohmann::json::array();
    for (std::size_t start = 0, shard = 0; start < samples.size(); start += shard_size, ++shard) {
        std::string text;
        const std::size_t end = std::min(samples.size(), start + shard_size);
        for (std::size_t i = start; i < end; ++i) text += to_json(samples[i]).dump() + "\n";
        const auto name = shard_name(prefix, shard);
        io::write_file_atomic(dir / name, text);
        list.push_back({{"file", name}, {"count", end - start}, {"sha256", io::sha256_hex(text)}});
    }
    return list;
}

std::vector<LabeledSample> read_shards(const std::filesystem::path& dir, const nlohmann::json& list) {
    std::vector<LabeledSample> out;
    for (const auto& entry : list) {
        const auto name = entry.at("file").get<std::string>();
        const std::string text = io::read_file(dir / name);
        if (io::sha256_hex(text) != entry.at("sha256").get<std::string>())
            throw InputError("checksum mismatch for shard " + (dir / name).string());
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                out.push_back(sample_from_json(nlohmann::json::parse(line)));
            } catch (const nlohmann::json::parse_error& e) {
                throw InputError(name + ": " + e.what());
            }
        }
    }
    return out;
}

}  // namespace

nlohmann::json write_dataset(const std::filesystem::path& dir, const std::vector<LabeledSample>& train,
                             const std::vector<LabeledSample>& test, const nlohmann::json& extra,
                             std::size_t shard_size) {
    if (shard_size == 0) throw InputError("shard size must be >= 1");
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = extra.is_object() ? extra : nlohmann::json::object();
    manifest["schema_version"] = kSchemaVersion;
    manifest["counts"] = {{"train", train.size()}, {"test", test.size()}};
    manifest["shards"] = {{"train", write_shards(dir, "train", train, shard_size)},
                          {"test", write_shards(dir, "test", test, shard_size)}};
    io::write_file_atomic(dir / "manifest.json", io::dump_json(manifest));
    return manifest;
}

DatasetFiles read_dataset(const std::filesystem::path& dir) {
    DatasetFiles d;
    d.manifest = io::read_json(dir / "manifest.json");
    if (d.manifest.value("schema_version", 0) != kSchemaVersion)
        throw InputError("unsupported dataset schema_version in " + (dir / "manifest.json").string());
    try {
        d.train = read_shards(dir, d.manifest.at("shards").at("train"));
        d.test = read_shards(dir, d.manifest.at("shards").at("test"));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("dataset manifest: ") + e.what());
    }
    return d;
}

}  // namespace ctsat
