#include "mixsup/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "mixsup/error.hpp"
#include "mixsup/rng.hpp"

namespace mixsup {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(int line, std::string_view key, std::string_view value, std::string_view want) {
    throw Error(Errc::InvalidConfig, "line " + std::to_string(line) + ": '" + std::string(key) + "' expects " +
                                         std::string(want) + ", got '" + std::string(value) + "'");
}

template <class T>
T parse_number(int line, std::string_view key, std::string_view value) {
    T out{};
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc{} || ptr != end) bad_value(line, key, value, "a number");
    return out;
}

bool parse_bool(int line, std::string_view key, std::string_view value) {
    if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "off" || value == "no") return false;
    bad_value(line, key, value, "true/false");
}

std::vector<std::string_view> split_list(std::string_view value) {
    std::vector<std::string_view> parts;
    while (true) {
        const auto comma = value.find(',');
        parts.push_back(trim(value.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        value.remove_prefix(comma + 1);
    }
    return parts;
}

template <class T>
std::vector<T> parse_number_list(int line, std::string_view key, std::string_view value) {
    std::vector<T> out;
    for (auto part : split_list(value)) out.push_back(parse_number<T>(line, key, part));
    return out;
}

std::pair<std::string_view, std::string_view> split_tagged(int line, std::string_view key, std::string_view value) {
    const auto colon = value.find(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == value.size()) {
        bad_value(line, key, value, "<tag>:<path>");
    }
    return {trim(value.substr(0, colon)), trim(value.substr(colon + 1))};
}

SupervisionKind parse_kind_at(int line, std::string_view key, std::string_view value) {
    try {
        return parse_kind(value);
    } catch (const Error&) {
        bad_value(line, key, value, "pixel|polygon|box|scribble|point");
    }
}

std::string fmt_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class Range, class Fn>
std::string join(const Range& items, Fn&& fn) {
    std::string out;
    for (const auto& item : items) {
        if (!out.empty()) out += ',';
        out += fn(item);
    }
    return out;
}

using Setter = std::function<void(RunConfig&, int, std::string_view, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
    static const std::map<std::string, Setter, std::less<>> table = {
        {"learning_rate", [](RunConfig& c, int l, auto k, auto v) { c.train.learning_rate = parse_number<double>(l, k, v); }},
        {"momentum", [](RunConfig& c, int l, auto k, auto v) { c.train.momentum = parse_number<double>(l, k, v); }},
        {"batch_size", [](RunConfig& c, int l, auto k, auto v) { c.train.batch_size = parse_number<int>(l, k, v); }},
        {"iterations", [](RunConfig& c, int l, auto k, auto v) { c.train.iterations = parse_number<int>(l, k, v); }},
        {"size_set", [](RunConfig& c, int l, auto k, auto v) { c.train.size_set = parse_number_list<int>(l, k, v); }},
        {"seed", [](RunConfig& c, int l, auto k, auto v) { c.train.seed = parse_number<std::uint64_t>(l, k, v); }},
        {"lambda_u", [](RunConfig& c, int l, auto k, auto v) { c.train.weights.uncertainty = parse_number<double>(l, k, v); }},
        {"lambda_c", [](RunConfig& c, int l, auto k, auto v) { c.train.weights.consistency = parse_number<double>(l, k, v); }},
        {"lambda_p", [](RunConfig& c, int l, auto k, auto v) { c.train.weights.point_bce = parse_number<double>(l, k, v); }},
        {"point_bce", [](RunConfig& c, int l, auto k, auto v) { c.train.weights.use_point_bce = parse_bool(l, k, v); }},
        {"checkpoint_every", [](RunConfig& c, int l, auto k, auto v) { c.train.checkpoint_every = parse_number<int>(l, k, v); }},
        {"val_every", [](RunConfig& c, int l, auto k, auto v) { c.train.val_every = parse_number<int>(l, k, v); }},
        {"schedule",
         [](RunConfig& c, int l, auto k, auto v) {
             if (v == "constant") c.train.schedule = LrSchedule::Constant;
             else if (v == "poly") c.train.schedule = LrSchedule::Poly;
             else bad_value(l, k, v, "constant|poly");
         }},
        {"poly_power", [](RunConfig& c, int l, auto k, auto v) { c.train.poly_power = parse_number<double>(l, k, v); }},
        {"grad_clip", [](RunConfig& c, int l, auto k, auto v) { c.train.grad_clip = parse_number<double>(l, k, v); }},
        {"sampling",
         [](RunConfig& c, int l, auto k, auto v) {
             if (v == "round_robin") c.train.sampling = SamplingMode::RoundRobin;
             else if (v == "proportional") c.train.sampling = SamplingMode::Proportional;
             else bad_value(l, k, v, "round_robin|proportional");
         }},
        {"stage_channels",
         [](RunConfig& c, int l, auto k, auto v) {
             auto ch = parse_number_list<int>(l, k, v);
             if (ch.size() != 4) bad_value(l, k, v, "four channel counts");
             std::copy(ch.begin(), ch.end(), c.train.model.stage_channels.begin());
         }},
        {"fusion_channels", [](RunConfig& c, int l, auto k, auto v) { c.train.model.fusion_channels = parse_number<int>(l, k, v); }},
        {"train",
         [](RunConfig& c, int l, auto k, auto v) {
             auto [tag, path] = split_tagged(l, k, v);
             std::filesystem::path p(path);
             c.train_sets.push_back({parse_kind_at(l, k, tag), p.filename().string(), p});
         }},
        {"test",
         [](RunConfig& c, int l, auto k, auto v) {
             auto [tag, path] = split_tagged(l, k, v);
             c.test_sets.push_back({SupervisionKind::Pixel, std::string(tag), std::filesystem::path(path)});
         }},
        {"synthetic_train", [](RunConfig& c, int l, auto k, auto v) { c.synthetic_train = parse_number<int>(l, k, v); }},
        {"synthetic_test", [](RunConfig& c, int l, auto k, auto v) { c.synthetic_test = parse_number<int>(l, k, v); }},
        {"synthetic_size", [](RunConfig& c, int l, auto k, auto v) { c.synthetic_size = parse_number<int>(l, k, v); }},
        {"synthetic_kinds",
         [](RunConfig& c, int l, auto k, auto v) {
             c.synthetic_kinds.clear();
             for (auto part : split_list(v)) c.synthetic_kinds.push_back(parse_kind_at(l, k, part));
         }},
        {"data_seed", [](RunConfig& c, int l, auto k, auto v) { c.data_seed = parse_number<std::uint64_t>(l, k, v); }},
        {"out_dir", [](RunConfig& c, int, auto, auto v) { c.out_dir = std::filesystem::path(v); }},
    };
    return table;
}

bool repeatable(std::string_view key) { return key == "train" || key == "test"; }

}  // namespace

void RunConfig::validate() const {
    train.validate();
    auto fail = [](const std::string& msg) { throw Error(Errc::InvalidConfig, msg); };
    if (synthetic_train < 0 || synthetic_test < 0) fail("synthetic counts must be >= 0");
    if (synthetic_train > 0 || synthetic_test > 0) {
        if (synthetic_size <= 0 || synthetic_size % ModelConfig::kInputSizeDivisor != 0) {
            fail("synthetic_size must be a positive multiple of 16");
        }
    }
    if (synthetic_train > 0) {
        if (synthetic_kinds.empty()) fail("synthetic_kinds must not be empty");
        std::set<SupervisionKind> seen(synthetic_kinds.begin(), synthetic_kinds.end());
        if (seen.size() != synthetic_kinds.size()) fail("synthetic_kinds lists a kind twice");
        if (static_cast<std::size_t>(synthetic_train) < synthetic_kinds.size()) {
            fail("synthetic_train must give every synthetic kind at least one image");
        }
    }
    if (train_sets.empty() && synthetic_train == 0) fail("no training data: set train = kind:path or synthetic_train");
    for (const auto& spec : test_sets) {
        if (spec.name.empty()) fail("test set with empty name");
    }
}

RunConfig parse_run_config(std::string_view text) {
    RunConfig config;
    std::set<std::string, std::less<>> seen;
    int line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(Errc::InvalidConfig, "line " + std::to_string(line_no) + ": expected key = value");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end()) {
            throw Error(Errc::InvalidConfig, "line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
        }
        if (value.empty()) bad_value(line_no, key, value, "a value");
        if (!repeatable(key) && !seen.insert(std::string(key)).second) {
            throw Error(Errc::InvalidConfig, "line " + std::to_string(line_no) + ": '" + std::string(key) + "' set twice");
        }
        it->second(config, line_no, key, value);
    }
    return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot read config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string format_run_config(const RunConfig& c) {
    const auto& t = c.train;
    std::ostringstream out;
    out << "learning_rate = " << fmt_real(t.learning_rate) << '\n'
        << "momentum = " << fmt_real(t.momentum) << '\n'
        << "batch_size = " << t.batch_size << '\n'
        << "iterations = " << t.iterations << '\n'
        << "size_set = " << join(t.size_set, [](int s) { return std::to_string(s); }) << '\n'
        << "seed = " << t.seed << '\n'
        << "lambda_u = " << fmt_real(t.weights.uncertainty) << '\n'
        << "lambda_c = " << fmt_real(t.weights.consistency) << '\n'
        << "lambda_p = " << fmt_real(t.weights.point_bce) << '\n'
        << "point_bce = " << (t.weights.use_point_bce ? "true" : "false") << '\n'
        << "checkpoint_every = " << t.checkpoint_every << '\n'
        << "val_every = " << t.val_every << '\n'
        << "schedule = " << (t.schedule == LrSchedule::Poly ? "poly" : "constant") << '\n'
        << "poly_power = " << fmt_real(t.poly_power) << '\n'
        << "grad_clip = " << fmt_real(t.grad_clip) << '\n'
        << "sampling = " << (t.sampling == SamplingMode::Proportional ? "proportional" : "round_robin") << '\n'
        << "stage_channels = " << join(t.model.stage_channels, [](int s) { return std::to_string(s); }) << '\n'
        << "fusion_channels = " << t.model.fusion_channels << '\n';
    for (const auto& s : c.train_sets) out << "train = " << to_string(s.kind) << ':' << s.path.string() << '\n';
    for (const auto& s : c.test_sets) out << "test = " << s.name << ':' << s.path.string() << '\n';
    out << "synthetic_train = " << c.synthetic_train << '\n'
        << "synthetic_test = " << c.synthetic_test << '\n'
        << "synthetic_size = " << c.synthetic_size << '\n'
        << "synthetic_kinds = "
        << join(c.synthetic_kinds, [](SupervisionKind k) { return std::string(to_string(k)); }) << '\n'
        << "data_seed = " << c.data_seed << '\n'
        << "out_dir = " << c.out_dir.string() << '\n';
    return out.str();
}

std::vector<Dataset> build_train_sets(const RunConfig& config) {
    std::vector<Dataset> sets;
    for (const auto& spec : config.train_sets) sets.push_back(load_folder_dataset(spec.path, spec.kind));
    if (config.synthetic_train > 0) {
        const int n = config.synthetic_train;
        const auto dense = synth_blob_dataset(n, config.synthetic_size, config.synthetic_size, config.data_seed);
        const auto k = static_cast<int>(config.synthetic_kinds.size());
        const auto weak_seed = derive_seed(config.data_seed, {0x7765616bULL});
        // Shares differ by at most one image; the first n % k kinds get the extra.
        int first = 0;
        for (int i = 0; i < k; ++i) {
            const int count = n / k + (i < n % k ? 1 : 0);
            const auto kind = config.synthetic_kinds[static_cast<std::size_t>(i)];
            auto part = slice(dense, static_cast<std::size_t>(first), static_cast<std::size_t>(count),
                              "synthetic-" + std::string(to_string(kind)));
            sets.push_back(kind == SupervisionKind::Pixel ? std::move(part) : derive_weak_dataset(part, kind, weak_seed));
            sets.back().name = "synthetic-" + std::string(to_string(kind));
            first += count;
        }
    }
    return sets;
}

std::vector<Dataset> build_test_sets(const RunConfig& config) {
    std::vector<Dataset> sets;
    for (const auto& spec : config.test_sets) {
        sets.push_back(load_folder_dataset(spec.path, SupervisionKind::Pixel));
        sets.back().name = spec.name;
    }
    if (config.synthetic_test > 0) {
        sets.push_back(synth_blob_dataset(config.synthetic_test, config.synthetic_size, config.synthetic_size,
                                          derive_seed(config.data_seed, {0x74657374ULL}), "synthetic-test"));
    }
    return sets;
}

}  // namespace mixsup
