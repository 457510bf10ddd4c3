#include "pointmatch/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pointmatch/error.hpp"

namespace pointmatch {

namespace {

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

double to_double(const std::string &key, const std::string &v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::logic_error &) {
    }
    throw InvalidConfig("'" + key + "' expects a number, got '" + v + "'");
}

int to_int(const std::string &key, const std::string &v) {
    try {
        std::size_t used = 0;
        const int n = std::stoi(v, &used);
        if (used == v.size()) return n;
    } catch (const std::logic_error &) {
    }
    throw InvalidConfig("'" + key + "' expects an integer, got '" + v + "'");
}

std::vector<double> to_list(const std::string &key, const std::string &v) {
    std::vector<double> out;
    std::istringstream in(v);
    std::string cell;
    while (std::getline(in, cell, ',')) out.push_back(to_double(key, trim(cell)));
    if (out.empty()) throw InvalidConfig("'" + key + "' expects a comma-separated list");
    return out;
}

} // namespace

void EngineConfig::set(const std::string &key, const std::string &raw) {
    const std::string value = trim(raw);
    if (key == "levels") {
        search.levels = to_int(key, value);
    } else if (key == "level1_grid_mm") {
        search.level1_grid_mm = to_double(key, value);
    } else if (key == "box_mm") {
        search.box_mm = to_list(key, value);
    } else if (key == "metric") {
        const auto kind = parse_similarity_kind(value);
        if (!kind) throw InvalidConfig("unknown metric '" + value + "'");
        search.metric.kind = *kind;
    } else if (key == "threads") {
        search.threads = to_int(key, value);
    } else if (key == "bins") {
        search.metric.histogram.bins = to_int(key, value);
    } else if (key == "cosine_weight") {
        search.metric.weights.cosine = to_double(key, value);
    } else if (key == "mi_weight") {
        search.metric.weights.mutual_info = to_double(key, value);
    } else if (key == "resolutions_mm") {
        model.resolutions_mm = to_list(key, value);
    } else if (key == "half_extent") {
        model.half_extent = to_int(key, value);
    } else if (key == "intensity_offset") {
        intensity_offset = to_double(key, value);
    } else if (key == "early_exit") {
        // Reserved. Only the disabled state is accepted for now.
        if (value != "off" && value != "false" && value != "0")
            throw InvalidConfig("early_exit is not implemented; use 'off'");
    } else {
        throw InvalidConfig("unknown config key '" + key + "'");
    }
}

void EngineConfig::validate() const {
    search.validate();
    model.validate();
}

EngineConfig load_engine_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config '" + path.string() + "'");
    EngineConfig cfg = default_engine_config();
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidConfig(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
        try {
            cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const InvalidConfig &e) {
            throw InvalidConfig(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

EngineConfig default_engine_config() {
    EngineConfig cfg;
    if (const char *env = std::getenv("POINTMATCH_THREADS"); env && *env) cfg.set("threads", env);
    return cfg;
}

} // namespace pointmatch
