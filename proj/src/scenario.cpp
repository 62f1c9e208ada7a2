#include "apc/scenario.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace apc::harness {

using nlohmann::json;

const char* to_string(AdversaryKind k) {
    switch (k) {
        case AdversaryKind::None: return "none";
        case AdversaryKind::Sybil: return "sybil";
        case AdversaryKind::Tamperer: return "tamperer";
        case AdversaryKind::MaliciousRsi: return "malicious_rsi";
    }
    return "?";
}

const char* to_string(CacheMode m) {
    switch (m) {
        case CacheMode::Shared: return "shared";
        case CacheMode::PerNode: return "per_node";
        case CacheMode::Off: return "off";
    }
    return "?";
}

namespace {

AdversaryKind adversary_from_string(const std::string& s) {
    if (s == "none") return AdversaryKind::None;
    if (s == "sybil") return AdversaryKind::Sybil;
    if (s == "tamperer") return AdversaryKind::Tamperer;
    if (s == "malicious_rsi") return AdversaryKind::MaliciousRsi;
    throw std::invalid_argument("unknown adversary: " + s);
}

CacheMode cache_from_string(const std::string& s) {
    if (s == "shared") return CacheMode::Shared;
    if (s == "per_node") return CacheMode::PerNode;
    if (s == "off") return CacheMode::Off;
    throw std::invalid_argument("unknown cache mode: " + s);
}

metrics::TimingMode timing_from_string(const std::string& s) {
    if (s == "cpu") return metrics::TimingMode::Cpu;
    if (s == "none") return metrics::TimingMode::None;
    throw std::invalid_argument("unknown timing mode: " + s);
}

const char* to_string(metrics::TimingMode m) {
    return m == metrics::TimingMode::Cpu ? "cpu" : "none";
}

json doc_from_scenario(const Scenario& s) {
    json j;
    j["name"] = s.name;
    j["seed"] = s.seed;
    j["blockchain_size"] = s.blockchain_size;
    j["tx_per_vehicle"] = s.tx_per_vehicle;
    j["emitter_count"] = s.emitter_count;
    j["measure_joins"] = s.measure_joins;
    j["rsi_count"] = s.rsi_count;
    j["grid_cols"] = s.grid_cols;
    j["grid_rows"] = s.grid_rows;
    j["rsi_spacing_m"] = s.rsi_spacing_m;
    j["witness"] = {{"required_reports", s.witness.required_reports},
                    {"max_queries", s.witness.max_queries},
                    {"query_radius_m", s.witness.query_radius_m},
                    {"confirm_radius_m", s.witness.confirm_radius_m},
                    {"pool_timeout_ms", s.witness.pool_timeout_ms}};
    j["kui_period_ms"] = s.kui_period_ms;
    j["kui_rounds"] = s.kui_rounds;
    j["expiration_window_ms"] = s.expiration_window_ms;
    j["retry_interval_ms"] = s.retry_interval_ms;
    j["payload_bytes"] = s.payload_bytes;
    j["access_level"] = s.access_level;
    j["join_stagger_ms"] = s.join_stagger_ms;
    j["tx_interval_ms"] = s.tx_interval_ms;
    j["vehicle_tick_ms"] = s.vehicle_tick_ms;
    j["rsi_tick_ms"] = s.rsi_tick_ms;
    j["beacon_interval_ms"] = s.beacon_interval_ms;
    j["settle_ms"] = s.settle_ms;
    j["horizon_slack_ms"] = s.horizon_slack_ms;
    j["link"] = {{"rsi_rsi_ms", s.link.rsi_rsi_ms},
                 {"vehicle_rsi_ms", s.link.vehicle_rsi_ms},
                 {"vehicle_vehicle_ms", s.link.vehicle_vehicle_ms},
                 {"jitter_frac", s.link.jitter_frac},
                 {"drop_probability", s.link.drop_probability},
                 {"rsi_range_m", s.link.rsi_range_m},
                 {"v2v_range_m", s.link.v2v_range_m}};
    j["timing"] = to_string(s.timing);
    j["cache_mode"] = to_string(s.cache_mode);
    j["adversary"] = to_string(s.adversary);
    j["phantom_count"] = s.phantom_count;
    return j;
}

Scenario scenario_from_doc(const json& j) {
    Scenario s;
    s.name = j.at("name").get<std::string>();
    s.seed = j.at("seed").get<uint64_t>();
    s.blockchain_size = j.at("blockchain_size").get<uint32_t>();
    s.tx_per_vehicle = j.at("tx_per_vehicle").get<uint32_t>();
    s.emitter_count = j.at("emitter_count").get<uint32_t>();
    s.measure_joins = j.at("measure_joins").get<uint32_t>();
    s.rsi_count = j.at("rsi_count").get<uint32_t>();
    s.grid_cols = j.at("grid_cols").get<uint32_t>();
    s.grid_rows = j.at("grid_rows").get<uint32_t>();
    s.rsi_spacing_m = j.at("rsi_spacing_m").get<double>();
    const json& w = j.at("witness");
    s.witness.required_reports = w.at("required_reports").get<uint32_t>();
    s.witness.max_queries = w.at("max_queries").get<uint32_t>();
    s.witness.query_radius_m = w.at("query_radius_m").get<double>();
    s.witness.confirm_radius_m = w.at("confirm_radius_m").get<double>();
    s.witness.pool_timeout_ms = w.at("pool_timeout_ms").get<SimTime>();
    s.kui_period_ms = j.at("kui_period_ms").get<SimTime>();
    s.kui_rounds = j.at("kui_rounds").get<uint32_t>();
    s.expiration_window_ms = j.at("expiration_window_ms").get<SimTime>();
    s.retry_interval_ms = j.at("retry_interval_ms").get<SimTime>();
    s.payload_bytes = j.at("payload_bytes").get<uint32_t>();
    s.access_level = j.at("access_level").get<uint8_t>();
    s.join_stagger_ms = j.at("join_stagger_ms").get<SimTime>();
    s.tx_interval_ms = j.at("tx_interval_ms").get<SimTime>();
    s.vehicle_tick_ms = j.at("vehicle_tick_ms").get<SimTime>();
    s.rsi_tick_ms = j.at("rsi_tick_ms").get<SimTime>();
    s.beacon_interval_ms = j.at("beacon_interval_ms").get<SimTime>();
    s.settle_ms = j.at("settle_ms").get<SimTime>();
    s.horizon_slack_ms = j.at("horizon_slack_ms").get<SimTime>();
    const json& l = j.at("link");
    s.link.rsi_rsi_ms = l.at("rsi_rsi_ms").get<double>();
    s.link.vehicle_rsi_ms = l.at("vehicle_rsi_ms").get<double>();
    s.link.vehicle_vehicle_ms = l.at("vehicle_vehicle_ms").get<double>();
    s.link.jitter_frac = l.at("jitter_frac").get<double>();
    s.link.drop_probability = l.at("drop_probability").get<double>();
    s.link.rsi_range_m = l.at("rsi_range_m").get<double>();
    s.link.v2v_range_m = l.at("v2v_range_m").get<double>();
    s.timing = timing_from_string(j.at("timing").get<std::string>());
    s.cache_mode = cache_from_string(j.at("cache_mode").get<std::string>());
    s.adversary = adversary_from_string(j.at("adversary").get<std::string>());
    s.phantom_count = j.at("phantom_count").get<uint32_t>();
    return s;
}

// Every key path in `input` must exist in `shape` with a compatible kind.
void check_keys(const json& input, const json& shape, const std::string& at) {
    if (!input.is_object()) return;
    for (const auto& [key, value] : input.items()) {
        std::string path = at.empty() ? key : at + "." + key;
        if (!shape.contains(key))
            throw std::invalid_argument("unknown scenario key: " + path);
        if (shape.at(key).is_object() && !value.is_object())
            throw std::invalid_argument("scenario key " + path +
                                        " must be an object");
        if (value.is_object()) check_keys(value, shape.at(key), path);
    }
}

}  // namespace

SimTime Scenario::prepop_end_ms() const {
    return bootstrap_start_ms() +
           static_cast<SimTime>(blockchain_size) * join_stagger_ms + settle_ms;
}

SimTime Scenario::tx_phase_end_ms() const {
    return measure_start_ms() +
           static_cast<SimTime>(tx_per_vehicle) * tx_interval_ms + settle_ms;
}

SimTime Scenario::kui_end_ms() const {
    return tx_phase_end_ms() +
           static_cast<SimTime>(kui_rounds) * kui_period_ms;
}

SimTime Scenario::joins_end_ms() const {
    return kui_end_ms() +
           static_cast<SimTime>(measure_joins) * join_stagger_ms + settle_ms;
}

SimTime Scenario::horizon_ms() const {
    return joins_end_ms() + horizon_slack_ms;
}

void Scenario::validate() const {
    auto fail = [](const std::string& why) {
        throw std::invalid_argument("invalid scenario: " + why);
    };
    if (rsi_count == 0) fail("rsi_count must be >= 1");
    if (rsi_count != grid_cols * grid_rows)
        fail("rsi_count must equal grid_cols * grid_rows");
    if (rsi_spacing_m <= 0) fail("rsi_spacing_m must be positive");
    if (emitter_count > blockchain_size)
        fail("emitter_count cannot exceed blockchain_size");
    if (tx_per_vehicle > 0 && emitter_count == 0)
        fail("tx_per_vehicle > 0 requires at least one emitter");
    if (witness.required_reports == 0) fail("required_reports must be >= 1");
    if (witness.max_queries < witness.required_reports)
        fail("max_queries must be >= required_reports");
    if (witness.query_radius_m <= 0 || witness.confirm_radius_m <= 0)
        fail("witness radii must be positive");
    if (witness.pool_timeout_ms <= 0) fail("pool_timeout_ms must be positive");
    if (kui_period_ms <= 0 || expiration_window_ms <= 0)
        fail("KUI period and expiration window must be positive");
    if (retry_interval_ms <= 0) fail("retry_interval_ms must be positive");
    if (join_stagger_ms <= 0 || tx_interval_ms <= 0 || vehicle_tick_ms <= 0 ||
        rsi_tick_ms <= 0 || beacon_interval_ms <= 0)
        fail("schedule intervals must be positive");
    if (settle_ms < 0 || horizon_slack_ms < 0)
        fail("settle and slack must be non-negative");
    if (link.jitter_frac < 0 || link.jitter_frac >= 1)
        fail("jitter_frac must be in [0, 1)");
    if (link.drop_probability < 0 || link.drop_probability > 1)
        fail("drop_probability must be in [0, 1]");
    if (link.rsi_range_m <= 0 || link.v2v_range_m <= 0)
        fail("link ranges must be positive");
    if (adversary == AdversaryKind::Sybil && phantom_count == 0)
        fail("sybil adversary needs phantom_count >= 1");
}

Scenario scenario_from_json(const std::string& text) {
    json input;
    try {
        input = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("scenario JSON: ") + e.what());
    }
    json doc = doc_from_scenario(Scenario{});
    check_keys(input, doc, "");
    doc.merge_patch(input);
    Scenario s;
    try {
        s = scenario_from_doc(doc);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("scenario JSON: ") + e.what());
    }
    s.validate();
    return s;
}

std::string scenario_to_json(const Scenario& s) {
    return doc_from_scenario(s).dump(2) + "\n";
}

Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open scenario file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return scenario_from_json(buf.str());
}

void apply_override(Scenario& s, const std::string& expr) {
    size_t eq = expr.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("override must look like key=value: " +
                                    expr);
    std::string key = expr.substr(0, eq);
    std::string value = expr.substr(eq + 1);

    std::string pointer = "/" + key;
    for (auto& c : pointer)
        if (c == '.') c = '/';

    json doc = doc_from_scenario(s);
    json::json_pointer ptr(pointer);
    if (!doc.contains(ptr) || doc.at(ptr).is_object())
        throw std::invalid_argument("unknown scenario key: " + key);

    // Numbers and booleans parse as JSON; anything else is a string.
    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded() || parsed.is_object() || parsed.is_array() ||
        doc.at(ptr).is_string())
        parsed = value;
    doc[ptr] = parsed;

    // No validate() here: several overrides may be needed to reach a
    // consistent state (say, rsi_count with grid_cols). Callers validate
    // once the whole batch is applied.
    try {
        s = scenario_from_doc(doc);
    } catch (const json::exception& e) {
        throw std::invalid_argument("bad override value for " + key + ": " +
                                    e.what());
    }
}

}  // namespace apc::harness
