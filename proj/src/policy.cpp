#include "feddice/policy.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "feddice/errors.hpp"

namespace feddice {

using ordered_json = nlohmann::ordered_json;

std::string action_to_string(const Action& a) {
    switch (a.kind) {
        case ActionKind::kDrop: return "drop";
        case ActionKind::kAllow: return "allow";
        case ActionKind::kQuarantineSource: return "quarantine_source";
        default: return "route_via:" + a.node;
    }
}

Action action_from_string(const std::string& s) {
    if (s == "drop") return {ActionKind::kDrop, ""};
    if (s == "allow") return {ActionKind::kAllow, ""};
    if (s == "quarantine_source") return {ActionKind::kQuarantineSource, ""};
    if (s.starts_with("route_via:") && s.size() > 10)
        return {ActionKind::kRouteVia, s.substr(10)};
    throw PolicyError("unknown action: " + s);
}

namespace {

void require_nonempty(const std::string& v, const char* what) {
    if (v.empty()) throw PolicyError(std::string(what) + " must not be empty");
}

void validate_numeric(const std::optional<double>& v, const char* what) {
    if (v && (!std::isfinite(*v) || *v < 0))
        throw PolicyError(std::string(what) + " must be a non-negative number");
}

}  // namespace

void validate_policy(const Policy& p) {
    require_nonempty(p.policy_id, "policy_id");
    for (const auto* prof : {&p.src_profile, &p.dst_profile}) {
        require_nonempty(prof->domain, "profile domain");
        require_nonempty(prof->ip, "profile ip");
        require_nonempty(prof->mac, "profile mac");
        require_nonempty(prof->service_type, "profile service_type");
    }
    validate_numeric(p.flow_profile.frequency, "flow_profile.frequency");
    validate_numeric(p.flow_profile.packet_size, "flow_profile.packet_size");
    require_nonempty(p.flow_profile.payload_type, "flow_profile.payload_type");
    require_nonempty(p.model_ref, "model");
    if (p.action.kind == ActionKind::kRouteVia) require_nonempty(p.action.node, "route_via node");
}

void ModelRegistry::add(const std::string& id, Model model) {
    scorers_[id] = [m = std::move(model)](const FeatureVector& window) {
        return 1.0 - predict_proba(m, window.values);
    };
}

void ModelRegistry::add_scorer(const std::string& id, Scorer scorer) {
    scorers_[id] = std::move(scorer);
}

bool ModelRegistry::contains(const std::string& id) const { return scorers_.count(id) > 0; }

double ModelRegistry::score(const std::string& id, const FeatureVector& window) const {
    const auto it = scorers_.find(id);
    if (it == scorers_.end()) throw UnknownModelError("no model registered as " + id);
    return it->second(window);
}

Policy compile_policy(const ModelRegistry& registry, const std::string& model_ref, Action action,
                      std::string policy_id, Profile src, Profile dst, FlowProfile flow) {
    if (model_ref != kWildcard && !registry.contains(model_ref))
        throw UnknownModelError("compile_policy: no model registered as " + model_ref);
    Policy p;
    p.policy_id = policy_id.empty()
                      ? "policy-" + (model_ref == kWildcard ? std::string("any") : model_ref)
                      : std::move(policy_id);
    p.src_profile = std::move(src);
    p.dst_profile = std::move(dst);
    p.flow_profile = std::move(flow);
    p.model_ref = model_ref;
    p.action = std::move(action);
    validate_policy(p);
    return p;
}

namespace {

bool field_match(const std::string& pattern, const std::string& value) {
    return pattern == kWildcard || pattern == value;
}

bool numeric_match(const std::optional<double>& pattern, double value, double tolerance) {
    if (!pattern) return true;
    return std::abs(value - *pattern) <= tolerance * *pattern;
}

bool profiles_match(const Policy& p, const FlowRecord& flow, const EvalOptions& options) {
    // Flows carry no domain or service metadata; those fields match only as
    // wildcards.
    if (!field_match(p.src_profile.domain, "") || !field_match(p.src_profile.service_type, "") ||
        !field_match(p.dst_profile.domain, ""))
        return false;
    if (!field_match(p.src_profile.ip, flow.src_ip) ||
        !field_match(p.dst_profile.ip, flow.dst_ip))
        return false;
    if (!field_match(p.src_profile.mac, flow.src_mac.value_or("")) ||
        !field_match(p.dst_profile.mac, flow.dst_mac.value_or("")))
        return false;

    const double frequency =
        flow.src_inter_arrival_mean > 0 ? 1.0 / flow.src_inter_arrival_mean : 0.0;
    const double packet_size =
        flow.total_packets > 0 ? flow.total_load / static_cast<double>(flow.total_packets) : 0.0;
    if (!numeric_match(p.flow_profile.frequency, frequency, options.tolerance) ||
        !numeric_match(p.flow_profile.packet_size, packet_size, options.tolerance))
        return false;
    return p.flow_profile.payload_type == kWildcard ||
           p.flow_profile.payload_type == protocol_name(flow.protocol);
}

}  // namespace

Verdict evaluate(std::span<const Policy> policies, const FlowRecord& flow,
                 const FeatureVector& window, const ModelRegistry& registry,
                 std::vector<std::string>* errors, const EvalOptions& options) {
    for (const auto& p : policies) {
        if (!profiles_match(p, flow, options)) continue;
        if (p.model_ref == kWildcard)
            return Verdict{true, p.policy_id, p.action, std::nullopt};
        if (!registry.contains(p.model_ref)) {
            if (errors != nullptr)
                errors->push_back("policy " + p.policy_id + ": dangling model_ref " + p.model_ref);
            continue;
        }
        const double score = registry.score(p.model_ref, window);
        if (score > 0.5) return Verdict{true, p.policy_id, p.action, score};
    }
    return {};
}

PolicyRepository::PolicyRepository() : policies_(std::make_shared<const std::vector<Policy>>()) {}

PolicyRepository::PolicyRepository(const PolicyRepository& o) : policies_(o.snapshot()) {}

PolicyRepository& PolicyRepository::operator=(const PolicyRepository& o) {
    if (this != &o) store(o.snapshot());
    return *this;
}

PolicyRepository::Snapshot PolicyRepository::snapshot() const {
    const std::lock_guard<std::mutex> lock(mu_);
    return policies_;
}

void PolicyRepository::store(Snapshot next) {
    const std::lock_guard<std::mutex> lock(mu_);
    policies_ = std::move(next);
}

void PolicyRepository::install(Policy p) {
    validate_policy(p);
    const Snapshot current = snapshot();
    for (const auto& existing : *current)
        if (existing.policy_id == p.policy_id)
            throw DuplicateIdError("policy " + p.policy_id + " already installed");
    auto next = std::make_shared<std::vector<Policy>>(*current);
    next->push_back(std::move(p));
    store(std::move(next));
}

void PolicyRepository::remove(const std::string& policy_id) {
    const Snapshot current = snapshot();
    auto next = std::make_shared<std::vector<Policy>>(*current);
    const auto it = std::find_if(next->begin(), next->end(),
                                 [&](const Policy& p) { return p.policy_id == policy_id; });
    if (it == next->end()) throw UnknownIdError("no policy with id " + policy_id);
    next->erase(it);
    store(std::move(next));
}

namespace {

ordered_json profile_to_json(const Profile& p, bool with_service) {
    ordered_json j;
    j["domain"] = p.domain;
    j["ip"] = p.ip;
    j["mac"] = p.mac;
    if (with_service) j["service_type"] = p.service_type;
    return j;
}

ordered_json numeric_field(const std::optional<double>& v) {
    if (!v) return ordered_json(kWildcard);
    return ordered_json(*v);
}

ordered_json policy_to_ordered_json(const Policy& p) {
    ordered_json j;
    j["policy_id"] = p.policy_id;
    j["src_profile"] = profile_to_json(p.src_profile, true);
    j["dst_profile"] = profile_to_json(p.dst_profile, false);
    ordered_json flow;
    flow["frequency"] = numeric_field(p.flow_profile.frequency);
    flow["packet_size"] = numeric_field(p.flow_profile.packet_size);
    flow["payload_type"] = p.flow_profile.payload_type;
    j["flow_profile"] = flow;
    j["model"] = p.model_ref;
    j["action"] = action_to_string(p.action);
    return j;
}

std::string get_string(const ordered_json& j, const char* key, const std::string& where) {
    if (!j.contains(key) || !j[key].is_string())
        throw PolicyError(where + ": missing or non-string field " + key);
    return j[key].get<std::string>();
}

void reject_unknown(const ordered_json& j, std::initializer_list<const char*> known,
                    const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw PolicyError(where + ": unknown field " + key);
    }
}

Profile profile_from_json(const ordered_json& j, bool with_service, const std::string& where) {
    if (!j.is_object()) throw PolicyError(where + ": profile must be an object");
    if (with_service)
        reject_unknown(j, {"domain", "ip", "mac", "service_type"}, where);
    else
        reject_unknown(j, {"domain", "ip", "mac"}, where);
    Profile p;
    p.domain = get_string(j, "domain", where);
    p.ip = get_string(j, "ip", where);
    p.mac = get_string(j, "mac", where);
    if (with_service) p.service_type = get_string(j, "service_type", where);
    return p;
}

std::optional<double> numeric_from_json(const ordered_json& j, const char* key,
                                        const std::string& where) {
    if (!j.contains(key)) throw PolicyError(where + ": missing field " + key);
    const auto& v = j[key];
    if (v.is_string()) {
        if (v.get<std::string>() != kWildcard)
            throw PolicyError(where + ": field " + key + " must be a number or \"*\"");
        return std::nullopt;
    }
    if (!v.is_number()) throw PolicyError(where + ": field " + key + " must be a number or \"*\"");
    return v.get<double>();
}

Policy policy_from_ordered_json(const ordered_json& j) {
    if (!j.is_object()) throw PolicyError("policy must be a JSON object");
    const std::string where =
        j.contains("policy_id") && j["policy_id"].is_string()
            ? "policy " + j["policy_id"].get<std::string>()
            : "policy";
    reject_unknown(j, {"policy_id", "src_profile", "dst_profile", "flow_profile", "model",
                       "action"},
                   where);
    for (const char* key : {"src_profile", "dst_profile", "flow_profile"})
        if (!j.contains(key)) throw PolicyError(where + ": missing field " + key);

    Policy p;
    p.policy_id = get_string(j, "policy_id", where);
    p.src_profile = profile_from_json(j["src_profile"], true, where);
    p.dst_profile = profile_from_json(j["dst_profile"], false, where);
    const auto& flow = j["flow_profile"];
    if (!flow.is_object()) throw PolicyError(where + ": flow_profile must be an object");
    reject_unknown(flow, {"frequency", "packet_size", "payload_type"}, where);
    p.flow_profile.frequency = numeric_from_json(flow, "frequency", where);
    p.flow_profile.packet_size = numeric_from_json(flow, "packet_size", where);
    p.flow_profile.payload_type = get_string(flow, "payload_type", where);
    p.model_ref = get_string(j, "model", where);
    p.action = action_from_string(get_string(j, "action", where));
    validate_policy(p);
    return p;
}

}  // namespace

std::string to_json(const Policy& p) { return policy_to_ordered_json(p).dump(2); }

Policy policy_from_json(const std::string& text) {
    const ordered_json j = ordered_json::parse(text, nullptr, false);
    if (j.is_discarded()) throw PolicyError("policy is not valid JSON");
    return policy_from_ordered_json(j);
}

void PolicyRepository::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    ordered_json arr = ordered_json::array();
    for (const auto& p : *snapshot()) arr.push_back(policy_to_ordered_json(p));
    out << arr.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

PolicyRepository PolicyRepository::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const ordered_json arr = ordered_json::parse(text, nullptr, false);
    if (arr.is_discarded() || !arr.is_array())
        throw PolicyError(path.string() + ": policy repository must be a JSON array");
    PolicyRepository repo;
    for (const auto& j : arr) repo.install(policy_from_ordered_json(j));
    return repo;
}

}  // namespace feddice
