#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "feddice/model.hpp"
#include "feddice/netflow.hpp"

namespace feddice {

inline constexpr const char* kWildcard = "*";

/// Endpoint match expression: every field is a literal or "*". Flows carry no
/// domain or service metadata, so literal domain/service_type fields can only
/// match via the wildcard; they exist to keep the on-disk shape complete.
struct Profile {
    std::string domain = kWildcard;
    std::string ip = kWildcard;
    std::string mac = kWildcard;
    std::string service_type = kWildcard;  // ignored for destination profiles

    bool operator==(const Profile&) const = default;
};

/// Flow match expression. Numeric fields are wildcards when unset and match
/// literal values within a relative tolerance (default +-10%). A flow's
/// frequency is its packet rate (1 / mean inter-arrival), packet_size its
/// mean bytes per packet, payload_type its protocol name.
struct FlowProfile {
    std::optional<double> frequency;    // packets per second
    std::optional<double> packet_size;  // bytes
    std::string payload_type = kWildcard;

    bool operator==(const FlowProfile&) const = default;
};

enum class ActionKind : std::uint8_t { kDrop = 0, kAllow = 1, kRouteVia = 2, kQuarantineSource = 3 };

struct Action {
    ActionKind kind = ActionKind::kDrop;
    std::string node;  // route_via target; empty otherwise

    bool operator==(const Action&) const = default;
};

std::string action_to_string(const Action& a);
Action action_from_string(const std::string& s);  // throws PolicyError

struct Policy {
    std::string policy_id;
    Profile src_profile;
    Profile dst_profile;
    FlowProfile flow_profile;
    std::string model_ref = kWildcard;  // "*" means no model gate
    Action action;

    bool operator==(const Policy&) const = default;
};

/// Throws PolicyError when a field violates the format (empty strings,
/// negative numerics, route_via without a node).
void validate_policy(const Policy& p);

struct Verdict {
    bool matched = false;
    std::optional<std::string> triggered_policy_id;
    std::optional<Action> action;
    std::optional<double> classifier_output;  // P(ransomware) when a model was consulted
};

/// Named classifiers referenced by policies. Holds either full models or bare
/// scoring functions (e.g. a ground-truth oracle in simulations). Scores are
/// the probability that the window is ransomware.
class ModelRegistry {
  public:
    using Scorer = std::function<double(const FeatureVector&)>;

    void add(const std::string& id, Model model);
    void add_scorer(const std::string& id, Scorer scorer);
    bool contains(const std::string& id) const;
    /// Throws UnknownModelError.
    double score(const std::string& id, const FeatureVector& window) const;

  private:
    std::map<std::string, Scorer> scorers_;
};

/// Builds a policy around a registered model. Defaults mirror the canonical
/// catch-all rule: wildcard scopes, DROP on a model hit. Throws
/// UnknownModelError when model_ref is not "*" and missing from the registry.
Policy compile_policy(const ModelRegistry& registry, const std::string& model_ref,
                      Action action = {ActionKind::kDrop, ""}, std::string policy_id = "",
                      Profile src = {}, Profile dst = {}, FlowProfile flow = {});

struct EvalOptions {
    double tolerance = 0.1;  // relative tolerance for numeric flow fields
};

/// First match wins over the ordered list. A policy matches when all profile
/// fields accept the flow and its model (if any) flags the window as
/// ransomware. Policies whose model_ref cannot be resolved are skipped; the
/// failure is appended to `errors` when provided.
Verdict evaluate(std::span<const Policy> policies, const FlowRecord& flow,
                 const FeatureVector& window, const ModelRegistry& registry,
                 std::vector<std::string>* errors = nullptr, const EvalOptions& options = {});

/// Ordered policy store with copy-on-write snapshots: evaluations work on an
/// immutable snapshot and never hold the writer lock.
class PolicyRepository {
  public:
    using Snapshot = std::shared_ptr<const std::vector<Policy>>;

    PolicyRepository();
    PolicyRepository(const PolicyRepository& o);
    PolicyRepository& operator=(const PolicyRepository& o);

    /// Appends; throws DuplicateIdError on an existing id.
    void install(Policy p);
    /// Throws UnknownIdError.
    void remove(const std::string& policy_id);
    Snapshot snapshot() const;
    std::size_t size() const { return snapshot()->size(); }

    void save(const std::filesystem::path& path) const;
    static PolicyRepository load(const std::filesystem::path& path);

  private:
    void store(Snapshot next);

    mutable std::mutex mu_;
    Snapshot policies_;
};

/// Canonical JSON forms (stable key order; serialize(parse(x)) is identity).
std::string to_json(const Policy& p);
Policy policy_from_json(const std::string& text);  // throws PolicyError

}  // namespace feddice
