#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "feddice/federation.hpp"
#include "feddice/model.hpp"
#include "feddice/netflow.hpp"
#include "feddice/policy.hpp"
#include "feddice/rng.hpp"

namespace feddice {

struct Hospital {
    std::string controller;
    std::string sw;
    std::vector<std::string> devices;
};

/// Device ids double as network addresses: emitted flows carry the device id
/// in src_ip, which is what quarantine policies match on.
struct Topology {
    std::string supernode = "supernode";
    std::vector<Hospital> hospitals;
    std::vector<std::pair<std::string, std::string>> links;  // undirected device adjacency

    /// N hospitals of M devices each; the devices of a hospital form a full
    /// mesh behind their switch. Cross-hospital spread needs either explicit
    /// links or multiple initial infections.
    static Topology make_dice(std::size_t n_hospitals, std::size_t devices_per_hospital);

    std::vector<std::string> all_devices() const;
    std::size_t device_count() const;
    /// Throws DuplicateIdError on repeated device ids and UnknownDeviceError
    /// on links referencing unknown devices.
    void validate() const;
};

void save_topology(const std::filesystem::path& path, const Topology& topo);
Topology load_topology(const std::filesystem::path& path);

enum class DeviceStatus : std::uint8_t { kClean = 0, kInfected = 1, kQuarantined = 2 };

struct DeviceState {
    DeviceStatus status = DeviceStatus::kClean;
    Family family = Family::kClean;
    std::int64_t infected_at = -1;
    std::int64_t quarantined_at = -1;
};

enum class DetectorMode : std::uint8_t {
    kNone = 0,       // spread only, no detection
    kOracle = 1,     // ground-truth scorer deployed as a policy from tick 0
    kFederated = 2,  // FL rounds train the detector while the attack runs
};

struct SimConfig {
    std::size_t ticks = 50;
    double spread_probability = 0.3;  // per infected-neighbor edge per tick
    std::vector<std::pair<std::string, Family>> initial_infections;
    std::size_t fl_round_period = 5;  // ticks between FL rounds (federated mode)
    std::size_t detection_window = 1; // ticks of traffic per evaluation sweep
    std::uint64_t seed = 0;
    DetectorMode detector = DetectorMode::kOracle;
    ModelKind model = ModelKind::kLogReg;
    WindowConfig window;
    std::size_t local_epochs = 1;
    double learning_rate = 0.01;
    std::size_t batch_size = 64;
};

enum class SimEventKind : std::uint8_t {
    kInfection = 0,
    kDetection = 1,
    kPolicyInstall = 2,
    kQuarantine = 3,
};

const char* event_kind_name(SimEventKind k);

struct SimEvent {
    std::int64_t tick = 0;
    SimEventKind kind = SimEventKind::kInfection;
    std::string device;  // policy id for install events
    Family family = Family::kClean;
    std::string detail;  // infection: source device; detection: policy and score
};

struct SimCounts {
    std::size_t clean = 0;
    std::size_t infected = 0;
    std::size_t quarantined = 0;
};

struct SimReport {
    std::size_t ticks = 0;
    std::vector<SimEvent> events;
    SimCounts final_counts;
    /// Tick by which every ever-infected device was quarantined; 0 when
    /// nothing was ever infected; empty while anything is still loose.
    std::optional<std::int64_t> containment_tick;

    std::size_t count(SimEventKind k) const;
};

void write_report_json(const std::filesystem::path& path, const SimReport& report);
void write_report_csv(const std::filesystem::path& path, const SimReport& report);

/// One DICE: hospitals emit device traffic each tick (one aggregation window
/// per device per tick), ransomware spreads over device links, PbSA agents
/// featurize, fed agents train on schedule, the evaluation engine matches
/// windows against installed policies and the enforcer quarantines flagged
/// sources. Deterministic per seed.
class Simulation {
  public:
    Simulation(Topology topology, SimConfig config);

    /// Advances one tick: emit, spread, featurize, (FL round), evaluate.
    void step();
    /// Runs the configured number of ticks and returns the report.
    SimReport run();

    std::int64_t tick() const { return tick_; }
    const std::map<std::string, DeviceState>& devices() const { return devices_; }
    SimCounts counts() const;
    const std::vector<SimEvent>& events() const { return events_; }
    SimReport report() const;
    const PolicyRepository& policies() const { return repo_; }

  private:
    void emit_and_featurize();
    void spread();
    void fl_round();
    void detection_sweep();
    void quarantine(const std::string& device, std::int64_t tick);

    Topology topo_;
    SimConfig config_;
    Rng rng_;
    std::int64_t tick_ = 0;
    std::map<std::string, DeviceState> devices_;
    std::vector<std::string> device_order_;
    std::map<std::string, std::vector<std::string>> neighbors_;
    std::map<std::string, std::size_t> hospital_of_;
    std::vector<Dataset> histories_;  // per hospital, PbSA window store
    struct PendingWindow {
        std::string device;
        FlowRecord probe;  // representative flow for profile matching
        FeatureVector window;
    };
    std::vector<PendingWindow> pending_;
    std::vector<SimEvent> events_;
    ModelRegistry registry_;
    PolicyRepository repo_;
    Model global_;
    std::string active_policy_;
    std::size_t fl_rounds_done_ = 0;
};

SimReport run_simulation(const Topology& topology, const SimConfig& config);

}  // namespace feddice
