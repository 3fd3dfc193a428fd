#include "feddice/sim.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "feddice/errors.hpp"
#include "feddice/textio.hpp"

namespace feddice {

Topology Topology::make_dice(std::size_t n_hospitals, std::size_t devices_per_hospital) {
    Topology t;
    for (std::size_t h = 0; h < n_hospitals; ++h) {
        Hospital hosp;
        const std::string prefix = "h" + std::to_string(h + 1);
        hosp.controller = prefix + "-ctl";
        hosp.sw = prefix + "-sw";
        for (std::size_t d = 0; d < devices_per_hospital; ++d)
            hosp.devices.push_back(prefix + "-dev" + std::to_string(d + 1));
        for (std::size_t i = 0; i < hosp.devices.size(); ++i)
            for (std::size_t j = i + 1; j < hosp.devices.size(); ++j)
                t.links.emplace_back(hosp.devices[i], hosp.devices[j]);
        t.hospitals.push_back(std::move(hosp));
    }
    return t;
}

std::vector<std::string> Topology::all_devices() const {
    std::vector<std::string> out;
    for (const auto& h : hospitals)
        out.insert(out.end(), h.devices.begin(), h.devices.end());
    return out;
}

std::size_t Topology::device_count() const {
    std::size_t n = 0;
    for (const auto& h : hospitals) n += h.devices.size();
    return n;
}

void Topology::validate() const {
    std::set<std::string> seen;
    for (const auto& h : hospitals)
        for (const auto& d : h.devices)
            if (!seen.insert(d).second) throw DuplicateIdError("duplicate device id " + d);
    for (const auto& [a, b] : links) {
        if (!seen.count(a)) throw UnknownDeviceError("link references unknown device " + a);
        if (!seen.count(b)) throw UnknownDeviceError("link references unknown device " + b);
    }
}

void save_topology(const std::filesystem::path& path, const Topology& topo) {
    nlohmann::ordered_json j;
    j["supernode"] = topo.supernode;
    j["hospitals"] = nlohmann::ordered_json::array();
    for (const auto& h : topo.hospitals) {
        nlohmann::ordered_json hj;
        hj["controller"] = h.controller;
        hj["switch"] = h.sw;
        hj["devices"] = h.devices;
        j["hospitals"].push_back(std::move(hj));
    }
    j["links"] = nlohmann::ordered_json::array();
    for (const auto& [a, b] : topo.links) j["links"].push_back({a, b});

    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

Topology load_topology(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("hospitals") || !j.contains("links"))
        throw SchemaError(path.string() + ": malformed topology file");

    Topology t;
    t.supernode = j.value("supernode", std::string("supernode"));
    for (const auto& hj : j["hospitals"]) {
        Hospital h;
        h.controller = hj.value("controller", std::string());
        h.sw = hj.value("switch", std::string());
        if (!hj.contains("devices") || !hj["devices"].is_array())
            throw SchemaError(path.string() + ": hospital without device list");
        for (const auto& d : hj["devices"]) h.devices.push_back(d.get<std::string>());
        t.hospitals.push_back(std::move(h));
    }
    for (const auto& lj : j["links"]) {
        if (!lj.is_array() || lj.size() != 2)
            throw SchemaError(path.string() + ": link must be a two-element array");
        t.links.emplace_back(lj[0].get<std::string>(), lj[1].get<std::string>());
    }
    t.validate();
    return t;
}

const char* event_kind_name(SimEventKind k) {
    switch (k) {
        case SimEventKind::kInfection: return "infection";
        case SimEventKind::kDetection: return "detection";
        case SimEventKind::kPolicyInstall: return "policy_install";
        default: return "quarantine";
    }
}

std::size_t SimReport::count(SimEventKind k) const {
    return static_cast<std::size_t>(
        std::count_if(events.begin(), events.end(),
                      [k](const SimEvent& e) { return e.kind == k; }));
}

void write_report_json(const std::filesystem::path& path, const SimReport& report) {
    nlohmann::ordered_json j;
    j["ticks"] = report.ticks;
    if (report.containment_tick)
        j["containment_tick"] = *report.containment_tick;
    else
        j["containment_tick"] = nullptr;
    j["final"] = {{"clean", report.final_counts.clean},
                  {"infected", report.final_counts.infected},
                  {"quarantined", report.final_counts.quarantined}};
    j["events"] = nlohmann::ordered_json::array();
    for (const auto& e : report.events) {
        nlohmann::ordered_json ej;
        ej["tick"] = e.tick;
        ej["kind"] = event_kind_name(e.kind);
        ej["device"] = e.device;
        ej["family"] = family_name(e.family);
        ej["detail"] = e.detail;
        j["events"].push_back(std::move(ej));
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

void write_report_csv(const std::filesystem::path& path, const SimReport& report) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "metric,value\n";
    out << "ticks," << report.ticks << '\n';
    out << "infections," << report.count(SimEventKind::kInfection) << '\n';
    out << "detections," << report.count(SimEventKind::kDetection) << '\n';
    out << "policy_installs," << report.count(SimEventKind::kPolicyInstall) << '\n';
    out << "quarantines," << report.count(SimEventKind::kQuarantine) << '\n';
    out << "containment_tick,";
    if (report.containment_tick) out << *report.containment_tick;
    out << '\n';
    out << "final_clean," << report.final_counts.clean << '\n';
    out << "final_infected," << report.final_counts.infected << '\n';
    out << "final_quarantined," << report.final_counts.quarantined << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

Simulation::Simulation(Topology topology, SimConfig config)
    : topo_(std::move(topology)),
      config_(std::move(config)),
      rng_(config_.seed),
      global_(make_model(config_.model, config_.window.feature_dim, config_.seed)) {
    topo_.validate();
    if (config_.spread_probability < 0 || config_.spread_probability > 1)
        throw Error("spread_probability must be in [0, 1]");
    if (config_.fl_round_period == 0 || config_.detection_window == 0)
        throw Error("fl_round_period and detection_window must be at least 1");

    for (std::size_t h = 0; h < topo_.hospitals.size(); ++h) {
        for (const auto& d : topo_.hospitals[h].devices) {
            devices_[d] = DeviceState{};
            device_order_.push_back(d);
            hospital_of_[d] = h;
        }
    }
    for (const auto& [a, b] : topo_.links) {
        neighbors_[a].push_back(b);
        neighbors_[b].push_back(a);
    }
    for (auto& [_, nbrs] : neighbors_) {
        std::sort(nbrs.begin(), nbrs.end());
        nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    }
    histories_.resize(topo_.hospitals.size());
    for (auto& h : histories_) h.split = Split::kTrain;

    for (const auto& [device, family] : config_.initial_infections) {
        const auto it = devices_.find(device);
        if (it == devices_.end())
            throw UnknownDeviceError("initial infection on unknown device " + device);
        if (it->second.status == DeviceStatus::kInfected) continue;
        it->second.status = DeviceStatus::kInfected;
        it->second.family = family;
        it->second.infected_at = 0;
        events_.push_back({0, SimEventKind::kInfection, device, family, "initial"});
    }

    if (config_.detector == DetectorMode::kOracle) {
        registry_.add_scorer("oracle", [](const FeatureVector& w) {
            return w.family == Family::kClean ? 0.0 : 1.0;
        });
        Policy p = compile_policy(registry_, "oracle", {ActionKind::kQuarantineSource, ""},
                                  "auto-oracle");
        repo_.install(p);
        active_policy_ = p.policy_id;
        events_.push_back({0, SimEventKind::kPolicyInstall, p.policy_id, Family::kClean,
                           "oracle detector"});
    }
}

void Simulation::emit_and_featurize() {
    std::vector<FlowRecord> flows;
    for (const auto& device : device_order_) {
        const DeviceState& st = devices_.at(device);
        if (st.status == DeviceStatus::kQuarantined) continue;
        const Family family =
            st.status == DeviceStatus::kInfected ? st.family : Family::kClean;

        flows.clear();
        TrafficEndpoints ep{device, neighbors_[device]};
        emit_window_flows(flows, family, tick_, config_.window, rng_, &ep);
        FeatureVector fv = aggregate_window(flows, config_.window);

        histories_[hospital_of_[device]].samples.push_back(fv);
        pending_.push_back({device, flows.front(), std::move(fv)});
    }
}

void Simulation::spread() {
    // Per-edge Bernoulli exposure; when several infected neighbors hit the
    // same clean device in one tick, the first exposure in device order wins.
    std::vector<std::tuple<std::string, Family, std::string>> newly;
    std::set<std::string> claimed;
    for (const auto& device : device_order_) {
        const DeviceState& st = devices_.at(device);
        if (st.status != DeviceStatus::kInfected) continue;
        for (const auto& nbr : neighbors_[device]) {
            if (devices_.at(nbr).status != DeviceStatus::kClean) continue;
            if (rng_.next_double() < config_.spread_probability && !claimed.count(nbr)) {
                claimed.insert(nbr);
                newly.emplace_back(nbr, st.family, device);
            }
        }
    }
    for (const auto& [device, family, source] : newly) {
        DeviceState& st = devices_.at(device);
        st.status = DeviceStatus::kInfected;
        st.family = family;
        st.infected_at = tick_;
        events_.push_back({tick_, SimEventKind::kInfection, device, family, source});
    }
}

void Simulation::fl_round() {
    fl_rounds_done_++;
    std::vector<Dataset> clients;
    for (const auto& h : histories_)
        if (!h.empty()) clients.push_back(h);
    if (clients.empty()) return;

    TrainConfig local;
    local.learning_rate = config_.learning_rate;
    local.epochs = config_.local_epochs;
    local.batch_size = config_.batch_size;
    local.seed = config_.seed;
    local.first_epoch = (fl_rounds_done_ - 1) * config_.local_epochs;

    std::vector<ParamVector> params;
    std::vector<std::size_t> counts;
    for (const auto& c : clients) {
        Model m = global_;
        train(m, c, local);
        params.push_back(to_params(m));
        counts.push_back(c.size());
    }
    from_params(global_, fedavg(params, counts));

    const std::string model_id = "fl-global-r" + std::to_string(fl_rounds_done_);
    registry_.add(model_id, global_);
    Policy p = compile_policy(registry_, model_id, {ActionKind::kQuarantineSource, ""},
                              "auto-" + model_id);
    if (!active_policy_.empty()) repo_.remove(active_policy_);
    repo_.install(p);
    active_policy_ = p.policy_id;
    events_.push_back({tick_, SimEventKind::kPolicyInstall, p.policy_id, Family::kClean,
                       "round " + std::to_string(fl_rounds_done_)});
}

void Simulation::quarantine(const std::string& device, std::int64_t tick) {
    DeviceState& st = devices_.at(device);
    st.status = DeviceStatus::kQuarantined;
    st.quarantined_at = tick;
}

void Simulation::detection_sweep() {
    const PolicyRepository::Snapshot snapshot = repo_.snapshot();
    for (const auto& pw : pending_) {
        const DeviceState& st = devices_.at(pw.device);
        if (st.status == DeviceStatus::kQuarantined) continue;
        const Verdict v = evaluate(*snapshot, pw.probe, pw.window, registry_);
        if (!v.matched || v.action->kind == ActionKind::kAllow) continue;
        events_.push_back({tick_, SimEventKind::kDetection, pw.device, pw.window.family,
                           *v.triggered_policy_id + " p=" +
                               fmt_fixed(v.classifier_output.value_or(1.0), 3)});
        if (v.action->kind == ActionKind::kQuarantineSource) {
            quarantine(pw.device, tick_);
            events_.push_back({tick_, SimEventKind::kQuarantine, pw.device, pw.window.family,
                               *v.triggered_policy_id});
        }
    }
    pending_.clear();
}

void Simulation::step() {
    tick_++;
    emit_and_featurize();
    spread();
    if (config_.detector == DetectorMode::kFederated &&
        tick_ % static_cast<std::int64_t>(config_.fl_round_period) == 0)
        fl_round();
    if (config_.detector != DetectorMode::kNone &&
        tick_ % static_cast<std::int64_t>(config_.detection_window) == 0)
        detection_sweep();
}

SimCounts Simulation::counts() const {
    SimCounts c;
    for (const auto& [_, st] : devices_) {
        switch (st.status) {
            case DeviceStatus::kClean: c.clean++; break;
            case DeviceStatus::kInfected: c.infected++; break;
            default: c.quarantined++; break;
        }
    }
    return c;
}

SimReport Simulation::report() const {
    SimReport r;
    r.ticks = static_cast<std::size_t>(tick_);
    r.events = events_;
    r.final_counts = counts();

    bool any_infected = false, all_contained = true;
    std::int64_t last_quarantine = 0;
    for (const auto& [_, st] : devices_) {
        if (st.infected_at >= 0 || st.status != DeviceStatus::kClean) {
            any_infected = true;
            if (st.status != DeviceStatus::kQuarantined)
                all_contained = false;
            else
                last_quarantine = std::max(last_quarantine, st.quarantined_at);
        }
    }
    if (!any_infected)
        r.containment_tick = 0;
    else if (all_contained)
        r.containment_tick = last_quarantine;
    return r;
}

SimReport Simulation::run() {
    while (tick_ < static_cast<std::int64_t>(config_.ticks)) step();
    return report();
}

SimReport run_simulation(const Topology& topology, const SimConfig& config) {
    return Simulation(topology, config).run();
}

}  // namespace feddice
