#include "feddice/netflow.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "feddice/errors.hpp"
#include "feddice/textio.hpp"

namespace feddice {

namespace {

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

constexpr const char* kFamilyNames[kNumFamilies] = {"clean", "wannacry", "petya", "badrabbit",
                                                    "powerghost"};

}  // namespace

const char* family_name(Family f) { return kFamilyNames[static_cast<std::size_t>(f)]; }

std::optional<Family> family_from_string(const std::string& s) {
    std::string v = lower(s);
    for (std::size_t i = 0; i < kNumFamilies; ++i)
        if (v == kFamilyNames[i]) return static_cast<Family>(i);
    return std::nullopt;
}

const char* protocol_name(Protocol p) {
    switch (p) {
        case Protocol::kTcp: return "tcp";
        case Protocol::kUdp: return "udp";
        case Protocol::kArp: return "arp";
        default: return "other";
    }
}

Protocol protocol_from_string(const std::string& s) {
    std::string v = lower(s);
    if (v == "tcp") return Protocol::kTcp;
    if (v == "udp") return Protocol::kUdp;
    if (v == "arp") return Protocol::kArp;
    return Protocol::kOther;
}

std::array<std::size_t, kNumFamilies> Dataset::family_counts() const {
    std::array<std::size_t, kNumFamilies> counts{};
    for (const auto& s : samples) counts[static_cast<std::size_t>(s.family)]++;
    return counts;
}

std::size_t Dataset::count(Family f) const {
    return family_counts()[static_cast<std::size_t>(f)];
}

std::int64_t window_bucket(double start_time, const WindowConfig& config) {
    return static_cast<std::int64_t>(std::ceil(start_time / config.duration)) - 1;
}

FeatureVector aggregate_window(std::span<const FlowRecord> records, const WindowConfig& config) {
    if (records.empty()) throw EmptyWindowError("aggregate_window: no records in window");
    if (config.feature_dim < feat::kBaseFeatureCount)
        throw ShapeError("feature_dim must be at least " + std::to_string(feat::kBaseFeatureCount));

    FeatureVector fv;
    fv.values.assign(config.feature_dim, 0.0);
    auto& v = fv.values;

    const std::int64_t bucket = window_bucket(records.front().start_time, config);
    fv.window_end = static_cast<double>(bucket + 1) * config.duration;

    const double n = static_cast<double>(records.size());
    v[feat::kFlowCount] = n;

    double packet_sum = 0.0, load_sum = 0.0, iat_sum = 0.0;
    double t_min = records.front().start_time, t_max = records.front().start_time;
    std::size_t last_idx = 0;
    std::array<std::size_t, kNumFamilies> fam_counts{};
    std::vector<std::string> srcs, dsts;
    srcs.reserve(records.size());
    dsts.reserve(records.size());

    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const double pk = static_cast<double>(r.total_packets);
        packet_sum += pk;
        load_sum += r.total_load;
        iat_sum += r.src_inter_arrival_mean;
        t_min = std::min(t_min, r.start_time);
        if (r.start_time >= records[last_idx].start_time) last_idx = i;
        t_max = std::max(t_max, r.start_time);
        fam_counts[static_cast<std::size_t>(r.family)]++;
        srcs.push_back(r.src_ip);
        dsts.push_back(r.dst_ip);

        switch (r.protocol) {
            case Protocol::kTcp:
                v[feat::kTcpCount] += 1.0;
                v[feat::kTcpPacketSum] += pk;
                v[feat::kTcpLoadSum] += r.total_load;
                break;
            case Protocol::kUdp:
                v[feat::kUdpCount] += 1.0;
                v[feat::kUdpPacketSum] += pk;
                v[feat::kUdpLoadSum] += r.total_load;
                break;
            case Protocol::kArp:
                v[feat::kArpCount] += 1.0;
                v[feat::kArpPacketSum] += pk;
                v[feat::kArpLoadSum] += r.total_load;
                break;
            default:
                v[feat::kOtherCount] += 1.0;
                v[feat::kOtherPacketSum] += pk;
                v[feat::kOtherLoadSum] += r.total_load;
                break;
        }
    }

    const double packet_mean = packet_sum / n;
    const double load_mean = load_sum / n;
    const double iat_mean = iat_sum / n;
    double packet_var = 0.0, load_var = 0.0, iat_var = 0.0;
    for (const auto& r : records) {
        const double dp = static_cast<double>(r.total_packets) - packet_mean;
        const double dl = r.total_load - load_mean;
        const double di = r.src_inter_arrival_mean - iat_mean;
        packet_var += dp * dp;
        load_var += dl * dl;
        iat_var += di * di;
    }

    v[feat::kPacketSum] = packet_sum;
    v[feat::kPacketMean] = packet_mean;
    v[feat::kPacketVar] = packet_var / n;
    v[feat::kLoadSum] = load_sum;
    v[feat::kLoadMean] = load_mean;
    v[feat::kLoadVar] = load_var / n;
    v[feat::kIatMean] = iat_mean;
    v[feat::kIatVar] = iat_var / n;

    auto distinct = [](std::vector<std::string>& xs) {
        std::sort(xs.begin(), xs.end());
        return static_cast<double>(std::unique(xs.begin(), xs.end()) - xs.begin());
    };
    v[feat::kDistinctSrc] = distinct(srcs);
    v[feat::kDistinctDst] = distinct(dsts);

    v[feat::kFlowRate] = n / config.duration;
    v[feat::kPacketRate] = packet_sum / config.duration;
    v[feat::kLoadRate] = load_sum / config.duration;
    v[feat::kSpan] = t_max - t_min;

    const auto& last = records[last_idx];
    switch (last.protocol) {
        case Protocol::kTcp: v[feat::kLastProtoTcp] = 1.0; break;
        case Protocol::kUdp: v[feat::kLastProtoUdp] = 1.0; break;
        case Protocol::kArp: v[feat::kLastProtoArp] = 1.0; break;
        default: v[feat::kLastProtoOther] = 1.0; break;
    }
    v[feat::kLastPackets] = static_cast<double>(last.total_packets);
    v[feat::kLastLoad] = last.total_load;
    v[feat::kLastIat] = last.src_inter_arrival_mean;
    v[feat::kLastOffset] = fv.window_end - last.start_time;

    std::size_t best = 0;
    for (std::size_t f = 0; f < kNumFamilies; ++f)
        if (fam_counts[f] >= fam_counts[best]) best = f;
    fv.family = static_cast<Family>(best);
    fv.label = label_for(fv.family);
    return fv;
}

std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& ratios) {
    const double sum = ratios.train + ratios.val + ratios.test;
    if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 || std::abs(sum - 1.0) > 1e-9)
        throw Error("split ratios must be non-negative and sum to 1");
    // Tiny epsilon so that products that are integral in exact arithmetic do
    // not floor down due to rounding (e.g. 10 * 0.3).
    const auto take = [n](double ratio) {
        return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
    };
    std::array<std::size_t, 3> counts{take(ratios.train), take(ratios.val), 0};
    counts[2] = n - counts[0] - counts[1];
    return counts;
}

DatasetTriple build_dataset(std::span<const FlowRecord> flows, const WindowConfig& config,
                            const SplitRatios& ratios, std::uint64_t seed, Provenance provenance) {
    std::map<std::int64_t, std::vector<std::size_t>> buckets;
    for (std::size_t i = 0; i < flows.size(); ++i)
        buckets[window_bucket(flows[i].start_time, config)].push_back(i);

    std::array<std::vector<FeatureVector>, kNumFamilies> by_family;
    std::vector<FlowRecord> window;
    for (const auto& [bucket, idxs] : buckets) {
        window.clear();
        for (std::size_t i : idxs) window.push_back(flows[i]);
        FeatureVector fv = aggregate_window(window, config);
        by_family[static_cast<std::size_t>(fv.family)].push_back(std::move(fv));
    }

    DatasetTriple triple;
    triple.train.split = Split::kTrain;
    triple.val.split = Split::kVal;
    triple.test.split = Split::kTest;
    triple.train.provenance = triple.val.provenance = triple.test.provenance = provenance;

    for (std::size_t f = 0; f < kNumFamilies; ++f) {
        auto& windows = by_family[f];
        if (windows.empty()) continue;
        if (windows.size() < 3)
            throw InsufficientDataError(std::string("family ") + kFamilyNames[f] + " has only " +
                                        std::to_string(windows.size()) +
                                        " windows; need at least 3 to split");
        Rng rng(Rng::mix(seed, f + 1));
        rng.shuffle(windows);
        const auto counts = split_counts(windows.size(), ratios);
        std::size_t pos = 0;
        for (std::size_t i = 0; i < counts[0]; ++i) triple.train.samples.push_back(windows[pos++]);
        for (std::size_t i = 0; i < counts[1]; ++i) triple.val.samples.push_back(windows[pos++]);
        for (std::size_t i = 0; i < counts[2]; ++i) triple.test.samples.push_back(windows[pos++]);
    }
    return triple;
}

const char* scenario_name(Scenario s) {
    switch (s) {
        case Scenario::kIid3: return "IID_3";
        case Scenario::kIid4: return "IID_4";
        case Scenario::kNonIid3: return "NONIID_3";
        default: return "NONIID_4";
    }
}

std::size_t scenario_clients(Scenario s) {
    return (s == Scenario::kIid3 || s == Scenario::kNonIid3) ? 3 : 4;
}

std::vector<Dataset> partition(const Dataset& train, Scenario scenario, std::uint64_t seed) {
    if (train.empty()) throw InsufficientDataError("partition: training set is empty");
    const std::size_t k = scenario_clients(scenario);
    const bool iid = scenario == Scenario::kIid3 || scenario == Scenario::kIid4;

    std::array<std::vector<std::size_t>, kNumFamilies> by_family;
    for (std::size_t i = 0; i < train.samples.size(); ++i)
        by_family[static_cast<std::size_t>(train.samples[i].family)].push_back(i);

    // Client index per ransomware family under label skew.
    std::array<std::size_t, kNumFamilies> skew_client{};
    if (!iid) {
        for (std::size_t f = 1; f < kNumFamilies; ++f)
            if (by_family[f].empty())
                throw MissingFamilyError(std::string("partition: scenario ") +
                                         scenario_name(scenario) + " requires family " +
                                         kFamilyNames[f]);
        if (k == 4) {
            skew_client = {0, 0, 1, 2, 3};  // wc, py, br, pg each to their own client
        } else {
            skew_client = {0, 0, 1, 1, 2};  // py and br share the middle client
        }
    }

    std::vector<Dataset> clients(k);
    for (auto& c : clients) {
        c.split = Split::kTrain;
        c.provenance = train.provenance;
    }

    for (std::size_t f = 0; f < kNumFamilies; ++f) {
        auto& idxs = by_family[f];
        if (idxs.empty()) continue;
        Rng rng(Rng::mix(seed, 0x10 + f));
        rng.shuffle(idxs);
        if (iid || f == 0) {
            // Deal near-equal contiguous shares; earlier clients absorb the
            // remainder.
            const std::size_t base = idxs.size() / k, extra = idxs.size() % k;
            std::size_t pos = 0;
            for (std::size_t c = 0; c < k; ++c) {
                const std::size_t share = base + (c < extra ? 1 : 0);
                for (std::size_t i = 0; i < share; ++i)
                    clients[c].samples.push_back(train.samples[idxs[pos++]]);
            }
        } else {
            auto& dst = clients[skew_client[f]];
            for (std::size_t i : idxs) dst.samples.push_back(train.samples[i]);
        }
    }
    return clients;
}

namespace {

struct PacketProfile {
    std::uint64_t tcp_lo, tcp_hi;
    std::uint64_t arp_lo, arp_hi;
};

// Per-flow packet counts by protocol. Flow-count distributions are identical
// for every class, so the separating signal lives entirely in how packets
// concentrate per protocol: WannaCry and PowerGhost inflate TCP flows while
// Petya and BadRabbit inflate ARP flows and starve TCP to keep window totals
// level with clean traffic.
PacketProfile packet_profile(Family f) {
    switch (f) {
        case Family::kWannaCry: return {160, 220, 5, 15};
        case Family::kPowerGhost: return {200, 260, 5, 15};
        case Family::kPetya: return {12, 42, 95, 135};
        case Family::kBadRabbit: return {5, 25, 125, 165};
        default: return {60, 100, 5, 15};
    }
}

}  // namespace

void emit_window_flows(std::vector<FlowRecord>& out, Family family, std::int64_t bucket,
                       const WindowConfig& config, Rng& rng, const TrafficEndpoints* endpoints) {
    const PacketProfile prof = packet_profile(family);
    const double d = config.duration;
    const double base = static_cast<double>(bucket) * d;

    std::string src;
    if (endpoints != nullptr && !endpoints->src_ip.empty()) {
        src = endpoints->src_ip;
    } else {
        src = "10.0." + std::to_string(rng.uniform_int(0, 15)) + "." +
              std::to_string(rng.uniform_int(1, 250));
    }

    auto pick_dst = [&]() -> std::string {
        if (endpoints != nullptr && !endpoints->dst_pool.empty() && rng.next_below(2) == 0)
            return endpoints->dst_pool[rng.next_below(endpoints->dst_pool.size())];
        return "10.1." + std::to_string(rng.uniform_int(0, 15)) + "." +
               std::to_string(rng.uniform_int(1, 250));
    };

    auto emit = [&](Protocol proto, std::uint64_t pk_lo, std::uint64_t pk_hi) {
        FlowRecord r;
        // uniform() is half-open at d, so flip it to land in (base, base + d].
        r.start_time = base + (d - rng.uniform(0.0, d));
        r.src_ip = src;
        r.dst_ip = pick_dst();
        r.protocol = proto;
        r.total_packets = rng.uniform_int(pk_lo, pk_hi);
        r.total_load = static_cast<double>(r.total_packets) * rng.uniform(300.0, 900.0);
        r.src_inter_arrival_mean = rng.uniform(0.001, 0.5);
        r.family = family;
        out.push_back(std::move(r));
    };

    const std::uint64_t n_tcp = rng.uniform_int(16, 24);
    const std::uint64_t n_udp = rng.uniform_int(40, 80);
    const std::uint64_t n_arp = rng.uniform_int(8, 12);
    const std::uint64_t n_other = rng.uniform_int(0, 2);
    for (std::uint64_t i = 0; i < n_tcp; ++i) emit(Protocol::kTcp, prof.tcp_lo, prof.tcp_hi);
    for (std::uint64_t i = 0; i < n_udp; ++i) emit(Protocol::kUdp, 5, 15);
    for (std::uint64_t i = 0; i < n_arp; ++i) emit(Protocol::kArp, prof.arp_lo, prof.arp_hi);
    for (std::uint64_t i = 0; i < n_other; ++i) emit(Protocol::kOther, 5, 15);
}

std::vector<FlowRecord> synthesize(std::uint64_t profile_seed,
                                   const std::array<std::size_t, kNumFamilies>& windows_per_family,
                                   const WindowConfig& config) {
    std::vector<Family> schedule;
    for (std::size_t f = 0; f < kNumFamilies; ++f)
        schedule.insert(schedule.end(), windows_per_family[f], static_cast<Family>(f));

    Rng rng(profile_seed);
    rng.shuffle(schedule);

    std::vector<FlowRecord> flows;
    for (std::size_t w = 0; w < schedule.size(); ++w)
        emit_window_flows(flows, schedule[w], static_cast<std::int64_t>(w), config, rng);
    std::stable_sort(flows.begin(), flows.end(),
                     [](const FlowRecord& a, const FlowRecord& b) {
                         return a.start_time < b.start_time;
                     });
    return flows;
}

std::array<std::size_t, kNumFamilies> paper_window_counts(double scale) {
    if (scale <= 0) throw Error("scale must be positive");
    constexpr std::array<double, kNumFamilies> kTotals{100000, 25000, 981, 389, 24170};
    std::array<std::size_t, kNumFamilies> counts{};
    for (std::size_t f = 0; f < kNumFamilies; ++f) {
        const auto n = static_cast<std::size_t>(std::llround(kTotals[f] * scale));
        counts[f] = std::max<std::size_t>(n, 4);
    }
    return counts;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    for (auto& f : fields) {
        const auto a = f.find_first_not_of(" \t");
        if (a == std::string::npos) {
            f.clear();
            continue;
        }
        const auto b = f.find_last_not_of(" \t");
        f = f.substr(a, b - a + 1);
    }
    return fields;
}

bool parse_double(const std::string& s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

bool parse_u64(const std::string& s, std::uint64_t& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

}  // namespace

std::vector<FlowRecord> ingest_csv(const std::filesystem::path& path, const CsvSchema& schema,
                                   IngestReport* report) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw SchemaError(path.string() + ": empty file, header expected");
    const auto header = split_csv_line(line);

    auto column = [&](const std::string& name) -> std::ptrdiff_t {
        const auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : it - header.begin();
    };
    const std::ptrdiff_t c_time = column(schema.start_time), c_src = column(schema.src_ip),
                         c_dst = column(schema.dst_ip), c_proto = column(schema.protocol),
                         c_packets = column(schema.total_packets), c_load = column(schema.total_load),
                         c_iat = column(schema.src_iat), c_family = column(schema.family);
    for (auto [col, name] :
         {std::pair{c_time, &schema.start_time}, {c_src, &schema.src_ip}, {c_dst, &schema.dst_ip},
          {c_proto, &schema.protocol}, {c_packets, &schema.total_packets},
          {c_load, &schema.total_load}, {c_iat, &schema.src_iat}, {c_family, &schema.family}})
        if (col < 0) throw SchemaError(path.string() + ": missing required column " + *name);
    const std::ptrdiff_t c_smac = column(schema.src_mac), c_dmac = column(schema.dst_mac);

    IngestReport rep;
    std::vector<FlowRecord> flows;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        rep.rows_total++;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            rep.rows_skipped++;
            continue;
        }
        FlowRecord r;
        const auto fam = family_from_string(fields[c_family]);
        if (!parse_double(fields[c_time], r.start_time) || r.start_time < 0 ||
            !parse_u64(fields[c_packets], r.total_packets) ||
            !parse_double(fields[c_load], r.total_load) || r.total_load < 0 ||
            !parse_double(fields[c_iat], r.src_inter_arrival_mean) ||
            r.src_inter_arrival_mean < 0 || fields[c_src].empty() || fields[c_dst].empty() ||
            !fam.has_value()) {
            rep.rows_skipped++;
            continue;
        }
        r.src_ip = fields[c_src];
        r.dst_ip = fields[c_dst];
        r.protocol = protocol_from_string(fields[c_proto]);
        r.family = *fam;
        if (c_smac >= 0 && !fields[c_smac].empty()) r.src_mac = fields[c_smac];
        if (c_dmac >= 0 && !fields[c_dmac].empty()) r.dst_mac = fields[c_dmac];
        flows.push_back(std::move(r));
        rep.rows_ok++;
    }

    if (rep.rows_total > 0 && rep.rows_skipped * 2 > rep.rows_total)
        throw SchemaError(path.string() + ": " + std::to_string(rep.rows_skipped) + " of " +
                          std::to_string(rep.rows_total) + " rows malformed");
    if (report != nullptr) *report = rep;
    std::stable_sort(flows.begin(), flows.end(),
                     [](const FlowRecord& a, const FlowRecord& b) {
                         return a.start_time < b.start_time;
                     });
    return flows;
}

void write_flows_csv(const std::filesystem::path& path, std::span<const FlowRecord> flows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    CsvSchema s;
    out << s.start_time << ',' << s.src_ip << ',' << s.dst_ip << ',' << s.protocol << ','
        << s.total_packets << ',' << s.total_load << ',' << s.src_iat << ',' << s.family << ','
        << s.src_mac << ',' << s.dst_mac << '\n';
    for (const auto& r : flows) {
        out << fmt_double(r.start_time) << ',' << r.src_ip << ',' << r.dst_ip << ','
            << protocol_name(r.protocol) << ',' << r.total_packets << ','
            << fmt_double(r.total_load) << ',' << fmt_double(r.src_inter_arrival_mean) << ','
            << family_name(r.family) << ',' << r.src_mac.value_or("") << ','
            << r.dst_mac.value_or("") << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& s : dataset.samples) {
        nlohmann::json j;
        j["values"] = s.values;
        j["label"] = static_cast<int>(s.label);
        j["family"] = family_name(s.family);
        j["window_end"] = s.window_end;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path, Split split, Provenance provenance) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    Dataset ds;
    ds.split = split;
    ds.provenance = provenance;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        lineno++;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("values") || !j.contains("family"))
            throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": bad sample record");
        FeatureVector fv;
        fv.values = j["values"].get<std::vector<double>>();
        const auto fam = family_from_string(j["family"].get<std::string>());
        if (!fam.has_value())
            throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": unknown family");
        fv.family = *fam;
        fv.label = j.contains("label") ? static_cast<Label>(j["label"].get<int>())
                                       : label_for(fv.family);
        fv.window_end = j.value("window_end", 0.0);
        ds.samples.push_back(std::move(fv));
    }
    return ds;
}

}  // namespace feddice
