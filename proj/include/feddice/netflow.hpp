#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "feddice/rng.hpp"

namespace feddice {

enum class Protocol : std::uint8_t { kTcp = 0, kUdp = 1, kArp = 2, kOther = 3 };

/// Ransomware family ground-truth tag. Used for labeling, synthesis and
/// reporting only; never encoded as a feature.
enum class Family : std::uint8_t {
    kClean = 0,
    kWannaCry = 1,
    kPetya = 2,
    kBadRabbit = 3,
    kPowerGhost = 4,
};
inline constexpr std::size_t kNumFamilies = 5;

const char* family_name(Family f);
std::optional<Family> family_from_string(const std::string& s);
const char* protocol_name(Protocol p);
Protocol protocol_from_string(const std::string& s);

/// One netflow observation.
struct FlowRecord {
    double start_time = 0.0;  // seconds, non-negative
    std::string src_ip;
    std::string dst_ip;
    std::optional<std::string> src_mac;
    std::optional<std::string> dst_mac;
    Protocol protocol = Protocol::kOther;
    std::uint64_t total_packets = 0;
    double total_load = 0.0;             // bytes
    double src_inter_arrival_mean = 0.0; // seconds
    Family family = Family::kClean;

    bool operator==(const FlowRecord&) const = default;
};

struct WindowConfig {
    double duration = 10.0;        // seconds; 5, 10 or 20
    std::size_t feature_dim = 520; // aggregate vector width
};

/// Binary class label. The ransomware class is the positive class and is
/// encoded as 0; clean traffic is 1.
enum class Label : std::uint8_t { kRansomware = 0, kClean = 1 };

inline Label label_for(Family f) {
    return f == Family::kClean ? Label::kClean : Label::kRansomware;
}

struct FeatureVector {
    std::vector<double> values; // length == feature_dim
    Label label = Label::kClean;
    Family family = Family::kClean;
    double window_end = 0.0;
};

enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };
enum class Provenance : std::uint8_t { kSynthetic = 0, kIngested = 1 };

struct Dataset {
    std::vector<FeatureVector> samples;
    Split split = Split::kTrain;
    Provenance provenance = Provenance::kSynthetic;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    std::array<std::size_t, kNumFamilies> family_counts() const;
    std::size_t count(Family f) const;
};

/// Indices of the base aggregate features. Everything past kBaseFeatureCount
/// is zero padding up to WindowConfig::feature_dim.
namespace feat {
inline constexpr std::size_t kFlowCount = 0;
inline constexpr std::size_t kTcpCount = 1;
inline constexpr std::size_t kUdpCount = 2;
inline constexpr std::size_t kArpCount = 3;
inline constexpr std::size_t kOtherCount = 4;
inline constexpr std::size_t kPacketSum = 5;
inline constexpr std::size_t kPacketMean = 6;
inline constexpr std::size_t kPacketVar = 7;
inline constexpr std::size_t kLoadSum = 8;
inline constexpr std::size_t kLoadMean = 9;
inline constexpr std::size_t kLoadVar = 10;
inline constexpr std::size_t kIatMean = 11;
inline constexpr std::size_t kIatVar = 12;
inline constexpr std::size_t kTcpPacketSum = 13;
inline constexpr std::size_t kUdpPacketSum = 14;
inline constexpr std::size_t kArpPacketSum = 15;
inline constexpr std::size_t kOtherPacketSum = 16;
inline constexpr std::size_t kTcpLoadSum = 17;
inline constexpr std::size_t kUdpLoadSum = 18;
inline constexpr std::size_t kArpLoadSum = 19;
inline constexpr std::size_t kOtherLoadSum = 20;
inline constexpr std::size_t kDistinctSrc = 21;
inline constexpr std::size_t kDistinctDst = 22;
inline constexpr std::size_t kFlowRate = 23;
inline constexpr std::size_t kPacketRate = 24;
inline constexpr std::size_t kLoadRate = 25;
inline constexpr std::size_t kSpan = 26;
inline constexpr std::size_t kLastProtoTcp = 27;
inline constexpr std::size_t kLastProtoUdp = 28;
inline constexpr std::size_t kLastProtoArp = 29;
inline constexpr std::size_t kLastProtoOther = 30;
inline constexpr std::size_t kLastPackets = 31;
inline constexpr std::size_t kLastLoad = 32;
inline constexpr std::size_t kLastIat = 33;
inline constexpr std::size_t kLastOffset = 34;
inline constexpr std::size_t kBaseFeatureCount = 35;
}  // namespace feat

/// Time bucket index of a flow: windows are the half-open intervals
/// (k*duration, (k+1)*duration], so a record at exactly k*duration belongs to
/// bucket k-1 and bucket k ends at (k+1)*duration.
std::int64_t window_bucket(double start_time, const WindowConfig& config);

/// Aggregates the flows of one window into a fixed-width feature vector.
/// Variances are population variances. Label and family come from the
/// majority family among the records; ties resolve to the most severe
/// (highest-valued) family. Throws EmptyWindowError on an empty record list.
FeatureVector aggregate_window(std::span<const FlowRecord> records, const WindowConfig& config);

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

/// Per-family split sizes: every split except the last takes floor(n*ratio),
/// the last takes the remainder.
std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& ratios);

struct DatasetTriple {
    Dataset train;
    Dataset val;
    Dataset test;
};

/// Windows the flow list (stride == duration), aggregates each window and
/// splits the windows per family with a seeded shuffle. A family present with
/// fewer than 3 windows raises InsufficientDataError.
DatasetTriple build_dataset(std::span<const FlowRecord> flows, const WindowConfig& config,
                            const SplitRatios& ratios, std::uint64_t seed,
                            Provenance provenance = Provenance::kSynthetic);

enum class Scenario : std::uint8_t { kIid3, kIid4, kNonIid3, kNonIid4 };

const char* scenario_name(Scenario s);
std::size_t scenario_clients(Scenario s);

/// Splits a training set across simulated clients.
///   IID: every family is shuffled (seeded) and dealt in near-equal shares.
///   Non-IID (label skew): clean samples are split evenly; each ransomware
///   family goes wholly to its designated client:
///     4 clients: C1=WC, C2=PY, C3=BR, C4=PG
///     3 clients: C1=WC, C2=PY+BR, C3=PG
/// A family required by the scenario but absent raises MissingFamilyError.
std::vector<Dataset> partition(const Dataset& train, Scenario scenario, std::uint64_t seed);

/// Appends one window's worth of synthetic flows of the given family to
/// `out`, inside time bucket `bucket`. Endpoint strings can be overridden for
/// simulation traffic.
struct TrafficEndpoints {
    std::string src_ip;
    std::vector<std::string> dst_pool; // scan/fan-out targets are synthesized past this pool
};
void emit_window_flows(std::vector<FlowRecord>& out, Family family, std::int64_t bucket,
                       const WindowConfig& config, Rng& rng,
                       const TrafficEndpoints* endpoints = nullptr);

/// Desk-scale substitute for the real capture. Emits `windows_per_family[f]`
/// window-aligned flow groups per family, interleaved in seeded order, with
/// start times strictly increasing across the trace. Deterministic in the
/// seed at the record-field level.
///
/// The family signatures are engineered so that WannaCry and PowerGhost share
/// a TCP-burst pattern (elevated tcp flow counts) while Petya and BadRabbit
/// share an ARP-scan pattern (elevated arp flow counts), and the two patterns
/// are disjoint; every other aggregate dimension is drawn from the same
/// distribution for all classes.
std::vector<FlowRecord> synthesize(std::uint64_t profile_seed,
                                   const std::array<std::size_t, kNumFamilies>& windows_per_family,
                                   const WindowConfig& config = {});

/// Window counts per family matching the shape of the reference capture
/// (100000 / 25000 / 981 / 389 / 24170 before scaling), clamped to at least 4
/// windows per family so splits stay viable.
std::array<std::size_t, kNumFamilies> paper_window_counts(double scale);

/// Column names for CSV ingestion. The first eight are required in the
/// header; the MAC columns are optional.
struct CsvSchema {
    std::string start_time = "start_time";
    std::string src_ip = "src_ip";
    std::string dst_ip = "dst_ip";
    std::string protocol = "protocol";
    std::string total_packets = "total_packets";
    std::string total_load = "total_load";
    std::string src_iat = "src_iat";
    std::string family = "family";
    std::string src_mac = "src_mac";
    std::string dst_mac = "dst_mac";
};

struct IngestReport {
    std::size_t rows_total = 0;
    std::size_t rows_ok = 0;
    std::size_t rows_skipped = 0;
};

/// Reads flow records from a UTF-8 CSV file with a header row. Malformed rows
/// (wrong field count, unparsable or negative numbers) are counted and
/// skipped. Records are returned sorted by start time. Throws IoError if the
/// file cannot be read, SchemaError if required columns are missing or more
/// than half of the data rows are malformed.
std::vector<FlowRecord> ingest_csv(const std::filesystem::path& path, const CsvSchema& schema = {},
                                   IngestReport* report = nullptr);

/// Writes flows as CSV in the default schema (used by the data-synth command;
/// output is ingestible by ingest_csv).
void write_flows_csv(const std::filesystem::path& path, std::span<const FlowRecord> flows);

/// Dataset cache: newline-delimited JSON, one object per sample.
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path, Split split,
                     Provenance provenance = Provenance::kIngested);

}  // namespace feddice
