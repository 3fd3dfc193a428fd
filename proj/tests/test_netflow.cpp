#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "feddice/errors.hpp"
#include "feddice/netflow.hpp"
#include "feddice/rng.hpp"

using namespace feddice;

namespace {

FlowRecord flow(double t, std::string src, std::string dst, Protocol proto, std::uint64_t packets,
                double load, double iat, Family fam) {
    FlowRecord r;
    r.start_time = t;
    r.src_ip = std::move(src);
    r.dst_ip = std::move(dst);
    r.protocol = proto;
    r.total_packets = packets;
    r.total_load = load;
    r.src_inter_arrival_mean = iat;
    r.family = fam;
    return r;
}

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("window buckets cover half-open intervals from above") {
    const WindowConfig ten{10.0, 40};
    CHECK(window_bucket(0.5, ten) == 0);
    CHECK(window_bucket(10.0, ten) == 0);
    CHECK(window_bucket(10.5, ten) == 1);
    CHECK(window_bucket(0.0, ten) == -1);

    const WindowConfig five{5.0, 40};
    CHECK(window_bucket(5.0, five) == 0);
    CHECK(window_bucket(5.01, five) == 1);

    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double t = rng.uniform(0.0, 500.0);
        const auto k = static_cast<double>(window_bucket(t, ten));
        CHECK(t > k * ten.duration - 1e-9);
        CHECK(t <= (k + 1) * ten.duration + 1e-9);
    }
}

TEST_CASE("aggregate_window computes the documented statistics") {
    const WindowConfig cfg{10.0, 40};
    const std::vector<FlowRecord> records = {
        flow(12.0, "a", "x", Protocol::kTcp, 10, 1000.0, 0.1, Family::kClean),
        flow(15.0, "b", "x", Protocol::kUdp, 20, 500.0, 0.2, Family::kWannaCry),
        flow(19.0, "a", "y", Protocol::kArp, 30, 1500.0, 0.3, Family::kWannaCry),
    };
    const FeatureVector fv = aggregate_window(records, cfg);
    REQUIRE(fv.values.size() == 40);
    const auto& v = fv.values;

    CHECK(fv.window_end == 20.0);
    CHECK(v[feat::kFlowCount] == 3.0);
    CHECK(v[feat::kTcpCount] == 1.0);
    CHECK(v[feat::kUdpCount] == 1.0);
    CHECK(v[feat::kArpCount] == 1.0);
    CHECK(v[feat::kOtherCount] == 0.0);
    CHECK(v[feat::kPacketSum] == 60.0);
    CHECK(v[feat::kPacketMean] == 20.0);
    CHECK(v[feat::kPacketVar] == doctest::Approx(200.0 / 3.0).epsilon(1e-12));
    CHECK(v[feat::kLoadSum] == 3000.0);
    CHECK(v[feat::kLoadMean] == 1000.0);
    CHECK(v[feat::kLoadVar] == doctest::Approx(500000.0 / 3.0).epsilon(1e-12));
    CHECK(v[feat::kIatMean] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(v[feat::kIatVar] == doctest::Approx(0.02 / 3.0).epsilon(1e-12));
    CHECK(v[feat::kTcpPacketSum] == 10.0);
    CHECK(v[feat::kUdpPacketSum] == 20.0);
    CHECK(v[feat::kArpPacketSum] == 30.0);
    CHECK(v[feat::kOtherPacketSum] == 0.0);
    CHECK(v[feat::kTcpLoadSum] == 1000.0);
    CHECK(v[feat::kUdpLoadSum] == 500.0);
    CHECK(v[feat::kArpLoadSum] == 1500.0);
    CHECK(v[feat::kOtherLoadSum] == 0.0);
    CHECK(v[feat::kDistinctSrc] == 2.0);
    CHECK(v[feat::kDistinctDst] == 2.0);
    CHECK(v[feat::kFlowRate] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(v[feat::kPacketRate] == 6.0);
    CHECK(v[feat::kLoadRate] == 300.0);
    CHECK(v[feat::kSpan] == 7.0);
    CHECK(v[feat::kLastProtoTcp] == 0.0);
    CHECK(v[feat::kLastProtoArp] == 1.0);
    CHECK(v[feat::kLastPackets] == 30.0);
    CHECK(v[feat::kLastLoad] == 1500.0);
    CHECK(v[feat::kLastIat] == 0.3);
    CHECK(v[feat::kLastOffset] == 1.0);
    for (std::size_t i = feat::kBaseFeatureCount; i < 40; ++i) CHECK(v[i] == 0.0);

    // Two WannaCry flows outvote the clean one.
    CHECK(fv.family == Family::kWannaCry);
    CHECK(fv.label == Label::kRansomware);
}

TEST_CASE("aggregate_window ties resolve to the most severe family") {
    const WindowConfig cfg{10.0, 40};
    const std::vector<FlowRecord> tie = {
        flow(1.0, "a", "x", Protocol::kTcp, 1, 1.0, 0.1, Family::kWannaCry),
        flow(2.0, "a", "x", Protocol::kTcp, 1, 1.0, 0.1, Family::kPetya),
    };
    CHECK(aggregate_window(tie, cfg).family == Family::kPetya);

    const std::vector<FlowRecord> clean_majority = {
        flow(1.0, "a", "x", Protocol::kTcp, 1, 1.0, 0.1, Family::kClean),
        flow(2.0, "a", "x", Protocol::kTcp, 1, 1.0, 0.1, Family::kClean),
        flow(3.0, "a", "x", Protocol::kTcp, 1, 1.0, 0.1, Family::kBadRabbit),
    };
    const FeatureVector fv = aggregate_window(clean_majority, cfg);
    CHECK(fv.family == Family::kClean);
    CHECK(fv.label == Label::kClean);
}

TEST_CASE("aggregate_window rejects empty or undersized input") {
    const WindowConfig cfg{10.0, 40};
    CHECK_THROWS_AS(aggregate_window({}, cfg), EmptyWindowError);

    const std::vector<FlowRecord> one = {
        flow(1.0, "a", "x", Protocol::kTcp, 1, 1.0, 0.1, Family::kClean)};
    CHECK_THROWS_AS(aggregate_window(one, WindowConfig{10.0, 10}), ShapeError);
}

TEST_CASE("split_counts floors the early splits and keeps the remainder") {
    const SplitRatios r;
    CHECK(split_counts(981, r) == std::array<std::size_t, 3>{784, 98, 99});
    CHECK(split_counts(389, r) == std::array<std::size_t, 3>{311, 38, 40});
    CHECK(split_counts(10, r) == std::array<std::size_t, 3>{8, 1, 1});
    CHECK(split_counts(5, r) == std::array<std::size_t, 3>{4, 0, 1});
    CHECK(split_counts(4, r) == std::array<std::size_t, 3>{3, 0, 1});
    CHECK(split_counts(0, r) == std::array<std::size_t, 3>{0, 0, 0});

    CHECK_THROWS_AS(split_counts(10, SplitRatios{0.5, 0.1, 0.1}), Error);
}

TEST_CASE("build_dataset splits each family separately") {
    const std::array<std::size_t, kNumFamilies> windows{8, 5, 0, 0, 4};
    const WindowConfig cfg;
    const auto flows = synthesize(42, windows, cfg);
    const auto triple = build_dataset(flows, cfg, SplitRatios{}, 7);

    CHECK(triple.train.split == Split::kTrain);
    CHECK(triple.val.split == Split::kVal);
    CHECK(triple.test.split == Split::kTest);

    CHECK(triple.train.count(Family::kClean) == 6);
    CHECK(triple.val.count(Family::kClean) == 0);
    CHECK(triple.test.count(Family::kClean) == 2);
    CHECK(triple.train.count(Family::kWannaCry) == 4);
    CHECK(triple.test.count(Family::kWannaCry) == 1);
    CHECK(triple.train.count(Family::kPowerGhost) == 3);
    CHECK(triple.test.count(Family::kPowerGhost) == 1);
    CHECK(triple.train.size() + triple.val.size() + triple.test.size() == 17);

    for (const auto& s : triple.train.samples) {
        CHECK(s.values.size() == cfg.feature_dim);
        CHECK(s.label == label_for(s.family));
    }
}

TEST_CASE("build_dataset refuses families too small to split") {
    const std::array<std::size_t, kNumFamilies> windows{4, 2, 0, 0, 0};
    const WindowConfig cfg;
    const auto flows = synthesize(1, windows, cfg);
    CHECK_THROWS_AS(build_dataset(flows, cfg, SplitRatios{}, 0), InsufficientDataError);
}

TEST_CASE("iid partitions deal every family near-equally") {
    const auto flows = synthesize(9, {40, 12, 8, 8, 12}, WindowConfig{});
    const auto triple = build_dataset(flows, WindowConfig{}, SplitRatios{}, 9);
    const auto clients = partition(triple.train, Scenario::kIid4, 3);
    REQUIRE(clients.size() == 4);

    std::size_t total = 0;
    for (std::size_t f = 0; f < kNumFamilies; ++f) {
        std::size_t lo = SIZE_MAX, hi = 0;
        for (const auto& c : clients) {
            const std::size_t n = c.count(static_cast<Family>(f));
            lo = std::min(lo, n);
            hi = std::max(hi, n);
        }
        CHECK(hi - lo <= 1);
    }
    for (const auto& c : clients) total += c.size();
    CHECK(total == triple.train.size());
}

TEST_CASE("label-skewed partitions isolate the ransomware families") {
    const auto flows = synthesize(9, {40, 12, 8, 8, 12}, WindowConfig{});
    const auto triple = build_dataset(flows, WindowConfig{}, SplitRatios{}, 9);

    const auto four = partition(triple.train, Scenario::kNonIid4, 3);
    REQUIRE(four.size() == 4);
    CHECK(four[0].count(Family::kWannaCry) == triple.train.count(Family::kWannaCry));
    CHECK(four[1].count(Family::kPetya) == triple.train.count(Family::kPetya));
    CHECK(four[2].count(Family::kBadRabbit) == triple.train.count(Family::kBadRabbit));
    CHECK(four[3].count(Family::kPowerGhost) == triple.train.count(Family::kPowerGhost));
    CHECK(four[0].count(Family::kPetya) == 0);
    CHECK(four[3].count(Family::kWannaCry) == 0);

    std::size_t clean_lo = SIZE_MAX, clean_hi = 0;
    for (const auto& c : four) {
        clean_lo = std::min(clean_lo, c.count(Family::kClean));
        clean_hi = std::max(clean_hi, c.count(Family::kClean));
    }
    CHECK(clean_hi - clean_lo <= 1);

    const auto three = partition(triple.train, Scenario::kNonIid3, 3);
    REQUIRE(three.size() == 3);
    CHECK(three[0].count(Family::kWannaCry) == triple.train.count(Family::kWannaCry));
    CHECK(three[1].count(Family::kPetya) == triple.train.count(Family::kPetya));
    CHECK(three[1].count(Family::kBadRabbit) == triple.train.count(Family::kBadRabbit));
    CHECK(three[2].count(Family::kPowerGhost) == triple.train.count(Family::kPowerGhost));
}

TEST_CASE("label-skewed partitions require every family") {
    const auto flows = synthesize(3, {20, 6, 6, 0, 6}, WindowConfig{});
    const auto triple = build_dataset(flows, WindowConfig{}, SplitRatios{}, 3);
    CHECK_THROWS_AS(partition(triple.train, Scenario::kNonIid4, 0), MissingFamilyError);
    CHECK_NOTHROW(partition(triple.train, Scenario::kIid4, 0));
    CHECK_THROWS_AS(partition(Dataset{}, Scenario::kIid3, 0), InsufficientDataError);
}

TEST_CASE("scenario names and client counts") {
    CHECK(scenario_name(Scenario::kIid3) == std::string("IID_3"));
    CHECK(scenario_name(Scenario::kNonIid4) == std::string("NONIID_4"));
    CHECK(scenario_clients(Scenario::kIid3) == 3);
    CHECK(scenario_clients(Scenario::kIid4) == 4);
    CHECK(scenario_clients(Scenario::kNonIid3) == 3);
    CHECK(scenario_clients(Scenario::kNonIid4) == 4);
}

TEST_CASE("synthesize is deterministic and window-aligned") {
    const std::array<std::size_t, kNumFamilies> windows{5, 3, 2, 2, 3};
    const WindowConfig cfg;
    const auto a = synthesize(1234, windows, cfg);
    const auto b = synthesize(1234, windows, cfg);
    CHECK(a == b);
    CHECK(a != synthesize(1235, windows, cfg));

    for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i - 1].start_time <= a[i].start_time);

    // Each scheduled window holds exactly one family, and the family window
    // counts match the request.
    std::array<std::set<std::int64_t>, kNumFamilies> buckets;
    for (const auto& r : a)
        buckets[static_cast<std::size_t>(r.family)].insert(window_bucket(r.start_time, cfg));
    for (std::size_t f = 0; f < kNumFamilies; ++f) CHECK(buckets[f].size() == windows[f]);
    std::size_t total = 0;
    for (const auto& s : buckets) total += s.size();
    CHECK(total == 15);
}

TEST_CASE("emit_window_flows honors bucket, endpoints and profile") {
    std::vector<FlowRecord> out;
    Rng rng(77);
    const WindowConfig cfg;
    const TrafficEndpoints ep{"dev-a", {"dev-b", "dev-c"}};
    emit_window_flows(out, Family::kWannaCry, 3, cfg, rng, &ep);

    std::size_t tcp = 0, udp = 0, arp = 0, other = 0, pool_hits = 0;
    for (const auto& r : out) {
        CHECK(window_bucket(r.start_time, cfg) == 3);
        CHECK(r.src_ip == "dev-a");
        CHECK(r.family == Family::kWannaCry);
        if (r.dst_ip == "dev-b" || r.dst_ip == "dev-c") pool_hits++;
        switch (r.protocol) {
            case Protocol::kTcp:
                tcp++;
                CHECK(r.total_packets >= 160);
                CHECK(r.total_packets <= 220);
                break;
            case Protocol::kUdp: udp++; break;
            case Protocol::kArp: arp++; break;
            default: other++; break;
        }
    }
    CHECK(tcp >= 16);
    CHECK(tcp <= 24);
    CHECK(udp >= 40);
    CHECK(udp <= 80);
    CHECK(arp >= 8);
    CHECK(arp <= 12);
    CHECK(other <= 2);
    CHECK(pool_hits > 0);
}

TEST_CASE("paper_window_counts scales the capture shape") {
    CHECK(paper_window_counts(1.0) ==
          std::array<std::size_t, kNumFamilies>{100000, 25000, 981, 389, 24170});
    CHECK(paper_window_counts(0.01) == std::array<std::size_t, kNumFamilies>{1000, 250, 10, 4, 242});
    CHECK(paper_window_counts(1e-9) == std::array<std::size_t, kNumFamilies>{4, 4, 4, 4, 4});
    CHECK_THROWS_AS(paper_window_counts(0.0), Error);
}

TEST_CASE("csv ingestion skips malformed rows and reports counts") {
    const auto path = temp_file("feddice_test_ingest.csv");
    {
        std::ofstream out(path);
        out << "start_time,src_ip,dst_ip,protocol,total_packets,total_load,src_iat,family\n";
        out << "5.5,10.0.0.1,10.0.0.2,tcp,10,100.5,0.1,clean\n";
        out << "1.5,10.0.0.3,10.0.0.4,udp,5,50,0.2,wannacry\n";
        out << "2.0,10.0.0.5,10.0.0.6,arp,1,10,0.05,petya\n";
        out << "3.0,10.0.0.7,10.0.0.8,weird,2,20,0.05,badrabbit\n";
        out << "4.0,10.0.0.9,10.0.1.0,tcp,3,30,0.05,powerghost\n";
        out << "oops,10.0.0.1,10.0.0.2,tcp,10,100,0.1,clean\n";      // bad time
        out << "1.0,10.0.0.1,10.0.0.2,tcp,10,-4,0.1,clean\n";        // negative load
        out << "1.0,10.0.0.1,10.0.0.2,tcp,10,100,0.1,notafamily\n";  // bad family
        out << "1.0,10.0.0.1,10.0.0.2,tcp\n";                        // short row
    }
    IngestReport rep;
    const auto flows = ingest_csv(path, CsvSchema{}, &rep);
    CHECK(rep.rows_total == 9);
    CHECK(rep.rows_ok == 5);
    CHECK(rep.rows_skipped == 4);
    REQUIRE(flows.size() == 5);
    for (std::size_t i = 1; i < flows.size(); ++i)
        CHECK(flows[i - 1].start_time <= flows[i].start_time);
    CHECK(flows[0].start_time == 1.5);
    CHECK(flows[0].family == Family::kWannaCry);
    CHECK(flows[2].protocol == Protocol::kOther);  // unknown protocol folds to other
    CHECK(!flows[0].src_mac.has_value());
    std::filesystem::remove(path);
}

TEST_CASE("csv ingestion rejects structural problems") {
    const auto path = temp_file("feddice_test_ingest_bad.csv");
    {
        std::ofstream out(path);
        out << "start_time,src_ip,dst_ip,protocol,total_packets,total_load,src_iat\n";
        out << "1.0,a,b,tcp,1,1,0.1\n";
    }
    CHECK_THROWS_AS(ingest_csv(path), SchemaError);  // family column missing

    {
        std::ofstream out(path);
        out << "start_time,src_ip,dst_ip,protocol,total_packets,total_load,src_iat,family\n";
        out << "1.0,a,b,tcp,1,1,0.1,clean\n";
        out << "bad,a,b,tcp,1,1,0.1,clean\n";
        out << "bad,a,b,tcp,1,1,0.1,clean\n";
    }
    CHECK_THROWS_AS(ingest_csv(path), SchemaError);  // majority malformed
    std::filesystem::remove(path);

    CHECK_THROWS_AS(ingest_csv(temp_file("feddice_no_such.csv")), IoError);
}

TEST_CASE("flow csv output round trips through ingestion") {
    const auto path = temp_file("feddice_test_roundtrip.csv");
    const auto flows = synthesize(5, {3, 2, 0, 0, 0}, WindowConfig{});
    write_flows_csv(path, flows);

    IngestReport rep;
    const auto back = ingest_csv(path, CsvSchema{}, &rep);
    CHECK(rep.rows_skipped == 0);
    CHECK(back == flows);
    std::filesystem::remove(path);
}

TEST_CASE("dataset cache round trips") {
    const auto path = temp_file("feddice_test_dataset.ndjson");
    const auto flows = synthesize(11, {4, 3, 0, 0, 0}, WindowConfig{});
    const auto triple = build_dataset(flows, WindowConfig{}, SplitRatios{}, 11);
    save_dataset(path, triple.train);

    const Dataset back = load_dataset(path, Split::kVal, Provenance::kIngested);
    CHECK(back.split == Split::kVal);
    CHECK(back.provenance == Provenance::kIngested);
    REQUIRE(back.size() == triple.train.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back.samples[i].values == triple.train.samples[i].values);
        CHECK(back.samples[i].label == triple.train.samples[i].label);
        CHECK(back.samples[i].family == triple.train.samples[i].family);
        CHECK(back.samples[i].window_end == triple.train.samples[i].window_end);
    }

    std::ofstream(path) << "not json\n";
    CHECK_THROWS_AS(load_dataset(path, Split::kTrain), SchemaError);
    std::filesystem::remove(path);
}

TEST_CASE("family and protocol names round trip") {
    for (std::size_t f = 0; f < kNumFamilies; ++f) {
        const auto fam = static_cast<Family>(f);
        CHECK(family_from_string(family_name(fam)) == fam);
    }
    CHECK(family_from_string("WannaCry") == Family::kWannaCry);
    CHECK(!family_from_string("other").has_value());
    CHECK(protocol_from_string("TCP") == Protocol::kTcp);
    CHECK(protocol_from_string("mystery") == Protocol::kOther);
}
