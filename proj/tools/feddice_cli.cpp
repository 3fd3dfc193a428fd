// Command line front end: synthesizes or ingests traffic, trains centralized
// and federated models, runs isolation cross-evaluations and the outbreak
// simulator, and writes every result as plain files into a run directory.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "feddice/errors.hpp"
#include "feddice/federation.hpp"
#include "feddice/metrics.hpp"
#include "feddice/model.hpp"
#include "feddice/netflow.hpp"
#include "feddice/policy.hpp"
#include "feddice/sim.hpp"
#include "feddice/textio.hpp"

namespace fs = std::filesystem;
using feddice::fmt_fixed;
using ordered_json = nlohmann::ordered_json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::uint64_t env_seed() {
    const char* env = std::getenv("FEDDICE_SEED");
    if (env == nullptr || *env == '\0') return 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == nullptr || *end != '\0') {
        std::cerr << "warning: ignoring unparsable FEDDICE_SEED=\"" << env << "\"\n";
        return 0;
    }
    return static_cast<std::uint64_t>(v);
}

feddice::Scenario scenario_from_case(const std::string& s) {
    if (s == "I-A") return feddice::Scenario::kIid3;
    if (s == "I-B") return feddice::Scenario::kIid4;
    if (s == "II-A") return feddice::Scenario::kNonIid3;
    if (s == "II-B") return feddice::Scenario::kNonIid4;
    throw feddice::Error("unknown case " + s + "; expected I-A, I-B, II-A or II-B");
}

feddice::ModelKind model_from_flag(const std::string& s) {
    const auto kind = feddice::model_kind_from_string(s);
    if (!kind) throw feddice::Error("unknown model " + s + "; expected lr, svm or fnn");
    return *kind;
}

// Everything a run needs to be reproduced, resolved to concrete values.
struct RunSpec {
    std::string command;
    std::string model = "lr";
    std::string scenario = "I-B";
    int window = 10;
    double scale = 0.05;
    std::uint64_t seed = 0;
    std::string data = "synthetic";
    std::string out;

    std::size_t epochs = 10;        // centralized
    std::size_t rounds = 10;        // federated
    std::size_t local_epochs = 1;
    double learning_rate = 0.01;
    std::size_t batch_size = 64;

    feddice::WindowConfig window_config() const {
        return {static_cast<double>(window), 520};
    }

    fs::path out_dir() const {
        if (!out.empty()) return out;
        std::string name = "runs/" + command + "-" + model + "-" + scenario + "-w" +
                           std::to_string(window) + "-s" + std::to_string(seed);
        return name;
    }

    ordered_json to_json() const {
        ordered_json j;
        j["command"] = command;
        j["model"] = model;
        j["case"] = scenario;
        j["window"] = window;
        j["feature_dim"] = 520;
        j["scale"] = scale;
        j["seed"] = seed;
        j["data"] = data;
        j["out"] = out_dir().string();
        j["epochs"] = epochs;
        j["rounds"] = rounds;
        j["local_epochs"] = local_epochs;
        j["learning_rate"] = learning_rate;
        j["batch_size"] = batch_size;
        return j;
    }
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw feddice::IoError("cannot write " + path.string());
    out << text;
    if (!out) throw feddice::IoError("write failed for " + path.string());
}

fs::path prepare_out_dir(const RunSpec& spec, ordered_json extra = {}) {
    const fs::path dir = spec.out_dir();
    fs::create_directories(dir);
    ordered_json j = spec.to_json();
    for (auto& [k, v] : extra.items()) j[k] = v;
    write_text(dir / "config.json", j.dump(2) + "\n");
    return dir;
}

std::vector<feddice::FlowRecord> obtain_flows(const RunSpec& spec,
                                              feddice::IngestReport* report = nullptr) {
    if (spec.data == "synthetic")
        return feddice::synthesize(spec.seed, feddice::paper_window_counts(spec.scale),
                                   spec.window_config());
    return feddice::ingest_csv(spec.data, feddice::CsvSchema{}, report);
}

feddice::DatasetTriple obtain_dataset(const RunSpec& spec) {
    const auto flows = obtain_flows(spec);
    const auto provenance = spec.data == "synthetic" ? feddice::Provenance::kSynthetic
                                                     : feddice::Provenance::kIngested;
    return feddice::build_dataset(flows, spec.window_config(), feddice::SplitRatios{}, spec.seed,
                                  provenance);
}

std::string markdown_table(const std::vector<std::string>& header,
                           const std::vector<std::vector<std::string>>& rows) {
    std::string md = "|";
    for (const auto& h : header) md += " " + h + " |";
    md += "\n|";
    for (std::size_t i = 0; i < header.size(); ++i) md += " --- |";
    md += "\n";
    for (const auto& row : rows) {
        md += "|";
        for (const auto& cell : row) md += " " + cell + " |";
        md += "\n";
    }
    return md;
}

std::vector<std::string> metric_cells(const feddice::MetricsReport& r) {
    return {fmt_fixed(r.accuracy, 5), fmt_fixed(r.precision, 5), fmt_fixed(r.recall, 5),
            fmt_fixed(r.f1, 5), fmt_fixed(r.fnr, 5)};
}

ordered_json dataset_summary(const feddice::DatasetTriple& triple) {
    auto counts = [](const feddice::Dataset& d) {
        ordered_json j;
        const auto c = d.family_counts();
        for (std::size_t f = 0; f < feddice::kNumFamilies; ++f)
            j[feddice::family_name(static_cast<feddice::Family>(f))] = c[f];
        j["total"] = d.size();
        return j;
    };
    ordered_json j;
    j["train"] = counts(triple.train);
    j["val"] = counts(triple.val);
    j["test"] = counts(triple.test);
    return j;
}

int cmd_data_synth(const RunSpec& spec) {
    const fs::path dir = prepare_out_dir(spec);
    const auto flows = obtain_flows(spec);
    feddice::write_flows_csv(dir / "flows.csv", flows);

    const auto windows = feddice::paper_window_counts(spec.scale);
    std::cout << "wrote " << flows.size() << " flows to " << (dir / "flows.csv").string() << "\n";
    for (std::size_t f = 0; f < feddice::kNumFamilies; ++f)
        std::cout << "  " << feddice::family_name(static_cast<feddice::Family>(f)) << ": "
                  << windows[f] << " windows\n";
    return 0;
}

int cmd_data_ingest(const RunSpec& spec) {
    if (spec.data == "synthetic")
        throw feddice::Error("data-ingest needs --data <csv>; use data-synth for synthetic flows");

    feddice::IngestReport report;
    const auto flows = obtain_flows(spec, &report);
    const auto triple = feddice::build_dataset(flows, spec.window_config(), feddice::SplitRatios{},
                                               spec.seed, feddice::Provenance::kIngested);

    ordered_json extra;
    extra["ingest"] = {{"rows_total", report.rows_total},
                       {"rows_ok", report.rows_ok},
                       {"rows_skipped", report.rows_skipped}};
    extra["datasets"] = dataset_summary(triple);
    const fs::path dir = prepare_out_dir(spec, extra);

    feddice::save_dataset(dir / "train.ndjson", triple.train);
    feddice::save_dataset(dir / "val.ndjson", triple.val);
    feddice::save_dataset(dir / "test.ndjson", triple.test);

    std::cout << "ingested " << report.rows_ok << "/" << report.rows_total << " rows ("
              << report.rows_skipped << " skipped) into " << dir.string() << "\n"
              << "train/val/test windows: " << triple.train.size() << "/" << triple.val.size()
              << "/" << triple.test.size() << "\n";
    return 0;
}

int cmd_train_centralized(const RunSpec& spec) {
    const auto triple = obtain_dataset(spec);
    const fs::path dir = prepare_out_dir(spec, ordered_json{{"datasets", dataset_summary(triple)}});

    feddice::TrainConfig cfg;
    cfg.learning_rate = spec.learning_rate;
    cfg.epochs = spec.epochs;
    cfg.batch_size = spec.batch_size;
    cfg.seed = spec.seed;

    const auto t0 = std::chrono::steady_clock::now();
    const auto result = feddice::run_centralized(model_from_flag(spec.model), triple, cfg);
    const double elapsed = seconds_since(t0);

    write_text(dir / "metrics.csv", "Setting," + feddice::MetricsReport::csv_header() + "\n" +
                                        "centralized," + result.test_report.csv_row() + "\n");
    std::string loss_csv = "epoch,loss\n";
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
        loss_csv += std::to_string(e) + "," + fmt_fixed(result.epoch_loss[e], 6) + "\n";
    write_text(dir / "loss.csv", loss_csv);

    std::vector<std::string> row = {spec.model};
    const auto cells = metric_cells(result.test_report);
    row.insert(row.end(), cells.begin(), cells.end());
    const std::string table = markdown_table(
        {"Model", "Accuracy", "Precision", "Recall", "F1-score", "FNR"}, {row});
    write_text(dir / "table.md", table);

    feddice::save_checkpoint(dir / "model.ckpt", result.model);
    std::cout << table << "wall clock: " << fmt_fixed(elapsed, 3) << " s\n"
              << "run dir: " << dir.string() << "\n";
    return 0;
}

int cmd_train_federated(const RunSpec& spec) {
    const auto triple = obtain_dataset(spec);
    const auto scenario = scenario_from_case(spec.scenario);
    const auto clients = feddice::partition(triple.train, scenario, spec.seed);

    ordered_json extra;
    extra["datasets"] = dataset_summary(triple);
    ordered_json client_sizes = ordered_json::array();
    for (const auto& c : clients) client_sizes.push_back(c.size());
    extra["client_sizes"] = client_sizes;
    const fs::path dir = prepare_out_dir(spec, extra);

    const feddice::ModelKind kind = model_from_flag(spec.model);

    feddice::FLConfig fl;
    fl.rounds = spec.rounds;
    fl.local_epochs = spec.local_epochs;
    fl.learning_rate = spec.learning_rate;
    fl.batch_size = spec.batch_size;
    fl.seed = spec.seed;
    fl.eval_rounds = true;

    auto t0 = std::chrono::steady_clock::now();
    const auto fed = feddice::run_federated(kind, clients, triple.val, triple.test, fl);
    const double fl_seconds = seconds_since(t0);

    // Centralized baseline over the pooled data, for quality and timing
    // comparison. Epochs match the total federated schedule.
    feddice::TrainConfig cfg;
    cfg.learning_rate = spec.learning_rate;
    cfg.epochs = spec.rounds * spec.local_epochs;
    cfg.batch_size = spec.batch_size;
    cfg.seed = spec.seed;
    t0 = std::chrono::steady_clock::now();
    const auto cent = feddice::run_centralized(kind, triple, cfg);
    const double cent_seconds = seconds_since(t0);

    write_text(dir / "metrics.csv",
               "Setting," + feddice::MetricsReport::csv_header() + "\n" +
                   "federated_" + feddice::scenario_name(scenario) + "," +
                   fed.test_report.csv_row() + "\n" + "centralized," +
                   cent.test_report.csv_row() + "\n");
    feddice::write_rounds_csv(dir / "rounds.csv", fed.rounds);
    feddice::save_checkpoint(dir / "model.ckpt", fed.global);

    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> fed_row = {std::string("FL (CASE ") + spec.scenario + ")"};
    const auto fed_cells = metric_cells(fed.test_report);
    fed_row.insert(fed_row.end(), fed_cells.begin(), fed_cells.end());
    std::vector<std::string> cent_row = {"Centralized"};
    const auto cent_cells = metric_cells(cent.test_report);
    cent_row.insert(cent_row.end(), cent_cells.begin(), cent_cells.end());
    rows.push_back(fed_row);
    rows.push_back(cent_row);
    const std::string table = markdown_table(
        {"Setting", "Accuracy", "Precision", "Recall", "F1-score", "FNR"}, rows);
    write_text(dir / "table.md", table);

    const double ratio = fl_seconds / cent_seconds;
    ordered_json timing;
    timing["federated_seconds"] = fl_seconds;
    timing["centralized_seconds"] = cent_seconds;
    timing["fl_over_centralized"] = ratio;
    write_text(dir / "timing.json", timing.dump(2) + "\n");

    std::cout << table << "federated: " << fmt_fixed(fl_seconds, 3) << " s, centralized: "
              << fmt_fixed(cent_seconds, 3) << " s, ratio: " << fmt_fixed(ratio, 2) << "x\n"
              << "run dir: " << dir.string() << "\n";
    return 0;
}

int cmd_eval_cross(const RunSpec& spec) {
    const auto triple = obtain_dataset(spec);
    const auto scenario = scenario_from_case(spec.scenario);
    const auto clients = feddice::partition(triple.train, scenario, spec.seed);
    const fs::path dir = prepare_out_dir(spec, ordered_json{{"datasets", dataset_summary(triple)}});

    feddice::TrainConfig cfg;
    cfg.learning_rate = spec.learning_rate;
    cfg.epochs = spec.epochs;
    cfg.batch_size = spec.batch_size;
    cfg.seed = spec.seed;

    const auto table = feddice::cross_evaluate(model_from_flag(spec.model), clients, cfg);

    std::string csv = "model_client,data_client," + feddice::MetricsReport::csv_header() +
                      ",MisclassifiedRansomware\n";
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < table.size(); ++i) {
        for (std::size_t j = 0; j < table[i].size(); ++j) {
            const auto& rep = table[i][j];
            csv += std::to_string(i + 1) + "," + std::to_string(j + 1) + "," + rep.csv_row() +
                   "," + std::to_string(rep.cm.fn) + "\n";
            std::vector<std::string> row = {"C" + std::to_string(i + 1),
                                            "C" + std::to_string(j + 1)};
            const auto cells = metric_cells(rep);
            row.insert(row.end(), cells.begin(), cells.end());
            row.push_back(std::to_string(rep.cm.fn));
            rows.push_back(std::move(row));
        }
    }
    write_text(dir / "metrics.csv", csv);
    const std::string md = markdown_table({"Trained on", "Evaluated on", "Accuracy", "Precision",
                                           "Recall", "F1-score", "FNR",
                                           "Misclassified ransomware samples"},
                                          rows);
    write_text(dir / "table.md", md);
    std::cout << md << "run dir: " << dir.string() << "\n";
    return 0;
}

struct SimOpts {
    std::size_t hospitals = 4;
    std::size_t devices = 5;
    std::size_t ticks = 50;
    double spread = 0.3;
    std::string detector = "oracle";
    std::size_t fl_period = 5;
    std::size_t detection_window = 1;
    std::string topology_file;
    std::vector<std::string> infections;
};

int cmd_simulate(const RunSpec& spec, const SimOpts& opts) {
    feddice::Topology topo = opts.topology_file.empty()
                                 ? feddice::Topology::make_dice(opts.hospitals, opts.devices)
                                 : feddice::load_topology(opts.topology_file);

    feddice::SimConfig cfg;
    cfg.ticks = opts.ticks;
    cfg.spread_probability = opts.spread;
    cfg.fl_round_period = opts.fl_period;
    cfg.detection_window = opts.detection_window;
    cfg.seed = spec.seed;
    cfg.model = model_from_flag(spec.model);
    cfg.window = spec.window_config();
    cfg.local_epochs = spec.local_epochs;
    cfg.learning_rate = spec.learning_rate;
    cfg.batch_size = spec.batch_size;

    if (opts.detector == "none") cfg.detector = feddice::DetectorMode::kNone;
    else if (opts.detector == "oracle") cfg.detector = feddice::DetectorMode::kOracle;
    else if (opts.detector == "federated") cfg.detector = feddice::DetectorMode::kFederated;
    else throw feddice::Error("unknown detector " + opts.detector);

    for (const auto& inf : opts.infections) {
        const auto colon = inf.find(':');
        const std::string device = inf.substr(0, colon);
        feddice::Family family = feddice::Family::kWannaCry;
        if (colon != std::string::npos) {
            const auto fam = feddice::family_from_string(inf.substr(colon + 1));
            if (!fam || *fam == feddice::Family::kClean)
                throw feddice::Error("bad infection spec " + inf +
                                     "; expected device:family");
            family = *fam;
        }
        cfg.initial_infections.emplace_back(device, family);
    }
    if (cfg.initial_infections.empty() && !topo.hospitals.empty() &&
        !topo.hospitals.front().devices.empty())
        cfg.initial_infections.emplace_back(topo.hospitals.front().devices.front(),
                                            feddice::Family::kWannaCry);

    ordered_json extra;
    extra["ticks"] = opts.ticks;
    extra["spread_probability"] = opts.spread;
    extra["detector"] = opts.detector;
    extra["fl_round_period"] = opts.fl_period;
    extra["detection_window"] = opts.detection_window;
    extra["hospitals"] = topo.hospitals.size();
    extra["devices"] = topo.device_count();
    ordered_json infections = ordered_json::array();
    for (const auto& [d, f] : cfg.initial_infections)
        infections.push_back(d + ":" + feddice::family_name(f));
    extra["initial_infections"] = infections;
    const fs::path dir = prepare_out_dir(spec, extra);

    save_topology(dir / "topology.json", topo);
    const feddice::SimReport report = feddice::run_simulation(topo, cfg);
    feddice::write_report_json(dir / "events.json", report);
    feddice::write_report_csv(dir / "summary.csv", report);

    std::cout << "ticks: " << report.ticks << "\n"
              << "infections: " << report.count(feddice::SimEventKind::kInfection) << "\n"
              << "detections: " << report.count(feddice::SimEventKind::kDetection) << "\n"
              << "quarantines: " << report.count(feddice::SimEventKind::kQuarantine) << "\n"
              << "final clean/infected/quarantined: " << report.final_counts.clean << "/"
              << report.final_counts.infected << "/" << report.final_counts.quarantined << "\n";
    if (report.containment_tick)
        std::cout << "containment tick: " << *report.containment_tick << "\n";
    else
        std::cout << "containment tick: never\n";
    std::cout << "run dir: " << dir.string() << "\n";
    return 0;
}

int cmd_report(const std::string& run_dir) {
    const fs::path dir = run_dir;
    const fs::path config = dir / "config.json";
    std::ifstream in(config);
    if (!in) throw feddice::IoError("no run at " + dir.string() + " (missing config.json)");
    std::cout << "# " << dir.string() << "\n\n## config\n" << in.rdbuf() << "\n";

    for (const char* name : {"metrics.csv", "timing.json", "summary.csv"}) {
        std::ifstream f(dir / name);
        if (!f) continue;
        std::cout << "## " << name << "\n" << f.rdbuf() << "\n";
    }
    const fs::path table = dir / "table.md";
    std::ifstream t(table);
    if (t) std::cout << "## table.md\n" << t.rdbuf() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated ransomware detection workbench for simulated hospital networks"};
    app.require_subcommand(1);

    RunSpec spec;
    spec.seed = env_seed();
    SimOpts sim;
    std::string report_dir;

    const auto add_common = [&](CLI::App* sub, bool with_model = true) {
        sub->add_option("--seed", spec.seed, "rng seed (FEDDICE_SEED as fallback)");
        sub->add_option("--out", spec.out, "run directory (default runs/<name>)");
        sub->add_option("--window", spec.window, "window length in seconds")
            ->check(CLI::IsMember({5, 10, 20}));
        sub->add_option("--scale", spec.scale, "synthetic capture scale")
            ->check(CLI::PositiveNumber);
        sub->add_option("--data", spec.data, "flow csv path, or \"synthetic\"");
        if (with_model)
            sub->add_option("--model", spec.model, "classifier kind")
                ->check(CLI::IsMember({"lr", "svm", "fnn"}));
    };
    const auto add_training = [&](CLI::App* sub) {
        sub->add_option("--epochs", spec.epochs, "centralized training epochs");
        sub->add_option("--rounds", spec.rounds, "federated rounds");
        sub->add_option("--local-epochs", spec.local_epochs, "epochs per client per round");
        sub->add_option("--lr", spec.learning_rate, "sgd learning rate");
        sub->add_option("--batch", spec.batch_size, "minibatch size");
    };

    auto* synth = app.add_subcommand("data-synth", "write a synthetic flow capture");
    add_common(synth, false);

    auto* ingest = app.add_subcommand("data-ingest", "window and split a flow csv");
    add_common(ingest, false);

    auto* central = app.add_subcommand("train-centralized", "train one model on pooled data");
    add_common(central);
    add_training(central);

    auto* fed = app.add_subcommand("train-federated", "train with federated averaging");
    add_common(fed);
    add_training(fed);
    fed->add_option("--case", spec.scenario, "client scenario")
        ->check(CLI::IsMember({"I-A", "I-B", "II-A", "II-B"}));

    auto* cross = app.add_subcommand("eval-cross", "evaluate every client model on every client");
    add_common(cross);
    add_training(cross);
    cross->add_option("--case", spec.scenario, "client scenario")
        ->check(CLI::IsMember({"I-A", "I-B", "II-A", "II-B"}));

    auto* simulate = app.add_subcommand("simulate", "run the outbreak and mitigation simulator");
    add_common(simulate);
    add_training(simulate);
    simulate->add_option("--hospitals", sim.hospitals, "hospital count");
    simulate->add_option("--devices", sim.devices, "devices per hospital");
    simulate->add_option("--ticks", sim.ticks, "simulation length in windows");
    simulate->add_option("--spread", sim.spread, "per-edge infection probability")
        ->check(CLI::Range(0.0, 1.0));
    simulate->add_option("--detector", sim.detector, "none, oracle or federated")
        ->check(CLI::IsMember({"none", "oracle", "federated"}));
    simulate->add_option("--fl-period", sim.fl_period, "ticks between federated rounds");
    simulate->add_option("--detection-window", sim.detection_window,
                         "ticks between policy sweeps");
    simulate->add_option("--topology", sim.topology_file, "topology json instead of --hospitals");
    simulate->add_option("--infect", sim.infections,
                         "initial infection as device:family (repeatable)");

    auto* report = app.add_subcommand("report", "print the artifacts of a run directory");
    report->add_option("dir", report_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) { spec.command = "data-synth"; return cmd_data_synth(spec); }
        if (ingest->parsed()) { spec.command = "data-ingest"; return cmd_data_ingest(spec); }
        if (central->parsed()) {
            spec.command = "train-centralized";
            return cmd_train_centralized(spec);
        }
        if (fed->parsed()) { spec.command = "train-federated"; return cmd_train_federated(spec); }
        if (cross->parsed()) {
            spec.command = "eval-cross";
            if (!cross->count("--case")) spec.scenario = "II-B";
            return cmd_eval_cross(spec);
        }
        if (simulate->parsed()) { spec.command = "simulate"; return cmd_simulate(spec, sim); }
        if (report->parsed()) return cmd_report(report_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
