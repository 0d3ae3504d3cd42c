#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hrcm/bridge_service.hpp"
#include "hrcm/errors.hpp"
#include "hrcm/metrics.hpp"
#include "hrcm/scenario.hpp"
#include "hrcm/simulator.hpp"
#include "hrcm/websocket.hpp"

namespace {

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

hrcm::scenario::ScenarioConfig load_or_default(const std::string& path) {
    if (path.empty()) {
        return hrcm::scenario::ScenarioConfig::defaults(hrcm::scenario::ScenarioKind::AnyToAny);
    }
    return hrcm::scenario::load_scenario(path);
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out) {
    auto config = hrcm::scenario::load_scenario(config_path);
    if (seed) {
        config.seed = *seed;
    }
    if (!out.empty()) {
        config.output_dir = out;
    }
    const auto result = hrcm::sim::run_scenario(config);
    hrcm::sim::write_artifacts(result, config.output_dir);
    auto summary = hrcm::metrics::summary_to_json(result.summary);
    summary["status"] = hrcm::sim::to_string(result.servo.status);
    summary["output_dir"] = config.output_dir.string();
    std::cout << summary.dump(2) << '\n';
    return result.servo.converged() ? 0 : 2;
}

int cmd_replay(const std::string& csv, const std::string& out) {
    const auto records = hrcm::metrics::read_csv(std::filesystem::path(csv));
    nlohmann::json doc = {{"summary", hrcm::metrics::summary_to_json(hrcm::metrics::summarize(records))},
                          {"series", hrcm::metrics::plot_series(records)}};
    if (out.empty()) {
        std::cout << doc.dump(2) << '\n';
    } else {
        std::ofstream(out) << doc.dump(2) << '\n';
        std::cout << doc["summary"].dump(2) << '\n';
    }
    return 0;
}

int cmd_export_graph(const std::string& config_path, const std::string& out) {
    const auto config = hrcm::scenario::load_scenario(config_path);
    auto built = hrcm::sim::build_graph(config);
    const std::filesystem::path path = out.empty() ? config.output_dir / "graph.json" : std::filesystem::path(out);
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    built.second.save(path);
    std::cout << "wrote " << built.second.size() << " vertices to " << path.string() << '\n';
    return 0;
}

int cmd_serve(const std::string& config_path, const std::string& bind, int port, int tick_ms) {
    hrcm::bridge::ServiceOptions options;
    options.tick_period = std::chrono::milliseconds(tick_ms);
    hrcm::bridge::BridgeService service(load_or_default(config_path), options);
    service.start();
    hrcm::ws::Server server(service, bind, static_cast<std::uint16_t>(port));
    server.start();
    std::cerr << "hrcm bridge listening on ws://" << bind << ':' << server.port() << "/\n";
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    server.stop();
    service.stop();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Homography-based visual servoing under a remote center of motion (simulation)"};
    app.require_subcommand(1);

    std::string config_path, out;
    std::optional<std::uint64_t> seed;

    auto* run = app.add_subcommand("run", "Run a scenario and write metrics.csv, summary.json and graph.json");
    run->add_option("config", config_path, "Scenario config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "Override the scenario seed");
    run->add_option("--out", out, "Output directory (default: the config's output_dir)");

    std::string csv;
    auto* replay = app.add_subcommand("replay", "Summarize a metrics log and emit plot series");
    replay->add_option("metrics", csv, "metrics.csv from a previous run")->required()->check(CLI::ExistingFile);
    replay->add_option("--out", out, "Write the full document here instead of stdout");

    auto* export_graph = app.add_subcommand("export-graph", "Build the scenario's view graph and save it");
    export_graph->add_option("config", config_path, "Scenario config (JSON)")->required()->check(CLI::ExistingFile);
    export_graph->add_option("--out", out, "Graph file (default: <output_dir>/graph.json)");

    std::string bind = "127.0.0.1";
    int port = 8765;
    int tick_ms = 33;
    auto* serve = app.add_subcommand("serve", "Start the WebSocket bridge for the operator UI");
    serve->add_option("--config", config_path, "Session scenario config")->envname("HRCM_CONFIG");
    serve->add_option("--bind", bind, "Bind address")->envname("HRCM_BIND");
    serve->add_option("--port", port, "TCP port (0 picks a free one)")->envname("HRCM_PORT")->check(CLI::Range(0, 65535));
    serve->add_option("--tick-ms", tick_ms, "Servo tick period in ms")->check(CLI::Range(0, 10000));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            return cmd_run(config_path, seed, out);
        }
        if (*replay) {
            return cmd_replay(csv, out);
        }
        if (*export_graph) {
            return cmd_export_graph(config_path, out);
        }
        if (*serve) {
            return cmd_serve(config_path, bind, port, tick_ms);
        }
    } catch (const hrcm::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
