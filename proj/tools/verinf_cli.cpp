// Command-line front end: scenario runs, log replay, economics sweeps, and
// the auditor's receipt check.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "verinf/codec.hpp"
#include "verinf/econ.hpp"
#include "verinf/receipts.hpp"
#include "verinf/sim.hpp"

namespace fs = std::filesystem;
using namespace verinf;

namespace {

std::optional<std::string> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

bool write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) return false;
    out << content;
    return bool(out);
}

std::optional<sim::ScenarioConfig> load_config(const std::string& path) {
    auto text = read_file(path);
    if (!text) {
        std::cerr << "error: cannot read config " << path << "\n";
        return std::nullopt;
    }
    nlohmann::json j = nlohmann::json::parse(*text, nullptr, false);
    if (j.is_discarded()) {
        std::cerr << "error: config is not valid JSON\n";
        return std::nullopt;
    }
    std::vector<std::string> diagnostics;
    auto cfg = sim::ScenarioConfig::from_json(j, &diagnostics);
    for (const auto& d : diagnostics) std::cerr << "config: " << d << "\n";
    if (!cfg) std::cerr << "error: config rejected\n";
    return cfg;
}

int cmd_run(const std::string& config_path, const std::string& out_dir) {
    auto cfg = load_config(config_path);
    if (!cfg) return 1;
    sim::RunResult result = sim::run_scenario(*cfg);

    fs::create_directories(out_dir);
    if (!write_file((fs::path(out_dir) / "events.ndjson").string(), result.event_log_text()) ||
        !write_file((fs::path(out_dir) / "metrics.json").string(),
                    result.metrics.to_json().dump(2) + "\n")) {
        std::cerr << "error: cannot write outputs to " << out_dir << "\n";
        return 1;
    }
    std::ostringstream stakes;
    stakes << "actor,final_stake\n";
    for (const auto& [actor, stake] : result.metrics.final_stakes) {
        stakes << actor << "," << stake << "\n";
    }
    write_file((fs::path(out_dir) / "stakes.csv").string(), stakes.str());

    std::cout << result.metrics.to_json().dump(2) << "\n";
    std::cout << "events: " << result.event_log.size() << " lines -> " << out_dir
              << "/events.ndjson\n";
    return 0;
}

int cmd_replay(const std::string& log_path, const std::string& config_path) {
    auto cfg = load_config(config_path);
    if (!cfg) return 1;
    auto log_text = read_file(log_path);
    if (!log_text) {
        std::cerr << "error: cannot read log " << log_path << "\n";
        return 1;
    }
    sim::ReplayReport report = sim::replay_verify(*log_text, *cfg);
    if (report.ok) {
        std::cout << "replay: ok (" << report.receipts_verified << " receipts, "
                  << report.proofs_verified << " inclusion proofs re-verified)\n";
        return 0;
    }
    std::cout << "replay: MISMATCH " << report.detail << "\n";
    return 1;
}

int cmd_econ_sweep(const std::string& grid_path, const std::string& out_path) {
    auto text = read_file(grid_path);
    if (!text) {
        std::cerr << "error: cannot read grid " << grid_path << "\n";
        return 1;
    }
    nlohmann::json j = nlohmann::json::parse(*text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        std::cerr << "error: grid is not valid JSON\n";
        return 1;
    }
    std::vector<double> pis = j.value("pi_c", std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
    double g = j.value("G", 50.0);
    double s_slash = j.value("S_slash", 100.0);
    uint32_t trials = j.value("trials", 10000u);
    uint64_t seed = j.value("seed", uint64_t{1});
    std::vector<std::string> strategies =
        j.value("strategies", std::vector<std::string>{"cheat", "honest"});

    std::vector<econ::SweepPoint> points;
    for (const auto& strategy_name : strategies) {
        econ::Strategy strategy =
            strategy_name == "honest" ? econ::Strategy::honest : econ::Strategy::cheat;
        for (double pi : pis) {
            econ::EconParams params;
            params.pi_c = pi;
            params.g = g;
            params.s_slash = s_slash;
            auto estimate = econ::monte_carlo_utility(strategy, params, trials, seed);
            points.push_back({pi, g, s_slash, strategy, estimate});
        }
    }
    std::string csv = econ::sweep_to_csv(points);
    if (out_path.empty()) {
        std::cout << csv;
    } else if (!write_file(out_path, csv)) {
        std::cerr << "error: cannot write " << out_path << "\n";
        return 1;
    }
    return 0;
}

int cmd_verify_receipt(const std::string& receipt_path, const std::string& da_path,
                       const std::string& exec_path, const std::string& pubkey_hex) {
    auto receipt_text = read_file(receipt_path);
    if (!receipt_text) {
        std::cerr << "error: cannot read receipt " << receipt_path << "\n";
        return 1;
    }
    auto receipt = receipts::receipt_from_json(*receipt_text);
    if (!receipt) {
        std::cerr << "error: malformed receipt JSON\n";
        return 1;
    }

    std::ifstream da_in(da_path);
    if (!da_in) {
        std::cerr << "error: cannot read DA dump " << da_path << "\n";
        return 1;
    }
    auto store = da::Store::restore(da_in);
    if (!store) {
        std::cerr << "error: DA dump rejected (root mismatch or bad format)\n";
        return 1;
    }

    int failures = 0;
    auto check = [&](const char* name, bool ok, const std::string& detail = "") {
        std::cout << (ok ? "PASS " : "FAIL ") << name;
        if (!detail.empty()) std::cout << " (" << detail << ")";
        std::cout << "\n";
        if (!ok) ++failures;
    };

    auto pointer = da::DaPointer::parse(receipt->da_pointer);
    check("da-pointer", bool(pointer), receipt->da_pointer);
    da::FetchResult fetched;
    if (pointer) {
        fetched = store->fetch_with_proof(*pointer);
        check("da-fetch", fetched.status == da::FetchStatus::ok);
        if (fetched.status == da::FetchStatus::ok) {
            auto root = store->root_of(pointer->slot_id);
            check("da-inclusion", root && da::verify_inclusion(fetched.proof, *root));
            auto record = receipts::decode_da_record(fetched.blob);
            check("da-record-decode", bool(record));
            if (record) {
                check("receipt-matches-da", record->second == *receipt);
            }
        }
    }

    if (!pubkey_hex.empty()) {
        auto pubkey = hex_decode(pubkey_hex);
        std::string why;
        bool ok = pubkey && receipts::verify_receipt(*receipt, *pubkey,
                                                     receipts::Registry::defaults(), &why);
        check("signature", ok, why);
    } else {
        std::cout << "SKIP signature (no --pubkey given)\n";
    }

    if (!exec_path.empty()) {
        auto exec_text = read_file(exec_path);
        if (!exec_text) {
            std::cerr << "error: cannot read exec " << exec_path << "\n";
            return 1;
        }
        nlohmann::json j = nlohmann::json::parse(*exec_text, nullptr, false);
        if (j.is_discarded()) {
            std::cerr << "error: exec is not valid JSON\n";
            return 1;
        }
        detcore::ExecutionTuple exec;
        try {
            exec.model_id = j.at("model_id").get<std::string>();
            auto digest = hash32_from_hex(j.at("container_digest").get<std::string>());
            exec.arch = j.at("arch").get<std::string>();
            exec.driver_tag = j.at("driver_tag").get<std::string>();
            auto policy = codec::policy_from_string(j.at("decode_policy").get<std::string>());
            exec.seed = j.at("seed").get<uint64_t>();
            exec.prompt = j.at("prompt").get<std::vector<uint32_t>>();
            if (!digest || !policy) throw std::runtime_error("bad digest or policy");
            exec.container_digest = *digest;
            exec.decode_policy = *policy;
        } catch (const std::exception& e) {
            std::cerr << "error: malformed exec JSON: " << e.what() << "\n";
            return 1;
        }
        Bytes req = codec::encode_execution_tuple(exec);
        check("request-hash", receipts::hash_commit(req) == receipt->req_hash);
        try {
            auto out = detcore::infer(exec);
            check("output-hash", receipts::hash_commit(out.canonical_bytes) == receipt->out_hash);
        } catch (const std::exception& e) {
            check("re-execute", false, e.what());
        }
    } else {
        std::cout << "SKIP re-execution (no --exec given; commitments checked without plaintext)\n";
    }

    std::cout << (failures == 0 ? "VERIFIED" : "INVALID") << "\n";
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic verifiable-inference simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out";
    auto* run = app.add_subcommand("run", "run a scenario and write event log + metrics");
    run->add_option("--config", config_path, "scenario config JSON")->required();
    run->add_option("--out", out_dir, "output directory");

    std::string log_path, replay_config;
    auto* replay = app.add_subcommand("replay", "re-run a scenario and compare event logs");
    replay->add_option("--log", log_path, "event log to verify")->required();
    replay->add_option("--config", replay_config, "scenario config JSON")->required();

    std::string grid_path, sweep_out;
    auto* sweep = app.add_subcommand("econ-sweep", "Monte Carlo payoff sweep to CSV");
    sweep->add_option("--grid", grid_path, "grid spec JSON")->required();
    sweep->add_option("--out", sweep_out, "output CSV path (default stdout)");

    std::string receipt_path, da_path, exec_path, pubkey_hex;
    auto* verify = app.add_subcommand("verify-receipt", "auditor check of a receipt against a DA dump");
    verify->add_option("--receipt", receipt_path, "receipt JSON")->required();
    verify->add_option("--da", da_path, "DA dump file")->required();
    verify->add_option("--exec", exec_path, "execution tuple JSON (enables re-execution)");
    verify->add_option("--pubkey", pubkey_hex, "operator public key, hex");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, out_dir);
        if (replay->parsed()) return cmd_replay(log_path, replay_config);
        if (sweep->parsed()) return cmd_econ_sweep(grid_path, sweep_out);
        if (verify->parsed()) return cmd_verify_receipt(receipt_path, da_path, exec_path, pubkey_hex);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
