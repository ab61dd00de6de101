// ledgerstack command-line driver.
//
//   ledgerstack chain init <out.jsonl> [--blocks N] [--mode quorum|pow] ...
//   ledgerstack chain verify|import <file.jsonl> [--config cfg.json]
//   ledgerstack chain export <scenario.jsonl> <out.jsonl> [--chain NAME]
//   ledgerstack scenario run <file.jsonl> [--report DIR]
//   ledgerstack contracts list
//   ledgerstack tsa day-cycle <file.jsonl> [--report DIR]
//   ledgerstack settle run <trades.csv> --lag N --mode bilateral|ccp|consortium
//   ledgerstack escrow demo
//
// Every command prints JSON. Reports go to --report, else to the directory
// named by LEDGERSTACK_REPORT_DIR, else only to stdout.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ledgerstack/chain.hpp"
#include "ledgerstack/contracts.hpp"
#include "ledgerstack/crypto.hpp"
#include "ledgerstack/error.hpp"
#include "ledgerstack/escrow.hpp"
#include "ledgerstack/scenario.hpp"
#include "ledgerstack/settlement.hpp"

namespace fs = std::filesystem;
using namespace ledgerstack;

namespace {

std::optional<fs::path> report_dir(const std::string& flag) {
    if (!flag.empty()) return fs::path(flag);
    if (const char* env = std::getenv("LEDGERSTACK_REPORT_DIR"); env && *env) return fs::path(env);
    return std::nullopt;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
}

/// Prints `report` and, when a report directory is configured, writes it there.
void emit(const Json& report, const std::string& flag, const std::string& file_name) {
    const auto text = scenario::report_text(report);
    if (auto dir = report_dir(flag)) {
        write_text(*dir / file_name, text);
        std::cerr << "report: " << (*dir / file_name).string() << "\n";
    }
    std::cout << text;
}

fs::path config_sidecar(const fs::path& chain_file) { return fs::path(chain_file.string() + ".config.json"); }

chain::ChainConfig load_config(const fs::path& chain_file, const std::string& explicit_path) {
    const fs::path p = explicit_path.empty() ? config_sidecar(chain_file) : fs::path(explicit_path);
    std::ifstream in(p);
    if (!in) throw Error(ErrorCode::IoError, "cannot read chain config " + p.string());
    return chain::ChainConfig::from_json(Json::parse(in));
}

void write_chain(const fs::path& out_path, const chain::Chain& c) {
    std::ostringstream body;
    chain::export_chain(c.blocks(), body);
    write_text(out_path, body.str());
    write_text(config_sidecar(out_path), c.config().to_json().dump(2) + "\n");
}

Json chain_summary(std::span<const chain::Block> blocks) {
    Json ids = Json::array();
    for (const auto& b : blocks) ids.push_back(b.id().hex());
    return Json{{"blocks", blocks.size()}, {"block_ids", ids}};
}

// --- chain ----------------------------------------------------------------

struct ChainInit {
    std::string out;
    std::size_t blocks = 5;
    std::string mode = "quorum";
    std::string seed_text = "ledgerstack-chain";
    std::uint32_t validators = 3;
    std::uint32_t quorum = 2;
    std::uint32_t bits = 8;
    std::size_t txs_per_block = 3;
};

int chain_init(const ChainInit& o) {
    chain::ChainConfig cfg;
    std::vector<crypto::KeyPair> keys;
    if (o.mode == "pow") {
        cfg.mode = chain::ConsensusMode::Pow;
        cfg.pow_target_bits = o.bits;
    } else if (o.mode == "quorum") {
        for (std::uint32_t i = 0; i < o.validators; ++i) {
            keys.push_back(crypto::keygen_from_text(o.seed_text + "/validator/" + std::to_string(i)));
            cfg.validators.push_back(keys.back().public_key);
        }
        cfg.quorum_m = o.quorum;
    } else {
        throw Error(ErrorCode::InvalidConfig, "mode must be quorum or pow");
    }
    cfg.validate();
    const auto author = crypto::keygen_from_text(o.seed_text + "/author");
    chain::Chain c(cfg);
    for (std::size_t h = 0; h < o.blocks; ++h) {
        std::vector<chain::Transaction> txs;
        for (std::size_t i = 0; i < o.txs_per_block; ++i)
            txs.push_back(chain::make_transaction(chain::TxKind::Generic, Json{{"block", h}, {"n", i}}, author));
        chain::seal_block(c, std::move(txs), 1000 * (h + 1), keys);
    }
    write_chain(o.out, c);
    Json out = chain_summary(c.blocks());
    out["config"] = cfg.to_json();
    std::cout << scenario::report_text(out);
    return 0;
}

int chain_check(const std::string& file, const std::string& config_path, bool with_ids) {
    const auto cfg = load_config(file, config_path);
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + file);
    auto imported = chain::import_chain(in, cfg);
    Json out = with_ids ? chain_summary(imported.blocks) : Json{{"blocks", imported.blocks.size()}};
    out["verdict"] = imported.verdict.to_json();
    std::cout << scenario::report_text(out);
    return imported.verdict.valid ? 0 : 1;
}

int chain_export(const std::string& scenario_file, const std::string& out, const std::string& name) {
    scenario::Engine engine;
    std::ifstream in(scenario_file);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + scenario_file);
    auto rr = scenario::run_scenario(in, &engine);
    if (!rr.ok) {
        std::cerr << "scenario failed at line " << rr.failed_line << " (" << rr.failed_op << "): " << rr.message << "\n";
        return 1;
    }
    const auto& c = name == "tsa" ? engine.tsa_chain() : engine.chain(name);
    write_chain(out, c);
    std::cout << scenario::report_text(chain_summary(c.blocks()));
    return 0;
}

// --- scenario / tsa ---------------------------------------------------------

int scenario_run(const std::string& file, const std::string& report_flag) {
    auto rr = scenario::run_scenario_file(file);
    emit(rr.report, report_flag, fs::path(file).stem().string() + ".report.json");
    if (!rr.ok)
        std::cerr << "line " << rr.failed_line << " (" << rr.failed_op << "): " << rr.error_name << ": " << rr.message << "\n";
    return rr.ok ? 0 : 1;
}

int tsa_day_cycle(const std::string& file, const std::string& report_flag) {
    auto rr = scenario::run_scenario_file(file);
    if (!rr.ok) {
        std::cerr << "line " << rr.failed_line << " (" << rr.failed_op << "): " << rr.error_name << ": " << rr.message << "\n";
        return 1;
    }
    const auto& summary = rr.report["summary"];
    if (!summary.contains("tsa")) throw Error(ErrorCode::InvalidParams, file + " has no treasury ops");
    emit(summary["tsa"], report_flag, fs::path(file).stem().string() + ".tsa.json");
    return 0;
}

// --- settle -----------------------------------------------------------------

int settle_run(const std::string& file, std::int64_t lag, const std::string& mode, const std::string& netting,
               const std::string& seed_text, const std::string& report_flag) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + file);
    settlement::CycleConfig cfg;
    cfg.lag_days = lag;
    cfg.mode = settlement::clearing_mode_from_string(mode);
    cfg.consortium_netting = settlement::netting_mode_from_string(netting);
    auto report = settlement::run_cycle(settlement::read_trades_csv(in), cfg, settlement::derive_cycle_keys(seed_text));
    emit(report.to_json(), report_flag,
         fs::path(file).stem().string() + ".lag" + std::to_string(lag) + "." + mode + ".cycle.json");
    return 0;
}

// --- escrow -----------------------------------------------------------------

int escrow_demo(const std::string& report_flag) {
    const auto buyer = crypto::keygen_from_text("escrow-demo/buyer");
    const auto seller = crypto::keygen_from_text("escrow-demo/seller");
    const auto arbiter = crypto::keygen_from_text("escrow-demo/arbiter");
    const auto name_of = [&](const crypto::PublicKey& pk) -> std::string {
        if (pk == buyer.public_key) return "buyer";
        if (pk == seller.public_key) return "seller";
        return "arbiter";
    };

    struct Path {
        std::string label;
        escrow::Disposition disposition;
        const crypto::KeyPair* first;
        const crypto::KeyPair* second;
    };
    const std::vector<Path> paths = {
        {"goods_received", escrow::Disposition::ToSeller, &buyer, &seller},
        {"refund_agreed", escrow::Disposition::ToBuyer, &seller, &buyer},
        {"dispute_for_seller", escrow::Disposition::ToSeller, &seller, &arbiter},
    };

    Json out = Json::array();
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const auto& p = paths[i];
        escrow::EscrowBook book(crypto::keygen_from_text("escrow-demo/publisher"));
        book.credit(buyer.public_key, 100);
        const auto address = book.open(buyer.public_key, seller.public_key, arbiter.public_key, 100, 5, i).address;
        for (const auto* signer : {p.first, p.second})
            (void)book.sign(address, signer->public_key, p.disposition,
                            escrow::sign_disposition_message(*signer, address, p.disposition));
        const auto& c = book.at(address);
        Json payouts = Json::array();
        for (const auto& po : c.payouts) payouts.push_back({{"to", name_of(po.to)}, {"amount", po.amount}});
        Json balances = Json::object();
        for (const auto* k : {&buyer, &seller, &arbiter}) balances[name_of(k->public_key)] = book.balance(k->public_key);
        out.push_back({{"path", p.label},
                       {"address", address.hex()},
                       {"state", escrow::to_string(c.state)},
                       {"payouts", payouts},
                       {"balances", balances},
                       {"transactions", book.transactions().emitted()}});
    }
    emit(Json{{"paths", out}}, report_flag, "escrow_demo.json");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ledgerstack: permissioned ledgers for treasury, banking, settlement and escrow"};
    app.require_subcommand(1);
    std::string report_flag;

    auto* chain_cmd = app.add_subcommand("chain", "Create, verify, export and import chain files");
    chain_cmd->require_subcommand(1);
    ChainInit init;
    auto* init_cmd = chain_cmd->add_subcommand("init", "Write a demo chain and its config sidecar");
    init_cmd->add_option("out", init.out, "Output chain file (JSON lines)")->required();
    init_cmd->add_option("--blocks", init.blocks, "Number of blocks")->capture_default_str();
    init_cmd->add_option("--mode", init.mode, "quorum or pow")->capture_default_str();
    init_cmd->add_option("--seed-text", init.seed_text, "Seed text for validator and author keys")->capture_default_str();
    init_cmd->add_option("--validators", init.validators, "Validator count (quorum mode)")->capture_default_str();
    init_cmd->add_option("--quorum", init.quorum, "Signatures required per block")->capture_default_str();
    init_cmd->add_option("--bits", init.bits, "Leading zero bits (pow mode)")->capture_default_str();
    init_cmd->add_option("--txs", init.txs_per_block, "Transactions per block")->capture_default_str();

    std::string chain_file, config_path;
    auto* verify_cmd = chain_cmd->add_subcommand("verify", "Verify a chain file");
    verify_cmd->add_option("file", chain_file)->required();
    verify_cmd->add_option("--config", config_path, "Chain config (default <file>.config.json)");
    auto* import_cmd = chain_cmd->add_subcommand("import", "Import a chain file and list its block ids");
    import_cmd->add_option("file", chain_file)->required();
    import_cmd->add_option("--config", config_path, "Chain config (default <file>.config.json)");

    std::string export_scenario, export_out, export_name = "main";
    auto* export_cmd = chain_cmd->add_subcommand("export", "Run a scenario and export one of its chains");
    export_cmd->add_option("scenario", export_scenario)->required();
    export_cmd->add_option("out", export_out)->required();
    export_cmd->add_option("--chain", export_name, "Chain name, or 'tsa' for the treasury main chain")
        ->capture_default_str();

    std::string scenario_file;
    auto* scenario_cmd = app.add_subcommand("scenario", "Scenario files");
    scenario_cmd->require_subcommand(1);
    auto* run_cmd = scenario_cmd->add_subcommand("run", "Run a JSON-lines scenario");
    run_cmd->add_option("file", scenario_file)->required();
    run_cmd->add_option("--report", report_flag, "Report directory");

    auto* contracts_cmd = app.add_subcommand("contracts", "Contract catalog");
    contracts_cmd->require_subcommand(1);
    auto* list_cmd = contracts_cmd->add_subcommand("list", "List deployable contract codes");

    std::string tsa_file;
    auto* tsa_cmd = app.add_subcommand("tsa", "Treasury single account");
    tsa_cmd->require_subcommand(1);
    auto* cycle_cmd = tsa_cmd->add_subcommand("day-cycle", "Run a treasury scenario and report its days");
    cycle_cmd->add_option("file", tsa_file)->required();
    cycle_cmd->add_option("--report", report_flag, "Report directory");

    std::string trades_file, mode = "bilateral", netting = "multilateral", seed_text = "ledgerstack-settlement";
    std::int64_t lag = 2;
    auto* settle_cmd = app.add_subcommand("settle", "Securities settlement cycle");
    settle_cmd->require_subcommand(1);
    auto* settle_run_cmd = settle_cmd->add_subcommand("run", "Run the exchange, clearing and settlement chains");
    settle_run_cmd->add_option("trades", trades_file, "CSV: id,buyer,seller,asset,qty,price,day")->required();
    settle_run_cmd->add_option("--lag", lag, "Settlement lag in days")->capture_default_str();
    settle_run_cmd->add_option("--mode", mode, "bilateral, ccp or consortium")->capture_default_str();
    settle_run_cmd->add_option("--netting", netting, "Consortium netting: multilateral or bilateral")
        ->capture_default_str();
    settle_run_cmd->add_option("--seed-text", seed_text, "Seed text for chain keys")->capture_default_str();
    settle_run_cmd->add_option("--report", report_flag, "Report directory");

    auto* escrow_cmd = app.add_subcommand("escrow", "Multisignature escrow");
    escrow_cmd->require_subcommand(1);
    auto* demo_cmd = escrow_cmd->add_subcommand("demo", "Run the three resolution paths");
    demo_cmd->add_option("--report", report_flag, "Report directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*init_cmd) return chain_init(init);
        if (*verify_cmd) return chain_check(chain_file, config_path, false);
        if (*import_cmd) return chain_check(chain_file, config_path, true);
        if (*export_cmd) return chain_export(export_scenario, export_out, export_name);
        if (*run_cmd) return scenario_run(scenario_file, report_flag);
        if (*list_cmd) {
            std::cout << scenario::report_text(contracts::catalog_json());
            return 0;
        }
        if (*cycle_cmd) return tsa_day_cycle(tsa_file, report_flag);
        if (*settle_run_cmd) return settle_run(trades_file, lag, mode, netting, seed_text, report_flag);
        if (*demo_cmd) return escrow_demo(report_flag);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
