// Python bindings. Structured results cross the boundary as JSON text; the
// package's __init__ decodes them.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "ledgerstack/bank_ledger.hpp"
#include "ledgerstack/contracts.hpp"
#include "ledgerstack/crypto.hpp"
#include "ledgerstack/error.hpp"
#include "ledgerstack/integrity.hpp"
#include "ledgerstack/scenario.hpp"
#include "ledgerstack/settlement.hpp"

namespace py = pybind11;
using namespace ledgerstack;

namespace {

std::string run_result_json(const scenario::RunResult& rr) {
    Json j{{"ok", rr.ok}, {"report", rr.report}};
    if (!rr.ok)
        j["error"] = Json{{"line", rr.failed_line}, {"op", rr.failed_op}, {"name", rr.error_name}, {"message", rr.message}};
    return j.dump();
}

std::vector<settlement::Trade> trades_from(const std::string& trades_json) {
    std::vector<settlement::Trade> out;
    for (const auto& t : Json::parse(trades_json)) out.push_back(settlement::Trade::from_json(t));
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "ledgerstack native core";

    static py::exception<Error> ledger_error(m, "LedgerError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(ledger_error.ptr())(e.what());
            exc.attr("name") = std::string(e.name());
            exc.attr("detail") = e.detail();
            PyErr_SetObject(ledger_error.ptr(), exc.ptr());
        }
    });

    m.def("sha256d", [](py::bytes data) {
        const std::string s = data;
        return crypto::sha256d(as_bytes(s)).hex();
    });
    m.def("merkle_root", [](const std::vector<std::string>& leaves_hex) {
        std::vector<crypto::Hash32> leaves;
        for (const auto& h : leaves_hex) leaves.push_back(crypto::Hash32::from_hex(h));
        return crypto::merkle_root(leaves).hex();
    });

    m.def("run_scenario_text", [](const std::string& text) {
        std::istringstream in(text);
        return run_result_json(scenario::run_scenario(in));
    });
    m.def("run_scenario_file", [](const std::string& path) { return run_result_json(scenario::run_scenario_file(path)); });
    m.def("report_text", [](const std::string& report_json) { return scenario::report_text(Json::parse(report_json)); });

    m.def("biba_allows", [](unsigned subject, unsigned object, const std::string& action) {
        return integrity::biba_check(subject, object, integrity::biba_action_from_string(action)) ==
               integrity::Decision::Allow;
    });

    m.def("classify_ifrs9", [](bool sppi_pass, const std::string& model) {
        return std::string(bank::to_string(bank::classify_ifrs9(sppi_pass, bank::business_model_from_string(model))));
    });
    m.def("ecl_provision", &bank::ecl_provision, py::arg("exposure"), py::arg("pd_12m"), py::arg("pd_lifetime"),
          py::arg("lgd"), py::arg("stage"));

    m.def("net_positions", [](const std::string& trades_json) {
        Json out = Json::array();
        for (const auto& p : settlement::net_positions(trades_from(trades_json)))
            out.push_back({{"member", p.member}, {"asset", p.asset}, {"net_quantity", p.net_quantity}, {"net_cash", p.net_cash}});
        return out.dump();
    });
    m.def("run_cycle",
          [](const std::string& trades_json, std::int64_t lag, const std::string& mode, const std::string& netting,
             const std::string& seed_text) {
              settlement::CycleConfig cfg;
              cfg.lag_days = lag;
              cfg.mode = settlement::clearing_mode_from_string(mode);
              cfg.consortium_netting = settlement::netting_mode_from_string(netting);
              return settlement::run_cycle(trades_from(trades_json), cfg, settlement::derive_cycle_keys(seed_text))
                  .to_json()
                  .dump();
          });

    m.def("contract_catalog", [] { return contracts::catalog_json().dump(); });
}
