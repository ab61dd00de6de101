"""Python access to the ledgerstack core: hashing, scenarios, integrity
checks, IFRS 9 helpers, netting and the settlement cycle."""

from __future__ import annotations

import json
from os import PathLike
from typing import Any, Iterable, Mapping

from . import _core
from ._core import LedgerError, biba_allows, classify_ifrs9, ecl_provision, merkle_root

__all__ = [
    "LedgerError",
    "biba_allows",
    "classify_ifrs9",
    "contract_catalog",
    "ecl_provision",
    "merkle_root",
    "net_positions",
    "report_text",
    "run_cycle",
    "run_scenario",
    "sha256d",
]


def sha256d(data: bytes | str) -> str:
    """Double SHA-256 as lowercase hex."""
    if isinstance(data, str):
        data = data.encode()
    return _core.sha256d(data)


def run_scenario(source: str | PathLike[str], *, text: bool = False) -> dict[str, Any]:
    """Run a JSON-lines scenario from a path, or from a string with text=True.

    Returns {"ok": bool, "report": {...}} plus "error" when the run stopped.
    """
    raw = _core.run_scenario_text(str(source)) if text else _core.run_scenario_file(str(source))
    return json.loads(raw)


def report_text(report: Mapping[str, Any]) -> str:
    """The canonical byte format the CLI writes for a report."""
    return _core.report_text(json.dumps(report))


def _trades(trades: Iterable[Mapping[str, Any]]) -> str:
    return json.dumps([dict(t) for t in trades])


def net_positions(trades: Iterable[Mapping[str, Any]]) -> list[dict[str, Any]]:
    """Multilateral net position per (member, asset)."""
    return json.loads(_core.net_positions(_trades(trades)))


def run_cycle(
    trades: Iterable[Mapping[str, Any]],
    *,
    lag: int = 0,
    mode: str = "bilateral",
    netting: str = "multilateral",
    seed_text: str = "ledgerstack-settlement",
) -> dict[str, Any]:
    """Run the exchange, clearing and settlement chains over `trades`."""
    return json.loads(_core.run_cycle(_trades(trades), lag, mode, netting, seed_text))


def contract_catalog() -> list[dict[str, Any]]:
    return json.loads(_core.contract_catalog())
