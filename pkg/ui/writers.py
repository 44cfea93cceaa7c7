"""
CSV artifact writers.

Every artifact starts with the effective configuration as ``# key=value``
comment lines, followed by a mandatory header row.  Floats use Python's
shortest round-trip repr, so a re-run with the same (config, seed) writes
identical bytes and a ledger CSV reloads without loss.
"""

import csv
import logging
import os

from core.accountant import LEDGER_HEADER, LedgerRow, ledger_from_rows
from core.errors import ConfigError

logger = logging.getLogger(__name__)


def format_number(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "item"):  # numpy scalar
        return format_number(value.item())
    return str(value)


def write_csv(path, header, rows, provenance_lines=()) -> str:
    """Write ``rows`` under ``header`` with leading comment lines."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        for line in provenance_lines:
            f.write(line if line.startswith("#") else f"# {line}")
            f.write("\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        count = 0
        for row in rows:
            w.writerow([format_number(v) for v in row])
            count += 1
    logger.info("wrote %s (%d rows)", path, count)
    return path


def _data_lines(f):
    for line in f:
        if line.strip() and not line.startswith("#"):
            yield line


def read_csv(path):
    """(header, rows) with comment lines skipped; values stay strings."""
    try:
        with open(path, "r", newline="", encoding="utf-8") as f:
            reader = csv.reader(_data_lines(f))
            header = next(reader, None)
            rows = list(reader)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    if header is None:
        raise ConfigError(f"{path} has no header row")
    return tuple(header), rows


# ── Ledger ────────────────────────────────────────────────────────

def write_ledger_csv(path, ledger_rows, baseline=None, provenance_lines=()):
    """Ledger rows, optionally with the baseline-composition DP column."""
    header = LEDGER_HEADER
    rows = [(r.t, r.gamma, r.gamma_sq_sum, r.phi, r.Gamma, r.eps_rdp_alpha2, r.eps_dp)
            for r in ledger_rows]
    if baseline is not None:
        header = header + ("eps_dp_baseline",)
        rows = [row + (b,) for row, b in zip(rows, baseline)]
    return write_csv(path, header, rows, provenance_lines)


def read_ledger_rows(path) -> list[LedgerRow]:
    header, rows = read_csv(path)
    if header[:len(LEDGER_HEADER)] != LEDGER_HEADER:
        raise ConfigError(f"{path}: expected ledger columns {LEDGER_HEADER}, got {header}")
    out = []
    for row in rows:
        t, *values = row[:len(LEDGER_HEADER)]
        out.append(LedgerRow(int(t), *(float(v) for v in values)))
    out.sort(key=lambda r: r.t)
    return out


def read_ledger_csv(path, params, phi_reference: str = "last"):
    """Rebuild a PrivacyLedger from a ledger CSV for offline accounting."""
    return ledger_from_rows(params, read_ledger_rows(path), phi_reference)
