"""CSV and JSON report writers.

CSV schemas are fixed and versioned in the file headers; numbers are
printed with 17 significant digits so a re-run with the same config and
seed reproduces every file byte-for-byte.  Wall-clock time lives only in
the JSON report.
"""

import json
import os

__all__ = [
    "format_number",
    "write_csv",
    "write_report",
    "CONVERGENCE_COLUMNS",
    "MEANS_COLUMNS",
    "EQUILIBRIUM_COLUMNS",
    "FPE_COLUMNS",
]

CONVERGENCE_COLUMNS = ("scheme", "f", "h", "mean", "stderr", "reference", "error")
MEANS_COLUMNS = ("scheme", "f", "h", "mean", "stderr")
EQUILIBRIUM_COLUMNS = ("x_left", "x_right", "density", "density_se",
                       "Deff", "Deff_se")
FPE_COLUMNS = ("x_center", "rho")


def format_number(v):
    """17 significant digits; enough to round-trip any double."""
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_csv(path, schema_name, columns, rows, notes=()):
    """Write one CSV with a versioned schema header."""
    lines = [f"# metrodiff csv schema: {schema_name} v1"]
    lines += [f"# {note}" for note in notes]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(format_number(v) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_report(path, report):
    """Write the JSON run report."""
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
