"""Batch command line front end.

Subcommands mirror the pipeline stages: simulate, construct, test,
estimate, reliability, and pipeline (all of them in sequence). Input is
either a CSV file with a header row, a named preset scenario, or a graph
JSON file; output is a single JSON report with fixed field names. Errors
map to stable codes and exit statuses (2 config, 3 numeric, 4
identification).
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .bootstrap import reliability
from .dag import BlockGraph
from .dgp import PRESETS, simulate
from .errors import ConfigError, IvGraphError, ParseError, RoleError
from .iv import (
    WEAK_TOL,
    construct_instruments,
    iv_estimate,
    nearest_valid,
    validity_test,
)
from .regress import RANK_TOL, ROLES, Block, Dataset, center, ols

__all__ = ["RunConfig", "ingest", "write_csv", "load_graph", "run", "main"]

COMMANDS = ("simulate", "construct", "test", "estimate", "reliability", "pipeline")


@dataclass
class RunConfig:
    """Everything one invocation needs; a pure function of the argv."""

    command: str
    input: str | None = None
    preset: str | None = None
    graph: str | None = None
    roles: dict[str, str] = field(default_factory=dict)
    instrument_cols: list[str] | None = None
    n: int = 10_000
    seed: int = 0
    alpha: float = 0.05
    replicates: int = 1000
    k: int | None = None
    out: str | None = None
    data_out: str | None = None
    instruments_out: str | None = None
    weak_tol: float = WEAK_TOL
    rank_tol: float = RANK_TOL

    def validate(self):
        sources = [s for s in (self.input, self.preset, self.graph) if s is not None]
        if len(sources) != 1:
            raise ConfigError("exactly one of --input, --preset, --graph is required")
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        if self.input is None and self.n < 2:
            raise ConfigError(f"need --samples >= 2, got {self.n}")
        if self.seed < 0:
            raise ConfigError("--seed must be non-negative")
        for name, value in (("alpha", self.alpha), ("weak-tol", self.weak_tol), ("rank-tol", self.rank_tol)):
            if not value > 0:
                raise ConfigError(f"--{name} must be positive, got {value}")
        if not self.alpha < 1:
            raise ConfigError(f"--alpha must be below 1, got {self.alpha}")
        if self.command == "simulate" and self.data_out is None:
            raise ConfigError("simulate requires --data-out for the generated CSV")


def _parse_roles(spec: str) -> dict[str, str]:
    roles: dict[str, str] = {}
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ConfigError(f"role assignment {item!r} must look like column=role")
        column, role = (part.strip() for part in item.split("=", 1))
        if role not in ROLES:
            raise ConfigError(f"unknown role {role!r} for column {column!r}; choose from {ROLES}")
        if column in roles:
            raise ConfigError(f"column {column!r} assigned a role twice")
        roles[column] = role
    return roles


def ingest(path: str, roles: dict[str, str] | None = None) -> Dataset:
    """Read a comma-delimited file with a header row into a Dataset.

    `roles` maps column names to w/x/y/z/latent; the columns of each role
    must be contiguous and become one block named after the role. When
    omitted, columns literally named w, x, y or z take that role. Cells
    must parse as finite decimal numbers; constant columns are rejected.
    """
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, "", "file is empty") from None
        header = [name.strip() for name in header]
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(line_no, "", f"expected {len(header)} cells, found {len(row)}")
            parsed = []
            for name, cell in zip(header, row):
                try:
                    value = float(cell)
                except ValueError:
                    raise ParseError(line_no, name, f"cell {cell!r} is not a number") from None
                if not np.isfinite(value):
                    raise ParseError(line_no, name, f"cell {cell!r} is not finite")
                parsed.append(value)
            rows.append(parsed)
    if len(rows) < 2:
        raise ParseError(len(rows) + 1, "", "need at least 2 data rows")
    values = np.array(rows, dtype=np.float64)

    spreads = values.max(axis=0) - values.min(axis=0)
    for j, name in enumerate(header):
        if spreads[j] == 0.0:
            raise ConfigError(f"column {name!r} has zero variance")

    if roles is None:
        roles = {name: name for name in header if name in ("w", "x", "y", "z")}
    position = {name: j for j, name in enumerate(header)}
    for column in roles:
        if column not in position:
            raise RoleError(f"role map names unknown column {column!r}")

    blocks: dict[str, Block] = {}
    for role in ROLES:
        cols = sorted(position[c] for c in roles if roles[c] == role)
        if not cols:
            continue
        if cols != list(range(cols[0], cols[-1] + 1)):
            names = [header[j] for j in cols]
            raise RoleError(f"columns {names} with role {role!r} must be contiguous in the file")
        blocks[role] = Block(cols[0], cols[-1] + 1, role)
    return Dataset(columns=tuple(header), values=values, blocks=blocks, centered=False)


def write_csv(data: Dataset, path: str) -> None:
    """Write the dataset; values round-trip bit-exactly through ingest."""
    with open(path, "w", newline="") as handle:
        handle.write(",".join(data.columns) + "\n")
        for row in data.values:
            handle.write(",".join(repr(float(v)) for v in row) + "\n")


def load_graph(path: str) -> tuple[BlockGraph, dict[str, str]]:
    """Read a graph specification from JSON.

    Schema: {"blocks": [{"name", "width", "noise_scale", "role"?}, ...],
    "edges": [{"parent", "child", "coefficients"}, ...]}. Coefficient
    matrices are nested lists shaped (parent width, child width); role
    defaults to the block name when that is a role letter, else latent.
    """
    with open(path) as handle:
        spec = json.load(handle)
    try:
        blocks = tuple((b["name"], int(b.get("width", 1))) for b in spec["blocks"])
        scales = {b["name"]: b.get("noise_scale", 1.0) for b in spec["blocks"]}
        edges = tuple(
            (e["parent"], e["child"], np.asarray(e["coefficients"], dtype=np.float64))
            for e in spec.get("edges", [])
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed graph file {path!r}: {exc}") from exc
    try:
        graph = BlockGraph(blocks=blocks, edges=edges, noise_scales=scales)
    except ValueError as exc:
        raise ConfigError(f"invalid graph in {path!r}: {exc}") from exc
    roles = {}
    for b in spec["blocks"]:
        name = b["name"]
        role = b.get("role", name if name in ("w", "x", "y", "z") else "latent")
        if role not in ROLES:
            raise ConfigError(f"block {name!r} has unknown role {role!r}")
        roles[name] = role
    return graph, roles


def _load_dataset(cfg: RunConfig) -> tuple[Dataset, dict]:
    if cfg.input is not None:
        data = ingest(cfg.input, cfg.roles or None)
        source = {"input": cfg.input}
    elif cfg.preset is not None:
        scenario = PRESETS[cfg.preset]()
        data = simulate(scenario.graph, cfg.n, cfg.seed, roles=scenario.roles)
        source = {"preset": cfg.preset}
    else:
        graph, roles = load_graph(cfg.graph)
        data = simulate(graph, cfg.n, cfg.seed, roles=roles)
        source = {"graph": cfg.graph}
    return data, source


def _instrument_selection(data: Dataset, cfg: RunConfig) -> tuple[np.ndarray, list[str]]:
    if cfg.instrument_cols:
        position = {name: j for j, name in enumerate(data.columns)}
        missing = [c for c in cfg.instrument_cols if c not in position]
        if missing:
            raise RoleError(f"instrument columns not in data: {missing}")
        cols = [position[c] for c in cfg.instrument_cols]
        return data.values[:, cols], list(cfg.instrument_cols)
    for role in ("z", "w"):
        if data.has_role(role):
            name = data.role_block(role)
            return data.block_values(name), list(data.block_columns(name))
    raise RoleError("no instrument source: give --instrument-cols or tag a z or w block")


def _listify(array) -> list:
    return np.asarray(array, dtype=np.float64).tolist()


def _verdict_fields(verdict, columns: list[str]) -> tuple[list[dict], str]:
    entries = []
    for i, column in enumerate(columns):
        entries.append(
            {
                "column": column,
                "statistic": _listify(verdict.statistic[i]),
                "se": _listify(verdict.standard_error[i]),
                "p": _listify(verdict.p_value[i]),
            }
        )
    return entries, verdict.decision


def _least_invalid_order(verdict, columns: list[str]) -> list[str]:
    # Ranking by studentized statistic magnitude; ties keep column order.
    score = np.abs(verdict.statistic / np.where(verdict.standard_error > 0, verdict.standard_error, 1.0))
    score = score.max(axis=1)
    return [columns[i] for i in np.argsort(score, kind="stable")]


def _normality_diagnostics(data: Dataset, columns: list[str]) -> list[dict]:
    # Skewness and excess kurtosis per column; reported only, never tested
    # against, since orthogonality matches independence only under
    # normality.
    position = {name: j for j, name in enumerate(data.columns)}
    out = []
    for column in columns:
        v = data.values[:, position[column]]
        centered = v - v.mean()
        m2 = float(np.mean(centered**2))
        if m2 == 0.0:
            out.append({"column": column, "skewness": 0.0, "excess_kurtosis": 0.0})
            continue
        skew = float(np.mean(centered**3) / m2**1.5)
        kurt = float(np.mean(centered**4) / m2**2 - 3.0)
        out.append({"column": column, "skewness": skew, "excess_kurtosis": kurt})
    return out


def run(config: RunConfig) -> dict:
    """Execute one subcommand and return the report dictionary."""
    config.validate()
    report: dict = {}
    meta: dict = {
        "command": config.command,
        "seed": config.seed,
        "alpha": config.alpha,
        "M": config.replicates,
        "version": __version__,
        "weak_tol": config.weak_tol,
        "rank_tol": config.rank_tol,
    }

    raw, source = _load_dataset(config)
    meta.update(source)
    meta["n"] = raw.n
    if config.command == "simulate":
        write_csv(raw, config.data_out)
        report["data"] = {"path": config.data_out, "columns": list(raw.columns), "n": raw.n}
        report["meta"] = meta
        return report

    data = center(raw)
    if config.data_out is not None:
        write_csv(raw, config.data_out)
        report["data"] = {"path": config.data_out, "columns": list(raw.columns), "n": raw.n}

    if config.command == "construct":
        count = config.k if config.k is not None else data.block_width(data.role_block("x"))
        built = construct_instruments(data, count, rank_tol=config.rank_tol)
        meta["k"] = count
        report["construction"] = {
            "count": count,
            "relevance": _listify(built.relevance),
            "validity_gap": built.validity_gap,
            "weights": _listify(built.weights),
            "candidate_columns": list(data.block_columns(data.role_block("w")))
            + [f"eta_{c}" for c in data.block_columns(data.role_block("x"))],
        }
        if config.instruments_out is not None:
            names = [f"iv_{i + 1}" for i in range(count)]
            inst = Dataset(
                columns=tuple(names),
                values=built.instruments,
                blocks={"z": Block(0, count, "z")},
                centered=False,
            )
            write_csv(inst, config.instruments_out)
            report["construction"]["path"] = config.instruments_out
        report["meta"] = meta
        return report

    z, z_columns = _instrument_selection(data, config)
    meta["instrument_columns"] = z_columns

    observed = z_columns + list(data.block_columns(data.role_block("x"))) + list(
        data.block_columns(data.role_block("y"))
    )

    if config.command == "test":
        verdict = validity_test(data, z, alpha=config.alpha, replicates=config.replicates, seed=config.seed)
        entries, decision = _verdict_fields(verdict, z_columns)
        report["validity"] = entries
        report["validity_decision"] = decision
        report["least_invalid_order"] = _least_invalid_order(verdict, z_columns)
        report["normality"] = _normality_diagnostics(data, observed)
        report["meta"] = meta
        return report

    if config.command == "estimate":
        estimate = iv_estimate(data, z, weak_tol=config.weak_tol)
        fit = ols(data, [data.role_block("x")], [data.role_block("y")], rank_tol=config.rank_tol)
        report["beta_iv"] = _listify(estimate.beta)
        report["beta_ols"] = _listify(fit.coefficients)
        report["iv_method"] = estimate.method
        report["first_stage_rank"] = estimate.first_stage_rank
        report["normality"] = _normality_diagnostics(data, observed)
        report["meta"] = meta
        return report

    if config.command == "reliability":
        repaired, deviations = nearest_valid(data, z)
        result = reliability(
            data, z, repaired, replicates=config.replicates, seed=config.seed, weak_tol=config.weak_tol
        )
        report["reliability"] = {
            "variance": _listify(result.variance),
            "bias": _listify(result.bias),
            "bias_se": _listify(result.bias_se),
            "mse_like": _listify(result.mse_like),
            "failed_replicates": result.failed_replicates,
        }
        report["beta_iv"] = _listify(result.beta_iv)
        report["beta_iv_repaired"] = _listify(result.beta_iv_repaired)
        report["repair"] = {"deviations": _listify(deviations)}
        report["meta"] = meta
        return report

    # pipeline: estimate, repair, test repaired and raw, construct, score
    estimate = iv_estimate(data, z, weak_tol=config.weak_tol)
    fit = ols(data, [data.role_block("x")], [data.role_block("y")], rank_tol=config.rank_tol)
    report["beta_iv"] = _listify(estimate.beta)
    report["beta_ols"] = _listify(fit.coefficients)
    report["iv_method"] = estimate.method
    report["first_stage_rank"] = estimate.first_stage_rank

    repaired, deviations = nearest_valid(data, z)
    report["repair"] = {"deviations": _listify(deviations)}

    # The pipeline ships the repaired instruments; their verdict is the
    # headline validity. The raw candidates' verdict is kept as a
    # diagnostic: it also reacts to confounding of x and y, not only to
    # failures of the exclusion restriction.
    shipped = validity_test(data, repaired, alpha=config.alpha, replicates=config.replicates, seed=config.seed)
    entries, decision = _verdict_fields(shipped, [f"{c}_repaired" for c in z_columns])
    report["validity"] = entries
    report["validity_decision"] = decision
    raw_verdict = validity_test(data, z, alpha=config.alpha, replicates=config.replicates, seed=config.seed)
    entries, decision = _verdict_fields(raw_verdict, z_columns)
    report["validity_raw"] = entries
    report["validity_raw_decision"] = decision
    report["least_invalid_order"] = _least_invalid_order(raw_verdict, z_columns)
    report["normality"] = _normality_diagnostics(data, observed)

    try:
        count = config.k if config.k is not None else data.block_width(data.role_block("x"))
        built = construct_instruments(data, count, rank_tol=config.rank_tol)
        report["construction"] = {
            "count": count,
            "relevance": _listify(built.relevance),
            "validity_gap": built.validity_gap,
        }
    except IvGraphError as exc:
        report["construction"] = {"skipped": str(exc)}

    result = reliability(
        data, z, repaired, replicates=config.replicates, seed=config.seed, weak_tol=config.weak_tol
    )
    report["reliability"] = {
        "variance": _listify(result.variance),
        "bias": _listify(result.bias),
        "bias_se": _listify(result.bias_se),
        "mse_like": _listify(result.mse_like),
        "failed_replicates": result.failed_replicates,
    }
    report["beta_iv_repaired"] = _listify(result.beta_iv_repaired)
    report["meta"] = meta
    return report


def serialize_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivgraph",
        description="Construct, test, and score instrumental variables over block causal graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="|".join(COMMANDS))
    for name in COMMANDS:
        cmd = sub.add_parser(name, help=f"run the {name} stage")
        cmd.add_argument("--input", help="CSV file with a header row")
        cmd.add_argument("--preset", help=f"named scenario: {', '.join(sorted(PRESETS))}")
        cmd.add_argument("--graph", help="graph specification JSON file")
        cmd.add_argument("--roles", default="", help="column roles, e.g. w=w,x=x,y=y")
        cmd.add_argument("--instrument-cols", default="", help="comma-separated instrument columns")
        cmd.add_argument("-n", "--samples", type=int, default=10_000, help="rows to simulate")
        cmd.add_argument("--seed", type=int, default=0)
        cmd.add_argument("--alpha", type=float, default=0.05)
        cmd.add_argument("--replicates", type=int, default=1000)
        cmd.add_argument("--k", type=int, default=None, help="number of instruments to construct")
        cmd.add_argument("--out", help="report path (default: stdout only)")
        cmd.add_argument("--data-out", help="write the working dataset as CSV")
        cmd.add_argument("--instruments-out", help="write constructed instruments as CSV")
        cmd.add_argument("--weak-tol", type=float, default=WEAK_TOL)
        cmd.add_argument("--rank-tol", type=float, default=RANK_TOL)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    instrument_cols = [c.strip() for c in args.instrument_cols.split(",") if c.strip()]
    return RunConfig(
        command=args.command,
        input=args.input,
        preset=args.preset,
        graph=args.graph,
        roles=_parse_roles(args.roles),
        instrument_cols=instrument_cols or None,
        n=args.samples,
        seed=args.seed,
        alpha=args.alpha,
        replicates=args.replicates,
        k=args.k,
        out=args.out,
        data_out=args.data_out,
        instruments_out=args.instruments_out,
        weak_tol=args.weak_tol,
        rank_tol=args.rank_tol,
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        report = run(config)
    except IvGraphError as exc:
        record = {"error": {"code": exc.code, "message": str(exc)}}
        print(json.dumps(record, sort_keys=True))
        return exc.exit_code
    except ValueError as exc:
        record = {"error": {"code": "INVALID_ARGUMENT", "message": str(exc)}}
        print(json.dumps(record, sort_keys=True))
        return 2
    except OSError as exc:
        record = {"error": {"code": "IO", "message": str(exc)}}
        print(json.dumps(record, sort_keys=True))
        return 2
    except np.linalg.LinAlgError as exc:
        record = {"error": {"code": "LINALG", "message": str(exc)}}
        print(json.dumps(record, sort_keys=True))
        return 3

    report["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    text = serialize_report(report)
    if config.out is not None:
        with open(config.out, "w") as handle:
            handle.write(text)
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
