"""Batch command line interface.

Every subcommand follows the same workflow: load origins and locations,
build the interaction matrix, attach transport costs, then run one analysis
and write its results plus ``run.log`` to ``--out``.

Exit codes: 0 success, 2 invalid input, 3 I/O or network failure,
4 non-convergence under ``--strict``, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from marketflow import __version__
from marketflow.access import fca2s, hansen
from marketflow.calibrate import FitConfig, ObservedKind, fit_huff
from marketflow.config import load_config
from marketflow.decay import DecayKind, parse_decay
from marketflow.errors import MarketflowError, TravelTimeError, ValidationError
from marketflow.fileio import (
    ColumnSpec,
    Role,
    atomic_write_text,
    export_results,
    fmt,
    load_cost_matrix_csv,
    load_points,
    pair_table_csv,
    read_observed_csv,
)
from marketflow.huff import (
    CDParams,
    HuffParams,
    cd_probabilities,
    clustering_indicator,
    flows,
    inter_location_costs,
    market_areas,
    probabilities,
    utilities,
)
from marketflow.mci import log_centering_transform, mci_fit, mci_predict
from marketflow.model import (
    TRANSPORT_COST_ATTRIBUTE,
    CostSource,
    create_interaction_matrix,
    set_observed,
    set_transport_costs,
)
from marketflow.runlog import RunLog
from marketflow.traveltime import DEFAULT_ENDPOINT, DEFAULT_PROFILE, TravelTimeClient

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3
EXIT_NOT_CONVERGED = 4
EXIT_USAGE = 64

logger = logging.getLogger("marketflow")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.option_defaults: dict[str, object] = {}
        self.required_options: list[str] = []

    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _opt(p: _Parser, *flags, default=None, required=False, **kwargs):
    """Add an option whose default is applied after merging the config file."""
    action = p.add_argument(*flags, default=None, **kwargs)
    p.option_defaults[action.dest] = default
    if required:
        p.required_options.append(action.dest)
    return action


def _add_inputs(p: _Parser) -> None:
    _opt(p, "--config", help="flat key-value config file; flags override it")
    _opt(p, "--origins", required=True, help="customer origins (CSV or GeoJSON)")
    _opt(p, "--locations", required=True, help="supply locations (CSV or GeoJSON)")
    _opt(p, "--out", required=True, help="output directory")
    _opt(p, "--delimiter", default=",", help="CSV delimiter (default ',')")
    _opt(p, "--id-column", default="id")
    _opt(p, "--lat-column", default="lat")
    _opt(p, "--lon-column", default="lon")
    _opt(p, "--demand-column", default="demand", help="origin demand C_i column")
    _opt(p, "--attraction-column", default="attraction", help="location attraction A_j column")
    _opt(p, "--attribute-columns", default="", help="comma-separated location attributes")


def _add_costs(p: _Parser) -> None:
    _opt(p, "--costs", default="haversine", choices=[s.value for s in CostSource],
         help="transport cost source")
    _opt(p, "--cost-matrix", help="long-format cost CSV (origin_id,location_id,cost)")
    _opt(p, "--cost-unit", help="unit tag for --cost-matrix costs")
    _opt(p, "--cost-floor", type=float, default=0.1)
    _add_traveltime(p)


def _add_traveltime(p: _Parser) -> None:
    _opt(p, "--endpoint", default=DEFAULT_ENDPOINT)
    _opt(p, "--profile", default=DEFAULT_PROFILE)
    _opt(p, "--api-key", help="defaults to $MARKETFLOW_ORS_KEY")
    _opt(p, "--cache-dir", help="directory for cached travel-time responses")


def _add_common_tail(p: _Parser) -> None:
    _opt(p, "--format", default="csv", choices=["csv", "geojson"],
         help="format for per-origin/per-location results")
    _opt(p, "--strict", action="store_true", help="exit 4 when a fit does not converge")


def build_parser() -> _Parser:
    parser = _Parser(prog="marketflow", description="Huff/MCI market area analysis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def command(name, help_):
        p = sub.add_parser(name, help=help_)
        _add_inputs(p)
        return p

    p = command("matrix", "build the interaction matrix with transport costs")
    _add_costs(p)
    _add_common_tail(p)

    p = command("huff", "Huff probabilities, flows and market areas")
    _add_costs(p)
    _opt(p, "--gamma", type=float, default=1.0, help="attraction exponent")
    _opt(p, "--decay", required=True, help="e.g. power:2, exponential:0.1, logistic:-5,0.5")
    _add_common_tail(p)

    p = command("cd", "competing destinations model")
    _add_costs(p)
    _opt(p, "--gamma", type=float, default=1.0)
    _opt(p, "--decay", required=True, help="exponential:LAMBDA unless --any-decay")
    _opt(p, "--beta", type=float, required=True, help="clustering exponent")
    _opt(p, "--alpha", type=float, default=1.0)
    _opt(p, "--delta", type=float, default=1.0)
    _opt(p, "--any-decay", action="store_true", help="allow non-exponential decay")
    _add_common_tail(p)

    p = command("mci-fit", "fit MCI coefficients by log-centered least squares")
    _add_costs(p)
    _opt(p, "--observed", required=True, help="observed shares or flows CSV")
    _opt(p, "--attributes", required=True, help="comma-separated; 't' = transport cost")
    _opt(p, "--zero-policy", default="drop", choices=["drop", "add_epsilon"])
    _opt(p, "--epsilon", type=float, default=1e-6)
    _add_common_tail(p)

    p = command("mci-predict", "predict shares from MCI coefficients")
    _add_costs(p)
    _opt(p, "--coefficients", required=True, help="mci_fit.json or 'name=value,...'")
    _add_common_tail(p)

    p = command("fit", "nonlinear calibration of gamma and decay parameters")
    _add_costs(p)
    _opt(p, "--observed", required=True, help="observed shares, flows or totals CSV")
    _opt(p, "--observed-kind", choices=[k.value for k in ObservedKind])
    _opt(p, "--decay", required=True, help="decay family, optionally with start values")
    _opt(p, "--fix-gamma", action="store_true", help="hold gamma at --gamma")
    _opt(p, "--fit-gamma", action="store_true", help="fit gamma even for totals")
    _opt(p, "--gamma", type=float, default=1.0, help="start (or fixed) gamma")
    _opt(p, "--tolerance", type=float, default=1e-8)
    _opt(p, "--max-iterations", type=int, default=2000)
    _opt(p, "--restarts", type=int, default=3)
    _opt(p, "--seed", type=int, default=0)
    _add_common_tail(p)

    p = command("hansen", "Hansen accessibility (opportunities = attraction column)")
    _add_costs(p)
    _opt(p, "--decay", required=True)
    _add_common_tail(p)

    p = command("2sfca", "two-step floating catchment area accessibility")
    _add_costs(p)
    _opt(p, "--d0", type=float, required=True, help="catchment threshold in cost units")
    _add_common_tail(p)

    p = command("traveltime", "fetch the travel-time matrix only")
    _add_traveltime(p)
    _opt(p, "--format", default="csv", choices=["csv"])
    _opt(p, "--strict", action="store_true")

    parser.subparsers = sub.choices
    return parser


def _convert(action: argparse.Action, raw):
    if action.nargs == 0:  # store_true
        text = str(raw).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ValidationError(f"config key {action.dest!r}: expected a boolean, got {raw!r}")
    try:
        value = action.type(raw) if action.type else str(raw)
    except (TypeError, ValueError):
        raise ValidationError(f"config key {action.dest!r}: invalid value {raw!r}") from None
    if action.choices is not None and value not in action.choices:
        raise ValidationError(f"config key {action.dest!r}: {value!r} not in {list(action.choices)}")
    return value


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    ns = parser.parse_args(argv)
    sub: _Parser = parser.subparsers[ns.command]
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    if ns.config:
        for key, raw in load_config(ns.config).items():
            if key not in actions:
                raise ValidationError(f"unknown config key {key!r} for {ns.command}")
            if getattr(ns, key) is None:
                setattr(ns, key, _convert(actions[key], raw))
    missing = [
        actions[d].option_strings[0] for d in sub.required_options if getattr(ns, d) is None
    ]
    if missing:
        sub.error(f"the following arguments are required: {', '.join(missing)}")
    for dest, default in sub.option_defaults.items():
        if getattr(ns, dest) is None:
            setattr(ns, dest, default)
    return ns


# ---------------------------------------------------------------- pipeline

def _split(text) -> list[str]:
    return [t.strip() for t in str(text or "").split(",") if t.strip()]


def _column_spec(ns, extra_attributes=()) -> ColumnSpec:
    attrs = list(dict.fromkeys(_split(ns.attribute_columns) + list(extra_attributes)))
    return ColumnSpec(
        id_column=ns.id_column,
        lat_column=ns.lat_column,
        lon_column=ns.lon_column,
        demand_column=ns.demand_column or None,
        attraction_column=ns.attraction_column or None,
        attribute_columns=tuple(attrs),
    )


def _client(ns) -> TravelTimeClient:
    return TravelTimeClient(ns.endpoint, ns.api_key, ns.profile, cache_dir=ns.cache_dir)


def _load(ns, log: RunLog, extra_attributes=()):
    spec = _column_spec(ns, extra_attributes)
    with log.stage("load_origins", path=ns.origins):
        origins = load_points(ns.origins, spec, Role.ORIGIN, delimiter=ns.delimiter)
    with log.stage("load_locations", path=ns.locations):
        locations = load_points(ns.locations, spec, Role.LOCATION, delimiter=ns.delimiter)
    return origins, locations


def _matrix(ns, log: RunLog, extra_attributes=()):
    origins, locations = _load(ns, log, extra_attributes)
    with log.stage("create_interaction_matrix", origins=len(origins), locations=len(locations)):
        matrix = create_interaction_matrix(origins, locations)
    source = CostSource(ns.costs)
    params = {"source": source.value, "cost_floor": ns.cost_floor}
    with log.stage("transport_costs", **params):
        if source is CostSource.EXTERNAL_MATRIX:
            if not ns.cost_matrix:
                raise ValidationError("--costs external needs --cost-matrix")
            costs = load_cost_matrix_csv(
                ns.cost_matrix, matrix.origin_ids, matrix.location_ids, delimiter=ns.delimiter
            )
            matrix = set_transport_costs(
                matrix, source, costs=costs, unit=ns.cost_unit, cost_floor=ns.cost_floor
            )
        elif source is CostSource.TRAVEL_TIME_CLIENT:
            matrix = set_transport_costs(
                matrix, source, client=_client(ns), cost_floor=ns.cost_floor
            )
        else:
            matrix = set_transport_costs(matrix, source, cost_floor=ns.cost_floor)
    return matrix


def _write(out: Path, name: str, text: str, log: RunLog) -> None:
    with log.stage("export", file=name):
        atomic_write_text(out / name, text)


def _export(out: Path, stem: str, result, ns, log: RunLog, **kwargs) -> None:
    name = f"{stem}.{ns.format}"
    with log.stage("export", file=name):
        export_results(result, ns.format, out / name, **kwargs)


def _write_shares(out, matrix, ns, log) -> None:
    _write(out, "probabilities.csv", pair_table_csv(matrix, "probability"), log)
    with log.stage("flows"):
        matrix = flows(matrix)
    _write(out, "flows.csv", pair_table_csv(matrix, "flow"), log)
    with log.stage("market_areas"):
        areas = market_areas(matrix)
    _export(out, "market_areas", areas, ns, log)


def _cmd_matrix(ns, log, out) -> int:
    matrix = _matrix(ns, log)
    with log.stage("export", file="interaction_matrix.csv"):
        export_results(matrix, "csv", out / "interaction_matrix.csv")
    return EXIT_OK


def _cmd_huff(ns, log, out) -> int:
    params = HuffParams(ns.gamma, parse_decay(ns.decay))
    matrix = _matrix(ns, log)
    with log.stage("utilities", gamma=params.gamma, decay=str(params.decay)):
        matrix = utilities(matrix, params)
    with log.stage("probabilities"):
        matrix = probabilities(matrix)
    _write_shares(out, matrix, ns, log)
    return EXIT_OK


def _cmd_cd(ns, log, out) -> int:
    base = HuffParams(ns.gamma, parse_decay(ns.decay))
    params = CDParams(base, ns.beta, ns.alpha, ns.delta, allow_any_decay=bool(ns.any_decay))
    matrix = _matrix(ns, log)
    with log.stage("clustering_indicator", alpha=params.alpha, delta=params.delta):
        if CostSource(ns.costs) is CostSource.TRAVEL_TIME_CLIENT:
            points = [loc.point for loc in matrix.locations]
            costs = np.array(_client(ns)(points, points))
            off = ~np.eye(len(points), dtype=bool)
            costs[off] = np.maximum(costs[off], ns.cost_floor)
        else:
            costs = inter_location_costs(matrix.locations, ns.cost_floor)
        clustering = clustering_indicator(matrix.locations, costs, params.alpha, params.delta)
    rows = "".join(f"{k},{fmt(v)}\n" for k, v in clustering.items())
    _write(out, "clustering.csv", "location_id,clustering\n" + rows, log)
    with log.stage("cd_probabilities", gamma=base.gamma, decay=str(base.decay), beta=params.beta):
        matrix = cd_probabilities(matrix, params, clustering)
    _write_shares(out, matrix, ns, log)
    return EXIT_OK


def _observed_matrix(ns, log, matrix):
    with log.stage("load_observed", path=ns.observed):
        observed = read_observed_csv(ns.observed, matrix, delimiter=ns.delimiter)
        if observed.kind is ObservedKind.TOTALS:
            raise ValidationError("MCI fitting needs observed shares or flows, not totals")
        if observed.kind is ObservedKind.SHARES:
            return set_observed(matrix, shares=observed.values)
        return set_observed(matrix, flows=observed.values)


def _cmd_mci_fit(ns, log, out) -> int:
    attributes = _split(ns.attributes)
    location_attrs = [a for a in attributes if a not in (TRANSPORT_COST_ATTRIBUTE, "attraction")]
    matrix = _matrix(ns, log, location_attrs)
    matrix = _observed_matrix(ns, log, matrix)
    with log.stage("log_centering_transform", attributes=",".join(attributes),
                   zero_policy=ns.zero_policy):
        design = log_centering_transform(
            matrix, attributes, zero_policy=ns.zero_policy, epsilon=ns.epsilon
        )
    with log.stage("mci_fit", rows=design.n_rows):
        fit = mci_fit(design)
    with log.stage("export", file="mci_fit.json"):
        export_results(fit, "json", out / "mci_fit.json")
    with log.stage("export", file="mci_fit.txt"):
        export_results(fit, "text", out / "mci_fit.txt")
    return EXIT_OK


def _parse_coefficients(text: str) -> dict[str, float]:
    path = Path(text)
    if path.suffix.lower() == ".json" or path.exists():
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            coefs = doc.get("coefficients", doc)
            return {str(k): float(v) for k, v in coefs.items()}
        except (AttributeError, TypeError, ValueError):
            raise ValidationError(f"{path}: expected a JSON object of coefficients") from None
    out = {}
    for item in _split(text):
        name, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"coefficient {item!r} should look like name=value")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise ValidationError(f"coefficient {item!r} has a non-numeric value") from None
    return out


def _cmd_mci_predict(ns, log, out) -> int:
    coefficients = _parse_coefficients(ns.coefficients)
    location_attrs = [a for a in coefficients if a not in (TRANSPORT_COST_ATTRIBUTE, "attraction")]
    matrix = _matrix(ns, log, location_attrs)
    with log.stage("mci_predict", **coefficients):
        matrix = mci_predict(matrix, coefficients)
    _write_shares(out, matrix, ns, log)
    return EXIT_OK


def _cmd_fit(ns, log, out) -> int:
    kind_text, _, start = ns.decay.partition(":")
    kind = DecayKind.parse(kind_text)
    start_values = {}
    if start:
        spec = parse_decay(ns.decay)
        if kind is DecayKind.LOGISTIC:
            start_values = {"a": spec.a, "b": spec.b}
        else:
            start_values = {"lam": spec.lam}
    if ns.fix_gamma and ns.fit_gamma:
        raise ValidationError("--fix-gamma and --fit-gamma are mutually exclusive")
    fit_gamma = False if ns.fix_gamma else (True if ns.fit_gamma else None)
    config = FitConfig(
        gamma=ns.gamma,
        fit_gamma=fit_gamma,
        tolerance=ns.tolerance,
        max_iterations=ns.max_iterations,
        restarts=ns.restarts,
        seed=ns.seed,
        **start_values,
    )
    matrix = _matrix(ns, log)
    with log.stage("load_observed", path=ns.observed):
        observed = read_observed_csv(ns.observed, matrix, ns.observed_kind, delimiter=ns.delimiter)
    with log.stage("fit", observed=observed.kind.value, decay=kind.value,
                   tolerance=config.tolerance, restarts=config.restarts, seed=config.seed):
        result = fit_huff(matrix, observed, kind, config)
    with log.stage("export", file="fit.json"):
        export_results(result, "json", out / "fit.json")
    if ns.strict and not result.converged:
        print("fit did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _cmd_hansen(ns, log, out) -> int:
    decay = parse_decay(ns.decay)
    matrix = _matrix(ns, log)
    with log.stage("hansen", decay=str(decay)):
        result = hansen(matrix, None, decay)
    _export(out, "accessibility", result, ns, log)
    return EXIT_OK


def _cmd_2sfca(ns, log, out) -> int:
    matrix = _matrix(ns, log)
    with log.stage("2sfca", d0=ns.d0):
        result = fca2s(matrix, None, None, ns.d0)
    _export(out, "accessibility", result, ns, log)
    _export(out, "supply_ratios", result, ns, log, level="location")
    return EXIT_OK


def _cmd_traveltime(ns, log, out) -> int:
    origins, locations = _load(ns, log)
    with log.stage("traveltime", endpoint=ns.endpoint, profile=ns.profile):
        minutes = _client(ns)([o.point for o in origins], [loc.point for loc in locations])
    rows = [
        f"{o.id},{loc.id},{fmt(minutes[i, j])}\n"
        for i, o in enumerate(origins)
        for j, loc in enumerate(locations)
    ]
    _write(out, "travel_times.csv", "origin_id,location_id,cost\n" + "".join(rows), log)
    return EXIT_OK


COMMANDS = {
    "matrix": _cmd_matrix,
    "huff": _cmd_huff,
    "cd": _cmd_cd,
    "mci-fit": _cmd_mci_fit,
    "mci-predict": _cmd_mci_predict,
    "fit": _cmd_fit,
    "hansen": _cmd_hansen,
    "2sfca": _cmd_2sfca,
    "traveltime": _cmd_traveltime,
}


def main(argv=None) -> int:
    try:
        ns = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except MarketflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO

    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log = RunLog()
    out = Path(ns.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        return COMMANDS[ns.command](ns, log, out)
    except (TravelTimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except MarketflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    finally:
        try:
            atomic_write_text(out / "run.log", log.to_text())
        except OSError as exc:
            logger.error("could not write run.log: %s", exc)


if __name__ == "__main__":
    sys.exit(main())
