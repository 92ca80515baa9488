"""Command line front end.

Commands:
    sweep           gap table over the scenario's n list, as CSV
    distance        one (dftl, dlwr) pair at a single n, as a one-row CSV
    simulate-micro  final vehicle positions of both runs, as CSV
    simulate-macro  final cell densities of both runs, as CSV
    test K          shortcut for sweep on built-in scenario K

Scenarios come either from a built-in id (--test K) or from a JSON file
(--scenario PATH) with keys: space (interval {a, b} or network {arcs}),
runs {flat, sharp} each carrying v_max and density blocks, t_f, p, n_list,
dx.  Command line overrides (--n, --dx, --p, --t-f) replace the matching
scenario fields before validation.

Exit codes: 0 success, 2 usage or parse error, 3 scenario invariant
violation, 4 numerical failure at run time.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .harness import (
    DEFAULT_COARSEN,
    DensityBlock,
    RunSpec,
    Scenario,
    builtin_test,
    export_results,
    xi_sweep,
    _macro_final,
    _micro_final,
)
from .network import build_network
from .scaling import vehicle_length

EXIT_USAGE = 2
EXIT_INVARIANT = 3
EXIT_NUMERICAL = 4


class ScenarioParseError(Exception):
    """The scenario file could not be read or decoded."""


def _blocks_to_json(blocks) -> list:
    return [
        {"lo": b.lo, "hi": b.hi, "value": b.value, "shift_in_ell_n": b.shift_in_ell_n}
        for b in blocks
    ]


def _run_to_json(run: RunSpec, network: bool) -> dict:
    if network:
        density = [_blocks_to_json(blocks) for blocks in run.densities]
    else:
        density = _blocks_to_json(run.densities[0])
    return {"v_max": run.v_max, "density": density}


def scenario_to_json(scenario: Scenario) -> dict:
    if scenario.is_network:
        space = {
            "network": {
                "arcs": [
                    {"id": a.id, "tail": a.tail, "head": a.head, "length": a.length}
                    for a in scenario.net.arcs
                ]
            }
        }
    else:
        a, b = scenario.interval
        space = {"interval": {"a": a, "b": b}}
    return {
        "name": scenario.name,
        "space": space,
        "runs": {
            "flat": _run_to_json(scenario.flat, scenario.is_network),
            "sharp": _run_to_json(scenario.sharp, scenario.is_network),
        },
        "t_f": scenario.t_f,
        "p": scenario.p,
        "n_list": list(scenario.n_list),
        "dx": scenario.dx,
        "boundary": scenario.boundary,
    }


def save_scenario(scenario: Scenario, destination) -> None:
    text = json.dumps(scenario_to_json(scenario), indent=2) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w") as handle:
            handle.write(text)


def _require(data: dict, key: str, context: str):
    if key not in data:
        raise ScenarioParseError(f"missing key {key!r} in {context}")
    return data[key]


def _blocks_from_json(spec, context: str) -> list:
    if not isinstance(spec, list) or not spec:
        raise ScenarioParseError(f"{context} must be a nonempty list of blocks")
    blocks = []
    for entry in spec:
        if not isinstance(entry, dict):
            raise ScenarioParseError(f"{context} entries must be objects")
        blocks.append(
            DensityBlock(
                _require(entry, "lo", context),
                _require(entry, "hi", context),
                _require(entry, "value", context),
                entry.get("shift_in_ell_n", 0.0),
            )
        )
    return blocks


def _run_from_json(data, which: str, network: bool) -> RunSpec:
    if not isinstance(data, dict):
        raise ScenarioParseError(f"run {which!r} must be an object")
    density = _require(data, "density", f"run {which!r}")
    if network:
        if not isinstance(density, list) or not all(isinstance(d, list) for d in density):
            raise ScenarioParseError(
                f"run {which!r}: a network run needs one block list per path"
            )
        densities = [_blocks_from_json(d, f"run {which!r}") for d in density]
    else:
        densities = [_blocks_from_json(density, f"run {which!r}")]
    return RunSpec(_require(data, "v_max", f"run {which!r}"), densities)


def scenario_from_json(data: dict, name: str = "scenario") -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioParseError("scenario document must be an object")
    space = _require(data, "space", "scenario")
    interval = None
    net = None
    if "interval" in space:
        spec = space["interval"]
        interval = (_require(spec, "a", "interval"), _require(spec, "b", "interval"))
    elif "network" in space:
        arcs = _require(space["network"], "arcs", "network")
        if not isinstance(arcs, list) or not arcs:
            raise ScenarioParseError("network needs a nonempty arcs list")
        net = build_network(
            [
                (
                    _require(a, "id", "arc"),
                    _require(a, "tail", "arc"),
                    _require(a, "head", "arc"),
                    _require(a, "length", "arc"),
                )
                for a in arcs
            ]
        )
    else:
        raise ScenarioParseError("space must hold either 'interval' or 'network'")
    runs = _require(data, "runs", "scenario")
    return Scenario(
        flat=_run_from_json(_require(runs, "flat", "runs"), "flat", net is not None),
        sharp=_run_from_json(_require(runs, "sharp", "runs"), "sharp", net is not None),
        t_f=_require(data, "t_f", "scenario"),
        interval=interval,
        net=net,
        p=data.get("p", 1),
        n_list=_require(data, "n_list", "scenario"),
        dx=data.get("dx", 0.05),
        boundary=data.get("boundary", "dirichlet0"),
        name=data.get("name", name),
    )


def load_scenario(path: str) -> Scenario:
    """Parse a scenario file.  Raises ScenarioParseError for unreadable or
    malformed documents and ValueError for invariant violations."""
    try:
        with open(path) as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ScenarioParseError(f"cannot read scenario file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"scenario file {path} is not valid JSON: {exc}") from exc
    stem = path.rsplit("/", 1)[-1]
    stem = stem[: -len(".json")] if stem.endswith(".json") else stem
    return scenario_from_json(data, name=stem)


def _parse_n_list(text: str) -> tuple:
    try:
        values = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("need at least one vehicle count")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trafficscale",
        description="Microscopic vs macroscopic traffic comparisons.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add_options(sp: argparse.ArgumentParser, with_source: bool = True) -> None:
        if with_source:
            source = sp.add_mutually_exclusive_group(required=True)
            source.add_argument("--test", type=int, choices=(1, 2, 3, 4), metavar="K",
                                help="built-in scenario id")
            source.add_argument("--scenario", metavar="PATH", help="scenario JSON file")
        sp.add_argument("--n", type=_parse_n_list, metavar="N[,N...]",
                        help="vehicle counts, replacing the scenario's n list")
        sp.add_argument("--dx", type=float, help="macro cell width override")
        sp.add_argument("--p", type=int, choices=(1, 2), help="Wasserstein order override")
        sp.add_argument("--t-f", dest="t_f", type=float, help="final time override")
        sp.add_argument("--out", metavar="PATH", help="output file (default stdout)")
        sp.add_argument("--coarsen", type=int, default=DEFAULT_COARSEN, metavar="K",
                        help="cell atom budget for macro distances")

    add_options(sub.add_parser("sweep", help="gap table over the n list"))
    add_options(sub.add_parser("distance", help="one distance pair at a single n"))
    add_options(sub.add_parser("simulate-micro", help="dump final vehicle positions"))
    add_options(sub.add_parser("simulate-macro", help="dump final cell densities"))
    test = sub.add_parser("test", help="sweep a built-in scenario")
    test.add_argument("k", type=int, choices=(1, 2, 3, 4), help="built-in scenario id")
    add_options(test, with_source=False)
    return parser


def _resolve_scenario(args: argparse.Namespace) -> Scenario:
    if args.command == "test":
        scenario = builtin_test(args.k)
    elif args.test is not None:
        scenario = builtin_test(args.test)
    else:
        scenario = load_scenario(args.scenario)
    updates: dict = {}
    if args.n is not None:
        updates["n_list"] = args.n
    if args.dx is not None:
        updates["dx"] = args.dx
    if args.p is not None:
        updates["p"] = args.p
    if args.t_f is not None:
        updates["t_f"] = args.t_f
    return replace(scenario, **updates) if updates else scenario


def _single_n(scenario: Scenario, parser: argparse.ArgumentParser) -> int:
    if len(scenario.n_list) != 1:
        parser.error("this command takes a single vehicle count; pass --n N")
    return scenario.n_list[0]


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as handle:
            handle.write(text)


def _micro_csv(scenario: Scenario, n: int) -> str:
    lines = []
    if scenario.is_network:
        lines.append("run,path,vehicle,coordinate")
        for which in ("flat", "sharp"):
            state = _micro_final(scenario, scenario.run(which), n,
                                 vehicle_length(scenario.seed_mass, n))
            for path, pop in zip(state.paths, state.populations):
                for i, y in enumerate(pop):
                    lines.append(f"{which},{path.index},{i},{y!r}")
    else:
        lines.append("run,vehicle,position")
        for which in ("flat", "sharp"):
            state = _micro_final(scenario, scenario.run(which), n,
                                 vehicle_length(scenario.seed_mass, n))
            for i, y in enumerate(state.positions):
                lines.append(f"{which},{i},{y!r}")
    return "\n".join(lines) + "\n"


def _macro_csv(scenario: Scenario, n: int) -> str:
    ell = vehicle_length(scenario.seed_mass, n)
    lines = []
    if scenario.is_network:
        lines.append("run,path,cell,s,eta")
        for which in ("flat", "sharp"):
            grid = _macro_final(scenario, scenario.run(which), ell, {})
            for path, eta in zip(grid.paths, grid.eta):
                for j, value in enumerate(eta):
                    s = (j + 0.5) * grid.dx
                    lines.append(f"{which},{path.index},{j},{s!r},{value!r}")
    else:
        lines.append("run,x,rho")
        for which in ("flat", "sharp"):
            grid = _macro_final(scenario, scenario.run(which), ell, {})
            for j, value in enumerate(grid.rho):
                x = grid.a + (j + 0.5) * grid.dx
                lines.append(f"{which},{x!r},{value!r}")
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        scenario = _resolve_scenario(args)
    except ScenarioParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    try:
        if args.command in ("sweep", "test"):
            result = xi_sweep(scenario, coarsen_to=args.coarsen)
            if args.out is None:
                export_results(result, sys.stdout)
            else:
                export_results(result, args.out)
        elif args.command == "distance":
            n = _single_n(scenario, parser)
            result = xi_sweep(replace(scenario, n_list=(n,)), coarsen_to=args.coarsen)
            if args.out is None:
                export_results(result, sys.stdout)
            else:
                export_results(result, args.out)
        elif args.command == "simulate-micro":
            _emit(_micro_csv(scenario, _single_n(scenario, parser)), args.out)
        else:
            _emit(_macro_csv(scenario, _single_n(scenario, parser)), args.out)
    except (RuntimeError, FloatingPointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
