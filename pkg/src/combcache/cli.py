"""Command-line driver.

``combcache run --config exp.cfg`` runs a sweep described by a flat
``key = value`` file and writes one CSV row per cache size.  The other
subcommands run a single point and print loads.

Exit codes: 0 success, 1 configuration error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from math import comb, lcm
from typing import Optional

from . import analysis
from .delivery import (
    DeliveryPlan, decentralized_deliver, hybrid_deliver, rebalance, srds_deliver, worst_case_demand,
)
from .lengths import srds_lengths
from .loads import compute_loads
from .placement import CachePlacement, cman_place, dman_place, hybrid_place
from .topology import RelayNetwork, TopologyError, parse_topology
from .verifier import (
    VerificationError, reports_to_json, required_denominator, simulate_concrete, verify_decodability,
)

log = logging.getLogger("combcache")

MODES = ("centralized", "decentralized", "hybrid", "general")
FULL_ENGINE_LIMIT = 20000  # (user, subfile) pairs above which "auto" counts lengths only


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    topology: str
    mode: str = "centralized"
    N: Optional[int] = None
    M: list[Fraction] = field(default_factory=list)
    demand: str = "worst-case"
    seed: int = 0
    B_concrete: Optional[int] = None
    out: Optional[str] = None
    rebalance: bool = False
    verify: bool = True
    compare: bool = True
    scenario: Optional[str] = None
    t3: int = 0
    t4: Optional[int] = None
    engine: str = "auto"
    workers: int = 1
    plans: Optional[str] = None
    base_dir: str = "."

    @classmethod
    def from_text(cls, text: str, base_dir: str = ".") -> "ExperimentConfig":
        values: dict[str, str] = {}
        for n, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"line {n}: expected key = value")
            values[key.strip()] = value.strip()
        if "topology" not in values:
            raise ConfigError("missing key: topology")
        known = {f for f in cls.__dataclass_fields__ if f != "base_dir"}
        unknown = set(values) - known - {"M1"}
        if unknown:
            raise ConfigError(f"unknown keys: {sorted(unknown)}")
        cfg = cls(topology=values["topology"], base_dir=base_dir)
        try:
            cfg.mode = values.get("mode", cfg.mode)
            if "N" in values:
                cfg.N = int(values["N"])
            sweep = values.get("M1" if cfg.mode == "hybrid" and "M1" in values else "M", "")
            cfg.M = parse_sweep(sweep)
            cfg.demand = values.get("demand", cfg.demand)
            cfg.seed = int(values.get("seed", cfg.seed))
            if "B_concrete" in values:
                cfg.B_concrete = int(values["B_concrete"])
            cfg.out = values.get("out")
            cfg.rebalance = _flag(values.get("rebalance", "false"))
            cfg.verify = _flag(values.get("verify", "true"))
            cfg.compare = _flag(values.get("compare", "true"))
            cfg.scenario = values.get("scenario")
            cfg.t3 = int(values.get("t3", 0))
            if "t4" in values:
                cfg.t4 = int(values["t4"])
            cfg.engine = values.get("engine", cfg.engine)
            cfg.workers = int(values.get("workers", 1))
            cfg.plans = values.get("plans")
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.check()
        return cfg

    def check(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if not self.M:
            raise ConfigError("empty sweep: give at least one M value")
        if self.engine not in ("auto", "full", "lengths"):
            raise ConfigError("engine must be auto, full or lengths")
        if self.mode == "decentralized" and self.B_concrete is None:
            raise ConfigError("decentralized mode needs B_concrete")
        if self.mode == "hybrid" and self.t4 is None:
            raise ConfigError("hybrid mode needs t4")

    def network(self) -> RelayNetwork:
        spec = self.topology
        path = spec if os.path.isabs(spec) else os.path.join(self.base_dir, spec)
        if os.path.isfile(path):
            with open(path) as fh:
                spec = fh.read()
        try:
            return parse_topology(spec)
        except TopologyError as exc:
            raise ConfigError(f"bad topology: {exc}") from exc


def _flag(value: str) -> bool:
    v = value.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def parse_sweep(text: str) -> list[Fraction]:
    """``"1,2,5/2"`` or ``"0..20"`` (integer range, inclusive)."""
    text = text.strip()
    if not text:
        return []
    if ".." in text:
        lo, hi = text.split("..", 1)
        return [Fraction(m) for m in range(int(lo), int(hi) + 1)]
    return [Fraction(tok.strip()) for tok in text.split(",") if tok.strip()]


def fmt(x) -> str:
    if x is None or x == "":
        return ""
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


# ------------------------------------------------------------------ runs --

@dataclass
class PointResult:
    M: Fraction
    t: object
    R_h_max: Fraction
    R_hk_max: Fraction
    closed_form: Optional[Fraction]
    verified: str
    plan: Optional[DeliveryPlan] = None
    placement: Optional[CachePlacement] = None

    @property
    def R_max(self) -> Fraction:
        return max(self.R_h_max, self.R_hk_max)


def _demand(cfg: ExperimentConfig, K: int) -> tuple[int, ...]:
    if cfg.demand == "worst-case":
        return worst_case_demand(K)
    return tuple(int(x) for x in cfg.demand.replace(",", " ").split())


def _check(network, placement, plan, demand, cfg: ExperimentConfig) -> str:
    if not cfg.verify:
        return "skipped"
    ok = all(r.passed for r in verify_decodability(network, placement, plan, demand))
    if ok and cfg.B_concrete:
        B = lcm(cfg.B_concrete, required_denominator(placement, plan))
        ok = all(simulate_concrete(network, placement, plan, demand, B, cfg.seed).values())
    return "pass" if ok else "fail"


def run_point(cfg: ExperimentConfig, M: Fraction) -> PointResult:
    network = cfg.network()
    K = network.num_users
    N = cfg.N if cfg.N is not None else K
    if not 0 <= M <= N:
        raise ConfigError(f"M={M} outside [0, N={N}]")
    demand = _demand(cfg, K)
    closed = None
    if cfg.mode in ("centralized", "general"):
        t = K * M / N
        if t.denominator != 1:
            raise ConfigError(f"centralized mode needs K*M/N integral (M={M})")
        t = int(t)
        if network.is_combination and network.r == 2 and network.num_relays >= 3:
            closed = analysis.closed_form_load_r2(network.num_relays, t)
        engine = cfg.engine
        if engine == "auto":
            engine = "full" if K * comb(K, t) <= FULL_ENGINE_LIMIT else "lengths"
        if engine == "lengths":
            if cfg.rebalance:
                raise ConfigError("rebalance needs the full engine")
            lp = srds_lengths(network, t)
            return PointResult(M, t, max(lp.relay_loads().values(), default=Fraction(0)),
                               max(lp.link_loads().values(), default=Fraction(0)), closed, "skipped")
        placement = cman_place(K, N, t)
        plan = srds_deliver(network, placement, demand)
        if cfg.rebalance:
            plan = rebalance(plan, network)
    elif cfg.mode == "decentralized":
        t = K * M / N
        placement = dman_place(K, N, M, cfg.seed, cfg.B_concrete)
        plan = decentralized_deliver(network, placement, demand)
        if cfg.rebalance:
            plan = rebalance(plan, network)
    else:
        t = cfg.t4
        placement = hybrid_place(network, N, M, cfg.t3, cfg.t4, seed=cfg.seed)
        plan, _ = hybrid_deliver(network, placement, demand)
    report = compute_loads(plan, network)
    verified = _check(network, placement, plan, demand, cfg)
    return PointResult(M, t, report.max_server_to_relay, report.max_relay_to_user, closed,
                       verified, plan, placement)


def _run_point_safe(args):
    cfg, M = args
    result = run_point(cfg, M)
    if not cfg.plans:
        result.plan = result.placement = None
    return result


def sweep(cfg: ExperimentConfig) -> list[PointResult]:
    jobs = [(cfg, M) for M in cfg.M]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_point_safe, jobs))
    else:
        results = [_run_point_safe(job) for job in jobs]
    return sorted(results, key=lambda r: r.M)


def _reference_columns(cfg: ExperimentConfig) -> list[analysis.ReferenceConstant]:
    if not cfg.compare or cfg.scenario is None:
        return []
    try:
        return analysis.reference_table(cfg.scenario)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc


def results_csv(cfg: ExperimentConfig, results: list[PointResult]) -> str:
    refs = _reference_columns(cfg)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["M", "t_or_tprime", "R_max", "R_h_max", "R_hk_max", "closed_form_if_r2"]
        + [f"ref:{c.scheme}[{c.citation}]" for c in refs]
        + ["verified", "R_max_float"]
    )
    for r in results:
        writer.writerow(
            [fmt(r.M), fmt(r.t), fmt(r.R_max), fmt(r.R_h_max), fmt(r.R_hk_max), fmt(r.closed_form)]
            + [fmt(c.value) for c in refs]
            + [r.verified, f"{float(r.R_max):.6f}"]
        )
    return buf.getvalue()


def run(cfg: ExperimentConfig) -> int:
    """Run a sweep; returns the process exit code."""
    try:
        refs_ok = _reference_columns(cfg)  # noqa: F841  fail early on a bad scenario
        results = sweep(cfg)
    except (ConfigError, TopologyError, ValueError) as exc:
        log.error("config error: %s", exc)
        return 1
    text = results_csv(cfg, results)
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if cfg.plans:
        os.makedirs(cfg.plans, exist_ok=True)
        network = cfg.network()
        for r in results:
            tag = fmt(r.M).replace("/", "_")
            with open(os.path.join(cfg.plans, f"plan_M{tag}.json"), "w") as fh:
                fh.write(r.plan.to_json())
            with open(os.path.join(cfg.plans, f"placement_M{tag}.json"), "w") as fh:
                fh.write(r.placement.to_json(network))
    return 2 if any(r.verified == "fail" for r in results) else 0


# ------------------------------------------------------------ subcommands --

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="write output here instead of stdout")
    p.add_argument("--seed", type=int)
    p.add_argument("--rebalance", action="store_true", help="apply greedy relay load shifting")
    p.add_argument("--no-verify", action="store_true", help="skip decodability checks")
    p.add_argument("--concrete-B", type=int, help="also run a bit-level simulation")
    p.add_argument("--dump-plan", help="write the plan as JSON")
    p.add_argument("--dump-placement", help="write the placement as JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="combcache", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("--config", required=True)
    _common(p)

    p = sub.add_parser("combination", help="centralized delivery on a combination network")
    p.add_argument("--H", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--N", type=int)
    p.add_argument("--M", required=True)
    p.add_argument("--demand", default="worst-case")
    _common(p)

    p = sub.add_parser("general", help="centralized delivery on a general relay network")
    p.add_argument("--topology", required=True, help="topology file")
    p.add_argument("--N", type=int)
    p.add_argument("--M", required=True)
    p.add_argument("--demand", default="worst-case")
    _common(p)

    p = sub.add_parser("decentralized", help="decentralized placement and delivery")
    p.add_argument("--H", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--N", type=int)
    p.add_argument("--M", required=True)
    p.add_argument("--B", type=int, default=1000, help="file length in bits for the placement")
    p.add_argument("--demand", default="worst-case")
    _common(p)

    p = sub.add_parser("hybrid", help="cache-aided relays and users")
    p.add_argument("--H", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--N", type=int)
    p.add_argument("--M1", required=True)
    p.add_argument("--t3", type=int, required=True)
    p.add_argument("--t4", type=int, required=True)
    p.add_argument("--demand", default="worst-case")
    _common(p)

    p = sub.add_parser("verify-plan", help="re-check a dumped plan against a placement dump")
    p.add_argument("--plan", required=True)
    p.add_argument("--placement", required=True)
    p.add_argument("--topology", help="topology file (default: taken from the placement dump)")
    _common(p)
    return parser


def _single_point(args, mode: str, topology: str) -> int:
    cfg = ExperimentConfig(
        topology=topology, mode=mode, N=args.N,
        M=[Fraction(getattr(args, "M1", None) or args.M)],
        demand=args.demand, seed=args.seed or 0, B_concrete=args.concrete_B,
        rebalance=args.rebalance, verify=not args.no_verify, compare=False,
        t3=getattr(args, "t3", 0), t4=getattr(args, "t4", None), engine="full",
    )
    if mode == "decentralized":
        cfg.B_concrete = args.B
    network = cfg.network()
    out = io.StringIO()
    if args.rebalance and mode in ("centralized", "general"):
        before = run_point(replace(cfg, rebalance=False), cfg.M[0])
        loads = compute_loads(before.plan, network).server_to_relay
        out.write("relay loads before rebalance: " + " ".join(fmt(loads[h]) for h in network.relays) + "\n")
    result = run_point(cfg, cfg.M[0])
    report = compute_loads(result.plan, network)
    label = "relay loads after rebalance: " if args.rebalance else "relay loads: "
    out.write(label + " ".join(fmt(report.server_to_relay[h]) for h in network.relays) + "\n")
    if mode == "hybrid":
        out.write(f"load pair: ({fmt(result.R_h_max)}, {fmt(result.R_hk_max)})\n")
        out.write(f"user cache M2: {fmt(result.placement.params['M2'])}\n")
    if result.closed_form is not None:
        out.write(f"closed form: {fmt(result.closed_form)}\n")
    out.write(f"max link-load: {fmt(result.R_max)}\n")
    out.write(f"verified: {result.verified}\n")
    _emit(args, out.getvalue())
    if args.dump_plan:
        with open(args.dump_plan, "w") as fh:
            fh.write(result.plan.to_json())
    if args.dump_placement:
        with open(args.dump_placement, "w") as fh:
            fh.write(result.placement.to_json(network))
    return 2 if result.verified == "fail" else 0


def _emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def verify_plan(args) -> int:
    from .topology import build_general_network
    import json

    with open(args.placement) as fh:
        placement_text = fh.read()
    placement = CachePlacement.from_json(placement_text)
    with open(args.plan) as fh:
        plan = DeliveryPlan.from_json(fh.read())
    if args.topology:
        with open(args.topology) as fh:
            network = parse_topology(fh.read())
    else:
        relays = json.loads(placement_text).get("users_of_relay")
        if relays is None:
            raise ConfigError("placement dump has no topology; pass --topology")
        network = build_general_network({int(h): us for h, us in relays.items()})
    try:
        reports = verify_decodability(network, placement, plan, plan.demand)
    except VerificationError as exc:
        _emit(args, f"inconsistent plan: {exc}\n")
        return 2
    _emit(args, reports_to_json(reports) + "\n")
    return 0 if all(r.passed for r in reports) else 2


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            with open(args.config) as fh:
                cfg = ExperimentConfig.from_text(fh.read(), os.path.dirname(os.path.abspath(args.config)))
            if args.out:
                cfg.out = args.out
            if args.seed is not None:
                cfg.seed = args.seed
            cfg.rebalance = cfg.rebalance or args.rebalance
            cfg.verify = cfg.verify and not args.no_verify
            if args.concrete_B:
                cfg.B_concrete = args.concrete_B
            return run(cfg)
        if args.command == "verify-plan":
            return verify_plan(args)
        if args.command == "general":
            return _single_point(args, "general", args.topology)
        topo = f"combination H={args.H} r={args.r}"
        mode = {"combination": "centralized"}.get(args.command, args.command)
        return _single_point(args, mode, topo)
    except (ConfigError, TopologyError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
