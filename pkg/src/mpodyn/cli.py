"""Command line front end: run configuration, orchestration, data emission.

Subcommands: ``simulate``, ``projector-osee``, ``oracle-check``, ``compare``,
``fit``.  Every simulate run writes one CSV with header
``t,re,im,accumulated_cutoff,max_osee,chi_max_used`` plus a JSON sidecar
holding the full config, library version, and the termination reason.
Floats are emitted with 17 significant digits so CSV bodies are
byte-stable across reruns of the same config; timestamps live only in the
sidecar.

Full-scale reference recipe (not asserted anywhere in CI): the spin-chain
autocorrelation experiment at L=40, anisotropy 0.8, site 20, order-4
steps of 1/4, cutoff budget 1e-2, with bond dimensions 4000 (canonical),
1000 (grand-canonical), 500 (brute), reproduces a decay exponent of about
-0.83 when fit over t = 3..11.5.  At desk scale the fit is demonstrative
only.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time

import numpy as np

from . import __version__
from .charge_tensor import TruncationPolicy
from .evolution import evolve, make_schedule
from .models import ModelSpec
from .observables import (
    TimeSeries,
    build_observable_superstate,
    fit_itac,
    itac_series,
    local_density_series,
)
from .operator_space import BRUTE, CANONICAL, GRAND_CANONICAL
from .projector import projector_osee


METHODS = {
    "brute": BRUTE,
    "grand-canonical": GRAND_CANONICAL,
    "grand_canonical": GRAND_CANONICAL,
    "canonical": CANONICAL,
}


@dataclasses.dataclass
class RunConfig:
    model: str
    length: int
    local_dim: int
    delta: float
    hopping: float
    interaction: float
    method: str
    n_sector: int | None
    observable: str
    site: int
    psi0: str | None
    chi: int | None
    dt: float
    order: int
    t_max: float
    cutoff_budget: float
    seed: int
    output: str

    def validate(self) -> None:
        if self.method == CANONICAL and self.observable != "density" and self.n_sector is None:
            raise ValueError("canonical method requires --n")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0 < self.cutoff_budget <= 1:
            raise ValueError("budget must be in (0, 1]")
        if self.observable == "density" and self.psi0 is None:
            raise ValueError("density observable requires --psi0")
        if self.n_sector is not None:
            if not 0 <= self.n_sector <= self.length * (self.local_dim - 1):
                raise ValueError("infeasible particle number")

    def model_spec(self) -> ModelSpec:
        if self.model == "xxz":
            return ModelSpec.xxz(self.length, self.delta)
        return ModelSpec.bose_hubbard(self.length, self.local_dim, self.interaction, self.hopping)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write_rows(path: str, rows: list[tuple], header: str) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def _sidecar(path: str, config: dict, termination: str | None, extra: dict | None = None) -> None:
    payload = {
        "config": config,
        "version": __version__,
        "termination_reason": termination,
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, default=str)


def _series_rows(series: TimeSeries) -> list[tuple]:
    rows = []
    for i, t in enumerate(series.times):
        rows.append(
            (
                float(t),
                float(series.values[i].real),
                float(series.values[i].imag),
                float(series.meta["accumulated_cutoff"][i]),
                float(series.meta["max_osee"][i]),
                int(series.meta["chi_used"][i]),
            )
        )
    return rows


def _run_series(cfg: RunConfig) -> TimeSeries:
    spec = cfg.model_spec()
    schedule = make_schedule(cfg.order, cfg.dt)
    policy = TruncationPolicy(cfg.chi, 0.0)
    if cfg.observable == "itac":
        return itac_series(
            spec, cfg.site, cfg.method, schedule, policy, cfg.t_max, cfg.cutoff_budget, cfg.n_sector
        )
    if cfg.observable == "density":
        psi0 = [int(c) for c in cfg.psi0]
        return local_density_series(
            spec, psi0, cfg.site, cfg.method, schedule, policy, cfg.t_max, cfg.cutoff_budget
        )
    if cfg.observable == "osee":
        return _osee_series(cfg, spec, schedule, policy)
    raise ValueError(f"unknown observable {cfg.observable!r}")


def _osee_series(cfg: RunConfig, spec, schedule, policy) -> TimeSeries:
    target = build_observable_superstate(spec, cfg.site, cfg.method, cfg.n_sector)
    bond = max(1, min(cfg.site, spec.L - 1))
    times, values, cutoffs, osees, chis = [], [], [], [], []

    def observer(t, state, log):
        times.append(t)
        values.append(state.osee_profile()[bond - 1])
        cutoffs.append(log.accumulated_cutoff)
        osees.append(log.max_osee_per_step[-1])
        chis.append(state.mps.max_bond_dimension())

    log = evolve(target, spec, schedule, cfg.t_max, policy, cfg.cutoff_budget, observer)
    meta = {
        "observable": f"osee bond {bond}",
        "method": cfg.method,
        "N": cfg.n_sector,
        "L": spec.L,
        "d": spec.d,
        "chi": policy.chi_max,
        "dt": schedule.dt,
        "accumulated_cutoff": cutoffs,
        "max_osee": osees,
        "chi_used": chis,
        "termination_reason": log.termination_reason,
    }
    return TimeSeries(np.array(times), np.array(values, dtype=complex), meta)


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    try:
        cfg.validate()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    series = _run_series(cfg)
    _write_rows(cfg.output, _series_rows(series), "t,re,im,accumulated_cutoff,max_osee,chi_max_used")
    _sidecar(
        cfg.output + ".json",
        dataclasses.asdict(cfg),
        series.meta["termination_reason"],
    )
    print(f"wrote {cfg.output} ({len(series.times)} rows)")
    return 0


def cmd_projector_osee(args) -> int:
    lo, hi = (int(x) for x in args.n_range.split(":"))
    rows = []
    for n in range(lo, hi + 1):
        rows.append((n, projector_osee(n, args.length, args.d, args.bond)))
    with open(args.output, "w") as fh:
        fh.write("n,osee\n")
        for n, s in rows:
            fh.write(f"{n},{_fmt(s)}\n")
    _sidecar(args.output + ".json", vars(args), "complete")
    print(f"wrote {args.output} ({len(rows)} rows)")
    return 0


def cmd_oracle_check(args) -> int:
    from . import oracle

    spec = (
        ModelSpec.xxz(args.length, args.delta)
        if args.model == "xxz"
        else ModelSpec.bose_hubbard(args.length, args.d, args.interaction)
    )
    schedule = make_schedule(4, args.dt)
    policy = TruncationPolicy(None, 1e-12)
    report = {}
    failed = False
    if args.suite == "itac":
        H = oracle.dense_hamiltonian(spec).entries
        obs_mat = (
            oracle.site_operator(np.array([[-1.0, 0], [0, 1.0]]), args.site, spec.L)
            if spec.d == 2
            else oracle.site_operator(np.diag(np.arange(spec.d, dtype=float)), args.site, spec.L)
        )
        series = itac_series(spec, args.site, GRAND_CANONICAL, schedule, policy, args.tmax)
        devs = [
            abs(v - oracle.dense_itac(H, obs_mat, t))
            for t, v in zip(series.times, series.values)
        ]
        report["itac_grand_canonical"] = max(devs)
        for N in range(1, min(spec.L, 3) + 1):
            series = itac_series(spec, args.site, CANONICAL, schedule, policy, args.tmax, N=N)
            devs = [
                abs(v - oracle.dense_sector_itac(H, obs_mat, t, spec.L, spec.d, N))
                for t, v in zip(series.times, series.values)
            ]
            report[f"itac_canonical_N{N}"] = max(devs)
    elif args.suite == "density":
        psi0 = [int(c) for c in (args.psi0 or "01" * (spec.L // 2))]
        H = oracle.dense_hamiltonian(spec).entries
        v0 = oracle.fock_statevector(psi0, spec.d)
        nmat = oracle.site_operator(np.diag(np.arange(spec.d, dtype=float)), args.site, spec.L)
        for method in (CANONICAL, GRAND_CANONICAL):
            series = local_density_series(
                spec, psi0, args.site, method, schedule, policy, args.tmax
            )
            devs = []
            for t, v in zip(series.times, series.values):
                vt = oracle.dense_statevector_evolve(H, v0, t)
                devs.append(abs(v - vt.conj() @ (nmat @ vt)))
            report[f"density_{method}"] = max(devs)
    else:
        print(f"error: unknown suite {args.suite!r}", file=sys.stderr)
        return 2
    for name, dev in report.items():
        status = "ok" if dev <= args.tol else "FAIL"
        if dev > args.tol:
            failed = True
        print(f"{name}: max deviation {dev:.3e} [{status}]")
    return 1 if failed else 0


def cmd_compare(args) -> int:
    base = _config_from_args(args)
    runs = []
    for spec_str in args.run:
        cfg = dataclasses.replace(base)
        label_parts = []
        for item in spec_str.split(","):
            key, _, val = item.partition("=")
            if key == "method":
                cfg = dataclasses.replace(cfg, method=METHODS[val])
                label_parts.append(val.replace("-", "_"))
            elif key == "chi":
                cfg = dataclasses.replace(cfg, chi=int(val))
                label_parts.append(f"chi{val}")
            elif key == "n":
                cfg = dataclasses.replace(cfg, n_sector=int(val))
                label_parts.append(f"N{val}")
            else:
                raise ValueError(f"unknown run key {key!r}")
        runs.append(("_".join(label_parts), cfg))
    serieses = []
    for label, cfg in runs:
        cfg.validate()
        serieses.append((label, _run_series(cfg)))
    n_common = min(len(s.times) for _, s in serieses)
    header = "t," + ",".join(f"{label}_re,{label}_im" for label, _ in serieses)
    rows = []
    for i in range(n_common):
        row = [float(serieses[0][1].times[i])]
        for _, s in serieses:
            row += [float(s.values[i].real), float(s.values[i].imag)]
        rows.append(tuple(row))
    _write_rows(args.output, rows, header)
    summary = {
        label: {
            "last_time": float(s.times[-1]),
            "termination": s.meta["termination_reason"],
        }
        for label, s in serieses
    }
    last_common = float(min(s.times[-1] for _, s in serieses))
    _sidecar(
        args.output + ".json",
        dataclasses.asdict(base),
        "complete",
        {"runs": summary, "last_common_time": last_common},
    )
    print(f"wrote {args.output}; last common time {last_common}")
    return 0


def cmd_fit(args) -> int:
    times, re = [], []
    with open(args.input) as fh:
        header = fh.readline().strip().split(",")
        t_col = header.index("t")
        re_col = header.index("re")
        for line in fh:
            parts = line.strip().split(",")
            times.append(float(parts[t_col]))
            re.append(float(parts[re_col]))
    series = TimeSeries(np.array(times), np.array(re, dtype=complex), {})
    params, residual = fit_itac(series, (args.t_lo, args.t_hi))
    out = dataclasses.asdict(params)
    out["residual_rms"] = residual
    print(json.dumps(out, indent=1))
    return 0


def _config_from_args(args) -> RunConfig:
    return RunConfig(
        model=args.model,
        length=args.length,
        local_dim=args.d,
        delta=args.delta,
        hopping=args.hopping,
        interaction=args.interaction,
        method=METHODS[getattr(args, "method", "grand-canonical")],
        n_sector=getattr(args, "n", None),
        observable=args.observable,
        site=args.site,
        psi0=getattr(args, "psi0", None),
        chi=args.chi,
        dt=args.dt,
        order=args.order,
        t_max=args.tmax,
        cutoff_budget=args.budget,
        seed=args.seed,
        output=args.output,
    )


def _add_sim_args(p, with_method=True):
    p.add_argument("--model", choices=["xxz", "bose-hubbard"], default="xxz")
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--d", type=int, default=2, help="local dimension (bosons)")
    p.add_argument("--delta", type=float, default=0.0, help="spin anisotropy")
    p.add_argument("--hopping", type=float, default=1.0)
    p.add_argument("--interaction", type=float, default=0.0)
    if with_method:
        p.add_argument("--method", choices=sorted(METHODS), default="grand-canonical")
        p.add_argument("--n", type=int, default=None, help="input particle number (canonical)")
    p.add_argument("--observable", choices=["itac", "density", "osee"], default="itac")
    p.add_argument("--site", type=int, required=True)
    p.add_argument("--psi0", type=str, default=None, help="occupation string, site 1 first")
    p.add_argument("--chi", type=int, default=None)
    p.add_argument("--dt", type=float, default=0.0625)
    p.add_argument("--order", type=int, choices=[1, 2, 4], default=4)
    p.add_argument("--tmax", type=float, default=4.0)
    p.add_argument("--budget", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", type=str, default="run.csv")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mpodyn", description="matrix product operator dynamics"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="one Heisenberg-picture run to CSV")
    _add_sim_args(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_osee = sub.add_parser("projector-osee", help="exact projector entropy sweep")
    p_osee.add_argument("--d", type=int, default=2)
    p_osee.add_argument("--length", type=int, required=True)
    p_osee.add_argument("--n-range", type=str, required=True, help="lo:hi inclusive")
    p_osee.add_argument("--bond", type=int, required=True)
    p_osee.add_argument("--output", type=str, default="projector_osee.csv")
    p_osee.set_defaults(func=cmd_projector_osee)

    p_or = sub.add_parser("oracle-check", help="engine vs dense oracle deviations")
    p_or.add_argument("--suite", choices=["itac", "density"], default="itac")
    p_or.add_argument("--model", choices=["xxz", "bose-hubbard"], default="xxz")
    p_or.add_argument("--length", type=int, default=6)
    p_or.add_argument("--d", type=int, default=2)
    p_or.add_argument("--delta", type=float, default=0.8)
    p_or.add_argument("--interaction", type=float, default=10.0)
    p_or.add_argument("--site", type=int, default=3)
    p_or.add_argument("--psi0", type=str, default=None)
    p_or.add_argument("--dt", type=float, default=0.0625)
    p_or.add_argument("--tmax", type=float, default=1.0)
    p_or.add_argument("--tol", type=float, default=1e-6)
    p_or.set_defaults(func=cmd_oracle_check)

    p_cmp = sub.add_parser("compare", help="aligned runs differing in method/chi")
    _add_sim_args(p_cmp, with_method=False)
    p_cmp.add_argument(
        "--run",
        action="append",
        required=True,
        help="comma list like method=canonical,n=2,chi=256 (repeatable)",
    )
    p_cmp.set_defaults(func=cmd_compare)

    p_fit = sub.add_parser("fit", help="decay-law fit of an existing CSV")
    p_fit.add_argument("--input", type=str, required=True)
    p_fit.add_argument("--t-lo", type=float, required=True)
    p_fit.add_argument("--t-hi", type=float, required=True)
    p_fit.set_defaults(func=cmd_fit)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
