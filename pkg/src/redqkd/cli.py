"""Command line front end: rate sweeps, protocol simulations and resource tables.

Exit codes: 0 success, 2 usage error, 3 protocol abort, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from math import comb
from pathlib import Path


from .bounds import Infeasible, NumericalFailure
from .config import ChannelParams, get_preset
from .keyrate import Scenario, optimize_inputs
from .network import ScenarioError, load_scenario
from .protocol import finalize_keys, run_protocol, toy_inputs
from .vss import CorruptionModel, deployable, resource_row

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_ABORT, EXIT_NUMERIC = 0, 1, 2, 3, 4
THREADS_ENV = "REDQKD_THREADS"
CSV_SCHEMA = "redqkd-sweep/1"
CSV_FIELDS = ("loss_db", "N", "E_tol", "l", "l_AU", "K", "has_key",
              "lam", "mu", "nu", "omega", "q_Z", "p_mu", "p_nu", "p_omega")
SCENARIO_DIR = Path(__file__).with_name("scenarios")


class UsageError(ValueError):
    pass


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


# rate-sweep

@dataclass
class SweepConfig:
    scheme: str = "MDI"
    module_model: str = "AC"
    t_q: int = 0
    unit_model: str = "AC"
    t_c: int = 0
    losses: tuple = tuple(range(0, 61, 5))
    M: int = 10**6
    preset: str = "paper-2020-defaults"
    output: str | None = None
    seed: int = 0
    n_starts: int = 8
    warm_start: bool = False
    gnuplot: str | None = None

    def validate(self) -> "SweepConfig":
        if self.scheme not in ("MDI", "BB84"):
            raise UsageError(f"unknown scheme {self.scheme!r}")
        losses = [float(x) for x in self.losses]
        if not losses:
            raise UsageError("empty loss grid")
        if any(b <= a for a, b in zip(losses, losses[1:])):
            raise UsageError("loss grid must be strictly increasing")
        if losses[0] < 0:
            raise UsageError("losses must be non-negative")
        for model, t in ((self.module_model, self.t_q), (self.unit_model, self.t_c)):
            try:
                m = CorruptionModel(model)
            except ValueError:
                raise UsageError(f"unknown corruption model {model!r}") from None
            if not deployable(m, t):
                raise UsageError(f"{m.value} needs t >= 2, got {t}")
        if self.M < 1 or self.n_starts < 1:
            raise UsageError("M and n_starts must be positive")
        try:
            get_preset(self.preset)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        return replace(self, losses=tuple(losses))

    @property
    def scenario(self) -> Scenario:
        return Scenario(self.module_model, self.t_q, self.unit_model, self.t_c)


_SWEEP_KEYS = {"scheme": str, "module_model": str, "t_q": int, "unit_model": str, "t_c": int,
               "losses": str, "M": int, "preset": str, "output": str, "seed": int,
               "n_starts": int, "warm_start": str, "gnuplot": str}


def parse_loss_grid(text: str) -> tuple:
    """``0:60:5`` (inclusive range) or a comma list ``0,5,10``."""
    text = text.strip()
    try:
        if ":" in text:
            a, b, step = (float(x) for x in text.split(":"))
            if step <= 0:
                raise UsageError("loss step must be positive")
            n = int(round((b - a) / step))
            return tuple(round(a + i * step, 10) for i in range(n + 1))
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise UsageError(f"bad loss grid {text!r}: {exc}") from None


def load_sweep_file(path) -> dict:
    out = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in _SWEEP_KEYS:
            raise UsageError(f"{path}:{n}: unknown key {k!r}")
        try:
            if k == "losses":
                out[k] = parse_loss_grid(v)
            elif k == "warm_start":
                out[k] = v.lower() in ("1", "true", "yes", "on")
            else:
                out[k] = _SWEEP_KEYS[k](v)
        except ValueError as exc:
            raise UsageError(f"{path}:{n}: {exc}") from None
    return out


def _point(args):
    cfg, index, loss, start = args
    pre = get_preset(cfg.preset)
    opt = optimize_inputs(pre.channel.with_loss(loss), cfg.scheme, cfg.scenario, pre.budget,
                          cfg.M, omega=pre.omega, f_EC=pre.f_EC, n_starts=cfg.n_starts,
                          seed=cfg.seed * 1000003 + index, start=start)
    return opt


def _row(loss, opt) -> dict:
    inp, res = opt.inputs, opt.result
    row = {"loss_db": loss, "N": "", "E_tol": "", "l": 0, "l_AU": "", "K": "", "has_key": 0}
    if res is not None:
        row.update(N=res.N, E_tol=res.E_tol, l=res.l, l_AU=res.l_AU, K=res.K,
                   has_key=int(res.K > 0))
    else:
        row["K"] = float("-inf")
    row.update(lam=inp.lam, mu=inp.mu, nu=inp.nu, omega=inp.omega, q_Z=inp.q_Z,
               p_mu=inp.p_mu, p_nu=inp.p_nu, p_omega=inp.p_omega)
    return row


def run_sweep(cfg: SweepConfig, workers: int = 1) -> list:
    """One row per loss point, in grid order; infeasible points are kept with has_key=0."""
    cfg = cfg.validate()
    if cfg.warm_start or workers <= 1:
        rows, warm = [], None
        for i, loss in enumerate(cfg.losses):
            opt = _point((cfg, i, loss, warm if cfg.warm_start else None))
            if cfg.warm_start and opt.feasible:
                warm = opt.inputs
            rows.append(_row(loss, opt))
        return rows
    jobs = [(cfg, i, loss, None) for i, loss in enumerate(cfg.losses)]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        opts = list(ex.map(_point, jobs))
    return [_row(loss, o) for loss, o in zip(cfg.losses, opts)]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def sweep_csv(cfg: SweepConfig, rows: list) -> str:
    cfg = cfg.validate()
    pre = get_preset(cfg.preset)
    buf = io.StringIO()
    ch, b = pre.channel, pre.budget
    buf.write(f"# schema={CSV_SCHEMA}\n")
    buf.write(f"# preset={pre.name} eta_det={ch.eta_det} p_d={ch.p_d} delta_mis={ch.delta_mis} "
              f"omega={pre.omega} f_EC={pre.f_EC} eps_cor={b.eps_cor} eps_sec={b.eps_sec} "
              f"eps_AU={b.eps_AU} gamma_sift={b.gamma_sift} gamma_EC={b.gamma_EC}\n")
    buf.write(f"# scheme={cfg.scheme} scenario={cfg.scenario.label} M={cfg.M} seed={cfg.seed} "
              f"n_starts={cfg.n_starts} warm_start={int(cfg.warm_start)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in CSV_FIELDS])
    return buf.getvalue()


def gnuplot_data(rows: list) -> str:
    lines = ["# loss_db K"]
    lines += [f"{r['loss_db']!r} {r['K']!r}" for r in rows]
    return "\n".join(lines) + "\n"


def cmd_rate_sweep(cfg: SweepConfig, out=None, workers: int | None = None) -> int:
    workers = worker_count() if workers is None else workers
    rows = run_sweep(cfg, workers)
    text = sweep_csv(cfg, rows)
    if cfg.output:
        Path(cfg.output).write_text(text, encoding="utf-8")
    else:
        (out or sys.stdout).write(text)
    if cfg.gnuplot:
        Path(cfg.gnuplot).write_text(gnuplot_data(rows), encoding="utf-8")
    return EXIT_OK


# simulate

def cmd_simulate(path, *, transcript=None, out=None, target_length=None) -> int:
    out = out or sys.stdout
    try:
        sc = load_scenario(path)
    except (OSError, ScenarioError) as exc:
        raise UsageError(f"cannot use scenario {path}: {exc}") from None
    inputs = toy_inputs(sc.scheme, sc.M)
    params = ChannelParams(loss_db=sc.loss_db)
    tl = sc.target_length if target_length is None else target_length
    kw = {"pool_bits": sc.pool_bits}
    res = run_protocol(sc.deployment(), inputs, params, sc.script(), sc.seed,
                       target_length=tl, **kw)
    if transcript:
        Path(transcript).write_text("\n".join(res.transcript) + "\n", encoding="utf-8")
    if not res.completed:
        out.write(f"verdict=aborted phase={res.abort.phase} origin={res.abort.origin}\n")
        return EXIT_ABORT
    kA, kB = finalize_keys(res.keys.final, res.network.cfg.unit_config)
    equal = kA == kB
    out.write(f"verdict=completed keys_equal={int(equal)} l={len(kA)} "
              f"key_A={kA.to_hex()} key_B={kB.to_hex()}\n")
    return EXIT_OK if equal else EXIT_ERROR


def bundled_scenarios() -> dict:
    return {p.stem: p for p in sorted(SCENARIO_DIR.glob("*.scn"))}


# resources

_NOTES = {
    "AC": "n_c = 3t+1 as in broadcast-based VSS, but abort replaces byzantine agreement",
    "AN": "fewer units than the 3t+1 needed with byzantine agreement",
    "PC": "one share per unit, no copies, no voting",
    "PN": "two units for every t",
}


def resources_rows(models=("AC", "AN", "PC", "PN"), ts=range(1, 7)) -> list:
    rows = []
    for m in models:
        for t in ts:
            n_c, R, r = resource_row(m, t)
            note = _NOTES[m] if deployable(m, t) else "formula only: model needs t >= 2"
            rows.append({"model": m, "t": t, "n_c": n_c, "R": R, "r": r, "note": note})
    return rows


def cmd_resources(models, ts, out=None) -> int:
    out = out or sys.stdout
    w = csv.writer(out, lineterminator="\n")
    w.writerow(("model", "t", "n_c", "R", "r", "note"))
    for row in resources_rows(models, ts):
        w.writerow([row[k] for k in ("model", "t", "n_c", "R", "r", "note")])
    if "AC" in models:
        out.write("# AC shares per unit r = C(3t, t): "
                  + ", ".join(f"t={t}:{comb(3 * t, t)}" for t in range(1, max(ts) + 1))
                  + "\n")
    return EXIT_OK


# argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="redqkd", description="Redundant-device QKD post-processing toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("rate-sweep", help="optimized key rate against channel loss")
    s.add_argument("--config", help="flat key = value sweep file; flags override it")
    s.add_argument("--scheme", choices=("MDI", "BB84"))
    s.add_argument("--scenario", help="honest, ac:T, pn:T or MODEL:TQ/MODEL:TC")
    s.add_argument("--losses", help="grid as start:stop:step or a comma list (dB)")
    s.add_argument("--M", type=int)
    s.add_argument("--preset")
    s.add_argument("--output", "-o")
    s.add_argument("--gnuplot", help="also write 'loss K' columns to this file")
    s.add_argument("--seed", type=int)
    s.add_argument("--n-starts", type=int, dest="n_starts")
    s.add_argument("--warm-start", action="store_true", default=None, dest="warm_start",
                   help="seed each point with the previous optimum (sequential)")

    m = sub.add_parser("simulate", help="run the protocol on a scenario file")
    m.add_argument("scenario", help="scenario file, or the name of a bundled scenario")
    m.add_argument("--transcript", help="write the message log here")
    m.add_argument("--target-length", type=int, dest="target_length")

    r = sub.add_parser("resources", help="minimum devices and shares per corruption model")
    r.add_argument("--model", choices=("AC", "AN", "PC", "PN"), action="append")
    r.add_argument("--t", type=int, action="append")
    return p


def parse_scenario_arg(text: str) -> dict:
    t = text.strip().lower()
    if t == "honest":
        return {"module_model": "AC", "t_q": 0, "unit_model": "AC", "t_c": 0}
    if "/" not in t and (t.startswith("ac:") or t.startswith("pn:")):
        try:
            n = int(t[3:])
        except ValueError:
            raise UsageError(f"bad scenario {text!r}") from None
        m = t[:2].upper()
        return {"module_model": m, "t_q": n, "unit_model": m, "t_c": n}
    try:
        mod, unit = text.split("/")
        mm, tq = mod.split(":")
        um, tc = unit.split(":")
        return {"module_model": mm.upper(), "t_q": int(tq), "unit_model": um.upper(), "t_c": int(tc)}
    except ValueError:
        raise UsageError(f"bad scenario {text!r}") from None


def _sweep_config(ns) -> SweepConfig:
    vals = load_sweep_file(ns.config) if ns.config else {}
    for k in ("scheme", "M", "preset", "output", "gnuplot", "seed", "n_starts", "warm_start"):
        v = getattr(ns, k)
        if v is not None:
            vals[k] = v
    if ns.losses is not None:
        vals["losses"] = parse_loss_grid(ns.losses)
    if ns.scenario is not None:
        vals.update(parse_scenario_arg(ns.scenario))
    return SweepConfig(**vals).validate()


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        if ns.command == "rate-sweep":
            return cmd_rate_sweep(_sweep_config(ns))
        if ns.command == "simulate":
            path = ns.scenario
            bundled = bundled_scenarios()
            if not Path(path).exists() and path in bundled:
                path = bundled[path]
            return cmd_simulate(path, transcript=ns.transcript, target_length=ns.target_length)
        models = tuple(ns.model or ("AC", "AN", "PC", "PN"))
        ts = tuple(ns.t or range(1, 7))
        if any(t < 0 for t in ts):
            raise UsageError("t must be non-negative")
        return cmd_resources(models, ts)
    except UsageError as exc:
        print(f"redqkd: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, FloatingPointError) as exc:
        print(f"redqkd: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except Infeasible as exc:
        print(f"redqkd: infeasible: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
