"""Command-line entry point: ``rwpre <command> --config PATH [options]``.

Exit codes: 0 ok, 1 config parse error, 2 assumption validation failure (or
a violated bound in ``verify-bounds``), 3 Green-function non-convergence,
4 enumeration cap exceeded.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from typing import List, Optional, Sequence

from . import __version__
from .environment import CookieLaw, EnvironmentSpec, Kernel, SiteLaw, spec_from_json, validate
from .green import check_A3, green_table
from .lace import DEFAULT_M_CAP, CapExceeded, pi_table, speed_series, verify_bounds
from .lattice import parse_step
from .simulate import DEFAULT_GUARD, NoCutsDetected, TooShort, speed_estimate

EXIT_OK, EXIT_CONFIG, EXIT_INVALID, EXIT_NONCONV, EXIT_CAP = 0, 1, 2, 3, 4

# checks that only matter for the Monte Carlo regeneration estimator
_MC_ONLY = ("cut_times",)


class ConfigError(ValueError):
    pass


def parse_beta_grid(text: str) -> List[float]:
    """``start:end:step`` inclusive of ``end`` within 1e-12, or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"beta grid must be start:end:step, got {text!r}")
        start, end, step = (float(p) for p in parts)
        if step <= 0:
            raise ConfigError("beta grid step must be positive")
        n = int(math.floor((end - start) / step + 1e-12))
        grid = [round(start + i * step, 12) for i in range(n + 1)]
        if abs(grid[-1] - end) > 1e-12 and grid[-1] < end:
            grid.append(end)
    else:
        grid = [float(p) for p in text.split(",") if p.strip()]
    if any(b < 0 or b > 1 for b in grid) or grid != sorted(grid):
        raise ConfigError(f"beta grid must be sorted inside [0, 1], got {grid}")
    return grid


def _count(text: str) -> int:
    v = float(text)
    if v <= 0 or v != int(v):
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return int(v)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rwpre", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True)
    common.add_argument("--out")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int)
    common.add_argument("--beta", type=float)
    common.add_argument("--rational", action="store_true")
    sub.add_parser("validate", parents=[common])
    g = sub.add_parser("green", parents=[common])
    g.add_argument("--K", type=_count, default=300)
    g.add_argument("--box-radius", type=_count)
    lc = sub.add_parser("lace", parents=[common])
    lc.add_argument("--m-max", type=_count, default=6)
    lc.add_argument("--n-max", type=_count)
    sm = sub.add_parser("simulate", parents=[common])
    sw = sub.add_parser("sweep", parents=[common])
    for s in (sm, sw):
        s.add_argument("--steps", type=_count, default=100_000)
        s.add_argument("--reps", type=_count, default=30)
        s.add_argument("--guard", type=_count, default=DEFAULT_GUARD)
    sw.add_argument("--beta-grid", default="0:1:0.1")
    vb = sub.add_parser("verify-bounds", parents=[common])
    vb.add_argument("--m-max", type=_count, default=8)
    vb.add_argument("--n-max", type=_count, default=3)
    vb.add_argument("--K", type=_count, default=300)
    vb.add_argument("--box-radius", type=_count)
    return p


# -- config -----------------------------------------------------------------

def load_config(path: str, exact: bool = False):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
        obj = json.loads(raw)
        if "dims" in obj or "example" in obj:
            law = spec_from_json(obj, exact=exact)
        elif "q" in obj:
            law = None
        else:
            raise ConfigError("config needs 'dims', 'example' or 'q'")
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return obj, law, hashlib.sha256(raw).hexdigest()


def _q_of(obj, law):
    if isinstance(law, EnvironmentSpec):
        return law.q, law.dims.d1, law.delta
    try:
        q = Kernel.from_json(obj["q"])
        d1 = int(obj.get("d1", max(k // 2 for k in q.support) + 1))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad q config: {exc}") from exc
    return q, d1, obj.get("delta")


# -- output -----------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


class Output:
    def __init__(self, args, command: str, digest: str):
        self.args, self.command, self.digest = args, command, digest

    def meta(self) -> dict:
        return {"version": __version__, "command": self.command, "config_sha256": self.digest}

    def write(self, header: Sequence[str], rows: List[Sequence], extra: Optional[dict] = None) -> None:
        buf = io.StringIO()
        if self.args.format == "json":
            body = {"meta": self.meta(), "columns": list(header),
                    "rows": [dict(zip(header, r)) for r in rows]}
            if extra:
                body.update(extra)
            json.dump(body, buf, indent=1, sort_keys=True, default=_json_default)
            buf.write("\n")
        else:
            m = self.meta()
            buf.write(f"# rwpre {m['version']} command={m['command']} config_sha256={m['config_sha256']}\n")
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        text = buf.getvalue()
        if self.args.out:
            with open(self.args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)


def _json_default(o):
    try:
        return float(o)
    except (TypeError, ValueError):
        return str(o)


def _say(args, msg: str) -> None:
    print(msg, file=sys.stdout if args.out else sys.stderr)


# -- commands ---------------------------------------------------------------

def _validation(law, skip=()):
    if not isinstance(law, EnvironmentSpec):
        return None
    rep = validate(law)
    bad = [n for n in rep.failed() if n not in skip]
    return rep, bad


def cmd_validate(args, obj, law, out: Output) -> int:
    if law is None:
        raise ConfigError("validate needs an environment spec")
    if isinstance(law, (SiteLaw, CookieLaw)):
        out.write(["check", "passed", "detail"], [["paper_example", True, f"{law.name}: validation waived"]])
        _say(args, f"validate: {law.name} is a raw example law, validation waived")
        return EXIT_OK
    rep = validate(law)
    rows = [[c.name, c.passed, c.detail] for c in rep.checks]
    out.write(["check", "passed", "detail"], rows, {"rho": rep.rho, "eps_delta": rep.eps_delta})
    _say(args, f"validate: {'all pass' if rep.ok else 'FAILED ' + ','.join(rep.failed())}")
    return EXIT_OK if rep.ok else EXIT_INVALID


def cmd_green(args, obj, law, out: Output) -> int:
    q, d1, delta = _q_of(obj, law)
    table = green_table(q, d1, args.K, args.box_radius)
    alpha = ""
    if delta is not None and table.converged[2]:
        alpha = table.alpha(delta)
    rows = [[i, args.K, table.sup_estimates[i], table.tail_ratio[i], table.converged[i],
             table.G_origin, alpha] for i in (1, 2, 3, 4)]
    rep = check_A3(q, d1, table=table)
    out.write(["i", "K", "sup_estimate", "tail_ratio", "converged", "G_at_origin", "alpha"], rows,
              {"tail_exponent": table.tail_exponent, "a3": rep.lines()})
    _say(args, f"green: G(o)={table.G_origin:.6g} converged={[table.converged[i] for i in (1, 2, 3, 4)]}")
    return EXIT_OK if table.converged[1] and table.converged[2] else EXIT_NONCONV


def _lace_spec(args, law):
    if not isinstance(law, EnvironmentSpec):
        raise ConfigError("this command needs an environment spec, not an example law")
    if args.beta is not None:
        law = law.with_beta(args.beta)
    return law


def cmd_lace(args, obj, law, out: Output) -> int:
    spec = _lace_spec(args, law)
    rep, bad = _validation(spec, _MC_ONLY)
    if bad:
        _say(args, f"lace: spec fails {bad}")
        return EXIT_INVALID
    table = pi_table(spec, args.m_max, args.n_max, rational=args.rational, threads=args.threads)
    series = speed_series(spec, table)
    rows = [[m, n, table.drift_sums[(m, n)][0], table.abs_sums[(m, n)]] for (m, n) in table.keys()]
    extra = {
        "speed_partial_sums": {str(m): [float(c) for c in v] for m, v in series.partial_sums.items()},
        "coeffs": {f"{m},{n}": [[list(x), list(y), float(v)] for (x, y), v in sorted(tab.items())]
                   for (m, n), tab in sorted(table.coeffs.items())},
    }
    if args.format == "csv":
        rows += [[m, "speed", float(v[0]), ""] for m, v in sorted(series.partial_sums.items())]
    out.write(["m", "N", "drift_sum", "abs_sum"], rows, extra)
    _say(args, f"lace: m_max={table.m_max} v1~{float(series.value[0]):.12g} "
               f"max|row sum|={table.max_abs_row_sum():.3g}")
    return EXIT_OK


def _sim_rows(law, beta, n, reps, seed, guard, threads, regen: bool):
    d = law.d
    rows, notes = [], []
    methods = ["naive"] + (["regeneration"] if regen else [])
    for method in methods:
        try:
            e = speed_estimate(law, n, reps, seed, method, guard=guard, threads=threads)
        except (TooShort, NoCutsDetected) as exc:
            notes.append(f"{method}: {exc}")
            continue
        rows.append([beta, method, n, reps] + [float(v) for v in e.point] + [float(v) for v in e.ci_halfwidth]
                    + [e.cuts_per_kstep, e.mean_dtau])
    return rows, notes, d


def _sim_header(d):
    return (["beta", "method", "n", "reps"] + [f"v_{i + 1}" for i in range(d)]
            + [f"ci_{i + 1}" for i in range(d)] + ["cuts_per_kstep", "mean_dtau"])


def cmd_simulate(args, obj, law, out: Output) -> int:
    if law is None:
        raise ConfigError("simulate needs an environment spec or example law")
    if isinstance(law, EnvironmentSpec):
        if args.beta is not None:
            law = law.with_beta(args.beta)
        _, bad = _validation(law)
        if bad:
            _say(args, f"simulate: spec fails {bad}")
            return EXIT_INVALID
        beta, regen = float(law.beta), True
    else:
        beta, regen = (obj.get("beta", obj.get("p", "")), law.d1 > 0)
    rows, notes, d = _sim_rows(law, beta, args.steps, args.reps, args.seed, args.guard, args.threads, regen)
    out.write(_sim_header(d), rows, {"notes": notes})
    _say(args, f"simulate: {len(rows)} estimates" + (f"; {'; '.join(notes)}" if notes else ""))
    return EXIT_OK


def cmd_sweep(args, obj, law, out: Output) -> int:
    if not isinstance(law, EnvironmentSpec):
        raise ConfigError("sweep needs an environment spec")
    grid = parse_beta_grid(args.beta_grid)
    _, bad = _validation(law, _MC_ONLY)
    if bad:
        _say(args, f"sweep: spec fails {bad}")
        return EXIT_INVALID
    rows = []
    for b in grid:
        r, _, d = _sim_rows(law.with_beta(b), b, args.steps, args.reps, args.seed, args.guard, args.threads, False)
        rows += r
    out.write(_sim_header(law.d), rows)
    v1 = [r[4] for r in rows]
    mono = all(b >= a for a, b in zip(v1, v1[1:]))
    _say(args, f"sweep: {len(rows)} rows, v1 nondecreasing={mono}")
    return EXIT_OK


def cmd_verify_bounds(args, obj, law, out: Output) -> int:
    spec = _lace_spec(args, law)
    _, bad = _validation(spec, _MC_ONLY)
    if bad:
        _say(args, f"verify-bounds: spec fails {bad}")
        return EXIT_INVALID
    gt = green_table(spec.q, spec.dims.d1, args.K, args.box_radius)
    if not (gt.converged[1] and gt.converged[2]):
        _say(args, "verify-bounds: G or G^*2 sup not converged")
        return EXIT_NONCONV
    table = pi_table(spec, args.m_max, args.n_max, threads=args.threads)
    rep = verify_bounds(spec, table, gt)
    rows = [[c.name, c.lhs, c.rhs, c.passed] for c in rep.checks]
    out.write(["check", "lhs", "rhs", "passed"], rows,
              {"alpha": rep.alpha, "assembled": rep.assembled, "tail": rep.tail})
    _say(args, f"verify-bounds: {len(rows) - len(rep.failed())}/{len(rows)} pass, alpha={rep.alpha:.6g}")
    return EXIT_OK if rep.ok else EXIT_INVALID


COMMANDS = {
    "validate": cmd_validate, "green": cmd_green, "lace": cmd_lace,
    "simulate": cmd_simulate, "sweep": cmd_sweep, "verify-bounds": cmd_verify_bounds,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        obj, law, digest = load_config(args.config, exact=False)
        return COMMANDS[args.command](args, obj, law, Output(args, args.command, digest))
    except ConfigError as exc:
        print(f"rwpre: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapExceeded as exc:
        print(f"rwpre: {exc}", file=sys.stderr)
        return EXIT_CAP


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
