"""Command-line entry point: ``sosmom <command> [options]``.

Every command accepts ``--seed``, ``--out`` and ``--config FILE``.  A
config file holds ``key = value`` lines whose keys are the long option
names of the chosen command (dashes or underscores); explicit command
line options take precedence.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import covariance, harness, normmean, regression, roadblock, sdp
from .dataio import DatasetParseError, read_dataset, write_dataset
from .sampler import KINDS, DistSpec, SpecError, sample_dist


class ConfigError(ValueError):
    pass


def read_config(path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _dist_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dist", default="gaussian", choices=KINDS)
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--nu", type=float, default=None, help="degrees of freedom for product_t")
    p.add_argument("--point", default=None, help="comma-separated vector for point_mass")
    p.add_argument("--sigma-ln", type=float, default=0.5)


def _spec(a) -> DistSpec:
    point = tuple(_floats(a.point)) if a.point else None
    return DistSpec(a.dist, a.dim, nu=a.nu, point=point, sigma_ln=a.sigma_ln)


def _write_json(obj, out) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _write_text(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_gen(a) -> int:
    spec = _spec(a)
    data = sample_dist(spec, a.n, a.seed)
    X = data.samples
    if a.regress:
        rng = np.random.default_rng([a.seed, 1])
        f = _floats(a.f_star) if a.f_star else rng.standard_normal(spec.dim).tolist()
        if len(f) != spec.dim:
            raise SpecError("f_star has the wrong length")
        Y = X @ np.array(f) + a.noise * rng.standard_normal(a.n)
        X = np.column_stack([X, Y])
    if not a.out:
        raise ConfigError("gen needs --out")
    write_dataset(X, a.out)
    return 0


def cmd_cov(a) -> int:
    data = read_dataset(a.input)
    extra = {"epsilon": a.eps}
    if a.nit is not None:
        extra["nit"] = a.nit
    cfg, data = covariance.config_from_params(data, a.delta, a.k, a.trsigma, a.opnorm, a.L, **extra)
    res = covariance.estimate_covariance(data, cfg)
    out = res.as_dict()
    out.update(k=cfg.k, alpha=None if math.isinf(cfg.alpha) else cfg.alpha)
    _write_json(out, a.out)
    return 0


def cmd_regress(a) -> int:
    data = read_dataset(a.input)
    if data.d < 2:
        raise DatasetParseError("regression files need d + 1 >= 2 columns (last column is Y)")
    X, Y = data.samples[:, :-1], data.samples[:, -1]
    cfg = regression.RegConfig(delta=a.delta, k=a.k)
    rd = regression.RegDataset(X, Y, min(cfg.buckets(), X.shape[0]))
    res = regression.estimate_regression(rd, cfg)
    _write_json(res.as_dict(), a.out)
    return 0


def cmd_mean(a) -> int:
    data = read_dataset(a.input)
    res = normmean.estimate_mean_norm(data, a.delta, normmean.get_oracle(a.norm), p=a.p)
    _write_json(res.as_dict(), a.out)
    return 0


def cmd_roadblock(a) -> int:
    if a.action == "gen":
        inst = roadblock.gen_block_mixture(a.d, a.m, a.lam, a.case, a.seed)
        if not a.out:
            raise ConfigError("roadblock gen needs --out")
        write_dataset(inst.Y, a.out)
        return 0
    tests = [t.strip() for t in a.tests.split(",") if t.strip()]
    lams = [a.lam] if a.action == "test" else _floats(a.lambdas)
    cases = [a.case] if a.action == "test" else ["null", "planted"]
    lines = ["lambda,test,accuracy,trials"]
    for lam in lams:
        for t in tests:
            acc = [roadblock.accuracy(t, a.d, a.m, lam, c, a.trials, a.seed) for c in cases]
            lines.append(f"{lam!r},{t},{float(np.mean(acc))!r},{a.trials * len(cases)}")
    _write_text("\n".join(lines) + "\n", a.out)
    return 0


def cmd_bench(a) -> int:
    spec = None if (a.task == "mean1d" and a.dist_default) else _spec(a)
    est = tuple(s.strip() for s in a.estimators.split(",")) if a.estimators else None
    cfg = harness.BenchConfig(
        a.task, a.n, tuple(_floats(a.deltas)), a.trials, a.seed, spec, a.tail, est, a.noise, a.norm, a.eps, a.out
    )
    rep = harness.run_tail_benchmark(cfg)
    _write_text(rep.to_csv(include_runtime=a.runtime), a.out)
    if a.out:
        Path(str(a.out) + ".summary.txt").write_text(rep.summary())
    return 0


def cmd_sdp(a) -> int:
    prob = sdp.read_problem(a.input)
    sol = sdp.solve_sdp(prob, gap_tol=a.gap_tol, max_iter=a.max_iter)
    if a.out:
        sdp.write_solution(sol, a.out)
    print(f"status {sol.status} objective {sol.objective:.12g} iterations {sol.iterations}")
    return 0 if sol.ok else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None)
    common.add_argument("--config", default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sosmom", description="Sum-of-squares median-of-means estimators.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="sample a dataset")
    _dist_args(g)
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--regress", action="store_true", help="append a response column Y = <f*, X> + noise")
    g.add_argument("--f-star", default=None)
    g.add_argument("--noise", type=float, default=1.0)
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("cov", parents=[common], help="covariance estimation")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--k", type=int, default=None)
    c.add_argument("--delta", type=float, default=1e-3)
    c.add_argument("--trsigma", type=float, default=None)
    c.add_argument("--opnorm", type=float, default=None)
    c.add_argument("--L", type=float, default=None)
    c.add_argument("--eps", type=float, default=1e-3)
    c.add_argument("--nit", type=int, default=None)
    c.set_defaults(func=cmd_cov)

    r = sub.add_parser("regress", parents=[common], help="linear regression")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--delta", type=float, default=1e-3)
    r.add_argument("--k", type=int, default=None)
    r.set_defaults(func=cmd_regress)

    m = sub.add_parser("mean", parents=[common], help="mean estimation in a general norm")
    m.add_argument("--in", dest="input", required=True)
    m.add_argument("--delta", type=float, default=1e-2)
    m.add_argument("--norm", choices=sorted(normmean.ORACLES), default="l2")
    m.add_argument("--p", type=float, default=0.1)
    m.set_defaults(func=cmd_mean)

    rb = sub.add_parser("roadblock", parents=[common], help="single-spike block mixtures")
    rb.add_argument("action", choices=("gen", "test", "sweep"))
    rb.add_argument("--d", type=int, default=8)
    rb.add_argument("--m", type=int, default=1000)
    rb.add_argument("--lambda", dest="lam", type=float, default=0.9)
    rb.add_argument("--lambdas", default="0.05,0.1,0.2,0.4,0.9")
    rb.add_argument("--case", choices=("null", "planted"), default="planted")
    rb.add_argument("--trials", type=int, default=20)
    rb.add_argument("--tests", default="subset,sos")
    rb.set_defaults(func=cmd_roadblock)

    b = sub.add_parser("bench", parents=[common], help="tail-probability benchmark (CSV)")
    b.add_argument("--task", choices=harness.TASKS, default="mean1d")
    _dist_args(b)
    b.add_argument("--n", type=int, default=4000)
    b.add_argument("--deltas", default="0.002")
    b.add_argument("--trials", type=int, default=200)
    b.add_argument("--tail", type=float, default=2.5, help="Pareto index for mean1d without --dist")
    b.add_argument("--estimators", default=None)
    b.add_argument("--noise", type=float, default=1.0)
    b.add_argument("--norm", choices=sorted(normmean.ORACLES), default="l2")
    b.add_argument("--eps", type=float, default=0.02)
    b.add_argument("--runtime", action="store_true", help="include the runtime_ms column")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("sdp", parents=[common], help="solve an SDP problem file")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--gap-tol", type=float, default=1e-8)
    s.add_argument("--max-iter", type=int, default=200)
    s.set_defaults(func=cmd_sdp)
    return p


def _bool(v: str) -> bool:
    t = v.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _config_path(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse ``argv`` with config-file values installed as command defaults."""
    path = _config_path(argv)
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    command = next((t for t in argv if t in sub.choices), None)
    if path is None or command is None:
        return parser.parse_args(argv)
    sp = sub.choices[command]
    acts: dict[str, argparse.Action] = {}
    for a in sp._actions:
        acts.setdefault(a.dest, a)
        for opt in a.option_strings:
            acts.setdefault(opt.lstrip("-").replace("-", "_"), a)
    defaults = {}
    for key, value in read_config(path).items():
        act = acts.get(key)
        if act is None or act.dest in ("config", "help"):
            raise ConfigError(f"unknown config key {key!r} for command {command}")
        if isinstance(act, argparse._StoreTrueAction):
            val = _bool(value)
        else:
            val = act.type(value) if act.type else value
            if act.choices is not None and val not in act.choices:
                raise ConfigError(f"{key}: {value!r} not in {list(act.choices)}")
        defaults[act.dest] = val
        act.required = False
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if args.command == "bench":
            args.dist_default = "--dist" not in argv and not (args.config and "dist" in read_config(args.config))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (ConfigError, DatasetParseError, SpecError, sdp.SDPStructureError, normmean.NormError, ValueError, OSError) as exc:
        print(f"sosmom: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
