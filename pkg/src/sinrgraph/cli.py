"""Command-line front end: ``sinrgraph <command> --config run.ini``.

Exit status: 0 on success, 1 on usage or parameter errors, 2 when
``validate`` or ``selftest`` finds a failed check.
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys
import time
from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path

from . import __version__, experiments as ex
from .errors import DomainError, ParameterError, UnsupportedModelError
from .pointproc import ModelParams, NoiseSpec, Window, sample_model

STUDIES = {
    "degree": (ex.DegreeConfig, ex.run_degree_study),
    "exit-tail": (ex.ExitTailConfig, ex.run_exit_tail_study),
    "local-delay": (ex.LocalDelayConfig, ex.run_local_delay_validation),
    "time-constant": (ex.TimeConstantConfig, ex.run_time_constant_study),
    "campbell": (ex.CampbellConfig, ex.run_campbell_check),
    "invariants": (ex.InvariantConfig, ex.run_invariant_suite),
}
COMMANDS = ("generate", "degree", "exit-tail", "local-delay", "time-constant", "validate", "selftest")
MODEL_KEYS = {"lambda": "lambda_m", "grid_step": "grid_step", "aloha_p": "aloha_p", "fading_mu": "fading_mu",
              "threshold": "threshold", "pathloss_a": "pathloss_a", "pathloss_beta": "pathloss_beta",
              "noise": "noise"}


def _data(name: str) -> str:
    return resources.files("sinrgraph").joinpath("data", name).read_text()


def load_schema() -> dict[str, dict[str, str]]:
    """Section -> {key: type} from the bundled schema file."""
    cp = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=None)
    cp.read_string(_data("schema.ini"))
    return {s: {k: v.split(";")[0].strip() for k, v in cp[s].items()} for s in cp.sections()}


def _convert(kind: str, text: str, key: str):
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "str":
            return text
        if kind == "noise":
            return NoiseSpec.parse(text)
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if kind == "ints":
            return tuple(int(p) for p in parts)
        if kind == "floats":
            return tuple(float(p) for p in parts)
        if kind == "strs":
            return tuple(parts)
        if kind == "vectors":
            vecs = tuple(tuple(float(x) for x in p.split()) for p in parts)
            if any(len(v) != 2 for v in vecs):
                raise ValueError("vectors need two components")
            return vecs
    except ValueError as exc:
        raise ParameterError(f"bad value for {key!r}: {text!r} ({exc})") from None
    raise ParameterError(f"schema type {kind!r} for {key!r} is not known")


@dataclass(frozen=True)
class RunConfig:
    study: str
    study_config: object
    out: Path
    seed: int
    workers: int
    source: str

    @property
    def params(self) -> ModelParams:
        return self.study_config.params


def parse_config(text: str, study: str | None = None, seed: int | None = None, out: str | None = None,
                 workers: int | None = None) -> RunConfig:
    """Validate a config text against the schema and build the study config."""
    schema = load_schema()
    cp = configparser.ConfigParser(comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParameterError(f"unreadable config: {exc}") from None
    unknown = set(cp.sections()) - {"run", "model", "study"}
    if unknown:
        raise ParameterError(f"unknown config sections {sorted(unknown)}")
    run = _section(cp, "run", schema["run"])
    study = study or run.get("study")
    if study not in STUDIES:
        raise ParameterError(f"unknown or missing study {study!r}; expected one of {sorted(STUDIES)}")
    model = _section(cp, "model", schema["model"])
    sect = _section(cp, "study", schema[f"study.{study}"], f"study ({study})")
    cfg_cls, _ = STUDIES[study]
    base = cfg_cls()
    p = base.params
    win = p.window
    win = Window(float(model.get("width", win.width)), float(model.get("height", win.height)),
                 model.get("boundary", win.boundary), float(model.get("margin", win.margin)))
    kw = {MODEL_KEYS[k]: v for k, v in model.items() if k in MODEL_KEYS}
    the_seed = seed if seed is not None else run.get("seed", base.seed)
    params = replace(p, window=win, seed=int(the_seed), **kw)
    n_workers = workers if workers is not None else run.get("workers", ex.default_workers())
    if n_workers < 1:
        raise ParameterError("workers must be at least 1")
    names = {f.name for f in fields(cfg_cls)}
    missing = set(sect) - names
    if missing:
        raise ParameterError(f"schema keys {sorted(missing)} not understood by {study}")
    study_cfg = replace(base, params=params, seed=int(the_seed), workers=int(n_workers), **sect)
    out_dir = Path(out or run.get("out") or f"runs/{study}")
    return RunConfig(study, study_cfg, out_dir, int(the_seed), int(n_workers), text)


def _section(cp, name, allowed, label=None):
    if not cp.has_section(name):
        return {}
    bad = [k for k in cp[name] if k not in allowed]
    if bad:
        raise ParameterError(f"unknown keys in [{label or name}]: {sorted(bad)}")
    return {k: _convert(allowed[k], v, k) for k, v in cp[name].items()}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sinrgraph", description="Space-time SINR graph experiments.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", type=Path)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--no-plots", action="store_true", help="write CSVs and the manifest only")
    return ap


def _report(res) -> None:
    for c in res.checks:
        print(c.line())
    for f in res.files:
        print(f"wrote {f}")


def _run_study(rc: RunConfig, plots: bool):
    _, fn = STUDIES[rc.study]
    res = fn(rc.study_config, out=rc.out)
    (rc.out / f"{rc.study}.ini").write_text(rc.source)
    if plots:
        from .plotting import plot_study
        res.files += plot_study(res, rc.out)
    _report(res)
    return res


def _generate(args) -> int:
    text = args.config.read_text() if args.config else ""
    cp = configparser.ConfigParser(comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.read_string(text)
    study = cp.get("run", "study", fallback="degree")
    rc = parse_config(text, study=study, seed=args.seed, out=str(args.out) if args.out else None,
                      workers=1)
    started = time.time()
    params = rc.params
    pattern = sample_model(params)
    out = Path(args.out or "runs/generate")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "pattern.csv"
    with open(path, "w", newline="") as fh:
        pattern.to_csv(fh)
    man = {"study": "generate", "version": __version__, "seed": params.seed, "points": len(pattern),
           "config": ex._jsonable(params), "files": [str(path)], "wall_clock_s": round(time.time() - started, 3)}
    (out / "generate_manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    print(f"wrote {path} ({len(pattern)} points)")
    return 0


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        ap.print_usage(sys.stderr)
        return 1
    try:
        if args.command == "generate":
            return _generate(args)
        if args.command == "selftest":
            text = args.config.read_text() if args.config else _data("selftest.ini")
            rc = parse_config(text, "invariants", args.seed, args.out and str(args.out), args.workers)
            res = _run_study(rc, plots=False)
            return 0 if res.passed else 2
        if args.config is None:
            ap.print_usage(sys.stderr)
            print(f"sinrgraph {args.command}: --config is required", file=sys.stderr)
            return 1
        if not args.config.exists():
            print(f"sinrgraph: config file {args.config} not found", file=sys.stderr)
            return 1
        text = args.config.read_text()
        study = None if args.command == "validate" else args.command
        rc = parse_config(text, study, args.seed, args.out and str(args.out), args.workers)
        res = _run_study(rc, plots=not args.no_plots)
        if args.command == "validate":
            return 0 if res.passed else 2
        return 0
    except (ParameterError, UnsupportedModelError, DomainError, configparser.Error) as exc:
        print(f"sinrgraph: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
