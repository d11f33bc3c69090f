"""Command-line entry point: ``markov-mesh {fit,simulate,analyze,init-config}``."""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

from . import analysis
from .lattice import LatticeDims, extend_scene, read_scene, write_scene
from .pbf import read_model, write_model
from .model import Mmm, simulate
from .prior import PriorConfig
from .rjmcmc import ChainAborted, ChainTrace, RunConfig, run_chain

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ABORT = 3


class InputError(Exception):
    pass


@dataclass(frozen=True)
class CliConfig:
    radius: float = 5.0
    p_star: float = 0.9
    sigma: float = 100.0
    nu: float = 0.5
    margin: int = 20
    iterations: int = 100_000
    burnin: int = 10_000
    stride: int = 50
    seed: int = 0
    r_ars: int = 10
    prob_param_move: float = 0.55
    chains: int = 1

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        if self.chains < 1:
            raise ValueError("chains must be at least 1")
        # delegate the remaining checks
        self.run_config()

    def prior(self) -> PriorConfig:
        return PriorConfig.from_radius(self.radius, self.p_star, self.sigma)

    def run_config(self, seed: int | None = None) -> RunConfig:
        return RunConfig(
            prior=self.prior(),
            nu=self.nu,
            r_ars=self.r_ars,
            iterations=self.iterations,
            burnin=min(self.burnin, self.iterations),
            stride=self.stride,
            prob_param_move=self.prob_param_move,
            seed=self.seed if seed is None else seed,
        )


_TYPES = {f.name: f.type for f in fields(CliConfig)}
_CASTS = {"float": float, "int": int}


def format_config(cfg: CliConfig) -> str:
    lines = ["# markov-mesh configuration; every key is optional"]
    for f in fields(CliConfig):
        lines.append(f"{f.name} = {getattr(cfg, f.name)!r}")
    return "\n".join(lines) + "\n"


def parse_config(text: str, base: CliConfig | None = None) -> CliConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise InputError(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = _CASTS[_TYPES[key]](value)
        except ValueError:
            raise InputError(f"config line {lineno}: bad value {value!r} for {key}") from None
    try:
        return replace(base or CliConfig(), **values)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _load_config(args) -> CliConfig:
    cfg = CliConfig()
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise InputError(f"cannot read config {args.config}: {exc.strerror}") from None
        cfg = parse_config(text, cfg)
    overrides = {
        name: getattr(args, name)
        for name in _TYPES
        if getattr(args, name, None) is not None
    }
    try:
        return replace(cfg, **overrides)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _chain_path(path: Path, index: int, chains: int) -> Path:
    if chains == 1:
        return path
    return path.with_name(f"{path.stem}.{index}{path.suffix}")


def _run_one(scene, run_cfg, trace_path: Path, scene_path: Path, model_path: Path, index: int) -> int:
    def progress(rec):
        print(
            f"[chain {index}] it={rec.iteration} |Lambda|={len(rec.interactions)} logp={rec.log_posterior:.4f}",
            file=sys.stderr,
            flush=True,
        )

    with open(trace_path, "w") as fh:
        def sink(rec):
            fh.write(rec.to_json() + "\n")

        try:
            trace = run_chain(scene, run_cfg, sink=sink, progress=progress,
                              progress_every=max(1, run_cfg.iterations // 20))
        except ChainAborted as exc:
            fh.flush()
            write_model(exc.state.pbf, model_path)
            print(f"[chain {index}] aborted: {exc}; last model in {model_path}", file=sys.stderr)
            return EXIT_ABORT
    write_scene(trace.final_scene, scene_path)
    write_model(trace.records[-1].pbf(), model_path)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    try:
        scene = read_scene(args.scene)
    except FileNotFoundError:
        raise InputError(f"scene file not found: {args.scene}") from None
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read scene {args.scene}: {exc}") from None
    scene = extend_scene(scene, cfg.margin)
    trace_path = Path(args.trace)
    jobs = []
    for k in range(cfg.chains):
        tp = _chain_path(trace_path, k, cfg.chains)
        jobs.append(
            (scene, cfg.run_config(cfg.seed + k), tp,
             tp.with_suffix(".scene"), tp.with_suffix(".model.json"), k)
        )
    if cfg.chains == 1:
        return _run_one(*jobs[0])
    with ProcessPoolExecutor(max_workers=min(cfg.chains, os.cpu_count() or 1)) as pool:
        codes = list(pool.map(_run_one, *zip(*jobs)))
    return max(codes)


def cmd_simulate(args) -> int:
    try:
        pbf = read_model(args.model)
    except FileNotFoundError:
        raise InputError(f"model file not found: {args.model}") from None
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"invalid model {args.model}: {exc}") from None
    if args.m < 1 or args.n < 1 or args.count < 0:
        raise InputError("lattice size must be positive and count non-negative")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = Mmm(pbf)
    for k in range(args.count):
        seed = args.seed + k
        write_scene(simulate(model, LatticeDims(args.m, args.n), seed), out / f"sim_{seed}.scene")
    return EXIT_OK


def cmd_analyze(args) -> int:
    try:
        trace = ChainTrace.read_jsonl(args.trace)
    except FileNotFoundError:
        raise InputError(f"trace file not found: {args.trace}") from None
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot parse trace {args.trace}: {exc}") from None
    cfg = _load_config(args)
    sample = analysis.subsample(trace, cfg.burnin, cfg.stride)
    if not sample:
        raise InputError(f"no trace records left after burn-in {cfg.burnin} with stride {cfg.stride}")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    analysis.write_neighbor_csv(analysis.neighbor_marginals(sample, 0, cfg.prior().tau0), out / "neighbors.csv")
    analysis.write_interaction_csv(analysis.interaction_marginals(sample, 0), out / "interactions.csv")
    clusters = analysis.model_clusters(analysis.model_frequencies(sample), args.max_clusters)
    analysis.write_cluster_csv(clusters, out / "clusters.csv")
    analysis.write_scalar_csv(trace, out / "trace_scalars.csv")
    if args.block_samples:
        if not args.dims:
            raise InputError("--block-samples needs --dims M N")
        dens = analysis.posterior_block_densities(
            sample, 0, LatticeDims(*args.dims), args.block_samples, cfg.seed
        )
        analysis.write_block_csv(dens, out / "block_densities.csv")
    print(f"{len(sample)} records analysed; results in {out}", file=sys.stderr)
    return EXIT_OK


def cmd_init_config(args) -> int:
    text = format_config(_load_config(args))
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text)
    return EXIT_OK


def _add_config_flags(p, keys):
    help_text = {
        "radius": "radius of the maximal template disk",
        "p_star": "inclusion probability for higher-order interactions",
        "sigma": "scale of the Gaussian factor in the parameter prior",
        "nu": "removal selection sharpness",
        "margin": "unobserved margin added around the scene",
        "iterations": "number of iterations",
        "burnin": "iterations discarded as burn-in",
        "stride": "keep every stride-th iteration after burn-in",
        "seed": "random seed",
        "r_ars": "exact draws used to fit the add proposal",
        "prob_param_move": "probability of a parameter update",
        "chains": "independent chains (seeds seed..seed+chains-1)",
    }
    p.add_argument("--config", help="key = value configuration file")
    for key in keys:
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=_CASTS[_TYPES[key]],
                       default=None, help=help_text[key])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="markov-mesh", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="sample the posterior for a scene")
    p.add_argument("scene")
    p.add_argument("--trace", required=True, help="output JSON-lines trace")
    _add_config_flags(p, list(_TYPES))
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="draw scenes from a model file")
    p.add_argument("model")
    p.add_argument("-m", type=int, required=True, help="rows")
    p.add_argument("-n", type=int, required=True, help="columns")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="summarise a trace as CSV files")
    p.add_argument("trace")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--max-clusters", type=int, default=None)
    p.add_argument("--block-samples", type=int, default=0,
                   help="simulate this many scenes from posterior models for block densities")
    p.add_argument("--dims", type=int, nargs=2, metavar=("M", "N"))
    _add_config_flags(p, ["radius", "burnin", "stride", "seed"])
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("init-config", help="write a configuration file with defaults")
    p.add_argument("-o", "--output", default=None)
    _add_config_flags(p, list(_TYPES))
    p.set_defaults(func=cmd_init_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"markov-mesh: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
