"""Batch command-line surface: simulate, infer, diagnose, em-check, bench.

Every run is driven by one 64-bit seed; worker streams (replicates, chains)
are spawned from it through ``numpy.random.SeedSequence`` so outputs are
reproducible from the manifest alone.  Each run directory receives a
``manifest.json`` holding the resolved configuration, its hash, the seed
and the fan-out; file formats are plain UTF-8 CSV with LF newlines.

Exit codes: 0 ok, 2 configuration error, 3 domain/data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import chain_summary, geweke_joint_test, time_rescaling_test
from .em import em_responsibilities
from .mcmc import (
    Hyperparams,
    McmcConfig,
    NonFinitePosteriorError,
    branching_probabilities,
    inferred_param_names,
    run_mcmc,
)
from .model import ContagionPath, EventSequence, HawkesParams
from .sde import Constant, ExpLangevin, Gbm, IidGamma
from .simulate import simulate, simulate_ogata

__all__ = ["main", "ConfigError"]


class ConfigError(Exception):
    """Bad or missing configuration; maps to exit code 2."""


MODEL_KEYS = {
    "constant": ("psi",),
    "gamma": ("tau", "omega"),
    "gbm": ("mu", "sigma2", "y0"),
    "exp-langevin": ("k", "mu", "sigma2", "y0"),
}


def _read_config_file(path: str) -> dict:
    cfg = {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    for lineno, raw in enumerate(p.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


def _resolve(file_cfg: dict, flag_cfg: dict, known: dict) -> dict:
    """Merge config file and flags (flags win), coerce types, check keys."""
    merged = dict(file_cfg)
    for k, v in flag_cfg.items():
        if v is not None:
            merged[k] = v
    for key in merged:
        if key not in known:
            raise ConfigError(f"unknown config key '{key}'")
    out = {}
    for key, (typ, required, default) in known.items():
        if key in merged:
            try:
                raw = merged[key]
                if typ is bool and isinstance(raw, str):
                    if raw.lower() not in ("true", "false", "0", "1"):
                        raise ValueError(raw)
                    out[key] = raw.lower() in ("true", "1")
                else:
                    out[key] = typ(raw)
            except (TypeError, ValueError):
                raise ConfigError(f"invalid value for key '{key}': {merged[key]!r}")
        elif required:
            raise ConfigError(f"missing required key '{key}'")
        else:
            out[key] = default
    return out


def _build_spec(cfg: dict):
    model = cfg["model"]
    if model not in MODEL_KEYS:
        raise ConfigError(f"invalid value for key 'model': {model!r}")
    if model == "constant":
        return Constant(cfg["psi"])
    if model == "gamma":
        return IidGamma(cfg["tau"], cfg["omega"])
    if model == "gbm":
        return Gbm(cfg["mu"], cfg["sigma2"], cfg["y0"])
    return ExpLangevin(cfg["k"], cfg["mu"], cfg["sigma2"], cfg["y0"])


def _model_keyspec(required_model: bool = True) -> dict:
    keys = {
        "model": (str, required_model, None),
        "psi": (float, False, 1.0),
        "tau": (float, False, 2.0),
        "omega": (float, False, 2.0),
        "mu": (float, False, 0.0),
        "sigma2": (float, False, 0.1),
        "k": (float, False, 1.0),
        "y0": (float, False, 1.0),
    }
    return keys


def _fresh_seed() -> int:
    return int(np.random.SeedSequence(None).entropy % (2**63))


def _write_manifest(outdir: Path, command: str, cfg: dict, fanout: int, outputs: list):
    # the hash identifies the run, so the output location stays out of it
    hashed = {k: v for k, v in cfg.items() if k != "out"}
    canonical = json.dumps(hashed, sort_keys=True)
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg.get("seed"),
        "config": cfg,
        "config_hash": hashlib.sha256(canonical.encode()).hexdigest(),
        "fanout": fanout,
        "outputs": sorted(outputs),
    }
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    )


def _write_csv(path: Path, header: str, rows) -> str:
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
            fh.write("\n")
    return path.name


def _read_events(path: str) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"event file not found: {path}")
    lines = [ln.strip() for ln in p.read_text().splitlines() if ln.strip()]
    if not lines or lines[0] != "t":
        raise ValueError(f"event file {path} must start with header 't'")
    values = [float(x) for x in lines[1:]]
    if not values:
        raise ValueError("no events")
    return np.asarray(values)


def _horizon_for(args, events_path: str) -> float:
    if args.horizon is not None:
        return args.horizon
    manifest = Path(events_path).parent / "manifest.json"
    if manifest.exists():
        data = json.loads(manifest.read_text())
        horizon = data.get("config", {}).get("horizon")
        if horizon is not None:
            return float(horizon)
    raise ConfigError("missing required key 'horizon'")


# ---------------------------------------------------------------------------
# simulate


def _simulate_keyspec() -> dict:
    keys = _model_keyspec()
    keys.update(
        {
            "a": (float, True, None),
            "lambda0": (float, True, None),
            "delta": (float, True, None),
            "horizon": (float, True, None),
            "seed": (int, False, None),
            "replicates": (int, False, 1),
            "trace": (bool, False, False),
            "out": (str, False, "."),
        }
    )
    return keys


def _run_one_simulation(cfg: dict, seed_seq, outdir: Path, trace: bool) -> list:
    rng = np.random.default_rng(seed_seq)
    params = HawkesParams(cfg["a"], cfg["lambda0"], cfg["delta"])
    spec = _build_spec(cfg)
    sim = simulate(params, spec, cfg["horizon"], rng, record_intensity=trace)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [
        _write_csv(outdir / "events.csv", "t", ((float(t),) for t in sim.events.times)),
        _write_csv(
            outdir / "contagion.csv",
            "t,y",
            zip(map(float, sim.events.times), map(float, sim.contagion.levels)),
        ),
    ]
    if trace:
        written.append(
            _write_csv(
                outdir / "trace.csv",
                "t,lambda",
                ((float(t), float(v)) for t, v in sim.intensity_trace),
            )
        )
    return written


def cmd_simulate(args) -> int:
    file_cfg = _read_config_file(args.config) if args.config else {}
    flag_cfg = {
        k: getattr(args, k.replace("-", "_"), None)
        for k in _simulate_keyspec()
    }
    cfg = _resolve(file_cfg, flag_cfg, _simulate_keyspec())
    if cfg["seed"] is None:
        cfg["seed"] = _fresh_seed()
    outdir = Path(cfg["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    reps = cfg["replicates"]
    if reps < 1:
        raise ConfigError("invalid value for key 'replicates': must be >= 1")
    seeds = np.random.SeedSequence(cfg["seed"]).spawn(reps)
    outputs: list = []
    if reps == 1:
        outputs += _run_one_simulation(cfg, seeds[0], outdir, cfg["trace"])
    else:
        dirs = [outdir / f"rep{i:04d}" for i in range(reps)]
        with concurrent.futures.ThreadPoolExecutor(max_workers=4) as pool:
            futures = [
                pool.submit(_run_one_simulation, cfg, seeds[i], dirs[i], cfg["trace"])
                for i in range(reps)
            ]
            for i, fut in enumerate(futures):
                outputs += [f"rep{i:04d}/" + name for name in fut.result()]
    _write_manifest(outdir, "simulate", cfg, reps, outputs)
    return 0


# ---------------------------------------------------------------------------
# infer


def _infer_keyspec() -> dict:
    keys = _model_keyspec()
    keys.update(
        {
            "events": (str, True, None),
            "horizon": (float, False, None),
            "iters": (int, False, 5000),
            "burnin": (int, False, 1000),
            "thin": (int, False, 1),
            "seed": (int, False, None),
            "chains": (int, False, 1),
            "init": (str, False, "prior"),
            "k_update": (str, False, "exact-mh"),
            "save_latent": (bool, False, False),
            "out": (str, False, "."),
        }
    )
    return keys


def _chain_rows(chain, names):
    for pos, it in enumerate(chain.iterations):
        state = chain.states[pos]
        row = [int(it), state.params.a, state.params.lambda0, state.params.delta]
        row += [float(getattr(state.spec, n)) for n in names[3:]]
        row.append(float(chain.loglik[pos]))
        yield row


def _write_chain_outputs(outdir: Path, chain, names, save_latent: bool) -> list:
    outdir.mkdir(parents=True, exist_ok=True)
    header = "iter," + ",".join(names) + ",loglik"
    written = [_write_csv(outdir / "chain.csv", header, _chain_rows(chain, names))]
    written.append(
        _write_csv(
            outdir / "acceptance.csv",
            "block,rate",
            sorted(chain.acceptance_rates.items()),
        )
    )
    if save_latent:
        def rows():
            for pos, it in enumerate(chain.iterations):
                st = chain.states[pos]
                for j in range(len(st.y.levels)):
                    yield (int(it), j + 1, float(st.y.levels[j]), int(st.z.parent[j]))

        written.append(_write_csv(outdir / "latent.csv", "iter,event,y,z", rows()))
    return written


def cmd_infer(args) -> int:
    file_cfg = _read_config_file(args.config) if args.config else {}
    flag_cfg = {k: getattr(args, k.replace("-", "_"), None) for k in _infer_keyspec()}
    cfg = _resolve(file_cfg, flag_cfg, _infer_keyspec())
    if cfg["seed"] is None:
        cfg["seed"] = _fresh_seed()
    times = _read_events(cfg["events"])
    if cfg["horizon"] is None:
        class _H:  # reuse the flag/manifest fallback
            horizon = None
        cfg["horizon"] = _horizon_for(args, cfg["events"])
    events = EventSequence(times, cfg["horizon"])
    spec = _build_spec(cfg)
    names = list(inferred_param_names(spec))
    outdir = Path(cfg["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    n_chains = cfg["chains"]
    if n_chains < 1:
        raise ConfigError("invalid value for key 'chains': must be >= 1")
    child_seeds = [
        int(s.generate_state(1, dtype=np.uint64)[0]) % (2**63)
        for s in np.random.SeedSequence(cfg["seed"]).spawn(n_chains)
    ]

    def one_chain(seed):
        mc = McmcConfig(
            iterations=cfg["iters"],
            burnin=cfg["burnin"],
            thin=cfg["thin"],
            seed=seed,
            init=cfg["init"],
            k_update=cfg["k_update"],
            save_latent=cfg["save_latent"],
        )
        return run_mcmc(events, spec, Hyperparams(), mc)

    outputs: list = []
    if n_chains == 1:
        chains = [one_chain(child_seeds[0])]
        outputs += _write_chain_outputs(outdir, chains[0], names, cfg["save_latent"])
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=4) as pool:
            chains = list(pool.map(one_chain, child_seeds))
        for i, ch in enumerate(chains):
            sub = outdir / f"chain{i:02d}"
            outputs += [
                f"chain{i:02d}/" + name
                for name in _write_chain_outputs(sub, ch, names, cfg["save_latent"])
            ]
    summary = chain_summary(chains)
    outputs.append(
        _write_csv(
            outdir / "summary.csv",
            "param,mean,median,ci_low,ci_high,ess,rhat",
            (
                (
                    name,
                    s["mean"],
                    s["median"],
                    s["ci_low"],
                    s["ci_high"],
                    s["ess"],
                    s["rhat"],
                )
                for name, s in summary.items()
            ),
        )
    )
    _write_manifest(outdir, "infer", cfg, n_chains, outputs)
    return 0


# ---------------------------------------------------------------------------
# diagnose / em-check / bench


def cmd_diagnose(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.geweke:
        if args.model is None:
            raise ConfigError("missing required key 'model'")
        cfg = {
            "model": args.model,
            "psi": args.psi,
            "tau": args.tau,
            "omega": args.omega,
            "mu": args.mu,
            "sigma2": args.sigma2,
            "k": args.k,
            "y0": args.y0,
        }
        spec = _build_spec(cfg)
        seed = args.seed if args.seed is not None else _fresh_seed()
        records = geweke_joint_test(
            spec, Hyperparams(), rounds=args.rounds, horizon=args.horizon_geweke,
            seed=seed,
        )
        name = _write_csv(
            outdir / "geweke.csv",
            "param,moment,z,prior_mean,chain_mean",
            (
                (r["param"], r["moment"], r["z"], r["prior_mean"], r["chain_mean"])
                for r in records
            ),
        )
        _write_manifest(
            outdir, "diagnose", {"mode": "geweke", "seed": seed, **cfg,
                                 "rounds": args.rounds}, 1, [name]
        )
        worst = max(abs(r["z"]) for r in records)
        print(f"geweke: {len(records)} moments, max |z| = {worst:.2f}")
        return 0
    # residual analysis mode
    for flag in ("events", "contagion", "a", "lambda0", "delta"):
        if getattr(args, flag) is None:
            raise ConfigError(f"missing required key '{flag}'")
    times = _read_events(args.events)
    horizon = _horizon_for(args, args.events)
    levels = _read_contagion(args.contagion, times.size)
    events = EventSequence(times, horizon)
    params = HawkesParams(args.a, args.lambda0, args.delta)
    res = time_rescaling_test(events, ContagionPath(levels), params)
    name = _write_csv(
        outdir / "rescaling.csv",
        "statistic,pvalue,n",
        [(res.statistic, res.pvalue, res.n_gaps)],
    )
    _write_manifest(
        outdir,
        "diagnose",
        {"mode": "rescaling", "events": args.events, "horizon": horizon},
        1,
        [name],
    )
    print(f"time-rescaling KS: statistic={res.statistic:.4f} p={res.pvalue:.4f}")
    return 0


def _read_contagion(path: str, n: int) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"contagion file not found: {path}")
    lines = [ln.strip() for ln in p.read_text().splitlines() if ln.strip()]
    if not lines or lines[0] != "t,y":
        raise ValueError(f"contagion file {path} must start with header 't,y'")
    levels = [float(ln.split(",")[1]) for ln in lines[1:]]
    if len(levels) != n:
        raise ValueError(f"contagion file has {len(levels)} rows for {n} events")
    return np.asarray(levels)


def cmd_em_check(args) -> int:
    times = _read_events(args.events)
    horizon = _horizon_for(args, args.events)
    events = EventSequence(times, horizon)
    params = HawkesParams(args.a, args.lambda0, args.delta)
    resp = em_responsibilities(events, params, args.psi)
    y = ContagionPath(np.full(events.n, args.psi))
    worst = 0.0
    for i in range(1, events.n + 1):
        probs = branching_probabilities(i, events, y, params)
        row = np.concatenate([[resp[i - 1, i - 1]], resp[i - 1, : i - 1]])
        worst = max(worst, float(np.max(np.abs(row - probs))))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    name = _write_csv(
        outdir / "emcheck.csv", "n_events,max_abs_diff", [(events.n, worst)]
    )
    _write_manifest(
        outdir, "em-check",
        {"events": args.events, "horizon": horizon, "psi": args.psi}, 1, [name],
    )
    print(f"em-check: max abs responsibility difference = {worst:.3e}")
    return 0


def cmd_bench(args) -> int:
    targets = [float(x) for x in args.events.split(",")]
    seed = args.seed if args.seed is not None else _fresh_seed()
    params = HawkesParams(a=1.0, lambda0=1.0, delta=2.0)
    spec = Constant(1.0)  # branching ratio psi/delta = 0.5
    mean_rate = params.a * params.delta / (params.delta - spec.psi)
    rows = []
    seeds = np.random.SeedSequence(seed).spawn(len(targets))
    for target, sseq in zip(targets, seeds):
        horizon = target / mean_rate
        sim_times, ogata_times = [], []
        child = sseq.spawn(2 * args.runs)
        for r in range(args.runs):
            rng = np.random.default_rng(child[r])
            t0 = time.perf_counter()
            sim = simulate(params, spec, horizon, rng)
            sim_times.append(time.perf_counter() - t0)
            n_events = sim.events.n
        if target <= args.ogata_cap:
            for r in range(args.runs):
                rng = np.random.default_rng(child[args.runs + r])
                t0 = time.perf_counter()
                simulate_ogata(params, spec, horizon, rng)
                ogata_times.append(time.perf_counter() - t0)
        rows.append(
            (
                int(target),
                float(horizon),
                int(n_events),
                float(np.median(sim_times)),
                float(np.median(ogata_times)) if ogata_times else float("nan"),
            )
        )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    name = _write_csv(
        outdir / "bench.csv",
        "target_events,horizon,observed_events,simulate_median_s,thinning_median_s",
        rows,
    )
    _write_manifest(
        outdir, "bench",
        {"events": args.events, "runs": args.runs, "seed": seed}, 1, [name],
    )
    for row in rows:
        print(
            f"n~{row[0]:>8d}  simulate {row[3]:.4f}s  "
            f"thinning {'-' if np.isnan(row[4]) else f'{row[4]:.4f}s'}"
        )
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_model_flags(p: argparse.ArgumentParser, require_model: bool = False):
    p.add_argument("--model", choices=sorted(MODEL_KEYS), required=require_model)
    p.add_argument("--psi", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--omega", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--k", type=float)
    p.add_argument("--y0", type=float)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="sdehawkes",
        description="Simulate and fit Hawkes processes with stochastic excitation levels.",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw event sequences")
    p.add_argument("--config")
    _add_model_flags(p)
    for flag, typ in (
        ("a", float), ("lambda0", float), ("delta", float), ("horizon", float),
        ("seed", int), ("replicates", int), ("out", str),
    ):
        p.add_argument(f"--{flag}", type=typ)
    p.add_argument("--trace", action="store_const", const=True, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("infer", help="fit a model to an event file by MCMC")
    p.add_argument("--config")
    _add_model_flags(p)
    for flag, typ in (
        ("events", str), ("horizon", float), ("iters", int), ("burnin", int),
        ("thin", int), ("seed", int), ("chains", int), ("init", str),
        ("k-update", str), ("out", str),
    ):
        p.add_argument(f"--{flag}", type=typ, dest=flag.replace("-", "_"))
    p.add_argument("--save-latent", action="store_const", const=True, default=None,
                   dest="save_latent")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("diagnose", help="residual analysis or sampler self-test")
    p.add_argument("--geweke", action="store_true")
    _add_model_flags(p)
    p.add_argument("--rounds", type=int, default=2000)
    p.add_argument("--horizon-geweke", type=float, default=2.0, dest="horizon_geweke")
    p.add_argument("--events")
    p.add_argument("--contagion")
    p.add_argument("--horizon", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--lambda0", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("em-check", help="verify EM responsibilities against the Gibbs conditional")
    p.add_argument("--events", required=True)
    p.add_argument("--horizon", type=float)
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--lambda0", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--psi", type=float, required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_em_check)

    p = sub.add_parser("bench", help="timing comparison of the two simulators")
    p.add_argument("--events", required=True, help="comma-separated target event counts")
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--seed", type=int)
    p.add_argument("--ogata-cap", type=float, default=1e4, dest="ogata_cap")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NonFinitePosteriorError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
