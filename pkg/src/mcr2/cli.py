"""Command line front end: ``mcr2 {simulate,verify,optimize,train,eval}``.

Every command reads an optional JSON config (``schema_version`` 1, unknown
keys rejected), writes its artifacts under ``--out`` and always leaves a
``manifest.json`` there once the runner starts.  Exit codes: 0 success,
1 runtime or I/O failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, io, learn, metrics, rates, synth, theory, verify
from .errors import InvalidInputError
from .rates import RateParams

SCHEMA_VERSION = 1
EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
COMMANDS = ("simulate", "verify", "optimize", "train", "eval")


class ConfigError(InvalidInputError):
    """Config file or command line values are unusable."""


# ---------------------------------------------------------------------------
# config helpers


def _fields(raw, where: str, allowed: dict, required=()) -> dict:
    """Merge ``raw`` over ``allowed`` defaults, rejecting unknown or missing keys."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    missing = [k for k in required if k not in raw]
    if missing:
        raise ConfigError(f"{where}: missing keys {missing}")
    out = dict(allowed)
    out.update(raw)
    return out


def _int(v, where, lo=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}: expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{where}: must be >= {lo}, got {v}")
    return v


def _float(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _rate_params(raw, log_base_override) -> RateParams:
    r = _fields(raw, "rate", {"eps_sq": 0.5, "log_base": "bits"})
    if log_base_override:
        r["log_base"] = log_base_override
    try:
        return RateParams(_float(r["eps_sq"], "rate.eps_sq"), r["log_base"])
    except InvalidInputError as exc:
        raise ConfigError(f"rate: {exc}") from exc


def _optimizer(raw, seed) -> learn.OptimizerConfig:
    defaults = {k: getattr(learn.OptimizerConfig(), k) for k in
                ("step_size", "max_iters", "tol", "normalization", "use_ctrl", "gamma1", "gamma2")}
    o = _fields(raw, "optimizer", defaults)
    try:
        return learn.OptimizerConfig(
            step_size=_float(o["step_size"], "optimizer.step_size"),
            max_iters=_int(o["max_iters"], "optimizer.max_iters", 0),
            tol=_float(o["tol"], "optimizer.tol"),
            normalization=o["normalization"],
            use_ctrl=bool(o["use_ctrl"]),
            gamma1=_float(o["gamma1"], "optimizer.gamma1"),
            gamma2=_float(o["gamma2"], "optimizer.gamma2"),
            seed=seed,
        )
    except InvalidInputError as exc:
        raise ConfigError(f"optimizer: {exc}") from exc


def _mixture_spec(raw, where, seed) -> synth.SubspaceMixtureSpec:
    s = _fields(raw, where, {"source": None, "k": 10, "d": None, "d_j": None, "samples_per_class": 100,
                             "orthogonal": True}, required=("d", "d_j"))
    try:
        return synth.SubspaceMixtureSpec(
            _int(s["k"], f"{where}.k"), _int(s["d"], f"{where}.d"), _int(s["d_j"], f"{where}.d_j"),
            _int(s["samples_per_class"], f"{where}.samples_per_class"), bool(s["orthogonal"]),
            ambient_is_input=True, seed=seed,
        )
    except InvalidInputError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path, command: str, seed_override, log_base_override) -> dict:
    """Parse and validate a config into ready-to-use objects."""
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
    if raw.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {raw.get('schema_version')!r}")

    per_command = {
        "simulate": {"specs": [], "n_seeds": 1, "workers": 1},
        "verify": {"suite": "all", "trials": 100},
        "optimize": {"optimizer": None, "data": None},
        "train": {"optimizer": None, "network": None, "data": None, "holdout_fraction": 0.25,
                  "corruption": None, "eval": None},
        "eval": {"truth": None, "predictions": None, "features": None, "kmeans": None, "k": None},
    }[command]
    allowed = {"schema_version": SCHEMA_VERSION, "command": command, "seed": 0, "rate": None, **per_command}
    cfg = _fields(raw, "config", allowed)
    if cfg["command"] != command:
        raise ConfigError(f"config is for command {cfg['command']!r}, not {command!r}")
    if seed_override is not None:
        cfg["seed"] = seed_override
    cfg["seed"] = _int(cfg["seed"], "seed", 0)
    cfg["rate"] = _rate_params(cfg["rate"], log_base_override)
    return cfg


def _echo(cfg) -> dict:
    out = {}
    for k, v in cfg.items():
        out[k] = v.to_dict() if hasattr(v, "to_dict") else v
    return out


# ---------------------------------------------------------------------------
# runners


class Run:
    """Collects outputs and seeds for the manifest."""

    def __init__(self, out_dir: Path, command: str, cfg: dict):
        self.out, self.command, self.cfg = out_dir, command, cfg
        self.outputs: list[str] = []
        self.seeds: list[int] = [cfg["seed"]]

    def path(self, name: str) -> Path:
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(name)
        return p

    def manifest(self, status: str, exit_code: int, error: str | None) -> dict:
        return {
            "command": self.command,
            "tool": "mcr2",
            "version": __version__,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "config": _echo(self.cfg),
            "seeds": sorted(set(self.seeds)),
            "outputs": self.outputs,
            "status": status,
            "exit_code": exit_code,
            "error": error,
        }


def _simulate_cell(spec_raw, idx, seed, params):
    """One (spec, seed) cell; returns a row dict or an error string."""
    where = f"specs[{idx}]"
    try:
        if not isinstance(spec_raw, dict):
            raise ConfigError(f"{where}: expected an object")
        kind = spec_raw.get("kind", "subspace")
        spec_id = str(spec_raw.get("id", f"spec{idx}"))
        body = {k: v for k, v in spec_raw.items() if k not in ("id", "kind")}
        if kind == "gaussian":
            g = _fields(body, where, {"d": None, "m": 1000, "k": 10}, required=("d",))
            Z, labels = synth.gen_gaussian(_int(g["d"], f"{where}.d", 1), _int(g["m"], f"{where}.m", 1),
                                           _int(g["k"], f"{where}.k", 1), seed)
            k, d, dj, orth = g["k"], g["d"], "", ""
        elif kind == "subspace":
            spec = _mixture_spec(body, where, seed)
            Z, labels = synth.gen_subspace_mixture(spec)
            k, d, dj, orth = spec.k, spec.d, spec.d_j, spec.orthogonal
        else:
            raise ConfigError(f"{where}: unknown kind {kind!r}")
        rep = rates.rate_reduction(Z, synth.membership_from_labels(labels, k), params)
        return {"spec_id": spec_id, "seed": seed, "d": d, "d_j": dj, "orthogonal": orth,
                "R": rep.rate_whole, "Rc": rep.rate_segmented, "DeltaR": rep.reduction}
    except (InvalidInputError, ArithmeticError, ValueError) as exc:
        return {"spec_id": str(spec_raw.get("id", f"spec{idx}")) if isinstance(spec_raw, dict) else f"spec{idx}",
                "seed": seed, "error": str(exc)}


def run_simulate(run: Run) -> int:
    cfg = run.cfg
    specs = cfg["specs"]
    if not isinstance(specs, list):
        raise ConfigError("specs: expected a list")
    n_seeds = _int(cfg["n_seeds"], "n_seeds", 1)
    workers = _int(cfg["workers"], "workers", 1)
    seeds = [cfg["seed"] + i for i in range(n_seeds)]
    run.seeds = seeds
    cells = [(s, i, seed) for i, s in enumerate(specs) for seed in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda c: _simulate_cell(*c, cfg["rate"]), cells))

    cols = ["spec_id", "seed", "d", "d_j", "orthogonal", "R", "Rc", "DeltaR"]
    lines = [",".join(cols)]
    errors = [r for r in results if "error" in r]
    for i in range(len(specs)):
        rows = [r for r in results[i * n_seeds:(i + 1) * n_seeds] if "error" not in r]
        for r in rows:
            lines.append(_sim_line(r))
        if rows:
            mean = dict(rows[0], seed="mean")
            for key in ("R", "Rc", "DeltaR"):
                mean[key] = float(np.mean([r[key] for r in rows]))
            lines.append(_sim_line(mean))
            print(f"{mean['spec_id']}: R={mean['R']:.2f} Rc={mean['Rc']:.2f} DeltaR={mean['DeltaR']:.2f}"
                  f" ({len(rows)} seeds)")
    run.path("rates.csv").write_text("\n".join(lines) + "\n")
    if errors:
        io.write_json(run.path("errors.json"), errors)
        for e in errors:
            print(f"error in {e['spec_id']} seed {e['seed']}: {e['error']}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{len(results)} cells written")
    return EXIT_OK


def _sim_line(r) -> str:
    vals = [r["spec_id"], str(r["seed"]), str(r["d"]), str(r["d_j"]), str(r["orthogonal"]).lower()]
    vals += [io.format_float(r[k]) for k in ("R", "Rc", "DeltaR")]
    return ",".join(vals)


def run_verify(run: Run) -> int:
    cfg = run.cfg
    results = verify.run_suite(cfg["suite"], cfg["trials"], cfg["seed"])
    ok = all(r.passed for r in results)
    report = {"suite": cfg["suite"], "trials": cfg["trials"], "seed": cfg["seed"], "passed": ok,
              "properties": [r.to_dict() for r in results]}
    io.write_json(run.path("verify.json"), report)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} worst_slack={r.worst_slack:.3e}")
    return EXIT_OK if ok else EXIT_RUNTIME


def _load_data(raw, where, seed, sources):
    """Return (X, labels, k) for a ``data`` section."""
    if not isinstance(raw, dict) or "source" not in raw:
        raise ConfigError(f"{where}: needs a 'source' key, one of {sorted(sources)}")
    src = raw["source"]
    if src not in sources:
        raise ConfigError(f"{where}: unknown source {src!r}")
    if src == "files":
        f = _fields(raw, where, {"source": None, "features": None, "labels": None, "k": None},
                    required=("features", "labels"))
        X = io.read_matrix(f["features"])
        labels = io.read_labels(f["labels"])
        if labels.size != X.shape[1]:
            raise InvalidInputError(f"{labels.size} labels for {X.shape[1]} samples")
        k = f["k"] if f["k"] is not None else int(labels.max()) + 1
        return X, synth.check_labels(labels, k), k
    if src == "random_sphere":
        f = _fields(raw, where, {"source": None, "d": None, "samples_per_class": None},
                    required=("d", "samples_per_class"))
        sizes = f["samples_per_class"]
        if not isinstance(sizes, list) or not sizes:
            raise ConfigError(f"{where}.samples_per_class: expected a nonempty list")
        sizes = [_int(s, f"{where}.samples_per_class", 1) for s in sizes]
        labels = np.repeat(np.arange(len(sizes)), sizes)
        return synth.random_sphere(_int(f["d"], f"{where}.d", 1), labels.size, seed), labels, len(sizes)
    if src == "subspace_mixture":
        spec = _mixture_spec(raw, where, seed)
        X, labels = synth.gen_subspace_mixture(spec)
        return X, labels, spec.k
    f = _fields(raw, where, {"source": None, "m_per_class": 100, "radii": [1.0, 2.0], "noise": 0.05})
    X, labels = synth.two_circles(_int(f["m_per_class"], f"{where}.m_per_class", 1), tuple(f["radii"]),
                                  _float(f["noise"], f"{where}.noise"), seed)
    return X, labels, len(f["radii"])


def run_optimize(run: Run) -> int:
    cfg = run.cfg
    opt = _optimizer(cfg["optimizer"], cfg["seed"])
    Z0, labels, k = _load_data(cfg["data"], "data", cfg["seed"], {"files", "random_sphere", "subspace_mixture"})
    pi = synth.membership_from_labels(labels, k)
    Z, trace = learn.optimize_representation(Z0, pi, cfg["rate"], opt)
    io.write_matrix(run.path("Z.csv"), Z)
    io.write_labels(run.path("labels.csv"), labels)
    run.path("trace.csv").write_text(trace.to_csv())
    diag = theory.diagnose_optimum(Z, pi, cfg["rate"])
    last = trace.records[-1]
    report = {"diagnostics": diag.to_dict(), "final": {"R": last.R, "Rc": last.Rc, "DeltaR": last.DeltaR},
              "iterations": len(trace) - 1}
    sizes = np.bincount(labels, minlength=k)
    if np.all(sizes > 0):
        report["oracle_DeltaR"] = theory.optimal_rate_reduction(sizes.tolist(), Z.shape[0], cfg["rate"])
    io.write_json(run.path("diagnostics.json"), report)
    print(f"DeltaR={last.DeltaR:.6g} after {len(trace) - 1} iterations;"
          f" max inter-class cosine {diag.max_interclass_cosine:.3e}")
    return EXIT_OK


def _split(labels, fraction, seed):
    """Stratified train/held-out index split."""
    if not 0.0 <= fraction < 1.0:
        raise ConfigError(f"holdout_fraction must lie in [0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    train, held = [], []
    for j in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == j))
        n_held = int(np.floor(fraction * idx.size))
        held.extend(idx[:n_held])
        train.extend(idx[n_held:])
    return np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(held, dtype=np.int64))


def run_train(run: Run) -> int:
    cfg = run.cfg
    seed = cfg["seed"]
    opt = _optimizer(cfg["optimizer"], seed)
    X, labels, k = _load_data(cfg["data"], "data", seed, {"files", "two_circles", "subspace_mixture"})
    net = _fields(cfg["network"], "network", {"layer_widths": None, "seed": None}, required=("layer_widths",))
    widths = list(net["layer_widths"])
    if widths and widths[0] != X.shape[0]:
        raise ConfigError(f"network.layer_widths[0]={widths[0]} but data has dimension {X.shape[0]}")
    corr = _fields(cfg["corruption"], "corruption", {"ratio": 0.0, "seed": None})
    ev = _fields(cfg["eval"], "eval", {"r_j": None})

    net_seed = seed if net["seed"] is None else _int(net["seed"], "network.seed", 0)
    corr_seed = seed + 1 if corr["seed"] is None else _int(corr["seed"], "corruption.seed", 0)
    run.seeds += [net_seed, corr_seed]
    tr, ho = _split(labels, _float(cfg["holdout_fraction"], "holdout_fraction"), seed)
    ratio = _float(corr["ratio"], "corruption.ratio")
    y_train = synth.corrupt_labels(labels[tr], ratio, k, corr_seed)

    params0 = learn.init_feature_map(widths, net_seed)
    params, trace = learn.train_feature_map(params0, X[:, tr], synth.membership_from_labels(y_train, k),
                                            cfg["rate"], opt)
    r_j = ev["r_j"] if ev["r_j"] is not None else max(1, widths[-1] // k)
    Z_tr = learn.feature_map_forward(params, X[:, tr])
    models = metrics.fit_class_models(Z_tr, y_train, _int(r_j, "eval.r_j", 1), k)
    train_acc = float(np.mean(metrics.nearest_subspace_predict_batch(models, Z_tr) == labels[tr]))
    held_acc = None
    if ho.size:
        Z_ho = learn.feature_map_forward(params, X[:, ho])
        held_acc = float(np.mean(metrics.nearest_subspace_predict_batch(models, Z_ho) == labels[ho]))

    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        io.write_matrix(run.path(f"params/layer{i}_weight.csv"), W.T)
        io.write_matrix(run.path(f"params/layer{i}_bias.csv"), b.reshape(-1, 1))
    run.path("trace.csv").write_text(trace.to_csv())
    last = trace.records[-1]
    report = {"train_accuracy": train_acc, "heldout_accuracy": held_acc, "r_j": r_j,
              "n_train": int(tr.size), "n_heldout": int(ho.size), "corruption_ratio": ratio,
              "use_ctrl": opt.use_ctrl, "iterations": len(trace) - 1,
              "final": {"R": last.R, "Rc": last.Rc, "DeltaR": last.DeltaR}}
    io.write_json(run.path("eval.json"), report)
    held = "n/a" if held_acc is None else f"{held_acc:.4f}"
    print(f"train accuracy {train_acc:.4f}, held-out {held}, final Rc={last.Rc:.6g} DeltaR={last.DeltaR:.6g}")
    return EXIT_OK


def run_eval(run: Run) -> int:
    cfg = run.cfg
    if cfg["truth"] is None:
        raise ConfigError("eval needs 'truth'")
    if (cfg["predictions"] is None) == (cfg["features"] is None):
        raise ConfigError("eval needs exactly one of 'predictions' or 'features'")
    truth = io.read_labels(cfg["truth"])
    k = None if cfg["k"] is None else _int(cfg["k"], "k", 1)
    if cfg["predictions"] is not None:
        pred = io.read_labels(cfg["predictions"])
    else:
        km = _fields(cfg["kmeans"], "kmeans", {"k": None, "restarts": 10, "max_iters": 300})
        X = io.read_matrix(cfg["features"])
        n_clusters = km["k"] or k or int(truth.max()) + 1
        pred = metrics.kmeans(X, _int(n_clusters, "kmeans.k", 1), cfg["seed"],
                              _int(km["max_iters"], "kmeans.max_iters", 1), _int(km["restarts"], "kmeans.restarts", 1))
        io.write_labels(run.path("predictions.csv"), pred)
    rep = metrics.evaluate(truth, pred, k)
    io.write_json(run.path("metrics.json"), rep.to_dict())
    print(f"NMI={rep.nmi:.6f} ACC={rep.acc:.6f} ARI={rep.ari:.6f}")
    return EXIT_OK


RUNNERS = {"simulate": run_simulate, "verify": run_verify, "optimize": run_optimize,
           "train": run_train, "eval": run_eval}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="JSON config file")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    common.add_argument("--log-base", choices=("bits", "nats"), default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="mcr2", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--log-base", choices=("bits", "nats"), default=None,
                        help="override the log base of every rate")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "verify":
            p.add_argument("--suite", choices=("lemmas", "theorem", "gradients", "metrics", "all"), default=None)
            p.add_argument("--trials", type=int, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        if args.command != "verify" and args.config is None:
            raise ConfigError(f"{args.command} needs --config")
        cfg = load_config(args.config, args.command, args.seed, args.log_base)
        if args.command == "verify":
            if args.suite is not None:
                cfg["suite"] = args.suite
            if args.trials is not None:
                cfg["trials"] = args.trials
            if cfg["suite"] not in ("lemmas", "theorem", "gradients", "metrics", "all"):
                raise ConfigError(f"unknown suite {cfg['suite']!r}")
            _int(cfg["trials"], "trials", 1)
    except ConfigError as exc:
        print(f"mcr2 {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"mcr2 {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    try:
        args.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"mcr2 {args.command}: cannot create {args.out}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    run = Run(args.out, args.command, cfg)
    code, error = EXIT_RUNTIME, None
    try:
        code = RUNNERS[args.command](run)
    except ConfigError as exc:
        code, error = EXIT_USAGE, str(exc)
    except (OSError, InvalidInputError, ArithmeticError, RuntimeError, ValueError) as exc:
        code, error = EXIT_RUNTIME, f"{type(exc).__name__}: {exc}"
    finally:
        status = "ok" if code == EXIT_OK else "failed"
        io.write_json(args.out / "manifest.json", run.manifest(status, code, error))
    if error:
        print(f"mcr2 {args.command}: {error}", file=sys.stderr)
    return code


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
