"""Command-line interface: train, predict, eval, synth, bench.

Exit codes: 0 success (train: certified fit), 2 usage or input error,
3 completed but not certified.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import model as model_mod
from .data import (
    DataError,
    DatasetBundle,
    SyntheticSpec,
    accuracy,
    auc,
    generate_synthetic,
    load_dataset,
    save_dataset,
    standardize,
)
from .inner import Hyperparams
from .kernels import linear_feature_specs
from .lattice import TaskGroup
from .manifests import MANIFEST_VERSION

log = logging.getLogger("groupmtl")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_UNCERTIFIED = 3

# §-style presets: decades of C and mu
C_GRID = tuple(10.0**k for k in range(-3, 4))
MU_GRID = tuple(10.0**k for k in range(-3, 2))

GAMMA_SELECT_THRESHOLD = 0.05


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _read_config(path: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    # a config file supplies defaults; explicit flags win
    ns, _ = parser.parse_known_args(argv)
    if getattr(ns, "config", None):
        cfg = _read_config(ns.config)
        actions = {a.dest: a for a in parser._actions}
        sub = next((a for a in parser._actions
                    if isinstance(a, argparse._SubParsersAction)), None)
        if sub is not None and ns.command in sub.choices:
            actions.update({a.dest: a for a in sub.choices[ns.command]._actions})
        unknown = set(cfg) - set(actions)
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        coerced = {}
        for key, raw in cfg.items():
            action = actions[key]
            if isinstance(action, (argparse._StoreTrueAction,
                                   argparse._StoreFalseAction)):
                coerced[key] = raw.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                try:
                    coerced[key] = action.type(raw)
                except ValueError as exc:
                    raise CliError(f"config key {key}: {exc}") from exc
            else:
                coerced[key] = raw
        parser.set_defaults(**coerced)
        if sub is not None and ns.command in sub.choices:
            sub.choices[ns.command].set_defaults(**coerced)
    return parser.parse_args(argv)


def _add_hyper_flags(p: argparse.ArgumentParser):
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--p", type=float, default=1.5)
    p.add_argument("--q", type=float, default=1.5)
    p.add_argument("--a", type=float, default=1.5)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--orientation", choices=("normal", "inverted"),
                   default="normal")
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--max-rounds", type=int, default=64)
    p.add_argument("--max-active", type=int, default=512)
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--config", default=None,
                   help="key=value file supplying flag defaults")


def _hyper_from_flags(ns: argparse.Namespace) -> Hyperparams:
    try:
        return Hyperparams(
            C=float(ns.C), mu=float(ns.mu), p=float(ns.p), q=float(ns.q),
            a=float(ns.a), eps=float(ns.eps),
            orientation=ns.orientation,
            top_k=None if ns.top_k in (None, "none") else int(ns.top_k),
            max_rounds=int(ns.max_rounds), max_active=int(ns.max_active),
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _load(path: str) -> DatasetBundle:
    try:
        return load_dataset(path)
    except (DataError, OSError) as exc:
        raise CliError(f"data: {exc}") from exc


def _fit_one(bundle: DatasetBundle, hyper: Hyperparams, kind: str,
             no_standardize: bool):
    tf = None
    if not no_standardize:
        _, tf = standardize(bundle)
    if kind == "stl":
        return model_mod.baseline_stl(bundle, hyper, standardizer=tf)
    if kind == "mtl":
        return model_mod.baseline_single_group_mtl(bundle, hyper,
                                                   standardizer=tf)
    return model_mod.fit(bundle, hyper, standardizer=tf)


def cmd_train(ns: argparse.Namespace) -> int:
    bundle = _load(ns.data)
    hyper = _hyper_from_flags(ns)
    model = _fit_one(bundle, hyper, "grouped", ns.no_standardize)
    model_mod.serialize(model, ns.out)
    for blk_groups in model.selected_groups():
        for w, g in blk_groups:
            print(f"group={'+'.join(str(t) for t in w)} gamma={g:.6g}")
    print(f"certified={str(model.certified).lower()} "
          f"gap_bound={model.gap_bound:.6g} rounds={model.rounds} "
          f"model={ns.out}")
    return EXIT_OK if model.certified else EXIT_UNCERTIFIED


def _dataset_is_empty(path: str) -> bool:
    p = Path(path)
    if p.is_dir():
        return False
    lines = [ln for ln in p.read_text().splitlines() if ln.strip()]
    return len(lines) <= 1


def cmd_predict(ns: argparse.Namespace) -> int:
    try:
        model = model_mod.deserialize(ns.model)
    except model_mod.ModelFormatError as exc:
        raise CliError(f"model: {exc}") from exc
    out = open(ns.out, "w") if ns.out else sys.stdout
    try:
        print("task,score,label", file=out)
        if _dataset_is_empty(ns.data):
            return EXIT_OK
        bundle = _load(ns.data)
        if bundle.dim != model.dim:
            raise CliError(
                f"dimension mismatch: model expects {model.dim} features, "
                f"data has {bundle.dim}")
        if bundle.T > model.T:
            raise CliError(
                f"dataset has {bundle.T} tasks, model covers {model.T}")
        for t in range(bundle.T):
            scores = model_mod.decision_function(model, t, bundle.xs[t])
            labels = np.where(scores >= 0.0, 1, -1)
            for s, lbl in zip(scores, labels):
                print(f"{bundle.task_names[t]},{float(s)!r},{lbl}", file=out)
    finally:
        if ns.out:
            out.close()
    return EXIT_OK


def _eval_model(model, bundle):
    """Per-task (auc, acc) lists; auc is None on single-class tasks."""
    rows = []
    for t in range(bundle.T):
        scores = model_mod.decision_function(model, t, bundle.xs[t])
        labels = bundle.ys[t]
        acc = accuracy(scores, labels)
        if np.unique(labels).size < 2:
            rows.append((bundle.task_names[t], None, acc))
        else:
            rows.append((bundle.task_names[t], auc(scores, labels), acc))
    return rows


def cmd_eval(ns: argparse.Namespace) -> int:
    try:
        model = model_mod.deserialize(ns.model)
    except model_mod.ModelFormatError as exc:
        raise CliError(f"model: {exc}") from exc
    bundle = _load(ns.data)
    if bundle.dim != model.dim:
        raise CliError("dimension mismatch between model and data")
    rows = _eval_model(model, bundle)
    aucs = []
    accs = []
    for name, a, acc in rows:
        accs.append(acc)
        if a is None:
            print(f"task={name} auc=omitted reason=single-class acc={acc:.6g}")
        else:
            aucs.append(a)
            print(f"task={name} auc={a:.6g} acc={acc:.6g}")
    macro_auc = float(np.mean(aucs)) if aucs else float("nan")
    print(f"auc_macro={macro_auc:.6g} acc_macro={float(np.mean(accs)):.6g}")
    return EXIT_OK


def _parse_groups(text: str, T: int) -> tuple[tuple[int, ...], ...]:
    try:
        sizes = [int(x) for x in text.split(",")]
    except ValueError as exc:
        raise CliError(f"bad --groups value: {text!r}") from exc
    if sum(sizes) != T or any(s <= 0 for s in sizes):
        raise CliError(f"--groups {text} does not partition {T} tasks")
    groups, pos = [], 0
    for s in sizes:
        groups.append(tuple(range(pos, pos + s)))
        pos += s
    return tuple(groups)


def _synth_spec(ns: argparse.Namespace, seed: int) -> SyntheticSpec:
    try:
        return SyntheticSpec(
            T=ns.T,
            groups=_parse_groups(ns.groups, ns.T),
            dim=ns.dim,
            k_shared=ns.kshared,
            m=ns.m,
            m_test=ns.mtest,
            weight_jitter=ns.jitter,
            noise_rate=ns.noise,
            seed=seed,
        )
    except (DataError, ValueError) as exc:
        raise CliError(str(exc)) from exc


def _write_truth(path: Path, spec: SyntheticSpec, truth) -> None:
    lines = [
        f"version={MANIFEST_VERSION}",
        f"T={spec.T}",
        f"dim={spec.dim}",
        f"k_shared={spec.k_shared}",
        f"seed={spec.seed}",
        f"n_groups={len(spec.groups)}",
    ]
    for i, (g, feats) in enumerate(zip(spec.groups, truth.feature_masks)):
        lines.append(f"group{i}={','.join(str(t) for t in g)}")
        lines.append(f"features{i}={','.join(str(f) for f in feats)}")
    path.write_text("\n".join(lines) + "\n")


def cmd_synth(ns: argparse.Namespace) -> int:
    spec = _synth_spec(ns, ns.seed)
    train, test, truth = generate_synthetic(spec)
    prefix = Path(ns.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(train, prefix.with_name(prefix.name + "_train.csv"))
    save_dataset(test, prefix.with_name(prefix.name + "_test.csv"))
    _write_truth(prefix.with_name(prefix.name + "_truth.txt"), spec, truth)
    print(f"written={prefix}_train.csv,{prefix}_test.csv,{prefix}_truth.txt")
    return EXIT_OK


def _macro_auc(model, bundle) -> float:
    vals = [a for _, a, _ in _eval_model(model, bundle) if a is not None]
    return float(np.mean(vals)) if vals else float("nan")


def _recovered_report(model, spec: SyntheticSpec) -> list[str]:
    selected = {
        w: g for blk in model.selected_groups() for w, g in blk
    }
    lines = []
    for i, g in enumerate(spec.groups):
        node = TaskGroup.of(g)
        gamma = selected.get(node, 0.0)
        found = gamma >= GAMMA_SELECT_THRESHOLD
        lines.append(
            f"planted_group={'+'.join(map(str, g))} "
            f"recovered={str(found).lower()} gamma={gamma:.6g}")
    return lines


def cmd_bench(ns: argparse.Namespace) -> int:
    hyper = _hyper_from_flags(ns)
    methods = [m.strip() for m in ns.methods.split(",") if m.strip()]
    for m in methods:
        if m not in ("grouped", "stl", "mtl"):
            raise CliError(f"unknown method {m!r}")
    seeds = list(range(ns.seeds))
    results: dict[str, list[float]] = {m: [] for m in methods}
    reports: list[str] = []
    for seed in seeds:
        if ns.data:
            train = _load(ns.data)
            test = _load(ns.test) if ns.test else train
            spec = None
        else:
            spec = _synth_spec(ns, seed)
            train, test, _ = generate_synthetic(spec)
        for m in methods:
            model = _fit_one(train, hyper, m, ns.no_standardize)
            results[m].append(_macro_auc(model, test))
            if m == "grouped" and spec is not None:
                reports.extend(
                    f"seed={seed} {line}" for line in _recovered_report(model, spec)
                )
    for m in methods:
        vals = np.array(results[m])
        print(f"method={m} auc_mean={vals.mean():.6g} "
              f"auc_std={vals.std():.6g} seeds={len(vals)}")
    for line in reports:
        print(line)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="groupmtl",
        description="multi-task kernel learning with task-group discovery",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a grouped multi-task model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_hyper_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score samples with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="AUC/accuracy report on labeled data")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a planted-structure dataset")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--groups", required=True,
                   help="comma-separated group sizes, e.g. 3,3")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--kshared", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--mtest", type=int, default=200)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--jitter", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="compare grouped vs baseline methods")
    p.add_argument("--data", default=None)
    p.add_argument("--test", default=None)
    p.add_argument("--methods", default="grouped,stl,mtl")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--T", type=int, default=6)
    p.add_argument("--groups", default="3,3")
    p.add_argument("--dim", type=int, default=30)
    p.add_argument("--kshared", type=int, default=5)
    p.add_argument("--m", type=int, default=40)
    p.add_argument("--mtest", type=int, default=200)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--jitter", type=float, default=0.1)
    _add_hyper_flags(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        ns = _apply_config(parser, argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    logging.basicConfig(
        level=logging.DEBUG if ns.verbose else logging.INFO,
        format="%(message)s",
    )
    try:
        return ns.func(ns)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (DataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
