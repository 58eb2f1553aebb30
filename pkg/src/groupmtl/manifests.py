"""Versioned experiment manifests so the acceptance experiments are
re-runnable from data files rather than constants buried in test code."""

from __future__ import annotations

from pathlib import Path

from .data import SyntheticSpec
from .inner import Hyperparams

MANIFEST_VERSION = 1

# The two planted-structure experiments. The synthetic spec fields are part
# of the acceptance contract; the hyperparameters are the tuned defaults the
# experiments are run with.
PLANTED_RECOVERY = {
    "name": "planted-recovery",
    "version": MANIFEST_VERSION,
    "T": 6,
    "groups": "3,3",
    "dim": 30,
    "k_shared": 5,
    "m": 40,
    "m_test": 200,
    "weight_jitter": 0.05,
    "noise_rate": 0.05,
    "seeds": "0,1,2,3,4,5,6,7,8,9",
    "C": 1.0,
    "mu": 0.1,
    "p": 1.5,
    "q": 2.0,
    "a": 1.0,
    "eps": 1e-3,
    "orientation": "normal",
}

INVERTED_RECOVERY = {
    "name": "inverted-recovery",
    "version": MANIFEST_VERSION,
    "T": 6,
    "groups": "6",
    "dim": 30,
    "k_shared": 5,
    "m": 40,
    "m_test": 200,
    "weight_jitter": 0.02,
    "noise_rate": 0.05,
    "seeds": "0,1,2,3,4,5,6,7,8,9",
    "C": 10.0,
    "mu": 0.1,
    "p": 1.5,
    "q": 1.5,
    "a": 1.5,
    "eps": 1e-3,
    "orientation": "inverted",
}

ORACLE_SUITE = {
    "name": "oracle-suite",
    "version": MANIFEST_VERSION,
    "lattice_instances": 100,
    "lattice_max_T": 12,
    "reduction_seeds": 5,
    "gradient_points": 10,
    "full_lattice_instances": 5,
    "full_lattice_T": 3,
    "full_lattice_m": 10,
    "full_lattice_n_kernels": 3,
    "eps": 1e-3,
}

_MANIFESTS = {
    m["name"]: m for m in (PLANTED_RECOVERY, INVERTED_RECOVERY, ORACLE_SUITE)
}


def manifest_names() -> list[str]:
    return sorted(_MANIFESTS)


def emit_experiment_manifest(name: str, path: str | Path) -> Path:
    if name not in _MANIFESTS:
        raise ValueError(
            f"unknown manifest {name!r}; choose from {manifest_names()}")
    manifest = _MANIFESTS[name]
    path = Path(path)
    lines = [f"{key}={value!r}" for key, value in manifest.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def parse_manifest(path: str | Path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = _parse_value(value.strip())
    return out


def _parse_value(text: str):
    if text.startswith(("'", '"')) and text.endswith(text[0]) and len(text) >= 2:
        return text[1:-1]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def recovery_spec(manifest: dict, seed: int) -> SyntheticSpec:
    sizes = [int(s) for s in str(manifest["groups"]).split(",")]
    groups, pos = [], 0
    for s in sizes:
        groups.append(tuple(range(pos, pos + s)))
        pos += s
    return SyntheticSpec(
        T=int(manifest["T"]),
        groups=tuple(groups),
        dim=int(manifest["dim"]),
        k_shared=int(manifest["k_shared"]),
        m=int(manifest["m"]),
        m_test=int(manifest["m_test"]),
        weight_jitter=float(manifest["weight_jitter"]),
        noise_rate=float(manifest["noise_rate"]),
        seed=seed,
    )


def recovery_hyper(manifest: dict, **overrides) -> Hyperparams:
    kw = dict(
        C=float(manifest["C"]),
        mu=float(manifest["mu"]),
        p=float(manifest["p"]),
        q=float(manifest["q"]),
        a=float(manifest["a"]),
        eps=float(manifest["eps"]),
        orientation=str(manifest["orientation"]),
    )
    kw.update(overrides)
    return Hyperparams(**kw)


def manifest_seeds(manifest: dict) -> list[int]:
    return [int(s) for s in str(manifest["seeds"]).split(",")]
