import pytest

from groupmtl.manifests import (
    INVERTED_RECOVERY,
    PLANTED_RECOVERY,
    emit_experiment_manifest,
    manifest_names,
    manifest_seeds,
    parse_manifest,
    recovery_hyper,
    recovery_spec,
)


def test_names():
    assert manifest_names() == sorted(
        ["planted-recovery", "inverted-recovery", "oracle-suite"])


def test_emit_parse_lossless(tmp_path):
    for name in manifest_names():
        path = emit_experiment_manifest(name, tmp_path / f"{name}.txt")
        back = parse_manifest(path)
        if name == "planted-recovery":
            assert back == PLANTED_RECOVERY
        if name == "inverted-recovery":
            assert back == INVERTED_RECOVERY


def test_unknown_name(tmp_path):
    with pytest.raises(ValueError, match="unknown manifest"):
        emit_experiment_manifest("nope", tmp_path / "x.txt")


def test_recovery_spec_and_seeds(tmp_path):
    path = emit_experiment_manifest("planted-recovery", tmp_path / "m.txt")
    manifest = parse_manifest(path)
    seeds = manifest_seeds(manifest)
    assert seeds == list(range(10))
    spec = recovery_spec(manifest, seed=3)
    assert spec.T == 6 and spec.groups == ((0, 1, 2), (3, 4, 5))
    assert spec.seed == 3
    hyper = recovery_hyper(manifest)
    assert hyper.C == manifest["C"]
    assert hyper.orientation == "normal"
    assert recovery_hyper(manifest, eps=1e-2).eps == 1e-2


def test_inverted_orientation():
    assert INVERTED_RECOVERY["orientation"] == "inverted"
    spec = recovery_spec(INVERTED_RECOVERY, seed=0)
    assert spec.groups == ((0, 1, 2, 3, 4, 5),)


def test_malformed_manifest(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("not a key value line\n")
    with pytest.raises(ValueError, match="key=value"):
        parse_manifest(bad)
