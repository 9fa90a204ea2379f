"""
Tests for Artifact Writers

Run tests with: pytest tests/test_artifacts.py
"""

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.artifacts import ArtifactWriter, dumps, ledger_dict, plot_domain, plot_trend, sha256_file, to_jsonable
from src.ledger import ConstantsLedger


# ============================================================================
# Serialization Tests
# ============================================================================


class TestToJsonable:
    """Tests for JSON conversion."""

    def test_numpy_and_python_values(self):
        data = {
            "a": np.float64(1.5),
            "b": np.int64(2),
            "c": (1, 2),
            "d": float("inf"),
            "e": np.array([1, 2]),
            "f": np.bool_(True),
            "g": Path("runs"),
            3: None,
        }

        assert to_jsonable(data) == {
            "a": 1.5,
            "b": 2,
            "c": [1, 2],
            "d": "inf",
            "e": [1, 2],
            "f": True,
            "g": "runs",
            "3": None,
        }

    def test_frames_become_records(self):
        frame = pd.DataFrame({"x": [1.0, 2.0]})
        assert to_jsonable(frame) == [{"x": 1.0}, {"x": 2.0}]

    def test_dumps_sorts_keys(self):
        text = dumps({"b": 1, "a": 2})

        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("\n")


# ============================================================================
# Writer Tests
# ============================================================================


class TestArtifactWriter:
    """Tests for artifact files and the manifest."""

    def test_files_and_manifest(self, tmp_path):
        writer = ArtifactWriter(tmp_path / "run", "whitney")
        writer.json("cells.json", {"cells": 3})
        writer.csv("values.csv", pd.DataFrame({"x": [0.1, 1.0 / 3.0]}))

        manifest = json.loads(writer.manifest({"command": "whitney"}, {"c6": {"value": 0.25}}, seed=4).read_text())

        assert manifest["command"] == "whitney"
        assert manifest["seed"] == 4
        assert manifest["ledger"]["c6"]["value"] == 0.25
        assert sorted(manifest["artifacts"]) == ["cells.json", "values.csv"]
        for name, digest in manifest["artifacts"].items():
            assert digest == sha256_file(tmp_path / "run" / name)

    def test_csv_float_format(self, tmp_path):
        writer = ArtifactWriter(tmp_path, "cubes")

        path = writer.csv("values.csv", pd.DataFrame({"x": [0.1, 1.0 / 3.0]}))

        assert path.read_text() == "x\n0.1\n0.333333333333\n"

    def test_svg_is_byte_stable(self, tmp_path, halfplane):
        first = ArtifactWriter(tmp_path / "a", "gen-domain").svg("domain.svg", plot_domain(halfplane))
        second = ArtifactWriter(tmp_path / "b", "gen-domain").svg("domain.svg", plot_domain(halfplane))

        assert first.read_bytes() == second.read_bytes()


# ============================================================================
# Figure and Ledger Tests
# ============================================================================


def test_trend_plot_draws_one_line_per_group():
    frame = pd.DataFrame({"level": [2, 3, 2, 3], "value": [1.0, 1.1, 1.0, 2.0], "lam": [0.2, 0.2, 0.3, 0.3]})

    fig = plot_trend(frame, "level", "value", "lam", logy=True)

    assert len(fig.axes[0].get_lines()) == 2
    assert fig.axes[0].get_yscale() == "log"


def test_ledger_dict_concatenates():
    ledger = ConstantsLedger()
    ledger.record("c6", 0.25, "fixed")
    other = ConstantsLedger()
    other.record("c7", 3.125, "fixed")

    merged = ledger_dict(None, ledger, other)

    assert [c["name"] for c in merged["constants"]] == ["c6", "c7"]
    assert merged["constants"][0]["value"] == pytest.approx(0.25)
