from __future__ import annotations

import numpy as np
import pytest

from codesign_lab.lowprec import format_error_stats
from codesign_lab.lowprec.stats import roundtrip, sample_blocks


def test_deterministic():
    a = format_error_stats("lognormal", "LogFMT-8", blocks=50, seed=3, rounding="stochastic")
    b = format_error_stats("lognormal", "LogFMT-8", blocks=50, seed=3, rounding="stochastic")
    assert a == b


def test_same_source_for_every_codec():
    x1 = sample_blocks("normal", 10, 5)
    x2 = sample_blocks("normal", 10, 5)
    assert np.array_equal(x1, x2)


def test_error_ordering():
    rel = {c: format_error_stats("lognormal", c, 300).mean_rel_error for c in ("LogFMT-10", "LogFMT-8", "E4M3", "E5M2")}
    assert rel["LogFMT-10"] < rel["LogFMT-8"] < rel["E4M3"] < rel["E5M2"]


def test_unknown_inputs():
    with pytest.raises(ValueError):
        sample_blocks("cauchy", 1, 0)
    with pytest.raises(ValueError):
        roundtrip("INT8", np.ones((1, 128)))
