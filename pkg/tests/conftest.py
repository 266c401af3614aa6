"""Shared fixtures and hypothesis profiles."""

import os
from datetime import timedelta

import pytest
from hypothesis import settings

settings.register_profile("ci", deadline=timedelta(milliseconds=2000))
settings.register_profile("dev", max_examples=25)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "ci"))


@pytest.fixture
def tmp_out(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    return out
