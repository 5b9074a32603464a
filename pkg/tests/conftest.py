"""Shared fixtures: a no-simulation constants provider and a CLI runner."""

import json
import subprocess
import sys

import pytest

from fbmlab.constants import ConstantEstimate, ConstantsProvider


def make_stub_provider(**pickands_values):
    """Provider preloaded with fake simulated Pickands values, keyed by H.

    Closed forms still short-circuit H = 1/2, so only the H values passed
    here can be requested without touching a sampler.
    """
    provider = ConstantsProvider(policy="closed_form_first")
    for H, value in pickands_values.items():
        provider.inject(
            ConstantEstimate(
                kind="pickands",
                H=float(H),
                nu=None,
                b=8.0,
                eta=2.0**-8,
                n_sim=1000,
                value=float(value),
                std_error=0.01,
                provenance="simulated",
                seed=0,
            )
        )
    return provider


@pytest.fixture
def stub_constants():
    return make_stub_provider(**{"0.3": 1.6, "0.25": 1.8, "0.35": 1.5, "0.2": 2.0, "0.1": 3.0, "0.4": 1.3})


def run_cli(*argv, env=None):
    """Run the CLI in a subprocess; returns (exit_code, stdout, stderr)."""
    proc = subprocess.run(
        [sys.executable, "-m", "fbmlab.cli", *map(str, argv)],
        capture_output=True,
        text=True,
        env=env,
    )
    return proc.returncode, proc.stdout, proc.stderr


def json_lines(stdout):
    return [json.loads(line) for line in stdout.splitlines() if line.strip()]


@pytest.fixture
def cli():
    return run_cli
