"""Acceptance criteria, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS/FAIL
line per criterion.  Tolerances are fixed here, not configurable.
"""

import json
import math
import subprocess
import sys
from contextlib import contextmanager

import numpy as np
import pytest

import tiltedwalk as tw
from tiltedwalk import diagnostics as dg
from tiltedwalk.cli import main
from tiltedwalk.errors import DegenerateCaseError


@contextmanager
def criterion(num, description):
    try:
        yield
    except Exception:
        print(f"ACCEPTANCE {num}: FAIL - {description}")
        raise
    print(f"ACCEPTANCE {num}: PASS - {description}")


def test_criterion_1_markov_benchmark(two_state, two_state_tilt):
    with criterion(1, "2-state benchmark: theta, q, associated chain, duality"):
        assert abs(two_state_tilt.theta - math.log(2.0)) < 1e-10
        assert abs(two_state_tilt.q - 27 / 32) < 1e-10
        assoc = tw.associated(two_state, two_state_tilt)
        assert np.abs(assoc.P - [[0.4, 0.6], [0.2, 0.8]]).max() < 1e-10
        assert np.abs(assoc.pi - [0.25, 0.75]).max() < 1e-10
        _, err = tw.duality_roundtrip(two_state, two_state_tilt)
        assert err < 1e-10


def test_criterion_2_markov_cylinder_convergence(two_state, two_state_tilt):
    with criterion(2, "cylinder-ratio errors decrease, < 1e-10 at (30, 30)"):
        rep = dg.assumption2_convergence(
            two_state, two_state_tilt, 1, [(5, 5), (10, 10), (20, 20), (30, 30)]
        )
        assert rep.decreasing
        assert rep.max_errors[-1] < 1e-10


def test_criterion_3_markov_martingale(two_state, two_state_tilt):
    with criterion(3, "martingale identity < 1e-12; MC residuals within 4 stderr"):
        for s in two_state.states:
            assert abs(tw.one_step_martingale_identity(two_state, two_state_tilt, s)) < 1e-12
        diag = dg.MarkovDiagnostics(two_state, two_state_tilt)
        residuals = dg.martingale_mc_test(diag, 5, n_samples=10**5, seed=20250810)
        assert all(r.within(0.0, 4.0) for r in residuals)


def test_criterion_4_gaussian_closed_forms(gauss_iid, gauss_ar1):
    with criterion(4, "Gaussian closed forms: IID, AR1(0.5), degenerate MA(-1)"):
        t_iid = tw.gaussian_tilt(gauss_iid)
        assert t_iid.theta == 2.0 and t_iid.q == 1.0
        t_ar1 = tw.gaussian_tilt(gauss_ar1)
        assert abs(t_ar1.theta - 2 / 3) < 1e-15
        assert abs(t_ar1.q - math.exp(-8 / 9)) < 1e-15
        assert abs(tw.laplace_Sn_exact(gauss_ar1, t_ar1.theta, 200) - t_ar1.q) < 1e-6
        with pytest.raises(DegenerateCaseError):
            tw.gaussian_tilt(tw.GaussianModel(1.0, 1.0, tw.MA((-1.0,))))


def test_criterion_5_gaussian_dichotomy(gauss_ar1):
    with criterion(5, "dichotomy: monotone at 0.5/2.0 x theta, Cauchy at theta"):
        theta = tw.gaussian_tilt(gauss_ar1).theta
        grid = [50, 100, 200, 400]
        low = [tw.laplace_Sn_exact(gauss_ar1, 0.5 * theta, n) for n in grid]
        high = [tw.laplace_Sn_exact(gauss_ar1, 2.0 * theta, n) for n in grid]
        at = [tw.laplace_Sn_exact(gauss_ar1, theta, n) for n in grid]
        assert all(b < a for a, b in zip(low, low[1:]))
        assert all(b > a for a, b in zip(high, high[1:]))
        assert abs(at[-1] - at[-2]) < 1e-6


def test_criterion_6_gaussian_normalization(gauss_iid, gauss_ar1, gauss_ma):
    with criterion(6, "tilt-density normalization equals q to 1e-8, k in {0,1,2}"):
        for model in (gauss_iid, gauss_ar1, gauss_ma):
            q = tw.gaussian_tilt(model).q
            for k in (0, 1, 2):
                coeffs = tw.conditional_tilt_coeffs(model, k)
                mass = tw.tilt_density_normalization(model, coeffs)
                assert abs(mass - q) < 1e-8


def test_criterion_7_queueing():
    with criterion(7, "M/M/1 tail decay in [0.9, 1.1]; appointments root and factor"):
        mm1 = tw.QueueModel(tw.PoissonArrivals(1.0), tw.ExponentialService(2.0))
        sample = tw.simulate_queue(mm1, 10**6, seed=20250810)
        theta_hat, _ = tw.tail_decay_estimate(sample)
        assert 0.9 <= theta_hat <= 1.1

        svc = tw.ExponentialService(2.0)
        root = tw.appointments_theta(svc.phi, 1.0, tol=1e-12, phi_sup=svc.phi_sup)
        assert abs(root - 1.5936242600400401) < 1e-6
        assert abs(svc.phi(-root) * math.exp(-root) - 1.0) < 1e-10
        assert root > 1.0
        factor = tw.comparison_factor(svc, 1.0)
        assert abs(factor - 2.0 / math.e) < 1e-12
        assert factor < 1.0


def test_criterion_8_reproducibility(tmp_path, capsys):
    with criterion(8, "CLI rerun from embedded config bit-for-bit; threads inert"):
        cfg = {
            "model_type": "markov",
            "model": {"states": [1.0, -1.0], "P": [[0.8, 0.2], [0.6, 0.4]],
                      "pi": [0.75, 0.25]},
            "checks": {
                "assumption1": {"mode": "mc", "samples": 30000},
                "martingale": {"samples": 30000},
            },
        }
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        assert main(["verify", "run", "--config", str(path), "--seed", "99"]) == 0
        first = capsys.readouterr().out
        embedded = json.loads(first)["config"]
        path2 = tmp_path / "embedded.json"
        path2.write_text(json.dumps(embedded))
        assert main(["verify", "run", "--config", str(path2)]) == 0
        assert capsys.readouterr().out == first
        assert main(["verify", "run", "--config", str(path2), "--threads", "4"]) == 0
        assert capsys.readouterr().out == first
        # the console entry point agrees with the in-process run
        proc = subprocess.run(
            [sys.executable, "-m", "tiltedwalk", "verify", "run",
             "--config", str(path2)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert proc.stdout.rstrip("\n") == first.rstrip("\n")
