"""Smoke test for the blowup_lab extension.

Run after `cargo build --release -p blowup-lab-py --features extension-module`
or `maturin develop -m crates/py/Cargo.toml`:

    python3 python/smoke_test.py
"""

import importlib.machinery
import importlib.util
import math
import pathlib
import sys


def load():
    try:
        import blowup_lab

        return blowup_lab
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parents[1]
    for profile in ("release", "debug"):
        lib = root / "target" / profile / "libblowup_lab.so"
        if lib.exists():
            loader = importlib.machinery.ExtensionFileLoader("blowup_lab", str(lib))
            spec = importlib.util.spec_from_file_location("blowup_lab", lib, loader=loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            sys.modules["blowup_lab"] = module
            return module
    raise ImportError("blowup_lab extension not built")


bl = load()


def test_constants():
    assert bl.gamma_exponent(7) == 2.0
    assert abs(bl.gamma_exponent(8) - 1.585786) < 1e-6
    hbar, delta = bl.spectral_params(8)
    assert hbar == 1 and 0.0 < delta < 1.0


def test_profile():
    p = bl.solve_profile(8, n=1024)
    assert len(p["y"]) == len(p["Q"]) == 1024
    assert abs(p["Q"][-1] - math.pi / 2) < 1e-3
    assert min(p["LamQ"]) > 0.0
    assert abs(p["summary"]["measured_gamma"] / p["summary"]["gamma"] - 1.0) < 0.01


def test_modes():
    b = bl.explicit_solution(8, 1, 2, 100.0)
    assert abs(b[0] * 100.0 - 2.414214) < 1e-5
    traj = bl.integrate_modes(8, 1, 1, 10.0)
    assert abs(traj["fit"]["exponent_t"] - 1.0 / bl.gamma_exponent(8)) < 0.01 * 0.6306


def test_simulate():
    run = bl.simulate("d = 8\nlambda_min = 0.1\n")
    lam = run["lambda"]
    assert lam[0] > lam[-1] and lam[-1] <= 0.1
    assert run["report"]["outcome"] in ("Blowup", "blowup")
    assert all(b >= a - 1e-8 * abs(a) for a, b in zip(run["energy"][1:], run["energy"]))


def test_verify():
    report = bl.verify_all([8])
    assert report["passed"], [c for c in report["checks"] if not c["passed"]]


def test_errors():
    for call in (lambda: bl.gamma_exponent(2), lambda: bl.verify_all([]), lambda: bl.simulate("gauge = sideways")):
        try:
            call()
        except ValueError:
            continue
        raise AssertionError("expected ValueError")


if __name__ == "__main__":
    tests = [f for name, f in sorted(globals().items()) if name.startswith("test_")]
    for t in tests:
        t()
        print(f"ok {t.__name__}")
