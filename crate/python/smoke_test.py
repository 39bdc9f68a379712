"""Smoke test for the pyqvar extension.

Build and install first:
    maturin build --release -m crates/py/Cargo.toml -o dist && pip install dist/pyqvar-*.whl
then run:
    python python/smoke_test.py
"""

import json
import math
import pathlib
import tempfile

import pyqvar


def check(label, ok):
    print(("PASS " if ok else "FAIL ") + label)
    return ok


def main():
    results = []
    with tempfile.TemporaryDirectory() as tmp:
        cache = str(pathlib.Path(tmp) / "cache")

        forms = pyqvar.eigenforms(12, n=30, cache_dir=cache)
        tau2 = forms[0]["lambda"][1] * 2 ** 5.5
        results.append(check("weight 12 has one form with tau(2) = -24", len(forms) == 1 and abs(tau2 + 24) < 1e-9))
        dims = {k: len(pyqvar.eigenforms(k, n=60, cache_dir=cache)) for k in (24, 36)}
        results.append(check("dim S_24 = 2 and dim S_36 = 3", dims == {24: 2, 36: 3}))

        # S(1, 1; 5) by direct summation over units mod 5
        direct = sum(math.cos(2 * math.pi * (x + pow(x, -1, 5)) / 5) for x in range(1, 5))
        results.append(check("Kloosterman S(1,1;5)", abs(pyqvar.kloosterman(1, 1, 5) - direct) < 1e-12))

        s = complex(0.4, 3.0)
        results.append(check("Mellin symmetry", abs(pyqvar.mellin(s) - pyqvar.mellin(-s)) < 1e-10))

        rows = pyqvar.masses(16, n=200, cache_dir=cache)
        r = rows[0]
        results.append(check("mass decomposition", abs(r["mu"] - r["s_direct"] - r["e_residual"] - r["expected"]) < 1e-9))
        results.append(check("expected mass", abs(r["expected"] - pyqvar.expected_mass(2.0)) < 1e-15))

        d = pyqvar.diagonal(100.0)
        results.append(check("diagonal numeric positive", d["numeric"] > 0))

        report = pyqvar.variance(12.0, n=200, cache_dir=cache)
        results.append(check("variance lhs nonnegative", report["lhs_empirical"] >= 0 and report["forms"] == 7))

        out = str(pathlib.Path(tmp) / "out")
        code = pyqvar.cli(["verify", "kloosterman", "--out", out])
        verified = json.loads((pathlib.Path(out) / "verify_kloosterman.json").read_text())
        results.append(check("cli verify kloosterman", code == 0 and verified["passed"]))
        results.append(check("cli usage error", pyqvar.cli(["verify", "nonsense"]) == 2))

        try:
            pyqvar.eigenforms(13)
            raised = False
        except ValueError:
            raised = True
        results.append(check("odd weight raises ValueError", raised))

    if not all(results):
        raise SystemExit(1)


if __name__ == "__main__":
    main()
