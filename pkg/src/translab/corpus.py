"""Regression corpus: case configurations generated from a fixed seed.

``regression_cases`` returns 20 flat and 5 curved case tables; flat cases
1-5 have zero source and jump data, 6-15 random polynomial data and 16-20
rough data (mollified indicators and square-root kinks). ``write_corpus``
writes them as TOML files together with a suite manifest.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import tomli_w

from .config import mollified_indicator, random_polynomial

CORPUS_SEED = 20240611
LAM, LAM_CAP = 1.0, 2.0


def _ops(k: int) -> tuple[dict, dict]:
    pm = {"kind": "pucci_minus", "lambda": LAM, "lambda_cap": LAM_CAP}
    pp = {"kind": "pucci_plus", "lambda": LAM, "lambda_cap": LAM_CAP}
    return (pm, pp) if k % 2 == 0 else (pp, pm)


def _flat_checks(k: int) -> list[dict]:
    checks = [
        {"check": "abp", "contact": True},
        {"check": "viscosity"},
        {"check": "bracket"},
        {"check": "oscillation", "radius": 1.0},
    ]
    return checks


def regression_cases(seed: int = CORPUS_SEED, cells: int = 32) -> list[dict]:
    rng = np.random.default_rng(seed)
    cases = []
    for k in range(20):
        Fp, Fm = _ops(k)
        bdry = random_polynomial(rng, 2, 2, 1.0)
        if k < 5:
            f_plus = f_minus = g = 0.0
            family = "zero"
        elif k < 15:
            f_plus = random_polynomial(rng, 2, 2, 2.0)
            f_minus = random_polynomial(rng, 2, 2, 2.0)
            g = f"{float(rng.uniform(0.5, 1.5))!r} + ({random_polynomial(rng, 2, 1, 0.5)})"
            family = "polynomial"
        else:
            c1 = rng.uniform(-0.5, 0.5, 2).tolist()
            c2 = rng.uniform(-0.5, 0.5, 2).tolist()
            f_plus = mollified_indicator(c1, float(rng.uniform(0.2, 0.4)), float(rng.uniform(-4, 4)))
            f_minus = mollified_indicator(c2, float(rng.uniform(0.2, 0.4)), float(rng.uniform(-4, 4)))
            a = float(rng.uniform(-0.5, 0.5))
            g = f"{float(rng.uniform(0.5, 1.5))!r}*abs(x1-({a!r}))^0.5"
            family = "rough"
        cases.append({
            "name": f"flat_{k + 1:02d}_{family}",
            "seed": int(seed + k),
            "problem": {"F_plus": Fp, "F_minus": Fm, "f_plus": f_plus, "f_minus": f_minus,
                        "g": g, "boundary": bdry},
            "grid": {"cells": cells},
            "solve": {"init": "barrier"},
            "verify": _flat_checks(k),
        })
    for k in range(5):
        Fp, Fm = _ops(k)
        kappa = float(rng.uniform(0.03, 0.15)) * (1 if k % 2 == 0 else -1)
        cases.append({
            "name": f"curved_{k + 1:02d}",
            "seed": int(seed + 100 + k),
            "problem": {"psi": {"coeffs": [0.0, 0.0, kappa]}, "F_plus": Fp, "F_minus": Fm,
                        "f_plus": random_polynomial(rng, 2, 1, 1.0), "f_minus": random_polynomial(rng, 2, 1, 1.0),
                        "g": f"{float(rng.uniform(0.5, 1.5))!r}", "boundary": random_polynomial(rng, 2, 2, 1.0)},
            "grid": {"cells": cells},
            "solve": {"init": "zero"},
            "verify": [{"check": "viscosity"}, {"check": "abp"}],
        })
    return cases


def comparison_pairs(seed: int = CORPUS_SEED, count: int = 2, cells: int = 32) -> list[tuple[dict, dict]]:
    """Ordered data pairs: f_sub >= f_super, g_sub >= g_super, boundary_sub <= boundary_super."""
    rng = np.random.default_rng(seed + 1000)
    pairs = []
    for k in range(count):
        Fp, Fm = _ops(k)
        base_f = random_polynomial(rng, 2, 2, 1.0)
        base_g = f"1 + ({random_polynomial(rng, 2, 1, 0.3)})"
        base_b = random_polynomial(rng, 2, 2, 1.0)
        df = random_polynomial(rng, 2, 2, 0.5)
        db = random_polynomial(rng, 2, 2, 0.5)
        sub = {"f_plus": f"{base_f} + abs({df})", "f_minus": f"{base_f} + abs({df})",
               "g": f"{base_g} + 0.2", "boundary": f"{base_b} - abs({db})"}
        sup = {"f_plus": base_f, "f_minus": base_f, "g": base_g, "boundary": base_b}
        out = []
        for tag, data in (("sub", sub), ("super", sup)):
            out.append({
                "name": f"cmp_{k + 1:02d}_{tag}",
                "problem": {"F_plus": Fp, "F_minus": Fm, **data},
                "grid": {"cells": cells},
                "solve": {"init": "boundary"},
            })
        pairs.append((out[0], out[1]))
    return pairs


def write_corpus(directory, seed: int = CORPUS_SEED, cells: int = 32, n_pairs: int = 2) -> Path:
    """Write the regression cases and the manifest ``regression.toml``; returns the manifest path."""
    root = Path(directory)
    (root / "cases").mkdir(parents=True, exist_ok=True)
    entries = []
    for case in regression_cases(seed, cells):
        rel = f"cases/{case['name']}.toml"
        (root / rel).write_bytes(tomli_w.dumps(case).encode())
        entries.append({"config": rel, "expect": "pass"})
    comps = []
    for sub, sup in comparison_pairs(seed, n_pairs, cells):
        for case in (sub, sup):
            (root / f"cases/{case['name']}.toml").write_bytes(tomli_w.dumps(case).encode())
        comps.append({"name": sub["name"][:-4], "sub": f"cases/{sub['name']}.toml",
                      "super": f"cases/{sup['name']}.toml", "expect": "pass"})
    manifest = {"name": "regression", "seed": seed, "case": entries, "comparison": comps}
    path = root / "regression.toml"
    path.write_bytes(tomli_w.dumps(manifest).encode())
    return path


def shipped_manifest() -> Path:
    return Path(__file__).parent / "data" / "regression" / "regression.toml"
