"""Batch front door: JSON job configs in, reports and figures out.

Every run writes report.json (sorted keys) into the output directory,
plus CSV tables, two-column TSV plot data, and PNG figures per command.
Exit codes: 0 success, 2 invalid config or polytope, 3 numerical failure,
4 budget exceeded; failures also print one JSON error line to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from fractions import Fraction

import numpy as np

from . import __version__
from . import reporting
from .errors import (
    BudgetExceeded,
    NotPositiveDefinite,
    SingularGram,
    ToleranceNotMet,
    ToricExtError,
)
from .invariants import (
    canonical_report,
    extremal_affine,
    futaki_linear_exact,
    relative_df,
    sbar_fraction,
    stability_scan,
)
from .kenergy import (
    SymplecticPotential,
    TorusSubgroup,
    chen_check,
    energy_report,
    random_perturbation,
)
from .polynomial import Polynomial
from .polytope import (
    AffineFunction,
    blowup_polytope,
    build_polytope,
    interval,
    standard_simplex,
    unit_square,
)
from .quadrature import integrate_poly
from .quantization import (
    BERGMAN_SUBLEADING,
    DK_SCALE,
    GRAD_NORM_RATIO,
    ZDIFF_SCALE,
    SigmaAction,
    asymptotic_suite,
    balanced_iterate,
    bergman,
    fs,
    lattice_basis,
    quant_rule,
)

log = logging.getLogger("toricext.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_BUDGET = 4

FUTAKI_TOL = 1e-8


class ConfigError(ValueError):
    pass


_NAMED_POLYTOPES = {
    "interval": interval,
    "unit-square": unit_square,
    "square": unit_square,
    "simplex": standard_simplex,
    "standard-simplex": standard_simplex,
}

# Calibrated constants echoed in quantization reports; provenance says how
# each value was fixed (closed form vs measured on the interval model).
CONSTANTS = {
    "bergman_subleading": {"value": BERGMAN_SUBLEADING, "provenance": "exact"},
    "grad_norm_ratio": {"value": GRAD_NORM_RATIO, "provenance": "calibrated-1d"},
    "dk_scale": {"value": DK_SCALE, "provenance": "exact"},
    "zdiff_scale": {"value": ZDIFF_SCALE, "provenance": "exact"},
}


def parse_polytope(spec):
    if spec is None:
        raise ConfigError("config needs a 'polytope' entry")
    if isinstance(spec, str):
        if spec not in _NAMED_POLYTOPES:
            raise ConfigError("unknown polytope name %r" % spec)
        return _NAMED_POLYTOPES[spec]()
    if "blowup" in spec:
        b = spec["blowup"]
        return blowup_polytope(
            b.get("s", 5), b.get("eps", 1), b.get("a", 1), b.get("b", 2)
        )
    if "facets" in spec:
        facets = [
            (tuple(f["normal"]), f["offset"]) for f in spec["facets"]
        ]
        return build_polytope(facets, label=spec.get("label", ""))
    raise ConfigError("polytope spec needs a name, 'facets', or 'blowup'")


def parse_potential(spec, P):
    if spec is None or spec == "guillemin":
        return SymplecticPotential(P)
    items = spec.get("perturbation")
    if items is None:
        raise ConfigError("potential spec needs a 'perturbation' list")
    return SymplecticPotential(P, Polynomial.from_terms(items, P.n))


def parse_group(spec, n):
    if spec is None or spec == "full":
        return TorusSubgroup.full(n)
    if spec == "trivial":
        return TorusSubgroup.trivial()
    return TorusSubgroup.from_json(spec)


def _sigma_action(config, P, G):
    mode = config.get("sigma", "extremal")
    if mode == "trivial":
        return SigmaAction.trivial(P.n)
    if mode == "extremal":
        return SigmaAction.from_group(P, G)
    raise ConfigError("sigma must be 'extremal' or 'trivial', got %r" % mode)


def _coordinate_tests(P):
    """Mean-zero coordinate affines y_i - ybar_i, exact."""
    vol = P.volume()
    out = []
    for i in range(P.n):
        e = [0] * P.n
        e[i] = 1
        mean = integrate_poly(P, Polynomial.monomial(e)) / vol
        grad = tuple(Fraction(1) if j == i else Fraction(0) for j in range(P.n))
        out.append(AffineFunction(grad, -mean))
    return out


def _futaki_payload(P):
    data = extremal_affine(P)
    sbar = sbar_fraction(P)
    csc = AffineFunction((Fraction(0),) * P.n, sbar)
    rows = []
    nonzero = False
    for i, f in enumerate(_coordinate_tests(P)):
        character = float(futaki_linear_exact(P, csc, f))
        relative = relative_df(P, f)
        rows.append(
            {
                "direction": [1 if j == i else 0 for j in range(P.n)],
                "character": character,
                "relative": relative,
            }
        )
        if abs(character) > FUTAKI_TOL:
            nonzero = True
    payload = data.to_json()
    payload["directions"] = rows
    payload["futaki_nonzero"] = nonzero
    payload["tol"] = FUTAKI_TOL
    return payload


# ---- commands ---------------------------------------------------------


def cmd_extremal(config, out, seed, rng):
    P = parse_polytope(config.get("polytope"))
    payload = canonical_report(P)
    payload["polytope"] = P.vertex_report()
    reporting.polytope_figure(P, os.path.join(out, "polytope.png"))
    return payload, ["polytope.png"]


def cmd_futaki(config, out, seed, rng):
    P = parse_polytope(config.get("polytope"))
    payload = _futaki_payload(P)
    payload["polytope"] = P.vertex_report()
    reporting.polytope_figure(P, os.path.join(out, "polytope.png"))
    return payload, ["polytope.png"]


def cmd_stability(config, out, seed, rng):
    P = parse_polytope(config.get("polytope"))
    scan = stability_scan(
        P,
        radius=int(config.get("radius", 3)),
        offsets=int(config.get("offsets", 24)),
        tol=float(config.get("tol", 1e-8)),
    )
    payload = canonical_report(P, scan)
    payload["polytope"] = P.vertex_report()
    reporting.write_csv(
        os.path.join(out, "stability_rows.csv"),
        ["normal", "offset", "value", "normalized"],
        [
            [" ".join(str(v) for v in r["normal"]), r["offset"], r["value"], r["normalized"]]
            for r in scan.rows
        ],
    )
    reporting.polytope_figure(P, os.path.join(out, "polytope.png"))
    return payload, ["stability_rows.csv", "polytope.png"]


def cmd_energy(config, out, seed, rng):
    P = parse_polytope(config.get("polytope"))
    G = parse_group(config.get("group"), P.n)
    specs = config.get("potentials", [None])
    pots = [parse_potential(s, P) for s in specs]
    rows = [energy_report(u, G).to_json() for u in pots]
    margins = [
        chen_check(pots[i], pots[i + 1], G) for i in range(len(pots) - 1)
    ]
    payload = {
        "group": G.to_json(),
        "rows": rows,
        "chen_margins": margins,
        "polytope": P.vertex_report(),
    }
    reporting.write_csv(
        os.path.join(out, "energy_rows.csv"),
        ["index", "kenergy", "calabi"],
        [[i, r["kenergy"], r["calabi"]] for i, r in enumerate(rows)],
    )
    reporting.polytope_figure(P, os.path.join(out, "polytope.png"))
    return payload, ["energy_rows.csv", "polytope.png"]


def _default_pair(P):
    if P.n == 1:
        return Polynomial({(2,): 0.05})
    return Polynomial({(1, 1): 0.1})


def cmd_quantize(config, out, seed, rng):
    P = parse_polytope(config.get("polytope"))
    G = parse_group(config.get("group"), P.n)
    act = _sigma_action(config, P, G)
    u0 = parse_potential(config.get("u0"), P)
    if config.get("u1") is None:
        u1 = SymplecticPotential(P, u0.perturbation + _default_pair(P))
    else:
        u1 = parse_potential(config.get("u1"), P)
    ks = [int(k) for k in config.get("ks", [4, 8, 12, 16])]
    budget = int(config.get("budget", 20000))
    reports = asymptotic_suite(u0, u1, G, act=act, ks=ks, budget=budget)
    counts = {k: lattice_basis(P, k).n_sections for k in ks}
    payload = {
        "polytope": P.vertex_report(),
        "sigma_direction": [float(v) for v in act.w],
        "counts": {str(k): counts[k] for k in counts},
        "trends": {name: rep.to_json() for name, rep in reports.items()},
        "constants": CONSTANTS,
    }
    artifacts = []
    for p in reporting.write_trend_tables(out, reports, counts):
        artifacts.append(os.path.basename(p))
    reporting.trend_figure(reports, os.path.join(out, "trends.png"))
    reporting.polytope_figure(P, os.path.join(out, "polytope.png"))
    artifacts += ["trends.png", "polytope.png"]
    return payload, artifacts


def cmd_balanced(config, out, seed, rng):
    P = parse_polytope(config.get("polytope"))
    G = parse_group(config.get("group"), P.n)
    act = _sigma_action(config, P, G) if config.get("sigma") else SigmaAction.trivial(P.n)
    k = int(config.get("k", 4))
    u0 = parse_potential(config.get("start"), P)
    result = balanced_iterate(
        u0,
        k,
        act=act,
        steps=int(config.get("steps", 200)),
        damping=float(config.get("damping", 1.0)),
        stop_tol=float(config.get("stop_tol", 1e-10)),
    )
    if result.diverged:
        raise ToleranceNotMet(
            "balanced iteration diverged", value=result.final_residual
        )
    rule = quant_rule(P, k)
    rho = bergman(fs(result.gram), k, rule=rule)
    payload = {
        "polytope": P.vertex_report(),
        "k": k,
        "n_sections": result.gram.basis.n_sections,
        "sigma_direction": [float(v) for v in act.w],
        "steps": result.steps,
        "final_residual": result.final_residual,
        "monotone": result.monotone,
        "rho_min": float(rho.min()),
        "rho_max": float(rho.max()),
        "rho_spread": float(rho.max() - rho.min()),
    }
    reporting.write_csv(
        os.path.join(out, "residuals.csv"),
        ["step", "residual"],
        list(enumerate(result.residuals)),
    )
    reporting.residual_figure(
        result.residuals,
        os.path.join(out, "residuals.png"),
        title="balanced iteration, k=%d" % k,
    )
    reporting.polytope_figure(P, os.path.join(out, "polytope.png"))
    return payload, ["residuals.csv", "residuals.png", "polytope.png"]


def _chen_combos(config):
    if config.get("polytope") is not None:
        P = parse_polytope(config["polytope"])
        G = parse_group(config.get("group"), P.n)
        return [(P, G)]
    return [
        (unit_square(), TorusSubgroup.full(2)),
        (standard_simplex(), TorusSubgroup.full(2)),
        (blowup_polytope(5, 1, 1, 2), TorusSubgroup(((0, 1),))),
    ]


def cmd_checks(config, out, seed, rng):
    suite = config.get("suite", "chen")
    if suite != "chen":
        raise ConfigError("unknown checks suite %r" % suite)
    pairs = int(config.get("pairs", 100))
    tol = float(config.get("tol", 1e-6))
    combo_rows = []
    overall_min = float("inf")
    for P, G in _chen_combos(config):
        margins = []
        for _ in range(pairs):
            u0 = SymplecticPotential(P, random_perturbation(P, rng))
            u1 = SymplecticPotential(P, random_perturbation(P, rng))
            margins.append(chen_check(u0, u1, G))
        worst = min(margins)
        overall_min = min(overall_min, worst)
        combo_rows.append(
            {
                "polytope": P.vertex_report()["label"] or "custom",
                "group": G.to_json(),
                "pairs": pairs,
                "min_margin": worst,
                "mean_margin": float(np.mean(margins)),
            }
        )
    payload = {
        "suite": "chen",
        "pairs": pairs,
        "min_margin": overall_min,
        "tol": tol,
        "combos": combo_rows,
    }
    reporting.write_csv(
        os.path.join(out, "chen_margins.csv"),
        ["polytope", "min_margin", "mean_margin"],
        [[r["polytope"], r["min_margin"], r["mean_margin"]] for r in combo_rows],
    )
    if overall_min < -tol:
        raise ToleranceNotMet(
            "distance bound violated: min margin %.3e" % overall_min,
            value=overall_min,
            error=tol,
        )
    return payload, ["chen_margins.csv"]


def cmd_example_blowup(config, out, seed, rng):
    b = config.get("blowup", {})
    s = b.get("s", 5)
    eps = b.get("eps", 1)
    a = b.get("a", 1)
    bb = b.get("b", 2)
    P = blowup_polytope(s, eps, a, bb)
    payload = {
        "parameters": {"s": s, "eps": eps, "a": a, "b": bb},
        "polytope": P.vertex_report(),
    }
    payload.update(_futaki_payload(P))
    scan = stability_scan(
        P,
        radius=int(config.get("radius", 2)),
        offsets=int(config.get("offsets", 8)),
    )
    payload["scan"] = scan.to_json()
    artifacts = ["polytope.png", "scan_rows.csv"]
    reporting.polytope_figure(
        P, os.path.join(out, "polytope.png"), title=P.label
    )
    reporting.write_csv(
        os.path.join(out, "scan_rows.csv"),
        ["normal", "offset", "value", "normalized"],
        [
            [" ".join(str(v) for v in r["normal"]), r["offset"], r["value"], r["normalized"]]
            for r in scan.rows
        ],
    )
    if config.get("quantization"):
        sub = dict(config["quantization"])
        sub.setdefault("polytope", {"blowup": {"s": s, "eps": eps, "a": a, "b": bb}})
        qpayload, qart = cmd_quantize(sub, out, seed, rng)
        payload["quantization"] = qpayload
        artifacts += qart
    return payload, artifacts


_COMMANDS = {
    "extremal": cmd_extremal,
    "futaki": cmd_futaki,
    "stability": cmd_stability,
    "energy": cmd_energy,
    "quantize": cmd_quantize,
    "balanced": cmd_balanced,
    "checks": cmd_checks,
    "example-blowup": cmd_example_blowup,
}


def _fail(code, exc):
    payload = {
        "error": type(exc).__name__,
        "message": str(exc),
        "exit_code": code,
    }
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def _apply_threads(n):
    """Best-effort thread cap for BLAS pools created after this point."""
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="toricext",
        description="Toric extremal-metric reports: canonical invariants, "
        "energies, quantization trends, balanced iterations.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", help="path to a JSON job config")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="thread cap (falls back to TOOL_THREADS)",
    )
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    threads = args.threads
    if threads is None:
        try:
            threads = int(os.environ.get("TOOL_THREADS", "0")) or None
        except ValueError:
            threads = None
    if threads:
        _apply_threads(threads)

    try:
        if args.config is None:
            config = {}
        else:
            with open(args.config, "r", encoding="utf-8") as f:
                config = json.load(f)
        if not isinstance(config, dict):
            raise ConfigError("config root must be a JSON object")
    except (OSError, ValueError) as exc:
        return _fail(EXIT_CONFIG, exc)

    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    rng = np.random.default_rng(seed)
    os.makedirs(args.out, exist_ok=True)
    t0 = time.time()
    try:
        results, artifacts = _COMMANDS[args.command](config, args.out, seed, rng)
    except BudgetExceeded as exc:
        return _fail(EXIT_BUDGET, exc)
    except (
        ToleranceNotMet,
        NotPositiveDefinite,
        SingularGram,
        FloatingPointError,
        np.linalg.LinAlgError,
    ) as exc:
        return _fail(EXIT_NUMERICAL, exc)
    except (ConfigError, ToricExtError, ValueError, KeyError, TypeError) as exc:
        return _fail(EXIT_CONFIG, exc)

    report = {
        "command": args.command,
        "config": config,
        "seed": seed,
        "threads": threads or 0,
        "version": __version__,
        "wall_time_s": round(time.time() - t0, 3),
        "artifacts": sorted(artifacts),
        "results": results,
    }
    path = reporting.write_json(os.path.join(args.out, "report.json"), report)
    log.info("wrote %s (%.2fs)", path, report["wall_time_s"])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
