"""Command-line interface: configuration, dispatch and persistence.

Commands
--------
certify        write the non-resonance certificate bundle (exit 0 iff all
               hard gates pass)
solve          run the staged solver; writes solution + trace files
lde-scan       scan a sigma grid against the large-deviation inequalities;
               writes a report and plot-ready columns
report         human-readable summary of a solution file
oracle-compare rerun the dense oracle and report the discrepancy against a
               solution file

File formats (format_version 1)
-------------------------------
Configs and all structured outputs are JSON text with sorted keys and every
float printed with 17 significant digits (round-trip exact); files carry the
full config echo for provenance.  Solution records are rows
[k-vector, n-vector, value] sorted by (|k|+|n|, lexicographic).  Plot data
is column text: sigma, worst region norm, worst decay margin, good/bad flag.

Exit codes: 0 success, 1 certification gate failure, 2 invalid config or
malformed file, 3 resonant box, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import linop, solver, spectrum
from .errors import (NonConvergence, PreconditionFailed, QPWaveError,
                     ResonantBox)
from .nonlin import CoefficientField
from .spectrum import Certificate, ModelParams
from .solver import SolverConfig

FORMAT_VERSION = 1

EXIT_OK = 0
EXIT_GATE_FAILED = 1
EXIT_BAD_CONFIG = 2
EXIT_RESONANT_BOX = 3
EXIT_NON_CONVERGENCE = 4

GOLDEN_MEAN = (math.sqrt(5.0) - 1.0) / 2.0
PRESET_THETA0 = 0.3455


# ---------------------------------------------------------------------------
# deterministic structured-text serialization (JSON syntax, 17 significant
# digits on floats, sorted keys)
# ---------------------------------------------------------------------------

def _format_value(value, indent: int) -> str:
    pad = " " * indent
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "Infinity" if v > 0 else "-Infinity"
        return format(v, ".17g")
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        rows = []
        for key in sorted(value.keys(), key=str):
            rows.append(f'{pad}  {json.dumps(str(key))}: '
                        f'{_format_value(value[key], indent + 2)}')
        return "{\n" + ",\n".join(rows) + f"\n{pad}}}"
    if isinstance(value, (list, tuple, np.ndarray)):
        items = list(value)
        if not items:
            return "[]"
        flat = all(not isinstance(x, (dict, list, tuple, np.ndarray))
                   for x in items)
        if flat:
            return "[" + ", ".join(_format_value(x, indent) for x in items) + "]"
        rows = [f"{pad}  {_format_value(x, indent + 2)}" for x in items]
        return "[\n" + ",\n".join(rows) + f"\n{pad}]"
    raise TypeError(f"cannot serialize {type(value)!r}")


def dumps(obj) -> str:
    return _format_value(obj, 0) + "\n"


def loads(text: str):
    return json.loads(text)


def write_file(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))


def read_file(path: Path):
    return loads(Path(path).read_text())


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def default_config() -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "model": {
            "b": 1, "d": 1, "p": 2, "m": 2.5,
            "eps": 1e-3, "delta": 1e-3,
            "alpha": [GOLDEN_MEAN], "theta0": PRESET_THETA0,
            "anchors": [[0]], "amplitudes": [1.0],
            "gamma": 1.0, "k_exponent": None,
        },
        "solver": {
            "M": 3, "r_max": 6, "residual_floor": 1e-12,
            "q_update_damping": 1.0, "dense_size_limit": 5000,
            "max_condition": 1e14, "coupling_limit": 0.1,
        },
        "cert": {
            "L": 5, "c_star": 0.008, "eta": 1e-3,
            "m_grid_points": 2001, "sigma_grid_points": 4001,
            "transversality_m_points": 201,
        },
        "scan": {
            "M": 8, "rho1": 0.1, "rho2": 0.7, "rho3": 0.9, "rho4": 0.05,
            "gamma_prime": None, "num_sigma": 1601, "max_regions": 64,
            "window": None,
        },
        "output": {"out_dir": "qpwave-out"},
        "seed": 20240601,
    }


def preset_config(name: str) -> dict:
    cfg = default_config()
    if name == "trivial":
        cfg["model"]["eps"] = 0.0
        cfg["model"]["delta"] = 0.0
    elif name == "small-coupling":
        pass  # defaults are the small-coupling point
    elif name == "scan-demo":
        cfg["model"]["eps"] = 1e-3
        cfg["model"]["delta"] = 1e-3
        cfg["scan"]["M"] = 8
    else:
        raise ValueError(f"unknown preset {name!r}")
    return cfg


def model_params(cfg: dict) -> ModelParams:
    m = cfg["model"]
    return ModelParams(
        b=int(m["b"]), d=int(m["d"]), p=int(m["p"]), m=float(m["m"]),
        eps=float(m["eps"]), delta=float(m["delta"]),
        alpha=tuple(float(a) for a in m["alpha"]), theta0=float(m["theta0"]),
        anchors=tuple(tuple(int(x) for x in n) for n in m["anchors"]),
        amplitudes=tuple(float(a) for a in m["amplitudes"]),
        gamma=float(m.get("gamma", 1.0)),
        k_exponent=m.get("k_exponent"),
    )


def solver_config(cfg: dict) -> SolverConfig:
    s = cfg.get("solver", {})
    return SolverConfig(
        M=int(s.get("M", 3)), r_max=int(s.get("r_max", 6)),
        residual_floor=float(s.get("residual_floor", 1e-12)),
        q_update_damping=float(s.get("q_update_damping", 1.0)),
        dense_size_limit=int(s.get("dense_size_limit", 5000)),
        max_condition=float(s.get("max_condition", 1e14)),
        coupling_limit=float(s.get("coupling_limit", 0.1)),
    )


def load_config(path=None, preset=None) -> dict:
    if (path is None) == (preset is None):
        raise ValueError("exactly one of --config and --preset is required")
    cfg = preset_config(preset) if preset else read_file(Path(path))
    if not isinstance(cfg, dict) or "model" not in cfg:
        raise ValueError("config must be an object with a 'model' block")
    if int(cfg.get("format_version", FORMAT_VERSION)) != FORMAT_VERSION:
        raise ValueError(f"unsupported format_version {cfg.get('format_version')}")
    model_params(cfg)   # range checks happen at load time
    solver_config(cfg)
    return cfg


# ---------------------------------------------------------------------------
# serialization of domain objects
# ---------------------------------------------------------------------------

def certificate_dict(cert: Certificate) -> dict:
    return {
        "kind": cert.kind,
        "inputs": cert.inputs,
        "margin": cert.margin,
        "passed": cert.passed,
        "witnesses": [[list(w[0]) if isinstance(w[0], (tuple, list)) else [w[0]],
                       w[1]] for w in cert.witnesses],
        "notes": cert.notes,
    }


def field_records(field: CoefficientField) -> list:
    rows = []
    for k, n, v in field.full_items():
        order = max((abs(x) for x in k), default=0) + \
            max((abs(x) for x in n), default=0)
        rows.append((order, k + n, list(k), list(n), float(v)))
    rows.sort(key=lambda r: (r[0], r[1]))
    return [[r[2], r[3], r[4]] for r in rows]


def field_from_records(records, b: int, d: int) -> CoefficientField:
    entries = {}
    for k, n, v in records:
        entries[(tuple(int(x) for x in k), tuple(int(x) for x in n))] = float(v)
    return CoefficientField.from_entries(entries, b, d)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def run_certify(cfg: dict, out_dir: Path) -> int:
    params = model_params(cfg)
    cert = cfg.get("cert", {})
    L = int(cert.get("L", 5))
    c_star = float(cert.get("c_star", 0.008))
    eta = float(cert.get("eta", 1e-3))
    m_points = int(cert.get("m_grid_points", 2001))
    s_points = int(cert.get("sigma_grid_points", 4001))
    t_points = int(cert.get("transversality_m_points", 201))

    bundle = {"format_version": FORMAT_VERSION, "config": cfg,
              "certificates": {}, "gates": {}}
    certs = bundle["certificates"]

    alpha_cert = spectrum.check_alpha_dc(params.alpha, L, c_star)
    theta_cert = spectrum.check_theta_dc(params.theta0, params.alpha, L, c_star)
    certs["alpha_dc"] = certificate_dict(alpha_cert)
    certs["theta_dc"] = certificate_dict(theta_cert)
    gates = {"alpha_dc": alpha_cert.passed, "theta_dc": theta_cert.passed}

    if alpha_cert.passed and theta_cert.passed:
        sep = spectrum.separation_certificate(params, L, c_star)
        certs["separation"] = certificate_dict(sep)
        gates["separation"] = sep.passed

        m_grid = np.linspace(2.0, 3.0, t_points)
        trans = []
        k_one = tuple(1 if i == 0 else 0 for i in range(params.b))
        trans.append(spectrum.transversality_margin("harmonic", k_one, params, m_grid))
        probe = [0] * params.d
        while tuple(probe) in {tuple(a) for a in params.anchors}:
            probe[0] += 1
        off_anchor = tuple(probe)
        trans.append(spectrum.transversality_margin(
            "shifted", k_one, params, m_grid, n=off_anchor))
        trans.append(spectrum.transversality_margin(
            "difference", k_one, params, m_grid, n=off_anchor,
            n_prime=tuple(params.anchors[0])))
        certs["transversality"] = [certificate_dict(c) for c in trans]
        gates["transversality"] = all(c.passed for c in trans)

        scan = spectrum.admissible_m_scan(params, L, eta,
                                          np.linspace(2.0, 3.0, m_points))
        certs["admissible_m"] = certificate_dict(scan.certificate)
        certs["admissible_m"]["failing_fraction"] = scan.failing_fraction
        certs["admissible_m"]["theoretical_bound"] = scan.theoretical_bound
        certs["admissible_m"]["theoretical_bound_feasible"] = scan.theoretical_bound_feasible
        certs["admissible_m"]["condition_fail_fractions"] = \
            scan.condition_fail_fractions
        gates["admissible_m"] = bool(len(scan.certified_m) > 0)

        om = spectrum.omega0(params)
        reach = L * float(np.abs(om).sum()) + math.sqrt(params.m + 1.0) + 1.0
        sigma_grid = np.linspace(-reach, reach, s_points)
        worst, at = spectrum.cluster_scan(params, L, eta, sigma_grid)
        cluster_cert = Certificate(
            kind="cluster",
            inputs={"L": L, "eta": eta, "sigma_points": s_points,
                    "window": [-reach, reach], "m": params.m},
            margin=float(params.b - worst) + 0.5,  # pass iff worst <= b
            witnesses=(((("worst_count",)), float(worst)),
                       ((("at_sigma",)), float(at))),
            notes=f"max cluster count {worst} (bound b = {params.b})",
        )
        certs["cluster"] = certificate_dict(cluster_cert)
        gates["cluster"] = bool(worst <= params.b)
    else:
        gates["separation"] = False

    bundle["gates"] = gates
    bundle["all_pass"] = all(gates.values())
    write_file(out_dir / "certificates.txt", bundle)
    print(f"certificates -> {out_dir / 'certificates.txt'}")
    for name, ok in sorted(gates.items()):
        print(f"  gate {name}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if bundle["all_pass"] else EXIT_GATE_FAILED


def run_solve(cfg: dict, out_dir: Path, force: bool = False,
              with_oracle: bool = False) -> int:
    if not force and not (out_dir / "certificates.txt").exists():
        print("error: no certificate bundle in the output directory "
              "(run certify first or pass --force)", file=sys.stderr)
        return EXIT_BAD_CONFIG
    params = model_params(cfg)
    config = solver_config(cfg)
    sol = solver.solve(params, config)

    solution_obj = {
        "format_version": FORMAT_VERSION,
        "config": cfg,
        "omega": list(sol.omega),
        "omega0": [float(w) for w in spectrum.omega0(params)],
        "converged": sol.converged,
        "quality": sol.quality,
        "records": field_records(sol.q),
    }
    write_file(out_dir / "solution.txt", solution_obj)
    trace_obj = {
        "format_version": FORMAT_VERSION,
        "config": cfg,
        "stages": [{
            "stage": r.stage, "box_radius": r.box_radius,
            "delta_q_norm": r.delta_q_norm, "residual_norm": r.residual_norm,
            "omega": list(r.omega), "decay_rate": r.decay_rate,
            "wall_time": r.wall_time,
        } for r in sol.trace],
    }
    write_file(out_dir / "trace.txt", trace_obj)
    print(f"solution -> {out_dir / 'solution.txt'}")
    print(f"trace    -> {out_dir / 'trace.txt'}")
    print(f"converged: {sol.converged}; final residual "
          f"{sol.quality['final_residual_l2']:.3e}; "
          f"tail {sol.quality['weighted_tail']:.3e}")
    if with_oracle:
        box = min(8, config.M ** max(1, min(2, config.r_max)))
        oracle = solver.brute_force_oracle(params, box)
        comp = solver.compare_with_oracle(sol, oracle, box)
        write_file(out_dir / "oracle_compare.txt", {
            "format_version": FORMAT_VERSION, "config": cfg, "box": box,
            "sup_discrepancy": comp["sup_discrepancy"],
            "omega_discrepancy": comp["omega_discrepancy"],
            "oracle_final_residual": oracle.final_residual,
        })
        print(f"oracle discrepancy {comp['sup_discrepancy']:.3e} "
              f"-> {out_dir / 'oracle_compare.txt'}")
    return EXIT_OK


def run_lde_scan(cfg: dict, out_dir: Path) -> int:
    params = model_params(cfg)
    scan = cfg.get("scan", {})
    M = int(scan.get("M", 8))
    thresholds = linop.Thresholds(
        rho1=float(scan.get("rho1", 0.1)), rho2=float(scan.get("rho2", 0.7)),
        rho3=float(scan.get("rho3", 0.9)),
        gamma_prime=scan.get("gamma_prime"))
    omega = spectrum.omega0(params)
    q0 = solver.initial_field(params)
    kernel = None
    if params.delta != 0.0:
        from .nonlin import linearize
        kernel = linearize(q0, params.p)
    window = scan.get("window")
    sigma_grid = None
    if window is not None:
        sigma_grid = np.linspace(float(window[0]), float(window[1]),
                                 int(scan.get("num_sigma", 1601)))
    report = linop.lde_scan(
        M, params, tuple(float(w) for w in omega), kernel,
        sigma_grid=sigma_grid, thresholds=thresholds,
        max_regions=int(scan.get("max_regions", 64)),
        num_sigma=int(scan.get("num_sigma", 1601)))

    summary = {
        "format_version": FORMAT_VERSION,
        "config": cfg,
        "scale": report.scale,
        "window": list(report.window),
        "sigma_points": len(report.sigma_grid),
        "n_regions": report.n_regions,
        "subsampled": report.subsampled,
        "bad_fraction": report.bad_fraction,
        "bad_measure": report.bad_measure,
        "comparison_value": report.comparison_value,
        "passes_fraction_bound": report.passes,
        "bad_intervals": [list(iv) for iv in report.bad_intervals],
    }
    write_file(out_dir / "lde_scan.txt", summary)
    plot_path = out_dir / "lde_scan_plot.dat"
    with plot_path.open("w") as fh:
        fh.write("# sigma worst_norm worst_decay_margin bad\n")
        for s, wn, wd, bd in zip(report.sigma_grid, report.worst_norm,
                                 report.worst_decay_margin, report.bad_flags):
            fh.write(f"{format(float(s), '.17g')} {format(float(wn), '.17g')} "
                     f"{format(float(wd), '.17g')} {int(bd)}\n")
    print(f"lde scan -> {out_dir / 'lde_scan.txt'} (+ plot data)")
    print(f"bad fraction {report.bad_fraction:.4f} vs exp(-M^rho1) = "
          f"{report.comparison_value:.4f}; bad measure {report.bad_measure:.3f}")
    return EXIT_OK


def run_report(solution_path: Path) -> int:
    try:
        obj = read_file(solution_path)
        quality = obj["quality"]
        omega = obj["omega"]
        omega_ref = obj["omega0"]
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: malformed solution file: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    dev = max(abs(w - w0) for w, w0 in zip(omega, omega_ref))
    print(f"omega            : {', '.join(format(w, '.12g') for w in omega)}")
    print(f"|omega - omega0| : {dev:.6e}")
    print(f"residual (l2)    : {quality['final_residual_l2']:.6e}")
    print(f"residual (sup)   : {quality['final_residual_sup']:.6e}")
    print(f"pde residual     : {quality['pde_residual_max']:.6e}")
    print(f"weighted tail    : {quality['weighted_tail']:.6e} "
          f"(rho = {quality['weighted_tail_rho']})")
    tail_thr = quality.get("tail_threshold", 0.0)
    if tail_thr and quality["weighted_tail"] >= tail_thr:
        print(f"WARN: tail >= sqrt(eps+delta) = {tail_thr:.6e}")
    print(f"anchors exact    : {quality['anchors_exact']}")
    print(f"support bound    : {quality['support_bound']}")
    print(f"lattice entries  : {quality['lattice_entries']}")
    cfg = obj.get("config", {})
    digest = ", ".join(f"{k}={v}" for k, v in sorted(cfg.get("cert", {}).items()))
    print(f"cert scales      : {digest}")
    return EXIT_OK


def run_oracle_compare(cfg: dict, out_dir: Path, solution_path: Path,
                       box: int = 8) -> int:
    try:
        obj = read_file(solution_path)
        params = model_params(cfg)
        qf = field_from_records(obj["records"], params.b, params.d)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: malformed solution file: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    oracle = solver.brute_force_oracle(params, box)
    worst = 0.0
    keys = {(tuple(k), tuple(n)) for k, n, _ in qf.canonical_items()}
    keys |= {(tuple(k), tuple(n)) for k, n, _ in oracle.q.canonical_items()}
    for k, n in keys:
        if max((abs(x) for x in k + n), default=0) > box:
            continue
        worst = max(worst, abs(qf.get(k, n) - oracle.q.get(k, n)))
    omega_diff = max(abs(a - b) for a, b in zip(obj["omega"], oracle.omega))
    write_file(out_dir / "oracle_compare.txt", {
        "format_version": FORMAT_VERSION, "config": cfg, "box": box,
        "sup_discrepancy": worst, "omega_discrepancy": omega_diff,
        "oracle_final_residual": oracle.final_residual,
    })
    print(f"sup discrepancy {worst:.3e}, omega discrepancy {omega_diff:.3e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qpwave",
        description="Anderson-localized quasi-periodic lattice wave solutions: "
                    "certification, staged solver and diagnostics.")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker count (results are thread-count "
                             "independent; computation is single-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None)
        p.add_argument("--preset", choices=["trivial", "small-coupling",
                                            "scan-demo"], default=None)
        p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("certify", help="write the certificate bundle")
    common(p)
    p = sub.add_parser("solve", help="run the staged solver")
    common(p)
    p.add_argument("--force", action="store_true",
                   help="solve without a certificate bundle")
    p.add_argument("--oracle", action="store_true",
                   help="also run the dense oracle and record the discrepancy")
    p = sub.add_parser("lde-scan", help="scan sigma against the LDE bounds")
    common(p)
    p = sub.add_parser("report", help="summarize a solution file")
    p.add_argument("solution", type=Path)
    p = sub.add_parser("oracle-compare",
                       help="compare a solution file against the dense oracle")
    common(p)
    p.add_argument("solution", type=Path)
    p.add_argument("--box", type=int, default=8)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        return run_report(args.solution)
    try:
        cfg = load_config(args.config, args.preset)
    except (OSError, ValueError, TypeError, KeyError,
            json.JSONDecodeError, QPWaveError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    out_dir = args.out if args.out is not None \
        else Path(cfg.get("output", {}).get("out_dir", "qpwave-out"))
    try:
        if args.command == "certify":
            return run_certify(cfg, out_dir)
        if args.command == "solve":
            return run_solve(cfg, out_dir, force=args.force,
                             with_oracle=args.oracle)
        if args.command == "lde-scan":
            return run_lde_scan(cfg, out_dir)
        if args.command == "oracle-compare":
            return run_oracle_compare(cfg, out_dir, args.solution, args.box)
    except ResonantBox as exc:
        print(f"error: resonant box: {exc}", file=sys.stderr)
        return EXIT_RESONANT_BOX
    except NonConvergence as exc:
        print(f"error: non-convergence: {exc}", file=sys.stderr)
        return EXIT_NON_CONVERGENCE
    except (PreconditionFailed, QPWaveError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
