"""Command-line driver.

    rydkerr run --scenario fig3 --out results/
    rydkerr kernel --config my.toml --set slab.length_over_xi=10

Exit status: 0 on success, 2 for invalid input, 3 for numerical failures.
The default worker count comes from RYDKERR_THREADS (1 when unset).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import NumericalError, ValidationError
from .homodyne import ProbeMode, mode_moments, probe_overlap, wigner
from .massterm import DEFAULT_THRESHOLD, mass_correction, validity_scan
from .medium import build_map, derive
from .phase import build_phase_kernel, kerr_summary, universal_shape
from .scattering import (CoherentInput, CorrelatorRequest, coherent_out, evaluate_requests, read_requests,
                         write_correlator_csv)

THREADS_ENV = "RYDKERR_THREADS"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _dump(obj):
    return json.dumps(_jsonable(obj), sort_keys=True)


def _write_csv(path, columns, rows, header):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {_dump(header)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


class Context:
    """One resolved system with lazily built kernel and map."""

    def __init__(self, cfg, workers):
        self.cfg = cfg
        self.workers = workers
        self.params, self.medium = cfgmod.build_system(cfg)
        self.derived = derive(self.params, self.medium)
        self._kernel = None

    @property
    def tol(self):
        return self.cfg["tolerances"]

    @property
    def kernel(self):
        if self._kernel is None:
            cmap = build_map(self.params, self.medium, tol=self.tol["map_tol"])
            self._kernel = build_phase_kernel(self.params, self.medium, cmap=cmap, rtol=self.tol["kernel_rtol"],
                                              workers=self.workers)
        return self._kernel

    def header(self, product):
        return {"product": product, "config": self.cfg, "derived": vars(self.derived)}

    def coherent_input(self):
        spec = self.cfg.get("input")
        if not isinstance(spec, dict):
            raise ValidationError("this product needs an [input] table", "input")
        kind = spec.get("kind", "gaussian")
        phase = cfgmod._number(spec, "phase", "input", 0.0)
        if kind == "gaussian":
            kw = {k: cfgmod._number(spec, k, "input") for k in ("mean_photons", "peak_density") if k in spec}
            inp = CoherentInput.gaussian(cfgmod._number(spec, "width", "input", positive=True),
                                         cfgmod._number(spec, "center", "input", 0.0), phase=phase,
                                         cutoff=cfgmod._number(spec, "cutoff", "input", 10.0), **kw)
        elif kind == "flat_top":
            inp = CoherentInput.flat_top(cfgmod._number(spec, "density", "input"),
                                         cfgmod._number(spec, "start", "input"),
                                         cfgmod._number(spec, "stop", "input"), phase=phase)
        else:
            raise ValidationError(f"unknown input kind {kind!r}", "input.kind")
        probe_spec = self.cfg.get("probe", {})
        if "photon_number" in probe_spec:
            target = cfgmod._number(probe_spec, "photon_number", "probe", positive=True)
            c = probe_overlap(inp, self.probe())
            if c == 0:
                raise ValidationError("probe does not overlap the input", "probe")
            inp = inp.scaled(math.sqrt(target) / abs(c))
        return inp

    def probe(self):
        spec = self.cfg.get("probe")
        if not isinstance(spec, dict):
            raise ValidationError("this product needs a [probe] table", "probe")
        return ProbeMode.gaussian(cfgmod._number(spec, "width", "probe", positive=True),
                                  cfgmod._number(spec, "center", "probe", 0.0))


def product_kernel(ctx, out, stem):
    k = ctx.kernel
    pad = cfgmod._number(ctx.cfg.get("kernel", {}), "pad_over_xi_out", "kernel", 10.0) * k.xi_out
    u, phi = k.table(pad)
    uni = universal_shape(u / k.xi_out)
    rows = zip(u, u / k.xi_out, phi, phi / k.phi0, uni)
    path = out / f"{stem}kernel.csv"
    _write_csv(path, ["u", "u_over_xi_out", "phi", "phi_over_phi0", "universal"], rows, ctx.header("kernel"))
    core = np.abs(u) <= 3 * k.xi_out
    summary = kerr_summary(k)
    return {"file": path.name, "phi0": k.phi0, "xi_out": k.xi_out, "extent": k.extent,
            "interpolation_error": k.interpolation_error, "sigma": summary.sigma,
            "max_deviation_from_universal": float(np.max(np.abs(phi[core] / k.phi0 - uni[core])))}


def product_kerr_scan(ctx, out, stem):
    spec = ctx.cfg.get("kerr_scan", {"start": 1e-3, "stop": 3 * math.pi, "num": 100})
    phi0s = cfgmod.axis(spec.get("phi0", spec), "kerr_scan")
    base = ctx.kernel
    rows = []
    for p in phi0s:
        s = kerr_summary(base.scaled(p / base.phi0))
        rows.append((p, s.Phi, s.eta, s.sigma))
    path = out / f"{stem}kerr_scan.csv"
    _write_csv(path, ["phi0", "Phi", "eta", "sigma"], rows, ctx.header("kerr-scan"))
    return {"file": path.name, "points": len(rows)}


def product_field_out(ctx, out, stem):
    inp = ctx.coherent_input()
    spec = ctx.cfg.get("field_out", {})
    lo, hi = inp.window
    taus = cfgmod.axis(spec.get("tau", {"start": lo, "stop": hi, "num": 201}), "field_out.tau")
    eout = np.atleast_1d(coherent_out(inp, ctx.kernel, taus))
    ein = np.atleast_1d(inp(taus))
    ratio = np.divide(eout, ein, out=np.zeros_like(eout), where=np.abs(ein) > 0)
    rows = zip(taus, ein.real, ein.imag, eout.real, eout.imag, np.abs(ratio), np.angle(ratio))
    path = out / f"{stem}field_out.csv"
    _write_csv(path, ["tau", "re_in", "im_in", "re_out", "im_out", "abs_ratio", "phase"], rows,
               ctx.header("field-out"))
    return {"file": path.name, "points": len(taus)}


def product_correlators(ctx, out, stem):
    inp = ctx.coherent_input()
    spec = ctx.cfg.get("correlators", {})
    if "file" in spec:
        reqs = read_requests(spec["file"])
    elif "requests" in spec:
        reqs = [CorrelatorRequest(int(r[0]), int(r[1]), tuple(float(x) for x in r[2:])) for r in spec["requests"]]
    else:
        raise ValidationError("give correlators.file or correlators.requests", "correlators")
    results = evaluate_requests(inp, ctx.kernel, reqs, workers=ctx.workers)
    path = out / f"{stem}correlators.csv"
    write_correlator_csv(path, reqs, results, [_dump(ctx.header("correlators"))])
    return {"file": path.name, "requests": len(reqs)}


def product_wigner(ctx, out, stem):
    inp = ctx.coherent_input()
    probe = ctx.probe()
    spec = ctx.cfg.get("wigner", {})
    method = spec.get("method", "narrow-probe")
    n_max = spec.get("n_max")
    moments = mode_moments(inp, ctx.kernel, probe, n_max=n_max, method=method, rtol=ctx.tol["moments_rtol"])
    kw = {"num": int(spec.get("num", 161)), "tol": ctx.tol["wigner_tol"]}
    if "half_width" in spec:
        kw["half_width"] = cfgmod._number(spec, "half_width", "wigner", positive=True)
    grid = wigner(moments, **kw)
    diag = grid.diagnostics()
    diag.update({"overlap": moments.overlap, "covariance": grid.covariance(), "mean": grid.mean(),
                 "axis_ratio": grid.axis_ratio(), "moment_tail_estimate": moments.tail_estimate})
    path = out / f"{stem}wigner.csv"
    _write_csv(path, ["q", "p", "W"], grid.rows(), {**ctx.header("wigner"), "diagnostics": diag})
    (out / f"{stem}wigner.json").write_text(_dump({"header": ctx.header("wigner"), "diagnostics": diag}) + "\n")
    return {"file": path.name, **{k: diag[k] for k in ("normalization", "purity", "converged", "axis_ratio")}}


def product_mass_validity(ctx, out, stem):
    spec = ctx.cfg.get("mass_validity", {})
    g_axis = cfgmod.axis(spec.get("g_over_omega", {"start": 0.05, "stop": 2.0, "num": 40}), "mass_validity.g_over_omega")
    l_axis = cfgmod.axis(spec.get("l_over_xi", {"start": 1.0, "stop": 200.0, "num": 40}), "mass_validity.l_over_xi")
    phi0 = cfgmod._number(spec, "phi0", "mass_validity", 1.0)
    thr = cfgmod._number(spec, "threshold", "mass_validity", DEFAULT_THRESHOLD, positive=True)
    rows = [(x, ell, mag, ratio, int(ok)) for x, ell, mag, ratio, ok in validity_scan(g_axis, l_axis, phi0, thr)]
    path = out / f"{stem}mass_validity.csv"
    _write_csv(path, ["g_over_omega", "l_over_xi", "theta_m_abs", "theta_m_over_phi0", "valid"], rows,
               ctx.header("mass-validity"))
    report = {"file": path.name, "points": len(rows)}
    if ctx.medium.kind == "slab":
        mc = mass_correction(ctx.params, ctx.medium, thr)
        report.update({"system_theta_m": mc.theta_m, "system_valid": mc.valid})
    return report


PRODUCTS = {
    "kernel": product_kernel,
    "kerr-scan": product_kerr_scan,
    "field-out": product_field_out,
    "correlators": product_correlators,
    "wigner": product_wigner,
    "mass-validity": product_mass_validity,
}


def run_products(cfg, products, out, workers):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = {"name": cfg.get("name"), "tolerances": cfg["tolerances"], "runs": []}
    for tag, sub in cfgmod.expand_sweep(cfg):
        ctx = Context(sub, workers)
        stem = f"{cfg.get('name', 'custom')}_{tag + '_' if tag else ''}"
        entry = {"tag": tag, "results": {}}
        for name in products:
            if name not in PRODUCTS:
                raise ValidationError(f"unknown product {name!r}; choose from {sorted(PRODUCTS)}", "outputs")
            entry["results"][name] = PRODUCTS[name](ctx, out, stem)
        report["runs"].append(entry)
    (out / f"{cfg.get('name', 'custom')}_report.json").write_text(_dump(report) + "\n")
    return report


def run_verify(out, workers, fast=False):
    from .oracle import oracle_comparison

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    result = oracle_comparison(refinements=2 if fast else 3)
    (out / "verify.json").write_text(_dump(result) + "\n")
    if not result["passed"]:
        raise NumericalError(f"oracle comparison failed: {_dump(result['checks'])}")
    return result


def _threads(value):
    if value is not None:
        return value
    env = os.environ.get(THREADS_ENV)
    if env is None:
        return 1
    try:
        n = int(env)
    except ValueError:
        raise ValidationError(f"{THREADS_ENV} must be an integer, got {env!r}", THREADS_ENV)
    if n < 1:
        raise ValidationError(f"{THREADS_ENV} must be >= 1", THREADS_ENV)
    return n


def build_parser():
    parser = argparse.ArgumentParser(prog="rydkerr", description="Rydberg slow-light Kerr numerics")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", *PRODUCTS):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path)
        p.add_argument("--scenario", choices=sorted(cfgmod.BUILTIN))
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--out", type=Path, default=Path("."))
        p.add_argument("--threads", type=int)
    p = sub.add_parser("verify")
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--threads", type=int)
    p.add_argument("--fast", action="store_true", help="two grid refinements instead of three")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        workers = _threads(args.threads)
        if args.command == "verify":
            result = run_verify(args.out, workers, args.fast)
            print(_dump({"passed": result["passed"]}))
            return 0
        cfg = cfgmod.load(args.config, args.scenario, args.overrides)
        products = cfg.get("outputs", []) if args.command == "run" else [args.command]
        if not products:
            raise ValidationError("no outputs requested", "outputs")
        report = run_products(cfg, products, args.out, workers)
        print(_dump({"name": report["name"], "runs": len(report["runs"])}))
        return 0
    except ValidationError as exc:
        print(f"rydkerr: invalid input: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"rydkerr: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
