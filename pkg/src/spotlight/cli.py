"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 configuration or input error,
3 numerical failure.
"""
import argparse
import hashlib
import json
import logging
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import bayes, matio, pipeline, plotting, projector, tomo, truncation
from .config import RunConfig
from .errors import ConfigError, NumericalError, PreconditionError
from .model import PartitionedForwardModel, whiten

log = logging.getLogger("spotlight")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
BUNDLE_FORMAT = "spotlight-bundle/1"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# bundles

class Bundle:
    """An experiment directory written by ``gen-experiment``."""

    def __init__(self, path):
        self.path = Path(path)
        mf = self.path / "manifest.json"
        if not mf.is_file():
            raise ConfigError(f"no experiment bundle at {self.path} (manifest.json missing)", "bundle")
        self.manifest = _read_json(mf)
        if self.manifest.get("format") != BUNDLE_FORMAT:
            raise ConfigError(f"{mf}: unsupported bundle format", "bundle")
        self._model = None

    @property
    def hash(self):
        return self.manifest["bundle_hash"]

    @property
    def sigma(self):
        return self.manifest["sigma_model"]

    def file(self, name):
        return self.path / name

    def model(self):
        if self._model is None:
            mf = self.manifest
            A1 = matio.read_mtx(self.file("A1.mtx"))
            A2 = matio.read_mtx(self.file("A2.mtx"))
            spot = np.asarray(mf["spotlight_indices"], dtype=np.int64)
            mask = np.ones(mf["n1"] + mf["n2"], dtype=bool)
            mask[spot] = False
            self._model = PartitionedForwardModel(A1, A2, noise_std=self.sigma,
                                                  spotlight_indices=spot,
                                                  clutter_indices=np.flatnonzero(mask))
        return self._model

    def data(self):
        return matio.read_vector(self.file("b.bin"))

    def whitened(self):
        return whiten(self.model(), self.data())

    def truth(self):
        return matio.read_vector(self.file("x1_true.bin"))


def _bundle_hash(out, names, sigma_model):
    h = hashlib.sha256()
    for name in names:
        h.update(name.encode())
        h.update(matio.file_sha256(out / name).encode())
    h.update(repr(float(sigma_model)).encode())
    return h.hexdigest()


def cmd_gen_experiment(cfg, out):
    out.mkdir(parents=True, exist_ok=True)
    roi, geometry = cfg.make_roi(), cfg.make_geometry()
    t = time.perf_counter()
    ex = tomo.build_local_experiment(cfg.grid_n, geometry, roi, sigma=cfg.noise_sigma, seed=cfg.seed,
                                     pixel_size=cfg.pixel_size, phantom_scale=cfg.phantom_scale,
                                     sigma_model=cfg.sigma)
    log.info("built experiment: m=%d n1=%d n2=%d in %.1fs", ex.model.m, ex.model.n1, ex.model.n2,
             time.perf_counter() - t)
    matio.write_mtx(out / "A1.mtx", ex.model.A1)
    matio.write_mtx(out / "A2.mtx", ex.model.A2)
    matio.write_vector(out / "b.bin", ex.b)
    matio.write_vector(out / "x1_true.bin", ex.x1_true)
    matio.write_vector(out / "x2_true.bin", ex.x2_true)
    img = ex.phantom.reshape(cfg.grid_n, cfg.grid_n)
    scale_full = matio.write_pgm(out / "phantom.pgm", img)
    scale_roi = matio.write_pgm(out / "phantom_roi.pgm", ex.roi_image(ex.x1_true))
    names = ["A1.mtx", "A2.mtx", "b.bin", "x1_true.bin", "x2_true.bin"]
    manifest = {
        "format": BUNDLE_FORMAT,
        "grid_n": cfg.grid_n,
        "pixel_size": cfg.pixel_size,
        "roi": roi.to_dict(),
        "geometry": geometry.to_dict(),
        "seed": cfg.seed,
        "noise_sigma": cfg.noise_sigma,
        "sigma_estimate": ex.sigma_est,
        "sigma_model": ex.model.noise_std,
        "zeta": cfg.zeta,
        "m": ex.model.m,
        "n1": ex.model.n1,
        "n2": ex.model.n2,
        "n_rays_total": ex.n_rays_total,
        "ray_rows": [int(r) for r in ex.ray_rows],
        "spotlight_indices": [int(i) for i in ex.model.spotlight_indices],
        "pgm_scale": {"phantom.pgm": scale_full, "phantom_roi.pgm": scale_roi},
        "files": {n: matio.file_sha256(out / n) for n in names},
        "bundle_hash": _bundle_hash(out, names, ex.model.noise_std),
    }
    _write_json(out / "manifest.json", manifest)
    plotting.plot_images({"phantom": img, "ROI truth": ex.roi_image(ex.x1_true)},
                         out / "phantom.png")
    return {"m": ex.model.m, "n1": ex.model.n1, "n2": ex.model.n2,
            "sigma_estimate": ex.sigma_est, "bundle_hash": manifest["bundle_hash"]}


def _basis_cache(bundle, wmodel):
    """Full left SVD of the whitened A2, cached next to the bundle."""
    path = bundle.file("basis.bin")
    side = Path(str(path) + ".json")
    if path.is_file() and side.is_file():
        meta = _read_json(side)
        if meta.get("bundle_hash") == bundle.hash and meta.get("full"):
            log.info("reusing cached SVD basis")
            return matio.read_dense(path), np.asarray(meta["spectrum"])
        log.info("bundle changed; recomputing SVD basis")
    t = time.perf_counter()
    U, s = projector.left_svd(wmodel.A2)
    log.info("SVD of %dx%d clutter matrix in %.1fs", wmodel.m, wmodel.n2, time.perf_counter() - t)
    basis = projector.SpotlightBasis(U=U[:, :0], kind=projector.TRUNCATED, spectrum=s,
                                     complement=U)
    projector.save_basis(basis, path, bundle_hash=bundle.hash, sigma=bundle.sigma)
    return U, s


def cmd_analyze_clutter(cfg, bundle, out):
    wmodel, _ = bundle.whitened()
    U, s = _basis_cache(bundle, wmodel)
    an = truncation.analyze(s, cfg.zeta ** 2, wmodel.m, cfg.rule, cap=cfg.curve_cap)
    below = np.flatnonzero(an.R < 1.0)
    r_small = int(below[0]) if below.size else None
    r_argmin, _ = truncation.select_rank(an.R, truncation.ARGMIN)
    with open(out / "r_curve.csv", "w") as fh:
        fh.write("r,R_r\n")
        for r, v in enumerate(an.R):
            fh.write(f"{r},{float(v)!r}\n")
    with open(out / "spectrum.csv", "w") as fh:
        fh.write("j,lambda\n")
        for j, v in enumerate(an.lam, start=1):
            fh.write(f"{j},{float(v)!r}\n")
    report = an.to_dict()
    report.update({"zeta": cfg.zeta, "sigma": bundle.sigma, "n2": wmodel.n2,
                   "selected_r_smallest_below_one": r_small,
                   "selected_r_argmin": r_argmin,
                   "bundle_hash": bundle.hash})
    if an.no_projection_needed:
        report["recommendation"] = "no projection necessary (R_0 < 1)"
    _write_json(out / "clutter_report.json", report)
    plotting.plot_r_curve(an.R, an.selected_r, out / "r_curve.png", argmin_r=r_argmin)
    plotting.plot_spectrum(an.lam, out / "spectrum.png")
    return report


def _reference(bundle, cfg, wmodel, bw):
    path = bundle.file("x1_reference.bin")
    side = bundle.file("x1_reference.json")
    key = {"bundle_hash": bundle.hash, "zeta": cfg.zeta}
    if path.is_file() and side.is_file() and _read_json(side) == key:
        return matio.read_vector(path)
    x1 = pipeline.reference_solution(wmodel, cfg.zeta, bw, cfg.solver)
    matio.write_vector(path, x1)
    _write_json(side, key)
    return x1


def cmd_solve(cfg, bundle, out):
    wmodel, bw = bundle.whitened()
    method = cfg.method
    basis = analysis = None
    if method == "projected":
        kind, _ = pipeline.parse_basis_spec(cfg.basis)
        svd = _basis_cache(bundle, wmodel) if kind != "randomized" else None
        basis, analysis = pipeline.build_basis(wmodel, cfg.basis, cfg.zeta, cfg.seed, svd, cfg.rule)
    t = time.perf_counter()
    x1 = pipeline.run_method(method, wmodel, bw, cfg.zeta, basis, cfg.solver)
    elapsed = time.perf_counter() - t
    ref = _reference(bundle, cfg, wmodel, bw)
    truth = bundle.truth()
    roi = bundle.manifest["roi"]
    shape = (roi["height"], roi["width"])
    matio.write_vector(out / f"x1_{method}.bin", x1)
    matio.write_vector(out / f"x1_{method}.csv", x1)
    pgm_scale = matio.write_pgm(out / f"x1_{method}.pgm", x1.reshape(shape))
    report = {
        "method": method,
        "zeta": cfg.zeta,
        "sigma": bundle.sigma,
        "basis": cfg.basis if method == "projected" else None,
        "r": None if basis is None else basis.r,
        "rule": cfg.rule if analysis is not None else None,
        "error_vs_reference": bayes.relative_error(x1, ref),
        "error_vs_truth": bayes.relative_error(x1, truth),
        "seconds": round(elapsed, 3),
        "pgm_scale": pgm_scale,
        "bundle_hash": bundle.hash,
    }
    _write_json(out / f"solve_{method}.json", report)
    plotting.plot_images({"reference x1*": ref.reshape(shape), "truth": truth.reshape(shape),
                          f"{method} (d={report['error_vs_reference']:.3g})": x1.reshape(shape)},
                         out / f"x1_{method}.png", ncols=3)
    return report


def parse_r_list(spec, m):
    if spec is None:
        return pipeline.default_r_list(m)
    if isinstance(spec, list):
        rs = [int(r) for r in spec]
    elif ":" in spec:
        parts = [int(p) if p else None for p in spec.split(":")]
        start, stop, step = (parts + [None, None, None])[:3]
        rs = list(range(start or 0, m if stop is None else min(stop, m), step or 1))
    else:
        rs = [int(p) for p in spec.split(",") if p.strip()]
    if not rs or min(rs) < 0 or max(rs) >= m:
        raise ConfigError(f"r_list must hold ranks in [0, {m - 1}]", "r_list")
    return sorted(set(rs))


def cmd_sweep_r(cfg, bundle, out):
    wmodel, bw = bundle.whitened()
    try:
        r_list = parse_r_list(cfg.r_list, wmodel.m)
    except ValueError as exc:
        raise ConfigError(f"cannot parse r_list: {exc}", "r_list") from exc
    U, s = _basis_cache(bundle, wmodel)
    ref = _reference(bundle, cfg, wmodel, bw)
    an = pipeline.select_rank_for(s, cfg.zeta, wmodel.m, cfg.rule)
    rs = sorted(set(r_list) | {an.selected_r})
    errs = pipeline.sweep_ranks(wmodel, bw, cfg.zeta, rs, U, ref)
    sweep = dict(zip(rs, errs))
    swept = np.array([sweep[r] for r in r_list])
    with open(out / "sweep_r.csv", "w") as fh:
        fh.write("r,d\n")
        for r, d in zip(r_list, swept):
            fh.write(f"{r},{float(d)!r}\n")
    i = int(np.argmin(swept))
    report = {
        "zeta": cfg.zeta,
        "rule": cfg.rule,
        "argmin_r": r_list[i],
        "min_error": float(swept[i]),
        "selected_r": an.selected_r,
        "selected_error": float(sweep[an.selected_r]),
        "first_error": float(swept[0]),
        "last_error": float(swept[-1]),
        "interior_minimum": bool(swept[i] < min(swept[0], swept[-1])),
        "ratio_selected_to_min": float(sweep[an.selected_r] / swept[i]),
        "bundle_hash": bundle.hash,
    }
    _write_json(out / "sweep_report.json", report)
    plotting.plot_error_sweep(r_list, swept, out / "sweep_r.png", selected_r=an.selected_r)
    return report


def cmd_verify(suite, fault, out):
    from . import verify

    results = verify.run(suite, fault=fault)
    report = {"suite": suite, "fault_injected": fault, "n_properties": len(results),
              "all_passed": all(r["passed"] for r in results), "properties": results}
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "verify_report.json", report)
    return report


# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (bundle directory for gen-experiment)")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="cap on BLAS threads")
    common.add_argument("--deterministic", action="store_true",
                        help="single-threaded BLAS for reproducible accumulation order")
    common.add_argument("-v", "--verbose", action="store_true")

    run_opts = argparse.ArgumentParser(add_help=False)
    run_opts.add_argument("--bundle", help="experiment bundle (defaults to --out)")
    run_opts.add_argument("--zeta", type=float, help="prior standard deviation")
    run_opts.add_argument("--rule", choices=["smallest-below-one", "argmin"])

    p = _Parser(prog="spotlight", description="Spotlight inversion toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-experiment", parents=[common], help="simulate a local tomography bundle")
    g.add_argument("--preset", choices=["desk", "large"])
    g.add_argument("--grid-n", type=int, dest="grid_n")
    g.add_argument("--roi-size", type=int, dest="roi_size")
    g.add_argument("--n-angles", type=int, dest="n_angles")
    g.add_argument("--noise-sigma", type=float, dest="noise_sigma")
    g.add_argument("--zeta", type=float)

    a = sub.add_parser("analyze-clutter", parents=[common, run_opts], help="R_r curve and rank selection")
    a.add_argument("--cap", type=int, dest="curve_cap", help="maximum curve length")

    s = sub.add_parser("solve", parents=[common, run_opts], help="compute one MAP reconstruction")
    s.add_argument("--method", choices=list(pipeline.METHODS))
    s.add_argument("--basis", help="exact | truncated:<r> | truncated:auto | randomized:<k>")
    s.add_argument("--solver", choices=["auto", "direct", "cg"])

    w = sub.add_parser("sweep-r", parents=[common, run_opts], help="error versus truncation rank")
    w.add_argument("--r-list", dest="r_list", help="start:stop:step or comma list")

    v = sub.add_parser("verify", parents=[common], help="run the property suites")
    v.add_argument("suite", nargs="?", default="all", choices=["theory", "numerics", "all"])
    v.add_argument("--inject-fault", action="store_true",
                   help="perturb the projector by 1e-3 (negative control)")
    return p


_CFG_KEYS = ("seed", "zeta", "rule", "preset", "grid_n", "roi_size", "n_angles", "noise_sigma",
             "curve_cap", "method", "basis", "solver", "r_list")


def _thread_limit(args):
    n = 1 if args.deterministic else args.threads
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def _resolve(args):
    overrides = {k: getattr(args, k) for k in _CFG_KEYS if hasattr(args, k)}
    if args.command != "gen-experiment":
        bundle_dir = getattr(args, "bundle", None) or args.out
        if bundle_dir is None:
            raise ConfigError("need --bundle or --out pointing at an experiment bundle", "bundle")
        bundle = Bundle(bundle_dir)
        # settings baked into the bundle win over defaults, not over explicit flags
        saved = bundle.file("config.json")
        base = _read_json(saved) if saved.is_file() else {}
        file_values = dict(base)
        if args.config:
            file_values.update(_read_json(args.config))
        cfg = RunConfig.from_sources(file_values, overrides)
        return cfg, bundle
    if args.config:
        return RunConfig.load(args.config, overrides), None
    return RunConfig.from_sources({}, overrides), None


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        with _thread_limit(args):
            if args.command == "verify":
                report = cmd_verify(args.suite, args.inject_fault,
                                    Path(args.out) if args.out else None)
                print(json.dumps(report, indent=2))
                return EXIT_OK if report["all_passed"] else EXIT_NUMERICAL
            cfg, bundle = _resolve(args)
            if args.command == "gen-experiment":
                if not args.out:
                    raise ConfigError("gen-experiment needs --out", "out")
                out = Path(args.out)
                summary = cmd_gen_experiment(cfg, out)
                _write_json(out / "config.json", cfg.to_dict())
            else:
                out = Path(args.out) if args.out else bundle.path
                out.mkdir(parents=True, exist_ok=True)
                run = {"analyze-clutter": cmd_analyze_clutter, "solve": cmd_solve,
                       "sweep-r": cmd_sweep_r}[args.command]
                summary = run(cfg, bundle, out)
                _write_json(out / f"resolved_config.{args.command}.json", cfg.to_dict())
            print(json.dumps(summary, indent=2, sort_keys=True))
            return EXIT_OK
    except ConfigError as exc:
        field = f" [{exc.field}]" if exc.field else ""
        print(f"spotlight: configuration error{field}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PreconditionError, OSError, json.JSONDecodeError) as exc:
        print(f"spotlight: input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"spotlight: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
