"""Command-line front end: ``hierfrf {simulate,estimate-frf,fit,predict,diagnose}``.

Every subcommand reads an optional JSON config (``--config``); command-line
flags override it. Exit codes: 0 success, 1 usage or configuration error,
2 data error, 3 convergence failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .analysis import (
    DiagnosticError,
    PosteriorSummary,
    extrapolate_temperature,
    kde,
    nmse,
    population_marginal,
    posterior_predictive_frf,
    rhat_ess,
    summarize,
)
from .estimators import fit_trace
from .modal import TWO_PI, frf_real
from .model import FrfDataset, HierarchySpec, ModelSpecError, TemperatureSpec, build_model
from .model.frf_models import NoPoolingModel
from .sampler import SamplerConfig, SamplerError, format_float
from .signal import SpectralEstimationError, TimeSeries, h1_estimate, simulate_mdof_response
from .synthetic import TemperatureLaw, jittered_population, temperature_sweep

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 0, 1, 2, 3

# default analysis bands per simulated dataset kind
BAND_HZ = {"population": (24.0, 61.0), "temperature": (125.0, 170.0)}

DEFAULTS = {
    "seed": 0,
    "out_dir": "out",
    "sampler": {k: v for k, v in SamplerConfig().to_dict().items() if k != "seed"},
    "model": {
        "kind": "population",
        "pooling": "partial_pooling",
        "priors": None,
        "ordered_frequencies": True,
        "sample_residue_hyper": True,
    },
    "simulate": {
        "kind": "population",
        "mean_hz": [30.239439, 53.316906],
        "damping": [0.006, 0.006],
        "residues": [-0.004, -0.004],
        "counts": [100, 100, 7, 20],
        "jitter": 0.02,
        "damping_jitter": 0.1,
        "band_hz": None,
        "resolution_hz": 0.0488,
        "noise_fraction": 0.05,
        "noise_reference": 1,
        "law": {},
        "temperatures": None,
        "train_temperatures": [-10.0, -5.0, 10.0, 25.0],
        "train_count": 100,
        "time_series": False,
        "sample_rate_hz": 256.0,
        "duration_s": 3200.0,
    },
    "estimate": {
        "input": None,
        "output": None,
        "block_count": 20,
        "window": "hann",
        "band_hz": None,
    },
    "fit": {
        "data": [],
        "max_rhat": 1.05,
        "max_divergence_rate": 0.01,
        "grid_points": 512,
        "kde_points": 512,
        "predictive_max_draws": 2000,
        "band_composition": "literal",
    },
    "predict": {
        "summary": None,
        "trace": None,
        "tests": [],
        "train": [],
        "temperatures": None,
        "band_composition": "literal",
        "predictive_max_draws": 2000,
    },
    "diagnose": {
        "trace": None,
        "max_rhat": 1.05,
        "max_divergence_rate": 0.01,
    },
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# configuration


def _merge(base: dict, override: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise UsageError(f"unknown config key {path}{key!r}")
        if isinstance(base[key], dict) and base[key] and isinstance(value, dict):
            out[key] = _merge(base[key], value, f"{path}{key}.")
        else:
            out[key] = value
    return out


def load_config(path=None, **overrides) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            user = io.read_json(path)
        except io.DataFormatError as exc:
            raise UsageError(str(exc)) from None
        if not isinstance(user, dict):
            raise UsageError("config must be a JSON object")
        cfg = _merge(cfg, user)
    for key, value in overrides.items():
        if value is None:
            continue
        section, _, field = key.partition(".")
        if field:
            cfg[section][field] = value
        else:
            cfg[section] = value
    return cfg


def _sampler(cfg) -> SamplerConfig:
    try:
        return SamplerConfig.from_dict({**cfg["sampler"], "seed": int(cfg["seed"])})
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"sampler config: {exc}") from None


def _model_spec(cfg):
    m = cfg["model"]
    try:
        if m["kind"] == "temperature":
            return TemperatureSpec(sample_residue_hyper=bool(m["sample_residue_hyper"])) \
                .with_overrides(m["priors"])
        if m["kind"] == "population":
            return HierarchySpec(ordered_frequencies=bool(m["ordered_frequencies"])) \
                .with_overrides(m["priors"])
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"model config: {exc}") from None
    raise UsageError(f"model.kind must be 'population' or 'temperature', got {m['kind']!r}")


def _band(band):
    if band is None:
        return None
    lo, hi = (float(b) for b in band)
    if not lo < hi:
        raise UsageError("band lower limit must be below the upper limit")
    return lo, hi


# ---------------------------------------------------------------------------
# simulate


def _temperature_tag(T) -> str:
    return f"T{format_float(T).replace('-', 'm').replace('.', 'p')}"


def cmd_simulate(cfg) -> int:
    s = cfg["simulate"]
    out = io.ensure_dir(cfg["out_dir"])
    seed = int(cfg["seed"])
    band = _band(s["band_hz"] or BAND_HZ.get(s["kind"], (1.0, 2.0)))
    if s["kind"] == "population":
        pop = jittered_population(s["mean_hz"], s["damping"], s["residues"],
                                  n_domains=len(s["counts"]), jitter=s["jitter"],
                                  counts=s["counts"], band_hz=band,
                                  resolution_hz=s["resolution_hz"],
                                  noise_fraction=s["noise_fraction"],
                                  noise_reference=s["noise_reference"],
                                  damping_jitter=s["damping_jitter"], seed=seed)
        tags = [f"domain{k + 1}" for k in range(len(pop))]
    elif s["kind"] == "temperature":
        law = TemperatureLaw(**s["law"])
        pop = temperature_sweep(law, s["temperatures"], s["train_temperatures"],
                                s["train_count"], band, s["resolution_hz"],
                                s["noise_fraction"], seed)
        tags = [_temperature_tag(d.temperature) for d in pop.domains]
    else:
        raise UsageError("simulate.kind must be 'population' or 'temperature'")

    truth = {"kind": s["kind"], "seed": seed, "noise_sd": pop.noise_sd, "domains": []}
    ts_seeds = np.random.SeedSequence([seed, 1]).spawn(len(pop))
    for tag, d, ts_seed in zip(tags, pop.domains, ts_seeds):
        T = d.temperature
        io.write_frf_csv(out / f"{tag}_truth.csv", d.frequency_hz, d.frf.real, d.frf.imag, T)
        io.write_frf_csv(out / f"{tag}_test.csv", d.frequency_hz, d.noisy_real, temperature=T)
        if d.train_index.size:
            i = d.train_index
            io.write_frf_csv(out / f"{tag}_train.csv", d.frequency_hz[i], d.noisy_real[i],
                             temperature=T)
        entry = {"name": tag, "natural_frequency_hz": (d.params.natural_frequencies / TWO_PI).tolist(),
                 "damping": d.params.damping_ratios.tolist(),
                 "residue": d.params.residues.tolist(),
                 "train_count": int(d.train_index.size)}
        if T is not None:
            entry["temperature_c"] = T
        truth["domains"].append(entry)
        if s["time_series"]:
            fs = float(s["sample_rate_hz"])
            rng = np.random.default_rng(ts_seed)
            force = TimeSeries(rng.standard_normal(int(round(fs * float(s["duration_s"])))), fs)
            response = simulate_mdof_response(d.params, force)
            io.write_time_series_csv(out / f"{tag}_input.csv", force)
            io.write_time_series_csv(out / f"{tag}_output.csv", response)
    io.write_json(out / "truth.json", truth)
    print(f"wrote {len(pop)} domains to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# estimate-frf


def cmd_estimate_frf(cfg) -> int:
    e = cfg["estimate"]
    if not e["input"] or not e["output"]:
        raise UsageError("estimate.input and estimate.output time series are required")
    out = io.ensure_dir(cfg["out_dir"])
    force = io.read_time_series_csv(e["input"])
    response = io.read_time_series_csv(e["output"])
    grid, h = h1_estimate(force, response, int(e["block_count"]), e["window"])
    f_hz = grid.hz
    band = _band(e["band_hz"])
    keep = slice(None) if band is None else (f_hz >= band[0]) & (f_hz <= band[1])
    io.write_frf_csv(out / "frf.csv", f_hz[keep], h.real[keep], h.imag[keep])
    print(f"wrote {np.size(f_hz[keep])} spectral lines to {out / 'frf.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit


def _load_dataset(paths, temperature: bool) -> FrfDataset:
    if not paths:
        raise UsageError("fit.data must list at least one training CSV")
    domains = []
    for p in paths:
        obs = io.read_frf_csv(p, require_temperature=temperature)
        domains.append(type(obs)(obs.frequency, np.real(obs.value), obs.temperature, obs.name))
    return FrfDataset(domains)


def _grid(obs, n):
    lo, hi = float(np.min(obs.frequency)), float(np.max(obs.frequency))
    return np.linspace(lo, hi, n) if hi > lo else np.array([lo])


def _safe(name: str) -> str:
    return name.replace("[", "_").replace("]", "").replace(",", "_").replace(".", "_")


def _convergence(summary, trace, max_rhat, max_div):
    rhat = np.nanmax(summary.rhat) if np.any(np.isfinite(summary.rhat)) else np.nan
    div = trace.divergence_rate
    ok = bool(np.isfinite(rhat) and rhat <= max_rhat and div <= max_div)
    return ok, {"max_rhat": None if not np.isfinite(rhat) else float(rhat),
                "divergence_rate": float(div), "max_rhat_allowed": max_rhat,
                "max_divergence_rate_allowed": max_div, "converged": ok}


def _write_summary(path, summary, diag, extra=None):
    d = summary.to_dict()
    d["diagnostics"] = diag
    if extra:
        d.update(extra)
    io.write_json(path, d)


def cmd_fit(cfg) -> int:
    f = cfg["fit"]
    spec = _model_spec(cfg)
    temperature = isinstance(spec, TemperatureSpec)
    data = _load_dataset(f["data"], temperature)
    sampler = _sampler(cfg)
    out = io.ensure_dir(cfg["out_dir"])
    try:
        model = build_model(data, spec, cfg["model"]["pooling"])
    except (ModelSpecError, ValueError) as exc:
        raise UsageError(str(exc)) from None

    try:
        trace = fit_trace(model, sampler)
    except SamplerError as exc:
        io.write_json(out / "sampler_failure.json", {"error": str(exc), "report": exc.report})
        print(f"sampling failed: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE

    trace.write_csv(out / "trace.csv")
    trace.write_adaptation_json(out / "adaptation.json")
    summary = summarize(trace)
    ok, diag = _convergence(summary, trace, float(f["max_rhat"]), float(f["max_divergence_rate"]))
    meta = {"model": cfg["model"]["kind"], "pooling": str(model.pooling.value)
            if hasattr(model, "pooling") else "partial_pooling",
            "n_domains": data.n_domains, "data": [Path(p).name for p in f["data"]]}
    _write_summary(out / "summary.json", summary, diag, meta)

    if isinstance(model, NoPoolingModel):
        for k in range(data.n_domains):
            prefix = f"domain{k + 1}."
            idx = [i for i, n in enumerate(summary.names) if n.startswith(prefix)]
            sub = PosteriorSummary([summary.names[i][len(prefix):] for i in idx],
                                   summary.mean[idx], summary.sd[idx],
                                   {q: v[idx] for q, v in summary.quantiles.items()},
                                   summary.rhat[idx], summary.ess[idx])
            _write_summary(out / f"summary_domain{k + 1}.json", sub, diag,
                           {"data": Path(f["data"][k]).name})

    kde_dir = io.ensure_dir(out / "kde")
    for i, name in enumerate(trace.names):
        x = trace.constrained[:, :, i].ravel()
        if np.ptp(x) > 0:
            kde(x, int(f["kde_points"])).to_csv(kde_dir / f"{_safe(name)}.csv")
    if not temperature and not isinstance(model, NoPoolingModel) and data.n_domains > 1:
        for family, modes in (("omega", model.n_modes), ("zeta", model.n_modes),
                              ("A", model.n_modes), ("noise", 1)):
            for m in range(1, modes + 1):
                try:
                    curve = population_marginal(trace, family, m, seed=int(cfg["seed"]),
                                                grid_points=int(f["kde_points"]))
                except (KeyError, ValueError):
                    continue
                suffix = "" if family == "noise" else f"_{m}"
                curve.to_csv(kde_dir / f"population_{family}{suffix}.csv")

    for k in range(data.n_domains):
        obs = data[k]
        grid = _grid(obs, int(f["grid_points"]))
        band = posterior_predictive_frf(
            trace, model, grid, k, composition=f["band_composition"],
            max_draws=f["predictive_max_draws"], seed=int(cfg["seed"]))
        tag = _temperature_tag(obs.temperature) if temperature else f"domain{k + 1}"
        band.to_csv(out / f"predictive_{tag}.csv")

    print(json.dumps(diag, sort_keys=True))
    if not ok:
        print("convergence check failed", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


# ---------------------------------------------------------------------------
# predict


def cmd_predict(cfg) -> int:
    p = cfg["predict"]
    if not p["summary"]:
        raise UsageError("predict.summary is required")
    out = io.ensure_dir(cfg["out_dir"])
    summary = PosteriorSummary.from_dict(io.read_json(p["summary"]))
    tests = {}
    for path in p["tests"]:
        obs = io.read_frf_csv(path, require_temperature=True)
        tests[obs.temperature] = obs
    train = {}
    for path in p["train"]:
        obs = io.read_frf_csv(path, require_temperature=True)
        train[obs.temperature] = obs
    temps = sorted(tests) if p["temperatures"] is None else [float(t) for t in p["temperatures"]]
    missing = [t for t in temps if t not in tests]
    if missing:
        raise io.DataFormatError(f"no test FRF for temperatures {missing}")
    trace = io.read_trace_csv(p["trace"]) if p["trace"] else None

    try:
        preds = extrapolate_temperature(summary, temps)
    except ValueError as exc:
        raise io.DataFormatError(f"{p['summary']}: {exc}") from None
    rows = ["temperature_c,nmse_percent"]
    for T, pred in zip(temps, preds):
        test = tests[T]
        curve = frf_real(pred.modes, test.frequency)
        header, cols = ["freq_hz", "prediction"], [test.frequency / TWO_PI, curve]
        if trace is not None:
            band = posterior_predictive_frf(trace, None, test.frequency, None, temperature=T,
                                            composition=p["band_composition"],
                                            max_draws=p["predictive_max_draws"],
                                            seed=int(cfg["seed"]))
            header += ["band_mean", "lower", "upper"]
            cols += [band.mean, band.lower, band.upper]
        io._write_table(out / f"prediction_{_temperature_tag(T)}.csv", header, cols)
        mask = io.training_mask(test, train.get(T))
        score = nmse(test.real[mask], curve[mask])
        rows.append(f"{format_float(T)},{format_float(score)}")
    with open(out / "nmse.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")
    print("\n".join(rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# diagnose


def cmd_diagnose(cfg) -> int:
    d = cfg["diagnose"]
    if not d["trace"]:
        raise UsageError("diagnose.trace is required")
    out = io.ensure_dir(cfg["out_dir"])
    trace = io.read_trace_csv(d["trace"])
    report = {"parameters": {}, "divergence_rate": trace.divergence_rate,
              "chains": trace.n_chains, "draws": trace.n_draws}
    worst = 0.0
    for name in trace.names:
        try:
            rhat, ess = rhat_ess(trace, name)
        except DiagnosticError:
            rhat, ess = float("nan"), float("nan")
        report["parameters"][name] = {"rhat": None if np.isnan(rhat) else rhat,
                                      "ess_bulk": None if np.isnan(ess) else ess}
        if np.isfinite(rhat):
            worst = max(worst, rhat)
    ok = worst <= float(d["max_rhat"]) and trace.divergence_rate <= float(d["max_divergence_rate"])
    report.update(max_rhat=worst, converged=bool(ok))
    io.write_json(out / "diagnostics.json", report)
    print(f"max R-hat {worst:.4f}, divergence rate {trace.divergence_rate:.4f}")
    return EXIT_OK if ok else EXIT_CONVERGENCE


# ---------------------------------------------------------------------------
# entry point

COMMANDS = {"simulate": cmd_simulate, "estimate-frf": cmd_estimate_frf, "fit": cmd_fit,
            "predict": cmd_predict, "diagnose": cmd_diagnose}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, help="random seed (overrides config)")
    common.add_argument("--config", type=Path, help="JSON configuration file")
    common.add_argument("--out-dir", type=Path, help="output directory (overrides config)")

    parser = _Parser(prog="hierfrf", description="Hierarchical Bayesian FRF modelling.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="write a synthetic dataset")
    s.add_argument("--kind", choices=["population", "temperature"])
    s.add_argument("--time-series", action="store_true", default=None,
                   help="also write excitation/response time series")

    e = sub.add_parser("estimate-frf", parents=[common], help="H1 estimate from time series")
    e.add_argument("--input", help="excitation time-series CSV")
    e.add_argument("--output", help="response time-series CSV")
    e.add_argument("--blocks", type=int, help="number of averaging blocks")

    f = sub.add_parser("fit", parents=[common], help="sample the posterior")
    f.add_argument("--data", nargs="+", help="training FRF CSVs, one per domain")
    f.add_argument("--model", choices=["population", "temperature"])
    f.add_argument("--pooling", help="partial_pooling, no_pooling or complete_pooling")

    p = sub.add_parser("predict", parents=[common], help="extrapolate to temperatures")
    p.add_argument("--summary", help="summary.json from a temperature-model fit")
    p.add_argument("--trace", help="trace.csv for predictive bands")
    p.add_argument("--tests", nargs="*", help="test FRF CSVs with temperature_c")
    p.add_argument("--train", nargs="*", help="training CSVs whose lines are excluded")
    p.add_argument("--temperatures", type=float, nargs="*", help="temperatures to predict")

    g = sub.add_parser("diagnose", parents=[common], help="convergence report for a trace")
    g.add_argument("trace", nargs="?", help="trace.csv written by fit")
    return parser


def _overrides(args) -> dict:
    o = {"seed": args.seed, "out_dir": None if args.out_dir is None else str(args.out_dir)}
    get = lambda name: getattr(args, name, None)  # noqa: E731
    o.update({
        "simulate.kind": get("kind"), "simulate.time_series": get("time_series"),
        "estimate.input": get("input"), "estimate.output": get("output"),
        "estimate.block_count": get("blocks"),
        "fit.data": get("data"), "model.kind": get("model"), "model.pooling": get("pooling"),
        "predict.summary": get("summary"), "predict.tests": get("tests"),
        "predict.train": get("train"), "predict.temperatures": get("temperatures"),
    })
    if args.command == "predict":
        o["predict.trace"] = get("trace")
    if args.command == "diagnose":
        o["diagnose.trace"] = get("trace")
    return o


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help or a usage error; report the code instead
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config, **_overrides(args))
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"hierfrf: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (io.DataFormatError, SpectralEstimationError) as exc:
        print(f"hierfrf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (KeyError, TypeError, ValueError) as exc:
        print(f"hierfrf: invalid input: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
