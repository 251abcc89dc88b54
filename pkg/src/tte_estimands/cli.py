"""Command-line pipelines: simulate, discretize, transform, estimate, sensitivity, validate.

Exit codes: 0 success, 1 runtime failure, 2 configuration error (with the
field path), 3 input data that fails to parse or validate.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, PipelineConfig, load_config
from .data import CompetingDataset, TrialDataset, apply_conventions, validate_dataset
from .discretize import discretize_times, ice_months
from .estimation import (HistorySpec, aalen_johansen_cif, contrast, gcomp_with_targeting, ipcw_survival,
                         km_estimate, seq_gcomp)
from .io import (CsvFormatError, DataValidationError, atomic_write_text, load_dataset, load_ices, load_times,
                 save_dataset, save_ices, save_oracle)
from .strategies import IceRecord, RegimeSpec, StrategyPlan, compose_plan, make_regime_while_on_treatment

log = logging.getLogger("tte_estimands")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _report(cfg: PipelineConfig, command: str, inputs: dict, body: dict) -> dict:
    return {
        "tool": "tte-estimands",
        "version": __version__,
        "command": command,
        "config": cfg.model_dump(mode="json"),
        "inputs": {k: _sha256(v) for k, v in inputs.items() if v is not None},
        **body,
    }


def _write_report(report: dict, path, fmt: str, rows=None) -> None:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["estimand", "method", "point", "se", "ci_low", "ci_high", "n_used"])
        for r in rows or []:
            w.writerow([r["estimand"], r["method"], repr(r["point"]), _num(r.get("se")),
                        _num(r["ci95"][0]), _num(r["ci95"][1]), r.get("n_used", "")])
        text = buf.getvalue()
    else:
        text = json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(path, text)


def _num(v):
    return "NA" if v is None else repr(float(v))


def _dgp(cfg: PipelineConfig):
    from .simulate import CODE_COEF_Y, PROSE_COEF_Y, DgpConfig

    d = cfg.dgp.model_dump()
    variant = d.pop("variant")
    if d["coef_y"] is None:
        d["coef_y"] = PROSE_COEF_Y if variant == "prose" else CODE_COEF_Y
    return DgpConfig(K=cfg.timeline.K, seed=cfg.seed, **d)


def _plan(cfg: PipelineConfig) -> StrategyPlan:
    return StrategyPlan.from_mapping(dict(cfg.plan), order="declared")


def _load(cfg: PipelineConfig, path) -> TrialDataset:
    ds = load_dataset(path, censor_encoding=cfg.censor_encoding, covariates=cfg.covariates,
                      time_covariates=cfg.time_covariates)
    if ds.K != cfg.timeline.K:
        raise ConfigError("timeline.K", f"data has K = {ds.K}, config says {cfg.timeline.K}")
    return ds


def _prepared(cfg, args) -> TrialDataset:
    ds = _load(cfg, args.input)
    if args.ices:
        ices = load_ices(args.ices)
        ds = compose_plan(ds, ices, _plan(cfg))
    return ds


# -- subcommands -------------------------------------------------------------

def cmd_simulate(cfg: PipelineConfig, args) -> int:
    from .simulate import simulate_potential, simulate_trial

    dgp = _dgp(cfg)
    sim = simulate_trial(dgp)
    save_dataset(sim.dataset, args.output, cfg.censor_encoding)
    if args.oracle:
        save_oracle(simulate_potential(dgp), list(sim.dataset.ids), dgp.K, args.oracle)
    if args.ices:
        save_ices(sim.ices, args.ices)
    log.info("simulated %d subjects over %d follow-ups", dgp.n, dgp.K)
    return EXIT_OK


def cmd_discretize(cfg: PipelineConfig, args) -> int:
    ids, tY, tC, tI, arm = load_times(args.input)
    K = cfg.timeline.K
    T, delta, rows = discretize_times(K, tY, tC)
    A = np.repeat(arm[:, None], K, axis=1)
    ds = apply_conventions(TrialDataset(ids=ids, W=np.zeros((len(ids), 0)), A=A,
                                        C=np.isnan(rows).astype(np.int8), Y=rows, unit=cfg.timeline.unit))
    save_dataset(ds, args.output, cfg.censor_encoding)
    if args.ices:
        months = ice_months(K, T, tI) if tI is not None else np.zeros(len(ids), dtype=int)
        save_ices([IceRecord(i, "ice", int(m), False) for i, m in zip(ids, months) if m > 0], args.ices)
    return EXIT_OK


def cmd_transform(cfg: PipelineConfig, args) -> int:
    if not args.ices:
        raise ConfigError("--ices", "transform needs an ICE records file")
    ds = _prepared(cfg, args)
    save_dataset(ds, args.output, cfg.censor_encoding)
    return EXIT_OK


def _regime(cfg: PipelineConfig, arm: int, K: int) -> RegimeSpec:
    k = cfg.estimand.while_on_treatment_k
    if k is not None and arm != 0:
        return make_regime_while_on_treatment(k, K)
    return RegimeSpec.static(arm, K)


def _arms(cfg: PipelineConfig) -> list[int]:
    arms = cfg.estimand.arms
    if cfg.estimand.summary == "survival_difference":
        if len(arms) != 2:
            raise ConfigError("estimand.arms", "survival_difference needs two arms")
        return arms
    return arms[:1] if cfg.estimand.summary == "survival_at_k" else arms


def _horizon(cfg, ds) -> int:
    t = cfg.estimand.horizon or ds.K
    if t > ds.K:
        raise ConfigError("estimand.horizon", f"exceeds K = {ds.K}")
    return t


def _survival(cfg: PipelineConfig, ds: TrialDataset, arm: int, seed: int):
    """Arm-specific survival at the horizon by the configured method."""
    e = cfg.estimator
    t = _horizon(cfg, ds)
    hist = HistorySpec(**e.history.model_dump())
    if e.method == "km":
        return km_estimate(ds, arm=arm, horizon=t)
    regime = _regime(cfg, arm, ds.K)
    if e.method == "ipcw":
        return ipcw_survival(ds, regime, t, censor_model=e.censor_model, treatment_model=e.treatment_model,
                             floor=e.weight_floor, history=hist)
    if e.method == "gcomp":
        return seq_gcomp(ds, regime, t, history=hist, model=e.outcome_model, n_boot=e.n_boot, seed=seed)
    if e.method == "tmle":
        return gcomp_with_targeting(ds, regime, t, history=hist, model=e.outcome_model,
                                    censor_model=e.censor_model, treatment_model=e.treatment_model,
                                    floor=e.weight_floor)[1]
    raise ConfigError("estimator.method", f"{e.method} does not estimate survival")


def _tag(res, arm):
    return dataclasses.replace(res, estimand=f"{res.estimand} arm {arm}")


def _estimate(cfg: PipelineConfig, ds: TrialDataset, seed: int) -> list:
    if cfg.estimator.method == "aalen_johansen" or cfg.estimand.summary == "cif_at_k":
        if not isinstance(ds, CompetingDataset):
            raise ConfigError("estimator.method", "cumulative incidence needs competing-event data")
        out = []
        for arm in cfg.estimand.arms:
            res = aalen_johansen_cif(ds, arm=arm, horizon=_horizon(cfg, ds))
            out += [_tag(res["PE"], arm), _tag(res["CE"], arm)]
        return out
    arms = _arms(cfg)
    res = [_tag(_survival(cfg, ds, a, seed), a) for a in arms]
    if cfg.estimand.summary == "survival_difference":
        res.append(contrast(res[0], res[1], label=f"S({_horizon(cfg, ds)}) arm {arms[0]} - arm {arms[1]}"))
    return res


def cmd_estimate(cfg: PipelineConfig, args) -> int:
    ds = _prepared(cfg, args)
    results = _estimate(cfg, ds, cfg.seed)
    rows = [r.to_dict() for r in results]
    report = _report(cfg, "estimate", {"input": args.input, "ices": args.ices}, {"results": rows})
    _write_report(report, args.output, args.format or cfg.format, rows)
    return EXIT_OK


def cmd_sensitivity(cfg: PipelineConfig, args) -> int:
    from .mi import MiSpec, combined_mi, rubin_pool, run_mi

    ds = _prepared(cfg, args)
    mc = cfg.mi
    hist = HistorySpec(**cfg.estimator.history.model_dump())
    if cfg.estimator.method not in ("km", "ipcw", "gcomp", "tmle"):
        raise ConfigError("estimator.method", "sensitivity analysis needs a survival estimator")

    def first(d):
        return _estimate(cfg, d, cfg.seed)[0]

    if mc.by_kind:
        _, completed = combined_mi(ds, mc.by_kind, first, m=mc.m, seed=cfg.seed, reference_arm=mc.reference_arm,
                                   history=hist, default=mc.default, return_datasets=True)
    else:
        spec = MiSpec(mc.assumption, m=mc.m, seed=cfg.seed, reference_arm=mc.reference_arm,
                      estimator=cfg.estimator.method, history=hist)
        _, completed = run_mi(ds, spec, first, return_datasets=True)
    per = [_estimate(cfg, c, cfg.seed) for c in completed]
    pooled = []
    for k, template in enumerate(per[0]):
        p = rubin_pool([r[k].point for r in per], [r[k].se ** 2 for r in per])
        d = p.to_dict()
        d.update(estimand=template.estimand, method=f"mi[{mc.assumption if not mc.by_kind else 'combined'}]"
                 f"+{template.method}")
        pooled.append(d)
    report = _report(cfg, "sensitivity", {"input": args.input, "ices": args.ices}, {"pooled": pooled})
    _write_report(report, args.output, args.format or cfg.format, pooled)
    return EXIT_OK


def cmd_validate(cfg: PipelineConfig, args) -> int:
    ds = load_dataset(args.input, censor_encoding=cfg.censor_encoding, conform=False, validate=False)
    bad = validate_dataset(ds)
    viol = [{"subject": v.subject, "index": v.index, "rule": v.rule, "detail": v.detail} for v in bad]
    report = _report(cfg, "validate", {"input": args.input}, {"n": ds.n, "K": ds.K, "violations": viol})
    _write_report(report, args.output, "json")
    for v in viol[:20]:
        print(f"{v['rule']}: subject {v['subject']} index {v['index']}: {v['detail']}", file=sys.stderr)
    return EXIT_DATA if viol else EXIT_OK


HELP = {
    "simulate": "draw a trial from the reference data-generating process",
    "discretize": "turn continuous event and censoring times into monthly rows",
    "transform": "rewrite a dataset under the configured ICE strategy plan",
    "estimate": "estimate survival, a survival difference or cumulative incidence",
    "sensitivity": "multiple imputation under CAR, copy-reference or jump-to-reference",
    "validate": "check a dataset against the outcome and censoring conventions",
}

COMMANDS = {
    "simulate": cmd_simulate,
    "discretize": cmd_discretize,
    "transform": cmd_transform,
    "estimate": cmd_estimate,
    "sensitivity": cmd_sensitivity,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tte-estimands", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    needs_input = {"discretize", "transform", "estimate", "sensitivity", "validate"}
    for name in COMMANDS:
        sp = sub.add_parser(name, help=HELP[name], description=HELP[name])
        sp.add_argument("--config", help="JSON pipeline configuration")
        sp.add_argument("--input", required=name in needs_input,
                        help="times CSV (id,tY,tC[,tI][,arm])" if name == "discretize" else "wide-format dataset CSV")
        sp.add_argument("--output", "--out", dest="output", required=name in ("simulate", "discretize", "transform"),
                        help="file to write; reports go to stdout when omitted")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
        sp.add_argument("--format", choices=("json", "csv"), help="report format")
        if name in ("simulate", "discretize", "transform", "estimate", "sensitivity"):
            sp.add_argument("--ices", help="ICE records CSV (written by simulate/discretize, read otherwise)")
        if name == "simulate":
            sp.add_argument("--oracle", help="write potential outcomes and strata here")
    return p


def run_command(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=os.environ.get("TTE_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.model_copy(update={"seed": args.seed})
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataValidationError as exc:
        print(f"data validation failed: {exc}", file=sys.stderr)
        for v in exc.violations[:20]:
            print(f"  {v.rule}: subject {v.subject} index {v.index}: {v.detail}", file=sys.stderr)
        return EXIT_DATA
    except (CsvFormatError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
