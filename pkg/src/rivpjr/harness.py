"""Batch experiments: seeded trials, re-verification and aggregate statistics.

Every trial gets its own ``SeedSequence`` keyed by the cell parameters and
the trial index, so adding cells to a grid never changes existing results.
Reports contain no timings and are written with sorted keys; identical
configs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .committee import (
    FALLBACK,
    GUESSED,
    GuessArtifacts,
    PipelineResult,
    complete,
    mes,
    pjr_pipeline,
)
from .elicit import elicit_full
from .model import CandidateSet, RivModel, VoterSample, load_model, sample_voters, uniformize
from .oracle import QueryContext, VoterOracle, make_oracles, query_stats, write_dialogues
from .verify import Election, check_pjr_plus_ci

log = logging.getLogger(__name__)

PLACEMENTS = ("iid", "spaced", "cluster")
PIPELINES = ("pjr", "full")
CLUSTER_WIDTH = 0.05
BOUND_TOL = 1e-12

CSV_FIELDS = [
    "sigma", "k", "m", "n", "placement", "pipeline", "trial",
    "path", "verdict", "committee", "queries_mean", "queries_max", "queries_final_mean",
    "u", "max_ratio", "guess_size", "guess_pjr_plus", "soundness_violation",
    "distance_violations", "window_interior_violations", "window_global_violations",
]


class ConfigError(ValueError):
    pass


class VerificationFailure(RuntimeError):
    """A pipeline committee failed re-verification; ``bundle`` holds the replay files."""

    def __init__(self, message: str, bundle: Path):
        super().__init__(f"{message} (replay bundle: {bundle})")
        self.bundle = bundle


@dataclass
class ExperimentConfig:
    sigma: list[int] = field(default_factory=lambda: [1])
    k: list[int] = field(default_factory=lambda: [1])
    m: list[int] = field(default_factory=lambda: [1])
    n: list[int] = field(default_factory=lambda: [1])
    placement: list[str] = field(default_factory=lambda: ["iid"])
    pipelines: list[str] = field(default_factory=lambda: ["pjr"])
    trials: int = 1
    seed: int = 0
    weights: Any = "equal"  # "equal", "random" or an explicit list
    model: str | None = None  # model file; overrides sigma and weights
    csv: str | None = None
    json: str | None = None
    bundle_dir: str | None = None
    check_bounds: bool = True

    def __post_init__(self):
        for name in ("sigma", "k", "m", "n", "placement", "pipelines"):
            v = getattr(self, name)
            if not isinstance(v, list):
                setattr(self, name, [v])
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        for name in ("sigma", "k", "m", "n"):
            if not all(isinstance(x, int) and x >= 1 for x in getattr(self, name)):
                raise ConfigError(f"{name} entries must be positive integers")
        bad = set(self.placement) - set(PLACEMENTS)
        if bad:
            raise ConfigError(f"unknown placement {sorted(bad)}; choose from {PLACEMENTS}")
        bad = set(self.pipelines) - set(PIPELINES)
        if bad:
            raise ConfigError(f"unknown pipeline {sorted(bad)}; choose from {PIPELINES}")
        if isinstance(self.weights, str) and self.weights not in ("equal", "random"):
            raise ConfigError("weights must be 'equal', 'random' or a list")
        if isinstance(self.weights, list) and self.model is None:
            if len(self.sigma) != 1 or self.sigma[0] != len(self.weights):
                raise ConfigError("explicit weights need a single sigma equal to their length")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)


# instances ------------------------------------------------------------------------


def make_model(sigma: int, weights: Any, rng: np.random.Generator) -> RivModel:
    if isinstance(weights, list):
        return RivModel.uniform_from_weights(weights)
    if weights == "random":
        w = rng.dirichlet(np.ones(sigma))
        w[-1] = 1.0 - math.fsum(w[:-1])
        return RivModel.uniform_from_weights(w.tolist())
    return RivModel.uniform_from_weights([1.0 / sigma] * sigma)


def _open_uniform(rng: np.random.Generator, lo: float, hi: float, size: int) -> np.ndarray:
    x = lo + (hi - lo) * rng.random(size)
    bad = (x <= lo) | (x >= hi)
    while bad.any():
        x[bad] = lo + (hi - lo) * rng.random(int(bad.sum()))
        bad = (x <= lo) | (x >= hi)
    return x


def place_candidates(model: RivModel, m: int, rule: str, rng: np.random.Generator) -> list[float]:
    """Candidate positions in model coordinates, strictly inside segments.

    ``iid`` splits m as evenly as possible over the segments and draws
    uniform positions; ``spaced`` uses equal spacing in each segment;
    ``cluster`` puts everything into one short stretch of a random segment.
    """
    sigma = model.sigma
    per = [m // sigma + (1 if t < m % sigma else 0) for t in range(sigma)]
    out: list[float] = []
    if rule == "cluster":
        seg = model.segment(int(rng.integers(1, sigma + 1)))
        width = CLUSTER_WIDTH * seg.length
        start = seg.z_minus + rng.random() * (seg.length - width)
        lo, hi = start, start + width
        pos = np.unique(_open_uniform(rng, max(lo, seg.z_minus), min(hi, seg.z_plus), m))
        while pos.size < m:
            pos = np.unique(np.concatenate([pos, _open_uniform(rng, lo, hi, m - pos.size)]))
        return pos.tolist()
    for t, count in enumerate(per, start=1):
        if not count:
            continue
        seg = model.segment(t)
        if rule == "spaced":
            pos = seg.z_minus + seg.length * np.arange(1, count + 1) / (count + 1)
        else:
            pos = np.unique(_open_uniform(rng, seg.z_minus, seg.z_plus, count))
            while pos.size < count:
                pos = np.unique(np.concatenate([pos, _open_uniform(rng, seg.z_minus, seg.z_plus, count - pos.size)]))
        out.extend(pos.tolist())
    return sorted(out)


@dataclass
class Instance:
    """A uniform working model plus the map back to the caller's coordinates."""

    model: RivModel
    candidates: CandidateSet
    voters: VoterSample
    original_candidates: list[float]
    original_voters: VoterSample

    @classmethod
    def build(cls, model: RivModel, positions: Sequence[float], voters: VoterSample) -> "Instance":
        if model.is_uniform:
            C = CandidateSet(positions, model)
            return cls(model, C, voters, C.as_list(), voters)
        uni, C, mu = uniformize(model, positions)
        return cls(uni, C, mu.map_voters(voters), sorted(float(x) for x in positions), voters)

    def to_original(self, committee: Sequence[float]) -> list[float]:
        # mu is increasing, so ranks carry over exactly
        return [self.original_candidates[self.candidates.index_of(c)] for c in committee]

    def election(self, k: int) -> Election:
        v = self.original_voters
        return Election.from_intervals(self.original_candidates, zip(v.a.tolist(), v.b.tolist()), k)


# bounds on the guessed committee ---------------------------------------------------------


def bound_violations(guess: GuessArtifacts, C: CandidateSet, model: RivModel, k: int) -> dict[str, int]:
    """Count violations of the geometric guarantees of the guessed committee.

    ``distance``: d+_{r1} + d-_{r2} <= 2 (r1 + r2 + 1) / (k_t + 2) on the
    interior band; ``window_interior``: pi <= 2 p_t l^2 / (k_t + 2)^2 on the
    band; ``window_global``: pi <= l/k - 1/(4k) for every unelected candidate.
    """
    out = {"distance": 0, "window_interior": 0, "window_global": 0}
    W = set(guess.W_hat)
    r = np.arange(k + 1)
    for t in range(1, model.sigma + 1):
        Ct = np.array([c for c in C.in_segment(t) if c not in W])
        if not Ct.size:
            continue
        Wt = np.asarray(guess.slices[t], dtype=float)
        kt = guess.seats[t]
        p = model.segment(t).p
        rho = np.searchsorted(Wt, Ct)
        right = np.concatenate([Wt, [t + 1.0]])
        left = np.concatenate([[float(t)], Wt])
        # d_plus[c, r] and d_minus[c, r] with endpoint fallbacks
        d_plus = right[np.minimum(rho[:, None] + r, Wt.size)] - Ct[:, None]
        d_minus = Ct[:, None] - left[np.maximum(rho[:, None] - r, 0)]
        lo, hi = guess.interior_bounds(t)
        inner = (Ct > lo) & (Ct < hi)

        bound = 2 * (r[:, None] + r[None, :] + 1) / (kt + 2)
        total = d_plus[:, :, None] + d_minus[:, None, :]
        out["distance"] += int(np.count_nonzero((total > bound + BOUND_TOL)[inner]))

        for ell in range(1, k + 1):
            j = np.arange(ell)
            pi = 2 * p * d_minus[:, j] * d_plus[:, ell - 1 - j]
            cap_in = 2 * p * ell**2 / (kt + 2) ** 2
            out["window_interior"] += int(np.count_nonzero((pi > cap_in + BOUND_TOL)[inner]))
            out["window_global"] += int(np.count_nonzero(pi > ell / k - 1 / (4 * k) + BOUND_TOL))
    return out


# one trial -------------------------------------------------------------------------------


@dataclass
class TrialResult:
    row: dict[str, Any]
    detail: dict[str, Any]
    instance: Instance
    oracles: list[VoterOracle]
    pipeline: PipelineResult | None = None


def run_full_elicitation(inst: Instance, k: int, oracles: Sequence[VoterOracle]) -> tuple[list[float], Election]:
    """Elicit every ballot, then MES padded to k."""
    cand = inst.candidates.as_list()
    index = {c: i for i, c in enumerate(cand)}
    ballots = [elicit_full(o) for o in oracles]
    election = Election(
        tuple(cand),
        tuple(range(index[b[0]], index[b[-1]] + 1) if b else range(0) for b in ballots),
        k,
    )
    return complete(mes(election), cand, k, election.approval_counts()), election


def run_trial(inst: Instance, k: int, pipeline: str = "pjr", check_bounds: bool = True) -> TrialResult:
    """Run one pipeline on one instance and re-verify against the true election."""
    ctx = QueryContext(inst.model, inst.candidates)
    oracles = make_oracles(inst.voters, ctx)
    truth = inst.election(k)
    row: dict[str, Any] = {"pipeline": pipeline}
    detail: dict[str, Any] = {}
    res = None
    if pipeline == "pjr":
        res = pjr_pipeline(inst.model, inst.candidates, k, oracles)
        committee = res.committee
        rep = res.report()
        summ = rep["validation"]
        guess_orig = inst.to_original(res.guess.W_hat)
        guess_ok = check_pjr_plus_ci(truth, guess_orig) is None if len(guess_orig) <= k else False
        row.update(
            path=res.path,
            u=summ["u"],
            max_ratio=summ["max_ratio"],
            guess_size=len(res.guess.W_hat),
            guess_pjr_plus=guess_ok,
            soundness_violation=bool(res.tally.verdict and not guess_ok),
            queries_mean=rep["queries_guess_stage"]["mean"],
            queries_max=rep["queries_guess_stage"]["max"],
            queries_final_mean=rep["queries_final"]["mean"],
        )
        detail.update(queries=rep["queries_guess_stage"], queries_final=rep["queries_final"],
                      validation=summ, guess=guess_orig)
        bounds = (bound_violations(res.guess, inst.candidates, inst.model, k) if check_bounds
                  else {"distance": 0, "window_interior": 0, "window_global": 0})
    else:
        committee, _ = run_full_elicitation(inst, k, oracles)
        totals = [query_stats(o)["total"] for o in oracles]
        row.update(path=FALLBACK, u=0, max_ratio=0.0, guess_size=0, guess_pjr_plus=True,
                   soundness_violation=False, queries_mean=float(np.mean(totals)),
                   queries_max=int(max(totals)), queries_final_mean=float(np.mean(totals)))
        bounds = {"distance": 0, "window_interior": 0, "window_global": 0}
    row.update(
        distance_violations=bounds["distance"],
        window_interior_violations=bounds["window_interior"],
        window_global_violations=bounds["window_global"],
    )
    final = inst.to_original(committee)
    witness = check_pjr_plus_ci(truth, final)
    row["committee"] = final
    row["verdict"] = "pass" if witness is None else "fail"
    if witness is not None:
        detail["witness"] = witness.to_dict()
    return TrialResult(row, detail, inst, oracles, res)


def write_bundle(directory: Path, trial: TrialResult, meta: dict) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    (directory / "model.json").write_text(json.dumps(trial.instance.model.to_dict(), indent=2))
    (directory / "election.json").write_text(json.dumps(trial.instance.election(meta["k"]).to_dict()))
    (directory / "committee.json").write_text(json.dumps({"committee": trial.row["committee"]}))
    if "witness" in trial.detail:
        (directory / "witness.json").write_text(json.dumps(trial.detail["witness"], indent=2))
    extra = [out.trace_record(i) for i, out in enumerate(trial.pipeline.outcomes)] if trial.pipeline else []
    with open(directory / "dialogues.jsonl", "w") as fh:
        write_dialogues(trial.oracles, fh, extra)
    return directory


# experiments -------------------------------------------------------------------------


def _cell_seed(seed: int, sigma: int, k: int, m: int, n: int, placement: str, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(sigma, k, m, n, PLACEMENTS.index(placement), trial))


def iter_cells(config: ExperimentConfig):
    if config.model is not None:
        sigmas = [load_model(config.model).sigma]
    else:
        sigmas = config.sigma
    return product(sigmas, config.k, config.m, config.n, config.placement)


def run_experiment(config: ExperimentConfig, write: bool = True) -> dict:
    """Run every cell and trial, re-verify each committee and write the report.

    Returns the report dict (``trials`` rows plus ``aggregate``).
    """
    base_model = load_model(config.model) if config.model else None
    rows: list[dict] = []
    details: list[dict] = []
    for sigma, k, m, n, placement in iter_cells(config):
        if k > m:
            raise ConfigError(f"k={k} exceeds m={m}")
        for trial in range(config.trials):
            ss = _cell_seed(config.seed, sigma, k, m, n, placement, trial)
            model_ss, cand_ss, voter_ss = ss.spawn(3)
            model = base_model or make_model(sigma, config.weights, np.random.default_rng(model_ss))
            positions = place_candidates(model, m, placement, np.random.default_rng(cand_ss))
            voters = sample_voters(model, n, np.random.default_rng(voter_ss))
            inst = Instance.build(model, positions, voters)
            for pipeline in config.pipelines:
                res = run_trial(inst, k, pipeline, config.check_bounds)
                meta = {"sigma": sigma, "k": k, "m": m, "n": n, "placement": placement,
                        "trial": trial, "seed": config.seed, "pipeline": pipeline}
                if res.row["verdict"] != "pass":
                    where = Path(config.bundle_dir or ".") / (
                        f"replay_s{sigma}_k{k}_m{m}_n{n}_{placement}_{pipeline}_t{trial}")
                    bundle = write_bundle(where, res, meta)
                    raise VerificationFailure(f"committee failed PJR+ re-verification in {meta}", bundle)
                row = {**meta, **res.row}
                row.pop("seed")
                rows.append(row)
                details.append({**meta, **res.detail})
                log.info("cell %s trial %d: %s", (sigma, k, m, n, placement), trial, res.row["path"])
    report = {"config": config.to_dict(), "trials": details, "aggregate": aggregate(rows)}
    report["rows"] = rows
    if write:
        if config.csv:
            Path(config.csv).write_text(rows_to_csv(rows))
        if config.json:
            Path(config.json).write_text(dumps_report(report))
    return report


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**r, "committee": " ".join(repr(float(c)) for c in r["committee"])})
    return buf.getvalue()


# aggregate statistics -------------------------------------------------------------------


def _key(row: dict) -> str:
    return f"sigma={row['sigma']},k={row['k']},m={row['m']},n={row['n']},placement={row['placement']},pipeline={row['pipeline']}"


def aggregate(rows: Sequence[dict]) -> dict:
    """Everything here is recomputable from the per-trial rows."""
    cells: dict[str, list[dict]] = {}
    for r in rows:
        cells.setdefault(_key(r), []).append(r)
    per_cell = {}
    for key, rs in cells.items():
        T = len(rs)
        fb = sum(r["path"] == FALLBACK for r in rs)
        rate = fb / T
        guessed = [r["queries_mean"] for r in rs if r["path"] == GUESSED]
        per_cell[key] = {
            "sigma": rs[0]["sigma"], "k": rs[0]["k"], "m": rs[0]["m"], "n": rs[0]["n"],
            "placement": rs[0]["placement"], "pipeline": rs[0]["pipeline"],
            "trials": T,
            "fallback_count": fb,
            "fallback_rate": rate,
            "fallback_se": math.sqrt(rate * (1 - rate) / T),
            "mean_queries": float(np.mean([r["queries_mean"] for r in rs])),
            "mean_queries_guessed": float(np.mean(guessed)) if guessed else None,
            "guessed_trials": len(guessed),
            "verdict_pass": sum(r["verdict"] == "pass" for r in rs),
        }
    violations = {
        "distance": sum(r["distance_violations"] for r in rows),
        "window_interior": sum(r["window_interior_violations"] for r in rows),
        "window_global": sum(r["window_global_violations"] for r in rows),
        "soundness": sum(bool(r["soundness_violation"]) for r in rows),
        "verifier": sum(r["verdict"] != "pass" for r in rows),
    }
    return {
        "cells": per_cell,
        "violations": violations,
        "query_fit": query_fit(list(per_cell.values())),
        "m_doubling": m_doubling(list(per_cell.values())),
        "fallback_monotone_in_n": fallback_monotonicity(list(per_cell.values())),
    }


def query_fit(cells: Sequence[dict]) -> dict | None:
    """OLS of mean guessed-path queries on log(sigma k) and log2(m)."""
    pts = [c for c in cells if c["pipeline"] == "pjr" and c["mean_queries_guessed"] is not None]
    if len({c["sigma"] * c["k"] for c in pts}) < 2 or len({c["m"] for c in pts}) < 2 or len(pts) < 4:
        return None
    import statsmodels.api as sm

    X = np.column_stack([
        np.log([c["sigma"] * c["k"] for c in pts]),
        np.log2([c["m"] for c in pts]),
    ])
    y = np.array([c["mean_queries_guessed"] for c in pts])
    fit = sm.OLS(y, sm.add_constant(X)).fit()
    ci = fit.conf_int(0.05)
    names = ["intercept", "log_sigma_k", "log2_m"]
    return {
        "n_points": len(pts),
        "coef": {nm: float(v) for nm, v in zip(names, fit.params)},
        "ci95": {nm: [float(lo), float(hi)] for nm, (lo, hi) in zip(names, ci)},
        "r2": float(fit.rsquared),
    }


def m_doubling(cells: Sequence[dict]) -> list[dict]:
    """Relative change of mean guessed-path queries when m doubles, per cell pair."""
    idx = {(c["sigma"], c["k"], c["m"], c["n"], c["placement"]): c for c in cells
           if c["pipeline"] == "pjr" and c["mean_queries_guessed"] is not None}
    out = []
    for (s, k, m, n, pl), c in sorted(idx.items()):
        d = idx.get((s, k, 2 * m, n, pl))
        if d is None:
            continue
        a, b = c["mean_queries_guessed"], d["mean_queries_guessed"]
        out.append({"sigma": s, "k": k, "m": m, "n": n, "placement": pl,
                    "mean_m": a, "mean_2m": b, "rel_change": (b - a) / a})
    return out


def fallback_monotonicity(cells: Sequence[dict]) -> list[dict]:
    """Check fallback rate is non-increasing in n, up to two standard errors of the difference."""
    groups: dict[tuple, list[dict]] = {}
    for c in cells:
        if c["pipeline"] == "pjr":
            groups.setdefault((c["sigma"], c["k"], c["m"], c["placement"]), []).append(c)
    out = []
    for (s, k, m, pl), cs in sorted(groups.items()):
        cs = sorted(cs, key=lambda c: c["n"])
        if len(cs) < 2:
            continue
        ok = True
        for a, b in zip(cs, cs[1:]):
            slack = 2 * math.sqrt(a["fallback_se"] ** 2 + b["fallback_se"] ** 2)
            ok &= b["fallback_rate"] <= a["fallback_rate"] + slack
        out.append({
            "sigma": s, "k": k, "m": m, "placement": pl,
            "n": [c["n"] for c in cs],
            "rate": [c["fallback_rate"] for c in cs],
            "se": [c["fallback_se"] for c in cs],
            "monotone": bool(ok),
        })
    return out
