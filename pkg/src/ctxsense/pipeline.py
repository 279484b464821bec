"""Stage runner: generate -> extend -> train-context -> train-loss -> simulate -> evaluate.

Every stage reads and writes files under the output directory, so any stage
can be rerun on its own once its inputs exist::

    out/
      users/<user>/trace.csv
      users/<user>/extended.csv
      users/<user>/context_model.json
      users/<user>/info_loss_model.json
      users/<user>/cells/<cell>.json
      results.csv, rank_table.csv, pairwise.csv, tradeoff.csv, ttests.csv, stats.json
      manifest.json
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .context import detect_contexts, load_model, save_model, train_autoencoder
from .evaluation import (
    DegenerateStatisticError,
    friedman_iman_davenport,
    nemenyi_critical_difference,
    nemenyi_pairs,
    paired_t_test,
    rank_matrix,
    tradeoff_curves,
)
from .extension import extend, read_extended, write_extended
from .info_loss import InfoLossModel, build_training_set, train_info_loss
from .simulation import SimulationResult, compute_event_threshold, run_baseline, run_simulation
from .trace import (
    Trace,
    fit_standardization,
    generate_synthetic_trace,
    layout_columns,
    load_trace,
    write_trace,
)

log = logging.getLogger("ctxsense")

STAGES = ("generate", "extend", "train-context", "train-loss", "simulate", "evaluate")
INCOMPLETE = "_INCOMPLETE"
MANIFEST = "manifest.json"
RESULTS = "results.csv"


class PipelineError(RuntimeError):
    pass


class MissingArtifactError(PipelineError):
    def __init__(self, path: Path, stage: str):
        super().__init__(f"missing artifact {path} (run '{stage}' first)")
        self.path = path


class StageError(PipelineError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class ManifestMismatchError(PipelineError):
    pass


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _read_csv(path: Path, stage: str) -> list[dict]:
    _require(path, stage)
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _require(path: Path, stage: str) -> Path:
    if not path.is_file():
        raise MissingArtifactError(path, stage)
    return path


@dataclass
class Pipeline:
    config: ExperimentConfig

    @property
    def out(self) -> Path:
        return self.config.output_dir

    def user_dir(self, user: str) -> Path:
        return self.out / "users" / user

    def _prepare(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)

    # --- per-user stages -----------------------------------------------------

    def _load_trace(self, user: str) -> Trace:
        return load_trace(_require(self.user_dir(user) / "trace.csv", "generate"), self.config.sensors)

    def _train_part(self, user: str) -> tuple[Trace, Trace]:
        return self._load_trace(user).split(self.config.split)

    def generate(self) -> None:
        cfg = self.config
        for u in cfg.users:
            d = self.user_dir(u.name)
            d.mkdir(parents=True, exist_ok=True)
            if u.path is not None:
                trace = load_trace(u.path, cfg.sensors)
            else:
                syn = {k: v for k, v in cfg.synthetic.items() if k not in ("n_users", "n_records")}
                trace = generate_synthetic_trace(
                    int(cfg.synthetic["n_records"]), cfg.sensors, seed=u.seed, **syn
                )
            write_trace(trace, d / "trace.csv")
            log.info("generate %s: %d records", u.name, len(trace))

    def extend(self) -> None:
        cfg = self.config
        for u in cfg.users:
            train, _ = self._train_part(u.name)
            data = extend(train, cfg.extension)
            write_extended(data, self.user_dir(u.name) / "extended.csv", layout_columns(cfg.sensors))
            log.info("extend %s: %d rows from %d eligible records", u.name, len(data), data.n_blocks)

    def train_context(self) -> None:
        for u in self.config.users:
            train, _ = self._train_part(u.name)
            stats = fit_standardization(train)
            model = train_autoencoder(stats.transform(train.values), self.config.autoencoder, stats)
            save_model(model, self.user_dir(u.name) / "context_model.json")
            log.info("train-context %s: mse %.4g -> %.4g", u.name, model.history[0], model.history[-1])

    def _context_model(self, user: str):
        return load_model(_require(self.user_dir(user) / "context_model.json", "train-context"))

    def train_loss(self) -> None:
        cfg = self.config
        for u in cfg.users:
            train, _ = self._train_part(u.name)
            model = self._context_model(u.name)
            ext_path = _require(self.user_dir(u.name) / "extended.csv", "extend")
            data = read_extended(ext_path, train, cfg.extension)
            X, y = build_training_set(detect_contexts(model, data), cfg.extension)
            loss_model = train_info_loss(
                X,
                y,
                model.bottleneck_dim,
                len(cfg.sensors),
                lam=float(cfg.lasso["lambda"]),
                tol=float(cfg.lasso["tol"]),
                max_sweeps=int(cfg.lasso["max_sweeps"]),
            )
            loss_model.save(self.user_dir(u.name) / "info_loss_model.json")
            log.info("train-loss %s: %d nonzero coefficients", u.name, int(np.count_nonzero(loss_model.coef)))

    # --- simulation ----------------------------------------------------------

    def cells(self) -> list[dict]:
        cfg = self.config
        out = []
        for u in cfg.users:
            for a in cfg.alphas:
                for mode in cfg.modes:
                    out.append({"user": u.name, "method": "dynamic", "alpha": a, "mode": mode.value})
            if cfg.baseline.get("enabled", True):
                out.append({"user": u.name, "method": "baseline", "alpha": None, "mode": "ADAPTIVE"})
        return out

    def simulate(self, verbose: bool = False) -> None:
        for u in self.config.users:
            d = self.user_dir(u.name)
            for name, stage in (
                ("trace.csv", "generate"),
                ("context_model.json", "train-context"),
                ("info_loss_model.json", "train-loss"),
            ):
                _require(d / name, stage)
            (d / "cells").mkdir(exist_ok=True)
        jobs = [(self.config, cell, verbose) for cell in self.cells()]
        if self.config.parallel > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=self.config.parallel) as pool:
                rows = list(pool.map(_run_cell_job, jobs))
        else:
            rows = [_run_cell_job(j) for j in jobs]
        self._merge(rows)

    def _merge(self, rows: list[dict]) -> None:
        names = [s.name for s in self.config.sensors]
        header = [
            "user", "method", "alpha", "mode", "total_cost", "total_info_loss", "policy_changes",
        ] + [f"mean_dist.{s}" for s in names]
        table = [
            [r["user"], r["method"], r["alpha"], r["mode"], r["total_cost"], r["total_info_loss"],
             r["policy_changes"], *r["mean_distance"]]
            for r in rows
        ]
        _write_csv(self.out / RESULTS, header, table)
        log.info("simulate: %d result rows", len(table))

    # --- evaluation ----------------------------------------------------------

    def evaluate(self) -> dict:
        rows = _read_csv(self.out / RESULTS, "simulate")
        modes = [m.value for m in self.config.modes]
        dyn = [r for r in rows if r["method"] == "dynamic"]
        ranks, blocks = rank_matrix(dyn, modes, label="mode")
        stats: dict = {"methods": modes, "n_blocks": len(blocks)}
        if len(blocks):
            mean_ranks = ranks.mean(axis=0)
        else:
            mean_ranks = np.full(len(modes), math.nan)
        _write_csv(
            self.out / "rank_table.csv",
            ["method", "mean_rank"],
            [[m, float(r)] for m, r in zip(modes, mean_ranks)],
        )
        try:
            chi2, ff = friedman_iman_davenport(ranks)
            stats.update(chi2_F=chi2, F_F=ff)
        except (ValueError, DegenerateStatisticError) as exc:
            stats.update(chi2_F=None, F_F=None, friedman_note=str(exc))

        q = self.config.evaluation.get("q_alpha")
        cd = nemenyi_critical_difference(len(modes), len(blocks), float(q)) if q and len(blocks) else None
        stats["critical_difference"] = cd
        pairs = nemenyi_pairs(modes, list(mean_ranks), cd if cd is not None else math.nan)
        _write_csv(
            self.out / "pairwise.csv",
            ["method_a", "method_b", "rank_diff", "critical_difference", "significant"],
            [
                [p["method_a"], p["method_b"], float(p["rank_diff"]), cd,
                 None if cd is None else str(p["significant"]).lower()]
                for p in pairs
            ],
        )

        curves = tradeoff_curves(
            {**r, "method": r["mode"]} for r in dyn
        )
        trade_rows = [[c["alpha"], c["mean_cost"], c["mean_info_loss"], c["method"]] for c in curves]
        base = [r for r in rows if r["method"] == "baseline"]
        if base:
            trade_rows.append([
                None,
                float(np.mean([float(r["total_cost"]) for r in base])),
                float(np.mean([float(r["total_info_loss"]) for r in base])),
                "baseline",
            ])
        _write_csv(self.out / "tradeoff.csv", ["alpha", "mean_cost", "mean_info_loss", "method"], trade_rows)

        _write_csv(self.out / "ttests.csv", ["alpha", "metric", "t", "df", "note"], self._ttests(dyn, base, modes))
        (self.out / "stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True), encoding="utf-8")
        log.info("evaluate: mean ranks %s", {m: round(float(r), 3) for m, r in zip(modes, mean_ranks)})
        return stats

    def _ttests(self, dyn: list[dict], base: list[dict], modes: list[str]) -> list[list]:
        """Paired (over users) t statistics of the first configured timing mode against the baseline."""
        if not base or not modes:
            return []
        mode = modes[0]
        base_by_user = {r["user"]: r for r in base}
        out = []
        for a in self.config.alphas:
            cell = {r["user"]: r for r in dyn if r["mode"] == mode and float(r["alpha"]) == a}
            users = [u for u in cell if u in base_by_user]
            for metric in ("total_info_loss", "total_cost"):
                a_vals = [float(cell[u][metric]) for u in users]
                b_vals = [float(base_by_user[u][metric]) for u in users]
                try:
                    t, df = paired_t_test(a_vals, b_vals)
                    out.append([a, f"{mode}-baseline:{metric}", t, df, None])
                except (ValueError, DegenerateStatisticError) as exc:
                    out.append([a, f"{mode}-baseline:{metric}", None, None, str(exc)])
        return out

    # --- orchestration -------------------------------------------------------

    def run_stage(self, stage: str, verbose: bool = False):
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        self._prepare()
        fn = {
            "generate": self.generate,
            "extend": self.extend,
            "train-context": self.train_context,
            "train-loss": self.train_loss,
            "simulate": lambda: self.simulate(verbose),
            "evaluate": self.evaluate,
        }[stage]
        try:
            return fn()
        except PipelineError:
            raise
        except Exception as exc:
            raise StageError(stage, exc) from exc

    def run(self, verbose: bool = False) -> dict:
        """All stages, then write (or verify) the manifest."""
        self._prepare()
        marker = self.out / INCOMPLETE
        marker.write_text("run in progress or aborted\n", encoding="utf-8")
        for stage in STAGES:
            log.info("stage %s", stage)
            self.run_stage(stage, verbose)
        manifest = self.build_manifest()
        self._check_manifest(manifest)
        (self.out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
        marker.unlink()
        return manifest

    def artifacts(self) -> list[Path]:
        paths = []
        for u in self.config.users:
            d = self.user_dir(u.name)
            paths += [d / n for n in ("trace.csv", "extended.csv", "context_model.json", "info_loss_model.json")]
        paths += [self.out / n for n in (RESULTS, "rank_table.csv", "pairwise.csv", "tradeoff.csv", "ttests.csv", "stats.json")]
        return paths

    def build_manifest(self) -> dict:
        cfg = self.config
        return {
            "config_hash": cfg.config_hash,
            "seeds": {
                "base": cfg.seed,
                "users": {u.name: u.seed for u in cfg.users},
                "extension": cfg.extension.seed,
                "autoencoder": cfg.autoencoder.seed,
            },
            "artifacts": {
                p.relative_to(self.out).as_posix(): _sha256(p) for p in self.artifacts()
            },
        }

    def _check_manifest(self, manifest: dict) -> None:
        path = self.out / MANIFEST
        if not path.is_file():
            return
        old = json.loads(path.read_text(encoding="utf-8"))
        if old.get("config_hash") != manifest["config_hash"]:
            log.warning("config changed since the previous run; replacing manifest")
            return
        diff = sorted(
            k for k in set(old.get("artifacts", {})) | set(manifest["artifacts"])
            if old.get("artifacts", {}).get(k) != manifest["artifacts"].get(k)
        )
        if diff or old.get("seeds") != manifest["seeds"]:
            raise ManifestMismatchError(
                "rerun does not reproduce the previous manifest: " + ", ".join(diff or ["seeds"])
            )
        log.info("manifest verified: %d artifacts unchanged", len(manifest["artifacts"]))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _run_cell_job(job) -> dict:
    config, cell, verbose = job
    return run_cell(config, cell, verbose)


def _cell_name(cell: dict) -> str:
    if cell["method"] == "baseline":
        return "baseline"
    return f"dynamic_a{cell['alpha']!r}_{cell['mode']}"


def run_cell(config: ExperimentConfig, cell: dict, verbose: bool = False) -> dict:
    """Simulate one grid cell from on-disk artifacts and persist its row."""
    pipe = Pipeline(config)
    user = cell["user"]
    d = pipe.user_dir(user)
    train, test = pipe._train_part(user)
    model = pipe._context_model(user)
    costs = [s.cost for s in config.sensors]
    md = config.extension.max_dist
    if cell["method"] == "baseline":
        thr = compute_event_threshold(train, model, float(config.baseline.get("quantile", 0.9)))
        res = run_baseline(
            test, model, costs, md, thr, float(config.baseline.get("alpha_param", 0.5)), log_steps=verbose
        )
    else:
        loss_model = InfoLossModel.load(_require(d / "info_loss_model.json", "train-loss"))
        res = run_simulation(
            test, model, loss_model, costs, cell["alpha"], cell["mode"], md, log_steps=verbose
        )
    row = {
        "user": user,
        "method": cell["method"],
        "alpha": cell["alpha"],
        "mode": cell["mode"],
        "total_cost": res.total_cost,
        "total_info_loss": res.total_info_loss,
        "policy_changes": res.policy_changes,
        "mean_distance": [float(x) for x in res.mean_distance],
    }
    name = _cell_name(cell)
    (d / "cells" / f"{name}.json").write_text(json.dumps(row, sort_keys=True), encoding="utf-8")
    if verbose:
        _write_step_log(d / "steps" / f"{name}.csv", res, [s.name for s in config.sensors])
    return row


def _write_step_log(path: Path, res: SimulationResult, names: list[str]) -> None:
    path.parent.mkdir(exist_ok=True)
    header = ["t", "loss"] + [f"sampled.{s}" for s in names] + [f"policy.{s}" for s in names]
    rows = [
        [r["t"], r["loss"], *(int(x) for x in r["sampled"]), *(int(x) for x in r["policy"])]
        for r in res.step_log or []
    ]
    _write_csv(path, header, rows)
