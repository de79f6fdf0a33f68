"""Campaign harness: seeded episode batches, sweeps, CSV artifacts.

A campaign runs N independent episodes of hierarchical execution with the
configured selector and aggregates discounted returns and costs.  Episode
seeds derive from the base seed as ``seed ^ index``, so results are
independent of worker count and order; rerunning the same config and seed
reproduces the deterministic CSVs byte for byte.  Wall-clock measurements
are kept out of those files and land in a separate timings file.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import os
import traceback
from dataclasses import dataclass, field
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .domains.lightdark import LightDark, make_options
from .domains.minichain import MiniChain
from .model import ConstrainedPOMDP
from .options import (
    EpisodeLog,
    FixedSelector,
    OptionSet,
    execute_episode,
    make_primitive_options,
)
from .planner import OptionPlanner, PlannerConfig


@dataclass
class ExperimentConfig:
    domain: str = "lightdark"
    domain_params: dict = field(default_factory=dict)
    catalog: str = "base4"
    catalog_seed: int = 0
    selector: str = "planner"  # "planner" or "fixed:<option label>"
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    label: str = "arm"
    episodes: int = 100
    seed: int = 0
    workers: int = 1
    step_cap: int = 100
    save_logs: bool = False
    out: str | None = None

    def replaced(self, **kwargs) -> "ExperimentConfig":
        return dataclasses.replace(self, **kwargs)


@dataclass
class ResultSummary:
    label: str
    domain: str
    episodes: int
    mean_v_r: float
    se_v_r: float
    mean_v_c: np.ndarray
    se_v_c: np.ndarray
    violation_fraction: float
    mean_steps: float
    mean_epochs: float
    mean_queries_per_decision: float
    mean_wall_ms_per_decision: float


def make_domain(cfg: ExperimentConfig) -> ConstrainedPOMDP:
    if cfg.domain == "lightdark":
        return LightDark(**cfg.domain_params)
    if cfg.domain == "minichain":
        return MiniChain(**cfg.domain_params)
    raise ValueError(f"unknown domain {cfg.domain!r}")


def make_catalog(model: ConstrainedPOMDP, cfg: ExperimentConfig) -> OptionSet:
    if cfg.catalog == "primitive":
        return make_primitive_options(model)
    if isinstance(model, LightDark):
        return make_options(model, cfg.catalog, cfg.catalog_seed)
    raise ValueError(f"catalog {cfg.catalog!r} is not defined for domain {cfg.domain!r}")


def _make_selector(model, options, cfg: ExperimentConfig):
    if cfg.selector == "planner":
        return OptionPlanner(model, options, cfg.planner)
    if cfg.selector.startswith("fixed:"):
        return FixedSelector(options, cfg.selector.split(":", 1)[1])
    raise ValueError(f"unknown selector {cfg.selector!r}")


def run_episode(cfg: ExperimentConfig, index: int) -> tuple[dict, EpisodeLog]:
    """One seeded episode; the row dict is what lands in episodes.csv."""
    episode_seed = cfg.seed ^ index
    rng = np.random.default_rng(episode_seed)
    model = make_domain(cfg)
    options = make_catalog(model, cfg)
    selector = _make_selector(model, options, cfg)
    log = execute_episode(
        model,
        options,
        selector,
        rng,
        particles=cfg.planner.particles,
        step_cap=cfg.step_cap,
    )
    violated = bool(np.any(log.v_c > model.budget))
    row = {
        "episode": index,
        "seed": episode_seed,
        "v_r": log.v_r,
        **{f"v_c_{i + 1}": float(v) for i, v in enumerate(log.v_c)},
        "steps": log.n_steps,
        "epochs": len(log.epochs),
        "violations": int(violated),
    }
    return row, log


def _episode_worker(args):
    cfg, index = args
    try:
        row, log = run_episode(cfg, index)
        walls = [d.get("wall_ms", 0.0) for d in log.decisions]
        queries = [d.get("queries", 0) for d in log.decisions]
        jsonl = log.to_jsonl() if cfg.save_logs else None
        return ("ok", index, row, walls, queries, jsonl)
    except Exception:
        return ("error", index, cfg.seed ^ index, traceback.format_exc())


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format(v) for v in row])
    path.write_text(buf.getvalue())


def _stderr(values: np.ndarray) -> np.ndarray | float:
    if values.shape[0] < 2:
        return np.zeros(values.shape[1:]) if values.ndim > 1 else 0.0
    return values.std(axis=0, ddof=1) / np.sqrt(values.shape[0])


def summarize(cfg: ExperimentConfig, rows: list[dict], walls: list[float], queries: list[float]) -> ResultSummary:
    k = len([c for c in rows[0] if c.startswith("v_c_")])
    v_r = np.array([r["v_r"] for r in rows])
    v_c = np.array([[r[f"v_c_{i + 1}"] for i in range(k)] for r in rows])
    return ResultSummary(
        label=cfg.label,
        domain=cfg.domain,
        episodes=len(rows),
        mean_v_r=float(v_r.mean()),
        se_v_r=float(_stderr(v_r)),
        mean_v_c=v_c.mean(axis=0),
        se_v_c=np.atleast_1d(_stderr(v_c)),
        violation_fraction=float(np.mean([r["violations"] for r in rows])),
        mean_steps=float(np.mean([r["steps"] for r in rows])),
        mean_epochs=float(np.mean([r["epochs"] for r in rows])),
        mean_queries_per_decision=float(np.mean(queries)) if queries else 0.0,
        mean_wall_ms_per_decision=float(np.mean(walls)) if walls else 0.0,
    )


def summary_header(k: int) -> list[str]:
    head = ["label", "domain", "episodes", "mean_v_r", "se_v_r"]
    for i in range(k):
        head += [f"mean_v_c_{i + 1}", f"se_v_c_{i + 1}"]
    head += ["violation_fraction", "mean_steps", "mean_epochs", "mean_queries_per_decision"]
    return head


def summary_row(s: ResultSummary) -> list:
    row: list = [s.label, s.domain, s.episodes, s.mean_v_r, s.se_v_r]
    for mean, se in zip(s.mean_v_c, s.se_v_c):
        row += [float(mean), float(se)]
    row += [s.violation_fraction, s.mean_steps, s.mean_epochs, s.mean_queries_per_decision]
    return row


def run_campaign(cfg: ExperimentConfig) -> ResultSummary:
    """Run the configured episodes, write CSV artifacts, return the summary."""
    tasks = [(cfg, i) for i in range(cfg.episodes)]
    if cfg.workers > 1:
        with get_context("spawn").Pool(cfg.workers) as pool:
            results = pool.map(_episode_worker, tasks)
    else:
        results = [_episode_worker(t) for t in tasks]

    rows: list[dict] = []
    walls: list[float] = []
    queries: list[float] = []
    logs: dict[int, str] = {}
    for res in sorted(results, key=lambda r: r[1]):
        if res[0] == "error":
            _, index, seed, tb = res
            raise RuntimeError(f"episode {index} (seed {seed}) failed:\n{tb}")
        _, index, row, ws, qs, jsonl = res
        rows.append(row)
        walls.extend(ws)
        queries.extend(qs)
        if jsonl is not None:
            logs[index] = jsonl

    summary = summarize(cfg, rows, walls, queries)
    if cfg.out is not None:
        out = Path(cfg.out) / cfg.label
        k = summary.mean_v_c.shape[0]
        header = ["episode", "seed", "v_r"] + [f"v_c_{i + 1}" for i in range(k)] + [
            "steps", "epochs", "violations",
        ]
        _write_csv(out / "episodes.csv", header, [[r[h] for h in header] for r in rows])
        _write_csv(out / "summary.csv", summary_header(k), [summary_row(summary)])
        _write_csv(
            out / "timings.csv",
            ["label", "mean_wall_ms_per_decision", "decisions"],
            [[cfg.label, summary.mean_wall_ms_per_decision, len(walls)]],
        )
        (out / "config.ini").write_text(config_to_ini(cfg))
        if logs:
            log_dir = out / "episodes"
            log_dir.mkdir(parents=True, exist_ok=True)
            for index, text in logs.items():
                (log_dir / f"episode_{index:05d}.jsonl").write_text(text)
    return summary


def anytime_sweep(cfg: ExperimentConfig, query_counts: list[int]) -> list[ResultSummary]:
    """One campaign per query count; emits a long-format sweep CSV."""
    summaries = []
    for n in query_counts:
        sub = cfg.replaced(
            planner=dataclasses.replace(cfg.planner, queries=int(n)),
            label=f"{cfg.label}-n{n}",
        )
        summaries.append(run_campaign(sub))
    if cfg.out is not None:
        k = summaries[0].mean_v_c.shape[0]
        header = ["queries"] + summary_header(k)
        rows = [[n] + summary_row(s) for n, s in zip(query_counts, summaries)]
        _write_csv(Path(cfg.out) / f"anytime_{cfg.label}.csv", header, rows)
    return summaries


def branching_sweep(
    cfg: ExperimentConfig, catalog_sizes: list[int], strategy: str
) -> list[ResultSummary]:
    """One campaign per option-catalog size for a growth strategy."""
    if strategy not in ("uncertainty", "random"):
        raise ValueError(f"unknown branching strategy {strategy!r}")
    summaries = []
    for size in catalog_sizes:
        catalog = "base4" if size == 4 else f"{strategy}-{size}"
        sub = cfg.replaced(catalog=catalog, label=f"{cfg.label}-{strategy}{size}")
        summaries.append(run_campaign(sub))
    if cfg.out is not None:
        k = summaries[0].mean_v_c.shape[0]
        header = ["catalog_size"] + summary_header(k)
        rows = [[n] + summary_row(s) for n, s in zip(catalog_sizes, summaries)]
        _write_csv(Path(cfg.out) / f"branching_{cfg.label}_{strategy}.csv", header, rows)
    return summaries


def report(summary_paths: list[str | Path]) -> tuple[str, list[list]]:
    """Side-by-side comparison of campaign summaries sharing one domain."""
    rows = []
    header: list[str] | None = None
    for path in summary_paths:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            head = next(reader)
            if header is None:
                header = head
            elif head != header:
                raise ValueError(f"summary schema mismatch in {path}")
            rows.extend(list(reader))
    assert header is not None
    domains = {row[header.index("domain")] for row in rows}
    if len(domains) > 1:
        raise ValueError(f"summaries span multiple domains: {sorted(domains)}")
    idx = {name: header.index(name) for name in header}
    lines = [f"{'arm':<28} {'episodes':>8} {'v_r (mean+-se)':>20} {'v_c (mean+-se)':>22} {'viol%':>6}"]
    for row in rows:
        v_r = f"{float(row[idx['mean_v_r']]):.2f} +- {float(row[idx['se_v_r']]):.2f}"
        v_c = f"{float(row[idx['mean_v_c_1']]):.4f} +- {float(row[idx['se_v_c_1']]):.4f}"
        viol = f"{100 * float(row[idx['violation_fraction']]):.0f}"
        lines.append(f"{row[idx['label']]:<28} {row[idx['episodes']]:>8} {v_r:>20} {v_c:>22} {viol:>6}")
    return "\n".join(lines), [header] + rows


# ---- config file I/O -------------------------------------------------


def _parse_typed(text: str, typ) -> object:
    text = text.strip()
    if typ is bool:
        return text.lower() in ("1", "true", "yes", "on")
    if typ is int:
        return int(text)
    if typ is float:
        return float(text)
    return text


_OPTIONAL_FLOATS = ("dual_step_scale", "gamma")
_OPTIONAL_INTS = ("rollout_depth",)


def load_config(path: str | Path, overrides: list[str] | None = None) -> ExperimentConfig:
    """Read a sectioned key=value config file, then apply overrides of the
    form ``section.key=value``."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(path)
    for item in overrides or []:
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise ValueError(f"override must look like section.key=value, got {item!r}")
        section, _, name = key.partition(".")
        section, name = section.strip(), name.strip()
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, name, value.strip())

    cfg = ExperimentConfig()
    if parser.has_section("domain"):
        sec = dict(parser.items("domain"))
        cfg.domain = sec.pop("name", cfg.domain)
        cfg.domain_params = {k: float(v) for k, v in sec.items()}
    if parser.has_section("options"):
        sec = dict(parser.items("options"))
        cfg.catalog = sec.get("catalog", cfg.catalog)
        cfg.catalog_seed = int(sec.get("seed", cfg.catalog_seed))
    if parser.has_section("planner"):
        sec = dict(parser.items("planner"))
        kwargs = {}
        for f in dataclasses.fields(PlannerConfig):
            if f.name not in sec:
                continue
            raw = sec[f.name]
            if f.name in _OPTIONAL_FLOATS:
                kwargs[f.name] = None if raw.lower() == "none" else float(raw)
            elif f.name in _OPTIONAL_INTS:
                kwargs[f.name] = None if raw.lower() == "none" else int(raw)
            else:
                kwargs[f.name] = _parse_typed(raw, type(getattr(PlannerConfig(), f.name)))
        cfg.planner = PlannerConfig(**kwargs)
    if parser.has_section("campaign"):
        sec = dict(parser.items("campaign"))
        cfg.label = sec.get("label", cfg.label)
        cfg.episodes = int(sec.get("episodes", cfg.episodes))
        cfg.seed = int(sec.get("seed", cfg.seed))
        cfg.workers = int(sec.get("workers", cfg.workers))
        cfg.step_cap = int(sec.get("step_cap", cfg.step_cap))
        cfg.selector = sec.get("selector", cfg.selector)
        cfg.save_logs = sec.get("save_logs", "false").lower() in ("1", "true", "yes", "on")
        if "out" in sec:
            cfg.out = sec["out"]
    return cfg


def config_to_ini(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser()
    parser["domain"] = {"name": cfg.domain, **{k: repr(v) for k, v in cfg.domain_params.items()}}
    parser["options"] = {"catalog": cfg.catalog, "seed": str(cfg.catalog_seed)}
    parser["planner"] = {
        f.name: str(getattr(cfg.planner, f.name)) for f in dataclasses.fields(PlannerConfig)
    }
    parser["campaign"] = {
        "label": cfg.label,
        "episodes": str(cfg.episodes),
        "seed": str(cfg.seed),
        "workers": str(cfg.workers),
        "step_cap": str(cfg.step_cap),
        "selector": cfg.selector,
        "save_logs": str(cfg.save_logs),
    }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def default_out_dir() -> str:
    return os.environ.get("COPTS_OUT", "results")
