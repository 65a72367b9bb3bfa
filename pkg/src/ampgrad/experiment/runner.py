"""Executes every (schedule x seed) run of a config and writes the summary."""
from __future__ import annotations

import concurrent.futures as cf
import functools
import hashlib
import json
import logging
import os
import traceback
from dataclasses import asdict, dataclass

from ..amplification import write_selection_dump
from ..checkpoint import atomic_write_bytes
from ..data import load_cifar10, normalize, subset, synth_gaussians, synth_images
from ..metrics import write_metrics
from ..nn.archs import build_model, get_preset
from ..schedule import PhaseParams, Schedule, parse_schedule
from ..trainer import AmpOptions, Trainer, TrainOptions
from .config import DatasetSpec, ExperimentConfig

log = logging.getLogger(__name__)

THREADS_ENV = "AMPGRAD_THREADS"


def worker_cap(requested: int) -> int:
    """``requested`` limited by $AMPGRAD_THREADS (when set) and never below 1."""
    cap = os.environ.get(THREADS_ENV)
    n = requested
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, cap)
    return max(1, n)


@functools.lru_cache(maxsize=2)
def load_datasets(spec: DatasetSpec) -> tuple:
    """(train, test), standardised with training statistics when ``spec.normalize``."""
    if spec.kind == "cifar10":
        train, test = load_cifar10(spec.dir)
        if spec.train_size is not None:
            train = subset(train, spec.train_size, spec.subset_seed, spec.stratified)
        if spec.test_size is not None:
            test = subset(test, spec.test_size, spec.subset_seed + 1, spec.stratified)
    elif spec.kind == "synth-images":
        train = synth_images(spec.seed, spec.train_size or 5000, spec.classes)
        test = synth_images(spec.seed + 1, spec.test_size or 1000, spec.classes)
    else:
        train = synth_gaussians(spec.seed, spec.train_size or 1000, spec.classes, spec.dim,
                                spec.separation)
        test = synth_gaussians(spec.seed + 1, spec.test_size or 200, spec.classes, spec.dim,
                               spec.separation)
    if spec.normalize:
        train, stats = normalize(train)
        test, _ = normalize(test, stats)
    return train, test


def baseline_of(schedule: Schedule) -> Schedule:
    return Schedule(tuple(PhaseParams(p.end_epoch, p.lr, 0.0, 1.0) for p in schedule.phases))


def run_label(schedule: Schedule) -> str:
    label = schedule.label
    if label == "custom":
        label += "_" + hashlib.sha1(schedule.to_text().encode()).hexdigest()[:8]
    return label


@dataclass
class Job:
    label: str
    schedule_text: str
    seed: int
    run_dir: str
    arch: str
    arch_options: dict
    dataset: DatasetSpec
    batch_size: int
    layer_types: tuple
    amp_point: str
    scale_own_params: bool
    block_bn: str
    include_downsample_bn: bool


def execute_job(job: Job) -> dict:
    """One training run; never raises, failures are reported in the result."""
    result = {"label": job.label, "seed": job.seed, "run_dir": job.run_dir, "ok": False}
    try:
        os.makedirs(job.run_dir, exist_ok=True)
        train_set, test_set = load_datasets(job.dataset)
        arch = get_preset(job.arch, input_shape=tuple(train_set.images.shape[1:]),
                          num_classes=train_set.num_classes, **job.arch_options)
        model = build_model(arch, job.seed)
        amp = AmpOptions(job.layer_types, job.amp_point, job.scale_own_params, job.block_bn,
                         job.include_downsample_bn)
        trainer = Trainer(model, TrainOptions(batch_size=job.batch_size, amp=amp),
                          checkpoint_path=os.path.join(job.run_dir, "checkpoint.ampg"))
        records = trainer.fit(parse_schedule(job.schedule_text), train_set, test_set, job.seed)
        write_metrics(records, os.path.join(job.run_dir, "metrics.csv"))
        write_selection_dump(trainer.selections, os.path.join(job.run_dir, "selection.txt"))
        last = records[-1]
        result.update(ok=True, final_train_acc=last.train_acc, final_test_acc=last.test_acc)
    except Exception as exc:
        result["error"] = f"{type(exc).__name__}: {exc}"
        result["traceback"] = traceback.format_exc()
    return result


def plan_jobs(config: ExperimentConfig) -> tuple:
    """(points, jobs): points maps label -> (schedule, seeds); baseline comes first."""
    base = baseline_of(config.schedules[0])
    points = {"baseline": (base, tuple(config.baseline_seeds))}
    for sched in config.schedules:
        label = run_label(sched)
        if label == "baseline":
            continue
        if label in points and points[label][0] != sched:
            raise ValueError(f"two different schedules share the label {label!r}")
        points[label] = (sched, tuple(config.seeds))
    jobs = []
    for label, (sched, seeds) in points.items():
        for seed in seeds:
            jobs.append(Job(
                label, sched.to_text(), seed,
                os.path.join(config.output_dir, "runs", f"{label}_seed{seed}"),
                config.arch, dict(config.arch_options), config.dataset, config.batch_size,
                tuple(config.layer_types), config.amp_point, config.scale_own_params,
                config.block_bn, config.include_downsample_bn))
    return points, jobs


def _mean(xs):
    return sum(xs) / len(xs) if xs else float("nan")


def _schedule_params(sched: Schedule) -> dict:
    label = sched.label
    ph = sched.phases
    if label.startswith("S1_"):
        return {"kind": "S1", "mm": ph[1].beta, "nn": None, "gamma": ph[1].gamma}
    if label.startswith("S2_"):
        return {"kind": "S2", "mm": ph[1].beta, "nn": ph[2].beta, "gamma": ph[1].gamma}
    gammas = [p.gamma for p in ph if p.beta > 0]
    return {"kind": label, "mm": None, "nn": None, "gamma": gammas[0] if gammas else 1.0}


def summarize(config: ExperimentConfig, points: dict, results: list) -> dict:
    out_dir = config.output_dir
    by_label = {}
    for r in results:
        by_label.setdefault(r["label"], []).append(r)
    entries = []
    for label, (sched, seeds) in points.items():
        runs = sorted((r for r in by_label.get(label, []) if r["ok"]),
                      key=lambda r: seeds.index(r["seed"]))
        tests = [r["final_test_acc"] for r in runs]
        trains = [r["final_train_acc"] for r in runs]
        best = max(range(len(runs)), key=lambda i: (tests[i], -i)) if runs else None
        entry = {
            "label": label, "schedule": sched.to_text(), **_schedule_params(sched),
            "seeds": list(seeds), "n_runs": len(runs),
            "runs": [{"seed": r["seed"],
                      "csv": os.path.relpath(os.path.join(r["run_dir"], "metrics.csv"), out_dir),
                      "final_train_acc": r["final_train_acc"],
                      "final_test_acc": r["final_test_acc"]} for r in runs],
            "mean_test_acc": _mean(tests), "best_test_acc": max(tests, default=float("nan")),
            "best_seed": runs[best]["seed"] if runs else None,
            "mean_train_acc": _mean(trains), "best_train_acc": max(trains, default=float("nan")),
        }
        entries.append(entry)
    base = entries[0]
    for e in entries:
        e["improvement_test"] = e["best_test_acc"] - base["mean_test_acc"]
        e["improvement_train"] = e["best_train_acc"] - base["mean_train_acc"]
    failures = [{k: r[k] for k in ("label", "seed", "run_dir", "error")}
                for r in results if not r["ok"]]
    return {
        "arch": config.arch, "template": config.template,
        "layer_types": list(config.layer_types), "dataset": asdict(config.dataset),
        "baseline": {"label": "baseline", "seeds": base["seeds"],
                     "mean_test_acc": base["mean_test_acc"],
                     "mean_train_acc": base["mean_train_acc"]},
        "points": entries, "failures": failures,
    }


SUMMARY_COLUMNS = ("label", "n_runs", "mean_train_acc", "best_train_acc", "improvement_train",
                   "mean_test_acc", "best_test_acc", "improvement_test", "best_seed", "schedule")


def format_summary_tsv(summary: dict) -> str:
    lines = ["\t".join(SUMMARY_COLUMNS)]
    for e in summary["points"]:
        row = []
        for col in SUMMARY_COLUMNS:
            v = e[col]
            row.append(f"{v:.4f}" if isinstance(v, float) else str(v))
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


def write_summary(summary: dict, out_dir: str) -> str:
    path = os.path.join(out_dir, "summary.json")
    atomic_write_bytes(path, (json.dumps(summary, indent=2, sort_keys=True) + "\n").encode())
    atomic_write_bytes(os.path.join(out_dir, "summary.tsv"), format_summary_tsv(summary).encode())
    return path


def run_jobs(jobs: list, workers: int) -> list:
    workers = worker_cap(min(workers, len(jobs)))
    if workers == 1:
        results = []
        for i, job in enumerate(jobs, 1):
            log.info("run %d/%d: %s seed %d", i, len(jobs), job.label, job.seed)
            results.append(execute_job(job))
        return results
    with cf.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(execute_job, jobs))


def run(config: ExperimentConfig) -> int:
    """Run everything in ``config``; 0 when every run succeeded, 1 otherwise."""
    os.makedirs(config.output_dir, exist_ok=True)
    points, jobs = plan_jobs(config)
    results = run_jobs(jobs, config.workers)
    summary = summarize(config, points, results)
    write_summary(summary, config.output_dir)
    fail_path = os.path.join(config.output_dir, "failures.txt")
    if summary["failures"]:
        report = "".join(f"{r['label']} seed {r['seed']}: {r['error']}\n{r['traceback']}\n"
                         for r in results if not r["ok"])
        atomic_write_bytes(fail_path, report.encode())
        for f in summary["failures"]:
            log.error("run failed: %s seed %s: %s", f["label"], f["seed"], f["error"])
        return 1
    if os.path.exists(fail_path):
        os.unlink(fail_path)
    return 0
