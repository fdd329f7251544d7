"""Robustness harness: run inference on clean and perturbed copies of a
dataset and aggregate the scores into a report.

The six benchmark perturbations are Gaussian noise (sigma 10, 30),
salt-and-pepper noise (1000, 5000 points), and Gaussian blur (7x7, 9x9).
An identity row is always evaluated as a sanity check: it must reproduce
the clean score exactly and never enters Q_p.
"""

from __future__ import annotations

import csv
import shutil
import tempfile
from pathlib import Path

from .dataset import load_dataset, read_mask, save_predictions
from .metrics import RobustnessReport, SequenceScore, jf_mean, score_sequence
from .perturb import PerturbationSpec, perturb_dataset
from .pipeline import PipelineConfig, make_store, propagate_sequence
from .rng import derive_seed


def benchmark_perturbations(seed: int) -> list[PerturbationSpec]:
    return [
        PerturbationSpec("gaussian_noise", 10, derive_seed(seed, "eps", "gaussian_noise", 10)),
        PerturbationSpec("gaussian_noise", 30, derive_seed(seed, "eps", "gaussian_noise", 30)),
        PerturbationSpec("salt_pepper", 1000, derive_seed(seed, "eps", "salt_pepper", 1000)),
        PerturbationSpec("salt_pepper", 5000, derive_seed(seed, "eps", "salt_pepper", 5000)),
        PerturbationSpec("gaussian_blur", 7, derive_seed(seed, "eps", "gaussian_blur", 7)),
        PerturbationSpec("gaussian_blur", 9, derive_seed(seed, "eps", "gaussian_blur", 9)),
    ]


def infer_dataset(data_root: Path, cfg: PipelineConfig, out_root: Path | None = None) -> list[SequenceScore]:
    """Run the pipeline over a dataset root and score every sequence against
    the annotations found there. Optionally persists predictions."""
    store = make_store(cfg)
    scores = []
    for record in load_dataset(data_root):
        preds = propagate_sequence(record, cfg, store)
        if out_root is not None:
            save_predictions(out_root, record.sequence_id, record.frame_stems, preds)
        gts = {}
        stem_to_index = {stem: i + 1 for i, stem in enumerate(record.frame_stems)}
        for stem, path in record.annotation_paths.items():
            if stem in stem_to_index:
                gts[stem_to_index[stem]] = read_mask(path, record.num_objects)
        scores.append(score_sequence(record.sequence_id, preds, gts, record.num_objects))
    return scores


def dataset_jf(data_root: Path, cfg: PipelineConfig) -> float:
    return jf_mean(infer_dataset(data_root, cfg))


def run_robustness(data_root: str | Path, cfg: PipelineConfig,
                   workdir: str | Path | None = None) -> RobustnessReport:
    """Evaluate the clean dataset, the identity copy, and all six benchmark
    perturbations. Perturbed copies are materialized under `workdir` (a
    temporary directory by default)."""
    data_root = Path(data_root)
    own_tmp = workdir is None
    workdir = Path(tempfile.mkdtemp(prefix="proxyvos-robust-")) if own_tmp else Path(workdir)
    try:
        q_c = dataset_jf(data_root, cfg)

        identity_root = workdir / "identity"
        perturb_dataset(data_root, PerturbationSpec("identity"), identity_root)
        identity_q = dataset_jf(identity_root, cfg)

        rows = []
        for spec in benchmark_perturbations(cfg.seed):
            eps_root = workdir / spec.label()
            perturb_dataset(data_root, spec, eps_root)
            rows.append((spec.label(), dataset_jf(eps_root, cfg)))
        return RobustnessReport.build(q_c, rows, identity_q=identity_q)
    finally:
        if own_tmp:
            shutil.rmtree(workdir, ignore_errors=True)


def write_robustness_csv(report: RobustnessReport, path: str | Path) -> None:
    """Table-shaped CSV: clean row, identity row, one row per perturbation
    with its drop from clean, then the Q_p and R_p summary rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "jf", "drop_from_clean"])
        w.writerow(["clean_Qc", f"{report.q_c:.6f}", ""])
        if report.identity_q is not None:
            w.writerow(["identity", f"{report.identity_q:.6f}",
                        f"{report.q_c - report.identity_q:.6f}"])
        for label, q in report.per_perturbation:
            w.writerow([label, f"{q:.6f}", f"{report.q_c - q:.6f}"])
        w.writerow(["after_perturbation_Qp", f"{report.q_p:.6f}", ""])
        w.writerow(["perturbation_robustness_Rp", f"{report.r_p:.6f}", ""])


def read_robustness_csv(path: str | Path) -> dict[str, float]:
    """Flat row -> J&F mapping, for tests and scripts."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out[row["row"]] = float(row["jf"])
    return out
