"""Desk-scale training runs on real MNIST: N = 2, D = 2, three seeds per model.

Needs --runslow and the MNIST IDX files under --mnist-dir. Every model is
trained once per session and shared by the checks below.
"""
from pathlib import Path

import numpy as np
import pytest

from application.commands import cmd_sweep, cmd_synth
from application.core.config import load_run_config
from application.core.dependencies import dataset
from application.services.evaluation import Evaluator
from application.services.training import train
from application.utils import derive_seed, read_json

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)
MARGINS = (0.5, 1.0, 2.0, 4.0)
MNIST_FILES = {
    "TRAIN_IMAGES": "train-images-idx3-ubyte",
    "TRAIN_LABELS": "train-labels-idx1-ubyte",
    "TEST_IMAGES":  "t10k-images-idx3-ubyte",
    "TEST_LABELS":  "t10k-labels-idx1-ubyte",
}


@pytest.fixture(scope="session")
def desk_settings(request, tmp_path_factory) -> dict:
    root = Path(request.config.getoption("--mnist-dir"))
    missing = [name for name in MNIST_FILES.values() if not (root / name).is_file()]
    if missing:
        pytest.skip(f"MNIST IDX files missing under {root}: {', '.join(missing)}")

    work = tmp_path_factory.mktemp("desk")
    settings = {key: str(root / name) for key, name in MNIST_FILES.items()}
    settings.update({
        "N_DIGITS": 2,
        "EMBED_DIM": 2,
        "DATASET_PATH": str(work / "ndigit-n2.ndmn"),
        "OUTPUT_DIR": str(work / "runs"),
        "ITERATIONS": request.config.getoption("--desk-iterations"),
        "LOG_LEVEL": "WARNING",
    })
    cmd_synth(load_run_config(overrides=settings))
    return settings


class DeskModels:
    """Trains and evaluates one model per (representation, seed) on first request."""

    def __init__(self, settings: dict):
        self.settings = settings
        self.reports = {}

    def report(self, representation: str, seed: int):
        key = (representation, seed)
        if key not in self.reports:
            config = load_run_config(overrides={**self.settings, "REPRESENTATION": representation})
            ds = dataset(config.DATASET_PATH)
            cp = train(config.train_config(seed=derive_seed(seed, "train")), ds, show_progress=False)
            eval_config = config.eval_config().model_copy(update={"seed": derive_seed(seed, "eval")})
            self.reports[key] = Evaluator(cp.encoder(), ds, eval_config).evaluate(checkpoint_step=cp.step)
        return self.reports[key]


@pytest.fixture(scope="session")
def models(desk_settings) -> DeskModels:
    return DeskModels(desk_settings)


def run_sweep(settings: dict, profile: str, output_dir: str) -> list:
    overrides = {**settings, "OUTPUT_DIR": output_dir, "SWEEP_SEEDS": ",".join(map(str, SEEDS))}
    config = load_run_config(profile=profile, overrides=overrides)
    cmd_sweep(config)
    return read_json(config.output_dir / "sweep_summary.json")["runs"]


def wins(pairs, margin: float) -> int:
    return sum(a - b >= margin for a, b in pairs)


# ============= Point vs MoG-1 =============
def test_clean_verification_ap(models):
    for representation in ("point", "gaussian"):
        for seed in SEEDS:
            ap = models.report(representation, seed).verification_row("clean").ap.mean
            assert ap >= 0.95, f"{representation} seed {seed}: clean AP {ap:.4f}"


def test_corrupt_verification_ap_gain(models):
    pairs = [
        (models.report("gaussian", seed).verification_row("corrupt").ap.mean,
         models.report("point", seed).verification_row("corrupt").ap.mean)
        for seed in SEEDS
    ]
    assert wins(pairs, 0.01) >= 2, pairs


def test_corrupt_gallery_knn_gain(models):
    pairs = [
        (models.report("gaussian", seed).knn_row("corrupt", "clean").majority.mean,
         models.report("point", seed).knn_row("corrupt", "clean").majority.mean)
        for seed in SEEDS
    ]
    assert wins(pairs, 0.05) >= 2, pairs


def test_corrupt_uncertainty_tracks_ap(models):
    for seed in SEEDS:
        report = models.report("gaussian", seed)
        assert report.eval.n_bins == 20 and report.eval.repeats == 10
        tau = report.verification_row("corrupt").ap_tau
        assert tau.mean >= 0.3, f"seed {seed}: tau {tau.mean:.3f}"
        assert tau.std <= 0.15, f"seed {seed}: tau std {tau.std:.3f}"


def test_occlusion_widens_sigma(models):
    for seed in SEEDS:
        sigma = models.report("gaussian", seed).mean_sigma
        assert sigma["corrupt"] >= 1.2 * sigma["clean"], f"seed {seed}: {sigma}"


# ============= Sweeps =============
def test_kl_weight_helps_corrupt_knn(desk_settings, tmp_path):
    rows = run_sweep(desk_settings, "beta-sweep", str(tmp_path / "beta"))
    by_run = {(row["run"], row["seed"]): row for row in rows}
    regularised = [by_run[("beta-0.0001", seed)] for seed in SEEDS]
    unregularised = [by_run[("beta-0", seed)] for seed in SEEDS]

    pairs = [(float(a["knn_corrupt_gallery"]), float(b["knn_corrupt_gallery"]))
             for a, b in zip(regularised, unregularised)]
    assert sum(a > b for a, b in pairs) >= 2, pairs
    for a, b in zip(regularised, unregularised):
        assert float(a["mean_kl_corrupt"]) < float(b["mean_kl_corrupt"])
        assert float(a["mean_kl_clean"]) < float(b["mean_kl_clean"])


def test_soft_contrastive_bounds_hard(desk_settings, tmp_path):
    rows = run_sweep(desk_settings, "soft-vs-hard", str(tmp_path / "contrastive"))

    def mean_ap(run, condition):
        return np.mean([float(row[f"ap_{condition}"]) for row in rows if row["run"] == run])

    for margin in MARGINS:
        for condition in ("clean", "corrupt"):
            soft, hard = mean_ap("soft", condition), mean_ap(f"hard-m{margin:g}", condition)
            assert soft >= hard - 0.01, f"M={margin:g} {condition}: soft {soft:.4f} hard {hard:.4f}"
