import csv
from pathlib import Path
from typing import Optional

import numpy as np

from application.core.errors import DivergenceDetected, NonFiniteValue, RunMismatch
from application.core.logging import get_logger
from application.models import NDigitDataset, TrainConfig
from application.services.autodiff import CompGraph
from application.services.encoder import embed, init_params, match_head
from application.services.encoder.encoder import A_RAW, B
from application.services.hib import batch_objective, draw_noise, stratified_components
from application.services.training.batching import PairBatch, PairSampler
from application.services.training.checkpoint import CURVE_COLUMNS, Checkpoint, save_checkpoint
from application.services.training.optimizer import build_optimizer
from application.utils import derive_rng, derive_seed, progress_bar

logger = get_logger(__name__)


def check_sampling(config: TrainConfig) -> None:
    """Fail before the first step when draws cannot be stratified over the mixture."""
    enc = config.encoder
    if not enc.stochastic:
        return
    stratified_components(enc.n_components, config.num_samples)
    if enc.n_components > 1:
        stratified_components(enc.n_components, config.kl_samples)


def write_curve(curve, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CURVE_COLUMNS)
        for step, loss, kl, a, b in curve:
            writer.writerow([step, f"{loss:.8g}", f"{kl:.8g}", f"{a:.8g}", f"{b:.8g}"])


class Trainer:
    """Owns the parameter state of one run and steps it with balanced pair batches."""

    def __init__(self, config: TrainConfig, ds: NDigitDataset, resume: Optional[Checkpoint] = None):
        check_sampling(config)
        if ds.split.n_digits != config.encoder.n_digits:
            raise RunMismatch(f"dataset has N={ds.split.n_digits}, encoder expects N={config.encoder.n_digits}")
        self.config = config
        self.sampler = PairSampler(ds.train, config.anchor_classes)
        self.optimizer = build_optimizer(config)
        self.rng = derive_rng(config.seed, "batches")

        if resume is None:
            self.params = init_params(config.encoder, derive_seed(config.seed, "init"))
            self.step = 0
            self.curve = []
            self.window = np.zeros(3)
        else:
            if resume.config.model_copy(update={"iterations": config.iterations}) != config:
                raise RunMismatch("checkpoint was produced with a different training configuration")
            self.params = {name: np.array(value) for name, value in resume.params.items()}
            self.optimizer.load_state_dict(resume.optimizer_state)
            self.rng.bit_generator.state = resume.rng_state
            self.step = resume.step
            self.curve = list(resume.curve)
            self.window = np.array(resume.window, dtype=np.float64)
            logger.info(f"Resuming training at step {self.step}")

        self.graph = CompGraph(self._program, parameters=self.params)
        # CompGraph keeps the same arrays the optimizer updates in place
        self.params = self.graph.parameters

    def _program(self, g: CompGraph, leaves, batch: PairBatch, noise):
        nodes = embed(self.config.encoder, leaves, leaves["images"])
        return batch_objective(
            self.config, nodes, leaves[A_RAW], leaves[B],
            batch.left, batch.right, batch.labels, noise,
        )

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(
            config=self.config,
            params={name: value.copy() for name, value in self.params.items()},
            step=self.step,
            optimizer_state={name: np.array(value) for name, value in self.optimizer.state_dict().items()},
            rng_state=self.rng.bit_generator.state,
            curve=list(self.curve),
            window=self.window.copy(),
        )

    def train_step(self) -> tuple[float, float]:
        batch = self.sampler.draw(self.rng, self.config.batch_size, self.config.pairs_per_batch)
        noise = draw_noise(self.rng, self.config, self.config.batch_size, len(batch))
        try:
            out = self.graph.forward({"images": batch.images}, batch=batch, noise=noise)
            loss = float(out["loss"])
            if not np.isfinite(loss):
                raise NonFiniteValue(f"loss is {loss}")
            grads = self.graph.backward("loss")
        except NonFiniteValue as e:
            raise DivergenceDetected(f"training diverged at step {self.step + 1}: {e}") from e
        self.optimizer.update(self.params, grads)
        self.step += 1
        return loss, float(out["kl"])

    def _record(self) -> None:
        loss_sum, kl_sum, count = self.window
        head = match_head(self.params)
        self.curve.append((self.step, loss_sum / count, kl_sum / count, head.a, head.b))
        self.window = np.zeros(3)

    def run(self, output_dir: Optional[Path | str] = None, show_progress: bool = True) -> Checkpoint:
        config = self.config
        output_dir = Path(output_dir) if output_dir is not None else None
        logger.info(
            f"Training {config.encoder.label} D={config.encoder.embed_dim} ({config.loss} loss, beta={config.beta}) "
            f"for {config.iterations} iterations from step {self.step}"
        )
        bar = progress_bar(total=config.iterations, initial=self.step, desc="Training", unit="step", enabled=show_progress)
        try:
            while self.step < config.iterations:
                try:
                    loss, kl = self.train_step()
                except DivergenceDetected as e:
                    logger.error(str(e))
                    if output_dir is not None:
                        write_curve(self.curve, output_dir / "curve.csv")
                    raise
                self.window += (loss, kl, 1.0)
                bar.update(1)
                if self.step % config.log_cadence == 0 or self.step == config.iterations:
                    self._record()
                    _, mean_loss, mean_kl, a, b = self.curve[-1]
                    bar.set_postfix(loss=f"{mean_loss:.4f}", kl=f"{mean_kl:.3f}")
                    logger.debug(f"step {self.step}: loss {mean_loss:.5f}, kl {mean_kl:.4f}, a {a:.4f}, b {b:.4f}")
                if output_dir is not None and self.step % config.checkpoint_cadence == 0:
                    save_checkpoint(self.checkpoint(), output_dir / "checkpoint.bin")
        finally:
            bar.close()

        cp = self.checkpoint()
        if output_dir is not None:
            save_checkpoint(cp, output_dir / "checkpoint.bin")
            write_curve(cp.curve, output_dir / "curve.csv")
        if cp.curve:
            logger.info(f"Finished at step {cp.step}: loss {cp.curve[-1][1]:.5f}, mean KL {cp.curve[-1][2]:.4f}")
        return cp


def train(
    config:         TrainConfig,
    ds:             NDigitDataset,
    output_dir:     Optional[Path | str] = None,
    resume:         Optional[Checkpoint] = None,
    show_progress:  bool = True,
) -> Checkpoint:
    return Trainer(config, ds, resume).run(output_dir, show_progress)
