from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Type

from dotenv import dotenv_values
from pydantic import field_validator
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict

from application.models.config import EncoderConfig, EvalConfig, TrainConfig
from application.utils.seeding import derive_seed


class RunConfig(BaseSettings):
    """Run configuration for every CLI stage.
    Values come from a shipped profile, a flat KEY=VALUE file and --set overrides, in that order.
    The process environment is never consulted so a run manifest fully describes the run."""

    # ============= Run =============
    MASTER_SEED:        int = 0
    OUTPUT_DIR:         str = "runs/default"
    THREADS:            int = 1

    # ============= MNIST Source =============
    """Raw IDX files supplied by the user; nothing is downloaded."""
    TRAIN_IMAGES:       str = "data/train-images-idx3-ubyte"
    TRAIN_LABELS:       str = "data/train-labels-idx1-ubyte"
    TEST_IMAGES:        str = "data/t10k-images-idx3-ubyte"
    TEST_LABELS:        str = "data/t10k-labels-idx1-ubyte"

    # ============= N-digit MNIST =============
    N_DIGITS:           int   = 2
    PUBLISHED_SPLITS:   bool  = True
    OCCLUSION_PROB:     float = 0.2
    N_TRAIN:            int   = 100_000
    N_TEST:             int   = 10_000
    DATASET_PATH:       str   = "data/ndigit-n2.ndmn"

    # ============= Encoder =============
    EMBED_DIM:          int = 2
    REPRESENTATION:     Literal["point", "gaussian", "mog"] = "gaussian"
    N_COMPONENTS:       int = 1
    CONV_CHANNELS_1:    int = 32
    CONV_CHANNELS_2:    int = 64
    SIGMA_FLOOR:        float = 1e-6

    # ============= Training =============
    LOSS:               Literal["soft", "hard"] = "soft"
    MARGIN:             float = 1.0
    BATCH_SIZE:         int   = 128
    PAIRS_PER_BATCH:    int   = 128
    ANCHOR_CLASSES:     int   = 8
    ITERATIONS:         int   = 50_000   # 500k in the full-length profile
    BETA:               float = 1e-4
    NUM_SAMPLES:        int   = 8
    KL_SAMPLES:         int   = 32
    RESAMPLE_PER_PAIR:  bool  = False
    OPTIMIZER:          Literal["adam", "sgd"] = "adam"
    LEARNING_RATE:      float = 1e-3
    ADAM_BETA1:         float = 0.9
    ADAM_BETA2:         float = 0.999
    ADAM_EPS:           float = 1e-8
    LOG_CADENCE:        int   = 500
    CHECKPOINT_CADENCE: int   = 5_000

    # ============= Evaluation =============
    CHECKPOINT:         str   = ""       # empty means <OUTPUT_DIR>/checkpoint.bin
    EVAL_PAIRS:         int   = 10_000
    EVAL_SAMPLES:       int   = 8
    KNN_K:              int   = 5
    KNN_PROBES:         int   = 1_000
    KNN_RANKING:        Literal["match_prob", "mean_distance"] = "match_prob"
    N_BINS:             int   = 20
    BIN_RULE:           Literal["equal_count", "equal_width"] = "equal_count"
    EVAL_REPEATS:       int   = 10
    EVAL_SCATTER:       bool  = False

    # ============= Sweeps =============
    SWEEP_KIND:         Literal["beta", "contrastive"] = "beta"
    SWEEP_BETAS:        List[float] = [0.0, 1e-4]
    SWEEP_MARGINS:      List[float] = [0.5, 1.0, 2.0, 4.0]
    SWEEP_SEEDS:        List[int]   = [0]

    # ============= Logging =============
    LOG_LEVEL:          str = "INFO"
    LOG_FILE:           str = "hib.log"
    LOG_MAX_BYTES:      int = 10 * 1024 * 1024  # 10MB
    LOG_BACKUP_COUNT:   int = 5

    model_config = SettingsConfigDict(
        case_sensitive=True,
        extra="forbid",
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls:           Type[BaseSettings],
        init_settings:          PydanticBaseSettingsSource,
        env_settings:           PydanticBaseSettingsSource,
        dotenv_settings:        PydanticBaseSettingsSource,
        file_secret_settings:   PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        return (init_settings,)

    @field_validator("SWEEP_BETAS", "SWEEP_MARGINS", mode="before")
    def _split_floats(cls, v: Any):
        if isinstance(v, str):
            return [float(item) for item in v.split(",") if item.strip()]
        return v

    @field_validator("SWEEP_SEEDS", mode="before")
    def _split_ints(cls, v: Any):
        if isinstance(v, str):
            return [int(item) for item in v.split(",") if item.strip()]
        return v

    # ---- Typed views handed to the services ----
    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            n_digits=self.N_DIGITS,
            embed_dim=self.EMBED_DIM,
            representation=self.REPRESENTATION,
            n_components=self.N_COMPONENTS if self.REPRESENTATION == "mog" else 1,
            conv_channels=(self.CONV_CHANNELS_1, self.CONV_CHANNELS_2),
            sigma_floor=self.SIGMA_FLOOR,
        )

    def train_config(self, seed: Optional[int] = None) -> TrainConfig:
        return TrainConfig(
            encoder=self.encoder_config(),
            loss=self.LOSS,
            margin=self.MARGIN,
            batch_size=self.BATCH_SIZE,
            pairs_per_batch=self.PAIRS_PER_BATCH,
            anchor_classes=self.ANCHOR_CLASSES,
            iterations=self.ITERATIONS,
            beta=self.BETA,
            num_samples=self.NUM_SAMPLES,
            kl_samples=self.KL_SAMPLES,
            resample_per_pair=self.RESAMPLE_PER_PAIR,
            optimizer=self.OPTIMIZER,
            learning_rate=self.LEARNING_RATE,
            adam_beta1=self.ADAM_BETA1,
            adam_beta2=self.ADAM_BETA2,
            adam_eps=self.ADAM_EPS,
            log_cadence=self.LOG_CADENCE,
            checkpoint_cadence=self.CHECKPOINT_CADENCE,
            seed=derive_seed(self.MASTER_SEED, "train") if seed is None else seed,
        )

    def eval_config(self) -> EvalConfig:
        return EvalConfig(
            n_pairs=self.EVAL_PAIRS,
            num_samples=self.EVAL_SAMPLES,
            knn_k=self.KNN_K,
            knn_probes=self.KNN_PROBES,
            knn_ranking=self.KNN_RANKING,
            n_bins=self.N_BINS,
            bin_rule=self.BIN_RULE,
            repeats=self.EVAL_REPEATS,
            seed=derive_seed(self.MASTER_SEED, "eval"),
            threads=self.THREADS,
        )

    @property
    def output_dir(self) -> Path:
        return Path(self.OUTPUT_DIR)

    @property
    def checkpoint_path(self) -> Path:
        return Path(self.CHECKPOINT) if self.CHECKPOINT else self.output_dir / "checkpoint.bin"


# ============= Shipped profiles =============
# Named presets for the experiments; a config file or --set flags override them
PROFILES: Dict[str, Dict[str, Any]] = {
    "n2d2": {
        "N_DIGITS": 2,
        "EMBED_DIM": 2,
        "DATASET_PATH": "data/ndigit-n2.ndmn",
    },
    "beta-sweep": {
        "N_DIGITS": 2,
        "EMBED_DIM": 2,
        "REPRESENTATION": "gaussian",
        "SWEEP_KIND": "beta",
        "SWEEP_BETAS": "0,1e-4",
        "SWEEP_SEEDS": "0,1,2",
    },
    "kl-weight-study": {
        "N_DIGITS": 3,
        "EMBED_DIM": 3,
        "REPRESENTATION": "gaussian",
        "DATASET_PATH": "data/ndigit-n3.ndmn",
        "SWEEP_KIND": "beta",
        "SWEEP_BETAS": "1e-6,1e-5,1e-4,1e-3,1e-2",
    },
    "higher-dims-n3d6": {
        "N_DIGITS": 3,
        "EMBED_DIM": 6,
        "BETA": 1e-6,
        "DATASET_PATH": "data/ndigit-n3.ndmn",
    },
    "soft-vs-hard": {
        "N_DIGITS": 2,
        "EMBED_DIM": 2,
        "REPRESENTATION": "point",
        "SWEEP_KIND": "contrastive",
        "SWEEP_MARGINS": "0.5,1,2,4",
    },
    "latent-1d": {
        "N_DIGITS": 2,
        "EMBED_DIM": 1,
        "REPRESENTATION": "gaussian",
    },
    "full-length": {
        "ITERATIONS": 500_000,
    },
}

# Alternate names accepted by --profile
PROFILE_ALIASES: Dict[str, str] = {
    "table1-n2d2":          "n2d2",
    "table6-beta-sweep":    "beta-sweep",
    "paper-exact":          "full-length",
}


def read_config_file(path: Path | str) -> Dict[str, Optional[str]]:
    """Parse a flat KEY=VALUE file (comments and blank lines allowed)."""
    path = Path(path)
    if not path.is_file():
        from application.core.errors import IoFailure
        raise IoFailure(f"Config file not found: {path}")
    return dict(dotenv_values(path))


def load_run_config(
    config_file:    Optional[Path | str] = None,
    profile:        Optional[str] = None,
    overrides:      Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """Resolve profile < file < overrides into a validated RunConfig."""
    values: Dict[str, Any] = {}
    if profile:
        profile = PROFILE_ALIASES.get(profile, profile)
        if profile not in PROFILES:
            raise KeyError(f"Unknown profile '{profile}'. Available: {', '.join(sorted(PROFILES))}")
        values.update(PROFILES[profile])
    if config_file:
        values.update({k: v for k, v in read_config_file(config_file).items() if v is not None})
    if overrides:
        values.update(overrides)
    return RunConfig(**values)


# Create singleton instance
settings = RunConfig()
