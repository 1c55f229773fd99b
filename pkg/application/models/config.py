from typing import Literal, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class EncoderConfig(BaseModel):
    """Shape of the CNN stump and its distribution heads."""
    n_digits:           int = Field(default=2, ge=1)
    embed_dim:          int = Field(default=2, ge=1)
    representation:     Literal["point", "gaussian", "mog"] = "gaussian"
    n_components:       int = Field(default=1, ge=1)
    conv_channels:      Tuple[int, int] = (32, 64)
    sigma_floor:        float = Field(default=1e-6, gt=0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="before")
    @classmethod
    def _collapse_single_mixture(cls, data):
        # a one-component mixture is the plain Gaussian head
        if isinstance(data, dict) and data.get("representation") == "mog" and data.get("n_components", 1) in (1, "1"):
            return {**data, "representation": "gaussian"}
        return data

    @model_validator(mode="after")
    def _single_component_unless_mog(self):
        if self.representation != "mog" and self.n_components != 1:
            raise ValueError(f"{self.representation} embeddings have exactly one component")
        return self

    @property
    def image_width(self) -> int:
        return 28 * self.n_digits

    @property
    def feature_dim(self) -> int:
        # two 2x2 poolings: 28 x 28N -> 7 x 7N
        return 7 * (7 * self.n_digits) * self.conv_channels[1]

    @property
    def stochastic(self) -> bool:
        return self.representation != "point"

    @property
    def label(self) -> str:
        """Column label used in reports: point, MoG-1, MoG-2, ..."""
        return "point" if self.representation == "point" else f"MoG-{self.n_components}"


class TrainConfig(BaseModel):
    encoder:            EncoderConfig = Field(default_factory=EncoderConfig)
    loss:               Literal["soft", "hard"] = "soft"
    margin:             float = Field(default=1.0, gt=0)
    batch_size:         int = Field(default=128, ge=2)
    pairs_per_batch:    int = Field(default=128, ge=1)
    anchor_classes:     int = Field(default=8, ge=1)
    iterations:         int = Field(default=50_000, ge=0)
    beta:               float = Field(default=1e-4, ge=0)
    num_samples:        int = Field(default=8, ge=1)
    kl_samples:         int = Field(default=32, ge=1)
    resample_per_pair:  bool = False
    optimizer:          Literal["adam", "sgd"] = "adam"
    learning_rate:      float = Field(default=1e-3, gt=0)
    adam_beta1:         float = 0.9
    adam_beta2:         float = 0.999
    adam_eps:           float = 1e-8
    log_cadence:        int = Field(default=500, ge=1)
    checkpoint_cadence: int = Field(default=5_000, ge=1)
    seed:               int = 0

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_pairing(self):
        if self.batch_size % 2:
            raise ValueError("batch_size must be even so both batch streams get the same share")
        if self.loss == "hard" and self.encoder.representation != "point":
            raise ValueError("the margin contrastive loss is defined for point embeddings only")
        return self


class EvalConfig(BaseModel):
    n_pairs:        int = Field(default=10_000, ge=2)
    num_samples:    int = Field(default=8, ge=1)
    knn_k:          int = Field(default=5, ge=1)
    knn_probes:     int = Field(default=1_000, ge=1)
    knn_ranking:    Literal["match_prob", "mean_distance"] = "match_prob"
    n_bins:         int = Field(default=20, ge=2)
    bin_rule:       Literal["equal_count", "equal_width"] = "equal_count"
    repeats:        int = Field(default=10, ge=1)
    seed:           int = 0
    threads:        int = Field(default=1, ge=1)

    model_config = ConfigDict(frozen=True)
