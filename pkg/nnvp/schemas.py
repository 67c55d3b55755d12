import enum
from typing import Dict, List, Literal, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator


class DatasetSchema(BaseModel):
    """Column layout of a UCI-style data file. Label is always the last kept column."""
    model_config = ConfigDict(frozen=True)

    has_header: bool = False
    # None -> any run of whitespace (raw Ecoli / Vehicle files)
    delimiter: Optional[str] = ","
    drop_columns: List[int] = Field(default_factory=list)

    @field_validator("drop_columns")
    def check_drop_columns(cls, v):
        if any(i < 0 for i in v):
            raise ValueError("drop_columns must be non-negative column indices")
        return sorted(set(v))


class ReferenceResults(BaseModel):
    """Published batch results of a benchmark, keyed by method ("NN", "V1".."V5")."""
    accuracy: Dict[str, float] = Field(default_factory=dict)  # percent
    reliability: Dict[str, float] = Field(default_factory=dict)


class DatasetPreset(BaseModel):
    """One entry of data/datasets.json."""
    name: str
    title: str
    file: str
    data_schema: DatasetSchema = Field(default_factory=DatasetSchema, alias="schema")
    hidden_units: int = Field(..., ge=1)
    bins: int = Field(100, ge=1)
    examples: int
    attributes: int
    classes: int
    reference: Optional[ReferenceResults] = None

    model_config = ConfigDict(populate_by_name=True)


class SplitPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int = Field(0, ge=0)
    test_fraction: float = Field(0.10, gt=0, lt=1)
    num_repeats: int = Field(10, ge=1)


class MLPConfig(BaseModel):
    """Network size and training protocol. Defaults follow the benchmark runs."""
    model_config = ConfigDict(frozen=True)

    hidden_units: int = Field(..., ge=1)
    num_restarts: int = Field(3, ge=1)
    validation_fraction: float = Field(0.30, gt=0, lt=1)
    max_epochs: int = Field(200, ge=0)
    patience: int = Field(20, ge=0)
    init_seed: int = Field(0, ge=0)

    def with_seed(self, seed: int) -> "MLPConfig":
        return self.model_copy(update={"init_seed": seed})


class TaxonomyKind(str, enum.Enum):
    """Venn taxonomies over the network's output vector."""
    v1 = "v1"  # argmax class
    v2 = "v2"  # argmax class x (max output >= theta)
    v3 = "v3"  # argmax class x (second-highest output >= theta)
    v4 = "v4"  # argmax class x (max - second >= theta)
    v5 = "v5"  # set of classes with output >= theta


DEFAULT_THETA = {
    TaxonomyKind.v2: 0.75,
    TaxonomyKind.v3: 0.25,
    TaxonomyKind.v4: 0.5,
    TaxonomyKind.v5: 0.25,
}

# open intervals (low, high) theta must lie in; V2's lower bound is raised to 1/c at use
THETA_RANGE = {
    TaxonomyKind.v2: (0.0, 1.0),
    TaxonomyKind.v3: (0.0, 0.5),
    TaxonomyKind.v4: (0.0, 1.0),
    TaxonomyKind.v5: (0.0, 0.5),
}


class TaxonomyRule(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: TaxonomyKind
    theta: Optional[float] = None

    @model_validator(mode="before")
    @classmethod
    def fill_default_theta(cls, data):
        if isinstance(data, dict) and data.get("theta") is None:
            kind = TaxonomyKind(data.get("kind"))
            if kind in DEFAULT_THETA:
                data = {**data, "theta": DEFAULT_THETA[kind]}
        return data

    @model_validator(mode="after")
    def check_theta(self):
        if self.kind == TaxonomyKind.v1:
            if self.theta is not None:
                raise ValueError("taxonomy v1 takes no threshold")
            return self
        low, high = THETA_RANGE[self.kind]
        if not low < self.theta < high:
            raise ValueError(f"theta for {self.kind.value} must lie in ({low}, {high}), got {self.theta}")
        return self

    @property
    def label(self) -> str:
        return self.kind.value.upper()

    def check_classes(self, num_classes: int) -> None:
        """V2 is only meaningful when theta exceeds the smallest possible maximum output, 1/c."""
        if self.kind == TaxonomyKind.v2 and self.theta <= 1.0 / num_classes:
            raise ValueError(f"theta for V2 must exceed 1/c = {1.0 / num_classes:.4f}")


class PredictionResult(BaseModel):
    """Output of one Venn prediction."""
    predicted_label: int
    mean_probs: List[float]
    lower: List[float]
    upper: List[float]
    error_interval: tuple[float, float]
    category_sizes: List[int] = Field(default_factory=list)
    category_keys: List[str] = Field(default_factory=list)

    @computed_field
    @property
    def diameter(self) -> float:
        return max(u - l for l, u in zip(self.lower, self.upper))

    def interval(self, label: int) -> tuple[float, float]:
        return self.lower[label], self.upper[label]

    def to_report(self, class_names: Sequence[str]) -> dict:
        """JSON-ready view keyed by class name; `categories` maps each candidate label to the new example's category."""
        return {
            "predicted": class_names[self.predicted_label],
            "mean_probs": dict(zip(class_names, self.mean_probs)),
            "intervals": {name: [l, u] for name, l, u in zip(class_names, self.lower, self.upper)},
            "error_interval": list(self.error_interval),
            "categories": dict(zip(class_names, self.category_keys)),
            "category_sizes": dict(zip(class_names, self.category_sizes)),
        }


class BatchMetrics(BaseModel):
    method: str
    examples: int
    accuracy: float
    cross_entropy: float
    brier: float
    reliability: float
    mean_diameter: Optional[float] = None
    rel_improvement: Optional[float] = None  # relative to the baseline NN


class OnlineSummary(BaseModel):
    method: str
    steps: int
    errors: int
    lep: Optional[float] = None
    uep: Optional[float] = None
    ep: Optional[float] = None
    contained: Optional[bool] = None
    containment_fraction: Optional[float] = None
    within_tolerance: Optional[bool] = None
    p_value: Optional[float] = None
    p_value_degenerate: Optional[bool] = None
    subsampled: bool = False
    reduced_restarts: bool = False


class RunConfig(BaseModel):
    """Everything a run depends on. Written as config.json beside the outputs."""
    command: Literal["online", "batch"]
    dataset: str
    preset: Optional[str] = None
    data_schema: DatasetSchema = Field(default_factory=DatasetSchema, alias="schema")
    method: Literal["vp", "nn"] = "vp"
    taxonomies: List[TaxonomyRule] = Field(default_factory=list)
    hidden_units: int = Field(..., ge=1)
    seed: int = Field(0, ge=0)
    initial_size: int = Field(50, ge=1)
    repeats: int = Field(10, ge=1)
    test_fraction: float = Field(0.10, gt=0, lt=1)
    restarts: int = Field(3, ge=1)
    max_epochs: int = Field(200, ge=0)
    patience: int = Field(20, ge=0)
    subsample: Optional[int] = Field(None, ge=1)
    bins: int = Field(100, ge=1)
    predictions: bool = False  # on-line Venn runs: also write predictions.jsonl
    out_dir: str = "runs"

    model_config = ConfigDict(populate_by_name=True)

    @model_validator(mode="after")
    def check_taxonomies(self):
        if self.method == "vp" and not self.taxonomies:
            raise ValueError("at least one taxonomy is required for Venn runs")
        if len({r.kind for r in self.taxonomies}) != len(self.taxonomies):
            raise ValueError("each taxonomy may be requested once")
        return self

    def mlp_config(self) -> MLPConfig:
        return MLPConfig(
            hidden_units=self.hidden_units,
            num_restarts=self.restarts,
            max_epochs=self.max_epochs,
            patience=self.patience,
            init_seed=self.seed,
        )

    def split_plan(self) -> SplitPlan:
        return SplitPlan(seed=self.seed, test_fraction=self.test_fraction, num_repeats=self.repeats)
