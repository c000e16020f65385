"""Hyperparameter and dataset containers for independent scalar GPs."""

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from ..errors import ArgumentError


def _as_finite(name: str, value, ndim: int) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim != ndim:
        raise ArgumentError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Hyperparams:
    """SE kernel hyperparameters of one output.

    ``lengthscales`` holds the diagonal of Lambda directly, i.e. squared
    input units: the kernel exponent is ``-0.5 * sum(d**2 / lengthscales)``.
    """

    signal_variance: float
    noise_variance: float
    lengthscales: np.ndarray = field(repr=False)

    def __post_init__(self):
        ls = _as_finite("lengthscales", self.lengthscales, 1)
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))
        values = np.concatenate([[self.signal_variance, self.noise_variance], ls])
        if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
            raise ArgumentError(f"hyperparameters must be finite and strictly positive, got {values}")

    @property
    def n_inputs(self) -> int:
        return self.lengthscales.shape[0]

    def to_log_vector(self) -> np.ndarray:
        """Pack as ``log(col(sigma^2, sigma_v^2, lambda_1..lambda_nw))``."""
        return np.log(np.concatenate([[self.signal_variance, self.noise_variance], self.lengthscales]))

    @classmethod
    def from_log_vector(cls, vector: np.ndarray) -> "Hyperparams":
        values = np.exp(np.asarray(vector, dtype=float))
        return cls(values[0], values[1], values[2:])

    def with_noise(self, noise_variance: float) -> "Hyperparams":
        return Hyperparams(self.signal_variance, noise_variance, self.lengthscales)


@dataclass(frozen=True)
class Dataset:
    """Training pairs (W, Z): ``inputs`` is N x n_w, ``outputs`` is N x n_z."""

    inputs: np.ndarray = field(repr=False)
    outputs: np.ndarray = field(repr=False)

    def __post_init__(self):
        inputs = _as_finite("inputs", self.inputs, 2)
        outputs = np.array(self.outputs, dtype=float)
        if outputs.ndim == 1:
            outputs = outputs[:, None]
        outputs = _as_finite("outputs", outputs, 2)
        if inputs.shape[0] < 1:
            raise ArgumentError("dataset needs at least one row")
        if inputs.shape[0] != outputs.shape[0]:
            raise ArgumentError(
                f"inputs and outputs row counts differ: {inputs.shape[0]} != {outputs.shape[0]}"
            )
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.outputs.shape[1]

    def output(self, index: int) -> np.ndarray:
        if not 0 <= index < self.n_outputs:
            raise ArgumentError(f"output index {index} out of range for {self.n_outputs} outputs")
        return self.outputs[:, index]

    def subset(self, rows: Sequence[int]) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        return Dataset(self.inputs[rows], self.outputs[rows])


def default_hyperparams(data: Dataset) -> List[Hyperparams]:
    """Data-driven starting point: signal variance from Z, lengthscales from W spread."""
    spread = np.var(data.inputs, axis=0)
    spread = np.where(spread > 1e-12, spread, 1.0)
    result = []
    for i in range(data.n_outputs):
        signal = float(np.var(data.output(i)))
        signal = signal if signal > 1e-12 else 1.0
        result.append(Hyperparams(signal, 0.1 * signal, spread.copy()))
    return result


def check_hyperparams(hyperparams: Sequence[Hyperparams], n_inputs: int, n_outputs: int) -> List[Hyperparams]:
    hyperparams = list(hyperparams)
    if len(hyperparams) != n_outputs:
        raise ArgumentError(f"expected {n_outputs} hyperparameter sets, got {len(hyperparams)}")
    for h in hyperparams:
        if h.n_inputs != n_inputs:
            raise ArgumentError(f"lengthscales length {h.n_inputs} does not match input dimension {n_inputs}")
    return hyperparams
