"""Closed-loop simulation options."""
from pydantic import BaseModel, Field, field_validator


class SimulationOptions(BaseModel):
    """Timing, disturbance and truth-model perturbation of one closed-loop run."""
    duration: float = Field(10.0, gt=0, description="Simulated time [s]")
    T_s: float = Field(0.02, gt=0, description="Outer-loop (MPC) period [s]")
    dt_sim: float = Field(0.0005, gt=0, description="Truth-model integration step [s]")
    disturbance: bool = Field(False, description="Inject white acceleration noise each outer tick")
    disturbance_variance: float = Field(0.1, ge=0, description="Per-axis variance of the injected noise")
    aero: bool = Field(True, description="Body-frame rotor drag in the truth model")
    mass_factor: float = Field(1.0, gt=0, description="Truth mass relative to the nominal parameters")
    inertia_factor: float = Field(1.0, gt=0, description="Truth inertia relative to the nominal parameters")
    seed: int = Field(0, description="Seed of the disturbance sequence")

    @field_validator("dt_sim")
    @classmethod
    def validate_fast_step(cls, v: float, info) -> float:
        T_s = info.data.get("T_s")
        if T_s is not None:
            ratio = T_s / v
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise ValueError("T_s must be an integer multiple of dt_sim")
        return v

    @property
    def fast_steps_per_tick(self) -> int:
        return int(round(self.T_s / self.dt_sim))

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration / self.T_s))
