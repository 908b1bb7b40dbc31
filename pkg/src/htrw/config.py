"""Run configuration shared by the command line and the acceptance suite."""

from dataclasses import asdict, dataclass, fields

from .errors import ConfigError
from .range_conditions import THETA_FAIL, THETA_PASS


@dataclass(frozen=True)
class RunConfig:
    """Grid sizes, expansion orders and thresholds of one run.

    Defaults reproduce the reference experiments.  ``n_vol`` and ``q_recon``
    set the reconstruction grid and the backprojection directions; ``None``
    picks the per-dimension defaults of :mod:`htrw.recon`.
    """

    dimension: int = 3
    n_t: int = 2048
    t_ext: float = 4.0
    Q: int = 32
    lmax: int = 12
    n_max: int = 8
    deriv_max: int = 8
    n_p: int = 512
    theta_pass: float = THETA_PASS
    theta_fail: float = THETA_FAIL
    seed: int = 0
    n_vol: int = None
    q_recon: int = None

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ConfigError(f"dimension must be 2 or 3, got {self.dimension}")
        if self.n_t < 16 or self.t_ext < 2.0:
            raise ConfigError("need n_t >= 16 and t_ext >= 2")
        if self.Q < 4 or self.Q % 2:
            raise ConfigError(f"Q must be even and >= 4, got {self.Q}")
        if self.lmax < 0 or 2 * self.lmax + 2 > self.Q:
            raise ConfigError(f"lmax={self.lmax} needs Q >= {2 * self.lmax + 2}")
        if self.n_max < 0 or self.deriv_max < 0:
            raise ConfigError("n_max and deriv_max must be nonnegative")
        if self.n_p < 4 or self.n_p % 2:
            raise ConfigError(f"n_p must be even and >= 4, got {self.n_p}")
        if not 0 < self.theta_pass < self.theta_fail:
            raise ConfigError("need 0 < theta_pass < theta_fail")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def replace(self, **kw):
        doc = self.to_dict()
        doc.update({k: v for k, v in kw.items() if v is not None})
        return RunConfig.from_dict(doc)
