"""Hyperparameters of the fusion block and its baselines."""

from dataclasses import asdict, dataclass, fields

from .errors import ParameterError
from .ssm import SsmBackend

DEFAULT_GRIDS = 5
DEFAULT_TOP_K = 4


@dataclass(frozen=True)
class CmmConfig:
    """Shape and architecture settings.

    ``D_v``, ``D_shared`` and ``ffn_hidden`` default to ``D_t``, ``D_t`` and
    ``2 * D_t`` when left as ``None``.  ``T`` is carried for bookkeeping
    (fixture generation, benchmarks); weights never depend on it.
    """

    T: int = 16
    G: int = DEFAULT_GRIDS
    D_t: int = 32
    D_v: int = None
    D_shared: int = None
    H: int = 4
    k: int = DEFAULT_TOP_K
    backend: SsmBackend = SsmBackend.DIAGONAL_LTI
    ffn_hidden: int = None
    state_size: int = 16
    pool_output: bool = True
    ssm_mode: str = "recurrent"
    ln_eps: float = 1e-5

    def __post_init__(self):
        if self.D_v is None:
            object.__setattr__(self, "D_v", self.D_t)
        if self.D_shared is None:
            object.__setattr__(self, "D_shared", self.D_t)
        if self.ffn_hidden is None:
            object.__setattr__(self, "ffn_hidden", 2 * self.D_t)
        object.__setattr__(self, "backend", SsmBackend.parse(self.backend))
        self.validate()

    @property
    def D_H(self):
        return self.D_shared // self.H

    def validate(self):
        for name in ("T", "G", "D_t", "D_v", "D_shared", "H", "state_size"):
            if getattr(self, name) < 1:
                raise ParameterError(f"CmmConfig.{name} must be >= 1, got {getattr(self, name)}")
        if self.D_shared % self.H:
            raise ParameterError(f"CmmConfig: D_shared={self.D_shared} not divisible by H={self.H}")
        if not 1 <= self.k <= self.G:
            raise ParameterError(f"CmmConfig: k={self.k} outside [1, G={self.G}]")
        if self.ffn_hidden < self.D_t:
            raise ParameterError(f"CmmConfig: ffn_hidden={self.ffn_hidden} < D_t={self.D_t}")
        if self.ssm_mode not in ("recurrent", "conv"):
            raise ParameterError(f"CmmConfig: unknown ssm_mode {self.ssm_mode!r}")
        if self.ln_eps <= 0:
            raise ParameterError("CmmConfig: ln_eps must be positive")

    def to_dict(self):
        d = asdict(self)
        d["backend"] = self.backend.value
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return type(self).from_dict(d)
