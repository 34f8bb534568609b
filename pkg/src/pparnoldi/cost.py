"""Operation accounting for eigensolver runs.

Every counted operation lands in a :class:`CostRecord`.  The composite
metric used throughout is ``cost = nnzr * mvps + vops``.
"""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

CSV_COLUMNS = ("degree", "cycles", "mvps", "vops", "dots", "cost", "time")


class CostError(ValueError):
    pass


@dataclass
class CostRecord:
    """Counters for one solver run.

    ``mvps`` counts applications of the base matrix, ``dots`` inner products
    (norms included) and ``vops`` every length-n vector operation, dots
    included, so ``vops >= dots`` always holds.
    """

    mvps: int = 0
    dots: int = 0
    vops: int = 0
    nnzr: float | None = None
    time: float = 0.0
    _t0: float | None = field(default=None, repr=False, compare=False)

    def add_dots(self, count: int = 1) -> None:
        self.dots += count
        self.vops += count

    def add_vops(self, count: int = 1) -> None:
        self.vops += count

    def add_mvps(self, count: int = 1) -> None:
        self.mvps += count

    def copy(self) -> "CostRecord":
        return dataclasses.replace(self, _t0=None)

    def since(self, start: "CostRecord") -> "CostRecord":
        """Counters accumulated after the snapshot ``start`` was taken."""
        return CostRecord(
            mvps=self.mvps - start.mvps,
            dots=self.dots - start.dots,
            vops=self.vops - start.vops,
            nnzr=self.nnzr,
            time=self.time - start.time,
        )

    def start_clock(self) -> None:
        self._t0 = time.perf_counter()

    def stop_clock(self) -> None:
        if self._t0 is not None:
            self.time += time.perf_counter() - self._t0
            self._t0 = None

    @property
    def cost(self) -> float:
        return cost_estimate(self)

    def as_row(self, degree, cycles) -> dict:
        return {
            "degree": degree,
            "cycles": cycles,
            "mvps": self.mvps,
            "vops": self.vops,
            "dots": self.dots,
            "cost": cost_estimate(self),
            "time": round(self.time, 6),
        }


def cost_estimate(rec: CostRecord) -> float:
    """Return ``nnzr * mvps + vops``."""
    if rec.nnzr is None:
        raise CostError("nnzr is not set on this cost record")
    return float(rec.nnzr) * rec.mvps + rec.vops


def merge(a: CostRecord, b: CostRecord) -> CostRecord:
    """Componentwise sum of two records sharing the same nnzr context."""
    if a.nnzr is not None and b.nnzr is not None and a.nnzr != b.nnzr:
        raise CostError(f"mismatched nnzr: {a.nnzr} vs {b.nnzr}")
    return CostRecord(
        mvps=a.mvps + b.mvps,
        dots=a.dots + b.dots,
        vops=a.vops + b.vops,
        nnzr=a.nnzr if a.nnzr is not None else b.nnzr,
        time=a.time + b.time,
    )
