"""Small report records shared by the solvers."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field


@dataclass(frozen=True)
class BoundCheck:
    """One inequality ``lower <= value <= upper`` checked with a slack."""

    name: str
    value: float
    lower: float = float("-inf")
    upper: float = float("inf")
    slack: float = 0.0

    @property
    def passed(self) -> bool:
        return self.lower - self.slack <= self.value <= self.upper + self.slack

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


@dataclass(frozen=True)
class BoundReport:
    checks: tuple = ()

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> BoundCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


@dataclass(frozen=True)
class ResidualReport:
    """HJ residual (zero by construction for the variational solvers) and transport residual."""

    hj: float
    transport: float
    threshold: float
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.transport <= self.threshold

    def to_dict(self) -> dict:
        return {"hj": self.hj, "transport": self.transport, "threshold": self.threshold,
                "passed": self.passed, **self.extra}
