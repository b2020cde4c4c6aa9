"""Uniform pass/fail records for the invariant and boundary checks."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    hard: bool = True
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        kind = "hard" if self.hard else "diagnostic"
        extra = "".join(f" {k}={_fmt(v)}" for k, v in self.detail.items())
        return (
            f"check={self.name} status={status} kind={kind} "
            f"worst={_fmt(self.worst)} tol={_fmt(self.tolerance)}{extra}"
        )


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)
