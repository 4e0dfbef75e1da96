"""Small report types shared by the coefficient and noise validators.

Validators never throw on a failed condition: the conditions they probe
are asymptotic statements, and at a finite truncation only evidence is
available, so each check records what was measured and a verdict.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class CheckItem:
    name: str
    passed: bool
    value: float
    threshold: float | None = None
    note: str = ""

    def line(self) -> str:
        status = "pass" if self.passed else "FAIL"
        thr = "" if self.threshold is None else f" (threshold {self.threshold:g})"
        note = f"  [{self.note}]" if self.note else ""
        return f"{status:4s}  {self.name}: {self.value:.6g}{thr}{note}"


@dataclass
class CheckReport:
    title: str
    items: list[CheckItem] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(item.passed for item in self.items)

    def add(self, *args, **kwargs) -> None:
        self.items.append(CheckItem(*args, **kwargs))

    def lines(self) -> list[str]:
        head = f"{self.title}: {'pass' if self.passed else 'FAIL'}"
        return [head] + ["  " + item.line() for item in self.items]

    def as_rows(self) -> list[dict]:
        return [
            {
                "check": self.title,
                "item": it.name,
                "passed": it.passed,
                "value": it.value,
                "threshold": it.threshold,
                "note": it.note,
            }
            for it in self.items
        ]
