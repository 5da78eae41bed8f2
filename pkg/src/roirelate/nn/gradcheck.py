"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autodiff import Parameter, Tensor

# Below this magnitude the relative error is meaningless; compare absolutely.
_TINY = 1e-8


@dataclass
class GradCheckEntry:
    name: str
    max_error: float
    passed: bool
    n_entries: int
    no_grad_by_design: bool = False


@dataclass
class GradCheckReport:
    tolerance: float
    step: float
    entries: list[GradCheckEntry] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(e.passed for e in self.entries)

    def worst(self) -> GradCheckEntry | None:
        checked = [e for e in self.entries if not e.no_grad_by_design]
        return max(checked, key=lambda e: e.max_error) if checked else None

    def summary_lines(self) -> list[str]:
        lines = []
        for e in self.entries:
            if e.no_grad_by_design:
                lines.append(f"{e.name:40s} no-grad by design")
            else:
                status = "ok" if e.passed else "FAIL"
                lines.append(f"{e.name:40s} {status}  max_err={e.max_error:.3e}")
        return lines


def finite_diff_check(
    loss_fn: Callable[[], Tensor],
    params: dict[str, Parameter],
    h: float = 1e-5,
    tolerance: float = 1e-4,
    expect_zero: set[str] | None = None,
) -> GradCheckReport:
    """Compare analytic gradients of loss_fn against central differences.

    loss_fn must rebuild the graph on every call and be deterministic
    (run dropout in eval mode). Parameters named in expect_zero are
    checked to receive exactly zero gradient instead (stop-gradient
    groups). Relative error is reported per parameter, falling back to
    absolute error where both gradients are below 1e-8.
    """
    expect_zero = expect_zero or set()
    for p in params.values():
        p.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {name: p.grad.copy() for name, p in params.items()}

    report = GradCheckReport(tolerance=tolerance, step=h)
    for name, p in params.items():
        ana = analytic[name]
        if name in expect_zero:
            exact_zero = not np.any(ana)
            report.entries.append(
                GradCheckEntry(
                    name=name,
                    max_error=float(np.max(np.abs(ana))) if ana.size else 0.0,
                    passed=exact_zero,
                    n_entries=ana.size,
                    no_grad_by_design=True,
                )
            )
            continue
        flat = p.data.ravel()
        ana_flat = ana.ravel()
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = loss_fn().item()
            flat[i] = orig - h
            f_minus = loss_fn().item()
            flat[i] = orig
            num = (f_plus - f_minus) / (2.0 * h)
            scale = max(abs(num), abs(ana_flat[i]))
            err = abs(num - ana_flat[i])
            if scale >= _TINY:
                err = err / scale
            worst = max(worst, err)
        report.entries.append(
            GradCheckEntry(
                name=name,
                max_error=worst,
                passed=worst < tolerance,
                n_entries=flat.size,
            )
        )
    return report
