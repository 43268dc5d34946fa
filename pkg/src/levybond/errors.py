"""Exception hierarchy shared across the package.

Config problems and numerical failures are kept apart so the CLI can map
them to distinct exit codes (2 and 3 respectively).
"""
from __future__ import annotations


class LevyBondError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(LevyBondError):
    """Invalid scenario configuration; carries the offending field path."""

    def __init__(self, field: str, message: str):
        self.field = field
        self.detail = message
        super().__init__(f"{field}: {message}")


class NumericalError(LevyBondError):
    """A computation failed or left its validity envelope."""


class InfiniteActivityError(NumericalError):
    """Mass or quadrature requested over an unbounded density region."""


class NonIntegrableError(NumericalError):
    """Integrand looks divergent against the jump measure."""


class DependentRowsError(NumericalError):
    """Hedge rows never reach full rank over the tradeable maturities."""


class SingularSystemError(NumericalError):
    """Hedge system condition number above threshold at some step."""

    def __init__(self, step: int, cond: float, threshold: float):
        self.step = step
        self.cond = cond
        self.threshold = threshold
        super().__init__(
            f"near-singular hedge system at step {step}: cond={cond:.3e} exceeds {threshold:.1e}"
        )


class DegenerateTestSetError(NumericalError):
    """Moment test set with both numerator and denominator at underflow level."""


class EmptyAnnulusError(NumericalError):
    """A probed annulus carries no jump-measure mass."""

    def __init__(self, index: int, detail: str = ""):
        self.index = index
        msg = f"annulus {index} has zero mass (sampling failure)"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class ScenarioKindMismatchError(NumericalError):
    """Scenario coefficients do not satisfy the declared probe kind."""


class NoThinAtomsError(NumericalError):
    """Square-root mark construction found too few thin atoms in the truncation."""
