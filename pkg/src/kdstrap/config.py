"""Central numerical tolerances shared by every module and the acceptance suite."""

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    root_tol: float = 1e-14       # relative, bisection of polynomial roots
    identity_tol: float = 1e-12   # relative, algebraic identities
    grid: int = 1024              # default sampling grid size
    char_tol: float = 1e-10       # characteristic-set membership, times |xi|^2
    pole_margin: float = 1e-3     # theta_min
    verify_grid: int = 4096       # extension-profile verification grid

    def with_overrides(self, **kw) -> "Tolerances":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


DEFAULT = Tolerances()
