class UnivBoundError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(UnivBoundError, ValueError):
    """Invalid parameter or configuration value; ``key`` names the offending field."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class UnsupportedModelError(UnivBoundError, ValueError):
    pass


class IntegrationError(UnivBoundError, RuntimeError):
    pass


class StiffnessError(IntegrationError):
    """Step size fell below ``dt_min``."""

    def __init__(self, t, u, v, dt):
        self.t, self.u, self.v, self.dt = t, u, v, dt
        super().__init__(
            f"step size {dt:.3e} below dt_min at t={t:.6g}, "
            f"|u|={float(abs(u).max()):.3e}, |v|={float(abs(v).max()):.3e}")


class DivergenceError(IntegrationError):
    def __init__(self, t, message="non-finite state"):
        self.t = t
        super().__init__(f"{message} at t={t:.6g}")


class RegimeError(UnivBoundError, ValueError):
    """Exponents outside 0 < alpha < beta, where the bound/decay theorems do not apply."""


class CertificateError(UnivBoundError, ValueError):
    pass
