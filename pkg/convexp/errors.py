from __future__ import annotations

from typing import Any, Dict


class ConvexpError(Exception):
    """Base class of every error raised by convexp.

    Each subclass carries a stable ``code`` used in the CLI's error record and the process ``exit_status``.
    """

    code: str = "error"
    exit_status: int = 1

    def record(self) -> Dict[str, Any]:
        return {"error": self.code, "type": type(self).__name__, "message": str(self)}


class ChannelSpecError(ConvexpError, ValueError):
    code = "channel_spec"
    exit_status = 2


class DimensionError(ConvexpError, ValueError):
    code = "dimension"


class InfeasibleError(ConvexpError, ValueError):
    code = "infeasible"


class BudgetExceededError(ConvexpError, ValueError):
    code = "budget"


class PreconditionError(ConvexpError, ValueError):
    code = "precondition"


class ConvergenceError(ConvexpError, RuntimeError):
    code = "convergence"


class CertificateError(ConvexpError, RuntimeError):
    code = "certificate"
