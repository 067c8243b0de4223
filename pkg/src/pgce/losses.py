"""Binary-classification losses: margin surrogates phi(u) and direct losses l(y, yhat).

Surrogates are evaluated at the negated margin ``u = -y f(x)``, so
``phi(0) = 1`` marks the decision boundary. Natural logs throughout, except
the logit surrogate, which is base 2 so that it also equals 1 at the origin.
"""
import enum
import math

from .errors import ConfigError, DomainError


class SurrogateKind(enum.Enum):
    SQUARE = "square"
    PERPLEXITY = "perplexity"
    LOGIT = "logit"
    HINGE = "hinge"
    EXPONENTIAL = "exponential"


class DirectLossKind(enum.Enum):
    MSE = "mse"
    MAE = "mae"
    CROSS_ENTROPY = "cross_entropy"
    HUBER = "huber"


def surrogate(kind, u):
    """phi(u). Raises :class:`DomainError` for perplexity when ``u <= -1``."""
    kind = SurrogateKind(kind)
    u = float(u)
    if not math.isfinite(u):
        raise DomainError("surrogate argument must be finite")
    if kind is SurrogateKind.SQUARE:
        return (1.0 + u) ** 2 if u >= 0.0 else 1.0
    if kind is SurrogateKind.PERPLEXITY:
        if u <= -1.0:
            raise DomainError(f"perplexity loss undefined for u = {u} <= -1")
        # log(e * (1 + u))
        return 1.0 + math.log1p(u)
    if kind is SurrogateKind.LOGIT:
        # log2(1 + e^u), overflow-safe for large u
        if u > 0.0:
            return (u + math.log1p(math.exp(-u))) / math.log(2.0)
        return math.log1p(math.exp(u)) / math.log(2.0)
    if kind is SurrogateKind.HINGE:
        return max(0.0, 1.0 + u)
    if u > 709.0:
        return math.inf
    return math.exp(u)


def surrogate_domain(kind):
    """Open lower bound of the surrogate's domain (``-inf`` when unrestricted)."""
    return -1.0 if SurrogateKind(kind) is SurrogateKind.PERPLEXITY else -math.inf


def direct_loss(kind, y, yhat, delta=1.0):
    kind = DirectLossKind(kind)
    y = float(y)
    yhat = float(yhat)
    d = y - yhat
    if kind is DirectLossKind.MSE:
        return d * d
    if kind is DirectLossKind.MAE:
        return abs(d)
    if kind is DirectLossKind.HUBER:
        if not delta > 0.0:
            raise ConfigError(f"Huber delta must be positive, got {delta}")
        a = abs(d)
        if a <= delta:
            return 0.5 * d * d
        return delta * (a - 0.5 * delta)
    if y not in (-1.0, 1.0):
        raise DomainError(f"cross-entropy label must be -1 or 1, got {y}")
    if yhat > 1.0:
        raise DomainError(f"cross-entropy prediction must lie in (-1, 1], got {yhat}")
    coef = (1.0 + y) / 2.0
    if coef == 0.0:
        return 0.0  # 0 log 0 = 0
    if yhat <= -1.0:
        raise DomainError(f"cross-entropy prediction must lie in (-1, 1], got {yhat}")
    return -coef * math.log((1.0 + yhat) / 2.0)
