"""Extended nonnegative reals and log-space helpers.

Losses live in [0, inf]; ``inf`` is absorbing under addition and ``-log 0 = inf``.
"""
import math

INF = math.inf


def neg_log(p: float) -> float:
    if p < 0:
        raise ValueError(f"negative probability {p}")
    if p == 0:
        return INF
    return -math.log(p)


def ext_sum(terms) -> float:
    total = 0.0
    for t in terms:
        if t == INF:
            return INF
        total += t
    return total


def log_sum_exp(logs) -> float:
    """Stable ``log(sum(exp(l) for l in logs))``; empty input gives ``-inf``."""
    logs = [l for l in logs if l != -INF]
    if not logs:
        return -INF
    top = max(logs)
    return top + math.log(math.fsum(math.exp(l - top) for l in logs))


def objective_close(a: float, b: float, rel: float = 1e-9) -> bool:
    # both infinite counts as a tie
    if a == b:
        return True
    if math.isinf(a) or math.isinf(b):
        return False
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))
