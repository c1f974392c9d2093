"""
Epoch schedules for the variance-reduced algorithms

Every builder returns the smallest integer schedule meeting its defining
inequalities and checks them again on the result before handing it out.
"""
import math

from . import EpochEntry, EpochSchedule, ScheduleError, ScheduleScale
import log95

logger = log95.log95("SCHEDULE")

MIN_BUDGET_CONSTANT = 16.0
EXAMPLE1_PHI = 0.95
EXAMPLE1_EPOCHS = 15
EXAMPLE1_RECENTER = 0.738
EXAMPLE1_EPOCH_LEN = 5.0
_EPOCH_SLACK = 1e-9 # log ratios that land on an integer up to rounding count as that integer

def _check_common(phi: float, gamma: float, D: int) -> None:
    if not (0.0 < phi < 1.0): raise ScheduleError(f"phi must lie in (0,1), got {phi}")
    if not (0.0 < gamma < 1.0): raise ScheduleError(f"gamma must lie in (0,1), got {gamma}")
    if int(D) != D or D < 1: raise ScheduleError(f"D must be a positive integer, got {D}")

def _count(value: float, what: str) -> int:
    if not math.isfinite(value): raise ScheduleError(f"{what} overflows ({value})")
    return max(1, math.ceil(value))

def _epochs(ratio: float, phi: float) -> int:
    """Smallest integer M with φ^-M >= ratio, zero when ratio <= 1"""
    if ratio <= 1.0: return 0
    return max(0, math.ceil(math.log(ratio) / math.log(1.0 / phi) - _EPOCH_SLACK))

def _step(epoch_len: int, scale: ScheduleScale) -> float:
    return min(1.0, scale.step / math.sqrt(epoch_len))

def _kappa(phi: float, gamma: float, m: int) -> float:
    return phi ** 2 * (2.0 - phi ** m) ** 2 * (1.0 - gamma) ** 2

def expected_recenter(phi: float, gamma: float, D: int, m: int) -> float:
    return 32.0 * math.log(2 * D) / (phi ** (2 * m + 2) * (1.0 - gamma) ** 2)

def expected_epoch_len(phi: float, gamma: float, D: int, m: int) -> float:
    return 169.0 * math.log(2 * D) / _kappa(phi, gamma, m)

def log_inequality_threshold(alpha: float, beta: float) -> float:
    """A value N with N >= α log(βN): max{α, 2α log(αβ)}, or α when αβ <= 1"""
    if not (alpha > 0 and beta > 0): raise ScheduleError(f"alpha and beta must be positive, got ({alpha}, {beta})")
    if alpha * beta <= 1.0: return alpha
    return max(alpha, 2.0 * alpha * math.log(alpha * beta))

def _verify(schedule: EpochSchedule, recenter_floor, epoch_floor, scale: ScheduleScale) -> EpochSchedule:
    for m, e in enumerate(schedule.entries):
        if e.recenter < scale.recenter * recenter_floor(m): raise ScheduleError(f"{schedule.label} epoch {m}: N_T={e.recenter} below its bound")
        if e.epoch_len < scale.epoch_len * epoch_floor(m): raise ScheduleError(f"{schedule.label} epoch {m}: N_e={e.epoch_len} below its bound")
        if abs(e.step * math.sqrt(e.epoch_len) - scale.step) > max(e.step ** 2, 1e-12) and e.step < 1.0:
            raise ScheduleError(f"{schedule.label} epoch {m}: step {e.step} is not {scale.step}/sqrt(N_e)")
    logger.debug(f"{schedule.label}: M={schedule.num_epochs}, total draws {schedule.total_samples}")
    return schedule

def schedule_expected(phi: float, gamma: float, D: int, M: int, scale: ScheduleScale = ScheduleScale()) -> EpochSchedule:
    _check_common(phi, gamma, D)
    if M < 1: raise ScheduleError(f"M must be at least 1, got {M}")
    entries = []
    for m in range(M):
        epoch_len = _count(scale.epoch_len * expected_epoch_len(phi, gamma, D, m), "N_e")
        entries.append(EpochEntry(_step(epoch_len, scale), epoch_len, _count(scale.recenter * expected_recenter(phi, gamma, D, m), "N_T")))
    schedule = EpochSchedule(phi, tuple(entries), "expected")
    return _verify(schedule, lambda m: expected_recenter(phi, gamma, D, m), lambda m: expected_epoch_len(phi, gamma, D, m), scale)

def high_prob_epoch_floor(phi: float, gamma: float, D: int, M: int, delta: float, m: int) -> float:
    kappa = _kappa(phi, gamma, m)
    return 338.0 * math.log(1690.0 * M * D / (kappa * delta)) / kappa

def schedule_high_prob(phi: float, gamma: float, D: int, M: int, delta: float, scale: ScheduleScale = ScheduleScale()) -> EpochSchedule:
    """
    N_T(m) >= 32 log(10MD/δ) / (φ^(2m+2)(1-γ)²), and N_e(m) from the sufficient condition
    N >= max{α, 2α log(αβ)} with α = 169/κ_m, β = 10MD/δ, κ_m = φ²(2-φ^m)²(1-γ)².
    """
    _check_common(phi, gamma, D)
    if M < 1: raise ScheduleError(f"M must be at least 1, got {M}")
    if not (0.0 < delta < 1.0): raise ScheduleError(f"delta must lie in (0,1), got {delta}")
    beta = 10.0 * M * D / delta
    recenter_floor = lambda m: 32.0 * math.log(beta) / (phi ** (2 * m + 2) * (1.0 - gamma) ** 2)
    epoch_floor = lambda m: log_inequality_threshold(169.0 / _kappa(phi, gamma, m), beta)
    entries = []
    for m in range(M):
        epoch_len = _count(scale.epoch_len * epoch_floor(m), "N_e")
        entries.append(EpochEntry(_step(epoch_len, scale), epoch_len, _count(scale.recenter * recenter_floor(m), "N_T")))
    schedule = EpochSchedule(phi, tuple(entries), "high_prob")
    _verify(schedule, recenter_floor, lambda m: high_prob_epoch_floor(phi, gamma, D, M, delta, m), scale)
    if scale.unit:
        for m, e in enumerate(schedule.entries):
            alpha = 169.0 / _kappa(phi, gamma, m)
            if e.epoch_len < alpha * math.log(beta * e.epoch_len): raise ScheduleError(f"high_prob epoch {m}: N_e={e.epoch_len} fails N >= α log(βN)")
    return schedule

def _empty(phi: float, label: str) -> EpochSchedule: return EpochSchedule(phi, (), label)

def schedule_minimax(phi: float, gamma: float, D: int, delta: float, epsilon: float, r_max: float, scale: ScheduleScale = ScheduleScale()) -> tuple[EpochSchedule, EpochSchedule]:
    """
    Two high-probability phases: the first brings the error to r_max/sqrt(1-γ),
    the second from there to ε. c̄ is fixed at 4√2 log 2 / r_max + 1.
    """
    _check_common(phi, gamma, D)
    if not epsilon > 0: raise ScheduleError(f"epsilon must be positive, got {epsilon}")
    if not r_max > 0: raise ScheduleError(f"r_max must be positive, got {r_max}")
    if epsilon > 1.0: logger.warning(f"epsilon={epsilon} above 1, the accuracy target is looser than the usual range")
    c_bar = 4.0 * math.sqrt(2.0) * math.log(2.0) / r_max + 1.0
    m_init = _epochs(1.0 / math.sqrt(1.0 - gamma), phi)
    m_late = _epochs(c_bar * r_max / (math.sqrt(1.0 - gamma) * epsilon), phi)
    build = lambda M, label: _relabel(schedule_high_prob(phi, gamma, D, M, delta, scale), label) if M > 0 else _empty(phi, label)
    init, late = build(m_init, "minimax_init"), build(m_late, "minimax_late")
    logger.info(f"minimax schedule: M_init={m_init}, M_late={m_late}, total draws {init.total_samples + late.total_samples}")
    return init, late

def _relabel(schedule: EpochSchedule, label: str) -> EpochSchedule:
    return EpochSchedule(schedule.rate, schedule.entries, label)

def concat(first: EpochSchedule, second: EpochSchedule, label: str | None = None) -> EpochSchedule:
    """Runs first then second as one schedule; used to chain the minimax phases"""
    return EpochSchedule(first.rate, first.entries + second.entries, label or f"{first.label}+{second.label}")

def minimum_budget(gamma: float, D: int, c: float = MIN_BUDGET_CONSTANT) -> float:
    return c * gamma * math.log(D) / (1.0 - gamma) ** 2

def budgeted_epochs(N: int, phi: float, gamma: float, D: int) -> int:
    """floor(log_{1/φ}(sqrt(1-φ²)(1-γ)sqrt(N) / (8 sqrt(γ log 2D)))), at least 1"""
    ratio = math.sqrt(1.0 - phi ** 2) * (1.0 - gamma) * math.sqrt(N) / (8.0 * math.sqrt(gamma * math.log(2 * D)))
    if ratio <= 1.0: return 1
    return max(1, math.floor(math.log(ratio) / math.log(1.0 / phi) + _EPOCH_SLACK))

def schedule_budgeted(N: int, phi: float, gamma: float, D: int, c: float = MIN_BUDGET_CONSTANT, scale: ScheduleScale = ScheduleScale()) -> EpochSchedule:
    """Fixed total budget N: geometric recentering sizes, constant epoch length N_e(0)"""
    _check_common(phi, gamma, D)
    if N < (least := minimum_budget(gamma, D, c)): raise ScheduleError(f"budget N={N} below the minimum {least:.1f} (c={c})")
    M = budgeted_epochs(N, phi, gamma, D)
    log2d = math.log(2 * D)
    epoch_len = _count(scale.epoch_len * expected_epoch_len(phi, gamma, D, 0), "N_e")
    entries = tuple(
        EpochEntry(_step(epoch_len, scale), epoch_len, _count(scale.recenter * 32.0 * gamma * log2d / (phi ** (2 * m + 2) * (1.0 - gamma) ** 2), "N_T"))
        for m in range(M)
    )
    schedule = EpochSchedule(phi, entries, "budgeted")
    if schedule.total_samples > N + 2 * M: raise ScheduleError(f"budgeted schedule needs {schedule.total_samples} draws, more than N={N} (+{2 * M} rounding)")
    logger.debug(f"budgeted: N={N}, M={M}, total draws {schedule.total_samples}")
    return schedule

def schedule_example1(gamma: float, phi: float = EXAMPLE1_PHI, M: int = EXAMPLE1_EPOCHS, c_t: float = EXAMPLE1_RECENTER, c_e: float = EXAMPLE1_EPOCH_LEN) -> EpochSchedule:
    """Hand-tuned constants for the two-state experiment: N_T(m) = c_t/(φ^2m (1-γ)²), N_e = c_e/(1-γ)², λ = 1/sqrt(N_e)"""
    _check_common(phi, gamma, 1)
    if M < 1: raise ScheduleError(f"M must be at least 1, got {M}")
    if not (c_t > 0 and c_e > 0): raise ScheduleError(f"constants must be positive, got c_t={c_t}, c_e={c_e}")
    epoch_len = _count(c_e / (1.0 - gamma) ** 2, "N_e")
    entries = tuple(EpochEntry(1.0 / math.sqrt(epoch_len), epoch_len, _count(c_t / (phi ** (2 * m) * (1.0 - gamma) ** 2), "N_T")) for m in range(M))
    return EpochSchedule(phi, entries, "example1")

def build_schedule(kind: str, *, phi: float, gamma: float, D: int, M: int = 0, delta: float = 0.1, epsilon: float = 0.1, r_max: float = 1.0, budget: int = 0, scale: ScheduleScale = ScheduleScale()) -> EpochSchedule:
    """Dispatch on the schedule name used by config files"""
    match kind:
        case "expected": return schedule_expected(phi, gamma, D, M, scale)
        case "high_prob": return schedule_high_prob(phi, gamma, D, M, delta, scale)
        case "minimax": return concat(*schedule_minimax(phi, gamma, D, delta, epsilon, r_max, scale), label="minimax")
        case "budgeted": return schedule_budgeted(budget, phi, gamma, D, scale=scale)
        case "example1": return schedule_example1(gamma, phi, M or EXAMPLE1_EPOCHS)
    raise ScheduleError(f"unknown schedule {kind!r}")
