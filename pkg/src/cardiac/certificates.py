"""
Hand-derived STORMED certificates for the ICD components.

Each template fixes phi and eps from the parameter bounds alone and pairs the
certificate with the bounded sampling domain it was derived on. phi weighs
the global clock and the last-event stamps: flows advance t, and every
reset either copies t into a stamp after a minimum separation or, on the
tracking self-loop, advances the peak counter.

The VTC and Stability templates assume beats at least a minimum interval
apart: VTC weighs the refill level w, which every sample lowers by a fixed
step, and Stability clears sigma2 when a duration opens so its stamp term
dominates the accumulator.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from cardiac.discriminators import NO_BEATS, STAB_COORDS, build_duration, build_stability, build_tcfi, build_vtc
from cardiac.heart import build_heart
from cardiac.layout import Layout
from cardiac.loop import DEFAULT_DT
from cardiac.sense import COORDS, build_sense, decay_factor
from hybrid_core.automaton import HybridAutomaton, HybridState
from hybrid_core.simulate import initial_state, simulate
from setgeom.operators import point_distance
from setgeom.polytope import Polytope
from stormed.certificate import StormedCertificate, delimited_band
from stormed.checks import (CertReport, CheckResult, check_all, check_ends_delimited, check_flow_monotonic,
                            check_reset_monotonic, check_tisg, finish, witness)
from stormed.sampling import StateSampler

logger = logging.getLogger(__name__)

# Headroom on the reset inequalities and on eps.
MARGIN = 1.1


@dataclass
class CertificateTemplate:
    automaton: HybridAutomaton
    certificate: StormedCertificate
    domain: Polytope

    def check(self, samples=None, rng=None):
        """check_all over the template's domain, listening edges included."""
        return check_all(self.automaton, self.certificate, samples, rng=rng, domain=self.domain, listening=True)


def _domain(lay, bounds):
    lo = np.array([bounds[coord][0] for coord in lay.coords], dtype=float)
    hi = np.array([bounds[coord][1] for coord in lay.coords], dtype=float)
    return Polytope.from_box(lo, hi)


def _template(aut, lay, phi, eps, zeta, d_min, domain):
    phi = lay.row(phi)
    lo, hi = delimited_band(phi, domain)
    width = max(hi - lo, 1.0)
    cert = StormedCertificate(phi, eps, zeta, d_min, lo - 0.01 * width, hi + 0.01 * width)
    logger.info("Template certificate for %s: %r", aut.name, cert)
    return CertificateTemplate(aut, cert, domain)


def sense_certificate(p, horizon=10.0):
    """
    t and t_p up to ``horizon``; y, y_M within [0, V_M]; f below the most
    tracking steps a peak allows; Th and Th_0 within [minTh, V_M].

    The decay flow moves Th at most L = V_M eF_max / TC per unit of t, so
    eps = 1 / (1 + L) with phi_t = 1. A declared event, a blank and an
    unblank each advance t_p by at least MinDecP, MinTP and BlankingPeriod;
    phi_t_p is large enough that this outweighs the other coordinates the
    reset moves. Tracking steps advance f by one.
    """
    lay = Layout(COORDS)
    ef_max = decay_factor(p.V_M, p.min_th)
    f_max = 1.0 + p.V_M / p.quantum
    eps = 1.0 / (1.0 + p.V_M * ef_max / p.TC) / MARGIN
    phi_f = eps
    spread = max(
        (p.V_M + 2.0 * f_max - 1.0) / p.MinDecP,
        (2.0 * (p.V_M - p.min_th) + ef_max) / p.MinTP,
    )
    phi_p = MARGIN * eps * (1.0 + spread)
    d_min = min(p.quantum, p.MinTP - p.track_end, p.BlankingPeriod, p.MinDecP) / (2.0 * math.sqrt(2.0))
    domain = _domain(lay, {
        "t": (0.0, horizon), "t_p": (0.0, horizon), "y": (0.0, p.V_M), "y_M": (0.0, p.V_M), "f": (0.0, f_max),
        "Th": (p.min_th, p.V_M), "Th_0": (p.min_th, p.V_M), "eF": (0.0, ef_max),
    }).intersect(lay.elapsed_at_least(0.0))
    return _template(build_sense(p), lay, {"t": 1.0, "t_p": phi_p, "f": phi_f}, eps, phi_f / 2.0, d_min, domain)


def tcfi_certificate(p, min_interval, horizon=10.0):
    """
    Beats at least ``min_interval`` apart (the sensing refractory period in
    a closed loop), recorded intervals within [0, B].

    A beat moves t_p by a >= min_interval and the recorded intervals by at
    most a + 3B in total norm beyond it, so phi_t_p = eps (2 + 3B / a)
    covers both Slow/Fast changes and same-mode beats.
    """
    lay = Layout(build_tcfi(p).coords)
    eps = 0.5
    phi_p = MARGIN * eps * (2.0 + 3.0 * p.B / min_interval)
    box = {"t": (0.0, horizon), "t_p": (0.0, horizon), "z1": (0.0, p.B), "z2": (0.0, p.B), "z3": (0.0, p.B)}
    domain = _domain(lay, box).intersect(lay.elapsed_at_least(min_interval))
    return _template(build_tcfi(p), lay, {"t": 1.0, "t_p": phi_p}, eps, phi_p * min_interval / 2.0,
                     min_interval / 2.0, domain)


def duration_certificate(p, horizon=None):
    """phi = t + t_p: the clock runs and DurationBegins stamps t_p forward."""
    horizon = horizon if horizon is not None else 3.0 * p.DL
    lay = Layout(("t", "t_p"))
    domain = _domain(lay, {"t": (0.0, horizon), "t_p": (0.0, horizon)}).intersect(lay.elapsed_at_least(0.0))
    return _template(build_duration(p), lay, {"t": 1.0, "t_p": 1.0}, 0.5, 1.0, p.DL / (2.0 * math.sqrt(2.0)),
                     domain)


def vtc_certificate(p, min_interval=None, amplitude=5.0, horizon=10.0):
    """
    Every VTC reset refills w to 1 while the flow drains it at gamma, so
    with events at least ``min_interval`` apart (half a sampling period by
    default) each reset starts from w <= w_m = 1 - gamma min_interval.

    phi = phi_t t + w. A reset gains at least 1 - w_m along w, which pays
    for everything else it moves (at most ``spread`` in norm), and the flow
    gains phi_t - gamma. The refilled w also keeps each sample image
    1 - w_m away from the next sample guard.
    """
    min_interval = min_interval if min_interval is not None else p.T_s / 2.0
    aut = build_vtc(p, amplitude=amplitude)
    lay = Layout(aut.coords)
    n, window = p.SAMPLES, p.window
    w_m = 1.0 - p.gamma * min_interval
    peak = float(np.abs(np.asarray(p.template, dtype=float)).max())
    spread = math.sqrt(horizon ** 2 + n ** 2 + (n * amplitude) ** 2 + (n * amplitude * peak) ** 2
                       + (n * amplitude ** 2) ** 2 + (p.gamma * horizon) ** 2 + 4.0 * window + 1.0)
    eps = (1.0 - w_m) / (MARGIN * spread)
    phi_t = MARGIN * (p.gamma + eps * math.sqrt(1.0 + p.gamma ** 2))
    box = {
        "t": (0.0, horizon), "t_p": (0.0, horizon), "k": (0.0, n), "s": (-amplitude, amplitude),
        "mu": (-n * amplitude, n * amplitude), "alpha": (-n * amplitude * peak, n * amplitude * peak),
        "beta": (0.0, n * amplitude ** 2), "w": (1.0 - p.gamma * horizon, w_m), "dropped": (0.0, window),
    }
    box.update({f"nu_{i}": (-1.0, 1.0) for i in range(1, window + 1)})
    domain = _domain(lay, box).intersect(lay.elapsed_at_least(0.0))
    return _template(aut, lay, {"t": phi_t, "w": 1.0}, eps, (1.0 - w_m) / 2.0, (1.0 - w_m) / 2.0, domain)


def stability_certificate(p, min_interval, horizon=10.0):
    """
    Beats at least ``min_interval`` apart, at most DL / min_interval of
    them per duration, intervals summing to at most DL.

    phi = t + phi_tp t_p + phi_s sigma2. A beat stamps t_p forward by the
    interval and leaves the other weighted coordinates alone. Opening a
    duration stamps t_p forward too, which outweighs clearing sigma2 and
    the accumulators. Finishing only raises sigma2 from NO_BEATS.
    """
    aut = build_stability(p)
    lay = Layout(STAB_COORDS)
    beats = p.DL / min_interval
    floor = NO_BEATS - 1.0
    eps = 0.5
    phi_s = MARGIN * eps
    spread = math.sqrt(horizon ** 2 + p.DL ** 2 + p.DL ** 4 + beats ** 2 + (p.DL ** 2 - floor) ** 2)
    phi_p = MARGIN * (phi_s * (p.DL ** 2 - NO_BEATS) + eps * spread) / min_interval
    domain = _domain(lay, {
        "t": (0.0, horizon), "t_p": (0.0, horizon), "L1": (0.0, p.DL), "L2": (0.0, p.DL ** 2),
        "kappa": (0.0, beats), "sigma2": (floor, p.DL ** 2),
    }).intersect(lay.elapsed_at_least(min_interval))
    return _template(aut, lay, {"t": 1.0, "t_p": phi_p, "sigma2": phi_s}, eps, phi_p * min_interval / 2.0,
                     min_interval / 2.0, domain)


class HeartCertificateTemplate(CertificateTemplate):
    """
    The heart has too many modes to enumerate, so its checks run along the
    recorded executions, with flows sampled no further than ``flow_horizon``.
    """

    def __init__(self, automaton, certificate, domain, executions, flow_horizon):
        super().__init__(automaton, certificate, domain)
        self.executions = executions
        self.flow_horizon = flow_horizon

    def check(self, samples=None, rng=None):
        aut, cert = self.automaton, self.certificate
        sampler = StateSampler(aut, rng=rng, domain=self.domain, executions=self.executions)
        report = CertReport(cert)
        report.add(phase_separability(aut, self.executions, cert.d_min))
        report.add(check_tisg(aut, samples, sampler=sampler, horizon=self.flow_horizon))
        report.add(CheckResult("o_minimal", True, note="structural: flows are linear ODEs"))
        report.add(check_flow_monotonic(aut, cert, samples, sampler=sampler, horizon=self.flow_horizon))
        report.add(check_reset_monotonic(aut, cert, samples, sampler=sampler))
        report.add(check_ends_delimited(aut, cert, sampler=sampler))
        logger.info("Heart certificate: %s", "pass" if report.passed else "fail: " + ", ".join(report.failed()))
        return report


def _cells(jump):
    """Cells that changed phase at ``jump``."""
    return sorted({int(name.partition(":")[0][1:]) for name in jump.edges if name[:1] == "c"})


def phase_separability(heart, executions, d_min):
    """
    Right after a cell changes phase it lies more than d_min from every guard
    of its new phase. The horizon edge is not a cell guard and is left out.
    """
    result = CheckResult("separability", True)
    for execution in executions:
        for jump in execution.jumps:
            mode, x = jump.post.mode, jump.post.x
            if heart.is_terminal(mode):
                continue
            for k in _cells(jump):
                prefix = f"c{k}:"
                for edge in heart.own_edges(mode):
                    if not edge.name.startswith(prefix):
                        continue
                    distance = point_distance(x, edge.guard)
                    result.samples += 1
                    result.margin = min(result.margin, distance - d_min)
                    if distance <= d_min and result.passed:
                        result.passed = False
                        result.witness = witness(mode, x, jump.time, edge=edge.name, distance=float(distance))
    return finish(result)


def heart_certificate(h, e=None, duration=None, dt=DEFAULT_DT):
    """
    phi = t + phi_tp sum_k tp_k, checked along one excitation wave started at
    cell 0 shortly after t = 0.

    Over a flow no longer than the shortest dwell every cell moves at most
    ``speed``: its own ramp plus diffusion across the potential span widened
    by the overshoot. The electrogram moves at most |w|_1 times the coupling
    row sum times that, so eps = 1 / (1 + L_V + L_egm). A phase change stamps
    tp_k forward by at least the shortest dwell and moves egm by at most
    2 |w|_1 speed; phi_tp makes the stamp outweigh it.
    """
    heart = build_heart(h, e)
    dwell = h.min_dwell()
    ramp = max(abs(rate) for rate in heart.ramps.values())
    coupling = 2.0 / h.R_h + 2.0 / h.R_v
    overshoot = 2.0 * dwell * ramp
    speed = ramp + coupling * (h.V_max - h.V_min + overshoot)
    w1 = float(np.abs(heart.weights).sum())
    lip_v = math.sqrt(heart.n) * speed
    lip_egm = w1 * 2.0 * coupling * speed
    eps = 1.0 / (1.0 + lip_v + lip_egm) / MARGIN
    phi_p = MARGIN * eps * (1.0 + 2.0 * w1 * speed / dwell)
    gaps = [h.V_max - h.V_th, h.V_max - h.V_plateau, h.V_plateau - h.V_th, h.V_th - h.V_min,
            h.V_th2 - h.V_th, h.V_max2 - h.V_th2, h.PD / math.sqrt(2.0)]
    d_min = min(gaps) / 2.0

    start = 10.0 * dwell
    state = initial_state(heart)
    x0 = state.x.copy()
    x0[0] = h.V_th + 1.0
    x0[heart.T] = start
    x0[heart.EGM] = heart.egm_value(state.mode, x0[:heart.n])
    duration = duration if duration is not None else h.D - start
    executions = [simulate(heart, HybridState(state.mode, x0), duration, dt)]

    phi = np.zeros(heart.dim)
    phi[heart.T] = 1.0
    phi[heart.n:2 * heart.n] = phi_p
    lo = np.concatenate([np.full(heart.n, h.V_min - overshoot), np.zeros(heart.n + 1), [-w1 * speed]])
    hi = np.concatenate([np.full(heart.n, h.V_max + overshoot), np.full(heart.n + 1, h.D), [w1 * speed]])
    domain = Polytope.from_box(lo, hi)
    band_lo, band_hi = delimited_band(phi, domain)
    width = max(band_hi - band_lo, 1.0)
    lipschitz = [lip_v] * heart.n + [0.0] * heart.n + [1.0, lip_egm]
    cert = StormedCertificate(phi, eps, phi_p * dwell / 2.0, d_min, band_lo - 0.01 * width,
                              band_hi + 0.01 * width, lipschitz)
    logger.info("Template certificate for %s: %r", heart.name, cert)
    return HeartCertificateTemplate(heart, cert, domain, executions, dwell)
