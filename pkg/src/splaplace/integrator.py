"""Time stepping for the transport-noise p-Laplace equation in Ito form.

One step of length dt does, in order:

1. a Heun (explicit trapezoidal) advance of the degenerate diffusion, with
   a stability guard that recursively halves the substep whenever the
   update would increase the L2 norm;
2. the Euler-Maruyama transport term evaluated at the pre-step state;
3. the exact heat multiplier exp(-kappa*lambda_k*dt) of the corrector;
4. a radial energy projection that rescales the result so the combined
   noise + heat substep preserves the L2 norm it received.

Step 4 reflects the exact pathwise energy balance of the continuum
equation: divergence-free transport in Stratonovich form moves no energy,
and the Ito corrector's dissipation is exactly the counterpart of the
martingale's quadratic input.  Enforcing that balance per step keeps
||u(t)|| nonincreasing along every path and makes the recorded energy
ledger second-order accurate, which the plain Euler-Maruyama update cannot
achieve.

The per-step noise contribution (transport + heat + projection, minus the
heat image of the diffusion substep) is exposed to observers so the mild
reconstruction can replay it pathwise.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .noise import (
    IncrementBatch,
    mode_tables,
    shell_representatives,
    transport_increment,
)
from .plaplace import PExponent, apply_plaplace, grad_norm_p
from .spectral import Grid, SpectralField, gradient_physical

_GUARD_MAX_DEPTH = 24
_GUARD_TOL = 1e-13


class SimulationAbort(RuntimeError):
    """Raised when the state leaves the finite range or the guard gives up."""

    def __init__(self, message, t=None, step=None):
        super().__init__(message)
        self.t = t
        self.step = step


@dataclass
class SimConfig:
    """Everything one trajectory depends on.

    dt must be the reciprocal of an integer so that integer times land
    exactly on steps (the coefficient schedule switches there), and T must
    be an integer multiple of dt.  With ``noise`` set, the heat coefficient
    is the noise intensity; otherwise ``kappa`` (default 0) gives a plain
    heat term.  ``enable_plaplace`` exists for test bypasses only.
    """

    grid: Grid
    p: PExponent
    u0: SpectralField
    dt: float
    T: float
    noise: object = None
    kappa: float = None
    seed: int = 0
    enable_plaplace: bool = True

    def __post_init__(self):
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("dt and T must be positive")
        m = round(1.0 / self.dt)
        if m < 1 or abs(1.0 / self.dt - m) > 1e-6 * m:
            raise ValueError(f"dt must divide unit time, got dt={self.dt}")
        self.steps_per_unit = m
        self.dt_eff = 1.0 / m
        total = round(self.T * m)
        if total < 1 or abs(self.T * m - total) > 1e-6 * max(total, 1):
            raise ValueError(f"T={self.T} is not a multiple of dt={self.dt}")
        self.total_steps = total
        if self.p.d != self.grid.d:
            raise ValueError("exponent and grid dimensions differ")
        if self.u0.grid != self.grid:
            raise ValueError("initial state lives on a different grid")
        if self.noise is not None:
            if self.kappa is not None and self.kappa != self.noise.kappa:
                raise ValueError("kappa duplicates the noise intensity; leave it unset")
            if self.noise.d != self.grid.d:
                raise ValueError("noise and grid dimensions differ")
            theta = self.noise.theta
            if theta.schedule == "step_doubling":
                if self.T > len(theta.entries) + 1e-9:
                    raise ValueError(
                        "horizon T exceeds the scheduled coefficient intervals"
                    )
        elif self.kappa is None:
            self.kappa = 0.0

    @property
    def kappa_eff(self):
        return self.noise.kappa if self.noise is not None else self.kappa


@dataclass
class EnergyLedger:
    """Per-step scalars: ||u||^2 and the trapezoidal running dissipation."""

    times: np.ndarray
    l2_sq: np.ndarray
    grad_p_pow: np.ndarray
    diss_integral: np.ndarray  # 2 * integral of ||grad u||_p^p, cumulative


@dataclass
class Trajectory:
    times: list
    states: list
    ledger: EnergyLedger
    cfg: SimConfig
    kicks: list = None  # per-step noise contributions when recorded
    saved_steps: list = field(default_factory=list)

    def state_at_step(self, j):
        if not hasattr(self, "_step_index"):
            self._step_index = {s: i for i, s in enumerate(self.saved_steps)}
        idx = self._step_index.get(j)
        if idx is None:
            raise KeyError(f"state at step {j} was not saved")
        return self.states[idx]


def _heat_multiplier(grid, kappa, dt):
    if kappa == 0.0:
        return None
    return np.exp(-kappa * grid.lam * dt)


def _heun_guarded(u, p, dt, grads_u=None, depth=0):
    """Diffusion substep: Heun advance with recursive norm-guarded halving.

    Returns (new state, ||grad u||_p^p at u, Delta_p u at u).  The returned
    scalar and field always refer to the entry state u, independent of how
    deep the guard recursed.
    """
    f1, g1 = apply_plaplace(u, p, grads=grads_u, return_gradp=True)
    pred = SpectralField(u.grid, u.coeffs + dt * f1.coeffs)
    f2 = apply_plaplace(pred, p)
    w = SpectralField(u.grid, u.coeffs + 0.5 * dt * (f1.coeffs + f2.coeffs))
    if w.l2_norm_sq() <= u.l2_norm_sq() * (1.0 + _GUARD_TOL):
        return w, g1, f1
    if depth >= _GUARD_MAX_DEPTH:
        raise SimulationAbort("diffusion substep guard exceeded maximum depth")
    half, _, _ = _heun_guarded(u, p, 0.5 * dt, grads_u=grads_u, depth=depth + 1)
    w, _, _ = _heun_guarded(half, p, 0.5 * dt, depth=depth + 1)
    return w, g1, f1


@dataclass
class StepResult:
    u_next: SpectralField
    grad_p_pow: float  # ||grad u||_p^p at the entry state
    plap_first: SpectralField  # Delta_p at the entry state (zero if disabled)
    kick: np.ndarray  # noise contribution u_next - E*w (zero array if none)


def _step_impl(u, cfg, t, batch, heat, tables=None):
    grid = cfg.grid
    dt = cfg.dt_eff
    needs_grads = cfg.enable_plaplace or cfg.noise is not None
    grads_u = gradient_physical(u) if needs_grads else None
    if cfg.enable_plaplace:
        w, g_left, f1 = _heun_guarded(u, cfg.p, dt, grads_u=grads_u)
    else:
        w = u
        g_left = 0.0
        f1 = SpectralField.zero(grid)
    if cfg.noise is not None:
        tr = transport_increment(u, cfg.noise, batch, t, grads=grads_u)
        vpre = w.coeffs + tr.coeffs
        v = heat * vpre if heat is not None else vpre
        nw2 = w.l2_norm_sq()
        nv2 = float(np.sum(np.abs(v) ** 2))
        rho = math.sqrt(nw2 / nv2) if nv2 > 0.0 else 0.0
        u_next_coeffs = rho * v
        ew = heat * w.coeffs if heat is not None else w.coeffs
        kick = u_next_coeffs - ew
        u_next = SpectralField(grid, u_next_coeffs)
    else:
        u_next_coeffs = heat * w.coeffs if heat is not None else w.coeffs
        kick = np.zeros(grid.shape, dtype=np.complex128)
        u_next = SpectralField(grid, u_next_coeffs) if heat is not None else w
    return StepResult(u_next, g_left, f1, kick)


def step(u, cfg, t, batch=None):
    """Advance one step of length cfg.dt starting at time t.

    Under a step-doubling schedule the step must not straddle an integer
    boundary.  ``batch`` carries the noise increments for the step; omit it
    for noise-free configurations.
    """
    if cfg.noise is not None:
        theta = cfg.noise.theta
        n0 = theta.interval_index(t)
        if t + cfg.dt_eff > n0 + 1 + 1e-9:
            raise ValueError("step straddles a coefficient-schedule boundary")
        if batch is None:
            raise ValueError("noise is active but no increment batch was given")
    heat = _heat_multiplier(cfg.grid, cfg.kappa_eff, cfg.dt_eff)
    return _step_impl(u, cfg, t, batch, heat).u_next


def interval_rng(seed, path, interval):
    """Counter-based generator keyed by (seed, path, unit interval)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(int(path), int(interval)))
    return np.random.Generator(np.random.Philox(ss))


def _interval_draws(cfg, path, interval, n_reps, steps, base_per_step=1):
    """Complex increments for one unit interval, optionally refined.

    With base_per_step > 1 the draws happen at dt/base_per_step and are
    summed per step, so refinements of dt share one Brownian path.
    """
    rng = interval_rng(cfg.seed, path, interval)
    nf = cfg.grid.d - 1
    dt_base = cfg.dt_eff / base_per_step
    z = rng.standard_normal((steps * base_per_step, n_reps, nf, 2))
    vals = (z[..., 0] + 1j * z[..., 1]) * math.sqrt(dt_base)
    if base_per_step > 1:
        vals = vals.reshape(steps, base_per_step, n_reps, nf).sum(axis=1)
    return vals


def simulate(
    cfg,
    save_every=1,
    *,
    path=0,
    observer=None,
    record_kicks=False,
    noise_base_dt=None,
):
    """Run one trajectory; deterministic given (cfg, seed, path).

    States are stored every ``save_every`` steps, at every integer time and
    at the end.  The ledger records ||u||^2 and ||grad u||_p^p at every
    step.  ``observer(j, t_next, prev_state, result)`` is called after each
    step; ``noise_base_dt`` draws the increments at a finer base step and
    aggregates them (for common-path refinement studies).
    """
    grid = cfg.grid
    dt = cfg.dt_eff
    m = cfg.steps_per_unit
    nsteps = cfg.total_steps
    base_per_step = 1
    if noise_base_dt is not None:
        base_per_step = round(cfg.dt_eff / noise_base_dt)
        if base_per_step < 1 or abs(cfg.dt_eff / noise_base_dt - base_per_step) > 1e-9:
            raise ValueError("noise_base_dt must divide dt")
    heat = _heat_multiplier(grid, cfg.kappa_eff, dt)

    times = np.arange(nsteps + 1) * dt
    l2_sq = np.empty(nsteps + 1)
    grad_pow = np.zeros(nsteps + 1)
    u = cfg.u0
    l2_sq[0] = u.l2_norm_sq()

    saved_steps = [0]
    states = [u]
    kicks = [] if record_kicks else None

    interval = -1
    draws = None
    reps = None
    for j in range(nsteps):
        t = j * dt
        batch = None
        if cfg.noise is not None:
            n = j // m
            if n != interval:
                interval = n
                theta = cfg.noise.theta
                entry = theta.entries[n if theta.schedule == "step_doubling" else 0]
                reps = shell_representatives(entry)
                mode_tables(grid, cfg.noise, entry)
                steps_here = min(m, nsteps - n * m)
                draws = _interval_draws(
                    cfg, path, n, len(reps), steps_here, base_per_step
                )
            batch = IncrementBatch(dt, reps, draws[j - interval * m])
        result = _step_impl(u, cfg, t, batch, heat)
        grad_pow[j] = result.grad_p_pow
        l2_sq[j + 1] = result.u_next.l2_norm_sq()
        if not np.isfinite(l2_sq[j + 1]):
            raise SimulationAbort(
                f"non-finite field norm at t={times[j + 1]:.6g} (step {j + 1})",
                t=times[j + 1],
                step=j + 1,
            )
        if observer is not None:
            observer(j, times[j + 1], u, result)
        if record_kicks:
            kicks.append(result.kick)
        u = result.u_next
        jn = j + 1
        if jn % save_every == 0 or jn % m == 0 or jn == nsteps:
            saved_steps.append(jn)
            states.append(u)
    if cfg.enable_plaplace:
        grad_pow[nsteps] = grad_norm_p(u, cfg.p)
    diss = np.zeros(nsteps + 1)
    diss[1:] = 2.0 * np.cumsum(0.5 * dt * (grad_pow[:-1] + grad_pow[1:]))
    ledger = EnergyLedger(times, l2_sq, grad_pow, diss)
    traj = Trajectory(
        [times[s] for s in saved_steps], states, ledger, cfg, kicks=kicks
    )
    traj.saved_steps = saved_steps
    return traj


def energy_residual(traj):
    """max_t |  ||u(t)||^2 + 2 int_0^t ||grad u||_p^p ds - ||u0||^2 |."""
    led = traj.ledger
    return float(np.max(np.abs(led.l2_sq + led.diss_integral - led.l2_sq[0])))
