"""Independent certification of the structural solvers.

Three routes that share no code with the glue-pouring machinery:

* a log-barrier interior-point solver for the throughput, energy and
  feasibility-slack programs in their jointly-convex perspective form,
* an exhaustive grid search for tiny instances, and
* a KKT-residual evaluator that recovers multipliers for any feasible
  policy and reports how far it is from stationarity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gluekernel import v_star, v_star_residual
from .model import (
    ENERGY,
    THROUGHPUT,
    NoConvergence,
    Policy,
    Scenario,
    TooLarge,
    audit_policy,
    rate,
)

THETA_FLOOR = 1e-9
SNAP = 1e-7
_S_CLAMP = 350.0  # cap on 2*beta/theta inside exp()


class InfeasibleInstance(Exception):
    pass


@dataclass(frozen=True)
class KKTCertificate:
    kind: str
    multipliers: dict = field(default_factory=dict)
    stationarity_residual: float = 0.0
    complementarity_residual: float = 0.0
    sign_residual: float = 0.0
    threshold_residual: float = 0.0
    degenerate: bool = False
    notes: tuple[str, ...] = ()

    @property
    def max_residual(self) -> float:
        return max(
            self.stationarity_residual,
            self.complementarity_residual,
            self.sign_residual,
            self.threshold_residual,
        )


# ---------------------------------------------------------------------------
# perspective-form problem assembly
# ---------------------------------------------------------------------------


class _Instance:
    """Barrier-ready description of one convex program.

    Variables are x = (u_0..u_{n-1}, th_0..th_{n-1}[, slack]) with one
    (u, th) pair per epoch/channel cell; u is allocated energy for the
    throughput kind and delivered data for the energy kinds.
    """

    def __init__(self, s: Scenario, kind: str):
        if kind not in (THROUGHPUT, ENERGY, "energy-slack"):
            raise ValueError(f"unsupported kind {kind!r}")
        self.s = s
        self.kind = kind
        self.I, self.K = s.num_epochs, s.num_channels
        self.nc = self.I * self.K
        self.extra = 1 if kind == "energy-slack" else 0
        self.n = 2 * self.nc + self.extra
        self.gam = np.asarray(s.gains, dtype=float).reshape(self.nc)
        self.tau = np.repeat(np.asarray(s.epoch_durations, dtype=float), self.K)
        self.eps = s.processing_cost
        self.cum_e = s.cumulative_energy()
        self.cum_b = s.cumulative_data()
        self._build()

    # -- constraint matrices -------------------------------------------------

    def _prefix_mask(self, i: int) -> np.ndarray:
        m = np.zeros(self.nc)
        m[: (i + 1) * self.K] = 1.0
        return m

    def _build(self):
        n, nc, I, K = self.n, self.nc, self.I, self.K
        rows, rhs = [], []

        def lin_row(cu=None, cth=None, cs=0.0):
            r = np.zeros(n)
            if cu is not None:
                r[:nc] = cu
            if cth is not None:
                r[nc: 2 * nc] = cth
            if self.extra:
                r[-1] = cs
            return r

        hard_rows, hard_rhs = [], []
        if self.kind == THROUGHPUT:
            for i in range(I):
                m = self._prefix_mask(i)
                hard_rows.append(lin_row(m, self.eps * m))
                hard_rhs.append(self.cum_e[i])
            if not self.s.unbounded_battery:
                for i in range(I):
                    m = self._prefix_mask(i)
                    nxt = self.cum_e[min(i + 1, I - 1)]
                    hard_rows.append(lin_row(-m, -self.eps * m))
                    hard_rhs.append(self.s.battery_capacity - nxt)
            self.nl_prefixes = []
        else:
            # energy kinds: prefix drained-energy caps are nonlinear in (u, th)
            self.nl_prefixes = [(self._prefix_mask(i), float(self.cum_e[i])) for i in range(I)]
            for i in range(I - 1):
                hard_rows.append(lin_row(self._prefix_mask(i), None))
                hard_rhs.append(self.cum_b[i])
            total = float(self.cum_b[-1]) if I else 0.0
            ones = np.ones(nc)
            if self.kind == ENERGY:
                hard_rows.append(lin_row(-ones, None))
                hard_rhs.append(-total)
            else:  # energy-slack: sum B_j - sum u + slack <= 0
                hard_rows.append(lin_row(-ones, None, cs=1.0))
                hard_rhs.append(-total)
        self.A_hard = np.array(hard_rows) if hard_rows else np.zeros((0, n))
        self.b_hard = np.array(hard_rhs)

        box_rows, box_rhs = [], []
        eye = np.eye(nc)
        for c in range(nc):
            box_rows.append(lin_row(None, eye[c]))
            box_rhs.append(self.tau[c])
            box_rows.append(lin_row(None, -eye[c]))
            box_rhs.append(-THETA_FLOOR)
            box_rows.append(lin_row(-eye[c], None))
            box_rhs.append(0.0)
        self.A_box = np.array(box_rows)
        self.b_box = np.array(box_rhs)

    # -- objective and cell costs -------------------------------------------

    def _cells(self, x):
        return x[: self.nc], x[self.nc: 2 * self.nc]

    def domain_ok(self, x) -> bool:
        u, th = self._cells(x)
        if np.any(th <= 0) or np.any(u < 0):
            return False
        if self.kind != THROUGHPUT and np.any(2.0 * u / th > _S_CLAMP):
            return False
        return True

    def cell_cost(self, x):
        """Drained energy per cell and its derivatives (energy kinds)."""
        u, th = self._cells(x)
        sx = 2.0 * u / th
        X = np.exp(sx)
        val = th / self.gam * (X - 1.0) + self.eps * th
        dv_u = 2.0 * X / self.gam
        dv_th = (X * (1.0 - sx) - 1.0) / self.gam + self.eps
        h_uu = 4.0 * X / (self.gam * th)
        h_ut = -2.0 * sx * X / (self.gam * th)
        h_tt = sx * sx * X / (self.gam * th)
        return val, dv_u, dv_th, h_uu, h_ut, h_tt

    def objective(self, x):
        """Value/grad/hess of the minimized objective f0."""
        u, th = self._cells(x)
        n = self.n
        g = np.zeros(n)
        h = np.zeros((n, n))
        if self.kind == THROUGHPUT:
            r = self.gam * u / th
            val = -0.5 * np.sum(th * np.log1p(r))
            g[: self.nc] = -self.gam / (2.0 * (1.0 + r))
            g[self.nc: 2 * self.nc] = -(0.5 * np.log1p(r) - r / (2.0 * (1.0 + r)))
            c = 1.0 / (2.0 * th * (1.0 + r) ** 2)
            idx = np.arange(self.nc)
            h[idx, idx] = c * self.gam ** 2
            h[idx, idx + self.nc] = h[idx + self.nc, idx] = -c * self.gam * r
            h[idx + self.nc, idx + self.nc] = c * r * r
            return val, g, h
        if self.kind == ENERGY:
            val_c, du, dth, huu, hut, htt = self.cell_cost(x)
            idx = np.arange(self.nc)
            g[: self.nc] = du
            g[self.nc: 2 * self.nc] = dth
            h[idx, idx] = huu
            h[idx, idx + self.nc] = h[idx + self.nc, idx] = hut
            h[idx + self.nc, idx + self.nc] = htt
            return float(np.sum(val_c)), g, h
        # energy-slack: maximize the slack variable
        g[-1] = -1.0
        return -x[-1], g, h

    def nl_values(self, x):
        if not self.nl_prefixes:
            return np.zeros(0)
        val_c = self.cell_cost(x)[0]
        return np.array([m @ val_c - cap for m, cap in self.nl_prefixes])

    def nl_grad_hess(self, x):
        """Per nonlinear constraint: gradient vector and Hessian blocks."""
        if not self.nl_prefixes:
            return [], []
        _, du, dth, huu, hut, htt = self.cell_cost(x)
        grads, hesss = [], []
        idx = np.arange(self.nc)
        for m, _ in self.nl_prefixes:
            gr = np.zeros(self.n)
            gr[: self.nc] = m * du
            gr[self.nc: 2 * self.nc] = m * dth
            grads.append(gr)
            hs = np.zeros((self.n, self.n))
            hs[idx, idx] = m * huu
            hs[idx, idx + self.nc] = hs[idx + self.nc, idx] = m * hut
            hs[idx + self.nc, idx + self.nc] = m * htt
            hesss.append(hs)
        return grads, hesss


# ---------------------------------------------------------------------------
# barrier solver
# ---------------------------------------------------------------------------


def _newton(inst: _Instance, x, t_bar, f_obj, hard_shift=None, max_iter=60):
    """Damped Newton on t*f0 + log-barrier.  ``hard_shift`` enables the
    phase-1 mode where hard constraints read g(x) - s <= 0 with s = x[-1]."""

    def barrier_terms(x):
        lin_vals = []
        if inst.A_hard.size:
            v = inst.A_hard @ x - inst.b_hard
            if hard_shift is not None:
                v = v - x[-1]
            lin_vals.append((inst.A_hard, v, hard_shift is not None))
        nl = inst.nl_values(x)
        if nl.size and hard_shift is not None:
            nl = nl - x[-1]
        v_box = inst.A_box @ x - inst.b_box
        lin_vals.append((inst.A_box, v_box, False))
        return lin_vals, nl

    def feasible(x):
        if not inst.domain_ok(x):
            return False
        lin_vals, nl = barrier_terms(x)
        return all(np.all(v < 0) for _, v, _ in lin_vals) and np.all(nl < 0)

    def full_value(x):
        val = f_obj(x)[0] * t_bar
        lin_vals, nl = barrier_terms(x)
        for _, v, _ in lin_vals:
            val -= np.sum(np.log(-v))
        if nl.size:
            val -= np.sum(np.log(-nl))
        return val

    if not feasible(x):
        raise NoConvergence("newton started infeasible")
    for _ in range(max_iter):
        fv, fg, fh = f_obj(x)
        grad = t_bar * fg
        hess = t_bar * fh.copy()
        lin_vals, nl = barrier_terms(x)
        for a_mat, v, shifted in lin_vals:
            inv_s = -1.0 / v
            a_eff = a_mat
            if shifted:
                a_eff = a_mat.copy()
                a_eff[:, -1] -= 1.0
            grad += a_eff.T @ inv_s
            hess += (a_eff * (inv_s ** 2)[:, None]).T @ a_eff
        if nl.size:
            ngrads, nhesss = inst.nl_grad_hess(x)
            for gi, (gr, hs) in enumerate(zip(ngrads, nhesss)):
                if hard_shift is not None:
                    gr = gr.copy()
                    gr[-1] -= 1.0
                s_i = -nl[gi]
                grad += gr / s_i
                hess += np.outer(gr, gr) / (s_i * s_i) + hs / s_i
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(hess + 1e-10 * np.eye(inst.n), -grad)
        decrement = float(-grad @ step)
        if decrement < 0:  # numerical loss of positive definiteness
            step = -grad
            decrement = float(grad @ grad)
        scale = max(1.0, abs(fv))
        if float(np.max(np.abs(grad))) <= 1e-8 * scale * t_bar:
            return x, grad
        if decrement / 2.0 <= 1e-18 * max(1.0, t_bar):
            return x, grad
        if decrement <= 0.0625:  # lambda <= 1/4: quadratic-convergence region
            xn = x + step
            if feasible(xn):
                x = xn
                continue
        val0 = full_value(x)
        noise = 8.0 * np.spacing(abs(val0))
        alpha = 1.0
        for _ in range(60):
            xn = x + alpha * step
            if feasible(xn) and full_value(xn) <= val0 - 1e-4 * alpha * decrement + noise:
                break
            alpha *= 0.5
        else:
            return x, grad
        x = xn
    return x, grad


def _phase1(inst: _Instance) -> np.ndarray:
    """Find a strictly feasible point by minimizing the worst violation."""
    n = inst.n
    x0 = np.zeros(n + 1)
    u0 = 1e-3 if inst.kind == THROUGHPUT else 1e-4
    x0[: inst.nc] = u0
    x0[inst.nc: 2 * inst.nc] = inst.tau * 0.5
    aug = _AugmentedInstance(inst)
    hard = inst.A_hard @ x0[:n] - inst.b_hard if inst.A_hard.size else np.zeros(0)
    nl = inst.nl_values(x0[:n])
    worst = max(hard.max() if hard.size else -1.0, nl.max() if nl.size else -1.0)
    x0[-1] = worst + max(1.0, 0.1 * abs(worst))
    scale = max(1.0, float(np.max(np.abs(inst.b_hard))) if inst.b_hard.size else 1.0)
    margin = 1e-9 * scale
    x, t_bar = x0, 1.0
    for _ in range(50):
        x, _ = _newton(aug, x, t_bar, aug.objective, hard_shift=True)
        if x[-1] < -margin:
            return x[:n]
        m = aug.A_hard.shape[0] + len(aug.nl_prefixes) + aug.A_box.shape[0]
        if m / t_bar < margin:
            break
        t_bar *= 10.0
    if x[-1] < 0:
        return x[:n]
    raise InfeasibleInstance(f"phase-1 violation {x[-1]:.3g}")


class _AugmentedInstance:
    """Phase-1 view: same constraints, extra trailing slack variable."""

    def __init__(self, inst: _Instance):
        self.base = inst
        self.n = inst.n + 1
        self.nc = inst.nc
        self.kind = inst.kind
        self.nl_prefixes = inst.nl_prefixes
        self.A_hard = (
            np.hstack([inst.A_hard, np.zeros((inst.A_hard.shape[0], 1))])
            if inst.A_hard.size else np.zeros((0, self.n))
        )
        self.b_hard = inst.b_hard
        self.A_box = np.hstack([inst.A_box, np.zeros((inst.A_box.shape[0], 1))])
        self.b_box = inst.b_box

    def domain_ok(self, x):
        return self.base.domain_ok(x[:-1])

    def nl_values(self, x):
        return self.base.nl_values(x[:-1])

    def nl_grad_hess(self, x):
        grads, hesss = self.base.nl_grad_hess(x[:-1])
        out_g = []
        out_h = []
        for gr, hs in zip(grads, hesss):
            g2 = np.zeros(self.n)
            g2[:-1] = gr
            h2 = np.zeros((self.n, self.n))
            h2[:-1, :-1] = hs
            out_g.append(g2)
            out_h.append(h2)
        return out_g, out_h

    def objective(self, x):
        g = np.zeros(self.n)
        g[-1] = 1.0
        return x[-1], g, np.zeros((self.n, self.n))


@dataclass(frozen=True)
class ConvexSolution:
    policy: Policy
    objective: float
    certificate: KKTCertificate
    x: np.ndarray


def solve_convex(s: Scenario, kind: str, gap_tol: float = 1e-7) -> ConvexSolution:
    """Barrier-method solution of the requested program.

    ``objective`` is delivered data (throughput), remaining energy
    (energy) or the feasibility slack (energy-slack).  Raises
    :class:`InfeasibleInstance` when phase 1 finds no interior point and
    :class:`NoConvergence` when the duality gap cannot be closed.
    """
    inst = _Instance(s, kind)
    total_e = float(s.cumulative_energy()[-1]) if s.num_epochs else 0.0
    if kind == THROUGHPUT and total_e <= 0:
        pol = Policy.zeros(s.num_epochs, s.num_channels)
        return ConvexSolution(pol, 0.0, KKTCertificate(kind=kind), np.zeros(inst.n))
    x = _phase1(inst)
    m = inst.A_hard.shape[0] + len(inst.nl_prefixes) + inst.A_box.shape[0]
    t_bar = 1.0
    best = None
    for _ in range(50):
        x, grad = _newton(inst, x, t_bar, inst.objective)
        scale = max(1.0, abs(inst.objective(x)[0]))
        stat = float(np.max(np.abs(grad))) / t_bar / scale
        comp = m / t_bar / scale
        res = max(stat, comp)
        if best is None or res < best[0]:
            best = (res, x.copy(), stat, comp, t_bar)
        if comp <= gap_tol:
            # pushing the barrier parameter further only amplifies
            # cancellation noise in the stationarity estimate
            break
        t_bar *= 10.0
    else:
        raise NoConvergence(f"duality gap {m / t_bar:.3g} above tolerance", best=x)
    _, x, stat, comp, t_bar = best

    u, th = inst._cells(x)
    u = u.copy()
    th = th.copy()
    dead = th < SNAP
    u[dead] = 0.0
    th[dead] = 0.0
    if kind == THROUGHPUT:
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where(th > 0, u / np.maximum(th, 1e-300), 0.0)
        obj = float(np.sum(np.where(th > 0, 0.5 * th * np.log1p(inst.gam * p), 0.0)))
    else:
        with np.errstate(over="ignore"):
            grow = np.exp(np.minimum(2.0 * u / np.maximum(th, 1e-300), _S_CLAMP))
        p = np.where(th > 0, (grow - 1.0) / inst.gam, 0.0)
        drained = float(np.sum(np.where(th > 0, th * (p + inst.eps), 0.0)))
        obj = total_e - drained if kind == ENERGY else float(x[-1])
    policy = Policy(
        power=p.reshape(inst.I, inst.K),
        duration=th.reshape(inst.I, inst.K),
    ).canonical()
    cert = KKTCertificate(
        kind=kind,
        multipliers={"barrier_t": t_bar},
        stationarity_residual=stat,
        complementarity_residual=comp,
    )
    if cert.max_residual > 1e-6:
        raise NoConvergence(f"KKT residual {cert.max_residual:.3g} above 1e-6", best=cert)
    return ConvexSolution(policy=policy, objective=obj, certificate=cert, x=x)


# ---------------------------------------------------------------------------
# brute force
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BruteForceResult:
    policy: Policy
    objective: float
    gap: float


def _axis_points(n_axes: int, budget: float = 4e6) -> int:
    return max(8, int(budget ** (1.0 / n_axes)))


def brute_force_small(s: Scenario, kind: str, grid_step: float | None = None) -> BruteForceResult:
    """Exhaustive grid search over per-cell (consumption|data, duration).

    Only for instances with at most four cells.  The returned ``gap``
    bounds how far the true optimum can lie above (throughput) or below
    (energy) the best grid value, from local Lipschitz estimates around
    the incumbent.
    """
    nc = s.num_epochs * s.num_channels
    if nc > 4:
        raise TooLarge(f"{nc} cells exceed the brute-force budget")
    if kind == THROUGHPUT:
        return _brute_throughput(s, grid_step)
    if kind == ENERGY:
        return _brute_energy(s, grid_step)
    raise ValueError(f"unsupported kind {kind!r}")


def _brute_throughput(s: Scenario, grid_step):
    I, K = s.num_epochs, s.num_channels
    nc = I * K
    eps = s.processing_cost
    gam = np.asarray(s.gains, dtype=float).reshape(nc)
    tau = np.repeat(np.asarray(s.epoch_durations, dtype=float), K)
    cum_e = s.cumulative_energy()
    total = float(cum_e[-1])
    if total <= 0:
        return BruteForceResult(Policy.zeros(I, K), 0.0, 0.0)
    # spending everything is optimal: the last cell's consumption is implied
    n_axes = 2 * nc - 1
    P = _axis_points(n_axes) if grid_step is None else max(3, int(round(1.0 / grid_step)) + 1)
    while P ** n_axes > 6e6:
        P -= 1
    c_ax = [np.linspace(0.0, total, P) for _ in range(nc - 1)]
    th_ax = [np.linspace(0.0, tau[c], P) for c in range(nc)]
    mesh = np.meshgrid(*c_ax, *th_ax, indexing="ij", sparse=True)
    cons = list(mesh[: nc - 1])
    cons.append(total - sum(np.broadcast_arrays(*mesh[: nc - 1])) if nc > 1 else total)
    ths = mesh[nc - 1:]
    ok = np.ones((), dtype=bool)
    if nc > 1:
        ok = cons[-1] >= 0
    data = 0.0
    for c in range(nc):
        th = ths[c]
        con = cons[c]
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where(th > 0, con / np.where(th > 0, th, 1.0) - eps, 0.0)
        valid = (th > 0) & (p >= 0)
        cell = np.where(valid, 0.5 * th * np.log1p(gam[c] * np.maximum(p, 0.0)), 0.0)
        used = np.where(valid, con, 0.0)
        data = data + cell
        if c == 0:
            pref = used
        else:
            pref = pref + used
        i_epoch = c // K
        if (c + 1) % K == 0:
            ok = ok & (pref <= cum_e[i_epoch] + 1e-12)
            if not s.unbounded_battery and i_epoch + 1 < I:
                ok = ok & (pref >= cum_e[i_epoch + 1] - s.battery_capacity - 1e-12)
    data = np.where(ok, data, -np.inf)
    flat = int(np.argmax(data))
    best = float(data.reshape(-1)[flat] if data.ndim else data)
    idx = np.unravel_index(flat, np.broadcast_shapes(*(m.shape for m in mesh))) if nc > 0 else ()
    cvals = [float(c_ax[a][idx[a]]) for a in range(nc - 1)]
    cvals.append(total - sum(cvals))
    thvals = [float(th_ax[c][idx[nc - 1 + c]]) for c in range(nc)]
    p_best, th_best = [], []
    for c in range(nc):
        th = thvals[c]
        p = cvals[c] / th - eps if th > 0 else 0.0
        if th <= 0 or p < 0:
            p, th = 0.0, 0.0
        p_best.append(p)
        th_best.append(th)
    gap = _local_gap_throughput(gam, eps, cvals, thvals,
                                [total / (P - 1)] * nc,
                                [tau[c] / (P - 1) for c in range(nc)])
    pol = Policy(power=np.reshape(p_best, (I, K)), duration=np.reshape(th_best, (I, K)))
    return BruteForceResult(policy=pol.canonical(), objective=best, gap=gap)


def _cell_data(gam, eps, c, th):
    if th <= 0:
        return 0.0
    p = c / th - eps
    if p < 0:
        return 0.0
    return 0.5 * th * math.log1p(gam * p)


def _local_gap_throughput(gam, eps, cvals, thvals, dc, dth):
    gap = 0.0
    for c in range(len(cvals)):
        base = _cell_data(gam[c], eps, cvals[c], thvals[c])
        up_c = _cell_data(gam[c], eps, cvals[c] + dc[c], thvals[c])
        lo_c = _cell_data(gam[c], eps, max(cvals[c] - dc[c], 0.0), thvals[c])
        up_t = _cell_data(gam[c], eps, cvals[c], thvals[c] + dth[c])
        lo_t = _cell_data(gam[c], eps, cvals[c], max(thvals[c] - dth[c], 0.0))
        span = max(abs(up_c - base), abs(base - lo_c)) + max(abs(up_t - base), abs(base - lo_t))
        gap += 2.0 * span + gam[c] * dc[c]
    return gap + 1e-9


def _brute_energy(s: Scenario, grid_step):
    I, K = s.num_epochs, s.num_channels
    nc = I * K
    eps = s.processing_cost
    gam = np.asarray(s.gains, dtype=float).reshape(nc)
    tau = np.repeat(np.asarray(s.epoch_durations, dtype=float), K)
    cum_e = s.cumulative_energy()
    cum_b = s.cumulative_data()
    total_b = float(cum_b[-1])
    total_e = float(cum_e[-1])
    if total_b <= 0:
        return BruteForceResult(Policy.zeros(I, K), total_e, 0.0)
    n_axes = 2 * nc - 1
    P = _axis_points(n_axes) if grid_step is None else max(3, int(round(1.0 / grid_step)) + 1)
    while P ** n_axes > 6e6:
        P -= 1
    d_ax = [np.linspace(0.0, total_b, P) for _ in range(nc - 1)]
    th_ax = [np.linspace(0.0, tau[c], P) for c in range(nc)]
    mesh = np.meshgrid(*d_ax, *th_ax, indexing="ij", sparse=True)
    ds = list(mesh[: nc - 1])
    ds.append(total_b - sum(np.broadcast_arrays(*mesh[: nc - 1])) if nc > 1 else total_b)
    ths = mesh[nc - 1:]
    ok = np.ones((), dtype=bool)
    if nc > 1:
        ok = ds[-1] >= 0
    cost = 0.0
    for c in range(nc):
        th = ths[c]
        d = ds[c]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            grow = np.exp(np.minimum(2.0 * np.maximum(d, 0.0) / np.where(th > 0, th, 1.0),
                                     _S_CLAMP))
            cell = np.where(th > 0, th / gam[c] * (grow - 1.0) + eps * th, 0.0)
        ok = ok & ((th > 0) | ~(np.asarray(d) > 0))
        cost = cost + cell
        if c == 0:
            pref_c, pref_d = cell, np.maximum(d, 0.0)
        else:
            pref_c = pref_c + cell
            pref_d = pref_d + np.maximum(d, 0.0)
        i_epoch = c // K
        if (c + 1) % K == 0:
            ok = ok & (pref_c <= cum_e[i_epoch] + 1e-12)
            if i_epoch < I - 1:
                ok = ok & (pref_d <= cum_b[i_epoch] + 1e-12)
    cost = np.where(ok, cost, np.inf)
    flat = int(np.argmin(cost))
    best_cost = float(cost.reshape(-1)[flat] if cost.ndim else cost)
    if not math.isfinite(best_cost):
        raise InfeasibleInstance("no feasible grid point")
    idx = np.unravel_index(flat, np.broadcast_shapes(*(m.shape for m in mesh)))
    dvals = [float(d_ax[a][idx[a]]) for a in range(nc - 1)]
    dvals.append(total_b - sum(dvals))
    thvals = [float(th_ax[c][idx[nc - 1 + c]]) for c in range(nc)]
    p_best, th_best = [], []
    gap = 0.0
    for c in range(nc):
        th, d = thvals[c], dvals[c]
        if th <= 0 or d <= 0:
            p_best.append(0.0)
            th_best.append(0.0)
        else:
            p_best.append((math.exp(min(2.0 * d / th, _S_CLAMP)) - 1.0) / gam[c])
            th_best.append(th)
        dd, dt = total_b / (P - 1), tau[c] / (P - 1)
        base = _cell_cost_energy(gam[c], eps, d, th)
        up = _cell_cost_energy(gam[c], eps, d + dd, th)
        upt = _cell_cost_energy(gam[c], eps, d, min(th + dt, tau[c]))
        dnt = _cell_cost_energy(gam[c], eps, d, max(th - dt, 0.0))
        gap += 2.0 * (abs(up - base) + max(abs(upt - base), abs(base - dnt)))
    pol = Policy(power=np.reshape(p_best, (I, K)), duration=np.reshape(th_best, (I, K)))
    return BruteForceResult(policy=pol.canonical(), objective=total_e - best_cost, gap=gap + 1e-9)


def _cell_cost_energy(gam, eps, d, th):
    if th <= 0 or d <= 0:
        return 0.0 if d <= 0 else math.inf
    return th / gam * (math.exp(min(2.0 * d / th, _S_CLAMP)) - 1.0) + eps * th


def tct_grid_scan(s: Scenario, step: float = 1e-3) -> float:
    """Feasible/infeasible boundary of the deadline on a uniform grid.

    Binary search over grid indices (feasibility is monotone in the
    deadline); each probe solves the feasibility-slack program with the
    barrier oracle, independent of the structural TCT solver.
    """
    horizon = s.deadline
    n = int(math.ceil(horizon / step))

    def feasible_at(idx: int) -> bool:
        t = min(idx * step, horizon)
        if t <= 0:
            return False
        try:
            sol = solve_convex(s.truncated(t), "energy-slack")
        except InfeasibleInstance:
            return False
        return sol.objective >= 0
    lo, hi = 0, n
    if not feasible_at(n):
        raise InfeasibleInstance("infeasible at full horizon")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if feasible_at(mid):
            hi = mid
        else:
            lo = mid
    return hi * step


# ---------------------------------------------------------------------------
# KKT residuals for structural solutions
# ---------------------------------------------------------------------------


def _epoch_levels(s: Scenario, pol: Policy, act_tol=1e-9):
    p, th = pol.power_array(), pol.duration_array()
    levels: list[float | None] = []
    spread = 0.0
    for i in range(s.num_epochs):
        cells = [1.0 / s.gains[i][k] + p[i, k]
                 for k in range(s.num_channels)
                 if p[i, k] > act_tol and th[i, k] > act_tol]
        if not cells:
            levels.append(None)
        else:
            levels.append(float(np.mean(cells)))
            if len(cells) > 1:
                spread = max(spread, (max(cells) - min(cells)) / max(cells))
    return levels, spread


def kkt_residuals(s: Scenario, pol: Policy, kind: str, bind_tol: float = 1e-6) -> KKTCertificate:
    """Fit multipliers to a feasible policy and report KKT residuals.

    Multipliers are recovered from the per-epoch glue levels; the
    complementary-slackness pattern (which constraint absorbs each level
    change) is read off the audit ledger.  Residuals are relative to the
    level scale.
    """
    if kind == THROUGHPUT:
        return _kkt_throughput(s, pol, bind_tol)
    if kind == ENERGY:
        return _kkt_energy(s, pol, bind_tol)
    raise ValueError(f"unsupported kind {kind!r}")


def _threshold_residual(s: Scenario, pol: Policy, levels, act_tol=1e-9):
    """Inactive cells must sit at or above the epoch level; partial cells
    at v*; full cells at or above v* (phi >= 0)."""
    p, th = pol.power_array(), pol.duration_array()
    eps = s.processing_cost
    worst = 0.0
    for i, xi in enumerate(levels):
        if xi is None:
            continue
        tau_i = s.epoch_durations[i]
        for k in range(s.num_channels):
            g = s.gains[i][k]
            vs = v_star(g, eps)
            active = p[i, k] > act_tol and th[i, k] > act_tol
            if not active:
                worst = max(worst, (xi - (1.0 / g + vs)) / xi)
                continue
            defect = v_star_residual(g, eps, p[i, k])
            if th[i, k] < tau_i - bindish(tau_i):
                worst = max(worst, abs(defect) / max(1.0, xi))
            else:
                worst = max(worst, -defect / max(1.0, xi))
    return max(worst, 0.0)


def bindish(tau: float) -> float:
    return 1e-9 * max(1.0, tau)


def _kkt_throughput(s: Scenario, pol: Policy, bind_tol: float) -> KKTCertificate:
    ledger = audit_policy(s, pol, check_data=False)
    levels, spread = _epoch_levels(s, pol)
    I = s.num_epochs
    cum_e = s.cumulative_energy()
    nu = [0.0] * (I + 1)
    for i in reversed(range(I)):
        nu[i] = 1.0 / (2.0 * levels[i]) if levels[i] is not None else nu[i + 1]
    lam = [0.0] * I
    mu = [0.0] * I
    comp = 0.0
    sign = 0.0
    notes = []
    degenerate = False
    for i in range(I):
        d = nu[i] - nu[i + 1]
        empty = abs(ledger.residual[i]) <= bind_tol
        full = (not s.unbounded_battery) and i + 1 < I and abs(
            cum_e[i + 1] - ledger.consumed[i] - s.battery_capacity) <= bind_tol
        if i == I - 1:
            # the deadline boundary: lambda_I absorbs the terminal level
            lam[i] = max(d, 0.0)
            empty = abs(ledger.final_residual) <= bind_tol
            if lam[i] > 0 and not empty:
                comp = max(comp, lam[i] * abs(ledger.final_residual))
            sign = max(sign, -min(d, 0.0) / max(nu[i], 1e-12))
            continue
        if d > 1e-12:
            lam[i] = d
            if not empty:
                comp = max(comp, d * abs(cum_e[i] - ledger.consumed[i]))
        elif d < -1e-12:
            mu[i] = -d
            if s.unbounded_battery or not full:
                comp = max(comp, -d * 1.0)
                notes.append(f"level drop at boundary {i + 1} without a full battery")
        if empty and full:
            degenerate = True
    stat = spread
    thr = _threshold_residual(s, pol, levels)
    return KKTCertificate(
        kind=THROUGHPUT,
        multipliers={"lambda": tuple(lam), "mu": tuple(mu), "nu": tuple(nu[:I])},
        stationarity_residual=stat,
        complementarity_residual=comp,
        sign_residual=sign,
        threshold_residual=thr,
        degenerate=degenerate,
        notes=tuple(notes),
    )


def _kkt_energy(s: Scenario, pol: Policy, bind_tol: float) -> KKTCertificate:
    ledger = audit_policy(s, pol)
    levels, spread = _epoch_levels(s, pol)
    I = s.num_epochs
    cum_b = s.cumulative_data()
    active = [i for i, lv in enumerate(levels) if lv is not None]
    lam = [0.0] * I
    mu = [0.0] * I
    comp = 0.0
    sign = 0.0
    degenerate = False
    notes = []
    if active:
        last = active[-1]
        mu_total = 2.0 * levels[last]
        big_l = 0.0  # 1 + sum of lambdas above the current epoch
        for a, b in zip(reversed(active[:-1]), reversed(active[1:])):
            need = 2.0 * (1.0 + big_l) * (levels[b] - levels[a])
            if need < -1e-9 * levels[b]:
                sign = max(sign, -need / levels[b])
                continue
            placed = False
            for n in range(a, b):
                battery_empty = abs(ledger.residual[n]) <= bind_tol
                buffer_empty = abs(ledger.delivered[n] - cum_b[n]) <= bind_tol
                if battery_empty and buffer_empty:
                    degenerate = True
                if buffer_empty:
                    mu[n] += need
                    placed = True
                    break
                if battery_empty:
                    lam[n] += need / (2.0 * levels[a])
                    big_l += need / (2.0 * levels[a])
                    placed = True
                    break
            if not placed and need > 1e-9 * levels[b]:
                comp = max(comp, (levels[b] - levels[a]) / levels[b])
                notes.append(f"level rise into epoch {b + 1} with slack battery and buffer")
    else:
        mu_total = 0.0
    total_slack = abs(ledger.total_delivered - float(cum_b[-1])) if I else 0.0
    comp = max(comp, mu_total * total_slack)
    thr = _threshold_residual(s, pol, levels)
    return KKTCertificate(
        kind=ENERGY,
        multipliers={"lambda": tuple(lam), "mu": tuple(mu), "mu_total": mu_total},
        stationarity_residual=spread,
        complementarity_residual=comp,
        sign_residual=sign,
        threshold_residual=thr,
        degenerate=degenerate,
        notes=tuple(notes),
    )
