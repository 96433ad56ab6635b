"""Hot numeric kernels with numba-jitted and pure-numpy implementations.

The jitted path is the default when numba is importable. Export
``HVACMASK_PURE_NUMPY=1`` to force the pure-numpy fallback (useful for
debugging and for the ``benchmarks/kernel_bench.py`` comparison). Both
paths implement the same contracts; within a process the selection is
fixed at import time so runs stay deterministic.
"""

import os

import numpy as np

N_ZONES = 7
N_LEVELS = 4
N_ACTIONS = N_LEVELS**N_ZONES  # 16384

# DIGITS[a, j] = base-4 digit j of joint action a (zone 1 least significant).
DIGITS = np.empty((N_ACTIONS, N_ZONES), dtype=np.uint8)
_idx = np.arange(N_ACTIONS)
for _j in range(N_ZONES):
    DIGITS[:, _j] = (_idx >> (2 * _j)) & 3
del _idx, _j

PURE_NUMPY = os.environ.get("HVACMASK_PURE_NUMPY", "").strip() not in ("", "0")

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

USING_NUMBA = _HAVE_NUMBA and not PURE_NUMPY


# ---------------------------------------------------------------------------
# Adam step (fused, in-place). The numpy fallback makes ~8 passes over the
# moment arrays; the fused loop makes one, which matters for the 16384-wide
# Q-network output layer.
# ---------------------------------------------------------------------------

def _adam_step_numpy(params, grad, m, v, lr, beta1, beta2, eps, t):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    denom = np.sqrt(v / c2)
    denom += eps
    params -= lr * (m / c1) / denom


def _adam_step_loop(params, grad, m, v, lr, beta1, beta2, eps, t):
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for i in range(params.size):
        mi = beta1 * m[i] + (1.0 - beta1) * grad[i]
        vi = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i]
        m[i] = mi
        v[i] = vi
        params[i] -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)


# ---------------------------------------------------------------------------
# Joint-action mask expansion: per-zone allowed levels (7, 4) -> 16384 bits.
# ---------------------------------------------------------------------------

def _expand_mask_numpy(allowed):
    valid = allowed[0].take(DIGITS[:, 0])
    for j in range(1, N_ZONES):
        valid = valid & allowed[j].take(DIGITS[:, j])
    return valid


def _expand_mask_loop(allowed):
    out = np.empty(N_ACTIONS, dtype=np.bool_)
    for a in range(N_ACTIONS):
        idx = a
        ok = True
        for j in range(N_ZONES):
            if not allowed[j, idx & 3]:
                ok = False
                break
            idx >>= 2
        out[a] = ok
    return out


# ---------------------------------------------------------------------------
# Newton-Raphson on loop flows of the parallel chilled-water bank.
#
# Unknowns are the flows of the conducting parallel branches; the pump flow
# is their sum. Residual per branch: pump head at the operating point minus
# the branch pressure drop R*V*|V|. The damping factor 0.5 kicks in whenever
# a full step would increase the residual.
# ---------------------------------------------------------------------------

def _newton_flows(resistances, a1, a2, a3, speed_sq, x0, tol, max_iter):
    x = x0.copy()
    n = x.shape[0]
    v = x.sum()
    f = speed_sq * (a1 * v * v + a2 * v + a3) - resistances * x * np.abs(x)
    best = np.abs(f).max()
    iters = 0
    while best > tol and iters < max_iter:
        v = x.sum()
        dhead = speed_sq * (2.0 * a1 * v + a2)
        jac = np.full((n, n), dhead)
        for i in range(n):
            jac[i, i] = dhead - 2.0 * resistances[i] * np.abs(x[i])
        dx = np.linalg.solve(jac, -f)
        step = 1.0
        for _ in range(12):
            xn = x + step * dx
            vn = xn.sum()
            fn = speed_sq * (a1 * vn * vn + a2 * vn + a3) - resistances * xn * np.abs(xn)
            if np.abs(fn).max() <= best:
                break
            step *= 0.5
        x = x + step * dx
        v = x.sum()
        f = speed_sq * (a1 * v * v + a2 * v + a3) - resistances * x * np.abs(x)
        best = np.abs(f).max()
        iters += 1
    return x, iters, best


# ---------------------------------------------------------------------------
# One explicit-Euler thermal sub-step over all zones (synchronous update).
# eps_cw is the per-zone effectiveness times water capacity rate (W/K);
# adj is the symmetric inter-zone conductance matrix (W/K), zero diagonal.
# ---------------------------------------------------------------------------

def _zone_substep(temps, occupants, t_out, ua_env, solar_env, adj, adj_rowsum,
                  q_p, q_d, eps_cw, t_w_supply, beta, heat_cap, dt):
    q_occ = ((37.0 - temps) / 13.0 * q_p + q_d) * occupants
    q_int = adj @ temps - temps * adj_rowsum
    q_env = ua_env * (t_out - temps) + solar_env
    q_coil = eps_cw * (temps - t_w_supply)
    q_net = q_occ + q_int + q_env - q_coil
    new_temps = temps + dt * q_net / heat_cap * beta
    return new_temps, q_coil


NUMPY_IMPLS = {
    "adam_step": _adam_step_numpy,
    "expand_mask": _expand_mask_numpy,
    "newton_flows": _newton_flows,
    "zone_substep": _zone_substep,
}

if _HAVE_NUMBA:
    JIT_IMPLS = {
        "adam_step": njit(cache=True)(_adam_step_loop),
        "expand_mask": njit(cache=True)(_expand_mask_loop),
        "newton_flows": njit(cache=True)(_newton_flows),
        "zone_substep": njit(cache=True)(_zone_substep),
    }
else:  # pragma: no cover
    JIT_IMPLS = {}

_ACTIVE = JIT_IMPLS if USING_NUMBA else NUMPY_IMPLS

adam_step = _ACTIVE["adam_step"]
expand_mask = _ACTIVE["expand_mask"]
newton_flows = _ACTIVE["newton_flows"]
zone_substep = _ACTIVE["zone_substep"]
