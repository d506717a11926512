"""Independent reference values for the library's derived quantities.

Each value is computed by a route the library does not use (explicit wedge
products, exact arithmetic, direct quadrature or a fine-step integrator) at
50 digits and frozen into frozen.json. Run `python3 derive.py` to refresh.
"""

import itertools
import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 50


def perm_sign(p):
    s = 1
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                s = -s
    return s


def dz(k, v):
    """dz_k on a real vector (x1, y1, x2, y2)."""
    return mp.mpc(v[2 * k], v[2 * k + 1])


def omega_form(f):
    return lambda a, b: f * (dz(0, a) * dz(1, b) - dz(1, a) * dz(0, b))


def wedge22(al, be, vs):
    """(al ^ be)(v1..v4) for 2-forms by the alternation sum over S4."""
    tot = mp.mpc(0)
    for p in itertools.permutations(range(4)):
        tot += perm_sign(p) * al(vs[p[0]], vs[p[1]]) * be(vs[p[2]], vs[p[3]])
    return tot / 4


def rho_by_wedge(f):
    basis = [[1 if i == j else 0 for i in range(4)] for j in range(4)]
    om = omega_form(f)
    omc = lambda a, b: mp.conj(om(a, b))
    flat = omega_form(mp.mpc(1))
    flatc = lambda a, b: mp.conj(flat(a, b))
    return mp.sqrt(abs(wedge22(om, omc, basis)) / abs(wedge22(flat, flatc, basis)))


def wrap(a):
    a = mp.mpf(a)
    while a <= -mp.pi:
        a += 2 * mp.pi
    while a > mp.pi:
        a -= 2 * mp.pi
    return a


def main():
    out = {}

    z1 = mp.mpc("0.3", "0.7")
    out["rho_exp_density"] = {"z1": [0.3, 0.7], "rho": float(rho_by_wedge(mp.exp(z1)))}

    alpha, beta = mp.mpf("1.2"), mp.mpf("2.5")
    det = mp.exp(1j * alpha) * mp.exp(1j * beta)
    out["phase_diagonal_frame"] = {
        "z1": [0.3, 0.7],
        "alpha": 1.2,
        "beta": 2.5,
        "phase": float(mp.arg(mp.exp(z1) * det)),
    }
    out["phase_nonpositive_frame"] = {"angle": float(mp.pi / 3), "phase": float(wrap(2 * mp.pi / 3))}

    k = 8
    out["weighted_segment_sigma"] = {
        "k": k,
        "sigma": [float((1 - mp.exp(-mp.mpf(l) / k)) / (1 - mp.exp(-1))) for l in range(k + 1)],
    }

    # Flow of i_X omega = -dH with H = x^T A x / 2 on the plateau: x' = 0,
    # y' = A x. RK4 with 10^4 steps on the full first-order system.
    A = mp.matrix([["0.3", "0.1"], ["0.1", "-0.2"]])
    x = mp.matrix(["0.2", "-0.1"])
    y = mp.matrix(["0.05", "0.0"])
    n = 10_000
    h = mp.mpf(1) / n

    def rhs(y_):
        return A * x

    for _ in range(n):
        k1 = rhs(y)
        k2 = rhs(y + k1 * (h / 2))
        k3 = rhs(y + k2 * (h / 2))
        k4 = rhs(y + k3 * h)
        y = y + (k1 + 2 * k2 + 2 * k3 + k4) * (h / 6)
    out["cutoff_flow_plateau"] = {
        "a": [[0.3, 0.1], [0.1, -0.2]],
        "start": [[0.2, 0.05], [-0.1, 0.0]],
        "end": [[float(x[0]), float(y[0])], [float(x[1]), float(y[1])]],
    }

    out["orbit_boundary_parameters"] = {
        "a": 1.0,
        "alpha": [0.3, -0.2],
        "s": [float(mp.tan(mp.mpf("0.6"))), float(mp.tan(mp.mpf("-0.4")))],
    }

    b = mp.mpf("0.8")
    out["segment_strip"] = {"b": 0.8, "strip": float(-mp.quad(lambda s: 1 + s, [0, b]))}

    a = mp.mpf("0.4")
    direction = 1j * mp.exp(-1j * a)
    out["tilted_segment_residual"] = {
        "tilt": 0.4,
        "end": [float(direction.real), float(direction.imag)],
        "value": float(mp.re(direction) / abs(direction)),
    }

    out["annulus_sigma"] = {
        "r": [1.0, 2.0],
        "samples": [[float(r), float(mp.log(r) / mp.log(2))] for r in (mp.mpf("1.25"), mp.mpf("1.5"), mp.mpf("1.75"))],
    }

    Path(__file__).with_name("frozen.json").write_text(json.dumps(out, indent=2) + "\n")


if __name__ == "__main__":
    main()
