"""Independent reference values for the test suite (mpmath, 30 digits).

Run: python3 tests/oracles/oracle.py
The printed numbers are frozen as constants in tests/oracle_values.hpp.
"""
import mpmath as mp

mp.mp.dps = 30


def two_level_gamma(coupling):
    """2 * int_0^{y0} sqrt(c(iy)^2 - tan(y)^2) dy, the collapsed loop integral on the imaginary axis."""
    f = lambda y: coupling(y) ** 2 - mp.tan(y) ** 2
    y0 = mp.findroot(f, 0.4)
    return y0, 2 * mp.quad(lambda y: mp.sqrt(f(y)), [0, y0])


def three_level(delta):
    def H(z):
        t = mp.tanh(z)
        return mp.matrix([[3 * t, delta, delta], [delta, -1, delta], [delta, delta, 1]])

    def charpoly(z, lam):
        A = H(z) - lam * mp.eye(3)
        return mp.det(A)

    def dcharpoly(z, lam):
        return mp.diff(lambda l: charpoly(z, l), lam)

    return H, charpoly, dcharpoly


def sorted_eigs(M):
    ev = mp.eig(M, left=False, right=False)
    return sorted(ev, key=lambda v: (mp.re(v), mp.im(v)))


def vertical_gamma(H, z0, j, k, nodes=80):
    """|Im int_{Re z0}^{z0} (e_j - e_k) dz| with labels continued upward from the real axis.

    The substitution y = b (1 - s^2) removes the square-root endpoint singularity."""
    x0, b = mp.re(z0), mp.im(z0)
    xs, ws = zip(*[(x, w) for x, w in zip(*gauss_legendre(nodes))])
    # continuation from s = 1 (real axis) to s = 0 (degeneracy)
    pts = sorted(set([mp.mpf(1) - mp.mpf(i) / 4000 for i in range(4001)] + [(x + 1) / 2 for x in xs]), reverse=True)
    prev = sorted_eigs(H(x0))
    track = {}
    for s in pts:
        y = b * (1 - s * s)
        ev = mp.eig(H(mp.mpc(x0, y)), left=False, right=False)
        cur = []
        used = set()
        for p in prev:
            idx = min((i for i in range(len(ev)) if i not in used), key=lambda i: abs(ev[i] - p))
            used.add(idx)
            cur.append(ev[idx])
        prev = cur
        track[s] = cur
    total = mp.mpf(0)
    for x, w in zip(xs, ws):
        s = (x + 1) / 2
        e = track[s]
        total += w / 2 * (e[j] - e[k]) * 2 * b * s  # dy = -2 b s ds, orientation absorbed by abs
    # dz = i dy, so the imaginary part of the contour integral is the real part of total
    return abs(mp.re(total))


def gauss_legendre(n):
    xs, ws = [], []
    for i in range(1, n + 1):
        x = mp.cos(mp.pi * (i - mp.mpf(1) / 4) / (n + mp.mpf(1) / 2))
        for _ in range(100):
            p0, p1 = mp.mpf(1), x
            for m in range(2, n + 1):
                p0, p1 = p1, ((2 * m - 1) * x * p1 - (m - 1) * p0) / m
            dp = n * (x * p1 - p0) / (x * x - 1)
            dx = p1 / dp
            x -= dx
            if abs(dx) < mp.mpf(10) ** (-mp.mp.dps + 2):
                break
        xs.append(x)
        ws.append(2 / ((1 - x * x) * dp * dp))
    return xs, ws


def main():
    y0, g = two_level_gamma(lambda y: mp.mpf("0.5"))
    print("two_level(0.5): z0 = i*%s  gamma = %s" % (mp.nstr(y0, 20), mp.nstr(g, 20)))

    y0, g = two_level_gamma(lambda y: mp.mpf("0.3") / mp.cos(y) + mp.mpf("0.2"))
    print("sech_coupling: z0 = i*%s  gamma = %s" % (mp.nstr(y0, 20), mp.nstr(g, 20)))

    H, cp, dcp = three_level(mp.mpf("0.1"))
    gammas = []
    for zg, lg, j, k in [(mp.mpc(-0.34, 0.07), -1.0, 0, 1), (mp.mpc(0.34, 0.08), 1.0, 1, 2)]:
        z0, lam = mp.findroot(lambda z, l: (cp(z, l), dcp(z, l)), (zg, mp.mpc(lg, 0)))
        print("three_level(0.1): z0 = %s  lambda = %s  pair (%d, %d)" % (mp.nstr(z0, 18), mp.nstr(lam, 12), j + 1, k + 1))
        gam = vertical_gamma(H, z0, j, k)
        gammas.append(gam)
        print("  gamma = %s" % mp.nstr(gam, 18))
    print("three_level(0.1): gamma_1 + gamma_2 = %s" % mp.nstr(gammas[0] + gammas[1], 18))


if __name__ == "__main__":
    main()
