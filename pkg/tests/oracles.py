"""Independent re-derivations of the closed-form formulas at 50-digit precision.

Written from the inequalities themselves rather than from the package code:
each expression is expanded or rearranged differently from the implementation
so that a shared algebra slip would not cancel out.
"""

import mpmath as mp

mp.mp.dps = 50


def sc1_trigger(c1, c2, N, g, eps):
    c1, c2, N, g, eps = map(mp.mpf, (c1, c2, N, g, eps))
    return 1 - c1 / (N * eps**2) - c2 * g**2 / (N * eps**2) - g**2 / eps**2


def pareto_trigger(pi2, pi3, N, g, eps):
    pi2, pi3, N, g, eps = map(mp.mpf, (pi2, pi3, N, g, eps))
    if g == 0:
        return mp.mpf(1)
    return 1 - N * mp.exp(pi2 * (mp.log(pi3) + mp.log(g) - mp.log(eps)))


def sc2_trigger(N, Delta):
    return 1 - mp.exp(-2 * mp.mpf(N) * mp.mpf(Delta) ** 2)


def _strict_ceiling(t):
    """Smallest positive integer n with n > t, found by search from ceil(t)."""
    n = max(1, int(mp.ceil(t)))
    while n <= t:
        n += 1
    while n - 1 >= 1 and n - 1 > t:
        n -= 1
    return n


def sc1_threshold(c1, c2, eps, rho, gamma):
    c1, c2, eps, rho, gamma = map(mp.mpf, (c1, c2, eps, rho, gamma))
    # N (1 - rho^2) eps^2 > gamma c1 + c2 rho^2 eps^2
    return (gamma * c1 / eps**2 + c2 * rho**2) / (1 - rho**2)


def sc1_min_n(c1, c2, eps, rho, gamma):
    return _strict_ceiling(sc1_threshold(c1, c2, eps, rho, gamma))


def sc2_threshold(scenario, delta_bar, rho, gamma, pi2=None):
    delta_bar, rho, gamma = map(mp.mpf, (delta_bar, rho, gamma))
    miss = rho**2 / gamma if scenario == "B" else mp.exp(mp.mpf(pi2) * mp.log(rho / gamma))
    return mp.log(gamma) / (2 * (1 - delta_bar - miss) ** 2)


def sc2_min_n(scenario, delta_bar, rho, gamma, pi2=None):
    return _strict_ceiling(sc2_threshold(scenario, delta_bar, rho, gamma, pi2))


def rho_cap(scenario, c2, delta_bar, pi2=None):
    delta_bar = mp.mpf(delta_bar)
    if scenario == "B":
        return mp.sqrt((1 - delta_bar) / (mp.mpf(c2) + 1))
    return mp.exp(mp.log(1 - delta_bar) / mp.mpf(pi2))


def bcn_from_sg_lipschitz(C, L):
    C, L = mp.mpf(C), mp.mpf(L)
    return (mp.mpf(0) if L >= 0 else 4 * C * (-L)), 4 * C


def pl(c1, c2, f_star, mu):
    c1, c2, f_star, mu = map(mp.mpf, (c1, c2, f_star, mu))
    return c1 + c2 * f_star, c2 / mu


def close(actual, expected, rel=1e-12) -> bool:
    """Relative agreement; an exactly-zero reference is compared absolutely."""
    expected = mp.mpf(expected)
    if expected == 0:
        return abs(mp.mpf(actual)) <= rel
    return abs(mp.mpf(actual) - expected) <= rel * abs(expected)
