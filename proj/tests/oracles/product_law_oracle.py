"""Independent high-precision oracle for products of |N(0,1)| and related constants.

P(|X1...Xn| <= eps) computed by nested mpmath quadrature over the first n-1
factors of the analytic one-factor CDF erf(x/sqrt 2); no convolution grid.
"""
import mpmath as mp

mp.mp.dps = 20
c = 2 / mp.sqrt(2 * mp.pi)


def phi_abs(x):
    return c * mp.e ** (-x * x / 2)  # density of |X|


def F(n, eps):
    if n == 1:
        return mp.erf(eps / mp.sqrt(2))
    # P(|X_n| * rest <= eps) = E_{|X_n|=x} F(n-1, eps/x)
    return mp.quad(lambda x: F(n - 1, eps / x) * phi_abs(x), [0, eps, 1, 4, 12, mp.inf])


def asym(n, eps):
    return c ** n * eps * abs(mp.log(eps)) ** (n - 1) / mp.factorial(n - 1)


if __name__ == "__main__":
    print("F1(0.1)", F(1, mp.mpf("0.1")))
    print("F1(0.5)", F(1, mp.mpf("0.5")))
    print("interval 1.959964", mp.erf(mp.mpf("1.959964") / mp.sqrt(2)))
    print("density(0)", c * mp.e ** mp.mpf("-0.5"))
    print("F2(0.05)", F(2, mp.mpf("0.05")))
    print("F2(1e-3)", F(2, mp.mpf("1e-3")))
    print("F3(0.1)", F(3, mp.mpf("0.1")))
    for n in (2, 3):
        for e in ("1e-3", "1e-8"):
            e = mp.mpf(e)
            ex = F(n, e)
            print("n", n, "eps", e, "exact", ex, "asym", asym(n, e), "ratio", ex / asym(n, e))
    for n in (1, 2, 3):
        for e in ("0.2", "0.1", "0.05"):
            print("F", n, e, F(n, mp.mpf(e)))
    print("asym n1 1e-4", asym(1, mp.mpf("1e-4")), "asym n2 1e-4", asym(2, mp.mpf("1e-4")))
    rho = mp.mpf("0.3")
    print("equicorr d2", 1 - 3 * rho**2 / (1 + 2 * rho))
