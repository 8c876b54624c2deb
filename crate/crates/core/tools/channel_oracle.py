"""Arbitrary-precision reference values for the channel model.

Regenerate with:  python3 tools/channel_oracle.py > tests/fixtures/channel_oracle.json
The output is frozen; the Rust tests compare against it.
"""
import json
import random

import mpmath as mp

mp.mp.dps = 60
C = mp.mpf(299792458)


def rf_sinr(p):
    fs = (C / (4 * mp.pi * mp.mpf(p["f_r_hz"]))) ** 2
    gamma = mp.mpf(p["g_r_tx"]) * mp.mpf(p["g_r_rx"]) * fs
    P = mp.mpf(p["p_r_tx_w"])
    alpha = mp.mpf(p["alpha"])
    r = mp.sqrt(mp.mpf(p["d"]) ** 2 + mp.mpf(p["h"]) ** 2)
    interference = mp.mpf(0)
    for d, h, fad in p["interferers"]:
        rk = mp.sqrt(mp.mpf(d) ** 2 + mp.mpf(h) ** 2)
        interference += P * gamma * rk ** (-alpha) * mp.mpf(fad)
    return P * gamma * mp.mpf(p["fading"]) / (r ** alpha * (mp.mpf(p["sigma2_w"]) + interference))


def thz_sinr(p):
    fs = (C / (4 * mp.pi * mp.mpf(p["f_t_hz"]))) ** 2
    gamma = mp.mpf(p["g_t_max_tx"]) * mp.mpf(p["g_t_max_rx"]) * fs
    P = mp.mpf(p["p_t_tx_w"])
    ka = mp.mpf(p["k_a_per_m"])
    r = mp.sqrt(mp.mpf(p["d"]) ** 2 + mp.mpf(p["h"]) ** 2)
    noise = mp.mpf(p["n0_w"]) + P * gamma * r ** -2 * (1 - mp.e ** (-ka * r))
    interference = mp.mpf(0)
    for d, h, gain in p["interferers"]:
        rk = mp.sqrt(mp.mpf(d) ** 2 + mp.mpf(h) ** 2)
        g = mp.mpf(gain) * fs * P * rk ** -2
        interference += g * mp.e ** (-ka * rk)
        noise += g * (1 - mp.e ** (-ka * rk))
    return gamma * P * mp.e ** (-ka * r) * r ** -2 / (noise + interference)


def qinv(p):
    return mp.sqrt(2) * mp.erfinv(1 - 2 * mp.mpf(p))


def rate(p):
    s = mp.mpf(p["sinr"])
    v = 1 - 1 / (1 + s) ** 2
    r = mp.mpf(p["w_hz"]) / mp.log(2) * (mp.log(1 + s) - mp.sqrt(v / mp.mpf(p["l_b"])) * qinv(p["eps_c"]))
    return max(r, mp.mpf(0))


def loguniform(rng, lo, hi):
    return 10 ** rng.uniform(mp.log10(lo), mp.log10(hi))


def f(x):
    return float(x)


def main():
    rng = random.Random(20240611)
    rf_cases, thz_cases, rate_cases = [], [], []
    for _ in range(100):
        p = {
            "f_r_hz": rng.uniform(7e8, 6e9),
            "p_r_tx_w": rng.uniform(0.1, 10.0),
            "g_r_tx": rng.uniform(1.0, 500.0),
            "g_r_rx": rng.uniform(1.0, 500.0),
            "alpha": rng.uniform(2.0, 5.0),
            "sigma2_w": f(loguniform(rng, 1e-15, 1e-10)),
            "d": rng.uniform(0.0, 1500.0),
            "h": rng.uniform(1.0, 30.0),
            "fading": rng.expovariate(1.0),
            "interferers": [
                [rng.uniform(0.0, 1500.0), rng.uniform(1.0, 30.0), rng.expovariate(1.0)]
                for _ in range(rng.randint(0, 5))
            ],
        }
        p["expected"] = f(rf_sinr(p))
        rf_cases.append(p)
    for _ in range(100):
        gmax_tx = rng.uniform(10.0, 500.0)
        gmax_rx = rng.uniform(10.0, 500.0)
        p = {
            "f_t_hz": rng.uniform(1e11, 3e12),
            "p_t_tx_w": rng.uniform(0.1, 10.0),
            "g_t_max_tx": gmax_tx,
            "g_t_max_rx": gmax_rx,
            "k_a_per_m": rng.uniform(0.0, 0.2),
            "n0_w": f(loguniform(rng, 1e-14, 1e-10)),
            "d": rng.uniform(0.0, 200.0),
            "h": rng.uniform(1.0, 10.0),
            "interferers": [
                [rng.uniform(0.0, 300.0), rng.uniform(1.0, 10.0), rng.choice([gmax_tx * gmax_rx, 0.0])]
                for _ in range(rng.randint(0, 5))
            ],
        }
        p["expected"] = f(thz_sinr(p))
        thz_cases.append(p)
    while len(rate_cases) < 100:
        p = {
            "sinr": f(loguniform(rng, 1e-1, 1e5)),
            "w_hz": rng.uniform(1e6, 1e9),
            "l_b": f(loguniform(rng, 1.0, 1e4)),
            "eps_c": f(loguniform(rng, 1e-9, 0.4)),
        }
        s = mp.mpf(p["sinr"])
        pen = mp.sqrt((1 - 1 / (1 + s) ** 2) / p["l_b"]) * qinv(p["eps_c"])
        # keep away from the clamp so relative error is well conditioned
        if mp.log(1 + s) < 1.5 * pen:
            continue
        p["expected"] = f(rate(p))
        rate_cases.append(p)

    pins = {
        # r = 100 m ground distance, h = 0, H = 1, no interferers, defaults
        "rf_sinr_r100": f(rf_sinr({
            "f_r_hz": 3.5e9, "p_r_tx_w": 1.0, "g_r_tx": 316.2, "g_r_rx": 316.2, "alpha": 4.0,
            "sigma2_w": 1e-13, "d": 100.0, "h": 0.0, "fading": 1.0, "interferers": []})),
        # r = 20 m, one main-main interferer at 50 m, defaults
        "thz_sinr_r20_i50": f(thz_sinr({
            "f_t_hz": 1e12, "p_t_tx_w": 1.0, "g_t_max_tx": 316.2, "g_t_max_rx": 316.2,
            "k_a_per_m": 0.05, "n0_w": 1e-12, "d": 20.0, "h": 0.0,
            "interferers": [[50.0, 0.0, 316.2 * 316.2]]})),
        "rate_sinr10_w5e8_lb25_eps1e-5": f(rate({"sinr": 10.0, "w_hz": 5e8, "l_b": 25.0, "eps_c": 1e-5})),
        "inverse_q_1e-5": f(qinv(mp.mpf("1e-5"))),
    }
    qinv_cases = []
    for _ in range(200):
        p = f(loguniform(rng, 1e-12, 0.999))
        qinv_cases.append({"p": p, "expected": f(qinv(mp.mpf(p)))})

    json.dump({"rf": rf_cases, "thz": thz_cases, "rate": rate_cases,
               "inverse_q": qinv_cases, "pins": pins}, __import__("sys").stdout, indent=1)


if __name__ == "__main__":
    main()
