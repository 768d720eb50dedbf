"""Regenerates gain_schedule.csv: k(t) = sec^2(pi t / 2Tp) and
ln q(t) = ln q0 + (2Tp/pi) tan(pi t / 2Tp) in 50-digit arithmetic, on a
1000-point grid over [0, 0.995 Tp] for several Tp, with q0 = 0.001."""

import mpmath as mp

mp.mp.dps = 50
Q0 = 0.001

print("tp,t,k,ln_q")
for tp in (1.0, 5.0, 10.0):
    for j in range(1000):
        t = 0.995 * tp * j / 999
        x = mp.pi * mp.mpf(t) / (2 * mp.mpf(tp))
        k = mp.sec(x) ** 2
        ln_q = mp.log(mp.mpf(Q0)) + 2 * mp.mpf(tp) / mp.pi * mp.tan(x)
        print(f"{tp!r},{t!r},{mp.nstr(k, 25)},{mp.nstr(ln_q, 25)}")
