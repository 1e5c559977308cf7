#!/usr/bin/env python3
"""Writes the synthetic reference compact-diesel fuel map used by the shipped scenarios.

Fuel power is (T + T_f(w)) * w / eta_i(w) + P_aux with a quadratic friction torque
T_f and an indicated efficiency peaking near 2100 rpm. Output is g/s on a
w (rad/s) by T (N m) grid, plus the full-load curve.
"""
import argparse
import math

H_U = 42600.0  # J/g
P_AUX = 1500.0  # W


def full_load(rpm):
    pts = [(600, 90.0), (1000, 130.0), (1400, 170.0), (1600, 180.0), (3000, 180.0), (4400, 140.0)]
    for (r0, t0), (r1, t1) in zip(pts, pts[1:]):
        if r0 <= rpm <= r1:
            return t0 + (t1 - t0) * (rpm - r0) / (r1 - r0)
    raise ValueError(rpm)


def mdot(w, T):
    t_f = 12.0 + 6e-5 * w * w
    eta_i = 0.44 - 0.06 * ((w - 220.0) / 240.0) ** 2
    return ((T + t_f) * w / eta_i + P_AUX) / H_U


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    args = ap.parse_args()
    rpms = list(range(600, 4401, 200))
    ws = [r * 2.0 * math.pi / 60.0 for r in rpms]
    torques = list(range(0, 181, 10))
    with open(args.out, "w") as f:
        f.write("# reference compact diesel, mdot in g/s; rows are torque [N m], columns engine speed [rad/s]\n")
        f.write("T_Nm\\w_radps," + ",".join(repr(w) for w in ws) + "\n")
        for T in torques:
            f.write(str(T) + "," + ",".join(repr(mdot(w, T)) for w in ws) + "\n")
        f.write("T_max_Nm," + ",".join(repr(full_load(r)) for r in rpms) + "\n")


if __name__ == "__main__":
    main()
