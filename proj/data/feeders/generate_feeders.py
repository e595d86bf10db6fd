#!/usr/bin/env python3
"""Writes the example feeder files in this directory.

ieee33.json
    Baran-Wu 33-bus feeder (public data, 12.66 kV). PV placement is ours.
ieee13_reconstruction.json / ieee123_reconstruction.json
    Single-phase positive-sequence reconstructions of the IEEE 13- and
    123-node test feeders. Topology and spot loads follow the public
    feeder data; impedances are approximate positive-sequence values per
    line configuration; PV placement, PV sizes and capacitor steps are our
    choices. These are reconstructions, not any published study's data.

Run from any directory: python3 generate_feeders.py
"""

import json
import math
import os

HERE = os.path.dirname(os.path.abspath(__file__))


def write(name, doc):
    with open(os.path.join(HERE, name), "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def feeder(name, description, kv, kva, slack, loads, lines, oltc, capbanks, pv):
    zbase = kv * kv * 1000.0 / kva
    buses = [{"id": slack, "parent": None, "load_p": 0.0, "load_q": 0.0}]
    parent = {to: frm for frm, to, _, _ in lines}
    nodes = sorted(parent)
    for b in nodes:
        p, q = loads.get(b, (0.0, 0.0))
        buses.append({"id": b, "parent": parent[b], "load_p": round(p / kva, 9), "load_q": round(q / kva, 9)})
    return {
        "name": name,
        "description": description,
        "base": {"kv": kv, "kva": kva, "slack": slack},
        "buses": buses,
        "lines": [
            {"from": f, "to": t, "r_pu": round(r / zbase, 12), "x_pu": round(x / zbase, 12)} for f, t, r, x in lines
        ],
        "devices": {"oltc": oltc, "capbanks": capbanks, "pv": pv},
    }


# ---------------------------------------------------------------- 33 bus
IEEE33_LINES = [
    (1, 2, 0.0922, 0.0470), (2, 3, 0.4930, 0.2511), (3, 4, 0.3660, 0.1864), (4, 5, 0.3811, 0.1941),
    (5, 6, 0.8190, 0.7070), (6, 7, 0.1872, 0.6188), (7, 8, 0.7114, 0.2351), (8, 9, 1.0300, 0.7400),
    (9, 10, 1.0440, 0.7400), (10, 11, 0.1966, 0.0650), (11, 12, 0.3744, 0.1238), (12, 13, 1.4680, 1.1550),
    (13, 14, 0.5416, 0.7129), (14, 15, 0.5910, 0.5260), (15, 16, 0.7463, 0.5450), (16, 17, 1.2890, 1.7210),
    (17, 18, 0.7320, 0.5740), (2, 19, 0.1640, 0.1565), (19, 20, 1.5042, 1.3554), (20, 21, 0.4095, 0.4784),
    (21, 22, 0.7089, 0.9373), (3, 23, 0.4512, 0.3083), (23, 24, 0.8980, 0.7091), (24, 25, 0.8960, 0.7011),
    (6, 26, 0.2030, 0.1034), (26, 27, 0.2842, 0.1447), (27, 28, 1.0590, 0.9337), (28, 29, 0.8042, 0.7006),
    (29, 30, 0.5075, 0.2585), (30, 31, 0.9744, 0.9630), (31, 32, 0.3105, 0.3619), (32, 33, 0.3410, 0.5302),
]
IEEE33_LOADS = {
    2: (100, 60), 3: (90, 40), 4: (120, 80), 5: (60, 30), 6: (60, 20), 7: (200, 100), 8: (200, 100),
    9: (60, 20), 10: (60, 20), 11: (45, 30), 12: (60, 35), 13: (60, 35), 14: (120, 80), 15: (60, 10),
    16: (60, 20), 17: (60, 20), 18: (90, 40), 19: (90, 40), 20: (90, 40), 21: (90, 40), 22: (90, 40),
    23: (90, 50), 24: (420, 200), 25: (420, 200), 26: (60, 25), 27: (60, 25), 28: (60, 20), 29: (120, 70),
    30: (200, 600), 31: (150, 70), 32: (210, 100), 33: (60, 40),
}


def pv_units(kva, placements):
    out = []
    for bus, forecast_kw, rating_kva in placements:
        out.append({"bus": bus, "s": round(rating_kva / kva, 9), "forecast_p": round(forecast_kw / kva, 9),
                    "q_base": 0.0})
    return out


def make33():
    kva = 1000.0
    pv = pv_units(kva, [(13, 300, 450), (17, 250, 380), (22, 200, 300), (25, 400, 600), (30, 300, 450),
                        (33, 250, 380)])
    caps = [{"bus": 30, "step_q": 0.1, "max_steps": 4, "ramp": 1, "steps": 2},
            {"bus": 14, "step_q": 0.1, "max_steps": 2, "ramp": 1, "steps": 1}]
    oltc = {"tap_step": 0.00625, "n_min": -16, "n_max": 16, "ramp": 1, "tap": 4}
    doc = feeder("ieee33", "Baran-Wu 33-bus feeder, 12.66 kV; PV and capacitor placement are illustrative",
                 12.66, kva, 1, IEEE33_LOADS, IEEE33_LINES, oltc, caps, pv)
    write("ieee33.json", doc)


# ---------------------------------------------------------------- 13 bus
# Positive-sequence ohms per mile (approximate) for the 13-node configurations.
Z13 = {601: (0.186, 0.596), 602: (0.377, 0.636), 603: (0.892, 0.825), 604: (0.892, 0.825), 605: (0.892, 0.825),
       606: (0.484, 0.261), 607: (1.338, 0.512), "xfm": (0.011 * 4.16 ** 2 / 0.5, 0.02 * 4.16 ** 2 / 0.5),
       "sw": (0.0005, 0.001)}
IEEE13_SEGMENTS = [
    (650, 632, 2000, 601), (632, 633, 500, 602), (633, 634, 0, "xfm"), (632, 645, 500, 603), (645, 646, 300, 603),
    (632, 671, 2000, 601), (671, 680, 1000, 601), (671, 684, 300, 604), (684, 611, 300, 605),
    (684, 652, 800, 607), (671, 692, 0, "sw"), (692, 675, 500, 606),
]
IEEE13_LOADS = {634: (400, 290), 645: (170, 125), 646: (230, 132), 652: (128, 86), 671: (1255, 718),
                675: (843, 462), 692: (170, 151), 611: (170, 80), 632: (100, 58)}


def make13():
    kva = 1000.0
    lines = []
    for f, t, feet, cfg in IEEE13_SEGMENTS:
        r, x = Z13[cfg]
        if isinstance(cfg, int):
            miles = feet / 5280.0
            r, x = r * miles, x * miles
        lines.append((f, t, r, x))
    pv = pv_units(kva, [(675, 400, 600), (680, 300, 450), (652, 150, 220), (646, 200, 300)])
    caps = [{"bus": 675, "step_q": 0.2, "max_steps": 3, "ramp": 1, "steps": 1}]
    oltc = {"tap_step": 0.00625, "n_min": -16, "n_max": 16, "ramp": 1, "tap": 4}
    doc = feeder("ieee13-reconstruction",
                 "Single-phase equivalent reconstruction of the IEEE 13-node feeder (not the original data)",
                 4.16, kva, 650, IEEE13_LOADS, lines, oltc, caps, pv)
    write("ieee13_reconstruction.json", doc)


# ---------------------------------------------------------------- 123 bus
# (from, to, feet, configuration). Regulators and closed switches become
# short segments ("sw"); the open tie switches and the 450/610 stubs are
# left out so that the feeder has exactly 123 buses.
IEEE123_SEGMENTS = [
    (150, 149, 0, "sw"), (149, 1, 400, 1), (1, 2, 175, 10), (1, 3, 250, 11), (1, 7, 300, 1), (3, 4, 200, 11),
    (3, 5, 325, 11), (5, 6, 250, 11), (7, 8, 200, 1), (8, 12, 225, 10), (8, 9, 225, 9), (8, 13, 300, 1),
    (9, 14, 425, 9), (13, 34, 150, 11), (13, 18, 825, 2), (14, 11, 250, 9), (14, 10, 250, 9), (15, 16, 375, 11),
    (15, 17, 350, 11), (18, 19, 250, 7), (18, 21, 300, 2), (19, 20, 325, 7), (21, 22, 525, 10), (21, 23, 250, 2),
    (23, 24, 550, 11), (23, 25, 275, 2), (25, 26, 350, 7), (25, 28, 200, 2), (26, 27, 275, 7), (26, 31, 225, 11),
    (27, 33, 500, 9), (28, 29, 300, 2), (29, 30, 350, 2), (30, 250, 200, 2), (31, 32, 300, 11), (34, 15, 100, 11),
    (35, 36, 650, 8), (35, 40, 250, 1), (36, 37, 300, 9), (36, 38, 250, 10), (38, 39, 325, 10), (40, 41, 325, 11),
    (40, 42, 250, 1), (42, 43, 500, 10), (42, 44, 200, 1), (44, 45, 200, 9), (44, 47, 250, 1), (45, 46, 300, 9),
    (47, 48, 150, 4), (47, 49, 250, 4), (49, 50, 250, 4), (50, 51, 250, 4), (51, 151, 500, 4), (52, 53, 200, 1),
    (53, 54, 125, 1), (54, 55, 275, 1), (54, 57, 350, 3), (55, 56, 275, 1), (57, 58, 250, 10), (57, 60, 750, 3),
    (58, 59, 250, 10), (60, 61, 550, 5), (60, 62, 250, 12), (62, 63, 175, 12), (63, 64, 350, 12), (64, 65, 425, 12),
    (65, 66, 325, 12), (67, 68, 200, 9), (67, 72, 275, 3), (67, 97, 250, 3), (68, 69, 275, 9), (69, 70, 325, 9),
    (70, 71, 275, 9), (72, 73, 275, 11), (72, 76, 200, 3), (73, 74, 350, 11), (74, 75, 400, 11), (76, 77, 400, 6),
    (76, 86, 700, 3), (77, 78, 100, 6), (78, 79, 225, 6), (78, 80, 475, 6), (80, 81, 475, 6), (81, 82, 250, 6),
    (81, 84, 675, 11), (82, 83, 250, 6), (84, 85, 475, 11), (86, 87, 450, 6), (87, 88, 175, 9), (87, 89, 275, 6),
    (89, 90, 225, 10), (89, 91, 225, 6), (91, 92, 300, 11), (91, 93, 225, 6), (93, 94, 275, 9), (93, 95, 300, 6),
    (95, 96, 200, 10), (97, 98, 275, 3), (98, 99, 550, 3), (99, 100, 300, 3), (101, 102, 225, 11),
    (101, 105, 275, 3), (102, 103, 325, 11), (103, 104, 700, 11), (105, 106, 225, 10), (105, 108, 325, 3),
    (106, 107, 575, 10), (108, 109, 450, 9), (108, 300, 1000, 3), (109, 110, 300, 9), (110, 111, 575, 9),
    (110, 112, 125, 9), (112, 113, 525, 9), (113, 114, 325, 9), (13, 152, 0, "sw"), (152, 52, 400, 1),
    (18, 135, 0, "sw"), (135, 35, 375, 4), (60, 160, 0, "sw"), (160, 67, 350, 6), (97, 197, 0, "sw"),
    (197, 101, 250, 3),
]
# Approximate positive-sequence ohms per mile by configuration: three-phase
# overhead (1-6), two-phase (7-8), single-phase laterals (9-11), cable (12).
Z123 = {1: (0.31, 0.62), 2: (0.31, 0.62), 3: (0.31, 0.62), 4: (0.31, 0.62), 5: (0.31, 0.62), 6: (0.31, 0.62),
        7: (0.45, 0.72), 8: (0.45, 0.72), 9: (0.66, 0.82), 10: (0.66, 0.82), 11: (0.66, 0.82), 12: (0.75, 0.50),
        "sw": (0.001, 0.002)}
IEEE123_LOADS = {
    1: (40, 20), 2: (20, 10), 4: (40, 20), 5: (20, 10), 6: (40, 20), 7: (20, 10), 9: (40, 20), 10: (20, 10),
    11: (40, 20), 12: (20, 10), 16: (40, 20), 17: (20, 10), 19: (40, 20), 20: (40, 20), 22: (40, 20), 24: (40, 20),
    28: (40, 20), 29: (40, 20), 30: (40, 20), 31: (20, 10), 32: (20, 10), 33: (40, 20), 34: (40, 20), 35: (40, 20),
    37: (40, 20), 38: (20, 10), 39: (20, 10), 41: (20, 10), 42: (20, 10), 43: (40, 20), 45: (20, 10), 46: (20, 10),
    47: (105, 75), 48: (210, 150), 49: (140, 95), 50: (40, 20), 51: (20, 10), 52: (40, 20), 53: (40, 20),
    55: (20, 10), 56: (20, 10), 58: (20, 10), 59: (20, 10), 60: (20, 10), 62: (40, 20), 63: (40, 20), 64: (75, 35),
    65: (140, 100), 66: (75, 35), 68: (20, 10), 69: (40, 20), 70: (20, 10), 71: (40, 20), 73: (40, 20),
    74: (40, 20), 75: (40, 20), 76: (245, 180), 77: (40, 20), 79: (40, 20), 80: (40, 20), 82: (40, 20),
    83: (20, 10), 84: (20, 10), 85: (40, 20), 86: (20, 10), 87: (40, 20), 88: (40, 20), 90: (40, 20), 92: (40, 20),
    94: (40, 20), 95: (20, 10), 96: (20, 10), 98: (40, 20), 99: (40, 20), 100: (40, 20), 102: (20, 10),
    103: (40, 20), 104: (40, 20), 106: (40, 20), 107: (40, 20), 109: (40, 20), 111: (20, 10), 112: (20, 10),
    113: (40, 20), 114: (20, 10),
}
# (bus, forecast kW, rating kVA). Forecast PV is about 48% of the total load.
# Segment lengths are stretched 3x. The balanced equivalent of the original
# lengths is stiff enough that a 50% PV swing moves no voltage by more than
# about 1%; at 3x the swing reaches a few percent and the dispatch-only
# voltage dips below 0.95 p.u. at the low end of the interval.
LENGTH_SCALE_123 = 3.0
IEEE123_PV = [(7, 150, 220), (23, 120, 175), (29, 110, 160), (42, 120, 175), (50, 150, 220), (58, 110, 160),
              (65, 160, 235), (76, 180, 265), (85, 120, 175), (96, 120, 175), (104, 130, 190), (107, 150, 220)]


def make123(load_scale=1.0, length_scale=LENGTH_SCALE_123):
    kva = 100.0
    lines = []
    for f, t, feet, cfg in IEEE123_SEGMENTS:
        r, x = Z123[cfg]
        if cfg != "sw":
            miles = feet * length_scale / 5280.0
            r, x = r * miles, x * miles
        lines.append((f, t, r, x))
    loads = {b: (p * load_scale, q * load_scale) for b, (p, q) in IEEE123_LOADS.items()}
    pv = pv_units(kva, [(b, f * load_scale, s * load_scale) for b, f, s in IEEE123_PV])
    caps = [{"bus": 83, "step_q": 1.0, "max_steps": 3, "ramp": 1, "steps": 1},
            {"bus": 88, "step_q": 0.5, "max_steps": 1, "ramp": 1, "steps": 0},
            {"bus": 90, "step_q": 0.5, "max_steps": 1, "ramp": 1, "steps": 0},
            {"bus": 92, "step_q": 0.5, "max_steps": 1, "ramp": 1, "steps": 0}]
    oltc = {"tap_step": 0.00625, "n_min": -16, "n_max": 16, "ramp": 1, "tap": 4}
    doc = feeder("ieee123-reconstruction",
                 "Single-phase equivalent reconstruction of the IEEE 123-node feeder, 4.16 kV / 100 kVA base; "
                 "segment lengths x3, PV placement and sizes are illustrative, not published data",
                 4.16, kva, 150, loads, lines, oltc, caps, pv)
    assert len(doc["buses"]) == 123, len(doc["buses"])
    write("ieee123_reconstruction.json", doc)
    total_load = sum(p for p, _ in loads.values())
    total_pv = sum(f for _, f, _ in IEEE123_PV) * load_scale
    return total_load, total_pv


if __name__ == "__main__":
    make13()
    make33()
    load, pv = make123()
    print(f"123-bus: load {load:.0f} kW, forecast PV {pv:.0f} kW ({100 * pv / load:.1f}%)")
